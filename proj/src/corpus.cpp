#include "memadapter/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "memadapter/error.hpp"
#include "memadapter/rng.hpp"
#include "text_util.hpp"

namespace memadapter {

namespace {

const std::vector<std::string>& relation_phrases() {
  static const std::vector<std::string> phrases = {
      "built from", "located in", "part of",   "made by",   "near",
      "owns",       "founded",    "member of", "born in",   "leads"};
  return phrases;
}

std::vector<std::string> word_pool(std::size_t size, std::uint64_t seed) {
  static const char* syllables[] = {"ka", "lo", "mi", "ra", "tu", "ne", "si", "po",
                                    "va", "de", "zu", "fe", "gi", "ho", "ba", "ce"};
  static const char* codas[] = {"", "n", "r", "s"};
  Rng rng(seed);
  std::vector<std::string> words;
  std::unordered_set<std::string> seen;
  // 16 * 16 * 4 two-syllable words; larger pools add a third syllable.
  while (words.size() < size) {
    std::string w = std::string(syllables[rng.below(16)]) + syllables[rng.below(16)];
    if (words.size() >= 600) w += syllables[rng.below(16)];
    w += codas[rng.below(4)];
    if (seen.insert(w).second) words.push_back(w);
  }
  return words;
}

std::size_t node_number(const NodeId& id) { return std::stoul(id.str().substr(1)); }

std::size_t max_edges(int n, int g) {
  const auto nn = static_cast<std::size_t>(n);
  const auto gg = static_cast<std::size_t>(g);
  // Every ordered pair except self loops and non-chain gold-gold pairs.
  return nn * (nn - 1) - gg * (gg - 1) + (gg > 0 ? gg - 1 : 0);
}

int gold_hi(const SyntheticShape& s, int n) {
  return std::min({s.gold_max, n, s.edges_max + 1});
}

int gold_lo(const SyntheticShape& s, int n) {
  return std::min(std::max(1, s.gold_min), gold_hi(s, n));
}

nlohmann::json instance_json(const CorpusInstance& c) {
  return nlohmann::json{{"id", c.id},
                        {"query", c.query},
                        {"gold_answer", c.gold_answer},
                        {"full_graph_text", c.full_graph_text},
                        {"gold_subgraph_text", c.gold_subgraph_text},
                        {"content_vector", c.content_vector},
                        {"segment_count", c.segment_count}};
}

std::uint64_t content_seed(std::uint64_t corpus_seed, const std::string& id) {
  return subseed("content", corpus_seed) ^ fnv1a64(id);
}

}  // namespace

void SyntheticShape::validate() const {
  if (nodes_min < 1 || nodes_max < nodes_min) throw ValidationError("invalid nodes range");
  if (edges_min < 0 || edges_max < edges_min) throw ValidationError("invalid edges range");
  if (gold_min < 1 || gold_max < gold_min) throw ValidationError("invalid gold range");
  if (segment_count == 0 || d_c < segment_count) {
    throw ValidationError("segment count must be in [1, d_c]");
  }
  const std::size_t slots_per_segment =
      (static_cast<std::size_t>(nodes_max) + segment_count - 1) / segment_count;
  if (d_c / segment_count < slots_per_segment) {
    throw ValidationError("content vector too small for the node range");
  }
  if (vocab_size < 2 * static_cast<std::size_t>(nodes_max)) {
    throw ValidationError("word pool too small for two words per node");
  }
  if (!(magnitude_lo >= 0.0 && magnitude_hi >= magnitude_lo) || noise < 0.0) {
    throw ValidationError("invalid content magnitudes");
  }
  for (int n = nodes_min; n <= nodes_max; ++n) {
    for (int g = gold_lo(*this, n); g <= gold_hi(*this, n); ++g) {
      if (max_edges(n, g) < static_cast<std::size_t>(edges_min)) {
        throw ValidationError("edges_min exceeds the edges possible with " +
                              std::to_string(n) + " nodes");
      }
    }
  }
}

std::vector<double> synthesize_content(const MemoryGraph& full, const MemoryGraph& gold,
                                       const SyntheticShape& shape, std::uint64_t seed) {
  const std::size_t S = shape.segment_count;
  const std::size_t width = shape.d_c / S;
  const std::size_t slots = std::max<std::size_t>(1, (static_cast<std::size_t>(shape.nodes_max) + S - 1) / S);
  const std::size_t per_slot = std::max<std::size_t>(1, width / slots);

  static const std::vector<double> pattern = [] {
    Rng rng(fnv1a64("content-pattern"));
    std::vector<double> p(4096);
    for (double& v : p) v = rng.uniform(0.5, 1.5);
    return p;
  }();

  std::set<std::size_t> present, golden;
  for (const Node& n : full.nodes()) present.insert(node_number(n.id));
  for (const Node& n : gold.nodes()) golden.insert(node_number(n.id));

  Rng rng(seed);
  std::vector<double> x(shape.d_c, 0.0);
  for (std::size_t seg = 0; seg < S; ++seg) {
    const auto [begin, end] = segment_bounds(shape.d_c, S, seg);
    for (std::size_t k = 0; k < slots; ++k) {
      const std::size_t slot = seg * slots + k + 1;
      double value = 0.0;
      const double mag = rng.uniform(shape.magnitude_lo, shape.magnitude_hi);
      if (golden.count(slot)) {
        value = mag;
      } else if (present.count(slot)) {
        value = -mag * shape.non_gold_scale;
      } else if (shape.absent_random) {
        value = rng.coin() ? mag : -mag;
      }
      for (std::size_t c = 0; c < per_slot; ++c) {
        const std::size_t idx = begin + k * per_slot + c;
        if (idx >= end) break;
        x[idx] = value * pattern[idx % pattern.size()];
      }
    }
    for (std::size_t idx = begin; idx < end; ++idx) x[idx] += rng.normal() * shape.noise;
  }
  return x;
}

std::vector<CorpusInstance> generate_synthetic_corpus(std::size_t n, std::uint64_t seed,
                                                      const SyntheticShape& shape) {
  if (n == 0) throw ValidationError("corpus size must be positive");
  shape.validate();
  const std::vector<std::string> words = word_pool(shape.vocab_size, subseed("words", seed));
  const auto& phrases = relation_phrases();
  Rng rng(subseed("corpus", seed));

  std::vector<CorpusInstance> out;
  out.reserve(n);
  const std::size_t digits = std::to_string(n - 1).size();
  for (std::size_t i = 0; i < n; ++i) {
    std::string id = std::to_string(i);
    id = "syn-" + std::string(digits - id.size(), '0') + id;

    const int nodes = rng.range(shape.nodes_min, shape.nodes_max);
    const int g = rng.range(gold_lo(shape, nodes), gold_hi(shape, nodes));

    std::vector<int> all(static_cast<std::size_t>(nodes));
    for (int k = 0; k < nodes; ++k) all[static_cast<std::size_t>(k)] = k + 1;
    rng.shuffle(all);
    std::vector<int> gold_nodes(all.begin(), all.begin() + g);
    std::sort(gold_nodes.begin(), gold_nodes.end());
    const std::set<int> gold_set(gold_nodes.begin(), gold_nodes.end());

    std::vector<std::size_t> picks(words.size());
    for (std::size_t k = 0; k < picks.size(); ++k) picks[k] = k;
    rng.shuffle(picks);
    std::vector<Node> node_list;
    for (int k = 1; k <= nodes; ++k) {
      const int count = rng.range(1, 2);
      std::string desc = words[picks[2 * static_cast<std::size_t>(k - 1)]];
      if (count == 2) desc += " " + words[picks[2 * static_cast<std::size_t>(k - 1) + 1]];
      node_list.push_back({NodeId::parse("N" + std::to_string(k)), desc});
    }

    std::set<std::pair<int, int>> edge_set;
    for (std::size_t k = 0; k + 1 < gold_nodes.size(); ++k) {
      edge_set.insert({gold_nodes[k], gold_nodes[k + 1]});
    }
    const int chain = static_cast<int>(edge_set.size());
    const int target = rng.range(std::max(shape.edges_min, chain), std::max(shape.edges_max, chain));
    std::vector<std::pair<int, int>> extra;
    for (int u = 1; u <= nodes; ++u) {
      for (int v = 1; v <= nodes; ++v) {
        if (u == v || (gold_set.count(u) && gold_set.count(v))) continue;
        extra.push_back({u, v});
      }
    }
    rng.shuffle(extra);
    const std::size_t wanted = static_cast<std::size_t>(target - chain);
    if (extra.size() < wanted) throw ValidationError("infeasible edge count");
    edge_set.insert(extra.begin(), extra.begin() + static_cast<std::ptrdiff_t>(wanted));

    std::vector<Edge> edge_list, gold_edges;
    for (const auto& [u, v] : edge_set) {
      Edge e{NodeId::parse("N" + std::to_string(u)), NodeId::parse("N" + std::to_string(v)),
             phrases[rng.below(phrases.size())]};
      if (gold_set.count(u) && gold_set.count(v)) gold_edges.push_back(e);
      edge_list.push_back(std::move(e));
    }
    std::vector<Node> gold_node_list;
    for (int k : gold_nodes) gold_node_list.push_back(node_list[static_cast<std::size_t>(k - 1)]);

    CorpusInstance c;
    c.id = id;
    c.full_graph = MemoryGraph(std::move(node_list), std::move(edge_list));
    c.gold = EvidenceSubgraph{MemoryGraph(std::move(gold_node_list), std::move(gold_edges)), 1.0};
    const Node& first = c.gold.graph.nodes().front();
    const Node& last = c.gold.graph.nodes().back();
    c.gold_answer = detail::split_spaces(last.description).front();
    c.query = c.gold.graph.edges().empty()
                  ? "what is known about " + first.description
                  : "what is the " + c.gold.graph.edges().front().relation + " of " +
                        first.description;
    c.full_graph_text = emit(c.full_graph, EmitMode::full);
    c.gold_subgraph_text = emit(c.gold);
    c.segment_count = shape.segment_count;
    c.content_vector = synthesize_content(c.full_graph, c.gold.graph, shape, content_seed(seed, id));
    out.push_back(std::move(c));
  }
  return out;
}

std::string corpus_to_jsonl(const std::vector<CorpusInstance>& corpus) {
  std::string out;
  for (const CorpusInstance& c : corpus) {
    out += instance_json(c).dump();
    out += '\n';
  }
  return out;
}

std::vector<CorpusInstance> parse_corpus(const std::string& text, const SyntheticShape& shape,
                                         std::uint64_t seed) {
  std::vector<CorpusInstance> out;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  for (std::string_view raw : detail::split_lines(text)) {
    ++line_no;
    if (detail::trim(raw).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
      throw ParseError(line_no, "malformed JSON");
    }
    if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
    for (const char* field : {"id", "query", "gold_answer", "full_graph_text",
                              "gold_subgraph_text"}) {
      if (!obj.contains(field)) throw ParseError(line_no, std::string("missing field ") + field);
      if (!obj[field].is_string()) throw ParseError(line_no, std::string("field ") + field + " must be a string");
    }
    if (!obj.contains("segment_count")) throw ParseError(line_no, "missing field segment_count");
    if (!obj["segment_count"].is_number_unsigned() || obj["segment_count"].get<std::size_t>() == 0) {
      throw ParseError(line_no, "field segment_count must be a positive integer");
    }

    CorpusInstance c;
    c.id = obj["id"];
    c.query = obj["query"];
    c.gold_answer = obj["gold_answer"];
    c.full_graph_text = obj["full_graph_text"];
    c.gold_subgraph_text = obj["gold_subgraph_text"];
    c.segment_count = obj["segment_count"];
    if (!ids.insert(c.id).second) throw ParseError(line_no, "duplicate id " + c.id);
    try {
      c.full_graph = parse_full_graph(c.full_graph_text);
      c.gold = parse_evidence(c.gold_subgraph_text);
    } catch (const ParseError& e) {
      throw ValidationError("instance " + c.id + ": " + e.what());
    }
    const VerificationReport report = verify_subset(c.gold, c.full_graph);
    if (!report.accepted()) {
      const Violation& v = report.violations.front();
      throw ValidationError("instance " + c.id + ": " + std::string(to_string(v.kind)) + " " +
                            v.element);
    }
    if (obj.contains("content_vector") && !obj["content_vector"].is_null()) {
      const auto& cv = obj["content_vector"];
      if (!cv.is_array()) throw ParseError(line_no, "field content_vector must be an array");
      for (const auto& v : cv) {
        if (!v.is_number()) throw ParseError(line_no, "content_vector entries must be numbers");
        c.content_vector.push_back(v.get<double>());
      }
      if (c.content_vector.size() != shape.d_c) {
        throw ParseError(line_no, "content_vector has " + std::to_string(c.content_vector.size()) +
                                      " entries, expected " + std::to_string(shape.d_c));
      }
      if (!c.content().allFinite()) throw ParseError(line_no, "content_vector is not finite");
    } else {
      SyntheticShape s = shape;
      s.segment_count = c.segment_count;
      c.content_vector = synthesize_content(c.full_graph, c.gold.graph, s, content_seed(seed, c.id));
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<CorpusInstance> load_corpus(const std::string& path, const SyntheticShape& shape,
                                        std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("cannot read corpus " + path);
  return parse_corpus(buf.str(), shape, seed);
}

}  // namespace memadapter
