#include "memadapter/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "memadapter/error.hpp"
#include "memadapter/linearize.hpp"
#include "text_util.hpp"

namespace memadapter {

namespace {

std::optional<std::vector<TokenId>> words_of(std::string_view text,
                                             const Vocabulary& vocab) {
  std::vector<TokenId> out;
  for (std::string_view w : detail::split_spaces(text)) {
    if (Vocabulary::is_reserved_spelling(w)) return std::nullopt;
    const auto id = vocab.find(w);
    if (!id) return std::nullopt;
    out.push_back(*id);
  }
  return out;
}

class Decoder {
 public:
  Decoder(const RetrieverModel& model, const Vec& q, const Vec& h, std::size_t max_len)
      : model_(model), state_(student_start(model, q, h)), max_len_(max_len) {}

  // Feeds a token whose choice was forced or already made.
  void feed(TokenId t) {
    if (emitted_ >= max_len_) throw DecodeError("max_len exhausted without EOS");
    ++emitted_;
    logits_ = student_advance(model_, state_, t);
  }

  // Picks the highest-scoring allowed token, feeds it and returns it.
  TokenId choose(const std::vector<TokenId>& allowed) {
    if (allowed.empty()) throw DecodeError("no legal token available");
    TokenId best = allowed.front();
    double best_score = -std::numeric_limits<double>::infinity();
    double max_logit = -std::numeric_limits<double>::infinity();
    for (TokenId t : allowed) max_logit = std::max(max_logit, logits_(t));
    double mass = 0.0;
    for (TokenId t : allowed) {
      const double s = logits_(t);
      mass += std::exp(s - max_logit);
      // Ties go to the first allowed token, which keeps the choice stable.
      if (s > best_score) {
        best_score = s;
        best = t;
      }
    }
    if (allowed.size() > 1) {
      log_prob_ += best_score - max_logit - std::log(mass);
      ++choices_;
    }
    feed(best);
    return best;
  }

  double confidence() const {
    if (choices_ == 0) return 1.0;
    const double c = std::exp(log_prob_ / static_cast<double>(choices_));
    return std::clamp(c, 0.0, 1.0);
  }

 private:
  const RetrieverModel& model_;
  StudentState state_;
  Vec logits_;
  std::size_t max_len_;
  std::size_t emitted_ = 0;
  std::size_t choices_ = 0;
  double log_prob_ = 0.0;
};

struct EdgeCandidate {
  std::size_t index;
  TokenId source;
  TokenId target;
  std::vector<TokenId> relation;
};

}  // namespace

std::size_t default_max_len(const MemoryGraph& full) {
  std::size_t n = 7;
  for (const Node& node : full.nodes()) n += 3 + detail::split_spaces(node.description).size();
  for (const Edge& edge : full.edges()) n += 5 + detail::split_spaces(edge.relation).size();
  return n;
}

EvidenceSubgraph generate_subgraph(const RetrieverModel& model,
                                   const MemoryGraph& full, const Vocabulary& vocab,
                                   const Vec& q, const Vec& h,
                                   std::optional<std::size_t> max_len) {
  if (model.vocab_size() != vocab.size()) {
    throw ValidationError("retriever vocabulary size does not match vocabulary");
  }
  Decoder dec(model, q, h, max_len.value_or(default_max_len(full)));

  // Representable elements of the full graph.
  std::vector<std::optional<TokenId>> node_token(full.nodes().size());
  std::vector<std::vector<TokenId>> node_words(full.nodes().size());
  std::map<std::string, TokenId> id_token;
  for (std::size_t i = 0; i < full.nodes().size(); ++i) {
    const Node& node = full.nodes()[i];
    const auto id = vocab.find(node.id.str());
    auto words = words_of(node.description, vocab);
    if (!id || !words) continue;
    node_token[i] = *id;
    node_words[i] = std::move(*words);
    id_token.emplace(node.id.str(), *id);
  }
  std::vector<EdgeCandidate> edge_pool;
  for (std::size_t i = 0; i < full.edges().size(); ++i) {
    const Edge& e = full.edges()[i];
    const auto s = id_token.find(e.source.str());
    const auto t = id_token.find(e.target.str());
    auto rel = words_of(e.relation, vocab);
    if (s == id_token.end() || t == id_token.end() || !rel) continue;
    edge_pool.push_back({i, s->second, t->second, std::move(*rel)});
  }

  for (TokenId t : {tokens::bos, tokens::header, tokens::nodes}) dec.feed(t);
  dec.feed(tokens::eol);

  std::vector<Node> nodes;
  std::vector<bool> emitted(full.nodes().size(), false);
  std::size_t next_node = 0;
  while (true) {
    std::vector<TokenId> allowed = {tokens::edges};
    std::map<TokenId, std::size_t> by_token;
    for (std::size_t i = next_node; i < full.nodes().size(); ++i) {
      if (!node_token[i]) continue;
      allowed.push_back(*node_token[i]);
      by_token.emplace(*node_token[i], i);
    }
    const TokenId pick = dec.choose(allowed);
    if (pick == tokens::edges) break;
    const std::size_t i = by_token.at(pick);
    dec.feed(tokens::colon);
    for (TokenId w : node_words[i]) dec.feed(w);
    dec.feed(tokens::eol);
    nodes.push_back(full.nodes()[i]);
    emitted[i] = true;
    next_node = i + 1;
  }
  dec.feed(tokens::eol);

  std::map<TokenId, bool> emitted_token;
  for (std::size_t i = 0; i < full.nodes().size(); ++i) {
    if (emitted[i]) emitted_token[*node_token[i]] = true;
  }
  std::vector<Edge> edges;
  std::size_t next_edge = 0;
  while (true) {
    std::vector<const EdgeCandidate*> cands;
    for (const EdgeCandidate& c : edge_pool) {
      if (c.index >= next_edge && emitted_token.count(c.source) && emitted_token.count(c.target)) {
        cands.push_back(&c);
      }
    }
    std::vector<TokenId> allowed = {tokens::eos};
    for (const EdgeCandidate* c : cands) {
      if (std::find(allowed.begin(), allowed.end(), c->source) == allowed.end()) {
        allowed.push_back(c->source);
      }
    }
    const TokenId src = dec.choose(allowed);
    if (src == tokens::eos) break;
    dec.feed(tokens::arrow);

    std::vector<const EdgeCandidate*> with_src;
    std::vector<TokenId> targets;
    for (const EdgeCandidate* c : cands) {
      if (c->source != src) continue;
      with_src.push_back(c);
      if (std::find(targets.begin(), targets.end(), c->target) == targets.end()) {
        targets.push_back(c->target);
      }
    }
    const TokenId dst = dec.choose(targets);
    dec.feed(tokens::colon);

    // Walk the relation trie of the remaining candidates.
    std::vector<const EdgeCandidate*> live;
    for (const EdgeCandidate* c : with_src) {
      if (c->target == dst) live.push_back(c);
    }
    std::size_t pos = 0;
    while (true) {
      std::vector<TokenId> next;
      bool can_end = false;
      for (const EdgeCandidate* c : live) {
        if (pos == c->relation.size()) {
          can_end = true;
        } else if (std::find(next.begin(), next.end(), c->relation[pos]) == next.end()) {
          next.push_back(c->relation[pos]);
        }
      }
      if (can_end && pos > 0) next.insert(next.begin(), tokens::eol);
      const TokenId w = dec.choose(next);
      if (w == tokens::eol) break;
      std::vector<const EdgeCandidate*> kept;
      for (const EdgeCandidate* c : live) {
        if (pos < c->relation.size() && c->relation[pos] == w) kept.push_back(c);
      }
      live = std::move(kept);
      ++pos;
    }
    const EdgeCandidate* chosen = nullptr;
    for (const EdgeCandidate* c : live) {
      if (c->relation.size() == pos) {
        chosen = c;
        break;
      }
    }
    if (chosen == nullptr) throw DecodeError("relation trie ended without a match");
    edges.push_back(full.edges()[chosen->index]);
    next_edge = chosen->index + 1;
  }

  return EvidenceSubgraph{MemoryGraph(std::move(nodes), std::move(edges)), dec.confidence()};
}

}  // namespace memadapter
