#include "doctest.h"
#include "json.hpp"
#include "memadapter/corpus.hpp"
#include "memadapter/error.hpp"
#include "memadapter/metrics.hpp"

using namespace memadapter;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_corpus(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

std::string line_for(const std::string& id, const std::string& gold_text) {
  nlohmann::json j = {{"id", id},
                      {"query", "what is known about bridge"},
                      {"gold_answer", "bridge"},
                      {"full_graph_text", "[FULL_GRAPH]\n<NODES>\nN1: bridge\nN2: steel\n<EDGES>\nN1 -> N2: built from\n"},
                      {"gold_subgraph_text", gold_text},
                      {"segment_count", 8}};
  return j.dump() + "\n";
}

const std::string kGold = "[EVIDENCE_SUBGRAPH]\n<NODES>\nN1: bridge\n<EDGES>\n[CONFIDENCE]\n1.0\n";

}  // namespace

TEST_CASE("generated corpus is valid and deterministic") {
  const auto corpus = generate_synthetic_corpus(200, 42);
  REQUIRE(corpus.size() == 200);
  const std::string jsonl = corpus_to_jsonl(corpus);
  CHECK(jsonl == corpus_to_jsonl(generate_synthetic_corpus(200, 42)));
  CHECK(jsonl != corpus_to_jsonl(generate_synthetic_corpus(200, 43)));
  const auto back = parse_corpus(jsonl);
  REQUIRE(back.size() == 200);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const CorpusInstance& c = corpus[i];
    CHECK(back[i].id == c.id);
    CHECK(back[i].content_vector == c.content_vector);
    CHECK(verify_subset(c.gold, c.full_graph).accepted());
    CHECK(c.content_vector.size() == 64);
    CHECK(c.gold.graph.nodes().size() >= 2);
    // The answer sits inside a gold node description.
    bool found = false;
    for (const Node& n : c.gold.graph.nodes()) found = found || contains_answer(n.description, c.gold_answer);
    CHECK(found);
    // Gold nodes form a chain, so the gold subgraph is connected.
    CHECK(c.gold.graph.edges().size() + 1 == c.gold.graph.nodes().size());
    // The query names a gold entity.
    bool mentioned = false;
    for (const Node& n : c.gold.graph.nodes()) mentioned = mentioned || c.query.find(n.description) != std::string::npos;
    CHECK(mentioned);
  }
}

TEST_CASE("minimal corpus shape") {
  SyntheticShape s;
  s.nodes_min = s.nodes_max = 1;
  s.edges_min = s.edges_max = 0;
  s.gold_min = s.gold_max = 1;
  const auto corpus = generate_synthetic_corpus(1, 7, s);
  REQUIRE(corpus.size() == 1);
  CHECK(corpus[0].full_graph.nodes().size() == 1);
  CHECK(corpus[0].full_graph.edges().empty());
  CHECK(corpus[0].gold.graph == corpus[0].full_graph);
}

TEST_CASE("infeasible shapes are rejected") {
  SyntheticShape s;
  s.nodes_min = s.nodes_max = 2;
  s.edges_min = 5;
  s.edges_max = 6;
  CHECK_THROWS_AS(generate_synthetic_corpus(3, 1, s), ValidationError);
  SyntheticShape r;
  r.nodes_min = 5;
  r.nodes_max = 4;
  CHECK_THROWS_AS(generate_synthetic_corpus(3, 1, r), ValidationError);
  CHECK_THROWS_AS(generate_synthetic_corpus(0, 1), ValidationError);
}

TEST_CASE("content vector encodes gold and non-gold slots by sign") {
  const auto corpus = generate_synthetic_corpus(50, 3);
  for (const CorpusInstance& c : corpus) {
    for (const Node& n : c.full_graph.nodes()) {
      const auto k = static_cast<std::size_t>(std::stoi(n.id.str().substr(1)));
      double sum = 0.0;
      for (std::size_t i = 8 * (k - 1); i < 8 * k; ++i) sum += c.content_vector[i];
      const bool gold = c.gold.graph.find_node(n.id) != nullptr;
      CHECK((gold ? sum > 0 : sum < 0));
    }
  }
}

TEST_CASE("load-time validation") {
  CHECK(parse_corpus(line_for("a", kGold) + line_for("b", kGold) + "\n" + line_for("c", kGold)).size() == 3);

  nlohmann::json missing = nlohmann::json::parse(line_for("b", kGold));
  missing.erase("query");
  CHECK(error_of(line_for("a", kGold) + missing.dump() + "\n") == "line 2: missing field query");
  CHECK(error_of(line_for("a", kGold) + "{not json\n") == "line 2: malformed JSON");
  CHECK(error_of(line_for("a", kGold) + line_for("a", kGold)) == "line 2: duplicate id a");

  const std::string extra_node =
      "[EVIDENCE_SUBGRAPH]\n<NODES>\nN1: bridge\nN5: river\n<EDGES>\n[CONFIDENCE]\n1.0\n";
  const std::string err = error_of(line_for("bad-one", extra_node));
  CHECK(err.find("bad-one") != std::string::npos);
  CHECK(err.find("unknown-node") != std::string::npos);

  const auto loaded = parse_corpus(line_for("a", kGold), SyntheticShape{}, 9);
  CHECK(loaded[0].content_vector.size() == 64);
  CHECK(loaded[0].content_vector == parse_corpus(line_for("a", kGold), SyntheticShape{}, 9)[0].content_vector);
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl"), IoError);
}
