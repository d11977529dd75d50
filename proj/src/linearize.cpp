#include "memadapter/linearize.hpp"

#include "memadapter/error.hpp"
#include "text_util.hpp"

namespace memadapter {

namespace {

void append_words(TokenSequence& out, std::string_view text,
                  const Vocabulary& vocab) {
  for (std::string_view w : detail::split_spaces(text)) {
    out.push_back(vocab.lookup(w));
  }
}

class Reader {
 public:
  Reader(const TokenSequence& seq, const Vocabulary& vocab)
      : seq_(seq), vocab_(vocab) {}

  bool at_end() const { return pos_ >= seq_.size(); }
  TokenId peek() const {
    if (at_end()) fail("truncated stream");
    return seq_[pos_];
  }
  TokenId next() {
    const TokenId t = peek();
    ++pos_;
    return t;
  }
  void expect(TokenId want, const char* what) {
    const TokenId got = next();
    if (got != want) {
      if (Vocabulary::is_reserved(got) && Vocabulary::is_reserved(want)) {
        fail(std::string("marker out of order, expected ") + what);
      }
      fail(std::string("expected ") + what);
    }
  }
  NodeId node_id(const char* what) {
    const TokenId t = next();
    if (Vocabulary::is_reserved(t) || !NodeId::is_valid(word(t))) {
      fail(std::string(what) + " lacks an id token");
    }
    return NodeId::parse(word(t));
  }
  // Words up to (not including) the next EOL, joined by single spaces.
  std::string text_until_eol() {
    std::string text;
    bool first = true;
    while (peek() != tokens::eol) {
      const TokenId t = next();
      if (Vocabulary::is_reserved(t)) fail("marker inside text");
      if (!first) text += ' ';
      text += word(t);
      first = false;
    }
    ++pos_;
    if (first) fail("empty text field");
    return text;
  }
  const std::string& word(TokenId t) const {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_.size()) {
      fail("token id out of range");
    }
    return vocab_.token(t);
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw DecodeError("token " + std::to_string(pos_) + ": " + what);
  }

 private:
  const TokenSequence& seq_;
  const Vocabulary& vocab_;
  std::size_t pos_ = 0;
};

}  // namespace

TokenSequence linearize(const MemoryGraph& graph, const Vocabulary& vocab,
                        std::optional<double> confidence) {
  TokenSequence out = {tokens::bos, tokens::header, tokens::nodes, tokens::eol};
  for (const Node& node : graph.nodes()) {
    out.push_back(vocab.lookup(node.id.str()));
    out.push_back(tokens::colon);
    append_words(out, node.description, vocab);
    out.push_back(tokens::eol);
  }
  out.push_back(tokens::edges);
  out.push_back(tokens::eol);
  for (const Edge& edge : graph.edges()) {
    out.push_back(vocab.lookup(edge.source.str()));
    out.push_back(tokens::arrow);
    out.push_back(vocab.lookup(edge.target.str()));
    out.push_back(tokens::colon);
    append_words(out, edge.relation, vocab);
    out.push_back(tokens::eol);
  }
  if (confidence) {
    out.push_back(tokens::confidence);
    out.push_back(vocab.lookup(format_confidence(*confidence)));
    out.push_back(tokens::eol);
  }
  out.push_back(tokens::eos);
  return out;
}

EvidenceSubgraph delinearize(const TokenSequence& seq, const Vocabulary& vocab) {
  Reader in(seq, vocab);
  if (seq.size() == 2 && seq[0] == tokens::bos && seq[1] == tokens::eos) {
    in.fail("empty body");
  }
  in.expect(tokens::bos, "BOS");
  in.expect(tokens::header, "header marker");
  in.expect(tokens::nodes, "<NODES>");
  in.expect(tokens::eol, "end of line");

  std::vector<Node> nodes;
  while (in.peek() != tokens::edges) {
    if (Vocabulary::is_reserved(in.peek())) in.fail("marker out of order");
    NodeId id = in.node_id("node line");
    in.expect(tokens::colon, "':' after node id");
    nodes.push_back(Node{std::move(id), in.text_until_eol()});
  }
  in.expect(tokens::edges, "<EDGES>");
  in.expect(tokens::eol, "end of line");

  std::vector<Edge> edges;
  while (in.peek() != tokens::eos && in.peek() != tokens::confidence) {
    if (Vocabulary::is_reserved(in.peek())) in.fail("marker out of order");
    NodeId source = in.node_id("edge line");
    in.expect(tokens::arrow, "'->' after edge source");
    NodeId target = in.node_id("edge line");
    in.expect(tokens::colon, "':' after edge target");
    edges.push_back(Edge{std::move(source), std::move(target), in.text_until_eol()});
  }

  double confidence = 1.0;
  if (in.peek() == tokens::confidence) {
    in.next();
    const TokenId t = in.next();
    if (Vocabulary::is_reserved(t)) in.fail("missing confidence value");
    try {
      confidence = parse_evidence("[EVIDENCE_SUBGRAPH]\n<NODES>\n<EDGES>\n"
                                  "[CONFIDENCE]\n" + in.word(t) + "\n")
                       .confidence;
    } catch (const ParseError& e) {
      in.fail(e.kind());
    }
    in.expect(tokens::eol, "end of line");
  }
  in.expect(tokens::eos, "EOS");
  if (!in.at_end()) in.fail("content after EOS");

  try {
    return EvidenceSubgraph{MemoryGraph(std::move(nodes), std::move(edges)),
                            confidence};
  } catch (const ValidationError& e) {
    throw DecodeError(e.what());
  }
}

}  // namespace memadapter
