#include "memadapter/vocabulary.hpp"

#include "json.hpp"

#include "memadapter/error.hpp"
#include "memadapter/graph.hpp"
#include "text_util.hpp"

namespace memadapter {

namespace {

const std::vector<std::string>& reserved_spellings() {
  static const std::vector<std::string> spellings = {
      "<|bos|>",   "<|eos|>", "<|unk|>",   "<|header|>", "<|nodes|>",
      "<|edges|>", "<|conf|>", "<|colon|>", "<|arrow|>",  "<|eol|>"};
  return spellings;
}

}  // namespace

Vocabulary::Vocabulary(Mode mode) : mode_(mode) {
  for (const std::string& s : reserved_spellings()) {
    ids_.emplace(s, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(s);
  }
}

bool Vocabulary::is_reserved_spelling(std::string_view word) {
  for (const std::string& s : reserved_spellings()) {
    if (s == word) return true;
  }
  return false;
}

TokenId Vocabulary::add(std::string_view word) {
  if (is_reserved_spelling(word)) {
    throw ValidationError("word '" + std::string(word) +
                          "' collides with a reserved token");
  }
  if (const auto id = find(word)) return *id;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(word);
  ids_.emplace(std::string(word), id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  const auto it = ids_.find(std::string(word));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::lookup(std::string_view word) const {
  if (is_reserved_spelling(word)) {
    throw ValidationError("word '" + std::string(word) +
                          "' collides with a reserved token");
  }
  if (const auto id = find(word)) return *id;
  if (mode_ == Mode::open) return tokens::unk;
  throw ValidationError("out-of-vocabulary word '" + std::string(word) + "'");
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ValidationError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::add_graph_words(const MemoryGraph& graph) {
  for (const Node& node : graph.nodes()) {
    add(node.id.str());
    for (std::string_view w : detail::split_spaces(node.description)) add(w);
  }
  for (const Edge& edge : graph.edges()) {
    add(edge.source.str());
    add(edge.target.str());
    for (std::string_view w : detail::split_spaces(edge.relation)) add(w);
  }
}

std::string Vocabulary::to_jsonl() const {
  std::string out =
      nlohmann::json{{"mode", mode_ == Mode::open ? "open" : "closed"}}.dump();
  out += '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += nlohmann::json{{"id", i}, {"token", tokens_[i]}}.dump();
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::from_jsonl(std::string_view text) {
  std::size_t line_no = 0;
  std::optional<Vocabulary> vocab;
  for (std::string_view line : detail::split_lines(text)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw ParseError(line_no, "malformed JSON");
    }
    if (!vocab) {
      if (!obj.contains("mode") || !obj["mode"].is_string()) {
        throw ParseError(line_no, "missing vocabulary mode");
      }
      const std::string mode = obj["mode"];
      if (mode != "open" && mode != "closed") {
        throw ParseError(line_no, "unknown vocabulary mode " + mode);
      }
      vocab.emplace(mode == "open" ? Mode::open : Mode::closed);
      continue;
    }
    if (!obj.contains("id") || !obj.contains("token") ||
        !obj["id"].is_number_integer() || !obj["token"].is_string()) {
      throw ParseError(line_no, "malformed token entry");
    }
    const auto id = obj["id"].get<std::int64_t>();
    const std::string token = obj["token"];
    if (id < tokens::first_word) {
      if (vocab->token(static_cast<TokenId>(id)) != token) {
        throw ParseError(line_no, "reserved token mismatch");
      }
      continue;
    }
    if (static_cast<std::size_t>(id) != vocab->size()) {
      throw ParseError(line_no, "token ids must be dense and ascending");
    }
    if (vocab->find(token)) throw ParseError(line_no, "duplicate token");
    vocab->add(token);
  }
  if (!vocab) throw ParseError(line_no + 1, "missing vocabulary mode");
  return *vocab;
}

}  // namespace memadapter
