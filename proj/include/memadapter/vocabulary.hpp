#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace memadapter {

class MemoryGraph;

using TokenId = std::int32_t;

namespace tokens {
inline constexpr TokenId bos = 0;
inline constexpr TokenId eos = 1;
inline constexpr TokenId unk = 2;
inline constexpr TokenId header = 3;  // [EVIDENCE_SUBGRAPH]
inline constexpr TokenId nodes = 4;   // <NODES>
inline constexpr TokenId edges = 5;   // <EDGES>
inline constexpr TokenId confidence = 6;  // [CONFIDENCE]
inline constexpr TokenId colon = 7;
inline constexpr TokenId arrow = 8;
inline constexpr TokenId eol = 9;
inline constexpr TokenId first_word = 10;
}  // namespace tokens

// Token table with fixed reserved ids 0..9. In open mode unknown words map
// to UNK; in closed mode they are an error.
class Vocabulary {
 public:
  enum class Mode { open, closed };

  explicit Vocabulary(Mode mode = Mode::closed);

  // Adds a word if absent and returns its id. Reserved spellings are refused.
  TokenId add(std::string_view word);
  std::optional<TokenId> find(std::string_view word) const;
  // find() with the open/closed policy applied.
  TokenId lookup(std::string_view word) const;
  const std::string& token(TokenId id) const;

  std::size_t size() const { return tokens_.size(); }
  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  static bool is_reserved(TokenId id) { return id >= 0 && id < tokens::first_word; }
  static bool is_reserved_spelling(std::string_view word);

  // Every word linearize() would produce for the graph, in first-seen order.
  void add_graph_words(const MemoryGraph& graph);

  // One JSON object per line: a {"mode": ...} header, then {"id", "token"}.
  std::string to_jsonl() const;
  static Vocabulary from_jsonl(std::string_view text);

  bool operator==(const Vocabulary& other) const {
    return mode_ == other.mode_ && tokens_ == other.tokens_;
  }

 private:
  Mode mode_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace memadapter
