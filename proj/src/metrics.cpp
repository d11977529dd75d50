#include "memadapter/metrics.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>

#include "memadapter/error.hpp"
#include "text_util.hpp"

namespace memadapter {

namespace {

bool is_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
         (c >= 123 && c <= 126);
}

std::string lowercase(std::string s) {
  for (char& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

std::vector<std::string> normalized_tokens(const std::string& s) {
  return detail::split_whitespace(normalize_answer(s));
}

// Multiset overlap F-measure; nullopt when either side is empty.
std::optional<double> overlap_f(const std::vector<std::string>& pred,
                                const std::vector<std::string>& gold) {
  if (pred.empty() || gold.empty()) return std::nullopt;
  std::map<std::string, int> counts;
  for (const std::string& t : gold) ++counts[t];
  int common = 0;
  for (const std::string& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double p = static_cast<double>(common) / static_cast<double>(pred.size());
  const double r = static_cast<double>(common) / static_cast<double>(gold.size());
  return 2.0 * p * r / (p + r);
}

void require_golds(const std::vector<std::string>& golds) {
  if (golds.empty()) throw ValidationError("gold answer list is empty");
}

}  // namespace

std::string normalize_answer(const std::string& s) {
  std::string stripped;
  stripped.reserve(s.size());
  for (char c : lowercase(s)) {
    if (!is_punct(static_cast<unsigned char>(c))) stripped.push_back(c);
  }
  std::string out;
  for (const std::string& w : detail::split_whitespace(stripped)) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

int exact_match(const std::string& prediction, const std::vector<std::string>& golds) {
  require_golds(golds);
  const std::string p = normalize_answer(prediction);
  for (const std::string& g : golds) {
    if (normalize_answer(g) == p) return 1;
  }
  return 0;
}

double token_f1(const std::string& prediction, const std::vector<std::string>& golds) {
  require_golds(golds);
  const auto pred = normalized_tokens(prediction);
  double best = 0.0;
  for (const std::string& g : golds) {
    const auto gold = normalized_tokens(g);
    if (pred.empty() && gold.empty()) return 1.0;
    best = std::max(best, overlap_f(pred, gold).value_or(0.0));
  }
  return best;
}

double rouge1(const std::string& prediction, const std::vector<std::string>& golds) {
  require_golds(golds);
  const auto pred = normalized_tokens(prediction);
  double best = 0.0;
  for (const std::string& g : golds) {
    best = std::max(best, overlap_f(pred, normalized_tokens(g)).value_or(0.0));
  }
  return best;
}

double mem_length(const std::vector<MemoryRecord>& records) {
  if (records.empty()) throw ValidationError("mem_length: no records");
  double total = 0.0;
  for (const MemoryRecord& r : records) {
    std::size_t scalars = 0;
    for (unsigned char c : r.retrieved_text) {
      if ((c & 0xC0) != 0x80) ++scalars;
    }
    total += static_cast<double>(scalars);
  }
  return total / static_cast<double>(records.size());
}

double unique_ratio(const std::vector<MemoryRecord>& records) {
  double total = 0.0;
  std::size_t counted = 0;
  for (const MemoryRecord& r : records) {
    const auto toks = detail::split_whitespace(lowercase(r.retrieved_text));
    if (toks.empty()) continue;
    const std::set<std::string> distinct(toks.begin(), toks.end());
    total += static_cast<double>(distinct.size()) / static_cast<double>(toks.size());
    ++counted;
  }
  if (counted == 0) throw ValidationError("unique_ratio: every record is empty");
  return total / static_cast<double>(counted);
}

bool contains_answer(const std::string& text, const std::string& answer) {
  const auto hay = normalized_tokens(text);
  const auto needle = normalized_tokens(answer);
  if (needle.empty()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

double memory_utilization(const std::vector<MemoryRecord>& records) {
  std::size_t denominator = 0, numerator = 0;
  for (const MemoryRecord& r : records) {
    if (!r.has_gold_evidence) continue;
    ++denominator;
    if (contains_answer(r.retrieved_text, r.gold_answer)) ++numerator;
  }
  if (denominator == 0) throw ValidationError("memory_utilization: no gold-evidence records");
  return static_cast<double>(numerator) / static_cast<double>(denominator);
}

}  // namespace memadapter
