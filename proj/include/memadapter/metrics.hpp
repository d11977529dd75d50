#pragma once

#include <string>
#include <vector>

namespace memadapter {

// Lowercase, drop ASCII punctuation, drop the articles a/an/the, collapse
// whitespace.
std::string normalize_answer(const std::string& s);

int exact_match(const std::string& prediction, const std::vector<std::string>& golds);
double token_f1(const std::string& prediction, const std::vector<std::string>& golds);
// Unigram F-measure with clipped counts. An empty side scores 0.
double rouge1(const std::string& prediction, const std::vector<std::string>& golds);

struct MemoryRecord {
  std::string retrieved_text;
  std::string gold_answer;
  bool has_gold_evidence = true;
};

// Mean count of Unicode scalar values.
double mem_length(const std::vector<MemoryRecord>& records);
// Mean over records with at least one token of distinct/total lowercased
// whitespace tokens.
double unique_ratio(const std::vector<MemoryRecord>& records);
// Whether the normalized answer occurs as a contiguous token run.
bool contains_answer(const std::string& text, const std::string& answer);
double memory_utilization(const std::vector<MemoryRecord>& records);

}  // namespace memadapter
