#pragma once

// Brute-force reference implementations used as test oracles.

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "qac/corpus.hpp"
#include "qac/random.hpp"

namespace qac::testing {

/// n distinct queries of 1-4 words over a small vocabulary, so prefixes
/// overlap heavily. Frequencies repeat to exercise tie-breaking.
inline FrequencyTable random_frequency_table(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> kWords = {
      "go",    "google", "good", "maps",  "mail",  "news",   "new",  "york",   "weather", "west",
      "of",    "to",     "the",  "kindle", "e-reader", "price", "book", "florida", "flights", "goa",
      "cheap", "best",   "a",    "b2b",   "music", "movie",  "mov",  "car",    "cars",    "care"};
  std::mt19937_64 rng(seed);
  std::map<std::string, std::uint64_t> out;
  while (out.size() < n) {
    const auto words = 1 + uniform_index(rng, 4);
    std::string q;
    for (std::uint64_t w = 0; w < words; ++w) {
      if (w > 0) q.push_back(' ');
      q += kWords[uniform_index(rng, kWords.size())];
    }
    if (uniform_index(rng, 4) == 0) q += std::to_string(uniform_index(rng, 100));
    out.emplace(q, 1 + uniform_index(rng, 50));
  }
  return {out.begin(), out.end()};
}

/// Prefixes of random table entries, plus some strings that match nothing.
inline std::vector<std::string> random_prefixes(const FrequencyTable& table, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  while (out.size() < count) {
    if (uniform_index(rng, 10) == 0) {
      out.push_back("zq" + std::to_string(uniform_index(rng, 1000)));
      continue;
    }
    const auto& q = table[uniform_index(rng, table.size())].first;
    out.push_back(q.substr(0, 1 + uniform_index(rng, q.size())));
  }
  return out;
}

/// Filter by prefix, sort by (count desc, text asc), keep m.
inline std::vector<std::string> linear_top_k(const FrequencyTable& table, const std::string& prefix, std::size_t m) {
  std::vector<std::pair<std::string, std::uint64_t>> hits;
  for (const auto& entry : table)
    if (entry.first.compare(0, prefix.size(), prefix) == 0 && entry.first.size() >= prefix.size()) hits.push_back(entry);
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < hits.size() && i < m; ++i) out.push_back(hits[i].first);
  return out;
}

/// Every word-boundary suffix of every query with summed frequencies,
/// computed by plain string splitting.
inline FrequencyTable suffix_frequency_table(const FrequencyTable& table) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& [query, freq] : table) {
    std::size_t start = 0;
    while (true) {
      out[query.substr(start)] += freq;
      const auto space = query.find(' ', start);
      if (space == std::string::npos) break;
      start = space + 1;
    }
  }
  return {out.begin(), out.end()};
}

}  // namespace qac::testing
