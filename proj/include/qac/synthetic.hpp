#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qac/corpus.hpp"

namespace qac {

/// Topic-structured query log for demos and end-to-end tests.
///
/// Queries look like "<entity> <topic>". Entities carry Zipf popularity; a
/// background frequency table (the stand-in for a large historical log)
/// lists each entity with a few of its topics. Every session sticks to one
/// topic. Its queries are drawn from the background queries of that topic
/// by popularity, except that with probability `novel_rate` a query pairs a
/// popularity-sampled entity with the topic whether or not the background
/// knows that pair. Targets therefore depend on the session and the trie.
struct SyntheticCorpusConfig {
  std::size_t sessions = 2000;
  std::size_t users = 200;
  std::size_t entities = 600;
  std::size_t topics_per_entity = 3;
  std::size_t min_context = 1;
  std::size_t max_context = 3;
  double zipf_exponent = 1.0;
  double novel_rate = 0.25;
  std::uint64_t background_scale = 1000;
  std::int64_t start_timestamp = 1'600'000'000;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticCorpus {
  std::vector<RawLogRecord> log;
  FrequencyTable background;  // sorted by query text
  std::vector<std::string> topics;
  std::vector<std::string> entities;  // most popular first
};

SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusConfig& config);

}  // namespace qac
