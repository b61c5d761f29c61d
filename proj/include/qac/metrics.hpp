#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qac/corpus.hpp"
#include "qac/trie.hpp"

namespace qac {

/// Ranked output of one generator on one example.
struct RankedResult {
  std::size_t example_id = 0;
  std::string ground_truth;
  std::vector<std::string> candidates;       // rank order, position 1 first
  std::vector<std::string> trie_candidates;  // context fed to the generator
  SuggestionSource context_source = SuggestionSource::None;
  Bucket bucket = Bucket::B1_5;
  std::optional<bool> seen;
};

/// 1 / rank of `truth` among `candidates`, 0 when absent.
double reciprocal_rank(std::string_view truth, std::span<const std::string> candidates);

/// Mean reciprocal rank. Throws PreconditionError on an empty result set.
double mrr(std::span<const RankedResult> results);

/// Word-level sentence BLEU-4 in [0, 1]: clipped n-gram precisions with
/// add-one smoothing for n >= 2, uniform weights, standard brevity penalty.
/// No unigram match (or an empty hypothesis) scores 0.
double sentence_bleu(std::string_view reference, std::string_view hypothesis);

/// Mean sentence BLEU of the top-1 candidate (0 for empty lists).
double top1_bleu(std::span<const RankedResult> results);

/// Reciprocal-rank weighted BLEU of one example; missing ranks up to `n`
/// contribute 0 while the normalizer sums 1/j over all n.
double bleu_rr_single(std::string_view truth, std::span<const std::string> candidates, std::size_t n);

/// Mean of bleu_rr_single. Throws PreconditionError on an empty result set.
double bleu_rr(std::span<const RankedResult> results, std::size_t n);

/// How often trie context candidates are copied into the generated list.
struct RetentionReport {
  std::size_t m = 0;
  std::size_t positions = 0;
  std::size_t examples = 0;
  std::vector<std::size_t> histogram_counts;  // index t = retained candidates, 0..m
  std::vector<double> histogram_percent;
  /// Row r-1 for trie rank r; columns are output positions 1..positions,
  /// then None. Percent of all examples; a missing c_r counts as None.
  std::vector<std::vector<double>> position_percent;
};

RetentionReport retention_report(std::span<const RankedResult> results, std::size_t m, std::size_t positions = 8);

}  // namespace qac
