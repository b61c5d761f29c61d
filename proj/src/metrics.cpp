#include "qac/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "qac/errors.hpp"

namespace qac {

namespace {

std::vector<std::string_view> words_of(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const auto start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

using NGram = std::vector<std::string_view>;

std::map<NGram, std::size_t> ngram_counts(const std::vector<std::string_view>& words, std::size_t n) {
  std::map<NGram, std::size_t> counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i)
    ++counts[NGram(words.begin() + static_cast<long>(i), words.begin() + static_cast<long>(i + n))];
  return counts;
}

void require_results(std::span<const RankedResult> results) {
  if (results.empty()) throw PreconditionError("metric over an empty result set");
}

}  // namespace

double reciprocal_rank(std::string_view truth, std::span<const std::string> candidates) {
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i] == truth) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

double mrr(std::span<const RankedResult> results) {
  require_results(results);
  double total = 0.0;
  for (const auto& r : results) total += reciprocal_rank(r.ground_truth, r.candidates);
  return total / static_cast<double>(results.size());
}

double sentence_bleu(std::string_view reference, std::string_view hypothesis) {
  const auto ref = words_of(reference);
  const auto hyp = words_of(hypothesis);
  if (hyp.empty() || ref.empty()) return 0.0;

  constexpr std::size_t kMaxOrder = 4;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    const auto hyp_counts = ngram_counts(hyp, n);
    const auto ref_counts = ngram_counts(ref, n);
    std::size_t matched = 0;
    std::size_t total = 0;
    for (const auto& [gram, count] : hyp_counts) {
      total += count;
      const auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(count, it->second);
    }
    double precision = 0.0;
    if (n == 1) {
      if (matched == 0) return 0.0;
      precision = static_cast<double>(matched) / static_cast<double>(total);
    } else {
      precision = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
    }
    log_sum += std::log(precision);
  }
  const auto hyp_len = static_cast<double>(hyp.size());
  const auto ref_len = static_cast<double>(ref.size());
  const double brevity = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  return brevity * std::exp(log_sum / static_cast<double>(kMaxOrder));
}

double top1_bleu(std::span<const RankedResult> results) {
  require_results(results);
  double total = 0.0;
  for (const auto& r : results)
    if (!r.candidates.empty()) total += sentence_bleu(r.ground_truth, r.candidates.front());
  return total / static_cast<double>(results.size());
}

double bleu_rr_single(std::string_view truth, std::span<const std::string> candidates, std::size_t n) {
  if (n == 0) throw ConfigError("BLEU_RR needs n >= 1");
  double numerator = 0.0;
  double normalizer = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    const double weight = 1.0 / static_cast<double>(j);
    normalizer += weight;
    if (j <= candidates.size()) numerator += weight * sentence_bleu(truth, candidates[j - 1]);
  }
  return numerator / normalizer;
}

double bleu_rr(std::span<const RankedResult> results, std::size_t n) {
  require_results(results);
  double total = 0.0;
  for (const auto& r : results) total += bleu_rr_single(r.ground_truth, r.candidates, n);
  return total / static_cast<double>(results.size());
}

RetentionReport retention_report(std::span<const RankedResult> results, std::size_t m, std::size_t positions) {
  RetentionReport report;
  report.m = m;
  report.positions = positions;
  report.examples = results.size();
  report.histogram_counts.assign(m + 1, 0);
  std::vector<std::vector<std::size_t>> position_counts(m, std::vector<std::size_t>(positions + 1, 0));

  for (const auto& r : results) {
    std::size_t retained = 0;
    for (std::size_t rank = 0; rank < m; ++rank) {
      std::size_t column = positions;  // None
      if (rank < r.trie_candidates.size()) {
        const auto& cand = r.trie_candidates[rank];
        const auto limit = std::min(positions, r.candidates.size());
        for (std::size_t p = 0; p < limit; ++p) {
          if (r.candidates[p] == cand) {
            column = p;
            break;
          }
        }
        if (std::find(r.candidates.begin(), r.candidates.end(), cand) != r.candidates.end()) ++retained;
      }
      ++position_counts[rank][column];
    }
    ++report.histogram_counts[std::min(retained, m)];
  }

  const double denom = results.empty() ? 1.0 : static_cast<double>(results.size());
  for (auto c : report.histogram_counts) report.histogram_percent.push_back(100.0 * static_cast<double>(c) / denom);
  for (const auto& row : position_counts) {
    std::vector<double> pct;
    for (auto c : row) pct.push_back(100.0 * static_cast<double>(c) / denom);
    report.position_percent.push_back(std::move(pct));
  }
  return report;
}

}  // namespace qac
