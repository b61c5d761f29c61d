#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qac/beam_search.hpp"
#include "qac/corpus.hpp"
#include "qac/metrics.hpp"
#include "qac/trie.hpp"

namespace qac {

struct GeneratorOutput {
  std::vector<std::string> candidates;
  std::vector<std::string> trie_context;
  SuggestionSource context_source = SuggestionSource::None;
};

/// A named source of ranked, prefix-preserving completions.
class CompletionGenerator {
 public:
  virtual ~CompletionGenerator() = default;
  virtual std::string name() const = 0;
  virtual GeneratorOutput generate(std::span<const std::string> session, std::string_view prefix) const = 0;
  virtual bool uses_trie_context() const { return false; }
};

/// Most popular completions from a single trie (MPC_Train / MPC_Main).
class MpcGenerator : public CompletionGenerator {
 public:
  MpcGenerator(std::string name, const PopularityTrie& trie, std::size_t n = 8);
  std::string name() const override { return name_; }
  GeneratorOutput generate(std::span<const std::string> session, std::string_view prefix) const override;

 private:
  std::string name_;
  const PopularityTrie& trie_;
  std::size_t n_;
};

/// Main-trie completions, falling back to the suffix trie on a total miss.
class MpcFallbackGenerator : public CompletionGenerator {
 public:
  MpcFallbackGenerator(std::string name, const PopularityTrie& main, const SuffixTrie& synth, std::size_t n = 8);
  std::string name() const override { return name_; }
  GeneratorOutput generate(std::span<const std::string> session, std::string_view prefix) const override;

 private:
  std::string name_;
  const PopularityTrie& main_;
  const SuffixTrie& synth_;
  std::size_t n_;
};

/// Seq2seq generator over augmented inputs. With context.use_trie == false
/// it is the no-trie-context ablation; with both switches off it only sees
/// the prefix.
class NlgGenerator : public CompletionGenerator {
 public:
  NlgGenerator(std::string name, const Seq2SeqModel& model, const Tokenizer& tokenizer, const PopularityTrie* main,
               const SuffixTrie* synth, ContextOptions context, BeamConfig beam);
  std::string name() const override { return name_; }
  GeneratorOutput generate(std::span<const std::string> session, std::string_view prefix) const override;
  bool uses_trie_context() const override { return context_.use_trie; }

  /// Beam output with scores, for callers that need more than the texts.
  std::vector<Completion> generate_scored(std::span<const std::string> session, std::string_view prefix,
                                          AugmentedInput* input_out = nullptr) const;

 private:
  std::string name_;
  const Seq2SeqModel& model_;
  const Tokenizer& tokenizer_;
  const PopularityTrie* main_;
  const SuffixTrie* synth_;
  ContextOptions context_;
  BeamConfig beam_;
};

struct MetricSummary {
  std::size_t count = 0;
  double mrr = 0.0;
  double bleu = 0.0;
  double bleu_rr = 0.0;
};

struct EvalOptions {
  std::size_t n = 8;
  /// Labels examples whose `seen` flag is missing.
  const PopularityTrie* seen_trie = nullptr;
  /// Number of trie ranks tracked in the retention report.
  std::size_t retention_m = 3;
  bool keep_results = true;
};

struct EvalReport {
  std::string generator;
  std::string split;
  std::string dataset_fingerprint;
  std::size_t n = 8;
  MetricSummary overall;
  std::map<Bucket, MetricSummary> buckets;
  MetricSummary seen;
  MetricSummary unseen;
  std::size_t failures = 0;
  std::optional<RetentionReport> retention;
  std::vector<RankedResult> results;
};

/// Runs the generator over every example. A generator exception is counted
/// in `failures` and scored as an empty candidate list. Throws
/// PreconditionError on an empty split.
EvalReport evaluate(const CompletionGenerator& generator, std::span<const QacExample> examples,
                    const EvalOptions& options = {}, std::string split_name = "test");

MetricSummary summarize(std::span<const RankedResult> results, std::size_t n);

/// CRC32 (hex) of the examples' JSONL serialization.
std::string dataset_fingerprint(std::span<const QacExample> examples);

nlohmann::ordered_json to_json(const MetricSummary& summary);
nlohmann::ordered_json to_json(const RetentionReport& report);
nlohmann::ordered_json to_json(const EvalReport& report);

/// Side-by-side table of several reports (overall, buckets, seen/unseen).
std::string format_table(std::span<const EvalReport> reports);
std::string format_retention_table(const RetentionReport& report);

struct RuntimeReport {
  std::string generator;
  std::size_t records = 0;
  std::size_t runs = 0;
  double mean_ms = 0.0;             // per record over all runs
  double p95_ms = 0.0;              // per record over all runs
  double run_mean_stddev_ms = 0.0;  // spread of per-run means
};

/// Wall-clock per-record latency. One warm-up pass precedes `runs` timed
/// passes. Throws PreconditionError on an empty split.
RuntimeReport measure_runtime(const CompletionGenerator& generator, std::span<const QacExample> examples,
                              std::size_t runs = 5);

nlohmann::ordered_json to_json(const RuntimeReport& report);

}  // namespace qac
