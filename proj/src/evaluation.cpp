#include "qac/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "qac/binary_io.hpp"
#include "qac/errors.hpp"

namespace qac {

namespace {

std::vector<std::string> texts_of(const std::vector<Suggestion>& suggestions) {
  std::vector<std::string> out;
  out.reserve(suggestions.size());
  for (const auto& s : suggestions) out.push_back(s.text);
  return out;
}

std::string fixed(double v, int precision = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v;
  return out.str();
}

}  // namespace

MpcGenerator::MpcGenerator(std::string name, const PopularityTrie& trie, std::size_t n)
    : name_(std::move(name)), trie_(trie), n_(n) {}

GeneratorOutput MpcGenerator::generate(std::span<const std::string>, std::string_view prefix) const {
  GeneratorOutput out;
  out.candidates = texts_of(mpc_lookup(trie_, prefix, n_));
  out.context_source = out.candidates.empty() ? SuggestionSource::None : SuggestionSource::Main;
  return out;
}

MpcFallbackGenerator::MpcFallbackGenerator(std::string name, const PopularityTrie& main, const SuffixTrie& synth,
                                           std::size_t n)
    : name_(std::move(name)), main_(main), synth_(synth), n_(n) {}

GeneratorOutput MpcFallbackGenerator::generate(std::span<const std::string>, std::string_view prefix) const {
  GeneratorOutput out;
  auto result = lookup_with_fallback(main_, synth_, prefix, n_);
  out.candidates = texts_of(result.suggestions);
  out.context_source = result.source;
  return out;
}

NlgGenerator::NlgGenerator(std::string name, const Seq2SeqModel& model, const Tokenizer& tokenizer,
                           const PopularityTrie* main, const SuffixTrie* synth, ContextOptions context,
                           BeamConfig beam)
    : name_(std::move(name)),
      model_(model),
      tokenizer_(tokenizer),
      main_(main),
      synth_(synth),
      context_(context),
      beam_(beam) {
  beam_.validate();
}

std::vector<Completion> NlgGenerator::generate_scored(std::span<const std::string> session, std::string_view prefix,
                                                      AugmentedInput* input_out) const {
  auto input = make_augmented_input(session, prefix, main_, synth_, context_);
  const auto source = encode_source(tokenizer_, input, std::min<std::size_t>(kMaxSourceLength,
                                                                              static_cast<std::size_t>(model_.config().max_positions)));
  auto completions = beam_generate(model_, tokenizer_, source, prefix, beam_);
  if (input_out != nullptr) *input_out = std::move(input);
  return completions;
}

GeneratorOutput NlgGenerator::generate(std::span<const std::string> session, std::string_view prefix) const {
  AugmentedInput input;
  const auto completions = generate_scored(session, prefix, &input);
  GeneratorOutput out;
  for (const auto& c : completions) out.candidates.push_back(c.text);
  out.trie_context = std::move(input.trie_completions);
  out.context_source = input.source_tag;
  return out;
}

MetricSummary summarize(std::span<const RankedResult> results, std::size_t n) {
  MetricSummary s;
  s.count = results.size();
  if (results.empty()) return s;
  s.mrr = mrr(results);
  s.bleu = top1_bleu(results);
  s.bleu_rr = bleu_rr(results, n);
  return s;
}

std::string dataset_fingerprint(std::span<const QacExample> examples) {
  std::ostringstream out;
  write_examples_jsonl(out, examples);
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc32(out.str()));
  return buf;
}

EvalReport evaluate(const CompletionGenerator& generator, std::span<const QacExample> examples,
                    const EvalOptions& options, std::string split_name) {
  if (examples.empty()) throw PreconditionError("cannot evaluate an empty split");
  EvalReport report;
  report.generator = generator.name();
  report.split = std::move(split_name);
  report.dataset_fingerprint = dataset_fingerprint(examples);
  report.n = options.n;

  std::vector<RankedResult> results;
  results.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    RankedResult r;
    r.example_id = i;
    r.ground_truth = ex.target.text();
    r.bucket = ex.bucket;
    r.seen = ex.seen;
    if (!r.seen && options.seen_trie != nullptr) r.seen = is_seen(*options.seen_trie, ex.prefix);
    try {
      auto out = generator.generate(ex.session_queries, ex.prefix);
      if (out.candidates.size() > options.n) out.candidates.resize(options.n);
      r.candidates = std::move(out.candidates);
      r.trie_candidates = std::move(out.trie_context);
      r.context_source = out.context_source;
    } catch (const std::exception&) {
      ++report.failures;
    }
    results.push_back(std::move(r));
  }

  report.overall = summarize(results, options.n);
  for (auto bucket : kAllBuckets) {
    std::vector<RankedResult> subset;
    for (const auto& r : results)
      if (r.bucket == bucket) subset.push_back(r);
    report.buckets[bucket] = summarize(subset, options.n);
  }
  std::vector<RankedResult> seen, unseen;
  for (const auto& r : results) (r.seen.value_or(true) ? seen : unseen).push_back(r);
  report.seen = summarize(seen, options.n);
  report.unseen = summarize(unseen, options.n);

  if (generator.uses_trie_context()) {
    std::vector<RankedResult> with_main;
    for (const auto& r : results)
      if (r.context_source == SuggestionSource::Main) with_main.push_back(r);
    report.retention = retention_report(with_main.empty() ? std::span<const RankedResult>(results)
                                                          : std::span<const RankedResult>(with_main),
                                        options.retention_m, options.n);
  }
  if (options.keep_results) report.results = std::move(results);
  return report;
}

nlohmann::ordered_json to_json(const MetricSummary& s) {
  nlohmann::ordered_json j;
  j["count"] = s.count;
  j["mrr"] = s.mrr;
  j["bleu"] = s.bleu;
  j["bleu_rr"] = s.bleu_rr;
  return j;
}

nlohmann::ordered_json to_json(const RetentionReport& r) {
  nlohmann::ordered_json j;
  j["m"] = r.m;
  j["examples"] = r.examples;
  j["histogram_counts"] = r.histogram_counts;
  j["histogram_percent"] = r.histogram_percent;
  j["position_percent"] = r.position_percent;
  return j;
}

nlohmann::ordered_json to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["generator"] = report.generator;
  j["split"] = report.split;
  j["dataset_fingerprint"] = report.dataset_fingerprint;
  j["n"] = report.n;
  j["overall"] = to_json(report.overall);
  nlohmann::ordered_json buckets;
  for (const auto& [bucket, summary] : report.buckets) buckets[to_string(bucket)] = to_json(summary);
  j["buckets"] = buckets;
  j["seen"] = to_json(report.seen);
  j["unseen"] = to_json(report.unseen);
  j["failures"] = report.failures;
  if (report.retention) j["retention"] = to_json(*report.retention);
  return j;
}

std::string format_table(std::span<const EvalReport> reports) {
  std::ostringstream out;
  out << std::left << std::setw(24) << "generator" << std::right;
  for (const char* group : {"all", "seen", "unseen", "1-5", "6-10", "10+"})
    out << std::setw(12) << (std::string(group) + ".MRR");
  out << std::setw(12) << "BLEU" << std::setw(12) << "BLEU_RR" << '\n';
  for (const auto& r : reports) {
    out << std::left << std::setw(24) << r.generator << std::right;
    out << std::setw(12) << fixed(r.overall.mrr) << std::setw(12) << fixed(r.seen.mrr) << std::setw(12)
        << fixed(r.unseen.mrr);
    for (auto bucket : kAllBuckets) {
      const auto it = r.buckets.find(bucket);
      out << std::setw(12) << fixed(it == r.buckets.end() ? 0.0 : it->second.mrr);
    }
    out << std::setw(12) << fixed(r.overall.bleu) << std::setw(12) << fixed(r.overall.bleu_rr) << '\n';
  }
  return out.str();
}

std::string format_retention_table(const RetentionReport& report) {
  std::ostringstream out;
  out << "retained t:";
  for (std::size_t t = 0; t <= report.m; ++t)
    out << "  t=" << t << ' ' << fixed(report.histogram_percent[t], 1) << '%';
  out << "\nrank";
  for (std::size_t p = 1; p <= report.positions; ++p) out << std::setw(7) << ("pos" + std::to_string(p));
  out << std::setw(7) << "None" << '\n';
  for (std::size_t r = 0; r < report.position_percent.size(); ++r) {
    out << std::setw(4) << (r + 1);
    for (double v : report.position_percent[r]) out << std::setw(7) << fixed(v, 1);
    out << '\n';
  }
  return out.str();
}

RuntimeReport measure_runtime(const CompletionGenerator& generator, std::span<const QacExample> examples,
                              std::size_t runs) {
  if (examples.empty()) throw PreconditionError("cannot time an empty split");
  if (runs == 0) throw ConfigError("runtime measurement needs at least one run");
  using Clock = std::chrono::steady_clock;

  for (const auto& ex : examples) (void)generator.generate(ex.session_queries, ex.prefix);

  std::vector<double> per_record;
  std::vector<double> run_means;
  per_record.reserve(examples.size() * runs);
  for (std::size_t run = 0; run < runs; ++run) {
    double run_total = 0.0;
    for (const auto& ex : examples) {
      const auto start = Clock::now();
      (void)generator.generate(ex.session_queries, ex.prefix);
      const double ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
      per_record.push_back(ms);
      run_total += ms;
    }
    run_means.push_back(run_total / static_cast<double>(examples.size()));
  }

  RuntimeReport report;
  report.generator = generator.name();
  report.records = examples.size();
  report.runs = runs;
  double sum = 0.0;
  for (double v : per_record) sum += v;
  report.mean_ms = sum / static_cast<double>(per_record.size());
  std::sort(per_record.begin(), per_record.end());
  const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(per_record.size()))) - 1;
  report.p95_ms = per_record[std::min(idx, per_record.size() - 1)];
  double mean_of_means = 0.0;
  for (double v : run_means) mean_of_means += v;
  mean_of_means /= static_cast<double>(run_means.size());
  double var = 0.0;
  for (double v : run_means) var += (v - mean_of_means) * (v - mean_of_means);
  report.run_mean_stddev_ms = run_means.size() > 1 ? std::sqrt(var / static_cast<double>(run_means.size() - 1)) : 0.0;
  return report;
}

nlohmann::ordered_json to_json(const RuntimeReport& r) {
  nlohmann::ordered_json j;
  j["generator"] = r.generator;
  j["records"] = r.records;
  j["runs"] = r.runs;
  j["mean_ms"] = r.mean_ms;
  j["p95_ms"] = r.p95_ms;
  j["run_mean_stddev_ms"] = r.run_mean_stddev_ms;
  return j;
}

}  // namespace qac
