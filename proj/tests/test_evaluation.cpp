#include <doctest.h>

#include <algorithm>
#include <stdexcept>

#include "qac/errors.hpp"
#include "qac/evaluation.hpp"

using namespace qac;

namespace {

QacExample example(std::string prefix, std::string target, std::vector<std::string> session = {"weather"}) {
  QacExample e;
  e.session_queries = std::move(session);
  e.bucket = bucket_of(prefix);
  e.prefix = std::move(prefix);
  e.target = Query::from_normalized(target);
  return e;
}

class ThrowingGenerator : public CompletionGenerator {
 public:
  std::string name() const override { return "broken"; }
  GeneratorOutput generate(std::span<const std::string>, std::string_view prefix) const override {
    if (prefix.size() > 3) throw std::runtime_error("boom");
    return {{std::string(prefix)}, {}, SuggestionSource::None};
  }
};

// Returns the trie context followed by a fixed tail, and claims to use it.
class CopyingGenerator : public CompletionGenerator {
 public:
  explicit CopyingGenerator(const PopularityTrie& trie) : trie_(trie) {}
  std::string name() const override { return "copying"; }
  bool uses_trie_context() const override { return true; }
  GeneratorOutput generate(std::span<const std::string>, std::string_view prefix) const override {
    GeneratorOutput out;
    for (const auto& s : mpc_lookup(trie_, std::string(prefix), 3)) out.trie_context.push_back(s.text);
    out.context_source = out.trie_context.empty() ? SuggestionSource::None : SuggestionSource::Main;
    out.candidates = out.trie_context;
    std::reverse(out.candidates.begin(), out.candidates.end());
    out.candidates.push_back(std::string(prefix) + " tail");
    return out;
  }

 private:
  const PopularityTrie& trie_;
};

const FrequencyTable kTable = {{"google", 10}, {"google maps", 6}, {"good news", 5}, {"weather today", 4},
                               {"weather tomorrow", 3}, {"kindle e-reader price", 2}, {"new york times", 2}};

std::vector<QacExample> fixture_examples() {
  return {example("go", "google"),           example("goo", "google maps"),
          example("weather t", "weather tomorrow"), example("kindle e-read", "kindle e-reader price"),
          example("new york ti", "new york times"), example("zebra", "zebra crossing"),
          example("g", "good news")};
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("MPC on its own table") {
  const auto trie = build_main_trie(kTable);
  MpcGenerator mpc("mpc_main", trie);
  const auto examples = fixture_examples();
  const auto report = evaluate(mpc, examples, {8, &trie});
  CHECK(report.generator == "mpc_main");
  CHECK(report.overall.count == examples.size());
  // Ranks: 1, 2, 2, 1, 1, miss, 3.
  CHECK(report.overall.mrr == doctest::Approx((1 + 0.5 + 0.5 + 1 + 1 + 0 + 1.0 / 3) / 7.0).epsilon(1e-12));
  CHECK(report.unseen.count == 1);
  CHECK(report.seen.count == 6);
  CHECK(report.unseen.mrr == 0.0);
  CHECK_FALSE(report.retention.has_value());
  CHECK(report.failures == 0);
}

TEST_CASE("unique prefixes give MRR 1") {
  const auto trie = build_main_trie(kTable);
  MpcGenerator mpc("mpc", trie, 8);
  const std::vector<QacExample> exs = {example("goog", "google"), example("good", "good news"),
                                       example("weather to", "weather today"), example("n", "new york times")};
  const auto r = evaluate(mpc, exs);
  CHECK(r.overall.mrr == 1.0);
  CHECK(r.overall.bleu == 1.0);
  CHECK(r.overall.bleu_rr < 1.0);
}

TEST_CASE("buckets and seen flags partition the split") {
  const auto trie = build_main_trie(kTable);
  const auto synth = build_suffix_trie(kTable);
  MpcFallbackGenerator gen("mpc_main_synth", trie, synth);
  auto examples = fixture_examples();
  examples[0].seen = false;  // an explicit flag wins over the trie
  const auto r = evaluate(gen, examples, {8, &trie});
  std::size_t total = 0;
  for (auto b : kAllBuckets) total += r.buckets.at(b).count;
  CHECK(total == r.overall.count);
  CHECK(r.buckets.at(Bucket::B1_5).count == 4);
  CHECK(r.buckets.at(Bucket::B6_10).count == 1);
  CHECK(r.buckets.at(Bucket::B10PLUS).count == 2);
  CHECK(r.seen.count + r.unseen.count == r.overall.count);
  CHECK(r.unseen.count == 2);
}

TEST_CASE("generator failures are counted and scored as misses") {
  ThrowingGenerator gen;
  const auto examples = fixture_examples();
  const auto r = evaluate(gen, examples);
  CHECK(r.failures == 4);
  CHECK(r.overall.count == examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i)
    CHECK(r.results[i].candidates.empty() == (examples[i].prefix.size() > 3));
}

TEST_CASE("empty splits are rejected") {
  ThrowingGenerator gen;
  CHECK_THROWS_AS(evaluate(gen, std::vector<QacExample>{}), PreconditionError);
  CHECK_THROWS_AS(measure_runtime(gen, std::vector<QacExample>{}), PreconditionError);
}

TEST_CASE("retention is reported for context-using generators") {
  const auto trie = build_main_trie(kTable);
  CopyingGenerator gen(trie);
  const auto r = evaluate(gen, fixture_examples(), {8, &trie, 3});
  REQUIRE(r.retention.has_value());
  const auto& ret = *r.retention;
  CHECK(ret.examples == 6);  // the zebra prefix has no Main context
  double sum = 0.0;
  for (double p : ret.histogram_percent) sum += p;
  CHECK(sum == doctest::Approx(100.0));
  for (const auto& row : ret.position_percent) {
    double s = 0.0;
    for (double p : row) s += p;
    CHECK(s == doctest::Approx(100.0).epsilon(1e-9));
  }
}

TEST_CASE("reports are deterministic and serialize") {
  const auto trie = build_main_trie(kTable);
  MpcGenerator mpc("mpc_main", trie);
  const auto examples = fixture_examples();
  const auto a = to_json(evaluate(mpc, examples, {8, &trie})).dump();
  const auto b = to_json(evaluate(mpc, examples, {8, &trie})).dump();
  CHECK(a == b);
  const auto j = nlohmann::json::parse(a);
  CHECK(j["generator"] == "mpc_main");
  CHECK(j["overall"]["count"] == examples.size());
  CHECK(j.contains("buckets"));

  const auto fp = dataset_fingerprint(examples);
  CHECK(fp.size() == 8);
  CHECK(fp == dataset_fingerprint(examples));
  auto changed = examples;
  changed[0].prefix = "goo";
  CHECK(fp != dataset_fingerprint(changed));

  const std::vector<EvalReport> both = {evaluate(mpc, examples), evaluate(ThrowingGenerator(), examples)};
  const auto table = format_table(both);
  CHECK(table.find("mpc_main") != std::string::npos);
  CHECK(table.find("broken") != std::string::npos);
}

TEST_CASE("runtime measurement") {
  const auto trie = build_main_trie(kTable);
  MpcGenerator mpc("mpc_main", trie);
  const auto r = measure_runtime(mpc, fixture_examples(), 3);
  CHECK(r.records == 7);
  CHECK(r.runs == 3);
  CHECK(r.mean_ms >= 0.0);
  CHECK(r.p95_ms >= 0.0);
  CHECK(to_json(r)["generator"] == "mpc_main");
}

TEST_CASE("an NLG generator keeps prefixes and reports its context") {
  const auto tok = Tokenizer::default_tokenizer();
  ModelConfig mc;
  mc.vocab_size = tok.vocab_size();
  mc.d_model = 16;
  mc.encoder_layers = 1;
  mc.decoder_layers = 1;
  mc.ff_width = 32;
  Seq2SeqModel model(mc, 3);
  const auto trie = build_main_trie(kTable);
  const auto synth = build_suffix_trie(kTable);
  NlgGenerator gen("trie_nlg", model, tok, &trie, &synth, {}, {8, 8, 0.6});
  CHECK(gen.uses_trie_context());
  const std::vector<std::string> session = {"weather today"};
  const auto out = gen.generate(session, "go");
  CHECK(out.context_source == SuggestionSource::Main);
  CHECK(out.trie_context == std::vector<std::string>{"google", "google maps", "good news"});
  CHECK(out.candidates.size() == 8);
  for (const auto& c : out.candidates) CHECK(c.rfind("go", 0) == 0);

  NlgGenerator bare("nlg", model, tok, &trie, &synth, {3, true, false}, {8, 8, 0.6});
  CHECK_FALSE(bare.uses_trie_context());
  CHECK(bare.generate(session, "go").trie_context.empty());
}

}  // TEST_SUITE
