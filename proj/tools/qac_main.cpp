// qac: command line front end for the query auto-completion pipeline.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qac/corpus.hpp"
#include "qac/errors.hpp"
#include "qac/evaluation.hpp"
#include "qac/service.hpp"
#include "qac/synthetic.hpp"
#include "qac/trainer.hpp"
#include "qac/trie.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kMainTrieName = "main.trie";
constexpr const char* kSynthTrieName = "synth.trie";
constexpr const char* kModelName = "model.ckpt";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Explicit path, else $QAC_ARTIFACT_DIR/<default_name>. Names the artifact
/// when neither is available or the file is missing.
std::string resolve_artifact(const std::string& given, const char* default_name, const std::string& what) {
  std::string path = given;
  if (path.empty()) {
    const char* dir = std::getenv("QAC_ARTIFACT_DIR");
    if (dir == nullptr || *dir == '\0')
      throw UsageError("missing artifact: " + what + " (pass its flag or set QAC_ARTIFACT_DIR)");
    path = (fs::path(dir) / default_name).string();
  }
  if (!fs::exists(path)) throw UsageError("missing artifact: " + what + " at " + path);
  return path;
}

std::string model_card_path(const std::string& model_path) { return model_path + ".json"; }

qac::ContextOptions read_model_context(const std::string& model_path) {
  qac::ContextOptions context;
  std::ifstream in(model_card_path(model_path));
  if (!in) return context;
  const auto card = nlohmann::json::parse(in);
  const auto& c = card.at("context");
  context.m = c.at("m").get<std::size_t>();
  context.use_session = c.at("use_session").get<bool>();
  context.use_trie = c.at("use_trie").get<bool>();
  return context;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw qac::InputError("cannot write " + path.string());
  out << text;
}

std::vector<qac::QacExample> read_split(const std::string& dataset_dir, const std::string& split) {
  const auto path = fs::path(dataset_dir) / (split + ".jsonl");
  if (!fs::exists(path)) throw UsageError("missing artifact: " + split + " split at " + path.string());
  return qac::read_examples_jsonl(path.string());
}

qac::SplitFractions parse_fractions(const std::string& text) {
  std::vector<double> parts;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) parts.push_back(std::stod(item));
  if (parts.size() != 3) throw qac::ConfigError("--split-fractions expects three comma-separated numbers");
  const double sum = parts[0] + parts[1] + parts[2];
  if (std::abs(sum - 1.0) > 1e-9 || parts[0] < 0 || parts[1] < 0 || parts[2] < 0)
    throw qac::ConfigError("--split-fractions must be non-negative and sum to 1");
  return {parts[0], parts[1], parts[2]};
}

/// Fills options of the parsed subcommands that were not given on the command
/// line from a flat `key = value` file whose keys are long flag names. A
/// `[subcommand]` section limits its keys to that subcommand.
void apply_config(CLI::App& app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::ParseError& e) {
    throw UsageError(path + ": " + e.what());
  }
  std::vector<bool> used(items.size(), false);
  for (auto* sub : app.get_subcommands([](CLI::App*) { return true; })) {
    for (auto* opt : sub->get_options()) {
      if (opt->get_lnames().empty()) continue;
      for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& item = items[i];
        const bool scoped = item.parents.empty() || (item.parents.size() == 1 && item.parents[0] == sub->get_name());
        if (!scoped || item.name != opt->get_lnames().front()) continue;
        used[i] = true;
        if (!sub->parsed() || opt->count() > 0) continue;  // the command line wins
        for (const auto& value : item.inputs) opt->add_result(value);
        try {
          opt->run_callback();
        } catch (const CLI::ParseError& e) {
          throw UsageError(path + ": " + item.fullname() + ": " + e.what());
        }
      }
    }
  }
  for (std::size_t i = 0; i < items.size(); ++i)
    if (!used[i] && items[i].name != "++" && items[i].name != "--")
      throw UsageError(path + ": unknown key " + items[i].fullname());
}

// ---------------------------------------------------------------- commands

struct SynthArgs {
  std::string out_dir;
  qac::SyntheticCorpusConfig config;
};

int run_synth(const SynthArgs& a) {
  const auto corpus = qac::generate_synthetic_corpus(a.config);
  fs::create_directories(a.out_dir);
  std::ostringstream log;
  for (const auto& r : corpus.log) log << r.user_id << '\t' << r.query_text << '\t' << r.timestamp << '\n';
  write_text(fs::path(a.out_dir) / "log.tsv", log.str());
  std::ostringstream background;
  qac::write_frequency_tsv(background, corpus.background);
  write_text(fs::path(a.out_dir) / "background.tsv", background.str());
  std::cout << "log records: " << corpus.log.size() << "\nbackground queries: " << corpus.background.size() << '\n';
  return 0;
}

struct BuildTrieArgs {
  std::string input;
  std::string out;
  bool with_suffix = false;
  std::string suffix_out;
};

int run_build_trie(const BuildTrieArgs& a) {
  const auto table = qac::read_frequency_tsv(a.input);
  const auto main = qac::build_main_trie(table);
  qac::save_trie(main, a.out);
  std::cout << "main trie: " << main.completion_count() << " completions, " << main.node_count() << " nodes -> "
            << a.out << '\n';
  if (a.with_suffix) {
    const auto path = a.suffix_out.empty() ? a.out + ".synth" : a.suffix_out;
    const auto synth = qac::build_suffix_trie(table);
    qac::save_trie(synth, path);
    std::cout << "suffix trie: " << synth.completion_count() << " completions, " << synth.node_count()
              << " nodes, " << synth.insertions() << " insertions -> " << path << '\n';
  }
  return 0;
}

struct LookupArgs {
  std::string trie;
  std::string synth;
  std::vector<std::string> prefixes;
  std::size_t m = 3;
};

// One line per completion: source, rank, text, popularity.
int run_lookup(const LookupArgs& a) {
  const auto main = qac::load_trie(a.trie);
  const auto synth = a.synth.empty() ? qac::SuffixTrie() : qac::load_trie(a.synth);
  for (const auto& raw : a.prefixes) {
    const auto prefix = qac::normalize_prefix(raw);
    if (prefix.empty()) throw qac::InputError("empty prefix");
    const auto r = qac::lookup_with_fallback(main, synth, prefix, a.m);
    std::cout << prefix << '\t' << qac::to_string(r.source) << '\n';
    for (const auto& s : r.suggestions) std::cout << "  " << s.rank << '\t' << s.text << '\t' << s.popularity << '\n';
  }
  return 0;
}

struct BuildDatasetArgs {
  std::string log;
  std::string out_dir;
  double idle_gap_min = 30.0;
  double lambda = qac::kDefaultPrefixLambda;
  std::uint64_t seed = 42;
  std::string fractions = "0.98,0.01,0.01";
  std::string main_trie;
};

int run_build_dataset(const BuildDatasetArgs& a) {
  if (a.lambda <= 0.0) throw qac::ConfigError("--lambda must be positive");
  if (a.idle_gap_min <= 0.0) throw qac::ConfigError("--idle-gap-min must be positive");
  const auto fractions = parse_fractions(a.fractions);
  const auto records = qac::read_log_tsv(a.log);
  const auto entries = qac::prepare_log(records);
  const auto sessions = qac::segment_sessions(entries, std::llround(a.idle_gap_min * 60.0));
  auto splits = qac::temporal_split(qac::build_examples(sessions, a.lambda, a.seed), fractions);

  if (!a.main_trie.empty()) {
    const auto trie = qac::load_trie(a.main_trie);
    for (auto* split : {&splits.train, &splits.validation, &splits.test})
      for (auto& ex : split->examples) ex.seen = qac::is_seen(trie, ex.prefix);
  }

  fs::create_directories(a.out_dir);
  for (const auto* split : {&splits.train, &splits.validation, &splits.test}) {
    std::ostringstream out;
    qac::write_examples_jsonl(out, split->examples);
    write_text(fs::path(a.out_dir) / (split->name + ".jsonl"), out.str());
  }
  // Query counts up to the end of the training period back the MPC_Train trie.
  std::optional<std::int64_t> until;
  if (!splits.train.examples.empty()) until = splits.train.examples.back().timestamp;
  std::ostringstream counts;
  qac::write_frequency_tsv(counts, until ? qac::count_queries(entries, until) : qac::FrequencyTable{});
  write_text(fs::path(a.out_dir) / "train_queries.tsv", counts.str());

  const auto stats = qac::format_split_statistics(splits);
  write_text(fs::path(a.out_dir) / "stats.txt", stats);
  std::cout << "records: " << records.size() << "  normalized: " << entries.size()
            << "  sessions: " << sessions.size() << '\n'
            << stats;
  return 0;
}

struct TrainArgs {
  std::string dataset_dir;
  std::string out;
  std::string main_trie;
  std::string synth_trie;
  std::string loss_curve;
  bool no_session = false;
  bool no_trie_context = false;
  std::size_t m = 3;
  qac::TrainingConfig training;
  qac::ModelConfig model;
};

int run_train(const TrainArgs& a) {
  if (a.m != 1 && a.m != 3 && a.m != 5 && a.m != 8) throw qac::ConfigError("--m must be one of 1, 3, 5, 8");
  a.training.validate();
  qac::ContextOptions context{a.m, !a.no_session, !a.no_trie_context};

  std::optional<qac::PopularityTrie> main, synth;
  if (context.use_trie) {
    main = qac::load_trie(resolve_artifact(a.main_trie, kMainTrieName, "main trie"));
    synth = qac::load_trie(resolve_artifact(a.synth_trie, kSynthTrieName, "suffix trie"));
  }
  const auto train_examples = read_split(a.dataset_dir, "train");
  const auto val_examples = read_split(a.dataset_dir, "validation");
  if (train_examples.empty() || val_examples.empty())
    throw qac::PreconditionError("training needs non-empty train and validation splits");

  const auto tokenizer = qac::Tokenizer::default_tokenizer();
  auto model_config = a.model;
  model_config.vocab_size = tokenizer.vocab_size();
  const auto* main_ptr = main ? &*main : nullptr;
  const auto* synth_ptr = synth ? &*synth : nullptr;
  const auto train_pairs = qac::make_training_pairs(train_examples, tokenizer, main_ptr, synth_ptr, context,
                                                    std::min<std::size_t>(qac::kMaxSourceLength, model_config.max_positions));
  const auto val_pairs = qac::make_training_pairs(val_examples, tokenizer, main_ptr, synth_ptr, context,
                                                  std::min<std::size_t>(qac::kMaxSourceLength, model_config.max_positions));

  qac::Seq2SeqModel model(model_config, a.training.seed);
  std::ostringstream curve;
  curve << "epoch\ttrain_loss\tvalidation_loss\n";
  qac::TrainingRun run;
  try {
    run = qac::train(model, train_pairs, val_pairs, a.training, [&](const qac::EpochRecord& r) {
      std::cout << "epoch " << r.epoch << "  train " << std::setprecision(6) << r.train_loss << "  validation "
                << r.validation_loss << std::endl;
    });
  } catch (const qac::NumericFault& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return 3;
  }
  curve << std::setprecision(17) << "0\t" << run.initial_train_loss << '\t' << run.initial_validation_loss << '\n';
  for (const auto& r : run.epochs) curve << r.epoch << '\t' << r.train_loss << '\t' << r.validation_loss << '\n';

  qac::save_checkpoint(a.out, model, tokenizer);
  write_text(a.loss_curve.empty() ? a.out + ".loss.tsv" : a.loss_curve, curve.str());
  json card;
  card["context"] = {{"m", context.m}, {"use_session", context.use_session}, {"use_trie", context.use_trie}};
  card["training"] = {{"learning_rate", a.training.learning_rate}, {"batch_size", a.training.batch_size},
                      {"epochs", a.training.epochs},               {"patience", a.training.patience},
                      {"seed", a.training.seed},                   {"max_grad_norm", a.training.max_grad_norm}};
  card["model"] = {{"vocab_size", model_config.vocab_size}, {"d_model", model_config.d_model},
                   {"encoder_layers", model_config.encoder_layers}, {"decoder_layers", model_config.decoder_layers},
                   {"heads", model_config.heads}, {"ff_width", model_config.ff_width},
                   {"dropout", model_config.dropout}};
  card["dataset_size"] = run.dataset_size;
  card["best_epoch"] = run.best_epoch;
  card["best_validation_loss"] = run.best_validation_loss;
  card["stopped_early"] = run.stopped_early;
  write_text(model_card_path(a.out), card.dump(2) + "\n");
  std::cout << "best epoch " << run.best_epoch << "  validation " << run.best_validation_loss << "  -> " << a.out
            << '\n';
  return 0;
}

struct BeamArgs {
  qac::BeamConfig beam;
};

struct EvaluateArgs {
  std::string dataset_dir;
  std::vector<std::string> generators;
  std::string split = "test";
  std::string main_trie;
  std::string synth_trie;
  std::string train_trie;
  std::string format = "table";
  std::string out;
  bool runtime = false;
  std::size_t runs = 5;
  std::size_t retention_m = 3;
  BeamArgs beam;
};

int run_evaluate(const EvaluateArgs& a) {
  if (a.generators.empty()) throw UsageError("evaluate needs at least one --generator");
  const auto examples = read_split(a.dataset_dir, a.split);

  // Artifacts are loaded lazily so that e.g. mpc_train needs no model.
  std::optional<qac::PopularityTrie> main, synth, train_trie;
  auto need_main = [&]() -> const qac::PopularityTrie& {
    if (!main) main = qac::load_trie(resolve_artifact(a.main_trie, kMainTrieName, "main trie"));
    return *main;
  };
  auto need_synth = [&]() -> const qac::SuffixTrie& {
    if (!synth) synth = qac::load_trie(resolve_artifact(a.synth_trie, kSynthTrieName, "suffix trie"));
    return *synth;
  };
  auto need_train = [&]() -> const qac::PopularityTrie& {
    if (!train_trie) {
      if (!a.train_trie.empty()) {
        train_trie = qac::load_trie(resolve_artifact(a.train_trie, "", "training trie"));
      } else {
        const auto path = fs::path(a.dataset_dir) / "train_queries.tsv";
        if (!fs::exists(path)) throw UsageError("missing artifact: training query counts at " + path.string());
        train_trie = qac::build_main_trie(qac::read_frequency_tsv(path.string()));
      }
    }
    return *train_trie;
  };

  std::vector<qac::Checkpoint> checkpoints;
  checkpoints.reserve(a.generators.size());
  std::vector<std::unique_ptr<qac::CompletionGenerator>> generators;
  for (const auto& spec : a.generators) {
    if (spec == "mpc_train") {
      generators.push_back(std::make_unique<qac::MpcGenerator>(spec, need_train()));
    } else if (spec == "mpc_main") {
      generators.push_back(std::make_unique<qac::MpcGenerator>(spec, need_main()));
    } else if (spec == "mpc_main_synth") {
      generators.push_back(std::make_unique<qac::MpcFallbackGenerator>(spec, need_main(), need_synth()));
    } else {
      const auto eq = spec.find('=');
      const auto name = spec.substr(0, eq);
      if (eq == std::string::npos && name != "trie_nlg")
        throw UsageError("unknown generator '" + spec + "' (mpc_train, mpc_main, mpc_main_synth, trie_nlg, NAME=MODEL)");
      const auto model_path =
          resolve_artifact(eq == std::string::npos ? "" : spec.substr(eq + 1), kModelName, "model checkpoint for " + name);
      checkpoints.push_back(qac::load_checkpoint(model_path));
      const auto context = read_model_context(model_path);
      const auto& cp = checkpoints.back();
      generators.push_back(std::make_unique<qac::NlgGenerator>(
          name, cp.model, cp.tokenizer, context.use_trie ? &need_main() : nullptr,
          context.use_trie ? &need_synth() : nullptr, context, a.beam.beam));
    }
  }

  qac::EvalOptions options;
  options.n = a.beam.beam.beam_size;
  options.retention_m = a.retention_m;
  options.keep_results = false;
  if (main || !a.main_trie.empty() || std::getenv("QAC_ARTIFACT_DIR") != nullptr) {
    try {
      options.seen_trie = &need_main();
    } catch (const UsageError&) {
      // Seen/unseen labels then come only from the dataset.
    }
  }

  std::vector<qac::EvalReport> reports;
  std::vector<qac::RuntimeReport> runtimes;
  for (const auto& g : generators) {
    reports.push_back(qac::evaluate(*g, examples, options, a.split));
    if (a.runtime) runtimes.push_back(qac::measure_runtime(*g, examples, a.runs));
  }

  std::ostringstream out;
  if (a.format == "json") {
    for (const auto& r : reports) out << qac::to_json(r).dump() << '\n';
    for (const auto& r : runtimes) out << qac::to_json(r).dump() << '\n';
  } else {
    out << qac::format_table(reports);
    for (const auto& r : reports) {
      if (!r.retention) continue;
      out << "\nretention of trie context for " << r.generator << " (" << r.retention->examples << " examples)\n"
          << qac::format_retention_table(*r.retention);
    }
    for (const auto& r : runtimes) {
      out << "\nruntime " << r.generator << ": mean " << std::fixed << std::setprecision(3) << r.mean_ms
          << " ms/record, p95 " << r.p95_ms << " ms, run stddev " << r.run_mean_stddev_ms << " ms\n";
    }
  }
  if (a.out.empty()) {
    std::cout << out.str();
  } else {
    write_text(a.out, out.str());
  }
  return 0;
}

struct ServingArgs {
  std::string main_trie;
  std::string synth_trie;
  std::string model;
  BeamArgs beam;
  std::size_t m = 0;  // 0: take the model card's value
  double idle_minutes = 30.0;
  std::size_t max_session_queries = 20;
};

std::unique_ptr<qac::SuggestService> load_service(const ServingArgs& a) {
  qac::ServiceArtifacts artifacts;
  artifacts.main_path = resolve_artifact(a.main_trie, kMainTrieName, "main trie");
  artifacts.synth_path = resolve_artifact(a.synth_trie, kSynthTrieName, "suffix trie");
  artifacts.model_path = resolve_artifact(a.model, kModelName, "model checkpoint");
  artifacts.main = qac::load_trie(artifacts.main_path);
  artifacts.synth = qac::load_trie(artifacts.synth_path);
  artifacts.checkpoint = qac::load_checkpoint(artifacts.model_path);

  qac::ServiceOptions options;
  options.beam = a.beam.beam;
  options.context = read_model_context(artifacts.model_path);
  if (a.m > 0) options.context.m = a.m;
  options.sessions.idle_timeout = std::chrono::milliseconds(std::llround(a.idle_minutes * 60'000.0));
  options.sessions.max_queries = a.max_session_queries;
  auto service = std::make_unique<qac::SuggestService>(options);
  service->load(std::move(artifacts));
  return service;
}

int run_suggest(const ServingArgs& a, const std::string& session_id) {
  auto service = load_service(a);
  std::cout << "type a prefix for suggestions, ':submit <query>' to add a query to the session, 'exit' to quit\n";
  std::string line;
  while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
    if (line == "exit") break;
    try {
      if (line.rfind(":submit ", 0) == 0) {
        const auto length = service->submit(session_id, line.substr(8));
        std::cout << "session now holds " << length << " queries\n";
        continue;
      }
      const auto response = service->suggest(session_id, line);
      std::cout << "context (" << qac::to_string(response.context_source) << (response.seen ? ", seen" : ", unseen")
                << "):";
      for (const auto& c : response.trie_candidates) std::cout << " [" << c << "]";
      std::cout << '\n';
      for (std::size_t i = 0; i < response.suggestions.size(); ++i) {
        const auto& s = response.suggestions[i];
        std::cout << std::setw(3) << (i + 1) << ". " << s.text << "  (" << qac::to_string(s.source) << ", "
                  << std::fixed << std::setprecision(3) << s.score << ")\n";
      }
    } catch (const qac::InputError& e) {
      std::cout << "error: " << e.what() << '\n';
    }
  }
  return 0;
}

std::atomic<qac::HttpFrontend*> g_frontend{nullptr};

extern "C" void handle_stop_signal(int) {
  if (auto* f = g_frontend.load()) f->stop();
}

int run_serve(const ServingArgs& a, const std::string& host, int port) {
  auto service = load_service(a);
  qac::HttpFrontend frontend(*service);
  const int bound = frontend.bind(host, port);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  g_frontend = &frontend;
  std::signal(SIGINT, handle_stop_signal);
  std::signal(SIGTERM, handle_stop_signal);
  std::cout << "serving on http://" << host << ":" << bound << std::endl;
  frontend.listen_after_bind();
  g_frontend = nullptr;
  return 0;
}

void add_beam_options(CLI::App* cmd, BeamArgs& b) {
  cmd->add_option("--beam-size", b.beam.beam_size, "completions per request (N)")->capture_default_str();
  cmd->add_option("--max-len", b.beam.max_len, "generated tokens after the prefix")->capture_default_str();
  cmd->add_option("--repetition-penalty", b.beam.repetition_penalty)->capture_default_str();
}

void add_serving_options(CLI::App* cmd, ServingArgs& s) {
  cmd->add_option("--main-trie", s.main_trie);
  cmd->add_option("--synth-trie", s.synth_trie);
  cmd->add_option("--model", s.model);
  cmd->add_option("--m", s.m, "trie completions in the input (default: from the model card)");
  cmd->add_option("--idle-minutes", s.idle_minutes)->capture_default_str();
  cmd->add_option("--max-session-queries", s.max_session_queries)->capture_default_str();
  add_beam_options(cmd, s.beam);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query auto-completion: tries, datasets, seq2seq training, evaluation and serving"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "flat key = value file; keys are long flag names");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth-corpus", "write a synthetic topic-structured log and background table");
  synth_cmd->add_option("out_dir", synth.out_dir)->required();
  synth_cmd->add_option("--sessions", synth.config.sessions)->capture_default_str();
  synth_cmd->add_option("--users", synth.config.users)->capture_default_str();
  synth_cmd->add_option("--entities", synth.config.entities)->capture_default_str();
  synth_cmd->add_option("--topics-per-entity", synth.config.topics_per_entity)->capture_default_str();
  synth_cmd->add_option("--zipf-exponent", synth.config.zipf_exponent)->capture_default_str();
  synth_cmd->add_option("--min-context", synth.config.min_context)->capture_default_str();
  synth_cmd->add_option("--max-context", synth.config.max_context)->capture_default_str();
  synth_cmd->add_option("--background-scale", synth.config.background_scale)->capture_default_str();
  synth_cmd->add_option("--novel-rate", synth.config.novel_rate)->capture_default_str();
  synth_cmd->add_option("--seed", synth.config.seed)->capture_default_str();

  BuildTrieArgs trie;
  auto* trie_cmd = app.add_subcommand("build-trie", "build the popularity trie from a query<TAB>frequency file");
  trie_cmd->add_option("frequencies", trie.input)->required();
  trie_cmd->add_option("out", trie.out)->required();
  trie_cmd->add_flag("--with-suffix-trie", trie.with_suffix, "also build the suffix n-gram trie");
  trie_cmd->add_option("--suffix-out", trie.suffix_out, "suffix trie path (default: <out>.synth)");

  LookupArgs lookup;
  auto* lookup_cmd = app.add_subcommand("lookup", "most popular completions of prefixes, with suffix-trie fallback");
  lookup_cmd->add_option("trie", lookup.trie)->required();
  lookup_cmd->add_option("prefixes", lookup.prefixes)->required();
  lookup_cmd->add_option("--synth-trie", lookup.synth);
  lookup_cmd->add_option("--m", lookup.m)->capture_default_str();

  BuildDatasetArgs dataset;
  auto* dataset_cmd = app.add_subcommand("build-dataset", "sessionize a log and write train/validation/test splits");
  dataset_cmd->add_option("log", dataset.log)->required();
  dataset_cmd->add_option("out_dir", dataset.out_dir)->required();
  dataset_cmd->add_option("--idle-gap-min", dataset.idle_gap_min)->capture_default_str();
  dataset_cmd->add_option("--lambda", dataset.lambda, "prefix length decay")->capture_default_str();
  dataset_cmd->add_option("--seed", dataset.seed)->capture_default_str();
  dataset_cmd->add_option("--split-fractions", dataset.fractions)->capture_default_str();
  dataset_cmd->add_option("--main-trie", dataset.main_trie, "label seen/unseen prefixes against this trie");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train the seq2seq completion model");
  train_cmd->add_option("dataset_dir", tr.dataset_dir)->required();
  train_cmd->add_option("--out", tr.out)->required();
  train_cmd->add_option("--main-trie", tr.main_trie);
  train_cmd->add_option("--synth-trie", tr.synth_trie);
  train_cmd->add_option("--loss-curve", tr.loss_curve, "default: <out>.loss.tsv");
  train_cmd->add_flag("--no-session", tr.no_session);
  train_cmd->add_flag("--no-trie-context", tr.no_trie_context);
  train_cmd->add_option("--m", tr.m, "trie completions in the input")->capture_default_str();
  train_cmd->add_option("--epochs", tr.training.epochs)->capture_default_str();
  train_cmd->add_option("--learning-rate", tr.training.learning_rate)->capture_default_str();
  train_cmd->add_option("--batch-size", tr.training.batch_size)->capture_default_str();
  train_cmd->add_option("--patience", tr.training.patience)->capture_default_str();
  train_cmd->add_option("--max-grad-norm", tr.training.max_grad_norm)->capture_default_str();
  train_cmd->add_option("--seed", tr.training.seed)->capture_default_str();
  train_cmd->add_option("--d-model", tr.model.d_model)->capture_default_str();
  train_cmd->add_option("--encoder-layers", tr.model.encoder_layers)->capture_default_str();
  train_cmd->add_option("--decoder-layers", tr.model.decoder_layers)->capture_default_str();
  train_cmd->add_option("--heads", tr.model.heads)->capture_default_str();
  train_cmd->add_option("--ff-width", tr.model.ff_width)->capture_default_str();
  train_cmd->add_option("--dropout", tr.model.dropout)->capture_default_str();

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "score generators on a dataset split");
  eval_cmd->add_option("dataset_dir", ev.dataset_dir)->required();
  eval_cmd->add_option("--generator", ev.generators,
                       "mpc_train | mpc_main | mpc_main_synth | trie_nlg | NAME=MODEL_PATH (repeatable)");
  eval_cmd->add_option("--split", ev.split)->check(CLI::IsMember({"train", "validation", "test"}))->capture_default_str();
  eval_cmd->add_option("--main-trie", ev.main_trie);
  eval_cmd->add_option("--synth-trie", ev.synth_trie);
  eval_cmd->add_option("--train-trie", ev.train_trie, "default: built from <dataset_dir>/train_queries.tsv");
  eval_cmd->add_option("--report-format", ev.format)->check(CLI::IsMember({"json", "table"}))->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "write the report here instead of stdout");
  eval_cmd->add_flag("--runtime", ev.runtime, "also time every generator");
  eval_cmd->add_option("--runs", ev.runs, "timed passes for --runtime")->capture_default_str();
  eval_cmd->add_option("--retention-m", ev.retention_m)->capture_default_str();
  add_beam_options(eval_cmd, ev.beam);

  ServingArgs serving;
  std::string session_id = "local";
  auto* suggest_cmd = app.add_subcommand("suggest", "interactive suggestions from standard input");
  add_serving_options(suggest_cmd, serving);
  suggest_cmd->add_option("--session-id", session_id)->capture_default_str();

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP suggestion service");
  add_serving_options(serve_cmd, serving);
  serve_cmd->add_option("--host", host)->capture_default_str();
  serve_cmd->add_option("--port", port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (!config_path.empty()) {
      apply_config(app, config_path);
    }
    if (synth_cmd->parsed()) return run_synth(synth);
    if (trie_cmd->parsed()) return run_build_trie(trie);
    if (lookup_cmd->parsed()) return run_lookup(lookup);
    if (dataset_cmd->parsed()) return run_build_dataset(dataset);
    if (train_cmd->parsed()) return run_train(tr);
    if (eval_cmd->parsed()) return run_evaluate(ev);
    if (suggest_cmd->parsed()) return run_suggest(serving, session_id);
    if (serve_cmd->parsed()) return run_serve(serving, host, port);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
