#include "qac/service.hpp"

#include <algorithm>
#include <cctype>

#include <httplib.h>

#include "qac/corpus.hpp"
#include "qac/errors.hpp"

namespace qac {

const char* to_string(ServedSource source) {
  switch (source) {
    case ServedSource::Main: return "Main";
    case ServedSource::Synth: return "Synth";
    case ServedSource::Model: return "Model";
  }
  return "Model";
}

nlohmann::ordered_json to_json(const SuggestResponse& response) {
  nlohmann::ordered_json j;
  auto suggestions = nlohmann::ordered_json::array();
  for (const auto& s : response.suggestions)
    suggestions.push_back({{"text", s.text}, {"source", to_string(s.source)}, {"score", s.score}});
  j["suggestions"] = std::move(suggestions);
  j["trie_candidates"] = response.trie_candidates;
  j["context_source"] = to_string(response.context_source);
  j["seen"] = response.seen;
  j["latency_ms"] = response.latency_ms;
  j["session_length"] = response.session_length;
  return j;
}

std::string normalize_prefix(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (pending_space) out.push_back(' ');
  return out;
}

struct SuggestService::Loaded {
  explicit Loaded(ServiceArtifacts a, const ServiceOptions& options)
      : artifacts(std::move(a)),
        generator("trie_nlg", artifacts.checkpoint->model, artifacts.checkpoint->tokenizer, &artifacts.main,
                  &artifacts.synth, options.context, options.beam) {}

  ServiceArtifacts artifacts;
  NlgGenerator generator;
};

SuggestService::SuggestService(ServiceOptions options, MillisClock clock)
    : options_(options), store_(options.sessions, std::move(clock)) {
  options_.beam.validate();
}

void SuggestService::load(ServiceArtifacts artifacts) {
  if (!artifacts.checkpoint) throw PreconditionError("service needs a model checkpoint");
  auto loaded = std::make_shared<const Loaded>(std::move(artifacts), options_);
  std::lock_guard lock(loaded_mutex_);
  loaded_ = std::move(loaded);
}

std::shared_ptr<const SuggestService::Loaded> SuggestService::current() const {
  std::lock_guard lock(loaded_mutex_);
  return loaded_;
}

bool SuggestService::ready() const { return current() != nullptr; }

SuggestResponse SuggestService::suggest(const std::string& session_id, std::string_view raw_prefix) const {
  const auto start = std::chrono::steady_clock::now();
  const auto prefix = normalize_prefix(raw_prefix);
  if (prefix.empty()) throw InputError("prefix must not be empty");
  const auto loaded = current();
  if (!loaded) throw ServiceUnavailable("model not loaded");

  const auto session = session_id.empty() ? std::vector<std::string>{} : store_.queries(session_id);
  AugmentedInput input;
  const auto completions = loaded->generator.generate_scored(session, prefix, &input);

  SuggestResponse response;
  response.session_length = session.size();
  response.trie_candidates = input.trie_completions;
  response.context_source = input.source_tag;
  response.seen = is_seen(loaded->artifacts.main, prefix);
  for (const auto& c : completions) {
    ServedSuggestion s;
    s.text = c.text;
    s.score = c.score;
    const bool copied = std::find(input.trie_completions.begin(), input.trie_completions.end(), c.text) !=
                        input.trie_completions.end();
    if (copied && input.source_tag == SuggestionSource::Main) s.source = ServedSource::Main;
    else if (copied && input.source_tag == SuggestionSource::Synth) s.source = ServedSource::Synth;
    response.suggestions.push_back(std::move(s));
  }
  response.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return response;
}

std::size_t SuggestService::submit(const std::string& session_id, std::string_view query) {
  if (session_id.empty()) throw InputError("session_id is required");
  const auto normalized = normalize_query(query);
  if (!normalized) throw InputError(std::string("query rejected: ") + to_string(normalized.reason));
  return store_.append(session_id, normalized.query->text());
}

nlohmann::ordered_json SuggestService::health() const {
  nlohmann::ordered_json j;
  const auto loaded = current();
  if (!loaded) {
    j["status"] = "loading";
    return j;
  }
  const auto& a = loaded->artifacts;
  j["status"] = "ok";
  j["main_trie"] = {{"path", a.main_path}, {"completions", a.main.completion_count()}, {"nodes", a.main.node_count()}};
  j["synth_trie"] = {{"path", a.synth_path}, {"completions", a.synth.completion_count()}, {"nodes", a.synth.node_count()}};
  j["model"] = {{"path", a.model_path},
                {"parameters", parameter_count(a.checkpoint->model.weights())},
                {"vocab_size", a.checkpoint->model.config().vocab_size}};
  j["sessions"] = store_.size();
  j["latency_budget_ms"] = options_.latency_budget_ms;
  return j;
}

namespace {

void reply(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  reply(res, status, nlohmann::ordered_json{{"error", message}});
}

std::optional<nlohmann::json> parse_body(const httplib::Request& req, httplib::Response& res) {
  auto body = nlohmann::json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    reply_error(res, 400, "request body must be a JSON object");
    return std::nullopt;
  }
  return body;
}

std::string string_field(const nlohmann::json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return {};
  if (!it->is_string()) throw InputError(std::string(key) + " must be a string");
  return it->get<std::string>();
}

}  // namespace

HttpFrontend::HttpFrontend(SuggestService& service, std::chrono::milliseconds sweep_interval)
    : service_(service), server_(std::make_unique<httplib::Server>()), sweep_interval_(sweep_interval) {
  server_->Post("/suggest", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    try {
      const auto response = service_.suggest(string_field(*body, "session_id"), string_field(*body, "prefix"));
      reply(res, 200, to_json(response));
    } catch (const InputError& e) {
      reply_error(res, 400, e.what());
    } catch (const ServiceUnavailable& e) {
      reply_error(res, 503, e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, e.what());
    }
  });
  server_->Post("/submit", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    try {
      const auto length = service_.submit(string_field(*body, "session_id"), string_field(*body, "query"));
      reply(res, 200, nlohmann::ordered_json{{"ok", true}, {"session_length", length}});
    } catch (const InputError& e) {
      reply_error(res, 400, e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, e.what());
    }
  });
  server_->Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, service_.ready() ? 200 : 503, service_.health());
  });
  sweeper_ = std::thread([this] { sweep_loop(); });
}

HttpFrontend::~HttpFrontend() {
  stop();
  if (sweeper_.joinable()) sweeper_.join();
}

int HttpFrontend::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpFrontend::listen_after_bind() { return server_->listen_after_bind(); }

void HttpFrontend::stop() {
  {
    std::lock_guard lock(sweep_mutex_);
    stopping_ = true;
  }
  sweep_cv_.notify_all();
  server_->stop();
}

void HttpFrontend::wait_until_ready() const { server_->wait_until_ready(); }

void HttpFrontend::sweep_loop() {
  std::unique_lock lock(sweep_mutex_);
  while (!sweep_cv_.wait_for(lock, sweep_interval_, [this] { return stopping_; })) service_.sessions().evict_expired();
}

}  // namespace qac
