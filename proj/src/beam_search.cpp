#include "qac/beam_search.hpp"

#include <algorithm>
#include <unordered_set>

#include "qac/errors.hpp"

namespace qac {

namespace {

struct Hypothesis {
  std::vector<int> tokens;
  DecoderState state;
  RowVector next_logits;
  double log_prob = 0.0;
};

struct Candidate {
  std::size_t parent;
  int token;
  double log_prob;
};

Completion finish(const Hypothesis& h, std::string_view prefix, std::size_t prefix_tokens,
                  const Tokenizer& tokenizer, double log_prob, int extra_token, bool eos) {
  Completion c;
  c.tokens = h.tokens;
  if (!eos && extra_token >= 0) c.tokens.push_back(extra_token);
  const std::span<const int> generated(c.tokens.begin() + static_cast<long>(prefix_tokens), c.tokens.end());
  c.text = std::string(prefix) + tokenizer.detokenize(generated);
  c.log_prob = log_prob;
  c.ended_with_eos = eos;
  const auto scored = c.tokens.size() + (eos ? 1 : 0);
  c.score = scored == 0 ? 0.0 : log_prob / static_cast<double>(scored);
  return c;
}

}  // namespace

void BeamConfig::validate() const {
  if (beam_size < 1) throw ConfigError("beam size must be >= 1");
  if (max_len < 1) throw ConfigError("max generation length must be >= 1");
  if (!(repetition_penalty > 0.0)) throw ConfigError("repetition penalty must be positive");
}

void apply_repetition_penalty(RowVector& logits, std::span<const int> previous, double penalty) {
  if (penalty == 1.0 || previous.empty()) return;
  std::vector<bool> seen(static_cast<std::size_t>(logits.size()), false);
  for (int t : previous) {
    if (t < 0 || t >= logits.size() || seen[static_cast<std::size_t>(t)]) continue;
    seen[static_cast<std::size_t>(t)] = true;
    double& v = logits(t);
    v = v < 0.0 ? v * penalty : v / penalty;
  }
}

std::vector<Completion> beam_generate(const Seq2SeqModel& model, const Tokenizer& tokenizer,
                                      std::span<const int> source, std::string_view prefix,
                                      const BeamConfig& config) {
  config.validate();
  const auto encoded = encode(model, source);
  const auto prefix_ids = tokenizer.tokenize(prefix);

  std::vector<int> allowed{token::kEos};
  for (int id = token::kFirstCharacter; id < model.config().vocab_size; ++id) allowed.push_back(id);

  auto next_log_probs = [&](const Hypothesis& h) {
    RowVector logits = h.next_logits;
    apply_repetition_penalty(logits, h.tokens, config.repetition_penalty);
    return log_softmax(logits);
  };

  Hypothesis root;
  root.state = start_decoding(model);
  root.next_logits = decode_step(model, encoded, root.state, token::kBos);
  for (int id : prefix_ids) {
    root.log_prob += next_log_probs(root)(id);
    root.tokens.push_back(id);
    root.next_logits = decode_step(model, encoded, root.state, id);
  }

  std::vector<Hypothesis> alive;
  alive.push_back(std::move(root));
  std::vector<Completion> finished;
  const std::size_t width = config.beam_size;

  for (std::size_t step = 1; step <= config.max_len && !alive.empty(); ++step) {
    const bool last_step = step == config.max_len;
    std::vector<Candidate> candidates;
    candidates.reserve(alive.size() * allowed.size());
    for (std::size_t i = 0; i < alive.size(); ++i) {
      const auto lp = next_log_probs(alive[i]);
      for (int tok : allowed) candidates.push_back({i, tok, alive[i].log_prob + lp(tok)});
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.log_prob > b.log_prob; });

    std::vector<Hypothesis> next;
    std::size_t kept = 0;
    for (const auto& c : candidates) {
      if (kept == width) break;
      const auto& parent = alive[c.parent];
      ++kept;
      if (c.token == token::kEos) {
        finished.push_back(finish(parent, prefix, prefix_ids.size(), tokenizer, c.log_prob, -1, true));
        continue;
      }
      if (last_step) {
        finished.push_back(finish(parent, prefix, prefix_ids.size(), tokenizer, c.log_prob, c.token, false));
        continue;
      }
      Hypothesis h;
      h.tokens = parent.tokens;
      h.tokens.push_back(c.token);
      h.state = parent.state;
      h.log_prob = c.log_prob;
      h.next_logits = decode_step(model, encoded, h.state, c.token);
      next.push_back(std::move(h));
    }
    alive = std::move(next);
  }

  std::stable_sort(finished.begin(), finished.end(), [](const Completion& a, const Completion& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.text < b.text;
  });
  std::vector<Completion> out;
  std::unordered_set<std::string> texts;
  for (auto& c : finished) {
    if (out.size() == width) break;
    if (!texts.insert(c.text).second) continue;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace qac
