#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qac/model.hpp"

namespace qac {

struct BeamConfig {
  std::size_t beam_size = 8;
  /// Maximum number of freely generated tokens after the forced prefix.
  std::size_t max_len = 16;
  /// Multiplicative logit adjustment for tokens already in the output:
  /// negative logits are multiplied, positive ones divided. 1.0 disables it.
  double repetition_penalty = 0.6;

  void validate() const;
};

struct Completion {
  std::string text;          // prefix + generated characters
  std::vector<int> tokens;   // decoder tokens after [BOS], excluding [EOS]
  double log_prob = 0.0;     // sum over prefix, generated and [EOS] tokens
  double score = 0.0;        // log_prob / number of scored tokens
  bool ended_with_eos = false;
};

/// Applies the repetition penalty in place to every distinct token of `previous`.
void apply_repetition_penalty(RowVector& logits, std::span<const int> previous, double penalty);

/// Prefix-constrained beam search. The prefix tokens are forced, then up to
/// `max_len` tokens are generated over the character alphabet and [EOS].
/// Returns up to beam_size distinct completions ordered by score (desc),
/// ties by text. Every text starts with `prefix`.
std::vector<Completion> beam_generate(const Seq2SeqModel& model, const Tokenizer& tokenizer,
                                      std::span<const int> source, std::string_view prefix,
                                      const BeamConfig& config = {});

}  // namespace qac
