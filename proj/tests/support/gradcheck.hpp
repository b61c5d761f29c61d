#pragma once

// Central finite-difference check of the analytic gradients.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "qac/augmentation.hpp"
#include "qac/model.hpp"
#include "qac/random.hpp"

namespace qac::testing {

struct GradCheckResult {
  std::size_t parameters = 0;
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t below_floor = 0;  // entries judged against the floor
  double max_abs_error_below_floor = 0.0;
  std::vector<std::string> groups;  // tensors visited, in order
};

/// d_model 8 over a 6-letter alphabet (vocab 12), two layers each side.
inline ModelConfig micro_config() {
  ModelConfig c;
  c.vocab_size = token::kFirstCharacter + 6;
  c.d_model = 8;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.heads = 2;
  c.ff_width = 16;
  c.dropout = 0.0;
  c.max_positions = 16;
  return c;
}

/// Random pairs with sources and targets of at most 6 tokens (target ends in [EOS]).
inline std::vector<TrainingPair> micro_batch(std::size_t n, int vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TrainingPair> out(n);
  const auto chars = static_cast<std::uint64_t>(vocab - token::kFirstCharacter);
  for (auto& p : out) {
    const auto src_len = 1 + uniform_index(rng, 6);
    for (std::uint64_t i = 0; i < src_len; ++i)
      p.source.push_back(uniform_index(rng, 5) == 0 ? token::kSep
                                                    : token::kFirstCharacter + static_cast<int>(uniform_index(rng, chars)));
    const auto tgt_len = uniform_index(rng, 6);
    for (std::uint64_t i = 0; i < tgt_len; ++i) p.target.push_back(token::kFirstCharacter + static_cast<int>(uniform_index(rng, chars)));
    p.target.push_back(token::kEos);
  }
  return out;
}

inline double batch_loss(const Seq2SeqModel& model, const std::vector<TrainingPair>& batch) {
  double total = 0.0;
  for (const auto& p : batch) total += forward(model, p.source, p.target).loss;
  return total / static_cast<double>(batch.size());
}

/// Relative error |a - n| / max(|a|, |n|, floor). Central differences carry
/// about 2e-11 of rounding noise at this step size, so the floor (50x that)
/// only matters for entries whose gradient is zero up to rounding, such as
/// attention key biases.
inline GradCheckResult check_all_gradients(Seq2SeqModel& model, const std::vector<TrainingPair>& batch,
                                           double step = 1e-5, double floor = 1e-6) {
  const auto analytic = backward(model, batch).grads;
  std::vector<const Matrix*> grads;
  for_each_parameter(analytic, [&](const std::string&, const Matrix& m) { grads.push_back(&m); });

  GradCheckResult out;
  std::size_t index = 0;
  for_each_parameter(model.weights(), [&](const std::string& name, Matrix& w) {
    const Matrix& g = *grads[index++];
    out.groups.push_back(name);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      double& x = w.data()[i];
      const double saved = x;
      x = saved + step;
      const double up = batch_loss(model, batch);
      x = saved - step;
      const double down = batch_loss(model, batch);
      x = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = g.data()[i];
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double err = std::abs(a - numeric) / std::max(scale, floor);
      if (scale < floor) {
        ++out.below_floor;
        out.max_abs_error_below_floor = std::max(out.max_abs_error_below_floor, std::abs(a - numeric));
      }
      ++out.parameters;
      if (err > out.max_relative_error) {
        out.max_relative_error = err;
        out.worst_parameter = name + "[" + std::to_string(i) + "]";
      }
    }
  });
  return out;
}

}  // namespace qac::testing
