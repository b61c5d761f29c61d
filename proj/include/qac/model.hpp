#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qac/augmentation.hpp"

namespace qac {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int heads = 2;
  int ff_width = 256;
  double dropout = 0.1;
  int max_positions = 256;

  /// Throws ConfigError on non-positive dims or d_model % heads != 0.
  void validate() const;
  int head_dim() const { return d_model / heads; }

  bool operator==(const ModelConfig&) const = default;
};

struct LinearWeights {
  Matrix w;  // in x out
  Matrix b;  // 1 x out
};

struct LayerNormWeights {
  Matrix gamma;  // 1 x d
  Matrix beta;   // 1 x d
};

struct AttentionWeights {
  LinearWeights q, k, v, o;
};

struct FeedForwardWeights {
  LinearWeights in, out;
};

struct EncoderLayerWeights {
  LayerNormWeights ln1;
  AttentionWeights self_attn;
  LayerNormWeights ln2;
  FeedForwardWeights ffn;
};

struct DecoderLayerWeights {
  LayerNormWeights ln1;
  AttentionWeights self_attn;
  LayerNormWeights ln2;
  AttentionWeights cross_attn;
  LayerNormWeights ln3;
  FeedForwardWeights ffn;
};

/// Parameter tensors of the encoder-decoder. The same type holds gradients
/// and optimizer moments.
struct ModelWeights {
  Matrix embedding;  // vocab x d, shared by encoder and decoder inputs
  std::vector<EncoderLayerWeights> encoder;
  LayerNormWeights encoder_norm;
  std::vector<DecoderLayerWeights> decoder;
  LayerNormWeights decoder_norm;
  LinearWeights output;  // d x vocab
};

/// Calls f(name, matrix) for every parameter tensor in a fixed order.
template <class Weights, class F>
void for_each_parameter(Weights& w, F&& f) {
  auto linear = [&](const std::string& p, auto& l) {
    f(p + ".weight", l.w);
    f(p + ".bias", l.b);
  };
  auto norm = [&](const std::string& p, auto& n) {
    f(p + ".gamma", n.gamma);
    f(p + ".beta", n.beta);
  };
  auto attention = [&](const std::string& p, auto& a) {
    linear(p + ".q", a.q);
    linear(p + ".k", a.k);
    linear(p + ".v", a.v);
    linear(p + ".o", a.o);
  };
  auto ffn = [&](const std::string& p, auto& n) {
    linear(p + ".in", n.in);
    linear(p + ".out", n.out);
  };
  f(std::string("embedding"), w.embedding);
  for (std::size_t i = 0; i < w.encoder.size(); ++i) {
    const auto p = "encoder." + std::to_string(i);
    norm(p + ".ln1", w.encoder[i].ln1);
    attention(p + ".self_attn", w.encoder[i].self_attn);
    norm(p + ".ln2", w.encoder[i].ln2);
    ffn(p + ".ffn", w.encoder[i].ffn);
  }
  norm("encoder_norm", w.encoder_norm);
  for (std::size_t i = 0; i < w.decoder.size(); ++i) {
    const auto p = "decoder." + std::to_string(i);
    norm(p + ".ln1", w.decoder[i].ln1);
    attention(p + ".self_attn", w.decoder[i].self_attn);
    norm(p + ".ln2", w.decoder[i].ln2);
    attention(p + ".cross_attn", w.decoder[i].cross_attn);
    norm(p + ".ln3", w.decoder[i].ln3);
    ffn(p + ".ffn", w.decoder[i].ffn);
  }
  norm("decoder_norm", w.decoder_norm);
  linear("output", w.output);
}

/// Same shapes as `like`, all zeros.
ModelWeights zeros_like(const ModelWeights& like);
std::size_t parameter_count(const ModelWeights& weights);

/// Pre-norm Transformer encoder-decoder over token ids.
class Seq2SeqModel {
 public:
  /// Random initialization (Xavier for projections, N(0,1) embeddings).
  Seq2SeqModel(ModelConfig config, std::uint64_t seed);
  /// Adopts existing weights; throws ConfigMismatchError on shape mismatch.
  Seq2SeqModel(ModelConfig config, ModelWeights weights);

  const ModelConfig& config() const { return config_; }
  const ModelWeights& weights() const { return weights_; }
  ModelWeights& weights() { return weights_; }
  const Matrix& positional() const { return positional_; }

 private:
  ModelConfig config_;
  ModelWeights weights_;
  Matrix positional_;  // sinusoidal, max_positions x d
};

struct ForwardResult {
  Matrix logits;  // target_len x vocab
  double loss = 0.0;
};

/// Teacher-forced pass. `target` ends with [EOS]; the decoder reads [BOS]
/// followed by target[0..n-1). Loss is the mean token negative log-likelihood.
/// Throws InputError on empty or overlength sequences, NumericFault on NaN.
ForwardResult forward(const Seq2SeqModel& model, std::span<const int> source, std::span<const int> target);

struct TrainingPair {
  std::vector<int> source;
  std::vector<int> target;  // ends with [EOS]
};

struct BatchGradients {
  double loss = 0.0;  // mean over examples of per-example mean token loss
  ModelWeights grads;
};

/// Gradient of loss_scale * (batch mean loss). Dropout is active only when
/// `dropout_rng` is given. Throws NumericFault naming the first parameter
/// with a non-finite gradient.
BatchGradients backward(const Seq2SeqModel& model, std::span<const TrainingPair> batch, double loss_scale = 1.0,
                        std::mt19937_64* dropout_rng = nullptr);

/// Adds scale * d(loss)/d(theta) for one example into `grads`; returns the loss.
double accumulate_gradients(const Seq2SeqModel& model, std::span<const int> source, std::span<const int> target,
                            ModelWeights& grads, double scale, std::mt19937_64* dropout_rng = nullptr);

/// Encoder output plus per-decoder-layer cross-attention keys and values.
struct EncodedSource {
  Matrix memory;
  std::vector<Matrix> cross_k;
  std::vector<Matrix> cross_v;
};

/// Self-attention key/value cache of one decoding hypothesis.
struct DecoderState {
  std::vector<Matrix> self_k;
  std::vector<Matrix> self_v;
  int length = 0;
};

EncodedSource encode(const Seq2SeqModel& model, std::span<const int> source);
DecoderState start_decoding(const Seq2SeqModel& model);

/// Feeds `token` at position state.length and returns next-token logits.
RowVector decode_step(const Seq2SeqModel& model, const EncodedSource& encoded, DecoderState& state, int token);

/// log-softmax of one logits row, accumulated in double.
RowVector log_softmax(const RowVector& logits);

/// Sum of log-probabilities of `candidate` (plus [EOS] when include_eos)
/// under teacher forcing.
double score_sequence(const Seq2SeqModel& model, const Tokenizer& tokenizer, std::span<const int> source,
                      std::string_view candidate, bool include_eos = true);

struct Checkpoint {
  Seq2SeqModel model;
  Tokenizer tokenizer;
};

/// magic | version | config | alphabet | tensors | crc32.
void save_checkpoint(const std::string& path, const Seq2SeqModel& model, const Tokenizer& tokenizer);

/// Throws ConfigMismatchError when `expected` is given and differs, or when
/// the stored tensors disagree with the stored config.
Checkpoint load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace qac
