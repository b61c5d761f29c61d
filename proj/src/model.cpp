#include "qac/model.hpp"

#include <cmath>
#include <limits>

#include "qac/binary_io.hpp"
#include "qac/errors.hpp"
#include "qac/random.hpp"
#include "qac/utf8.hpp"

namespace qac {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluCubic = 0.044715;

// ---------------------------------------------------------------- primitives

Matrix linear_forward(const LinearWeights& l, const Matrix& x) {
  Matrix y = x * l.w;
  y.rowwise() += l.b.row(0);
  return y;
}

Matrix linear_backward(const LinearWeights& l, LinearWeights& g, const Matrix& x, const Matrix& dy) {
  g.w.noalias() += x.transpose() * dy;
  g.b += dy.colwise().sum();
  return dy * l.w.transpose();
}

struct NormCache {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};

Matrix layer_norm_forward(const LayerNormWeights& n, const Matrix& x, NormCache* cache) {
  Matrix xhat(x.rows(), x.cols());
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const auto centered = (x.row(r).array() - mean).eval();
    const double var = centered.square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(r) = centered * inv_std(r);
  }
  Matrix y = ((xhat.array().rowwise() * n.gamma.row(0).array()).rowwise() + n.beta.row(0).array()).matrix();
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix layer_norm_backward(const LayerNormWeights& n, LayerNormWeights& g, const NormCache& c, const Matrix& dy) {
  g.gamma += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  g.beta += dy.colwise().sum();
  const Matrix dxhat = (dy.array().rowwise() * n.gamma.row(0).array()).matrix();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dxhat.row(r).mean();
    const double m2 = (dxhat.row(r).array() * c.xhat.row(r).array()).mean();
    dx.row(r) = c.inv_std(r) * (dxhat.row(r).array() - m1 - c.xhat.row(r).array() * m2);
  }
  return dx;
}

// Row-wise softmax; with `causal`, row i only sees columns 0..i.
void softmax_rows(Matrix& s, bool causal) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const Eigen::Index limit = causal ? std::min<Eigen::Index>(r + 1, s.cols()) : s.cols();
    auto head = s.row(r).head(limit);
    const double mx = head.maxCoeff();
    head = (head.array() - mx).exp();
    head /= head.sum();
    if (limit < s.cols()) s.row(r).tail(s.cols() - limit).setZero();
  }
}

// Multi-head scaled dot-product attention over projected q, k, v.
Matrix attend(const Matrix& q, const Matrix& k, const Matrix& v, int heads, bool causal,
              std::vector<Matrix>* probs_out) {
  const auto d = q.cols();
  const auto dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix context(q.rows(), d);
  if (probs_out != nullptr) probs_out->resize(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Matrix s = (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale;
    softmax_rows(s, causal);
    context.middleCols(h * dh, dh).noalias() = s * v.middleCols(h * dh, dh);
    if (probs_out != nullptr) (*probs_out)[static_cast<std::size_t>(h)] = std::move(s);
  }
  return context;
}

struct AttentionCache {
  Matrix xq, xkv, q, k, v, context;
  std::vector<Matrix> probs;
};

Matrix attention_forward(const AttentionWeights& w, const Matrix& xq, const Matrix& xkv, int heads, bool causal,
                         AttentionCache& c) {
  c.xq = xq;
  c.xkv = xkv;
  c.q = linear_forward(w.q, xq);
  c.k = linear_forward(w.k, xkv);
  c.v = linear_forward(w.v, xkv);
  c.context = attend(c.q, c.k, c.v, heads, causal, &c.probs);
  return linear_forward(w.o, c.context);
}

void attention_backward(const AttentionWeights& w, AttentionWeights& g, const AttentionCache& c, const Matrix& dout,
                        int heads, Matrix& dxq, Matrix& dxkv) {
  const Matrix dcontext = linear_backward(w.o, g.o, c.context, dout);
  const auto d = c.q.cols();
  const auto dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix dq(c.q.rows(), d);
  Matrix dk(c.k.rows(), d);
  Matrix dv(c.v.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const Matrix& p = c.probs[static_cast<std::size_t>(h)];
    const auto dctx_h = dcontext.middleCols(h * dh, dh);
    Matrix dp = dctx_h * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh).noalias() = p.transpose() * dctx_h;
    const Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
    Matrix ds = (p.array() * (dp.array().colwise() - row_dot.array())).matrix() * scale;
    dq.middleCols(h * dh, dh).noalias() = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  dxq = linear_backward(w.q, g.q, c.xq, dq);
  dxkv = linear_backward(w.k, g.k, c.xkv, dk);
  dxkv += linear_backward(w.v, g.v, c.xkv, dv);
}

struct FeedForwardCache {
  Matrix x, pre, act;
};

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluScale * (v + kGeluCubic * v * v * v)));
  });
}

Matrix gelu_grad(const Matrix& x) {
  return x.unaryExpr([](double v) {
    const double t = std::tanh(kGeluScale * (v + kGeluCubic * v * v * v));
    return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluScale * (1.0 + 3.0 * kGeluCubic * v * v);
  });
}

Matrix feed_forward(const FeedForwardWeights& w, const Matrix& x, FeedForwardCache* c) {
  Matrix pre = linear_forward(w.in, x);
  Matrix act = gelu(pre);
  Matrix y = linear_forward(w.out, act);
  if (c != nullptr) {
    c->x = x;
    c->pre = std::move(pre);
    c->act = std::move(act);
  }
  return y;
}

Matrix feed_forward_backward(const FeedForwardWeights& w, FeedForwardWeights& g, const FeedForwardCache& c,
                             const Matrix& dy) {
  const Matrix dact = linear_backward(w.out, g.out, c.act, dy);
  const Matrix dpre = (dact.array() * gelu_grad(c.pre).array()).matrix();
  return linear_backward(w.in, g.in, c.x, dpre);
}

// Inverted dropout. An empty mask means identity.
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64* rng) {
  if (rng == nullptr || rate <= 0.0) return {};
  Matrix mask(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform01(*rng) < rate ? 0.0 : keep;
  return mask;
}

void apply_mask(Matrix& x, const Matrix& mask) {
  if (mask.size() != 0) x.array() *= mask.array();
}

Matrix masked(const Matrix& x, const Matrix& mask) {
  if (mask.size() == 0) return x;
  return (x.array() * mask.array()).matrix();
}

// ---------------------------------------------------------------- layers

struct EncoderLayerCache {
  NormCache ln1;
  AttentionCache attn;
  Matrix drop1;
  NormCache ln2;
  FeedForwardCache ffn;
  Matrix drop2;
};

struct DecoderLayerCache {
  NormCache ln1;
  AttentionCache self_attn;
  Matrix drop1;
  NormCache ln2;
  AttentionCache cross_attn;
  Matrix drop2;
  NormCache ln3;
  FeedForwardCache ffn;
  Matrix drop3;
};

Matrix encoder_layer_forward(const EncoderLayerWeights& w, const ModelConfig& cfg, const Matrix& x,
                             EncoderLayerCache& c, std::mt19937_64* rng) {
  const Matrix a = layer_norm_forward(w.ln1, x, &c.ln1);
  Matrix s = attention_forward(w.self_attn, a, a, cfg.heads, false, c.attn);
  c.drop1 = dropout_mask(s.rows(), s.cols(), cfg.dropout, rng);
  apply_mask(s, c.drop1);
  const Matrix x1 = x + s;
  const Matrix b = layer_norm_forward(w.ln2, x1, &c.ln2);
  Matrix f = feed_forward(w.ffn, b, &c.ffn);
  c.drop2 = dropout_mask(f.rows(), f.cols(), cfg.dropout, rng);
  apply_mask(f, c.drop2);
  return x1 + f;
}

Matrix encoder_layer_backward(const EncoderLayerWeights& w, EncoderLayerWeights& g, const ModelConfig& cfg,
                              const EncoderLayerCache& c, const Matrix& dout) {
  const Matrix db = feed_forward_backward(w.ffn, g.ffn, c.ffn, masked(dout, c.drop2));
  const Matrix dx1 = dout + layer_norm_backward(w.ln2, g.ln2, c.ln2, db);
  Matrix dq, dkv;
  attention_backward(w.self_attn, g.self_attn, c.attn, masked(dx1, c.drop1), cfg.heads, dq, dkv);
  dq += dkv;
  return dx1 + layer_norm_backward(w.ln1, g.ln1, c.ln1, dq);
}

Matrix decoder_layer_forward(const DecoderLayerWeights& w, const ModelConfig& cfg, const Matrix& x,
                             const Matrix& memory, DecoderLayerCache& c, std::mt19937_64* rng) {
  const Matrix a = layer_norm_forward(w.ln1, x, &c.ln1);
  Matrix s = attention_forward(w.self_attn, a, a, cfg.heads, true, c.self_attn);
  c.drop1 = dropout_mask(s.rows(), s.cols(), cfg.dropout, rng);
  apply_mask(s, c.drop1);
  const Matrix x1 = x + s;
  const Matrix b = layer_norm_forward(w.ln2, x1, &c.ln2);
  Matrix t = attention_forward(w.cross_attn, b, memory, cfg.heads, false, c.cross_attn);
  c.drop2 = dropout_mask(t.rows(), t.cols(), cfg.dropout, rng);
  apply_mask(t, c.drop2);
  const Matrix x2 = x1 + t;
  const Matrix e = layer_norm_forward(w.ln3, x2, &c.ln3);
  Matrix f = feed_forward(w.ffn, e, &c.ffn);
  c.drop3 = dropout_mask(f.rows(), f.cols(), cfg.dropout, rng);
  apply_mask(f, c.drop3);
  return x2 + f;
}

Matrix decoder_layer_backward(const DecoderLayerWeights& w, DecoderLayerWeights& g, const ModelConfig& cfg,
                              const DecoderLayerCache& c, const Matrix& dout, Matrix& dmemory) {
  const Matrix de = feed_forward_backward(w.ffn, g.ffn, c.ffn, masked(dout, c.drop3));
  const Matrix dx2 = dout + layer_norm_backward(w.ln3, g.ln3, c.ln3, de);
  Matrix db, dmem;
  attention_backward(w.cross_attn, g.cross_attn, c.cross_attn, masked(dx2, c.drop2), cfg.heads, db, dmem);
  dmemory += dmem;
  const Matrix dx1 = dx2 + layer_norm_backward(w.ln2, g.ln2, c.ln2, db);
  Matrix dq, dkv;
  attention_backward(w.self_attn, g.self_attn, c.self_attn, masked(dx1, c.drop1), cfg.heads, dq, dkv);
  dq += dkv;
  return dx1 + layer_norm_backward(w.ln1, g.ln1, c.ln1, dq);
}

// ---------------------------------------------------------------- model pass

struct ForwardCache {
  std::vector<int> decoder_input;
  Matrix enc_drop0;
  std::vector<EncoderLayerCache> enc;
  NormCache enc_norm;
  Matrix memory;
  Matrix dec_drop0;
  std::vector<DecoderLayerCache> dec;
  NormCache dec_norm;
  Matrix dec_hidden;
  Matrix logits;
};

void check_sequences(const ModelConfig& cfg, std::span<const int> source, std::span<const int> target) {
  if (source.empty()) throw InputError("empty source sequence");
  if (target.empty()) throw InputError("empty target sequence");
  const auto limit = static_cast<std::size_t>(cfg.max_positions);
  if (source.size() > limit || target.size() > limit)
    throw InputError("sequence longer than max positional length " + std::to_string(cfg.max_positions));
  for (auto seq : {source, target})
    for (int id : seq)
      if (id < 0 || id >= cfg.vocab_size) throw InputError("token id " + std::to_string(id) + " out of range");
}

Matrix embed(const Seq2SeqModel& model, std::span<const int> ids) {
  const auto& cfg = model.config();
  Matrix x(static_cast<Eigen::Index>(ids.size()), cfg.d_model);
  for (std::size_t i = 0; i < ids.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) =
        model.weights().embedding.row(ids[i]) + model.positional().row(static_cast<Eigen::Index>(i));
  return x;
}

Matrix run_encoder(const Seq2SeqModel& model, std::span<const int> source, ForwardCache& c, std::mt19937_64* rng) {
  const auto& cfg = model.config();
  const auto& w = model.weights();
  Matrix x = embed(model, source);
  c.enc_drop0 = dropout_mask(x.rows(), x.cols(), cfg.dropout, rng);
  apply_mask(x, c.enc_drop0);
  c.enc.resize(w.encoder.size());
  for (std::size_t l = 0; l < w.encoder.size(); ++l) x = encoder_layer_forward(w.encoder[l], cfg, x, c.enc[l], rng);
  return layer_norm_forward(w.encoder_norm, x, &c.enc_norm);
}

void run_forward(const Seq2SeqModel& model, std::span<const int> source, std::span<const int> target,
                 ForwardCache& c, std::mt19937_64* rng) {
  const auto& cfg = model.config();
  const auto& w = model.weights();
  check_sequences(cfg, source, target);

  c.memory = run_encoder(model, source, c, rng);

  c.decoder_input.assign(1, token::kBos);
  c.decoder_input.insert(c.decoder_input.end(), target.begin(), target.end() - 1);
  Matrix y = embed(model, c.decoder_input);
  c.dec_drop0 = dropout_mask(y.rows(), y.cols(), cfg.dropout, rng);
  apply_mask(y, c.dec_drop0);
  c.dec.resize(w.decoder.size());
  for (std::size_t l = 0; l < w.decoder.size(); ++l)
    y = decoder_layer_forward(w.decoder[l], cfg, y, c.memory, c.dec[l], rng);
  c.dec_hidden = layer_norm_forward(w.decoder_norm, y, &c.dec_norm);
  c.logits = linear_forward(w.output, c.dec_hidden);
}

// Returns mean token NLL; fills `dlogits` with d(mean NLL)/d(logits) when non-null.
double token_nll(const Matrix& logits, std::span<const int> target, Matrix* dlogits) {
  const auto rows = logits.rows();
  double total = 0.0;
  if (dlogits != nullptr) dlogits->resize(rows, logits.cols());
  for (Eigen::Index t = 0; t < rows; ++t) {
    const double mx = logits.row(t).maxCoeff();
    const auto shifted = (logits.row(t).array() - mx).eval();
    const double sum = shifted.exp().sum();
    const double lse = std::log(sum);
    total += lse - shifted(target[static_cast<std::size_t>(t)]);
    if (dlogits != nullptr) {
      dlogits->row(t) = (shifted - lse).exp().matrix() / static_cast<double>(rows);
      (*dlogits)(t, target[static_cast<std::size_t>(t)]) -= 1.0 / static_cast<double>(rows);
    }
  }
  return total / static_cast<double>(rows);
}

void embedding_backward(Matrix& grad, std::span<const int> ids, const Matrix& dx) {
  for (std::size_t i = 0; i < ids.size(); ++i) grad.row(ids[i]) += dx.row(static_cast<Eigen::Index>(i));
}

Matrix sinusoidal_positions(int max_positions, int d_model) {
  Matrix pe(max_positions, d_model);
  for (int pos = 0; pos < max_positions; ++pos) {
    for (int i = 0; i < d_model; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

LinearWeights init_linear(int in, int out, std::mt19937_64& rng) {
  LinearWeights l;
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  l.w.resize(in, out);
  for (Eigen::Index i = 0; i < l.w.size(); ++i) l.w.data()[i] = (2.0 * uniform01(rng) - 1.0) * bound;
  l.b = Matrix::Zero(1, out);
  return l;
}

LayerNormWeights init_norm(int d) { return {Matrix::Ones(1, d), Matrix::Zero(1, d)}; }

AttentionWeights init_attention(int d, std::mt19937_64& rng) {
  return {init_linear(d, d, rng), init_linear(d, d, rng), init_linear(d, d, rng), init_linear(d, d, rng)};
}

ModelWeights init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelWeights w;
  w.embedding.resize(cfg.vocab_size, cfg.d_model);
  for (Eigen::Index i = 0; i < w.embedding.size(); ++i) w.embedding.data()[i] = standard_normal(rng);
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    EncoderLayerWeights layer;
    layer.ln1 = init_norm(cfg.d_model);
    layer.self_attn = init_attention(cfg.d_model, rng);
    layer.ln2 = init_norm(cfg.d_model);
    layer.ffn = {init_linear(cfg.d_model, cfg.ff_width, rng), init_linear(cfg.ff_width, cfg.d_model, rng)};
    w.encoder.push_back(std::move(layer));
  }
  w.encoder_norm = init_norm(cfg.d_model);
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    DecoderLayerWeights layer;
    layer.ln1 = init_norm(cfg.d_model);
    layer.self_attn = init_attention(cfg.d_model, rng);
    layer.ln2 = init_norm(cfg.d_model);
    layer.cross_attn = init_attention(cfg.d_model, rng);
    layer.ln3 = init_norm(cfg.d_model);
    layer.ffn = {init_linear(cfg.d_model, cfg.ff_width, rng), init_linear(cfg.ff_width, cfg.d_model, rng)};
    w.decoder.push_back(std::move(layer));
  }
  w.decoder_norm = init_norm(cfg.d_model);
  w.output = init_linear(cfg.d_model, cfg.vocab_size, rng);
  return w;
}

void check_shapes(const ModelWeights& expected, ModelWeights& actual) {
  std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> shapes;
  for_each_parameter(expected, [&](const std::string& name, const Matrix& m) {
    shapes.push_back({name, {m.rows(), m.cols()}});
  });
  std::size_t i = 0;
  bool ok = actual.encoder.size() == expected.encoder.size() && actual.decoder.size() == expected.decoder.size();
  if (ok) {
    for_each_parameter(actual, [&](const std::string& name, const Matrix& m) {
      if (i >= shapes.size() || shapes[i].first != name || shapes[i].second.first != m.rows() ||
          shapes[i].second.second != m.cols())
        ok = false;
      ++i;
    });
  }
  if (!ok || i != shapes.size()) throw ConfigMismatchError("parameter shapes do not match the model config");
}

constexpr std::string_view kCheckpointMagic = "QACMODEL";
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 1 || d_model < 1 || encoder_layers < 1 || decoder_layers < 1 || heads < 1 || ff_width < 1 ||
      max_positions < 1)
    throw ConfigError("model dimensions must all be >= 1");
  if (d_model % heads != 0) throw ConfigError("d_model must be divisible by the number of heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

ModelWeights zeros_like(const ModelWeights& like) {
  ModelWeights z = like;
  for_each_parameter(z, [](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

std::size_t parameter_count(const ModelWeights& weights) {
  std::size_t n = 0;
  for_each_parameter(weights, [&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

Seq2SeqModel::Seq2SeqModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  weights_ = init_weights(config_, seed);
  positional_ = sinusoidal_positions(config_.max_positions, config_.d_model);
}

Seq2SeqModel::Seq2SeqModel(ModelConfig config, ModelWeights weights) : config_(config), weights_(std::move(weights)) {
  config_.validate();
  check_shapes(zeros_like(init_weights(config_, 0)), weights_);
  positional_ = sinusoidal_positions(config_.max_positions, config_.d_model);
}

ForwardResult forward(const Seq2SeqModel& model, std::span<const int> source, std::span<const int> target) {
  ForwardCache cache;
  run_forward(model, source, target, cache, nullptr);
  ForwardResult result;
  result.loss = token_nll(cache.logits, target, nullptr);
  if (!std::isfinite(result.loss)) throw NumericFault("non-finite loss in forward pass");
  result.logits = std::move(cache.logits);
  return result;
}

double accumulate_gradients(const Seq2SeqModel& model, std::span<const int> source, std::span<const int> target,
                            ModelWeights& grads, double scale, std::mt19937_64* dropout_rng) {
  const auto& cfg = model.config();
  const auto& w = model.weights();
  ForwardCache c;
  run_forward(model, source, target, c, dropout_rng);

  Matrix dlogits;
  const double loss = token_nll(c.logits, target, &dlogits);
  if (!std::isfinite(loss)) throw NumericFault("non-finite loss during training");
  dlogits *= scale;

  const Matrix dhidden = linear_backward(w.output, grads.output, c.dec_hidden, dlogits);
  Matrix dy = layer_norm_backward(w.decoder_norm, grads.decoder_norm, c.dec_norm, dhidden);
  Matrix dmemory = Matrix::Zero(c.memory.rows(), c.memory.cols());
  for (std::size_t l = w.decoder.size(); l-- > 0;)
    dy = decoder_layer_backward(w.decoder[l], grads.decoder[l], cfg, c.dec[l], dy, dmemory);
  apply_mask(dy, c.dec_drop0);
  embedding_backward(grads.embedding, c.decoder_input, dy);

  Matrix dx = layer_norm_backward(w.encoder_norm, grads.encoder_norm, c.enc_norm, dmemory);
  for (std::size_t l = w.encoder.size(); l-- > 0;)
    dx = encoder_layer_backward(w.encoder[l], grads.encoder[l], cfg, c.enc[l], dx);
  apply_mask(dx, c.enc_drop0);
  embedding_backward(grads.embedding, source, dx);
  return loss;
}

BatchGradients backward(const Seq2SeqModel& model, std::span<const TrainingPair> batch, double loss_scale,
                        std::mt19937_64* dropout_rng) {
  if (batch.empty()) throw PreconditionError("empty batch");
  BatchGradients out;
  out.grads = zeros_like(model.weights());
  const double per_example = loss_scale / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& pair : batch)
    total += accumulate_gradients(model, pair.source, pair.target, out.grads, per_example, dropout_rng);
  out.loss = total / static_cast<double>(batch.size());
  for_each_parameter(out.grads, [](const std::string& name, const Matrix& g) {
    if (!g.allFinite()) throw NumericFault("non-finite gradient in parameter " + name);
  });
  return out;
}

EncodedSource encode(const Seq2SeqModel& model, std::span<const int> source) {
  const std::vector<int> dummy_target{token::kEos};
  check_sequences(model.config(), source, dummy_target);
  ForwardCache cache;
  EncodedSource enc;
  enc.memory = run_encoder(model, source, cache, nullptr);
  for (const auto& layer : model.weights().decoder) {
    enc.cross_k.push_back(linear_forward(layer.cross_attn.k, enc.memory));
    enc.cross_v.push_back(linear_forward(layer.cross_attn.v, enc.memory));
  }
  return enc;
}

DecoderState start_decoding(const Seq2SeqModel& model) {
  DecoderState state;
  const auto layers = model.weights().decoder.size();
  state.self_k.assign(layers, Matrix(0, model.config().d_model));
  state.self_v.assign(layers, Matrix(0, model.config().d_model));
  return state;
}

RowVector decode_step(const Seq2SeqModel& model, const EncodedSource& encoded, DecoderState& state, int token) {
  const auto& cfg = model.config();
  const auto& w = model.weights();
  if (state.length >= cfg.max_positions) throw InputError("decoder exceeded max positional length");
  if (token < 0 || token >= cfg.vocab_size) throw InputError("token id out of range");

  Matrix x = w.embedding.row(token) + model.positional().row(state.length);
  for (std::size_t l = 0; l < w.decoder.size(); ++l) {
    const auto& layer = w.decoder[l];
    const Matrix a = layer_norm_forward(layer.ln1, x, nullptr);
    const Matrix q = linear_forward(layer.self_attn.q, a);
    auto append = [](Matrix& cache, const Matrix& row) {
      cache.conservativeResize(cache.rows() + 1, Eigen::NoChange);
      cache.row(cache.rows() - 1) = row.row(0);
    };
    append(state.self_k[l], linear_forward(layer.self_attn.k, a));
    append(state.self_v[l], linear_forward(layer.self_attn.v, a));
    x += linear_forward(layer.self_attn.o, attend(q, state.self_k[l], state.self_v[l], cfg.heads, false, nullptr));
    const Matrix b = layer_norm_forward(layer.ln2, x, nullptr);
    const Matrix cq = linear_forward(layer.cross_attn.q, b);
    x += linear_forward(layer.cross_attn.o,
                        attend(cq, encoded.cross_k[l], encoded.cross_v[l], cfg.heads, false, nullptr));
    const Matrix e = layer_norm_forward(layer.ln3, x, nullptr);
    x += feed_forward(layer.ffn, e, nullptr);
  }
  ++state.length;
  const Matrix h = layer_norm_forward(w.decoder_norm, x, nullptr);
  return linear_forward(w.output, h).row(0);
}

RowVector log_softmax(const RowVector& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

double score_sequence(const Seq2SeqModel& model, const Tokenizer& tokenizer, std::span<const int> source,
                      std::string_view candidate, bool include_eos) {
  auto target = tokenizer.tokenize(candidate);
  if (include_eos) target.push_back(token::kEos);
  if (target.empty()) return 0.0;
  const auto result = forward(model, source, target);
  double total = 0.0;
  for (std::size_t t = 0; t < target.size(); ++t)
    total += log_softmax(result.logits.row(static_cast<Eigen::Index>(t)))(target[t]);
  return total;
}

void save_checkpoint(const std::string& path, const Seq2SeqModel& model, const Tokenizer& tokenizer) {
  const auto& cfg = model.config();
  if (tokenizer.vocab_size() != cfg.vocab_size)
    throw ConfigMismatchError("tokenizer vocabulary does not match model vocab_size");
  ByteWriter w;
  for (int v : {cfg.vocab_size, cfg.d_model, cfg.encoder_layers, cfg.decoder_layers, cfg.heads, cfg.ff_width,
                cfg.max_positions})
    w.put_u64(static_cast<std::uint64_t>(v));
  w.put_f64(cfg.dropout);
  w.put_string(utf8::encode(tokenizer.alphabet()));
  w.put_u64(parameter_count(model.weights()));
  for_each_parameter(model.weights(), [&](const std::string& name, const Matrix& m) {
    w.put_string(name);
    w.put_u64(static_cast<std::uint64_t>(m.rows()));
    w.put_u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) w.put_f64(m.data()[i]);
  });
  write_container(path, kCheckpointMagic, kCheckpointVersion, w.bytes());
}

Checkpoint load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected) {
  const auto payload = read_container(path, kCheckpointMagic, kCheckpointVersion);
  ByteReader r(payload);
  ModelConfig cfg;
  int* fields[] = {&cfg.vocab_size, &cfg.d_model, &cfg.encoder_layers, &cfg.decoder_layers,
                   &cfg.heads,      &cfg.ff_width, &cfg.max_positions};
  for (int* f : fields) {
    const auto v = r.get_u64();
    if (v > 1u << 24) throw FormatError(path + ": implausible config value");
    *f = static_cast<int>(v);
  }
  cfg.dropout = r.get_f64();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (expected && !(*expected == cfg)) throw ConfigMismatchError(path + ": checkpoint config differs from expected");

  Tokenizer tokenizer(utf8::decode(r.get_string()));
  if (tokenizer.vocab_size() != cfg.vocab_size)
    throw ConfigMismatchError(path + ": tokenizer vocabulary does not match vocab_size");

  ModelWeights weights = zeros_like(init_weights(cfg, 0));
  const auto total = r.get_u64();
  if (total != parameter_count(weights)) throw ConfigMismatchError(path + ": parameter count mismatch");
  for_each_parameter(weights, [&](const std::string& name, Matrix& m) {
    const auto stored = r.get_string();
    const auto rows = r.get_u64();
    const auto cols = r.get_u64();
    if (stored != name || rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols()))
      throw ConfigMismatchError(path + ": unexpected tensor " + stored);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.get_f64();
  });
  if (r.remaining() != 0) throw FormatError(path + ": trailing bytes after tensors");
  return Checkpoint{Seq2SeqModel(cfg, std::move(weights)), std::move(tokenizer)};
}

}  // namespace qac
