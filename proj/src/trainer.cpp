#include "qac/trainer.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "qac/errors.hpp"
#include "qac/random.hpp"

namespace qac {

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
    throw ConfigError("invalid Adam hyperparameters");
  if (max_grad_norm < 0.0) throw ConfigError("gradient clip must be non-negative");
}

double mean_loss(const Seq2SeqModel& model, std::span<const TrainingPair> pairs) {
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : pairs) total += forward(model, p.source, p.target).loss;
  return total / static_cast<double>(pairs.size());
}

TrainingRun train(Seq2SeqModel& model, std::span<const TrainingPair> train_pairs,
                  std::span<const TrainingPair> validation_pairs, const TrainingConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train_pairs.empty() || validation_pairs.empty())
    throw PreconditionError("training needs non-empty train and validation splits");

  TrainingRun run;
  run.dataset_size = train_pairs.size();
  run.initial_train_loss = mean_loss(model, train_pairs);
  run.initial_validation_loss = mean_loss(model, validation_pairs);
  run.best_validation_loss = run.initial_validation_loss;
  ModelWeights best = model.weights();

  ModelWeights first_moment = zeros_like(model.weights());
  ModelWeights second_moment = zeros_like(model.weights());

  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 1));
  std::mt19937_64 dropout_rng(derive_seed(config.seed, 2));
  std::vector<std::size_t> order(train_pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const std::size_t batches_per_epoch = (train_pairs.size() + config.batch_size - 1) / config.batch_size;
  const auto total_steps = static_cast<double>(batches_per_epoch * config.epochs);
  std::size_t step = 0;
  std::size_t epochs_without_improvement = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    deterministic_shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::vector<TrainingPair> batch;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      batch.clear();
      for (std::size_t i = b * config.batch_size; i < std::min(order.size(), (b + 1) * config.batch_size); ++i)
        batch.push_back(train_pairs[order[i]]);

      BatchGradients g;
      try {
        g = backward(model, batch, 1.0, &dropout_rng);
      } catch (const NumericFault& e) {
        throw NumericFault("training diverged at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step + 1) + ": " + e.what());
      }
      epoch_loss += g.loss * static_cast<double>(batch.size());

      double clip = 1.0;
      if (config.max_grad_norm > 0.0) {
        double sq = 0.0;
        for_each_parameter(g.grads, [&](const std::string&, const Matrix& m) { sq += m.squaredNorm(); });
        const double norm = std::sqrt(sq);
        if (norm > config.max_grad_norm) clip = config.max_grad_norm / norm;
      }

      ++step;
      const double lr = config.learning_rate * std::max(0.0, 1.0 - static_cast<double>(step - 1) / total_steps);
      const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));

      std::vector<Matrix*> grads, m1, m2;
      for_each_parameter(g.grads, [&](const std::string&, Matrix& m) { grads.push_back(&m); });
      for_each_parameter(first_moment, [&](const std::string&, Matrix& m) { m1.push_back(&m); });
      for_each_parameter(second_moment, [&](const std::string&, Matrix& m) { m2.push_back(&m); });
      std::size_t k = 0;
      for_each_parameter(model.weights(), [&](const std::string&, Matrix& param) {
        const Matrix grad = *grads[k] * clip;
        *m1[k] = config.beta1 * *m1[k] + (1.0 - config.beta1) * grad;
        *m2[k] = config.beta2 * *m2[k] + (1.0 - config.beta2) * grad.cwiseProduct(grad);
        param.array() -= lr * (m1[k]->array() / correction1) /
                         ((m2[k]->array() / correction2).sqrt() + config.epsilon);
        ++k;
      });
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss / static_cast<double>(train_pairs.size());
    record.validation_loss = mean_loss(model, validation_pairs);
    if (!std::isfinite(record.train_loss) || !std::isfinite(record.validation_loss))
      throw NumericFault("training diverged at epoch " + std::to_string(epoch));
    run.epochs.push_back(record);
    if (on_epoch) on_epoch(record);

    if (run.best_epoch == 0 || record.validation_loss < run.best_validation_loss) {
      run.best_epoch = epoch;
      run.best_validation_loss = record.validation_loss;
      best = model.weights();
      epochs_without_improvement = 0;
    } else {
      ++epochs_without_improvement;
      if (config.patience > 0 && epochs_without_improvement >= config.patience) {
        run.stopped_early = epoch < config.epochs;
        break;
      }
    }
  }
  model.weights() = std::move(best);
  return run;
}

std::vector<TrainingPair> make_training_pairs(std::span<const QacExample> examples, const Tokenizer& tokenizer,
                                              const PopularityTrie* main, const SuffixTrie* synth,
                                              const ContextOptions& context, std::size_t max_source_length,
                                              std::size_t max_target_length) {
  std::vector<TrainingPair> pairs;
  pairs.reserve(examples.size());
  for (const auto& ex : examples) {
    const auto input = make_augmented_input(ex.session_queries, ex.prefix, main, synth, context);
    TrainingPair pair;
    pair.source = encode_source(tokenizer, input, max_source_length);
    pair.target = tokenizer.tokenize(ex.target.text());
    if (max_target_length > 0 && pair.target.size() + 1 > max_target_length) pair.target.resize(max_target_length - 1);
    pair.target.push_back(token::kEos);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace qac
