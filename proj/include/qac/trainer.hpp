#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "qac/augmentation.hpp"
#include "qac/corpus.hpp"
#include "qac/model.hpp"

namespace qac {

struct TrainingConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t patience = 2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double max_grad_norm = 1.0;
  std::uint64_t seed = 42;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainingRun {
  double initial_train_loss = 0.0;
  double initial_validation_loss = 0.0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // epoch whose weights were kept; the first epoch always counts
  double best_validation_loss = 0.0;
  std::size_t dataset_size = 0;
  bool stopped_early = false;
};

/// Mean per-example loss without dropout.
double mean_loss(const Seq2SeqModel& model, std::span<const TrainingPair> pairs);

/// Adam with linear learning-rate decay to zero over all steps. On return
/// `model` holds the weights with the lowest validation loss. Throws
/// NumericFault (with epoch and step) if the loss diverges.
TrainingRun train(Seq2SeqModel& model, std::span<const TrainingPair> train_pairs,
                  std::span<const TrainingPair> validation_pairs, const TrainingConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Encodes examples into (source, target + [EOS]) pairs using the given
/// tries and context switches. Targets are cut to max_target_length tokens
/// including [EOS].
std::vector<TrainingPair> make_training_pairs(std::span<const QacExample> examples, const Tokenizer& tokenizer,
                                              const PopularityTrie* main, const SuffixTrie* synth,
                                              const ContextOptions& context,
                                              std::size_t max_source_length = kMaxSourceLength,
                                              std::size_t max_target_length = kMaxTargetLength);

}  // namespace qac
