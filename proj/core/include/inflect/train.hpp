#pragma once

// Three-phase training schedule:
//   1. warm-up on original triples plus copy tasks until copying works;
//   2. high-resource, low-resource and hallucinated data with interspersed
//      copy tasks and the language discriminator;
//   3. low-resource fine-tuning with scheduled sampling.
// Phases 2 and 3 evaluate on the dev set after every epoch, share one
// learning-rate schedule and feed one CheckpointSet.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "inflect/corpus.hpp"
#include "inflect/model.hpp"
#include "inflect/random.hpp"

namespace inflect {

struct TrainingConfig {
  double lr = 0.1;
  double lr_decay = 0.5;
  int decay_patience = 6;
  std::array<int, 3> max_epochs = {20, 40, 40};
  std::array<int, 3> batch_sizes = {10, 10, 1};
  double warmup_copy_threshold = 0.75;
  double phase2_copy_prob = 0.30;
  // Probability of feeding the gold character in phase 3.
  double phase3_sample_prob = 0.5;
  double coverage_lambda = 0.1;
  double adv_weight = 1.0;
  double reverse_lambda = 1.0;
  bool discriminator = true;
  // Global gradient-norm clipping; 0 disables it.
  double clip_threshold = 5.0;
  std::size_t copy_eval_size = 200;
  std::uint64_t seed = 1;
  // Hallucinated triples generated from the low-resource data; 0 disables.
  std::size_t hallucinate = 0;
  int min_stem = 3;
  unsigned workers = 1;
  ModelConfig model;

  // UsageError naming the offending field.
  void validate() const;
};

// Flat "key = value" text, one TrainingConfig field per line; '#' starts a
// comment. Keys mirror the field names (model dimensions use their
// ModelConfig names). UsageError on unknown keys or malformed values.
void apply_config_value(TrainingConfig& cfg, const std::string& key, const std::string& value);
void apply_config_text(TrainingConfig& cfg, std::istream& in, const std::string& source);
// Every field, fixed order and formatting; parsing it back reproduces `cfg`.
std::string format_config(const TrainingConfig& cfg);

struct Snapshot {
  ModelParams params;
  double accuracy = 0.0;
  double distance = 0.0;
  int evaluation = -1;  // index of the dev evaluation that produced it
};

struct CheckpointSet {
  std::optional<Snapshot> best_accuracy;
  std::optional<Snapshot> best_levenshtein;
  std::optional<Snapshot> both_improved;

  bool empty() const { return !best_accuracy; }
};

struct CheckpointUpdate {
  bool accuracy = false;
  bool levenshtein = false;
  bool both = false;
};

// Replaces a slot only on strict improvement; both_improved compares against
// its own stored pair. The first call fills every slot.
CheckpointUpdate update_checkpoints(CheckpointSet& cs, const ModelParams& p, double accuracy, double distance,
                                    int evaluation);

// w <- w - lr * grad for every tensor, then clears the gradients. When
// clip_threshold > 0 and the global gradient norm exceeds it, gradients are
// rescaled to that norm first. NumericError naming the tensor on a
// non-finite gradient (parameters are left untouched). Returns the norm.
double sgd_step(std::span<const std::pair<std::string, ad::Tensor*>> params, double lr, double clip_threshold = 0.0);

struct EpochRecord {
  int phase = 0;
  int epoch = 0;  // 1-based within the phase
  double lr = 0.0;
  double train_loss = 0.0;  // mean per item
  double dev_accuracy = 0.0;  // phase 1: copy-task accuracy
  double dev_distance = 0.0;  // phase 1: copy-task mean distance
  bool decayed = false;
};

// "phase\tepoch\tlr\ttrain_loss\tdev_acc\tdev_lev\tdecayed"
std::string format_log_line(const EpochRecord& r);

struct DevScores {
  double accuracy = 0.0;
  double distance = 0.0;
};

// Greedy (ensemble) predictions, rendered with `vocab`.
std::vector<Chars> predict_forms(std::span<const ModelParams* const> models, const Vocabulary& vocab,
                                 std::span<const Example> data);
DevScores score(std::span<const ModelParams* const> models, const Vocabulary& vocab, std::span<const Example> data);

// Mean |argmax_n alpha_x(k, n) - k| over teacher-forced decoder steps k < N
// of the given copy tasks.
double copy_attention_offset(const ModelParams& p, const Vocabulary& vocab, std::span<const Example> copies);

// Copy tasks for both members of every example.
std::vector<Example> copy_tasks(std::span<const Example> data);

class Trainer {
 public:
  Trainer(const TrainingConfig& cfg, Vocabulary vocab);

  // Returns the number of epochs run.
  int phase1(std::span<const Example> train);
  void phase2(std::span<const Example> high, std::span<const Example> low, std::span<const Example> hallucinated,
              std::span<const Example> dev);
  void phase3(std::span<const Example> low, std::span<const Example> dev);
  // Fills empty checkpoint slots with the current parameters.
  void finalize();

  const TrainingConfig& config() const { return cfg_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  const CheckpointSet& checkpoints() const { return checkpoints_; }
  const std::vector<EpochRecord>& history() const { return history_; }
  double learning_rate() const { return lr_; }
  double last_copy_accuracy() const { return last_copy_accuracy_; }
  const std::vector<Example>& copy_eval_set() const { return copy_eval_; }

  // Called with (phase, item) for every item handed to the optimizer.
  std::function<void(int, const Example&)> on_item;
  std::function<void(const EpochRecord&)> on_epoch;

 private:
  double train_epoch(int phase, std::span<const Example> items, int batch_size, const LossWeights& weights,
                     double teacher_forcing, Rng* sampling);
  void evaluate_and_schedule(EpochRecord& record, std::span<const Example> dev);
  void record(const EpochRecord& r);
  LossWeights weights(bool discriminator) const;

  TrainingConfig cfg_;
  Vocabulary vocab_;
  ModelParams params_;
  CheckpointSet checkpoints_;
  std::vector<EpochRecord> history_;
  std::vector<Example> copy_eval_;
  double lr_;
  double best_dev_accuracy_ = -1.0;
  int non_improving_ = 0;
  int evaluations_ = 0;
  double last_copy_accuracy_ = 0.0;
};

}  // namespace inflect
