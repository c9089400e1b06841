#pragma once

#include "llara/core/adam.hpp"
#include "llara/curriculum/schedule.hpp"
#include "llara/fusion/bundle.hpp"

#include <functional>
#include <ostream>

namespace llara::curriculum {

class DivergenceError : public Error {
 public:
  using Error::Error;
};

struct StepRecord {
  long long step = 0;  // 1-based
  int epoch = 0;       // 1-based
  double progress = 0;  // step / total
  Task task = Task::Easy;
  double loss = 0;
  double lr = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

/// Validation score of the bundle when prompts are rendered in `mode`.
using Validator = std::function<double(fusion::Bundle&, fusion::Mode)>;

/// Prompt tuning of a bundle under one strategy. Easy steps render prompts
/// as text only; hard steps render them in `target_mode` (hybrid for the
/// full method). LoRA factors update every step, the placeholder row on easy
/// steps and the adapter on hard steps.
class Trainer {
 public:
  Trainer(fusion::Bundle& bundle, std::vector<corpus::SequenceExample> train, StrategyConfig cfg,
          fusion::Mode target_mode = fusion::Mode::Hybrid);

  long long total_steps() const { return total_; }
  long long steps_done() const { return step_; }
  int epochs_done() const { return epoch_; }
  bool finished() const { return epoch_ >= cfg_.epochs; }

  void set_log(std::ostream* log) { log_ = log; }
  void set_validator(Validator v) { validator_ = std::move(v); }

  /// One optimizer step over `batch`; returns its record.
  StepRecord step(const std::vector<const corpus::SequenceExample*>& batch);
  /// One pass over the training examples, then validation.
  void run_epoch();
  void run();

  const std::vector<StepRecord>& records() const { return records_; }
  const std::vector<double>& val_curve() const { return val_curve_; }
  int best_epoch() const { return best_epoch_; }
  double best_val() const { return best_val_; }
  /// Mode used for validation after the latest epoch.
  fusion::Mode validation_mode() const;

  /// Puts the best-validation weights back into the bundle.
  void restore_best();
  const io::ArrayArchive& best_snapshot() const { return best_; }

 private:
  fusion::Bundle* bundle_;
  std::vector<corpus::SequenceExample> train_;
  StrategyConfig cfg_;
  fusion::Mode target_;
  fusion::PromptRenderer renderer_;
  optim::Adam<float> lora_opt_, placeholder_opt_, adapter_opt_;
  std::mt19937_64 rng_;
  long long total_ = 0, step_ = 0;
  int epoch_ = 0;
  bool hard_seen_ = false;
  std::ostream* log_ = nullptr;
  Validator validator_;
  std::vector<StepRecord> records_;
  std::vector<double> val_curve_;
  int best_epoch_ = -1;
  double best_val_ = -1;
  bool best_eligible_ = false;
  io::ArrayArchive best_;
};

struct PretrainConfig {
  int epochs = 3;
  int batch = 32;
  double max_lr = 1e-3;
  double warmup_fraction = 0.05;
  double weight_decay = 1e-5;
  std::uint64_t seed = 0;
  bool all_tokens = true;       // next-token loss at every position
  double response_weight = 1.0;  // extra weight on the answer tokens
  // Show a random-size subset of each candidate list (target kept, order
  // preserved). Short lists make copying the answer from the prompt easy to
  // pick up.
  bool vary_candidates = true;
  // Grow the largest subset size linearly over the epochs, so the first
  // epochs see lists of one or two titles only.
  bool candidate_ramp = false;

  void validate() const;
  nlohmann::json to_json() const;
  static PretrainConfig from_json(const nlohmann::json& j);
};

/// Copy of `ex` keeping the target and a uniformly sized random subset
/// (0 .. n-1, or 0 .. max_negatives when that is smaller) of the negatives,
/// in presentation order.
corpus::SequenceExample subsample_candidates(const corpus::SequenceExample& ex, std::mt19937_64& rng,
                                             std::size_t max_negatives = static_cast<std::size_t>(-1));

/// Trains the base LM from scratch with all parameters free, on text-only
/// renderings of `examples`. The loss is the all-position next-token loss
/// (if `all_tokens`) plus `response_weight` times the answer-token loss.
/// Returns the mean loss of each epoch.
std::vector<double> pretrain_base(lm::CausalLm<float>& lm, const fusion::PromptRenderer& renderer,
                                  const std::vector<corpus::SequenceExample>& examples, const PretrainConfig& cfg,
                                  std::ostream* log = nullptr);

}  // namespace llara::curriculum
