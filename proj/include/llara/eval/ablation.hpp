#pragma once

// Controlled comparisons: item representations (four modes) and training
// strategies (direct, two-stage, curriculum) under shared seeds and budgets.

#include "llara/curriculum/trainer.hpp"
#include "llara/eval/eval.hpp"

#include <functional>

namespace llara::eval {

struct AblationSetup {
  const fusion::Bundle* base = nullptr;  // pretrained LM, recommender, vocabulary
  const std::vector<corpus::SequenceExample>* train = nullptr;
  const std::vector<corpus::SequenceExample>* val = nullptr;
  const std::vector<corpus::SequenceExample>* test = nullptr;
  curriculum::StrategyConfig strategy;  // budget shared by every run
  std::vector<std::uint64_t> seeds = {0};
  std::uint64_t eval_seed = 0;
  std::string output_dir;  // per-run logs and checkpoints; empty for none
  std::function<void(const std::string&)> progress;
};

struct RunResult {
  std::string label;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  EvalReport free, constrained;
  std::vector<double> val_curve;
  int best_epoch = 0;
  double hard_fraction = 0;

  nlohmann::json to_json() const;
};

struct AblationRow {
  std::string label;
  std::vector<RunResult> runs;

  /// Mean and population standard deviation over the runs that finished.
  std::pair<double, double> stat(double EvalReport::*field, bool constrained) const;
  bool any_failed() const;
};

struct AblationTable {
  std::string suite;
  std::vector<AblationRow> rows;

  nlohmann::json to_json() const;
  std::string markdown() const;
  std::string csv() const;
};

/// Trains a copy of the base bundle in `mode` under `kind` with `seed` and
/// scores it on the test examples with both decodings.
RunResult train_and_evaluate(const AblationSetup& setup, const std::string& label, fusion::Mode mode,
                             curriculum::Strategy kind, std::uint64_t seed);

/// Numeric index, behavioral only, text only and hybrid. Hybrid follows the
/// setup's strategy, the others train directly in their own mode.
AblationTable run_rq2(const AblationSetup& setup);

/// Direct, two-stage and curriculum training of the hybrid mode.
AblationTable run_rq3(const AblationSetup& setup);

void write_table(const std::string& dir, const AblationTable& table, const nlohmann::json& meta);

}  // namespace llara::eval
