#pragma once

#include "llara/core/adam.hpp"
#include "llara/core/archive.hpp"
#include "llara/recsys/model.hpp"

#include <map>
#include <string>
#include <vector>

namespace llara::recsys {

class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Recommender training recipe. Defaults: lr, d, batch, the L2 grid and the
/// seed set follow the published protocol; epochs/patience are our choice.
struct RecTrainConfig {
  double lr = 1e-3;
  int batch = 256;
  std::vector<double> l2_grid = {1e-3, 1e-4, 1e-5, 1e-6, 1e-7};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  int epochs = 50;
  int patience = 5;
  bool sliding_windows = true;
  EncoderConfig encoder;

  void validate() const;
  nlohmann::json to_json() const;
  static RecTrainConfig from_json(const nlohmann::json& j);
};

struct RecRunResult {
  double l2 = 0;
  std::uint64_t seed = 0;
  int epochs_run = 0;
  int best_epoch = 0;  // 0 = the initialization
  double best_val_hr = 0;
  std::vector<double> val_curve;
  std::vector<double> loss_curve;

  nlohmann::json to_json() const;
};

/// HitRatio@1 of candidate argmax over `examples`.
double hit_ratio_at_1(RecommenderModel<float>& model, const std::vector<corpus::SequenceExample>& examples);

/// One (l2, seed) run with early stopping on validation HitRatio@1. The
/// trainer is resumable: `save_state` captures weights, optimizer moments,
/// RNG and bookkeeping at an epoch boundary.
class RecTrainer {
 public:
  RecTrainer(std::vector<corpus::SequenceExample> train_windows, const std::vector<corpus::SequenceExample>* val,
             std::int64_t n_items, RecTrainConfig cfg, double l2, std::uint64_t seed);

  RecTrainer(const RecTrainer&) = delete;
  RecTrainer& operator=(const RecTrainer&) = delete;

  bool finished() const;
  void run_epoch();
  void run();

  int epoch() const { return epoch_; }
  const RecommenderModel<float>& best_model() const { return best_; }
  RecommenderModel<float>& current_model() { return model_; }
  RecRunResult result() const { return result_; }

  void save_state(const std::string& path) const;
  void load_state(const std::string& path);

 private:
  double evaluate();

  std::vector<corpus::SequenceExample> windows_;
  const std::vector<corpus::SequenceExample>* val_;
  RecTrainConfig cfg_;
  RecommenderModel<float> model_;
  RecommenderModel<float> best_;
  optim::Adam<float> adam_;
  std::mt19937_64 rng_;
  int epoch_ = 0;
  int since_best_ = 0;
  RecRunResult result_;
};

struct RecTrainResult {
  double best_l2 = 0;
  double seed_mean_val_hr = 0;
  std::map<double, double> seed_mean_by_l2;
  std::vector<RecRunResult> grid;        // every (l2, seed) run
  std::vector<RecRunResult> best_runs;   // runs at best_l2, one per seed
  std::vector<RecommenderModel<float>> models;  // aligned with best_runs

  nlohmann::json metrics_json() const;
};

/// Grid search over l2 x seeds; keeps the per-seed models of the l2 value
/// with the highest seed-mean validation HitRatio@1.
RecTrainResult train_recommender(const std::vector<corpus::UserSequence>& train,
                                 const std::vector<corpus::SequenceExample>& val, std::int64_t n_items,
                                 const RecTrainConfig& cfg);

void save_recommender(const std::string& path, RecommenderModel<float>& model, const nlohmann::json& extra = {});
RecommenderModel<float> load_recommender(const std::string& path);

}  // namespace llara::recsys
