#include "llara/recsys/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace llara::recsys {

std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::Gru: return "gru";
    case EncoderKind::Cnn: return "cnn";
    case EncoderKind::SelfAttention: return "self_attention";
  }
  return "?";
}

EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "gru" || s == "gru4rec") return EncoderKind::Gru;
  if (s == "cnn" || s == "caser") return EncoderKind::Cnn;
  if (s == "self_attention" || s == "sasrec") return EncoderKind::SelfAttention;
  throw Error("unknown encoder kind '" + s + "' (gru | cnn | self_attention)");
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"kind", to_string(kind)},
          {"dim", dim},
          {"history", history},
          {"init_stddev", init_stddev},
          {"vertical_filters", vertical_filters},
          {"horizontal_filters", horizontal_filters},
          {"heights", heights},
          {"layers", layers},
          {"heads", heads}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "kind") c.kind = parse_encoder_kind(v.get<std::string>());
    else if (k == "dim") c.dim = v.get<int>();
    else if (k == "history") c.history = v.get<int>();
    else if (k == "init_stddev") c.init_stddev = v.get<double>();
    else if (k == "vertical_filters") c.vertical_filters = v.get<int>();
    else if (k == "horizontal_filters") c.horizontal_filters = v.get<int>();
    else if (k == "heights") c.heights = v.get<std::array<int, 3>>();
    else if (k == "layers") c.layers = v.get<int>();
    else if (k == "heads") c.heads = v.get<int>();
    else throw Error("recommender.encoder: unknown key '" + k + "'");
  }
  if (c.dim < 1 || c.heads < 1 || c.dim % c.heads != 0) throw Error("recommender.encoder: dim must be a positive multiple of heads");
  return c;
}

void RecTrainConfig::validate() const {
  if (l2_grid.empty()) throw Error("recommender: l2 grid must not be empty");
  if (seeds.empty()) throw Error("recommender: seed set must not be empty");
  auto s = seeds;
  std::sort(s.begin(), s.end());
  if (std::adjacent_find(s.begin(), s.end()) != s.end()) throw Error("recommender: seeds must be distinct");
  if (batch < 1 || epochs < 0 || patience < 1 || !(lr > 0)) throw Error("recommender: invalid batch/epochs/patience/lr");
}

nlohmann::json RecTrainConfig::to_json() const {
  return {{"lr", lr},           {"batch", batch},       {"l2_grid", l2_grid},
          {"seeds", seeds},     {"epochs", epochs},     {"patience", patience},
          {"sliding_windows", sliding_windows}, {"encoder", encoder.to_json()}};
}

RecTrainConfig RecTrainConfig::from_json(const nlohmann::json& j) {
  RecTrainConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "lr") c.lr = v.get<double>();
    else if (k == "batch") c.batch = v.get<int>();
    else if (k == "l2_grid") c.l2_grid = v.get<std::vector<double>>();
    else if (k == "seeds") c.seeds = v.get<std::vector<std::uint64_t>>();
    else if (k == "epochs") c.epochs = v.get<int>();
    else if (k == "patience") c.patience = v.get<int>();
    else if (k == "sliding_windows") c.sliding_windows = v.get<bool>();
    else if (k == "encoder") c.encoder = EncoderConfig::from_json(v);
    else throw Error("recommender: unknown key '" + k + "'");
  }
  c.validate();
  return c;
}

nlohmann::json RecRunResult::to_json() const {
  return {{"l2", l2},
          {"seed", seed},
          {"epochs_run", epochs_run},
          {"best_epoch", best_epoch},
          {"best_val_hit_ratio_1", best_val_hr},
          {"val_curve", val_curve},
          {"loss_curve", loss_curve}};
}

double hit_ratio_at_1(RecommenderModel<float>& model, const std::vector<corpus::SequenceExample>& examples) {
  if (examples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& ex : examples) hits += predict_from_candidates(model, ex) == ex.target;
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

RecTrainer::RecTrainer(std::vector<corpus::SequenceExample> train_windows, const std::vector<corpus::SequenceExample>* val,
                       std::int64_t n_items, RecTrainConfig cfg, double l2, std::uint64_t seed)
    : windows_(std::move(train_windows)), val_(val), cfg_(std::move(cfg)), model_(n_items, cfg_.encoder, seed),
      rng_(seed ^ 0x9E3779B97F4A7C15ULL) {
  if (windows_.empty()) throw Error("train_recommender: empty training split");
  optim::AdamConfig ac;
  ac.lr = cfg_.lr;
  ac.weight_decay = l2;
  ac.decoupled = false;
  adam_ = optim::Adam<float>(model_.parameters(), ac);
  best_ = model_;
  result_.l2 = l2;
  result_.seed = seed;
  result_.best_val_hr = val_ && !val_->empty() ? evaluate() : 0.0;
}

bool RecTrainer::finished() const { return epoch_ >= cfg_.epochs || since_best_ >= cfg_.patience; }

double RecTrainer::evaluate() { return hit_ratio_at_1(model_, *val_); }

void RecTrainer::run_epoch() {
  std::vector<std::size_t> order(windows_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  double loss_sum = 0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch));
    std::vector<std::vector<ItemId>> hist;
    std::vector<Index> targets;
    for (std::size_t i = start; i < end; ++i) {
      hist.push_back(windows_[order[i]].history);
      targets.push_back(windows_[order[i]].target);
    }
    adam_.zero_grad();
    auto loss = ad::cross_entropy(model_.catalog_logits(model_.encode(hist)), targets);
    if (!std::isfinite(loss.scalar()))
      throw DivergenceError("recommender loss became non-finite at epoch " + std::to_string(epoch_ + 1) +
                            ", batch " + std::to_string(batches) + " (l2=" + std::to_string(result_.l2) +
                            ", seed=" + std::to_string(result_.seed) + ")");
    ad::backward(loss);
    adam_.step();
    loss_sum += loss.scalar();
    ++batches;
  }
  ++epoch_;
  result_.epochs_run = epoch_;
  result_.loss_curve.push_back(loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1)));
  const double hr = val_ && !val_->empty() ? evaluate() : 0.0;
  result_.val_curve.push_back(hr);
  // Without a validation split the latest weights are kept.
  if (!val_ || val_->empty() || hr > result_.best_val_hr) {
    result_.best_val_hr = hr;
    result_.best_epoch = epoch_;
    best_ = model_;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
}

void RecTrainer::run() {
  while (!finished()) run_epoch();
}

void RecTrainer::save_state(const std::string& path) const {
  io::ArrayArchive ar;
  auto& self = const_cast<RecTrainer&>(*this);
  io::store_params(ar, self.model_.parameters(), "model.");
  io::store_params(ar, self.best_.parameters(), "best.");
  auto& m = self.adam_.first_moments();
  auto& v = self.adam_.second_moments();
  for (std::size_t i = 0; i < m.size(); ++i) {
    ar.put("adam.m." + std::to_string(i), m[i]);
    ar.put("adam.v." + std::to_string(i), v[i]);
  }
  std::ostringstream rs;
  rs << rng_;
  ar.manifest = {{"kind", "recommender_train_state"},
                 {"epoch", epoch_},
                 {"since_best", since_best_},
                 {"adam_steps", self.adam_.steps_taken()},
                 {"rng", rs.str()},
                 {"result", result_.to_json()},
                 {"config", cfg_.to_json()}};
  ar.save(path);
}

void RecTrainer::load_state(const std::string& path) {
  const auto ar = io::ArrayArchive::load(path);
  if (ar.manifest.value("kind", "") != "recommender_train_state") throw io::ArchiveError("'" + path + "' is not a recommender train state");
  if (ar.manifest.at("result").at("seed").get<std::uint64_t>() != result_.seed ||
      ar.manifest.at("result").at("l2").get<double>() != result_.l2)
    throw io::ArchiveError("train state belongs to a different (l2, seed) run");
  auto params = model_.parameters();
  io::load_params(ar, params, "model.");
  auto best_params = best_.parameters();
  io::load_params(ar, best_params, "best.");
  auto& m = adam_.first_moments();
  auto& v = adam_.second_moments();
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = ar.get<float>("adam.m." + std::to_string(i));
    v[i] = ar.get<float>("adam.v." + std::to_string(i));
  }
  adam_.set_steps(ar.manifest.at("adam_steps").get<long long>());
  std::istringstream rs(ar.manifest.at("rng").get<std::string>());
  rs >> rng_;
  epoch_ = ar.manifest.at("epoch").get<int>();
  since_best_ = ar.manifest.at("since_best").get<int>();
  const auto& r = ar.manifest.at("result");
  result_.epochs_run = r.at("epochs_run").get<int>();
  result_.best_epoch = r.at("best_epoch").get<int>();
  result_.best_val_hr = r.at("best_val_hit_ratio_1").get<double>();
  result_.val_curve = r.at("val_curve").get<std::vector<double>>();
  result_.loss_curve = r.at("loss_curve").get<std::vector<double>>();
}

nlohmann::json RecTrainResult::metrics_json() const {
  nlohmann::json grid_json = nlohmann::json::array();
  for (const auto& g : grid) grid_json.push_back(g.to_json());
  nlohmann::json by_l2 = nlohmann::json::array();
  for (const auto& [l2, hr] : seed_mean_by_l2) by_l2.push_back({{"l2", l2}, {"seed_mean_val_hit_ratio_1", hr}});
  return {{"best_l2", best_l2}, {"seed_mean_val_hit_ratio_1", seed_mean_val_hr}, {"by_l2", by_l2}, {"runs", grid_json}};
}

RecTrainResult train_recommender(const std::vector<corpus::UserSequence>& train,
                                 const std::vector<corpus::SequenceExample>& val, std::int64_t n_items,
                                 const RecTrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw Error("train_recommender: empty training split");
  auto windows = corpus::window_examples(train, n_items, cfg.encoder.history, cfg.sliding_windows);
  RecTrainResult out;
  double best_mean = -1;
  for (double l2 : cfg.l2_grid) {
    std::vector<RecRunResult> runs;
    std::vector<RecommenderModel<float>> models;
    double total = 0;
    for (auto seed : cfg.seeds) {
      RecTrainer trainer(windows, &val, n_items, cfg, l2, seed);
      trainer.run();
      runs.push_back(trainer.result());
      models.push_back(trainer.best_model());
      total += trainer.result().best_val_hr;
      out.grid.push_back(trainer.result());
    }
    const double mean = total / static_cast<double>(cfg.seeds.size());
    out.seed_mean_by_l2[l2] = mean;
    if (mean > best_mean) {
      best_mean = mean;
      out.best_l2 = l2;
      out.best_runs = std::move(runs);
      out.models = std::move(models);
    }
  }
  out.seed_mean_val_hr = best_mean;
  return out;
}

void save_recommender(const std::string& path, RecommenderModel<float>& model, const nlohmann::json& extra) {
  io::ArrayArchive ar;
  io::store_params(ar, model.parameters());
  ar.manifest = {{"kind", "recommender"},
                 {"encoder", model.config().to_json()},
                 {"d", model.config().dim},
                 {"n_items", model.n_items()}};
  for (const auto& [k, v] : extra.items()) ar.manifest[k] = v;
  ar.manifest["arrays"] = ar.index();
  ar.save(path);
}

RecommenderModel<float> load_recommender(const std::string& path) {
  const auto ar = io::ArrayArchive::load(path);
  if (ar.manifest.value("kind", "") != "recommender") throw io::ArchiveError("'" + path + "' is not a recommender checkpoint");
  const auto enc = EncoderConfig::from_json(ar.manifest.at("encoder"));
  RecommenderModel<float> model(ar.manifest.at("n_items").get<std::int64_t>(), enc, 0);
  auto params = model.parameters();
  io::load_params(ar, params);
  return model;
}

}  // namespace llara::recsys
