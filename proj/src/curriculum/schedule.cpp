#include "llara/curriculum/schedule.hpp"

#include <cmath>
#include <numbers>

namespace llara::curriculum {

std::string to_string(Task t) { return t == Task::Easy ? "easy" : "hard"; }

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Direct: return "direct";
    case Strategy::TwoStage: return "two_stage";
    case Strategy::Curriculum: return "curriculum";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  for (Strategy s : {Strategy::Direct, Strategy::TwoStage, Strategy::Curriculum})
    if (to_string(s) == name) return s;
  throw Error("unknown strategy '" + name + "' (expected direct, two_stage or curriculum)");
}

double p_hard(long long tau, long long total) {
  if (total <= 0) throw Error("p_hard: total steps must be positive");
  if (tau < 0 || tau > total)
    throw Error("p_hard: step " + std::to_string(tau) + " outside [0, " + std::to_string(total) + "]");
  return static_cast<double>(tau) / static_cast<double>(total);
}

Task draw_task(long long tau, long long total, std::mt19937_64& rng) {
  const double p = p_hard(tau, total);
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p ? Task::Hard : Task::Easy;
}

void StrategyConfig::validate() const {
  if (epochs < 1) throw Error("strategy: epochs must be positive");
  if (kind == Strategy::TwoStage && (stage_one_epochs < 1 || stage_one_epochs >= epochs))
    throw Error("strategy: two-stage split must leave at least one epoch per stage");
  if (batch < 1) throw Error("strategy: batch must be positive");
  if (!(max_lr > 0)) throw Error("strategy: max_lr must be positive");
  if (warmup_fraction < 0 || warmup_fraction >= 1) throw Error("strategy: warmup_fraction must be in [0, 1)");
  if (weight_decay < 0) throw Error("strategy: weight_decay must be non-negative");
}

nlohmann::json StrategyConfig::to_json() const {
  return {{"kind", to_string(kind)},       {"epochs", epochs},
          {"stage_one_epochs", stage_one_epochs}, {"batch", batch},
          {"max_lr", max_lr},              {"warmup_fraction", warmup_fraction},
          {"weight_decay", weight_decay},  {"seed", seed},
          {"train_item_embeddings", train_item_embeddings}};
}

StrategyConfig StrategyConfig::from_json(const nlohmann::json& j) {
  StrategyConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "kind") c.kind = parse_strategy(v.get<std::string>());
    else if (k == "epochs") c.epochs = v.get<int>();
    else if (k == "stage_one_epochs") c.stage_one_epochs = v.get<int>();
    else if (k == "batch") c.batch = v.get<int>();
    else if (k == "max_lr") c.max_lr = v.get<double>();
    else if (k == "warmup_fraction") c.warmup_fraction = v.get<double>();
    else if (k == "weight_decay") c.weight_decay = v.get<double>();
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else if (k == "train_item_embeddings") c.train_item_embeddings = v.get<bool>();
    else throw Error("strategy: unknown key '" + k + "'");
  }
  c.validate();
  return c;
}

double lr_at(long long step, long long total, double max_lr, double warmup_fraction) {
  if (total <= 0 || step < 0 || step >= total) throw Error("lr_at: step outside [0, total)");
  long long warm = 0;
  if (warmup_fraction > 0)
    warm = std::max(1LL, std::llround(warmup_fraction * static_cast<double>(total)));
  warm = std::min(warm, total - 1);
  if (step < warm) {
    const double start = max_lr / 100.0;
    return start + (max_lr - start) * static_cast<double>(step) / static_cast<double>(warm);
  }
  const long long span = total - 1 - warm;
  if (span <= 0) return max_lr;
  const double x = static_cast<double>(step - warm) / static_cast<double>(span);
  return 0.5 * max_lr * (1.0 + std::cos(std::numbers::pi * x));
}

Task task_for_step(const StrategyConfig& cfg, long long tau, long long total, int epoch, std::mt19937_64& rng) {
  switch (cfg.kind) {
    case Strategy::Direct: return Task::Hard;
    case Strategy::TwoStage: return epoch <= cfg.stage_one_epochs ? Task::Easy : Task::Hard;
    case Strategy::Curriculum: return draw_task(tau, total, rng);
  }
  return Task::Hard;
}

}  // namespace llara::curriculum
