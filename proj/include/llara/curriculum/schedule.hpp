#pragma once

// Easy-to-hard task schedule, learning-rate schedule and the per-task losses.

#include "llara/fusion/adapter.hpp"

#include <json.hpp>

#include <random>

namespace llara::curriculum {

enum class Task { Easy, Hard };
enum class Strategy { Direct, TwoStage, Curriculum };

std::string to_string(Task t);
std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);

/// Probability of the hard task at step tau of T: tau / T.
double p_hard(long long tau, long long total);

/// Hard with probability p_hard(tau, total).
Task draw_task(long long tau, long long total, std::mt19937_64& rng);

struct StrategyConfig {
  Strategy kind = Strategy::Curriculum;
  int epochs = 5;
  int stage_one_epochs = 2;  // two-stage split: easy epochs, then hard
  int batch = 128;
  double max_lr = 2e-4;
  double warmup_fraction = 0.05;
  double weight_decay = 1e-5;
  std::uint64_t seed = 0;
  bool train_item_embeddings = false;  // unfreeze the recommender's item table

  void validate() const;
  nlohmann::json to_json() const;
  static StrategyConfig from_json(const nlohmann::json& j);
};

/// Linear warm-up from max_lr/100 to max_lr over the first
/// warmup_fraction * total steps, then cosine decay to zero at the last step.
double lr_at(long long step, long long total, double max_lr, double warmup_fraction);

/// Task of step `tau` (1-based) in `epoch` (1-based) for a strategy. Only
/// the curriculum draws from `rng`.
Task task_for_step(const StrategyConfig& cfg, long long tau, long long total, int epoch, std::mt19937_64& rng);

/// Response negative log-likelihood of one rendered prompt, LoRA on.
template <class S>
ad::Var<S> prompt_loss(const fusion::RenderedPrompt& p, lm::CausalLm<S>& lm, fusion::Injector<S>* injector,
                       fusion::Injection how = fusion::Injection::Project) {
  auto seq = fusion::assemble(p, lm, injector, -1, how);
  return lm.response_loss(seq.rows, seq.token_ids, seq.response_mask, true);
}

template <class S>
ad::Var<S> mean_of(const std::vector<ad::Var<S>>& xs) {
  require_shape(!xs.empty(), "empty batch");
  ad::Var<S> total = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) total = ad::add(total, xs[i]);
  return ad::scale(total, static_cast<S>(1.0 / static_cast<double>(xs.size())));
}

/// Mean response loss over text-only prompts; the adapter is not touched.
template <class S>
ad::Var<S> loss_easy(const std::vector<fusion::RenderedPrompt>& batch, lm::CausalLm<S>& lm) {
  std::vector<ad::Var<S>> losses;
  for (const auto& p : batch) {
    if (p.mode != fusion::Mode::TextOnlyPH) throw Error("loss_easy: prompt rendered as " + fusion::to_string(p.mode));
    losses.push_back(prompt_loss<S>(p, lm, nullptr));
  }
  return mean_of(losses);
}

/// Mean response loss over hybrid prompts with projected item rows.
template <class S>
ad::Var<S> loss_hard(const std::vector<fusion::RenderedPrompt>& batch, lm::CausalLm<S>& lm, fusion::Injector<S>* injector,
                     fusion::Injection how = fusion::Injection::Project) {
  if (how == fusion::Injection::Project && (!injector || !injector->adapter || !injector->recommender))
    throw Error("loss_hard: no adapter/recommender");
  std::vector<ad::Var<S>> losses;
  for (const auto& p : batch) {
    if (p.mode != fusion::Mode::Hybrid) throw Error("loss_hard: prompt rendered as " + fusion::to_string(p.mode));
    losses.push_back(prompt_loss<S>(p, lm, injector, how));
  }
  return mean_of(losses);
}

}  // namespace llara::curriculum
