#include "llara/curriculum/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace llara::curriculum {

nlohmann::json StepRecord::to_json() const {
  return {{"step", step}, {"epoch", epoch}, {"progress", progress}, {"task", to_string(task)},
          {"loss", loss}, {"lr", lr},       {"seed", seed}};
}

namespace {

optim::AdamConfig adam_config(double weight_decay) {
  optim::AdamConfig c;
  c.weight_decay = weight_decay;
  c.decoupled = true;
  return c;
}

bool grads_finite(std::vector<nn::NamedParam<float>>& params) {
  for (auto& p : params)
    if (p.param->trainable && p.param->grad.size() > 0 && !p.param->grad.allFinite()) return false;
  return true;
}

}  // namespace

corpus::SequenceExample subsample_candidates(const corpus::SequenceExample& ex, std::mt19937_64& rng,
                                             std::size_t max_negatives) {
  const std::size_t n = ex.candidates.size();
  if (n <= 1) return ex;
  const std::size_t keep = std::uniform_int_distribution<std::size_t>(0, std::min(n - 1, max_negatives))(rng);
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < n; ++i)
    if (ex.candidates[i] != ex.target) negatives.push_back(i);
  std::shuffle(negatives.begin(), negatives.end(), rng);
  std::vector<std::uint8_t> chosen(n, 0);
  for (std::size_t i = 0; i < n; ++i) chosen[i] = ex.candidates[i] == ex.target;
  for (std::size_t i = 0; i < std::min(keep, negatives.size()); ++i) chosen[negatives[i]] = 1;
  corpus::SequenceExample out = ex;
  out.candidates.clear();
  for (std::size_t i = 0; i < n; ++i)
    if (chosen[i]) {
      if (ex.candidates[i] == ex.target) out.target_pos = static_cast<int>(out.candidates.size());
      out.candidates.push_back(ex.candidates[i]);
    }
  return out;
}

Trainer::Trainer(fusion::Bundle& bundle, std::vector<corpus::SequenceExample> train, StrategyConfig cfg,
                 fusion::Mode target_mode)
    : bundle_(&bundle), train_(std::move(train)), cfg_(cfg), target_(target_mode), renderer_(bundle.renderer()),
      rng_(cfg.seed) {
  cfg_.validate();
  if (train_.empty()) throw Error("trainer: no training examples");
  if (fusion::injects(target_) && !bundle.recommender) throw Error("trainer: mode " + fusion::to_string(target_) + " needs a recommender");
  if (fusion::injects(target_) && bundle.adapter.first.weight.value.size() == 0) bundle.init_adapter(cfg.seed);
  bundle.prepare_for_tuning(cfg_.train_item_embeddings);
  const auto wd = adam_config(cfg_.weight_decay);
  lora_opt_ = optim::Adam<float>(bundle.lm.lora_parameters(), wd);
  placeholder_opt_ = optim::Adam<float>({{"placeholder", &bundle.lm.placeholder}}, wd);
  auto ap = fusion::injects(target_) ? bundle.adapter.parameters() : std::vector<nn::NamedParam<float>>{};
  if (bundle.recommender && cfg_.train_item_embeddings) ap.push_back({"rec.item_embeddings", &bundle.recommender->item_embeddings});
  adapter_opt_ = optim::Adam<float>(ap, wd);
  const long long per_epoch = (static_cast<long long>(train_.size()) + cfg_.batch - 1) / cfg_.batch;
  total_ = per_epoch * cfg_.epochs;
}

fusion::Mode Trainer::validation_mode() const { return hard_seen_ ? target_ : fusion::Mode::TextOnlyPH; }

StepRecord Trainer::step(const std::vector<const corpus::SequenceExample*>& batch) {
  if (step_ >= total_) throw Error("trainer: all steps already taken");
  StepRecord rec;
  rec.step = step_ + 1;
  rec.epoch = epoch_ + 1;
  rec.progress = static_cast<double>(rec.step) / static_cast<double>(total_);
  rec.task = task_for_step(cfg_, rec.step, total_, rec.epoch, rng_);
  rec.lr = lr_at(step_, total_, cfg_.max_lr, cfg_.warmup_fraction);
  rec.seed = cfg_.seed;
  const fusion::Mode mode = rec.task == Task::Hard ? target_ : fusion::Mode::TextOnlyPH;

  lora_opt_.zero_grad();
  placeholder_opt_.zero_grad();
  adapter_opt_.zero_grad();
  auto injector = bundle_->injector();
  const float weight = 1.0f / static_cast<float>(batch.size());
  double total_loss = 0;
  for (const auto* ex : batch) {
    const auto prompt = renderer_.render(*ex, fusion::pick_template(rng_), mode);
    auto loss = prompt_loss<float>(prompt, bundle_->lm, fusion::injects(mode) ? &injector : nullptr);
    total_loss += loss.scalar();
    ad::backward(loss, weight);
  }
  rec.loss = total_loss / static_cast<double>(batch.size());
  if (!std::isfinite(rec.loss) || !grads_finite(lora_opt_.params()) || !grads_finite(adapter_opt_.params()) ||
      !grads_finite(placeholder_opt_.params()))
    throw DivergenceError("non-finite loss or gradient at step " + std::to_string(rec.step));

  lora_opt_.step(rec.lr);
  if (rec.task == Task::Easy) placeholder_opt_.step(rec.lr);
  else if (fusion::injects(target_)) adapter_opt_.step(rec.lr);
  if (rec.task == Task::Hard) hard_seen_ = true;
  ++step_;
  records_.push_back(rec);
  if (log_) *log_ << rec.to_json().dump() << '\n';
  return rec;
}

void Trainer::run_epoch() {
  if (finished()) return;
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch)) {
    std::vector<const corpus::SequenceExample*> batch;
    for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch)); ++i)
      batch.push_back(&train_[order[i]]);
    step(batch);
  }
  ++epoch_;
  if (log_) log_->flush();

  // Best-validation selection only counts epochs validated in the target
  // mode; until then the latest weights stand in.
  const auto mode = validation_mode();
  double score = -1;
  if (validator_) score = validator_(*bundle_, mode);
  val_curve_.push_back(score);
  const bool eligible = validator_ && mode == target_;
  bool take = false;
  if (eligible) take = !best_eligible_ || score >= best_val_;
  else take = !best_eligible_;
  if (take) {
    best_val_ = score;
    best_epoch_ = epoch_;
    best_eligible_ = eligible;
    best_ = io::ArrayArchive();
    fusion::store_tuned(best_, *bundle_);
  }
}

void Trainer::run() {
  while (!finished()) run_epoch();
}

void Trainer::restore_best() {
  if (best_epoch_ < 0) return;
  fusion::restore_tuned(best_, *bundle_);
}

void PretrainConfig::validate() const {
  if (epochs < 1 || batch < 1) throw Error("pretrain: epochs and batch must be positive");
  if (!(max_lr > 0)) throw Error("pretrain: max_lr must be positive");
  if (warmup_fraction < 0 || warmup_fraction >= 1) throw Error("pretrain: warmup_fraction must be in [0, 1)");
  if (!(response_weight >= 0)) throw Error("pretrain: response_weight must be non-negative");
  if (!all_tokens && response_weight == 0) throw Error("pretrain: the loss has no terms");
}

nlohmann::json PretrainConfig::to_json() const {
  return {{"epochs", epochs},   {"batch", batch},   {"max_lr", max_lr}, {"warmup_fraction", warmup_fraction},
          {"weight_decay", weight_decay}, {"seed", seed}, {"all_tokens", all_tokens}, {"response_weight", response_weight},
          {"vary_candidates", vary_candidates},
          {"candidate_ramp", candidate_ramp}};
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& j) {
  PretrainConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "epochs") c.epochs = v.get<int>();
    else if (k == "batch") c.batch = v.get<int>();
    else if (k == "max_lr") c.max_lr = v.get<double>();
    else if (k == "warmup_fraction") c.warmup_fraction = v.get<double>();
    else if (k == "weight_decay") c.weight_decay = v.get<double>();
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else if (k == "all_tokens") c.all_tokens = v.get<bool>();
    else if (k == "response_weight") c.response_weight = v.get<double>();
    else if (k == "vary_candidates") c.vary_candidates = v.get<bool>();
    else if (k == "candidate_ramp") c.candidate_ramp = v.get<bool>();
    else throw Error("pretrain: unknown key '" + k + "'");
  }
  c.validate();
  return c;
}

std::vector<double> pretrain_base(lm::CausalLm<float>& lm, const fusion::PromptRenderer& renderer,
                                  const std::vector<corpus::SequenceExample>& examples, const PretrainConfig& cfg,
                                  std::ostream* log) {
  cfg.validate();
  if (examples.empty()) throw Error("pretrain: no examples");
  lm.prepare_for_pretraining();
  optim::Adam<float> opt(lm.base_parameters(), adam_config(cfg.weight_decay));
  std::mt19937_64 rng(cfg.seed);
  const long long per_epoch = (static_cast<long long>(examples.size()) + cfg.batch - 1) / cfg.batch;
  const long long total = per_epoch * cfg.epochs;
  long long step = 0;
  std::vector<double> epoch_losses;
  std::vector<std::size_t> order(examples.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    std::size_t cap = static_cast<std::size_t>(-1);
    if (cfg.candidate_ramp) {
      std::size_t widest = 0;
      for (const auto& e : examples) widest = std::max(widest, e.candidates.size());
      cap = (widest * static_cast<std::size_t>(epoch) + cfg.epochs - 1) / static_cast<std::size_t>(cfg.epochs);
    }
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const float weight = 1.0f / static_cast<float>(end - start);
      opt.zero_grad();
      double batch_loss = 0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& src = examples[order[i]];
        const auto p = renderer.render(cfg.vary_candidates ? subsample_candidates(src, rng, cap) : src, fusion::pick_template(rng),
                                       fusion::Mode::TextOnlyPH);
        const auto logits = lm.forward(lm.embed_tokens(p.tokens), false);
        ad::Var<float> loss;
        if (cfg.all_tokens) {
          std::vector<std::uint8_t> every(p.tokens.size(), 1);
          every[0] = 0;
          loss = lm::ar_loss(logits, p.tokens, every);
        }
        if (cfg.response_weight > 0) {
          auto answer = ad::scale(lm::ar_loss(logits, p.tokens, p.response_mask), static_cast<float>(cfg.response_weight));
          loss = cfg.all_tokens ? ad::add(loss, answer) : answer;
        }
        batch_loss += loss.scalar();
        ad::backward(loss, weight);
      }
      batch_loss /= static_cast<double>(end - start);
      if (!std::isfinite(batch_loss) || !grads_finite(opt.params()))
        throw DivergenceError("pretraining diverged at step " + std::to_string(step + 1));
      const double lr = lr_at(step, total, cfg.max_lr, cfg.warmup_fraction);
      opt.step(lr);
      ++step;
      epoch_loss += batch_loss * static_cast<double>(end - start);
      if (log)
        *log << nlohmann::json{{"phase", "pretrain"}, {"step", step}, {"epoch", epoch}, {"loss", batch_loss}, {"lr", lr}}.dump()
             << '\n';
    }
    epoch_losses.push_back(epoch_loss / static_cast<double>(examples.size()));
  }
  lm.prepare_for_lora();
  return epoch_losses;
}

}  // namespace llara::curriculum
