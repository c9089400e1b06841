#include "tiny_world.hpp"

#include "llara/curriculum/trainer.hpp"

#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <sstream>

using namespace llara;
using namespace llara::curriculum;
using fusion::Mode;
using llara::testing::TinyWorld;

namespace {

fusion::Bundle tiny_bundle(const TinyWorld& w, std::uint64_t seed = 1) {
  fusion::Bundle b;
  b.vocab = w.vocab;
  b.catalog = w.catalog;
  b.templates = w.templates;
  b.lm = lm::CausalLm<float>(w.lm_config(), seed);
  b.recommender = recsys::RecommenderModel<float>(w.catalog.n_items, w.rec_config(), seed + 1);
  b.init_adapter(seed + 2);
  return b;
}

std::vector<corpus::SequenceExample> tiny_examples(const TinyWorld& w, int n) {
  std::vector<corpus::SequenceExample> out;
  for (int i = 0; i < n; ++i) {
    auto ex = w.example;
    ex.target_pos = i % 3;
    ex.target = ex.candidates[static_cast<std::size_t>(ex.target_pos)];
    out.push_back(ex);
  }
  return out;
}

StrategyConfig small_strategy(Strategy kind) {
  StrategyConfig c;
  c.kind = kind;
  c.batch = 2;
  c.max_lr = 1e-2;
  return c;
}

template <class S>
Matrix<S> copy_of(const Parameter<S>& p) {
  return p.value;
}

}  // namespace

TEST_CASE("hard-task probability") {
  CHECK(p_hard(0, 100) == 0.0);
  CHECK(p_hard(100, 100) == 1.0);
  CHECK(p_hard(25, 100) == 0.25);
  double prev = -1;
  for (long long t = 0; t <= 1000; t += 7) {
    const double p = p_hard(t, 1000);
    CHECK(p >= prev);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    prev = p;
  }
  CHECK_THROWS(p_hard(-1, 10));
  CHECK_THROWS(p_hard(11, 10));
  CHECK_THROWS(p_hard(0, 0));
  std::mt19937_64 rng(0);
  CHECK(draw_task(0, 10, rng) == Task::Easy);
  CHECK(draw_task(10, 10, rng) == Task::Hard);
}

TEST_CASE("simulated schedule: half hard overall, rising per decile") {
  const auto start = std::chrono::steady_clock::now();
  const long long total = 10000;
  StrategyConfig cfg;
  std::mt19937_64 rng(0);
  std::array<int, 10> hard{};
  int all = 0;
  for (long long tau = 1; tau <= total; ++tau) {
    const bool h = task_for_step(cfg, tau, total, 1, rng) == Task::Hard;
    all += h;
    hard[static_cast<std::size_t>((tau - 1) * 10 / total)] += h;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(std::abs(all / static_cast<double>(total) - 0.5) <= 0.02);
  for (std::size_t d = 1; d < 10; ++d) CHECK(hard[d] > hard[d - 1]);
  CHECK(std::abs(hard[0] / 1000.0 - 0.05) <= 0.05);
  CHECK(std::abs(hard[9] / 1000.0 - 0.95) <= 0.05);
  CHECK(secs < 1.0);
}

TEST_CASE("strategy task contracts") {
  std::mt19937_64 rng(1);
  StrategyConfig direct;
  direct.kind = Strategy::Direct;
  StrategyConfig two;
  two.kind = Strategy::TwoStage;
  for (int epoch = 1; epoch <= 5; ++epoch) {
    CHECK(task_for_step(direct, epoch, 5, epoch, rng) == Task::Hard);
    CHECK(task_for_step(two, epoch, 5, epoch, rng) == (epoch <= 2 ? Task::Easy : Task::Hard));
  }
  CHECK(parse_strategy("two_stage") == Strategy::TwoStage);
  CHECK(to_string(Strategy::Curriculum) == "curriculum");
  CHECK_THROWS(parse_strategy("mixed"));
  CHECK(StrategyConfig::from_json(StrategyConfig{}.to_json()).to_json() == StrategyConfig{}.to_json());
  CHECK_THROWS(StrategyConfig::from_json({{"epochs", 5}, {"lr", 1e-3}}));
  StrategyConfig bad;
  bad.stage_one_epochs = 5;
  bad.kind = Strategy::TwoStage;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("learning-rate schedule") {
  const long long total = 1000;
  const double max_lr = 2e-4;
  CHECK(lr_at(0, total, max_lr, 0.05) == doctest::Approx(2e-6).epsilon(1e-12));
  CHECK(lr_at(50, total, max_lr, 0.05) == max_lr);
  CHECK(lr_at(total - 1, total, max_lr, 0.05) <= 1e-9);
  for (long long s = 1; s < 50; ++s) CHECK(lr_at(s, total, max_lr, 0.05) > lr_at(s - 1, total, max_lr, 0.05));
  for (long long s = 51; s < total; ++s) CHECK(lr_at(s, total, max_lr, 0.05) <= lr_at(s - 1, total, max_lr, 0.05));
  CHECK_THROWS(lr_at(total, total, max_lr, 0.05));
}

TEST_CASE("the mixed objective is the p-weighted mixture of the two losses") {
  TinyWorld w;
  auto b = tiny_bundle(w);
  b.prepare_for_tuning();
  const auto r = b.renderer();
  auto inj = b.injector();
  const auto easy = loss_easy<float>({r.render(w.example, 1, Mode::TextOnlyPH)}, b.lm).scalar();
  const auto hard = loss_hard<float>({r.render(w.example, 1, Mode::Hybrid)}, b.lm, &inj).scalar();
  std::mt19937_64 rng(3);
  const long long total = 100;
  const long long tau = 30;
  double sum = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += draw_task(tau, total, rng) == Task::Hard ? hard : easy;
  const double expect = (1 - p_hard(tau, total)) * easy + p_hard(tau, total) * hard;
  CHECK(sum / n == doctest::Approx(expect).epsilon(0.02));
}

TEST_CASE("loss collapse: placeholder rows in place of projections give the easy loss") {
  TinyWorld w;
  auto b = tiny_bundle(w);
  b.prepare_for_tuning();
  const auto r = b.renderer();
  auto inj = b.injector();
  for (int tpl = 1; tpl <= 3; ++tpl) {
    const auto easy = loss_easy<float>({r.render(w.example, tpl, Mode::TextOnlyPH)}, b.lm).scalar();
    const auto collapsed =
        loss_hard<float>({r.render(w.example, tpl, Mode::Hybrid)}, b.lm, &inj, fusion::Injection::Placeholder).scalar();
    const auto projected = loss_hard<float>({r.render(w.example, tpl, Mode::Hybrid)}, b.lm, &inj).scalar();
    CHECK(std::abs(collapsed - easy) <= 1e-6 * std::abs(easy));
    CHECK(std::abs(projected - easy) > 1e-6);
  }
  CHECK_THROWS(loss_easy<float>({r.render(w.example, 1, Mode::Hybrid)}, b.lm));
  CHECK_THROWS(loss_hard<float>({r.render(w.example, 1, Mode::TextOnlyPH)}, b.lm, &inj));
  fusion::Injector<float> none;
  CHECK_THROWS(loss_hard<float>({r.render(w.example, 1, Mode::Hybrid)}, b.lm, &none));
}

TEST_CASE("easy steps leave the adapter alone; hard steps leave the placeholder alone") {
  TinyWorld w;
  auto b = tiny_bundle(w);
  b.prepare_for_tuning();
  const auto r = b.renderer();
  for (auto& p : b.adapter.parameters()) p.param->zero_grad();
  ad::backward(loss_easy<float>({r.render(w.example, 2, Mode::TextOnlyPH)}, b.lm));
  for (auto& p : b.adapter.parameters()) CHECK(p.param->grad.cwiseAbs().maxCoeff() == 0.0f);

  const auto examples = tiny_examples(w, 2);
  std::vector<const corpus::SequenceExample*> batch = {&examples[0], &examples[1]};
  Trainer direct(b, examples, small_strategy(Strategy::Direct));
  const auto ph = copy_of(b.lm.placeholder);
  const auto first = copy_of(b.adapter.first.weight);
  CHECK(direct.step(batch).task == Task::Hard);
  CHECK(b.lm.placeholder.value == ph);
  CHECK(b.adapter.first.weight.value != first);

  auto c = tiny_bundle(w);
  Trainer two(c, examples, small_strategy(Strategy::TwoStage));
  const auto ph2 = copy_of(c.lm.placeholder);
  const auto first2 = copy_of(c.adapter.first.weight);
  CHECK(two.step(batch).task == Task::Easy);
  CHECK(c.adapter.first.weight.value == first2);
  CHECK(c.lm.placeholder.value != ph2);
}

TEST_CASE("frozen weights stay bit-identical through training") {
  TinyWorld w;
  auto b = tiny_bundle(w);
  std::vector<Matrix<float>> backbone;
  for (auto& p : b.lm.backbone_parameters()) backbone.push_back(p.param->value);
  std::vector<Matrix<float>> rec;
  for (auto& p : b.recommender->parameters()) rec.push_back(p.param->value);
  const auto lora_before = copy_of(*b.lm.lora_parameters()[1].param);
  Trainer t(b, tiny_examples(w, 6), small_strategy(Strategy::Curriculum));
  t.run();
  std::size_t i = 0;
  for (auto& p : b.lm.backbone_parameters()) CHECK(p.param->value == backbone[i++]);
  i = 0;
  for (auto& p : b.recommender->parameters()) CHECK(p.param->value == rec[i++]);
  CHECK(b.lm.lora_parameters()[1].param->value != lora_before);
  CHECK(t.steps_done() == t.total_steps());
  CHECK(t.total_steps() == 15);
  CHECK_THROWS(t.step({}));
}

TEST_CASE("training is deterministic for a fixed seed") {
  TinyWorld w;
  auto run = [&](std::uint64_t seed) {
    auto b = tiny_bundle(w);
    auto cfg = small_strategy(Strategy::Curriculum);
    cfg.seed = seed;
    Trainer t(b, tiny_examples(w, 6), cfg);
    std::ostringstream log;
    t.set_log(&log);
    t.run();
    return std::make_pair(log.str(), b.lm.lora_parameters()[1].param->value);
  };
  const auto a = run(4);
  const auto b = run(4);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK(run(5).first != a.first);
}

TEST_CASE("best epoch comes from target-mode validation and is restored") {
  TinyWorld w;
  auto b = tiny_bundle(w);
  auto cfg = small_strategy(Strategy::TwoStage);
  Trainer t(b, tiny_examples(w, 4), cfg);
  std::vector<Mode> modes;
  // Scores fall after epoch 3, so epoch 3 is the best hybrid epoch even
  // though the text-only epochs score higher.
  const std::vector<double> scores = {0.9, 0.9, 0.5, 0.2, 0.1};
  t.set_validator([&](fusion::Bundle&, Mode m) {
    modes.push_back(m);
    return scores[modes.size() - 1];
  });
  io::ArrayArchive after3;
  while (!t.finished()) {
    t.run_epoch();
    if (t.epochs_done() == 3) fusion::store_tuned(after3, b);
  }
  CHECK(modes == std::vector<Mode>{Mode::TextOnlyPH, Mode::TextOnlyPH, Mode::Hybrid, Mode::Hybrid, Mode::Hybrid});
  CHECK(t.best_epoch() == 3);
  CHECK(t.best_val() == 0.5);
  t.restore_best();
  io::ArrayArchive now;
  fusion::store_tuned(now, b);
  CHECK(now == after3);
}

TEST_CASE("candidate subsets keep the target, preserve order and respect the cap") {
  corpus::SequenceExample ex;
  ex.history = {1, 2};
  ex.history_len = 2;
  ex.candidates = {10, 11, 12, 13, 14, 15, 16, 17};
  ex.target = 13;
  ex.target_pos = 3;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto out = subsample_candidates(ex, rng, 2);
    REQUIRE(out.target_pos >= 0);
    CHECK(out.candidates[static_cast<std::size_t>(out.target_pos)] == 13);
    CHECK(out.candidates.size() <= 3);
    CHECK(std::is_sorted(out.candidates.begin(), out.candidates.end()));
  }
  std::size_t widest = 0;
  for (int trial = 0; trial < 200; ++trial) widest = std::max(widest, subsample_candidates(ex, rng).candidates.size());
  CHECK(widest == ex.candidates.size());
}

TEST_CASE("pretrain config round-trips the candidate ramp") {
  PretrainConfig c;
  c.candidate_ramp = true;
  c.response_weight = 5;
  const auto back = PretrainConfig::from_json(c.to_json());
  CHECK(back.candidate_ramp);
  CHECK(back.response_weight == 5);
}
