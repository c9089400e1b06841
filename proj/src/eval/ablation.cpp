#include "llara/eval/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace llara::eval {

nlohmann::json RunResult::to_json() const {
  nlohmann::json j = {{"label", label}, {"seed", seed}, {"failed", failed}};
  if (failed) {
    j["error"] = error;
    return j;
  }
  j["free"] = free.summary_json();
  j["constrained"] = constrained.summary_json();
  j["val_curve"] = val_curve;
  j["best_epoch"] = best_epoch;
  j["hard_fraction"] = hard_fraction;
  return j;
}

std::pair<double, double> AblationRow::stat(double EvalReport::*field, bool constrained) const {
  std::vector<double> xs;
  for (const auto& r : runs)
    if (!r.failed) xs.push_back((constrained ? r.constrained : r.free).*field);
  if (xs.empty()) return {std::nan(""), std::nan("")};
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

bool AblationRow::any_failed() const {
  for (const auto& r : runs)
    if (r.failed) return true;
  return false;
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : row.runs) runs.push_back(r.to_json());
    auto [hf, hfs] = row.stat(&EvalReport::hit_ratio_1, false);
    auto [vf, vfs] = row.stat(&EvalReport::valid_ratio, false);
    auto [hc, hcs] = row.stat(&EvalReport::hit_ratio_1, true);
    auto [vc, vcs] = row.stat(&EvalReport::valid_ratio, true);
    auto num = [](double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); };
    rows_json.push_back({{"label", row.label},
                         {"failed", row.any_failed()},
                         {"free", {{"hit_ratio_1", num(hf)}, {"hit_ratio_1_std", num(hfs)}, {"valid_ratio", num(vf)}, {"valid_ratio_std", num(vfs)}}},
                         {"constrained", {{"hit_ratio_1", num(hc)}, {"hit_ratio_1_std", num(hcs)}, {"valid_ratio", num(vc)}, {"valid_ratio_std", num(vcs)}}},
                         {"runs", runs}});
  }
  return {{"suite", suite}, {"rows", rows_json}};
}

namespace {

std::string pm(std::pair<double, double> s) {
  if (std::isnan(s.first)) return "failed";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f ± %.4f", s.first, s.second);
  return buf;
}

std::string fixed(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

}  // namespace

std::string AblationTable::markdown() const {
  std::string out = "| " + suite +
                    " | ValidRatio (free) | HitRatio@1 (free) | ValidRatio (constrained) | HitRatio@1 (constrained) | runs |\n"
                    "|---|---|---|---|---|---|\n";
  for (const auto& row : rows) {
    std::size_t ok = 0;
    for (const auto& r : row.runs) ok += !r.failed;
    out += "| " + row.label + " | " + pm(row.stat(&EvalReport::valid_ratio, false)) + " | " +
           pm(row.stat(&EvalReport::hit_ratio_1, false)) + " | " + pm(row.stat(&EvalReport::valid_ratio, true)) + " | " +
           pm(row.stat(&EvalReport::hit_ratio_1, true)) + " | " + std::to_string(ok) + "/" +
           std::to_string(row.runs.size()) + " |\n";
  }
  return out;
}

std::string AblationTable::csv() const {
  std::string out = "suite,row,seed,status,valid_ratio_free,hit_ratio_1_free,valid_ratio_constrained,hit_ratio_1_constrained\n";
  for (const auto& row : rows)
    for (const auto& r : row.runs) {
      out += suite + "," + row.label + "," + std::to_string(r.seed) + "," + (r.failed ? "failed" : "ok") + ",";
      if (r.failed) out += ",,,\n";
      else
        out += fixed(r.free.valid_ratio) + "," + fixed(r.free.hit_ratio_1) + "," + fixed(r.constrained.valid_ratio) + "," +
               fixed(r.constrained.hit_ratio_1) + "\n";
    }
  return out;
}

RunResult train_and_evaluate(const AblationSetup& setup, const std::string& label, fusion::Mode mode,
                             curriculum::Strategy kind, std::uint64_t seed) {
  RunResult res;
  res.label = label;
  res.seed = seed;
  try {
    if (!setup.base || !setup.train || !setup.val || !setup.test) throw Error("ablation setup is incomplete");
    fusion::Bundle bundle = *setup.base;
    bundle.lm.reset_lora(seed);
    if (bundle.recommender) bundle.init_adapter(seed);
    auto strategy = setup.strategy;
    strategy.kind = kind;
    strategy.seed = seed;
    curriculum::Trainer trainer(bundle, *setup.train, strategy, mode);
    std::ofstream log;
    std::string run_dir;
    if (!setup.output_dir.empty()) {
      run_dir = setup.output_dir + "/" + label + "_seed" + std::to_string(seed);
      std::filesystem::create_directories(run_dir);
      log.open(run_dir + "/train_log.jsonl", std::ios::trunc);
      trainer.set_log(&log);
    }
    const auto* val = setup.val;
    const auto eval_seed = setup.eval_seed;
    trainer.set_validator([val, eval_seed](fusion::Bundle& b, fusion::Mode m) {
      return evaluate(b, *val, m, Decoding::Constrained, eval_seed).hit_ratio_1;
    });
    while (!trainer.finished()) {
      trainer.run_epoch();
      if (setup.progress)
        setup.progress(label + " seed " + std::to_string(seed) + ": epoch " + std::to_string(trainer.epochs_done()) +
                       " val HR@1 " + std::to_string(trainer.val_curve().back()));
    }
    trainer.restore_best();
    res.val_curve = trainer.val_curve();
    res.best_epoch = trainer.best_epoch();
    std::size_t hard = 0;
    for (const auto& r : trainer.records()) hard += r.task == curriculum::Task::Hard;
    res.hard_fraction = static_cast<double>(hard) / static_cast<double>(trainer.records().size());
    res.free = evaluate(bundle, *setup.test, mode, Decoding::Free, setup.eval_seed);
    res.constrained = evaluate(bundle, *setup.test, mode, Decoding::Constrained, setup.eval_seed);
    res.free.label = res.constrained.label = label;
    if (!run_dir.empty()) {
      fusion::save_bundle(run_dir + "/model.llara", bundle, {{"strategy", strategy.to_json()}, {"mode", fusion::to_string(mode)}});
      write_reports(run_dir, "eval", {res.free, res.constrained}, {{"label", label}, {"seed", seed}});
    }
  } catch (const std::exception& e) {
    res.failed = true;
    res.error = e.what();
  }
  return res;
}

namespace {

AblationTable run_suite(const AblationSetup& setup, const std::string& suite,
                        const std::vector<std::tuple<std::string, fusion::Mode, curriculum::Strategy>>& rows) {
  AblationTable table;
  table.suite = suite;
  for (const auto& [label, mode, kind] : rows) {
    AblationRow row;
    row.label = label;
    for (auto seed : setup.seeds) row.runs.push_back(train_and_evaluate(setup, label, mode, kind, seed));
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace

AblationTable run_rq2(const AblationSetup& setup) {
  using fusion::Mode;
  using curriculum::Strategy;
  return run_suite(setup, "representation",
                   {{"numeric_index", Mode::NumericIndex, Strategy::Direct},
                    {"behavioral_only", Mode::BehavioralOnly, Strategy::Direct},
                    {"text_only_ph", Mode::TextOnlyPH, Strategy::Direct},
                    {"hybrid", Mode::Hybrid, setup.strategy.kind}});
}

AblationTable run_rq3(const AblationSetup& setup) {
  using fusion::Mode;
  using curriculum::Strategy;
  return run_suite(setup, "strategy",
                   {{"direct", Mode::Hybrid, Strategy::Direct},
                    {"two_stage", Mode::Hybrid, Strategy::TwoStage},
                    {"curriculum", Mode::Hybrid, Strategy::Curriculum}});
}

void write_table(const std::string& dir, const AblationTable& table, const nlohmann::json& meta) {
  std::filesystem::create_directories(dir);
  const std::string base = dir + "/" + table.suite;
  std::ofstream(base + ".json") << nlohmann::json{{"meta", meta}, {"table", table.to_json()}}.dump(2) << '\n';
  std::ofstream(base + ".md") << table.markdown();
  std::ofstream(base + ".csv") << table.csv();
}

}  // namespace llara::eval
