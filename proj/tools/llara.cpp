// Command-line driver: llara <command> [--config file.json] [--set key=value]...

#include "llara/cli/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace llara::cli;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::string output_dir;
  bool force = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_file, "JSON run configuration");
  cmd->add_option("-s,--set", c.sets, "Override one key, e.g. --set strategy.epochs=3");
  cmd->add_option("-o,--output-dir", c.output_dir, "Override output_dir");
  cmd->add_flag("-f,--force", c.force, "Replace existing outputs");
  cmd->add_flag("-q,--quiet", c.quiet, "Print only the result JSON");
}

LoadedConfig load(Common& c, std::vector<std::string> extra) {
  auto sets = c.sets;
  if (!c.output_dir.empty()) sets.push_back("output_dir=" + nlohmann::json(c.output_dir).dump());
  for (auto& e : extra) sets.push_back(std::move(e));
  return load_config(c.config_file, sets);
}

CommandOptions options(const Common& c) {
  CommandOptions o;
  o.force = c.force;
  o.out = c.quiet ? nullptr : &std::cerr;
  return o;
}

std::string json_string(const std::string& s) { return nlohmann::json(s).dump(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LLaRA-lite: sequential recommendation with a small language model"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  Common common;
  std::string strategy, mode, suite, checkpoint, decoding, seeds;
  bool resume = false;

  auto* prepare = app.add_subcommand("prepare", "Split the interaction log and write example files");
  add_common(prepare, common);

  auto* train_rec = app.add_subcommand("train-rec", "Grid-search the behavioral recommender");
  add_common(train_rec, common);
  train_rec->add_option("--seeds", seeds, "Comma-separated seed list, e.g. 0 or 0,1,2");
  train_rec->add_flag("--resume", resume, "Continue an interrupted grid from its saved state");

  auto* train = app.add_subcommand("train", "Prompt-tune the language model");
  add_common(train, common);
  train->add_option("--strategy", strategy, "direct | two_stage | curriculum");
  train->add_option("--mode", mode, "numeric_index | behavioral_only | text_only_ph | hybrid");

  auto* evaluate = app.add_subcommand("eval", "Evaluate a checkpoint on the test examples");
  add_common(evaluate, common);
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint path relative to output_dir (default: the configured run)");
  evaluate->add_option("--decoding", decoding, "free | constrained | both");
  evaluate->add_option("--mode", mode, "Selects the default run together with --strategy");
  evaluate->add_option("--strategy", strategy, "Selects the default run together with --mode");

  auto* ablate = app.add_subcommand("ablate", "Run a comparison suite");
  add_common(ablate, common);
  ablate->add_option("--suite", suite, "rq2 (representations) | rq3 (strategies)")->required();
  ablate->add_option("--seeds", seeds, "Comma-separated seed list");

  auto* report = app.add_subcommand("report", "Collect every result into report.md");
  add_common(report, common);

  auto* config = app.add_subcommand("config", "Inspect the configuration");
  config->require_subcommand(1);
  auto* explain_cmd = config->add_subcommand("explain", "Print every key with its value, source and provenance");
  add_common(explain_cmd, common);
  auto* show = config->add_subcommand("show", "Print the resolved configuration as JSON");
  add_common(show, common);

  CLI11_PARSE(app, argc, argv);

  try {
    auto seed_list = [&]() {
      std::vector<std::uint64_t> out;
      std::stringstream ss(seeds);
      for (std::string part; std::getline(ss, part, ',');) out.push_back(std::stoull(part));
      return nlohmann::json(out).dump();
    };
    std::vector<std::string> extra;
    if (!strategy.empty()) extra.push_back("strategy.kind=" + json_string(strategy));
    if (!mode.empty()) extra.push_back("fusion.mode=" + json_string(mode));
    if (!decoding.empty()) {
      if (decoding == "both") extra.push_back("eval.both=true");
      else extra.insert(extra.end(), {"eval.both=false", "eval.decoding=" + json_string(decoding)});
    }
    if (!seeds.empty()) extra.push_back((*ablate ? "ablate.seeds=" : "recommender.seeds=") + seed_list());

    const auto loaded = load(common, extra);
    const auto& cfg = loaded.config;
    auto opt = options(common);
    nlohmann::json result;
    if (*prepare) result = cmd_prepare(cfg, opt);
    else if (*train_rec) {
      opt.resume = resume;
      result = cmd_train_rec(cfg, opt);
    } else if (*train) result = cmd_train(cfg, opt);
    else if (*evaluate) result = cmd_eval(cfg, checkpoint, opt);
    else if (*ablate) result = cmd_ablate(cfg, suite, opt);
    else if (*report) result = cmd_report(cfg, opt);
    else if (*explain_cmd) {
      std::cout << "config hash " << cfg.hash() << "\n" << explain(loaded);
      return kOk;
    } else if (*show) {
      std::cout << cfg.to_json().dump(2) << '\n';
      return kOk;
    }
    std::cout << result.dump() << '\n';
    return kOk;
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    std::cerr << "error: " << e.what() << '\n';
    return code;
  }
}
