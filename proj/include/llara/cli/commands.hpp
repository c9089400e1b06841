#pragma once

// Pipeline commands. Every artifact lands under the config's output_dir:
//
//   data/      split manifest, example files, catalog, summary.json
//   rec/       per-seed recommender checkpoints, metrics.json, resumable state
//   lm/        pretrained base LM
//   train/<run>/  training log, epoch snapshots, best.llara, summary.json
//   eval/<run>/   evaluation reports
//   ablate/<suite>/  comparison tables and per-run directories
//   report.md  everything above collected into one markdown file

#include "llara/cli/run_config.hpp"
#include "llara/fusion/bundle.hpp"

#include <iosfwd>
#include <string>

namespace llara::cli {

struct CommandOptions {
  bool force = false;   // replace existing outputs
  bool resume = false;  // train-rec: continue an interrupted grid
  std::ostream* out = nullptr;  // progress and summaries; null = silent
};

struct PreparedData {
  corpus::ItemCatalog catalog;
  corpus::SplitCorpus split;
  std::vector<corpus::SequenceExample> train, val, test;
  nlohmann::json summary;
};

/// Reads output_dir/data, checking that it was prepared from this dataset
/// block.
PreparedData load_prepared(const RunConfig& cfg);

/// Name of the run directory for the configured mode, strategy and seed.
std::string run_name(const RunConfig& cfg);

/// Manifest fields shared by every checkpoint: config hash, version,
/// timestamp and seed.
nlohmann::json checkpoint_manifest(const RunConfig& cfg, std::uint64_t seed);

nlohmann::json cmd_prepare(const RunConfig& cfg, const CommandOptions& opt);
nlohmann::json cmd_train_rec(const RunConfig& cfg, const CommandOptions& opt);
nlohmann::json cmd_train(const RunConfig& cfg, const CommandOptions& opt);
/// `checkpoint` is relative to output_dir; empty means the configured run's
/// best checkpoint.
nlohmann::json cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const CommandOptions& opt);
/// `suite` is "rq2" (representations) or "rq3" (strategies).
nlohmann::json cmd_ablate(const RunConfig& cfg, const std::string& suite, const CommandOptions& opt);
nlohmann::json cmd_report(const RunConfig& cfg, const CommandOptions& opt);

}  // namespace llara::cli
