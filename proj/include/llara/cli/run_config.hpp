#pragma once

// The run configuration shared by every command: one JSON document with a
// block per module, layered under command-line overrides.

#include "llara/corpus/synthetic.hpp"
#include "llara/curriculum/trainer.hpp"
#include "llara/eval/eval.hpp"
#include "llara/recsys/train.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace llara::cli {

/// Exit codes, fixed for scripting.
enum ExitCode : int { kOk = 0, kFailure = 1, kRefuseOverwrite = 2, kDivergence = 3, kMissingDependency = 4, kIncompatible = 5 };

class RefuseOverwriteError : public Error {
 public:
  using Error::Error;
};
class MissingDependencyError : public Error {
 public:
  using Error::Error;
};
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

/// Maps an exception escaping a command to its exit code.
int exit_code_for(const std::exception& e);

struct DatasetConfig {
  std::string source = "synthetic";  // "synthetic" | "file"
  std::string path;                   // interaction log when source == "file"
  std::string format = "movielens_udata";  // "movielens_udata" | "tsv_triples"
  std::string catalog;                // optional title TSV
  corpus::SynthConfig synthetic;
  double train_ratio = 0.8, val_ratio = 0.1, test_ratio = 0.1;
  bool sliding_train = true;  // every prefix of a training sequence is an example
  std::uint64_t seed = 0;     // candidate sampling
};

struct LmBlock {
  lm::LmConfig arch;  // vocab_size is filled from the built vocabulary
  curriculum::PretrainConfig pretrain;
};

struct FusionConfig {
  fusion::Mode mode = fusion::Mode::Hybrid;
  std::string templates;  // directory with template_{1,2,3}.txt; empty = bundled
  std::string domain_word = "movie";
  std::uint64_t recommender_seed = 0;  // which per-seed recommender to inject
};

struct EvalConfig {
  eval::Decoding decoding = eval::Decoding::Constrained;
  bool both = true;  // report free and constrained decoding
  std::uint64_t seed = 0;
  int max_new_tokens = 24;
};

struct AblateConfig {
  std::vector<std::uint64_t> seeds = {0};
};

struct RunConfig {
  DatasetConfig dataset;
  recsys::RecTrainConfig recommender;
  LmBlock lm;
  FusionConfig fusion;
  curriculum::StrategyConfig strategy;
  EvalConfig eval;
  AblateConfig ablate;
  std::string output_dir = "runs/default";

  RunConfig();  // desk-scale defaults

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  /// Hash of everything except output_dir, as 16 hex digits.
  std::string hash() const;
  /// Hash of the blocks that decide the prepared data.
  std::string data_hash() const;
  /// Hash of the blocks that decide the pretrained base LM.
  std::string base_hash() const;
  /// Hash of the blocks that decide the recommender checkpoints.
  std::string rec_hash() const;
};

/// Applies `key.path=value` overrides to a JSON config document. The value is
/// parsed as JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Where each key's value came from, for `config explain`.
enum class Source { Default, File, Override };

struct LoadedConfig {
  RunConfig config;
  std::map<std::string, Source> sources;  // dotted key -> source
};

/// Defaults, then the file (if any), then overrides. Unknown keys throw.
/// A relative output_dir is resolved against LLARA_OUTPUT_ROOT when set.
LoadedConfig load_config(const std::string& file, const std::vector<std::string>& overrides);

/// Dotted key -> why the default has its value.
const std::map<std::string, std::string>& provenance();

/// One line per leaf key: key, value, source, provenance.
std::string explain(const LoadedConfig& loaded);

/// FNV-1a 64 over bytes, as 16 hex digits.
std::string fnv_hex(const std::string& bytes);

/// git-describe string baked in at build time.
std::string version_string();

}  // namespace llara::cli
