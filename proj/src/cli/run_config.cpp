#include "llara/cli/run_config.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef LLARA_VERSION
#define LLARA_VERSION "unknown"
#endif

namespace llara::cli {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const RefuseOverwriteError*>(&e)) return kRefuseOverwrite;
  if (dynamic_cast<const recsys::DivergenceError*>(&e) || dynamic_cast<const curriculum::DivergenceError*>(&e))
    return kDivergence;
  if (dynamic_cast<const MissingDependencyError*>(&e)) return kMissingDependency;
  if (dynamic_cast<const IncompatibleError*>(&e)) return kIncompatible;
  return kFailure;
}

std::string fnv_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string version_string() { return LLARA_VERSION; }

RunConfig::RunConfig() {
  // Desk-scale language model; the published backbone is far out of reach.
  lm.arch.dim = 64;
  lm.arch.layers = 2;
  lm.arch.heads = 4;
  lm.arch.context = 256;
  lm.pretrain.epochs = 16;
  lm.pretrain.batch = 16;
  lm.pretrain.max_lr = 2e-3;
  // Heavier answer loss and short candidate lists early both push the model
  // to copy its answer from the list instead of guessing from the history.
  lm.pretrain.response_weight = 5.0;
  lm.pretrain.candidate_ramp = true;
  strategy.batch = 16;
  strategy.max_lr = 1e-3;
}

namespace {

template <class F>
void for_keys(const nlohmann::json& j, const std::string& block, F&& f) {
  if (!j.is_object()) throw Error(block + ": expected an object");
  for (const auto& [k, v] : j.items()) f(k, v);
}

[[noreturn]] void unknown(const std::string& block, const std::string& key) {
  throw Error(block + ": unknown key '" + key + "'");
}

nlohmann::json dataset_json(const DatasetConfig& d) {
  return {{"source", d.source},
          {"path", d.path},
          {"format", d.format},
          {"catalog", d.catalog},
          {"synthetic", corpus::to_json(d.synthetic)},
          {"train_ratio", d.train_ratio},
          {"val_ratio", d.val_ratio},
          {"test_ratio", d.test_ratio},
          {"sliding_train", d.sliding_train},
          {"seed", d.seed}};
}

DatasetConfig dataset_from(const nlohmann::json& j) {
  DatasetConfig d;
  for_keys(j, "dataset", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "source") d.source = v.get<std::string>();
    else if (k == "path") d.path = v.get<std::string>();
    else if (k == "format") d.format = v.get<std::string>();
    else if (k == "catalog") d.catalog = v.get<std::string>();
    else if (k == "synthetic") d.synthetic = corpus::synth_config_from_json(v);
    else if (k == "train_ratio") d.train_ratio = v.get<double>();
    else if (k == "val_ratio") d.val_ratio = v.get<double>();
    else if (k == "test_ratio") d.test_ratio = v.get<double>();
    else if (k == "sliding_train") d.sliding_train = v.get<bool>();
    else if (k == "seed") d.seed = v.get<std::uint64_t>();
    else unknown("dataset", k);
  });
  return d;
}

LmBlock lm_from(const nlohmann::json& j, const LmBlock& defaults) {
  LmBlock b = defaults;
  nlohmann::json arch = defaults.arch.to_json();
  nlohmann::json pre = defaults.pretrain.to_json();
  for_keys(j, "lm", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "arch") {
      if (v.contains("vocab_size")) throw Error("lm.arch.vocab_size comes from the vocabulary and cannot be set");
      arch.merge_patch(v);
    }
    else if (k == "pretrain") pre.merge_patch(v);
    else unknown("lm", k);
  });
  b.arch = lm::LmConfig::from_json(arch);
  b.pretrain = curriculum::PretrainConfig::from_json(pre);
  return b;
}

FusionConfig fusion_from(const nlohmann::json& j) {
  FusionConfig f;
  for_keys(j, "fusion", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "mode") f.mode = fusion::parse_mode(v.get<std::string>());
    else if (k == "templates") f.templates = v.get<std::string>();
    else if (k == "domain_word") f.domain_word = v.get<std::string>();
    else if (k == "recommender_seed") f.recommender_seed = v.get<std::uint64_t>();
    else unknown("fusion", k);
  });
  return f;
}

EvalConfig eval_from(const nlohmann::json& j) {
  EvalConfig e;
  for_keys(j, "eval", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "decoding") e.decoding = eval::parse_decoding(v.get<std::string>());
    else if (k == "both") e.both = v.get<bool>();
    else if (k == "seed") e.seed = v.get<std::uint64_t>();
    else if (k == "max_new_tokens") e.max_new_tokens = v.get<int>();
    else unknown("eval", k);
  });
  return e;
}

AblateConfig ablate_from(const nlohmann::json& j) {
  AblateConfig a;
  for_keys(j, "ablate", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "seeds") a.seeds = v.get<std::vector<std::uint64_t>>();
    else unknown("ablate", k);
  });
  return a;
}

void flatten(const nlohmann::json& j, const std::string& prefix, std::map<std::string, nlohmann::json>& out) {
  if (j.is_object() && !j.empty()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
    return;
  }
  out[prefix] = j;
}

}  // namespace

void RunConfig::validate() const {
  if (dataset.source != "synthetic" && dataset.source != "file")
    throw Error("dataset.source must be 'synthetic' or 'file'");
  if (dataset.source == "file" && dataset.path.empty()) throw Error("dataset.path is required for a file source");
  corpus::parse_log_format(dataset.format);
  dataset.synthetic.validate();
  for (double r : {dataset.train_ratio, dataset.val_ratio, dataset.test_ratio})
    if (!(r >= 0 && r <= 1)) throw Error("dataset: split ratios must lie in [0, 1]");
  if (std::abs(dataset.train_ratio + dataset.val_ratio + dataset.test_ratio - 1.0) > 1e-9)
    throw Error("dataset: split ratios must sum to 1");
  recommender.validate();
  auto arch = lm.arch;
  arch.vocab_size = std::max(arch.vocab_size, 1 << 16);  // the real size is known later
  arch.validate();
  lm.pretrain.validate();
  strategy.validate();
  if (eval.max_new_tokens < 1) throw Error("eval.max_new_tokens must be positive");
  if (ablate.seeds.empty()) throw Error("ablate.seeds must not be empty");
  if (output_dir.empty()) throw Error("output_dir must not be empty");
}

nlohmann::json RunConfig::to_json() const {
  auto arch = lm.arch.to_json();
  arch.erase("vocab_size");
  return {{"dataset", dataset_json(dataset)},
          {"recommender", recommender.to_json()},
          {"lm", {{"arch", arch}, {"pretrain", lm.pretrain.to_json()}}},
          {"fusion",
           {{"mode", fusion::to_string(fusion.mode)},
            {"templates", fusion.templates},
            {"domain_word", fusion.domain_word},
            {"recommender_seed", fusion.recommender_seed}}},
          {"strategy", strategy.to_json()},
          {"eval",
           {{"decoding", eval::to_string(eval.decoding)},
            {"both", eval.both},
            {"seed", eval.seed},
            {"max_new_tokens", eval.max_new_tokens}}},
          {"ablate", {{"seeds", ablate.seeds}}},
          {"output_dir", output_dir}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  auto block = [&](const char* name, auto&& merge) {
    if (j.contains(name)) merge(j.at(name));
  };
  for_keys(j, "config", [&](const std::string& k, const nlohmann::json&) {
    static const std::vector<std::string> known = {"dataset", "recommender", "lm",     "fusion",
                                                   "strategy", "eval",       "ablate", "output_dir"};
    if (std::find(known.begin(), known.end(), k) == known.end()) unknown("config", k);
  });
  block("dataset", [&](const nlohmann::json& v) {
    auto d = dataset_json(c.dataset);
    d.merge_patch(v);
    c.dataset = dataset_from(d);
  });
  block("recommender", [&](const nlohmann::json& v) {
    auto r = c.recommender.to_json();
    r.merge_patch(v);
    c.recommender = recsys::RecTrainConfig::from_json(r);
  });
  block("lm", [&](const nlohmann::json& v) { c.lm = lm_from(v, c.lm); });
  block("fusion", [&](const nlohmann::json& v) { c.fusion = fusion_from(v); });
  block("strategy", [&](const nlohmann::json& v) {
    auto s = c.strategy.to_json();
    s.merge_patch(v);
    c.strategy = curriculum::StrategyConfig::from_json(s);
  });
  block("eval", [&](const nlohmann::json& v) { c.eval = eval_from(v); });
  block("ablate", [&](const nlohmann::json& v) { c.ablate = ablate_from(v); });
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  c.validate();
  return c;
}

std::string RunConfig::hash() const {
  auto j = to_json();
  j.erase("output_dir");
  return fnv_hex(j.dump());
}

std::string RunConfig::data_hash() const { return fnv_hex(to_json().at("dataset").dump()); }

std::string RunConfig::base_hash() const {
  const auto j = to_json();
  return fnv_hex(nlohmann::json{{"dataset", j.at("dataset")},
                                {"lm", j.at("lm")},
                                {"templates", fusion.templates},
                                {"domain_word", fusion.domain_word}}
                     .dump());
}

std::string RunConfig::rec_hash() const {
  const auto j = to_json();
  return fnv_hex(nlohmann::json{{"dataset", j.at("dataset")}, {"recommender", j.at("recommender")}}.dump());
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error("override '" + assignment + "' is not key.path=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw Error("override '" + assignment + "' has an empty key segment");
    if (!node->is_object()) *node = nlohmann::json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

LoadedConfig load_config(const std::string& file, const std::vector<std::string>& overrides) {
  nlohmann::json file_doc = nlohmann::json::object();
  if (!file.empty()) {
    std::ifstream is(file);
    if (!is) throw MissingDependencyError("cannot open config '" + file + "'");
    try {
      file_doc = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw Error("config '" + file + "': " + e.what());
    }
  }
  nlohmann::json over_doc = nlohmann::json::object();
  for (const auto& o : overrides) apply_override(over_doc, o);
  auto merged = file_doc;
  merged.merge_patch(over_doc);

  LoadedConfig out;
  out.config = RunConfig::from_json(merged);
  if (const char* root = std::getenv("LLARA_OUTPUT_ROOT"); root && *root) {
    if (std::filesystem::path(out.config.output_dir).is_relative())
      out.config.output_dir = (std::filesystem::path(root) / out.config.output_dir).lexically_normal().string();
  }

  std::map<std::string, nlohmann::json> leaves, from_file, from_over;
  flatten(out.config.to_json(), "", leaves);
  flatten(file_doc, "", from_file);
  flatten(over_doc, "", from_over);
  auto touched = [](const std::map<std::string, nlohmann::json>& set, const std::string& key) {
    for (const auto& [k, _] : set)
      if (k == key || key.rfind(k + ".", 0) == 0) return true;
    return false;
  };
  for (const auto& [k, _] : leaves)
    out.sources[k] = touched(from_over, k) ? Source::Override : touched(from_file, k) ? Source::File : Source::Default;
  return out;
}

const std::map<std::string, std::string>& provenance() {
  static const std::map<std::string, std::string> p = {
      {"dataset.source", "decision: the synthetic corpus runs without external data"},
      {"dataset.format", "decision: MovieLens u.data layout (user, item, rating, timestamp)"},
      {"dataset.train_ratio", "published: sequences split 8:1:1 by time"},
      {"dataset.val_ratio", "published: sequences split 8:1:1 by time"},
      {"dataset.test_ratio", "published: sequences split 8:1:1 by time"},
      {"dataset.sliding_train", "decision: every prefix of a training sequence becomes an example"},
      {"dataset.seed", "decision: seed for negative candidate sampling"},
      {"dataset.synthetic.n_users", "decision: desk-scale corpus"},
      {"dataset.synthetic.n_items", "decision: desk-scale corpus"},
      {"dataset.synthetic.n_clusters", "decision: desk-scale corpus"},
      {"dataset.synthetic.transition_coherence", "decision: strong behavioral signal for the learnability checks"},
      {"dataset.synthetic.regime", "decision: titles carry no cluster information"},
      {"dataset.synthetic.title_mode", "decision: titles are random strings"},
      {"recommender.lr", "published: recommenders trained with learning rate 0.001"},
      {"recommender.batch", "published: batch size 256"},
      {"recommender.l2_grid", "published: l2 grid search over 1e-3 .. 1e-7"},
      {"recommender.seeds", "published: seeds 0, 1, 2, 3, 4"},
      {"recommender.epochs", "decision: cap with early stopping"},
      {"recommender.patience", "decision: early stopping on validation HitRatio@1"},
      {"recommender.sliding_windows", "decision: train on every prefix window"},
      {"recommender.encoder.kind", "published: SASRec is the default behavioral encoder"},
      {"recommender.encoder.dim", "published: item embedding size 64"},
      {"recommender.encoder.history", "published: history truncated to the last 10 items"},
      {"lm.arch.dim", "decision: desk-scale backbone in place of the 7B model"},
      {"lm.arch.layers", "decision: desk-scale backbone"},
      {"lm.arch.heads", "decision: desk-scale backbone"},
      {"lm.arch.context", "decision: fits the longest rendered prompt"},
      {"lm.arch.lora.rank", "decision: common LoRA rank"},
      {"lm.arch.lora.alpha", "decision: alpha = 2 x rank"},
      {"lm.arch.lora.query", "decision: LoRA on query and value projections"},
      {"lm.arch.lora.value", "decision: LoRA on query and value projections"},
      {"lm.pretrain.epochs", "decision: the backbone is trained from scratch on rendered prompts"},
      {"lm.pretrain.all_tokens", "decision: next-token loss on the whole prompt"},
      {"lm.pretrain.response_weight", "decision: answer tokens weighted 5x to favor copying from the candidates"},
      {"lm.pretrain.vary_candidates", "decision: random-size candidate lists teach copying"},
      {"lm.pretrain.candidate_ramp", "decision: short candidate lists first during pretraining"},
      {"fusion.mode", "published: hybrid item representation"},
      {"fusion.templates", "decision: bundled templates when empty"},
      {"fusion.domain_word", "published: movie domain"},
      {"strategy.kind", "published: curriculum prompt tuning"},
      {"strategy.epochs", "published: 5 epochs"},
      {"strategy.stage_one_epochs", "published: two-stage split of 2 and 3 epochs"},
      {"strategy.batch", "decision: smaller than the published 128 for the desk-scale corpus"},
      {"strategy.max_lr", "decision: larger than the published 2e-4 for the small backbone"},
      {"strategy.warmup_fraction", "decision: linear warmup over 5% of steps"},
      {"strategy.weight_decay", "published: weight decay 1e-5"},
      {"eval.decoding", "decision: constrained decoding over the candidate titles"},
      {"eval.both", "decision: report free and constrained decoding together"},
      {"eval.max_new_tokens", "decision: longer than any title"},
      {"ablate.seeds", "decision: one seed per ablation row by default"},
      {"output_dir", "decision: relative to LLARA_OUTPUT_ROOT when set"},
  };
  return p;
}

std::string explain(const LoadedConfig& loaded) {
  std::map<std::string, nlohmann::json> leaves;
  flatten(loaded.config.to_json(), "", leaves);
  std::ostringstream os;
  for (const auto& [k, v] : leaves) {
    const auto src = loaded.sources.count(k) ? loaded.sources.at(k) : Source::Default;
    os << k << " = " << v.dump() << "  [" << (src == Source::Default ? "default" : src == Source::File ? "file" : "override")
       << "]";
    std::string why = "decision: implementation default";
    for (std::string key = k;;) {
      if (auto it = provenance().find(key); it != provenance().end()) {
        why = it->second;
        break;
      }
      const auto dot = key.rfind('.');
      if (dot == std::string::npos) break;
      key.resize(dot);
    }
    os << "  " << why << '\n';
  }
  return os.str();
}

}  // namespace llara::cli
