#include "llara/cli/commands.hpp"

#include "llara/eval/ablation.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace llara::cli {

namespace {

void say(const CommandOptions& opt, const std::string& line) {
  if (opt.out) *opt.out << line << std::endl;
}

std::string timestamp() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingDependencyError("cannot open '" + path.string() + "'");
  return nlohmann::json::parse(is);
}

/// Refuses to touch an existing output unless forced; with force the old
/// output is removed first.
void claim(const fs::path& path, const CommandOptions& opt, const std::string& what) {
  if (!fs::exists(path)) return;
  if (!opt.force) throw RefuseOverwriteError(what + " already present at '" + path.string() + "' (use --force to replace it)");
  fs::remove_all(path);
}

fs::path root(const RunConfig& cfg) { return fs::path(cfg.output_dir); }

std::array<fusion::PromptTemplate, 3> templates_for(const RunConfig& cfg) {
  return fusion::load_templates(cfg.fusion.templates.empty() ? std::string(LLARA_DEFAULT_DATA_DIR) + "/templates"
                                                             : cfg.fusion.templates);
}

void expect_hash(const nlohmann::json& manifest, const char* key, const std::string& want, const std::string& what) {
  const auto got = manifest.value(key, std::string());
  if (got != want)
    throw IncompatibleError(what + " was built from a different configuration (" + key + " " + got + ", expected " + want + ")");
}

std::string rec_path(const RunConfig& cfg, std::uint64_t seed) {
  return (root(cfg) / "rec" / ("seed_" + std::to_string(seed) + ".ckpt")).string();
}

recsys::RecommenderModel<float> load_rec_checked(const RunConfig& cfg, std::uint64_t seed) {
  const auto path = rec_path(cfg, seed);
  if (!fs::exists(path))
    throw MissingDependencyError("no recommender checkpoint at '" + path + "'; run train-rec first");
  expect_hash(io::ArrayArchive::load(path).manifest, "rec_hash", cfg.rec_hash(), "recommender checkpoint");
  return recsys::load_recommender(path);
}

/// The pretrained base LM, trained and stored on first use.
lm::CausalLm<float> ensure_base_lm(const RunConfig& cfg, const PreparedData& data, const fusion::Bundle& shell,
                                   const CommandOptions& opt) {
  const fs::path path = root(cfg) / "lm" / "base.ckpt";
  if (fs::exists(path)) {
    expect_hash(io::ArrayArchive::load(path.string()).manifest, "base_hash", cfg.base_hash(), "base LM checkpoint");
    return lm::load_lm_base(path.string());
  }
  auto arch = cfg.lm.arch;
  arch.vocab_size = shell.vocab.size();
  lm::CausalLm<float> model(arch, cfg.lm.pretrain.seed, shell.vocab.placeholder());
  say(opt, "pretraining base LM (" + std::to_string(data.train.size()) + " examples, " +
               std::to_string(cfg.lm.pretrain.epochs) + " epochs)");
  fs::create_directories(path.parent_path());
  std::ofstream log(root(cfg) / "lm" / "pretrain_log.jsonl", std::ios::trunc);
  const auto losses = curriculum::pretrain_base(model, shell.renderer(), data.train, cfg.lm.pretrain, &log);
  auto extra = checkpoint_manifest(cfg, cfg.lm.pretrain.seed);
  extra["base_hash"] = cfg.base_hash();
  extra["epoch_losses"] = losses;
  lm::save_lm_base(path.string(), model, extra);
  write_json(root(cfg) / "lm" / "pretrain.json",
             {{"config_hash", cfg.hash()}, {"base_hash", cfg.base_hash()}, {"epoch_losses", losses}});
  return model;
}

/// Catalog, templates and vocabulary; no models yet.
fusion::Bundle bundle_shell(const RunConfig& cfg, const PreparedData& data) {
  fusion::Bundle b;
  b.catalog = data.catalog;
  b.templates = templates_for(cfg);
  b.domain_word = cfg.fusion.domain_word;
  b.vocab = fusion::build_vocab(b.catalog, b.templates);
  return b;
}

fusion::Bundle base_bundle(const RunConfig& cfg, const PreparedData& data, bool need_rec, const CommandOptions& opt) {
  auto b = bundle_shell(cfg, data);
  std::optional<recsys::RecommenderModel<float>> rec;
  // Check the dependency before spending time on pretraining.
  if (need_rec) rec = load_rec_checked(cfg, cfg.fusion.recommender_seed);
  b.lm = ensure_base_lm(cfg, data, b, opt);
  if (b.lm.config().vocab_size != b.vocab.size())
    throw IncompatibleError("base LM vocabulary size differs from the prepared catalog");
  b.recommender = std::move(rec);
  return b;
}

nlohmann::json counts_json(const corpus::InteractionLog& log, const corpus::SplitCorpus& split) {
  return {{"sequences", log.sequences.size()},
          {"items", log.n_items},
          {"interactions", log.n_interactions()},
          {"splits", {{"train", split.train.size()}, {"val", split.val.size()}, {"test", split.test.size()}}}};
}

}  // namespace

std::string run_name(const RunConfig& cfg) {
  return fusion::to_string(cfg.fusion.mode) + "_" + curriculum::to_string(cfg.strategy.kind) + "_seed" +
         std::to_string(cfg.strategy.seed);
}

nlohmann::json checkpoint_manifest(const RunConfig& cfg, std::uint64_t seed) {
  return {{"config_hash", cfg.hash()},
          {"data_hash", cfg.data_hash()},
          {"version", version_string()},
          {"created", timestamp()},
          {"seed", seed}};
}

PreparedData load_prepared(const RunConfig& cfg) {
  const fs::path dir = root(cfg) / "data";
  if (!fs::exists(dir / "summary.json"))
    throw MissingDependencyError("no prepared data under '" + dir.string() + "'; run prepare first");
  PreparedData d;
  d.summary = read_json(dir / "summary.json");
  expect_hash(d.summary, "data_hash", cfg.data_hash(), "prepared data");
  d.catalog = corpus::load_dense_catalog((dir / "catalog.tsv").string());
  d.split = corpus::load_split_manifest((dir / "split_manifest.json").string());
  d.train = corpus::load_examples((dir / "train.jsonl").string());
  d.val = corpus::load_examples((dir / "val.jsonl").string());
  d.test = corpus::load_examples((dir / "test.jsonl").string());
  return d;
}

nlohmann::json cmd_prepare(const RunConfig& cfg, const CommandOptions& opt) {
  cfg.validate();
  const fs::path dir = root(cfg) / "data";
  claim(dir, opt, "prepared data");

  corpus::InteractionLog log;
  corpus::ItemCatalog catalog;
  if (cfg.dataset.source == "synthetic") {
    auto syn = corpus::generate_synthetic(cfg.dataset.synthetic);
    log = std::move(syn.log);
    catalog = std::move(syn.catalog);
  } else {
    log = corpus::load_interactions(cfg.dataset.path, corpus::parse_log_format(cfg.dataset.format));
    if (!cfg.dataset.catalog.empty()) {
      catalog = corpus::load_catalog(cfg.dataset.catalog, log);
    } else {
      catalog.n_items = log.n_items;
      for (auto raw : log.raw_item_ids) catalog.titles.push_back("item " + std::to_string(raw));
    }
  }
  const auto split =
      corpus::chronological_split(log, {cfg.dataset.train_ratio, cfg.dataset.val_ratio, cfg.dataset.test_ratio});
  std::mt19937_64 rng(cfg.dataset.seed);
  const auto train = corpus::build_examples(split.train, log.n_items, rng, cfg.dataset.sliding_train);
  const auto val = corpus::build_examples(split.val, log.n_items, rng, false);
  const auto test = corpus::build_examples(split.test, log.n_items, rng, false);

  fs::create_directories(dir);
  corpus::save_split_manifest((dir / "split_manifest.json").string(), split);
  corpus::save_catalog((dir / "catalog.tsv").string(), catalog);
  corpus::save_examples((dir / "train.jsonl").string(), train);
  corpus::save_examples((dir / "val.jsonl").string(), val);
  corpus::save_examples((dir / "test.jsonl").string(), test);

  auto summary = counts_json(log, split);
  summary["examples"] = {{"train", train.size()}, {"val", val.size()}, {"test", test.size()}};
  summary["warnings"] = split.warnings;
  summary["data_hash"] = cfg.data_hash();
  summary["config_hash"] = cfg.hash();
  summary["version"] = version_string();
  write_json(dir / "summary.json", summary);

  for (const auto& w : split.warnings) say(opt, "warning: " + w);
  say(opt, "sequences " + std::to_string(log.sequences.size()) + ", items " + std::to_string(log.n_items) +
               ", interactions " + std::to_string(log.n_interactions()));
  say(opt, "splits train " + std::to_string(split.train.size()) + " / val " + std::to_string(split.val.size()) +
               " / test " + std::to_string(split.test.size()));
  say(opt, "examples train " + std::to_string(train.size()) + " / val " + std::to_string(val.size()) + " / test " +
               std::to_string(test.size()));
  return summary;
}

nlohmann::json cmd_train_rec(const RunConfig& cfg, const CommandOptions& opt) {
  cfg.validate();
  const auto data = load_prepared(cfg);
  const fs::path dir = root(cfg) / "rec";
  if (fs::exists(dir) && !opt.resume) claim(dir, opt, "recommender outputs");
  if (opt.resume && fs::exists(dir / "metrics.json"))
    throw RefuseOverwriteError("recommender training already finished at '" + dir.string() + "'");
  fs::create_directories(dir / "runs");

  const auto& rc = cfg.recommender;
  const auto n_items = data.catalog.n_items;
  const auto windows = corpus::window_examples(data.split.train, n_items, rc.encoder.history, rc.sliding_windows);
  if (windows.empty()) throw Error("train-rec: empty training split");

  recsys::RecTrainResult out;
  std::map<double, std::vector<std::pair<recsys::RecRunResult, std::string>>> by_l2;
  for (std::size_t li = 0; li < rc.l2_grid.size(); ++li) {
    const double l2 = rc.l2_grid[li];
    for (auto seed : rc.seeds) {
      const std::string stem = "l2_" + std::to_string(li) + "_seed_" + std::to_string(seed);
      const fs::path done = dir / "runs" / (stem + ".json");
      const fs::path model_path = dir / "runs" / (stem + ".ckpt");
      const fs::path state = dir / "runs" / (stem + ".state");
      const fs::path state_meta = dir / "runs" / (stem + ".state.json");
      recsys::RecRunResult result;
      if (fs::exists(done)) {
        const auto j = read_json(done);
        expect_hash(j, "rec_hash", cfg.rec_hash(), "recommender run " + stem);
        const auto r = j.at("result");
        result.l2 = r.at("l2");
        result.seed = r.at("seed");
        result.epochs_run = r.at("epochs_run");
        result.best_epoch = r.at("best_epoch");
        result.best_val_hr = r.at("best_val_hit_ratio_1");
        result.val_curve = r.at("val_curve").get<std::vector<double>>();
        result.loss_curve = r.at("loss_curve").get<std::vector<double>>();
        say(opt, stem + ": already done");
      } else {
        recsys::RecTrainer trainer(windows, &data.val, n_items, rc, l2, seed);
        if (fs::exists(state)) {
          expect_hash(read_json(state_meta), "rec_hash", cfg.rec_hash(), "recommender train state " + stem);
          trainer.load_state(state.string());
          say(opt, stem + ": resuming at epoch " + std::to_string(trainer.epoch()));
        }
        while (!trainer.finished()) {
          trainer.run_epoch();
          trainer.save_state(state.string());
          write_json(state_meta, {{"rec_hash", cfg.rec_hash()}, {"epoch", trainer.epoch()}});
        }
        result = trainer.result();
        auto best = trainer.best_model();
        auto extra = checkpoint_manifest(cfg, seed);
        extra["rec_hash"] = cfg.rec_hash();
        extra["l2"] = l2;
        recsys::save_recommender(model_path.string(), best, extra);
        write_json(done, {{"rec_hash", cfg.rec_hash()}, {"result", result.to_json()}});
        fs::remove(state);
        fs::remove(state_meta);
        say(opt, stem + ": l2 " + std::to_string(l2) + " best val HR@1 " + std::to_string(result.best_val_hr) +
                     " at epoch " + std::to_string(result.best_epoch));
      }
      out.grid.push_back(result);
      by_l2[l2].push_back({result, model_path.string()});
    }
  }
  double best_mean = -1;
  for (double l2 : rc.l2_grid) {
    double total = 0;
    for (const auto& [r, _] : by_l2[l2]) total += r.best_val_hr;
    const double mean = total / static_cast<double>(rc.seeds.size());
    out.seed_mean_by_l2[l2] = mean;
    if (mean > best_mean) {
      best_mean = mean;
      out.best_l2 = l2;
    }
  }
  out.seed_mean_val_hr = best_mean;
  for (const auto& [r, path] : by_l2[out.best_l2]) {
    out.best_runs.push_back(r);
    fs::copy_file(path, rec_path(cfg, r.seed), fs::copy_options::overwrite_existing);
  }
  // Test HitRatio@1 of the selected per-seed models.
  nlohmann::json test = nlohmann::json::array();
  double test_sum = 0;
  for (const auto& r : out.best_runs) {
    auto model = recsys::load_recommender(rec_path(cfg, r.seed));
    const double hr = recsys::hit_ratio_at_1(model, data.test);
    test_sum += hr;
    test.push_back({{"seed", r.seed}, {"test_hit_ratio_1", hr}});
  }
  auto metrics = out.metrics_json();
  metrics["test"] = test;
  metrics["seed_mean_test_hit_ratio_1"] = test_sum / static_cast<double>(out.best_runs.size());
  metrics["config_hash"] = cfg.hash();
  metrics["rec_hash"] = cfg.rec_hash();
  write_json(dir / "metrics.json", metrics);
  say(opt, "best l2 " + std::to_string(out.best_l2) + ": seed-mean val HR@1 " + std::to_string(best_mean) +
               ", test HR@1 " + std::to_string(metrics["seed_mean_test_hit_ratio_1"].get<double>()));
  return metrics;
}

nlohmann::json cmd_train(const RunConfig& cfg, const CommandOptions& opt) {
  cfg.validate();
  const auto data = load_prepared(cfg);
  const fs::path dir = root(cfg) / "train" / run_name(cfg);
  claim(dir, opt, "training run");
  auto bundle = base_bundle(cfg, data, fusion::injects(cfg.fusion.mode), opt);
  const auto seed = cfg.strategy.seed;
  bundle.lm.reset_lora(seed);
  if (bundle.recommender) bundle.init_adapter(seed);

  fs::create_directories(dir);
  curriculum::Trainer trainer(bundle, data.train, cfg.strategy, cfg.fusion.mode);
  std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
  trainer.set_log(&log);
  const auto eval_seed = cfg.eval.seed;
  const auto* val = &data.val;
  const int max_new = cfg.eval.max_new_tokens;
  trainer.set_validator([val, eval_seed, max_new](fusion::Bundle& b, fusion::Mode m) {
    return eval::evaluate(b, *val, m, eval::Decoding::Constrained, eval_seed, max_new).hit_ratio_1;
  });
  nlohmann::json epochs = nlohmann::json::array();
  std::size_t seen = 0;
  while (!trainer.finished()) {
    trainer.run_epoch();
    const auto& recs = trainer.records();
    std::size_t hard = 0;
    double loss = 0;
    for (std::size_t i = seen; i < recs.size(); ++i) {
      hard += recs[i].task == curriculum::Task::Hard;
      loss += recs[i].loss;
    }
    const auto steps = recs.size() - seen;
    seen = recs.size();
    const int e = trainer.epochs_done();
    epochs.push_back({{"epoch", e},
                      {"steps", steps},
                      {"hard_fraction", static_cast<double>(hard) / static_cast<double>(steps)},
                      {"mean_loss", loss / static_cast<double>(steps)},
                      {"val_mode", fusion::to_string(trainer.validation_mode())},
                      {"val_hit_ratio_1", trainer.val_curve().back()}});
    io::ArrayArchive snap;
    fusion::store_tuned(snap, bundle);
    snap.manifest = checkpoint_manifest(cfg, seed);
    snap.manifest["kind"] = "llara_tuned";
    snap.manifest["epoch"] = e;
    snap.manifest["arrays"] = snap.index();
    snap.save((dir / ("epoch_" + std::to_string(e) + ".tuned")).string());
    say(opt, run_name(cfg) + ": epoch " + std::to_string(e) + " hard fraction " +
                 std::to_string(epochs.back()["hard_fraction"].get<double>()) + " val HR@1 " +
                 std::to_string(trainer.val_curve().back()));
  }
  trainer.restore_best();
  auto extra = checkpoint_manifest(cfg, seed);
  extra["mode"] = fusion::to_string(cfg.fusion.mode);
  extra["strategy"] = cfg.strategy.to_json();
  extra["best_epoch"] = trainer.best_epoch();
  if (bundle.recommender) extra["rec_hash"] = cfg.rec_hash();
  fusion::save_bundle((dir / "best.llara").string(), bundle, extra);

  nlohmann::json summary = {{"run", run_name(cfg)},
                            {"config_hash", cfg.hash()},
                            {"mode", fusion::to_string(cfg.fusion.mode)},
                            {"strategy", curriculum::to_string(cfg.strategy.kind)},
                            {"seed", seed},
                            {"total_steps", trainer.total_steps()},
                            {"epochs", epochs},
                            {"val_curve", trainer.val_curve()},
                            {"best_epoch", trainer.best_epoch()},
                            {"best_val_hit_ratio_1", trainer.best_val()}};
  write_json(dir / "summary.json", summary);
  write_json(dir / "config.json", cfg.to_json());
  say(opt, "best epoch " + std::to_string(trainer.best_epoch()) + " val HR@1 " + std::to_string(trainer.best_val()));
  return summary;
}

nlohmann::json cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const CommandOptions& opt) {
  cfg.validate();
  const auto data = load_prepared(cfg);
  const fs::path ckpt = checkpoint.empty() ? root(cfg) / "train" / run_name(cfg) / "best.llara"
                        : fs::path(checkpoint).is_relative() ? root(cfg) / checkpoint
                                                             : fs::path(checkpoint);
  if (!fs::exists(ckpt)) throw MissingDependencyError("no checkpoint at '" + ckpt.string() + "'");
  const auto manifest = io::ArrayArchive::load(ckpt.string()).manifest;
  expect_hash(manifest, "data_hash", cfg.data_hash(), "checkpoint");
  auto bundle = fusion::load_bundle(ckpt.string());
  if (bundle.catalog != data.catalog) throw IncompatibleError("checkpoint catalog differs from the prepared data");
  const auto mode = fusion::parse_mode(manifest.value("mode", fusion::to_string(cfg.fusion.mode)));

  const std::string name = ckpt.parent_path().filename().string();
  const fs::path dir = root(cfg) / "eval" / name;
  claim(dir, opt, "evaluation reports");

  std::vector<eval::Decoding> decodings;
  if (cfg.eval.both) decodings = {eval::Decoding::Free, eval::Decoding::Constrained};
  else decodings = {cfg.eval.decoding};
  std::vector<eval::EvalReport> reports;
  for (auto d : decodings) {
    auto r = eval::evaluate(bundle, data.test, mode, d, cfg.eval.seed, cfg.eval.max_new_tokens);
    r.label = name;
    say(opt, name + " " + eval::to_string(d) + ": ValidRatio " + std::to_string(r.valid_ratio) + " HitRatio@1 " +
                 std::to_string(r.hit_ratio_1));
    reports.push_back(std::move(r));
  }
  nlohmann::json meta = {{"config_hash", cfg.hash()},
                         {"checkpoint_config_hash", manifest.value("config_hash", std::string())},
                         {"checkpoint", fs::relative(ckpt, root(cfg)).generic_string()},
                         {"mode", fusion::to_string(mode)},
                         {"eval_seed", cfg.eval.seed},
                         {"version", version_string()}};
  eval::write_reports(dir.string(), "eval", reports, meta);
  nlohmann::json out = {{"reports", nlohmann::json::array()}, {"dir", dir.string()}};
  for (const auto& r : reports) out["reports"].push_back(r.summary_json());
  return out;
}

nlohmann::json cmd_ablate(const RunConfig& cfg, const std::string& suite, const CommandOptions& opt) {
  cfg.validate();
  if (suite != "rq2" && suite != "rq3") throw Error("unknown suite '" + suite + "' (expected rq2 or rq3)");
  const auto data = load_prepared(cfg);
  const fs::path dir = root(cfg) / "ablate" / suite;
  claim(dir, opt, "ablation outputs");
  const auto base = base_bundle(cfg, data, true, opt);

  eval::AblationSetup setup;
  setup.base = &base;
  setup.train = &data.train;
  setup.val = &data.val;
  setup.test = &data.test;
  setup.strategy = cfg.strategy;
  setup.seeds = cfg.ablate.seeds;
  setup.eval_seed = cfg.eval.seed;
  setup.output_dir = (dir / "runs").string();
  if (opt.out) setup.progress = [&opt](const std::string& m) { say(opt, m); };
  const auto table = suite == "rq2" ? eval::run_rq2(setup) : eval::run_rq3(setup);
  nlohmann::json meta = {{"config_hash", cfg.hash()},
                         {"suite", suite},
                         {"seeds", cfg.ablate.seeds},
                         {"strategy", cfg.strategy.to_json()},
                         {"version", version_string()}};
  eval::write_table(dir.string(), table, meta);
  say(opt, table.markdown());
  return table.to_json();
}

nlohmann::json cmd_report(const RunConfig& cfg, const CommandOptions& opt) {
  const fs::path r = root(cfg);
  if (!fs::exists(r)) throw MissingDependencyError("nothing to report under '" + r.string() + "'");
  std::ostringstream md;
  nlohmann::json index = {{"config_hash", cfg.hash()}, {"sections", nlohmann::json::array()}};
  md << "# Run report\n\nconfig hash `" << cfg.hash() << "`\n";
  if (fs::exists(r / "data" / "summary.json")) {
    const auto s = read_json(r / "data" / "summary.json");
    md << "\n## Data\n\n| sequences | items | interactions | train | val | test |\n|---|---|---|---|---|---|\n| "
       << s["sequences"] << " | " << s["items"] << " | " << s["interactions"] << " | " << s["splits"]["train"] << " | "
       << s["splits"]["val"] << " | " << s["splits"]["test"] << " |\n";
    index["sections"].push_back("data");
  }
  if (fs::exists(r / "rec" / "metrics.json")) {
    const auto m = read_json(r / "rec" / "metrics.json");
    md << "\n## Recommender\n\nbest l2 " << m["best_l2"] << ", seed-mean val HitRatio@1 "
       << m["seed_mean_val_hit_ratio_1"] << ", seed-mean test HitRatio@1 " << m["seed_mean_test_hit_ratio_1"] << "\n";
    index["sections"].push_back("rec");
  }
  auto sorted_dirs = [](const fs::path& p) {
    std::set<fs::path> out;
    if (fs::exists(p))
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_directory()) out.insert(e.path());
    return out;
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  for (const auto& d : sorted_dirs(r / "eval"))
    if (fs::exists(d / "eval.md")) {
      md << "\n## Evaluation: " << d.filename().string() << "\n\n" << slurp(d / "eval.md");
      index["sections"].push_back("eval/" + d.filename().string());
    }
  for (const auto& d : sorted_dirs(r / "ablate"))
    for (const char* suite : {"representation", "strategy"})
      if (fs::exists(d / (std::string(suite) + ".md"))) {
        md << "\n## Ablation " << d.filename().string() << "\n\n" << slurp(d / (std::string(suite) + ".md"));
        index["sections"].push_back("ablate/" + d.filename().string());
      }
  std::ofstream(r / "report.md", std::ios::trunc) << md.str();
  say(opt, md.str());
  return index;
}

}  // namespace llara::cli
