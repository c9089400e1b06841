#include "tiny_world.hpp"

#include "llara/eval/ablation.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace llara;
using namespace llara::eval;
using llara::testing::TinyWorld;

namespace {

corpus::ItemCatalog film_catalog() {
  corpus::ItemCatalog c;
  c.n_items = 4;
  c.titles = {"Toy Story (1995)", "Heat", "Se7en (1995)", "Fargo"};
  return c;
}

corpus::SequenceExample film_example() {
  corpus::SequenceExample ex;
  ex.history = std::vector<ItemId>(corpus::kHistoryLength, 4);
  ex.history.back() = 3;
  ex.history_len = 1;
  ex.candidates = {2, 0, 1};
  ex.target = 0;
  ex.target_pos = 1;
  return ex;
}

EvalRecord record(bool resolved, ItemId item, ItemId target) {
  EvalRecord r;
  r.resolution.resolved = resolved;
  r.resolution.item = item;
  r.target = target;
  r.correct = resolved && item == target;
  return r;
}

fusion::Bundle tiny_bundle(const TinyWorld& w) {
  fusion::Bundle b;
  b.vocab = w.vocab;
  b.catalog = w.catalog;
  b.templates = w.templates;
  b.lm = lm::CausalLm<float>(w.lm_config(), 1);
  b.recommender = recsys::RecommenderModel<float>(w.catalog.n_items, w.rec_config(), 2);
  b.init_adapter(3);
  b.prepare_for_tuning();
  return b;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("normalization") {
  CHECK(normalize("  Toy   Story\t(1995) \n") == "toy story (1995)");
  CHECK(normalize("") == "");
  CHECK(normalize("   ") == "");
}

TEST_CASE("resolution against the example's candidates") {
  const auto cat = film_catalog();
  const auto ex = film_example();
  auto r = resolve("toy story (1995)", ex, cat);
  CHECK(r.resolved);
  CHECK(r.item == 0);
  CHECK(r.rule == "title");
  CHECK(resolve("  HEAT ", ex, cat).item == 1);
  // Fargo is a real title but not a candidate here.
  CHECK_FALSE(resolve("Fargo", ex, cat).resolved);
  CHECK_FALSE(resolve("Toy Story", ex, cat).resolved);
  CHECK_FALSE(resolve("", ex, cat).resolved);
  CHECK(resolve("nonsense", ex, cat).rule == "none");

  CHECK(resolve("2", ex, cat, true).item == 2);
  CHECK(resolve("2", ex, cat, true).rule == "numeric_id");
  CHECK_FALSE(resolve("3", ex, cat, true).resolved);
  CHECK_FALSE(resolve("Heat", ex, cat, true).resolved);
  CHECK_FALSE(resolve("2", ex, cat).resolved);

  lm::Vocab v;
  for (const auto& t : cat.titles) v.add_text(t);
  const std::string rendered = v.detokenize(v.tokenize(cat.title(2)));
  if (normalize(rendered) != normalize(cat.title(2))) {
    const auto rr = resolve(rendered, ex, cat, false, &v);
    CHECK(rr.item == 2);
    CHECK(rr.rule == "rendered_title");
  }
  CHECK(resolve(rendered, ex, cat, false, &v).item == 2);
}

TEST_CASE("metrics") {
  const std::vector<EvalRecord> recs = {record(true, 1, 1), record(true, 2, 1), record(false, -1, 3), record(true, 3, 3)};
  CHECK(hit_ratio_at_1(recs) == 0.5);
  CHECK(valid_ratio(recs) == 0.75);
  CHECK_THROWS(hit_ratio_at_1({}));
  CHECK_THROWS(valid_ratio({}));
  const auto j = recs[2].to_json();
  CHECK(j["outcome"] == "invalid");
  CHECK(j["item"].is_null());
}

TEST_CASE("a uniform random guesser scores one in twenty-one") {
  std::mt19937_64 rng(17);
  std::vector<EvalRecord> recs;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto target = static_cast<ItemId>(rng() % 150);
    std::vector<ItemId> cands = {target};
    while (cands.size() < 21) {
      const auto c = static_cast<ItemId>(rng() % 150);
      if (std::find(cands.begin(), cands.end(), c) == cands.end()) cands.push_back(c);
    }
    std::shuffle(cands.begin(), cands.end(), rng);
    const auto pick = cands[std::uniform_int_distribution<std::size_t>(0, 20)(rng)];
    recs.push_back(record(true, pick, target));
  }
  CHECK(std::abs(hit_ratio_at_1(recs) - 1.0 / 21) <= 0.01);
  CHECK(valid_ratio(recs) == 1.0);
}

TEST_CASE("evaluation lattice and constrained validity on a tiny bundle") {
  TinyWorld w;
  auto b = tiny_bundle(w);
  std::vector<corpus::SequenceExample> exs;
  for (int i = 0; i < 6; ++i) {
    auto ex = w.example;
    ex.target_pos = i % 3;
    ex.target = ex.candidates[static_cast<std::size_t>(ex.target_pos)];
    exs.push_back(ex);
  }
  for (auto mode : {fusion::Mode::NumericIndex, fusion::Mode::BehavioralOnly, fusion::Mode::TextOnlyPH, fusion::Mode::Hybrid})
    for (auto dec : {Decoding::Free, Decoding::Constrained}) {
      CAPTURE(fusion::to_string(mode));
      const auto rep = evaluate(b, exs, mode, dec, 0);
      CHECK(rep.n_examples == exs.size());
      CHECK(rep.hit_ratio_1 <= rep.valid_ratio);
      if (dec == Decoding::Constrained) CHECK(rep.valid_ratio == 1.0);
    }
  auto no_rec = b;
  no_rec.recommender.reset();
  CHECK_THROWS(evaluate(no_rec, exs, fusion::Mode::Hybrid, Decoding::Free, 0));
  CHECK_NOTHROW(evaluate(no_rec, exs, fusion::Mode::TextOnlyPH, Decoding::Free, 0));

  const auto rec = evaluate_recommender(*b.recommender, exs, b.catalog);
  CHECK(rec.valid_ratio == 1.0);
}

TEST_CASE("report files are complete and reproducible") {
  TinyWorld w;
  auto b = tiny_bundle(w);
  const std::vector<corpus::SequenceExample> exs(3, w.example);
  const auto dir = (std::filesystem::temp_directory_path() / "llara_eval_reports").string();
  std::filesystem::remove_all(dir);
  auto once = [&](const std::string& sub) {
    const auto free = evaluate(b, exs, fusion::Mode::Hybrid, Decoding::Free, 5);
    const auto con = evaluate(b, exs, fusion::Mode::Hybrid, Decoding::Constrained, 5);
    write_reports(dir + "/" + sub, "eval", {free, con}, {{"seed", 5}});
  };
  once("a");
  once("b");
  for (const char* f : {"eval.json", "eval.csv", "eval.md", "eval_records.jsonl"}) {
    CAPTURE(f);
    const auto a = slurp(dir + "/a/" + f);
    CHECK_FALSE(a.empty());
    CHECK(a == slurp(dir + "/b/" + f));
  }
  std::ifstream recs(dir + "/a/eval_records.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(recs, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("raw_text"));
    CHECK(j.contains("rule"));
    ++lines;
  }
  CHECK(lines == 6);
  CHECK(markdown_table({}).find("HitRatio@1") != std::string::npos);
  CHECK(parse_decoding("free") == Decoding::Free);
  CHECK_THROWS(parse_decoding("beam"));
}

TEST_CASE("ablation tables keep the row structure and aggregate per seed") {
  AblationTable t;
  t.suite = "strategy";
  for (const char* label : {"direct", "two_stage", "curriculum"}) {
    AblationRow row;
    row.label = label;
    for (std::uint64_t s = 0; s < 2; ++s) {
      RunResult r;
      r.label = label;
      r.seed = s;
      r.constrained.hit_ratio_1 = 0.1 * static_cast<double>(s + 1);
      r.constrained.valid_ratio = 1.0;
      row.runs.push_back(r);
    }
    t.rows.push_back(row);
  }
  t.rows[1].runs[1].failed = true;
  t.rows[1].runs[1].error = "diverged";
  const auto [mean, sd] = t.rows[0].stat(&EvalReport::hit_ratio_1, true);
  CHECK(mean == doctest::Approx(0.15));
  CHECK(sd == doctest::Approx(0.05));
  CHECK(t.rows[1].stat(&EvalReport::hit_ratio_1, true).first == doctest::Approx(0.1));
  const auto j = t.to_json();
  CHECK(j["rows"].size() == 3);
  CHECK(j["rows"][1]["failed"] == true);
  CHECK(t.markdown().find("1/2") != std::string::npos);
  CHECK(t.csv().find("two_stage,1,failed") != std::string::npos);
}
