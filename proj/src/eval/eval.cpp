#include "llara/eval/eval.hpp"

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace llara::eval {

std::string to_string(Decoding d) { return d == Decoding::Free ? "free" : "constrained"; }

Decoding parse_decoding(const std::string& name) {
  if (name == "free") return Decoding::Free;
  if (name == "constrained") return Decoding::Constrained;
  throw Error("unknown decoding '" + name + "' (expected free or constrained)");
}

std::string normalize(std::string_view text) {
  std::string out;
  bool space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

Resolution resolve(const std::string& raw, const corpus::SequenceExample& ex, const corpus::ItemCatalog& catalog,
                   bool numeric, const lm::Vocab* vocab) {
  Resolution r;
  r.raw = raw;
  r.rule = "none";
  const std::string norm = normalize(raw);
  if (norm.empty()) return r;
  for (ItemId c : ex.candidates) {
    if (numeric) {
      if (norm == std::to_string(c)) return {raw, true, c, "numeric_id"};
      continue;
    }
    if (norm == normalize(catalog.title(c))) return {raw, true, c, "title"};
    if (vocab && norm == normalize(vocab->detokenize(vocab->tokenize(catalog.title(c))))) return {raw, true, c, "rendered_title"};
  }
  return r;
}

nlohmann::json EvalRecord::to_json() const {
  return {{"example", example},
          {"mode", mode},
          {"template_id", template_id},
          {"raw_text", resolution.raw},
          {"outcome", resolution.resolved ? "resolved" : "invalid"},
          {"item", resolution.resolved ? nlohmann::json(resolution.item) : nlohmann::json(nullptr)},
          {"rule", resolution.rule},
          {"target", target},
          {"correct", correct}};
}

double hit_ratio_at_1(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw Error("hit_ratio_at_1: no records");
  std::size_t hits = 0;
  for (const auto& r : records) hits += r.resolution.resolved && r.resolution.item == r.target;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double valid_ratio(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw Error("valid_ratio: no records");
  std::size_t valid = 0;
  for (const auto& r : records) valid += r.resolution.resolved;
  return static_cast<double>(valid) / static_cast<double>(records.size());
}

nlohmann::json EvalReport::summary_json() const {
  return {{"label", label},
          {"mode", mode},
          {"decoding", to_string(decoding)},
          {"n_examples", n_examples},
          {"hit_ratio_1", hit_ratio_1},
          {"valid_ratio", valid_ratio}};
}

namespace {

EvalReport finish(std::string label, std::string mode, Decoding d, std::vector<EvalRecord> records) {
  EvalReport rep;
  rep.label = std::move(label);
  rep.mode = std::move(mode);
  rep.decoding = d;
  rep.n_examples = records.size();
  rep.hit_ratio_1 = hit_ratio_at_1(records);
  rep.valid_ratio = valid_ratio(records);
  rep.records = std::move(records);
  return rep;
}

}  // namespace

EvalReport evaluate(fusion::Bundle& bundle, const std::vector<corpus::SequenceExample>& examples, fusion::Mode mode,
                    Decoding decoding, std::uint64_t seed, int max_new_tokens) {
  if (fusion::injects(mode) && !bundle.recommender) throw Error("evaluate: mode " + fusion::to_string(mode) + " needs a recommender");
  if (fusion::injects(mode) && bundle.adapter.first.weight.value.size() == 0)
    throw Error("evaluate: mode " + fusion::to_string(mode) + " needs a trained adapter");
  const auto renderer = bundle.renderer();
  auto injector = bundle.injector();
  std::mt19937_64 rng(seed);
  std::vector<EvalRecord> records;
  records.reserve(examples.size());
  ad::NoGradGuard no_grad;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    const auto prompt = renderer.render(ex, fusion::pick_template(rng), mode, false);
    const auto seq = fusion::assemble(prompt, bundle.lm, fusion::injects(mode) ? &injector : nullptr);
    lm::Generation gen;
    if (decoding == Decoding::Constrained) {
      std::vector<std::vector<int>> answers;
      for (ItemId c : ex.candidates) answers.push_back(renderer.answer_tokens(c, mode));
      const lm::PrefixTrie trie(answers, bundle.vocab.eos());
      gen = lm::generate(bundle.lm, bundle.vocab, seq.rows.value(), &trie, max_new_tokens, true);
    } else {
      gen = lm::generate(bundle.lm, bundle.vocab, seq.rows.value(), nullptr, max_new_tokens, true);
    }
    EvalRecord rec;
    rec.example = i;
    rec.mode = fusion::to_string(mode);
    rec.template_id = prompt.template_id;
    rec.resolution = resolve(gen.text, ex, bundle.catalog, mode == fusion::Mode::NumericIndex, &bundle.vocab);
    rec.target = ex.target;
    rec.correct = rec.resolution.resolved && rec.resolution.item == ex.target;
    records.push_back(std::move(rec));
  }
  return finish("llara", fusion::to_string(mode), decoding, std::move(records));
}

EvalReport evaluate_recommender(recsys::RecommenderModel<float>& model, const std::vector<corpus::SequenceExample>& examples,
                                const corpus::ItemCatalog& catalog) {
  std::vector<EvalRecord> records;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    const ItemId pick = recsys::predict_from_candidates(model, ex);
    EvalRecord rec;
    rec.example = i;
    rec.mode = "recommender";
    rec.resolution = resolve(catalog.title(pick), ex, catalog);
    rec.target = ex.target;
    rec.correct = rec.resolution.resolved && rec.resolution.item == ex.target;
    records.push_back(std::move(rec));
  }
  return finish("recommender", "recommender", Decoding::Constrained, std::move(records));
}

std::string markdown_table(const std::vector<EvalReport>& reports) {
  std::string out = "| model | mode | decoding | n | ValidRatio | HitRatio@1 |\n|---|---|---|---|---|---|\n";
  char buf[64];
  for (const auto& r : reports) {
    out += "| " + r.label + " | " + r.mode + " | " + to_string(r.decoding) + " | " + std::to_string(r.n_examples) + " | ";
    std::snprintf(buf, sizeof buf, "%.4f | %.4f |\n", r.valid_ratio, r.hit_ratio_1);
    out += buf;
  }
  return out;
}

void write_reports(const std::string& dir, const std::string& stem, const std::vector<EvalReport>& reports,
                   const nlohmann::json& meta) {
  std::filesystem::create_directories(dir);
  const std::string base = dir + "/" + stem;
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& r : reports) summary.push_back(r.summary_json());
  {
    std::ofstream os(base + ".json");
    os << nlohmann::json{{"meta", meta}, {"reports", summary}}.dump(2) << '\n';
  }
  {
    std::ofstream os(base + ".csv");
    os << "model,mode,decoding,n_examples,valid_ratio,hit_ratio_1\n";
    char buf[64];
    for (const auto& r : reports) {
      std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.valid_ratio, r.hit_ratio_1);
      os << r.label << ',' << r.mode << ',' << to_string(r.decoding) << ',' << r.n_examples << ',' << buf << '\n';
    }
  }
  {
    std::ofstream os(base + ".md");
    os << markdown_table(reports);
  }
  {
    std::ofstream os(base + "_records.jsonl");
    for (const auto& r : reports)
      for (const auto& rec : r.records) {
        auto j = rec.to_json();
        j["decoding"] = to_string(r.decoding);
        j["model"] = r.label;
        os << j.dump() << '\n';
      }
  }
  for (const char* ext : {".json", ".csv", ".md", "_records.jsonl"})
    if (!std::filesystem::exists(base + ext)) throw Error("could not write report '" + base + ext + "'");
}

}  // namespace llara::eval
