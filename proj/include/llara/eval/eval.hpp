#pragma once

// Response resolution, HitRatio@1 / ValidRatio, and evaluation of bundles and
// recommenders over test examples.

#include "llara/fusion/bundle.hpp"
#include "llara/lm/generate.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace llara::eval {

using corpus::ItemId;

enum class Decoding { Free, Constrained };
std::string to_string(Decoding d);
Decoding parse_decoding(const std::string& name);

/// Trim, collapse internal whitespace to one space, ASCII case-fold.
std::string normalize(std::string_view text);

struct Resolution {
  std::string raw;
  bool resolved = false;
  ItemId item = -1;
  std::string rule;  // "title", "rendered_title", "numeric_id" or "none"
};

/// Matches `raw` against this example's candidates only: exact equality of
/// normalized text with a candidate title (or, with `numeric`, with the
/// candidate's decimal id). The first matching candidate wins. `vocab`, when
/// given, also admits the title as re-rendered from its tokens.
Resolution resolve(const std::string& raw, const corpus::SequenceExample& ex, const corpus::ItemCatalog& catalog,
                   bool numeric = false, const lm::Vocab* vocab = nullptr);

struct EvalRecord {
  std::size_t example = 0;
  std::string mode;
  int template_id = 0;
  Resolution resolution;
  ItemId target = -1;
  bool correct = false;

  nlohmann::json to_json() const;
};

double hit_ratio_at_1(const std::vector<EvalRecord>& records);
double valid_ratio(const std::vector<EvalRecord>& records);

struct EvalReport {
  std::string label;
  std::string mode;
  Decoding decoding = Decoding::Free;
  std::size_t n_examples = 0;
  double hit_ratio_1 = 0;
  double valid_ratio = 0;
  std::vector<EvalRecord> records;

  nlohmann::json summary_json() const;
};

/// Renders each example in `mode` with a template drawn from `seed`,
/// generates greedily and resolves the response.
EvalReport evaluate(fusion::Bundle& bundle, const std::vector<corpus::SequenceExample>& examples, fusion::Mode mode,
                    Decoding decoding, std::uint64_t seed, int max_new_tokens = 24);

/// The recommender's own candidate argmax, scored like a response.
EvalReport evaluate_recommender(recsys::RecommenderModel<float>& model, const std::vector<corpus::SequenceExample>& examples,
                                const corpus::ItemCatalog& catalog);

/// Writes <stem>.json, <stem>.csv, <stem>.md and <stem>_records.jsonl.
void write_reports(const std::string& dir, const std::string& stem, const std::vector<EvalReport>& reports,
                   const nlohmann::json& meta);
std::string markdown_table(const std::vector<EvalReport>& reports);

}  // namespace llara::eval
