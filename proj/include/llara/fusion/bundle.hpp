#pragma once

// Everything needed to render, run and score LLaRA prompts, stored together
// in one checkpoint.

#include "llara/core/archive.hpp"
#include "llara/fusion/adapter.hpp"

#include <optional>

namespace llara::fusion {

struct Bundle {
  lm::Vocab vocab;
  ItemCatalog catalog;
  std::array<PromptTemplate, 3> templates;
  std::string domain_word = "movie";
  lm::CausalLm<float> lm;
  std::optional<recsys::RecommenderModel<float>> recommender;
  Adapter<float> adapter;

  PromptRenderer renderer() const { return {vocab, catalog, templates, domain_word, lm.config().context}; }

  Injector<float> injector() { return {recommender ? &*recommender : nullptr, &adapter}; }

  /// Freezes the backbone and the recommender; LoRA factors, the placeholder
  /// row and the adapter train. `item_embeddings` also unfreezes the
  /// recommender's item table.
  void prepare_for_tuning(bool item_embeddings = false);

  /// Creates a fresh adapter sized recommender dim -> hidden -> LM dim.
  void init_adapter(std::uint64_t seed);
};

void save_bundle(const std::string& path, Bundle& bundle, const nlohmann::json& extra = {});
Bundle load_bundle(const std::string& path);

/// Stores just the tuned weights (LoRA, placeholder, adapter, item table)
/// under fixed names, for snapshots during training.
void store_tuned(io::ArrayArchive& ar, Bundle& bundle);
void restore_tuned(const io::ArrayArchive& ar, Bundle& bundle);

}  // namespace llara::fusion
