#pragma once

#include "llara/corpus/corpus.hpp"

#include <json.hpp>

#include <string>
#include <utility>

namespace llara::corpus {

/// How item titles relate to the latent behavioral clusters.
///  - behavior_signal: category words (if any) are independent of clusters;
///    only the interaction order carries the signal.
///  - semantic_signal: the category word names the item's cluster.
///  - mixed: half the items (chosen at random) carry their cluster's word.
enum class Regime { BehaviorSignal, SemanticSignal, Mixed };
enum class TitleMode { RandomString, CategoryCoded };

struct SynthConfig {
  std::int64_t n_users = 500;
  std::int64_t n_items = 150;
  Regime regime = Regime::BehaviorSignal;
  std::int64_t n_clusters = 5;
  double transition_coherence = 0.9;
  TitleMode title_mode = TitleMode::RandomString;
  std::uint64_t seed = 0;
  int min_length = 12;
  int max_length = 24;

  void validate() const;
};

nlohmann::json to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j);
std::string to_string(Regime r);
std::string to_string(TitleMode m);

struct SyntheticCorpus {
  InteractionLog log;
  ItemCatalog catalog;
  std::vector<std::int64_t> cluster_of;  // per item
};

/// Users walk a cluster-coherent chain without repeating items: with
/// probability `transition_coherence` the next item comes uniformly from the
/// unvisited items of the current cluster, otherwise uniformly from all
/// unvisited items. A walk ends early when a stay is drawn but the cluster is
/// exhausted. Fully determined by the seed.
SyntheticCorpus generate_synthetic(const SynthConfig& cfg);

}  // namespace llara::corpus
