#include "llara/corpus/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

namespace llara::corpus {

namespace {

const std::vector<std::string>& category_words() {
  static const std::vector<std::string> words = {
      "Amber", "Cobalt", "Crimson", "Jade",   "Onyx",  "Saffron", "Teal",   "Violet", "Ivory",  "Scarlet",
      "Azure", "Coral",  "Ember",   "Frost",  "Indigo", "Lilac",  "Maroon", "Ochre",  "Pearl",  "Russet",
      "Sable", "Slate",  "Topaz",   "Umber",  "Verdant", "Wisteria", "Zinc", "Bronze", "Copper", "Garnet"};
  return words;
}

std::string random_word(std::mt19937_64& rng) {
  static const char* consonants = "bcdfghjklmnprstvwz";
  static const char* vowels = "aeiou";
  std::uniform_int_distribution<int> syl(2, 3), c(0, 17), v(0, 4), coda(0, 3);
  std::string w;
  const int n = syl(rng);
  for (int i = 0; i < n; ++i) {
    w += consonants[c(rng)];
    w += vowels[v(rng)];
  }
  if (coda(rng) == 0) w += consonants[c(rng)];
  w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

std::string category_name(std::int64_t k) {
  const auto& words = category_words();
  const auto n = static_cast<std::int64_t>(words.size());
  std::string name = words[static_cast<std::size_t>(k % n)];
  if (k >= n) name += std::to_string(k / n);
  return name;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_users < 1) throw Error("synthetic: n_users must be positive");
  if (n_items < 2) throw Error("synthetic: n_items must be at least 2");
  if (n_clusters < 1 || n_clusters > n_items) throw Error("synthetic: need 1 <= n_clusters <= n_items");
  if (!(transition_coherence >= 0.0 && transition_coherence <= 1.0)) throw Error("synthetic: coherence must lie in [0,1]");
  if (min_length < 1 || max_length < min_length) throw Error("synthetic: need 1 <= min_length <= max_length");
  if (max_length > n_items) throw Error("synthetic: max_length exceeds the catalog (items never repeat)");
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::BehaviorSignal: return "behavior_signal";
    case Regime::SemanticSignal: return "semantic_signal";
    case Regime::Mixed: return "mixed";
  }
  return "?";
}

std::string to_string(TitleMode m) { return m == TitleMode::RandomString ? "random_string" : "category_coded"; }

nlohmann::json to_json(const SynthConfig& cfg) {
  return {{"n_users", cfg.n_users},
          {"n_items", cfg.n_items},
          {"regime", to_string(cfg.regime)},
          {"n_clusters", cfg.n_clusters},
          {"transition_coherence", cfg.transition_coherence},
          {"title_mode", to_string(cfg.title_mode)},
          {"seed", cfg.seed},
          {"min_length", cfg.min_length},
          {"max_length", cfg.max_length}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  static const std::unordered_set<std::string> known = {"n_users", "n_items", "regime", "n_clusters",
                                                        "transition_coherence", "title_mode", "seed",
                                                        "min_length", "max_length"};
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) throw Error("synthetic: unknown key '" + k + "'");
  SynthConfig c;
  c.n_users = j.value("n_users", c.n_users);
  c.n_items = j.value("n_items", c.n_items);
  c.n_clusters = j.value("n_clusters", c.n_clusters);
  c.transition_coherence = j.value("transition_coherence", c.transition_coherence);
  c.seed = j.value("seed", c.seed);
  c.min_length = j.value("min_length", c.min_length);
  c.max_length = j.value("max_length", c.max_length);
  const auto regime = j.value("regime", to_string(c.regime));
  if (regime == "behavior_signal") c.regime = Regime::BehaviorSignal;
  else if (regime == "semantic_signal") c.regime = Regime::SemanticSignal;
  else if (regime == "mixed") c.regime = Regime::Mixed;
  else throw Error("synthetic: unknown regime '" + regime + "'");
  const auto tm = j.value("title_mode", to_string(c.title_mode));
  if (tm == "random_string") c.title_mode = TitleMode::RandomString;
  else if (tm == "category_coded") c.title_mode = TitleMode::CategoryCoded;
  else throw Error("synthetic: unknown title_mode '" + tm + "'");
  c.validate();
  return c;
}

SyntheticCorpus generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  SyntheticCorpus out;
  const auto n_items = cfg.n_items;

  // Balanced random partition of items into clusters.
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n_items));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  out.cluster_of.assign(static_cast<std::size_t>(n_items), 0);
  std::vector<std::vector<ItemId>> members(static_cast<std::size_t>(cfg.n_clusters));
  for (std::int64_t i = 0; i < n_items; ++i) {
    const auto item = perm[static_cast<std::size_t>(i)];
    const auto c = i % cfg.n_clusters;
    out.cluster_of[static_cast<std::size_t>(item)] = c;
    members[static_cast<std::size_t>(c)].push_back(item);
  }
  for (auto& m : members) std::sort(m.begin(), m.end());

  // Titles.
  out.catalog.n_items = n_items;
  out.catalog.titles.resize(static_cast<std::size_t>(n_items));
  std::unordered_set<std::string> used;
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<std::int64_t> any_cluster(0, cfg.n_clusters - 1);
  for (std::int64_t i = 0; i < n_items; ++i) {
    std::string title;
    do {
      const std::string word = random_word(rng);
      if (cfg.title_mode == TitleMode::RandomString) {
        title = word;
      } else {
        std::int64_t category = out.cluster_of[static_cast<std::size_t>(i)];
        const bool informative = cfg.regime == Regime::SemanticSignal || (cfg.regime == Regime::Mixed && coin(rng));
        if (!informative) category = any_cluster(rng);
        title = category_name(category) + " " + word;
      }
    } while (!used.insert(title).second);
    out.catalog.titles[static_cast<std::size_t>(i)] = title;
  }

  // Interaction walks.
  out.log.n_items = n_items;
  out.log.raw_item_ids.resize(static_cast<std::size_t>(n_items));
  std::iota(out.log.raw_item_ids.begin(), out.log.raw_item_ids.end(), 0);
  std::uniform_int_distribution<int> length(cfg.min_length, cfg.max_length);
  std::uniform_int_distribution<std::int64_t> start_time(0, 1'000'000), gap(1, 3600);
  std::bernoulli_distribution stay(cfg.transition_coherence);
  for (std::int64_t u = 0; u < cfg.n_users; ++u) {
    UserSequence s;
    s.user_id = u;
    const int len = length(rng);
    std::vector<char> visited(static_cast<std::size_t>(n_items), 0);
    std::uniform_int_distribution<std::int64_t> first(0, n_items - 1);
    ItemId cur = first(rng);
    std::int64_t t = start_time(rng);
    for (int k = 0; k < len; ++k) {
      if (k > 0) {
        std::vector<ItemId> pool;
        if (stay(rng)) {
          for (ItemId i : members[static_cast<std::size_t>(out.cluster_of[static_cast<std::size_t>(cur)])])
            if (!visited[static_cast<std::size_t>(i)]) pool.push_back(i);
          if (pool.empty()) break;
        } else {
          for (ItemId i = 0; i < n_items; ++i)
            if (!visited[static_cast<std::size_t>(i)]) pool.push_back(i);
        }
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        cur = pool[pick(rng)];
        t += gap(rng);
      }
      visited[static_cast<std::size_t>(cur)] = 1;
      s.items.push_back(cur);
      s.timestamps.push_back(t);
    }
    out.log.sequences.push_back(std::move(s));
  }
  return out;
}

}  // namespace llara::corpus
