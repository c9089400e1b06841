#include "llara/core/archive.hpp"
#include "llara/lm/generate.hpp"
#include "llara/lm/model.hpp"

namespace llara::lm {

nlohmann::json LoraConfig::to_json() const {
  return {{"rank", rank}, {"alpha", alpha}, {"query", query}, {"value", value}};
}

LoraConfig LoraConfig::from_json(const nlohmann::json& j) {
  LoraConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "rank") c.rank = v.get<int>();
    else if (k == "alpha") c.alpha = v.get<double>();
    else if (k == "query") c.query = v.get<bool>();
    else if (k == "value") c.value = v.get<bool>();
    else throw Error("lm.lora: unknown key '" + k + "'");
  }
  if (c.rank < 1) throw Error("lm.lora: rank must be positive");
  return c;
}

void LmConfig::validate() const {
  if (vocab_size < 5) throw Error("lm: vocabulary too small");
  if (dim < 1 || heads < 1 || dim % heads != 0) throw Error("lm: dim must be a positive multiple of heads");
  if (layers < 1 || ff_mult < 1 || context < 2) throw Error("lm: invalid layers/ff_mult/context");
}

nlohmann::json LmConfig::to_json() const {
  return {{"vocab_size", vocab_size}, {"dim", dim},         {"layers", layers},
          {"heads", heads},           {"ff_mult", ff_mult}, {"context", context},
          {"init_stddev", init_stddev}, {"lora", lora.to_json()}};
}

LmConfig LmConfig::from_json(const nlohmann::json& j) {
  LmConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "vocab_size") c.vocab_size = v.get<int>();
    else if (k == "dim") c.dim = v.get<int>();
    else if (k == "layers") c.layers = v.get<int>();
    else if (k == "heads") c.heads = v.get<int>();
    else if (k == "ff_mult") c.ff_mult = v.get<int>();
    else if (k == "context") c.context = v.get<int>();
    else if (k == "init_stddev") c.init_stddev = v.get<double>();
    else if (k == "lora") c.lora = LoraConfig::from_json(v);
    else throw Error("lm: unknown key '" + k + "'");
  }
  return c;
}

void save_lm_base(const std::string& path, CausalLm<float>& lm, const nlohmann::json& extra) {
  io::ArrayArchive ar;
  io::store_params(ar, lm.base_parameters());
  ar.manifest = {{"kind", "lm_base"}, {"architecture", lm.config().to_json()}, {"placeholder_id", lm.placeholder_id()}};
  for (const auto& [k, v] : extra.items()) ar.manifest[k] = v;
  ar.manifest["arrays"] = ar.index();
  ar.save(path);
}

CausalLm<float> load_lm_base(const std::string& path) {
  const auto ar = io::ArrayArchive::load(path);
  if (ar.manifest.value("kind", "") != "lm_base") throw io::ArchiveError("'" + path + "' is not a base LM checkpoint");
  CausalLm<float> lm(LmConfig::from_json(ar.manifest.at("architecture")), 0, ar.manifest.at("placeholder_id").get<int>());
  auto params = lm.base_parameters();
  io::load_params(ar, params);
  return lm;
}

PrefixTrie::PrefixTrie(const std::vector<std::vector<int>>& sequences, int end_token) {
  nodes_.emplace_back();
  for (const auto& seq : sequences) {
    int node = 0;
    auto insert = [&](int tok) {
      auto it = nodes_[static_cast<std::size_t>(node)].find(tok);
      if (it == nodes_[static_cast<std::size_t>(node)].end()) {
        nodes_.emplace_back();
        const int child = static_cast<int>(nodes_.size()) - 1;
        nodes_[static_cast<std::size_t>(node)].emplace(tok, child);
        node = child;
      } else {
        node = it->second;
      }
    };
    std::size_t n = seq.size();
    if (n > 0 && seq[n - 1] == end_token) --n;
    if (n == 0) throw Error("PrefixTrie: empty sequence");
    for (std::size_t i = 0; i < n; ++i) {
      if (seq[i] == end_token) throw Error("PrefixTrie: end token inside a sequence");
      insert(seq[i]);
    }
    insert(end_token);
  }
}

std::vector<int> PrefixTrie::allowed(int node) const {
  std::vector<int> out;
  for (const auto& [tok, _] : nodes_.at(static_cast<std::size_t>(node))) out.push_back(tok);
  return out;
}

int PrefixTrie::advance(int node, int token) const {
  const auto& children = nodes_.at(static_cast<std::size_t>(node));
  auto it = children.find(token);
  return it == children.end() ? -1 : it->second;
}

}  // namespace llara::lm
