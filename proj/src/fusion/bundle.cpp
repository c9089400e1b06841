#include "llara/fusion/bundle.hpp"

namespace llara::fusion {

void Bundle::prepare_for_tuning(bool item_embeddings) {
  lm.prepare_for_lora();
  auto ap = adapter.parameters();
  nn::set_trainable(ap, true);
  if (recommender) {
    auto rp = recommender->parameters();
    nn::set_trainable(rp, false);
    recommender->item_embeddings.trainable = item_embeddings;
  }
}

void Bundle::init_adapter(std::uint64_t seed) {
  if (!recommender) throw Error("adapter needs a recommender to size its input");
  adapter = Adapter<float>(recommender->config().dim, lm.dim(), lm.dim(), seed);
}

namespace {

std::vector<nn::NamedParam<float>> tuned(Bundle& b) {
  auto out = b.lm.lora_parameters();
  out.push_back({"placeholder", &b.lm.placeholder});
  if (b.adapter.first.weight.value.size() > 0)
    for (auto& p : b.adapter.parameters()) out.push_back(p);
  if (b.recommender) out.push_back({"rec.item_embeddings", &b.recommender->item_embeddings});
  return out;
}

}  // namespace

void store_tuned(io::ArrayArchive& ar, Bundle& bundle) { io::store_params(ar, tuned(bundle), "tuned."); }

void restore_tuned(const io::ArrayArchive& ar, Bundle& bundle) {
  auto params = tuned(bundle);
  io::load_params(ar, params, "tuned.");
}

void save_bundle(const std::string& path, Bundle& b, const nlohmann::json& extra) {
  io::ArrayArchive ar;
  io::store_params(ar, b.lm.base_parameters(), "lm.");
  io::store_params(ar, b.lm.lora_parameters(), "lm.");
  nlohmann::json tokens = nlohmann::json::array();
  for (int i = 0; i < b.vocab.size(); ++i) tokens.push_back(b.vocab.token(i));
  nlohmann::json templates = nlohmann::json::array();
  for (const auto& t : b.templates) templates.push_back(t.source);
  ar.manifest = {{"kind", "llara"},
                 {"lm", b.lm.config().to_json()},
                 {"vocab", tokens},
                 {"templates", templates},
                 {"domain_word", b.domain_word},
                 {"titles", b.catalog.titles}};
  if (b.adapter.first.weight.value.size() > 0) {
    io::store_params(ar, b.adapter.parameters());
    ar.manifest["adapter"] = {{"in", b.adapter.input_dim()},
                              {"hidden", b.adapter.first.out_features()},
                              {"out", b.adapter.output_dim()}};
  }
  if (b.recommender) {
    io::store_params(ar, b.recommender->parameters(), "rec.");
    ar.manifest["recommender"] = {{"encoder", b.recommender->config().to_json()}, {"n_items", b.recommender->n_items()}};
  }
  for (const auto& [k, v] : extra.items()) ar.manifest[k] = v;
  ar.manifest["arrays"] = ar.index();
  ar.save(path);
}

Bundle load_bundle(const std::string& path) {
  const auto ar = io::ArrayArchive::load(path);
  const auto& m = ar.manifest;
  if (m.value("kind", "") != "llara") throw io::ArchiveError("'" + path + "' is not a LLaRA checkpoint");
  Bundle b;
  for (const auto& t : m.at("vocab")) b.vocab.add(t.get<std::string>());
  if (b.vocab.size() != static_cast<int>(m.at("vocab").size()))
    throw io::ArchiveError("'" + path + "': vocabulary has duplicate tokens");
  for (int id = 1; id <= 3; ++id)
    b.templates[static_cast<std::size_t>(id - 1)] =
        PromptTemplate::parse(id, m.at("templates").at(static_cast<std::size_t>(id - 1)).get<std::string>());
  b.domain_word = m.at("domain_word").get<std::string>();
  b.catalog.titles = m.at("titles").get<std::vector<std::string>>();
  b.catalog.n_items = static_cast<std::int64_t>(b.catalog.titles.size());
  b.lm = lm::CausalLm<float>(lm::LmConfig::from_json(m.at("lm")), 0, b.vocab.placeholder());
  auto lp = b.lm.base_parameters();
  for (auto& p : b.lm.lora_parameters()) lp.push_back(p);
  io::load_params(ar, lp, "lm.");
  if (m.contains("recommender")) {
    const auto& r = m.at("recommender");
    b.recommender.emplace(r.at("n_items").get<std::int64_t>(), recsys::EncoderConfig::from_json(r.at("encoder")), 0);
    auto rp = b.recommender->parameters();
    io::load_params(ar, rp, "rec.");
  }
  if (m.contains("adapter")) {
    const auto& a = m.at("adapter");
    b.adapter = Adapter<float>(a.at("in").get<Index>(), a.at("hidden").get<Index>(), a.at("out").get<Index>(), 0);
    auto ap = b.adapter.parameters();
    io::load_params(ar, ap);
  }
  return b;
}

}  // namespace llara::fusion
