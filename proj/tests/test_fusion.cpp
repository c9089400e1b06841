#include "gradcheck.hpp"
#include "tiny_world.hpp"

#include "llara/corpus/synthetic.hpp"
#include "llara/fusion/bundle.hpp"

#include <doctest.h>

#include <filesystem>

using namespace llara;
using namespace llara::fusion;
using llara::testing::TinyWorld;

namespace {

struct SynthWorld {
  corpus::SyntheticCorpus syn;
  std::array<PromptTemplate, 3> templates;
  lm::Vocab vocab;
  std::vector<corpus::SequenceExample> examples;

  SynthWorld() {
    corpus::SynthConfig cfg;
    cfg.n_users = 120;
    syn = corpus::generate_synthetic(cfg);
    templates = load_templates(LLARA_DEFAULT_DATA_DIR "/templates");
    vocab = build_vocab(syn.catalog, templates);
    std::mt19937_64 rng(0);
    examples = corpus::build_examples(syn.log.sequences, cfg.n_items, rng);
  }
  PromptRenderer renderer() const { return {vocab, syn.catalog, templates, "movie", 512}; }
};

}  // namespace

TEST_CASE("adapter with zero weights maps everything to zero") {
  Adapter<double> a(4, 8, 16, 1);
  for (auto& p : a.parameters()) p.param->value.setZero();
  RowVector<double> e(4);
  e << 1.0, -2.0, 0.5, 3.0;
  CHECK(a.project(e).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.project(e).size() == 16);
  CHECK_THROWS_AS(a(ad::constant<double>(Matrix<double>::Zero(1, 5))), ShapeError);
}

TEST_CASE("adapter Jacobian matches finite differences") {
  Adapter<double> a(4, 16, 16, 2);
  std::mt19937_64 rng(3);
  Parameter<double> input(nn::normal_init<double>(3, 4, 1.0, rng));
  Parameter<double> probe(nn::normal_init<double>(3, 16, 1.0, rng));
  probe.trainable = false;
  // Contracting with a random probe turns every Jacobian entry into a
  // gradient entry of a scalar.
  auto f = [&] { return ad::sum(ad::mul(a(ad::leaf(input)), ad::leaf(probe))); };
  std::vector<Parameter<double>*> ps = {&input};
  for (auto& p : a.parameters()) ps.push_back(p.param);
  const auto r = llara::testing::check_gradients<double>(f, ps);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("hybrid_concat puts the behavioral row last") {
  Matrix<double> text(2, 3);
  text << 1, 2, 3, 4, 5, 6;
  Matrix<double> beh(1, 3);
  beh << 7, 8, 9;
  const auto out = hybrid_concat(ad::constant(text), ad::constant(beh)).value();
  REQUIRE(out.rows() == 3);
  CHECK(out.topRows(2) == text);
  CHECK(out.row(2) == beh.row(0));
  CHECK_THROWS(hybrid_concat(ad::constant(text), ad::constant(text)));
}

TEST_CASE("text-only and hybrid prompts align slot for slot") {
  SynthWorld w;
  const auto r = w.renderer();
  int checked = 0;
  for (const auto& ex : w.examples) {
    if (ex.history_len != corpus::kHistoryLength) continue;
    for (int tpl = 1; tpl <= 3; ++tpl) {
      const auto easy = r.render(ex, tpl, Mode::TextOnlyPH);
      const auto hard = r.render(ex, tpl, Mode::Hybrid);
      CHECK(easy.tokens == hard.tokens);
      CHECK(easy.response_mask == hard.response_mask);
      CHECK(easy.slot_positions == hard.slot_positions);
      CHECK(easy.slot_positions.size() == 31);
      CHECK_FALSE(easy.has_injection());
      std::size_t injected = 0;
      for (std::size_t i = 0; i < hard.tokens.size(); ++i)
        if (hard.injected[i] >= 0) {
          ++injected;
          CHECK(hard.tokens[i] == w.vocab.placeholder());
        }
      CHECK(injected == 31);
      for (std::size_t s = 0; s < hard.slot_positions.size(); ++s)
        CHECK(hard.injected[static_cast<std::size_t>(hard.slot_positions[s])] == hard.slot_items[s]);
    }
    if (++checked == 10) break;
  }
  CHECK(checked == 10);
}

TEST_CASE("slots follow history order then candidate presentation order") {
  SynthWorld w;
  const auto r = w.renderer();
  for (std::size_t i = 0; i < 100; ++i) {
    const auto& ex = w.examples[i];
    const auto p = r.render(ex, 1, Mode::BehavioralOnly);
    std::vector<corpus::ItemId> expect(ex.history.end() - ex.history_len, ex.history.end());
    expect.insert(expect.end(), ex.candidates.begin(), ex.candidates.end());
    CHECK(p.slot_items == expect);
    CHECK(r.render(ex, 2, Mode::Hybrid).slot_items == expect);
  }
}

TEST_CASE("answers per mode") {
  SynthWorld w;
  const auto r = w.renderer();
  CHECK(w.vocab.detokenize(r.answer_tokens(14, Mode::NumericIndex)) == "14");
  CHECK(r.answer_tokens(14, Mode::Hybrid) == r.title_tokens(14));
  CHECK(r.answer_tokens(14, Mode::TextOnlyPH) == r.title_tokens(14));
  CHECK(r.answer_tokens(14, Mode::BehavioralOnly) == r.title_tokens(14));

  const auto& ex = w.examples.front();
  const auto p = r.render(ex, 3, Mode::NumericIndex);
  std::vector<int> resp;
  for (std::size_t i = 0; i < p.tokens.size(); ++i)
    if (p.response_mask[i]) resp.push_back(p.tokens[i]);
  CHECK(w.vocab.detokenize(resp) == std::to_string(ex.target));
  CHECK(p.tokens.back() == w.vocab.eos());
  CHECK(static_cast<Index>(p.tokens.size()) == p.prompt_length + static_cast<Index>(resp.size()));

  const auto bare = r.render(ex, 3, Mode::NumericIndex, false);
  CHECK(bare.length() == p.prompt_length);
  CHECK(w.vocab.detokenize(std::vector<int>(bare.tokens.end() - 2, bare.tokens.end())) == "Answer:");
}

TEST_CASE("behavioral-only prompts carry no title text") {
  SynthWorld w;
  const auto r = w.renderer();
  const auto& ex = w.examples[5];
  const auto p = r.render(ex, 1, Mode::BehavioralOnly, false);
  for (corpus::ItemId c : ex.candidates)
    for (int t : r.title_tokens(c)) CHECK(std::find(p.tokens.begin(), p.tokens.end(), t) == p.tokens.end());
}

TEST_CASE("prompts over the context limit are rejected") {
  SynthWorld w;
  PromptRenderer small(w.vocab, w.syn.catalog, w.templates, "movie", 40);
  try {
    small.render(w.examples.front(), 1, Mode::Hybrid);
    FAIL("expected a context error");
  } catch (const lm::ContextError& e) {
    CHECK(e.length() > 40);
  }
}

TEST_CASE("template choice is uniform") {
  std::mt19937_64 rng(21);
  std::array<int, 3> counts{};
  const int n = 30000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(pick_template(rng) - 1)];
  for (int c : counts) CHECK(std::abs(c / static_cast<double>(n) - 1.0 / 3) < 0.01);
}

TEST_CASE("template parsing") {
  const auto t = PromptTemplate::parse(1, "a {history} b {candidates} {{literal}} {domain_item_word}\n");
  CHECK(t.source.back() != '\n');
  corpus::SequenceExample ex;
  ex.history = std::vector<corpus::ItemId>(corpus::kHistoryLength, 9);
  ex.history.back() = 0;
  ex.history_len = 1;
  ex.candidates = {1};
  const auto segs = segments(t, ex, 9, "game");
  std::string text;
  for (const auto& s : segs)
    if (s.kind == Segment::TextSpan) text += s.text;
  CHECK(text.find("{literal}") != std::string::npos);
  CHECK(text.find("game") != std::string::npos);

  CHECK_THROWS_AS(PromptTemplate::parse(1, "only {candidates}"), TemplateError);
  CHECK_THROWS_AS(PromptTemplate::parse(1, "{history} {history} {candidates}"), TemplateError);
  CHECK_THROWS_AS(PromptTemplate::parse(1, "{history} {candidates} {rating}"), TemplateError);
  CHECK_THROWS_AS(PromptTemplate::parse(1, "{history} {candidates"), TemplateError);
  CHECK(parse_mode("hybrid") == Mode::Hybrid);
  CHECK(to_string(Mode::TextOnlyPH) == "text_only_ph");
  CHECK_THROWS(parse_mode("mixed"));
}

TEST_CASE("debug JSON mirrors the rendered prompt") {
  TinyWorld w;
  const auto r = w.renderer();
  const auto p = r.render(w.example, 1, Mode::Hybrid);
  const auto j = r.debug_json(p);
  CHECK(j["mode"] == "hybrid");
  CHECK(j["tokens"].size() == p.tokens.size());
  CHECK(j["tokens"][0] == "<bos>");
  CHECK(j["injected"][static_cast<std::size_t>(p.slot_positions[0])] == 0);
  CHECK(j["prompt_length"] == p.prompt_length);
}

TEST_CASE("assembled rows: injected slots take projections, placeholder mode keeps the PH row") {
  TinyWorld w;
  lm::CausalLm<double> lm(w.lm_config(), 1);
  recsys::RecommenderModel<double> rec(w.catalog.n_items, w.rec_config(), 2);
  Adapter<double> adapter(4, 16, 16, 3);
  Injector<double> inj{&rec, &adapter};
  const auto p = w.renderer().render(w.example, 2, Mode::Hybrid);
  const auto seq = assemble(p, lm, &inj);
  const auto plain = lm.embed_tokens(p.tokens).value();
  for (Index i = 0; i < p.length(); ++i) {
    const auto item = p.injected[static_cast<std::size_t>(i)];
    if (item < 0) {
      CHECK(seq.rows.value().row(i) == plain.row(i));
    } else {
      CHECK(seq.provenance[static_cast<std::size_t>(i)] == lm::Provenance::Injected);
      CHECK((seq.rows.value().row(i) - adapter.project(rec.sr_embed(item))).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  const auto ph = assemble(p, lm, &inj, -1, Injection::Placeholder);
  CHECK(ph.rows.value() == plain);
  CHECK(assemble(p, lm, &inj, 5).length() == 5);
  CHECK_THROWS(assemble<double>(p, lm, nullptr));
}

TEST_CASE("end-to-end hybrid loss gradients w.r.t. adapter, LoRA and placeholder") {
  TinyWorld w;
  REQUIRE(w.vocab.size() == 50);
  lm::CausalLm<double> lm(w.lm_config(), 4);
  {
    std::mt19937_64 rng(5);
    for (auto& p : lm.lora_parameters()) p.param->value = nn::normal_init<double>(p.param->value.rows(), p.param->value.cols(), 0.3, rng);
  }
  lm.prepare_for_lora();
  recsys::RecommenderModel<double> rec(w.catalog.n_items, w.rec_config(), 6);
  Adapter<double> adapter(4, 16, 16, 7);
  Injector<double> inj{&rec, &adapter};
  const auto r = w.renderer();
  // Template 3 mixes text and placeholder slots; the TextOnlyPH variant
  // exercises the placeholder row.
  const auto hard = r.render(w.example, 3, Mode::Hybrid);
  const auto easy = r.render(w.example, 3, Mode::TextOnlyPH);
  auto f = [&] {
    auto a = assemble(hard, lm, &inj);
    auto b = assemble(easy, lm, &inj);
    return ad::add(lm.response_loss(a.rows, hard.tokens, hard.response_mask, true),
                   lm.response_loss(b.rows, easy.tokens, easy.response_mask, true));
  };
  std::vector<Parameter<double>*> ps;
  for (auto& p : adapter.parameters()) ps.push_back(p.param);
  for (auto& p : lm.lora_parameters()) ps.push_back(p.param);
  ps.push_back(&lm.placeholder);
  const auto g = llara::testing::check_gradients<double>(f, ps);
  CAPTURE(g.worst_analytic);
  CAPTURE(g.worst_numeric);
  CHECK(g.max_rel < 1e-4);
}

TEST_CASE("bundle round trip keeps every component") {
  TinyWorld w;
  Bundle b;
  b.vocab = w.vocab;
  b.catalog = w.catalog;
  b.templates = w.templates;
  b.lm = lm::CausalLm<float>(w.lm_config(), 8);
  b.recommender = recsys::RecommenderModel<float>(w.catalog.n_items, w.rec_config(), 9);
  b.init_adapter(10);
  b.prepare_for_tuning();
  const auto path = (std::filesystem::temp_directory_path() / "llara_bundle.llara").string();
  save_bundle(path, b, {{"note", "test"}});
  auto back = load_bundle(path);
  CHECK(back.vocab == b.vocab);
  CHECK(back.catalog == b.catalog);
  CHECK(back.domain_word == b.domain_word);
  REQUIRE(back.recommender.has_value());
  const auto p = b.renderer().render(w.example, 1, Mode::Hybrid);
  auto i1 = b.injector();
  auto i2 = back.injector();
  CHECK(assemble(p, b.lm, &i1).rows.value() == assemble(p, back.lm, &i2).rows.value());
}
