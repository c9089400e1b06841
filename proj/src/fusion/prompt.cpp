#include "llara/fusion/prompt.hpp"
#include "llara/lm/model.hpp"

#include <fstream>
#include <sstream>

namespace llara::fusion {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::NumericIndex: return "numeric_index";
    case Mode::BehavioralOnly: return "behavioral_only";
    case Mode::TextOnlyPH: return "text_only_ph";
    case Mode::Hybrid: return "hybrid";
  }
  return "?";
}

Mode parse_mode(const std::string& name) {
  for (Mode m : {Mode::NumericIndex, Mode::BehavioralOnly, Mode::TextOnlyPH, Mode::Hybrid})
    if (to_string(m) == name) return m;
  throw Error("unknown representation mode '" + name +
              "' (expected numeric_index, behavioral_only, text_only_ph or hybrid)");
}

PromptTemplate PromptTemplate::parse(int id, const std::string& source) {
  PromptTemplate t;
  t.id = id;
  t.source = source;
  while (!t.source.empty() && (t.source.back() == '\n' || t.source.back() == '\r')) t.source.pop_back();
  std::string text;
  auto flush = [&] {
    if (!text.empty()) t.parts.push_back({TemplatePart::Text, text});
    text.clear();
  };
  const std::string& s = t.source;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '{' && i + 1 < s.size() && s[i + 1] == '{') {
      text += '{';
      ++i;
    } else if (s[i] == '}' && i + 1 < s.size() && s[i + 1] == '}') {
      text += '}';
      ++i;
    } else if (s[i] == '{') {
      const auto close = s.find('}', i);
      if (close == std::string::npos) throw TemplateError("template " + std::to_string(id) + ": unclosed '{'");
      const std::string name = s.substr(i + 1, close - i - 1);
      flush();
      if (name == "history") t.parts.push_back({TemplatePart::History, {}});
      else if (name == "candidates") t.parts.push_back({TemplatePart::Candidates, {}});
      else if (name == "domain_item_word") t.parts.push_back({TemplatePart::DomainWord, {}});
      else throw TemplateError("template " + std::to_string(id) + ": unknown placeholder '{" + name + "}'");
      i = close;
    } else if (s[i] == '}') {
      throw TemplateError("template " + std::to_string(id) + ": stray '}' (write '}}')");
    } else {
      text += s[i];
    }
  }
  flush();
  int history = 0, candidates = 0;
  for (const auto& p : t.parts) {
    history += p.kind == TemplatePart::History;
    candidates += p.kind == TemplatePart::Candidates;
  }
  if (history != 1 || candidates != 1)
    throw TemplateError("template " + std::to_string(id) + ": needs exactly one {history} and one {candidates}");
  return t;
}

std::array<PromptTemplate, 3> load_templates(const std::string& dir) {
  std::array<PromptTemplate, 3> out;
  for (int id = 1; id <= 3; ++id) {
    const std::string path = dir + "/template_" + std::to_string(id) + ".txt";
    std::ifstream in(path);
    if (!in) throw TemplateError("cannot open template '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    out[static_cast<std::size_t>(id - 1)] = PromptTemplate::parse(id, ss.str());
  }
  return out;
}

int pick_template(std::mt19937_64& rng) { return std::uniform_int_distribution<int>(1, 3)(rng); }

std::vector<Segment> segments(const PromptTemplate& tpl, const SequenceExample& ex, ItemId pad_id,
                              const std::string& domain_word) {
  std::vector<Segment> out;
  auto text = [&](const std::string& s) {
    if (!out.empty() && out.back().kind == Segment::TextSpan) out.back().text += s;
    else out.push_back({Segment::TextSpan, s, -1, Segment::None});
  };
  auto items = [&](const std::vector<ItemId>& ids, Segment::Role role) {
    bool first = true;
    for (ItemId id : ids) {
      if (id == pad_id) continue;
      if (!first) text(", ");
      out.push_back({Segment::ItemSlot, {}, id, role});
      first = false;
    }
  };
  for (const auto& p : tpl.parts) {
    switch (p.kind) {
      case TemplatePart::Text: text(p.text); break;
      case TemplatePart::DomainWord: text(domain_word); break;
      case TemplatePart::History: items(ex.history, Segment::History); break;
      case TemplatePart::Candidates: items(ex.candidates, Segment::Candidate); break;
    }
  }
  return out;
}

bool RenderedPrompt::has_injection() const {
  for (ItemId i : injected)
    if (i >= 0) return true;
  return false;
}

PromptRenderer::PromptRenderer(const lm::Vocab& vocab, const ItemCatalog& catalog, std::array<PromptTemplate, 3> templates,
                               std::string domain_word, Index context_limit)
    : vocab_(&vocab), catalog_(&catalog), templates_(std::move(templates)), domain_word_(std::move(domain_word)),
      context_(context_limit) {
  for (ItemId i = 0; i < catalog.n_items; ++i) {
    titles_.push_back(vocab.tokenize(catalog.title(i)));
    if (titles_.back().empty()) throw Error("item " + std::to_string(i) + " has an empty title");
    numbers_.push_back(vocab.tokenize(std::to_string(i)));
  }
  cue_ = vocab.tokenize(kAnswerCue);
}

const std::vector<int>& PromptRenderer::answer_tokens(ItemId item, Mode mode) const {
  const auto& table = mode == Mode::NumericIndex ? numbers_ : titles_;
  if (item < 0 || item >= static_cast<ItemId>(table.size())) throw IndexError("answer_tokens: item out of range");
  return table[static_cast<std::size_t>(item)];
}

RenderedPrompt PromptRenderer::render(const SequenceExample& ex, int template_id, Mode mode, bool with_response) const {
  if (template_id < 1 || template_id > 3) throw TemplateError("template id must be 1, 2 or 3");
  RenderedPrompt p;
  p.mode = mode;
  p.template_id = template_id;
  p.target = ex.target;
  auto push = [&](int tok, ItemId inj, bool resp) {
    p.tokens.push_back(tok);
    p.injected.push_back(inj);
    p.response_mask.push_back(resp ? 1 : 0);
  };
  push(vocab_->bos(), -1, false);
  const int ph = vocab_->placeholder();
  for (const auto& seg : segments(templates_[static_cast<std::size_t>(template_id - 1)], ex, catalog_->pad_id(), domain_word_)) {
    if (seg.kind == Segment::TextSpan) {
      for (int t : vocab_->tokenize(seg.text)) push(t, -1, false);
      continue;
    }
    switch (mode) {
      case Mode::NumericIndex:
        for (int t : answer_tokens(seg.item, mode)) push(t, -1, false);
        break;
      case Mode::TextOnlyPH:
      case Mode::Hybrid:
        for (int t : title_tokens(seg.item)) push(t, -1, false);
        push(ph, mode == Mode::Hybrid ? seg.item : -1, false);
        break;
      case Mode::BehavioralOnly:
        push(ph, seg.item, false);
        break;
    }
    p.slot_positions.push_back(p.length() - 1);
    p.slot_items.push_back(seg.item);
  }
  for (int t : cue_) push(t, -1, false);
  p.prompt_length = p.length();
  if (with_response) {
    for (int t : answer_tokens(ex.target, mode)) push(t, -1, true);
    push(vocab_->eos(), -1, true);
  }
  if (context_ > 0 && p.length() > context_) throw lm::ContextError(p.length(), context_);
  return p;
}

nlohmann::json PromptRenderer::debug_json(const RenderedPrompt& p) const {
  nlohmann::json tokens = nlohmann::json::array(), injected = nlohmann::json::array();
  for (std::size_t i = 0; i < p.tokens.size(); ++i) {
    tokens.push_back(vocab_->token(p.tokens[i]));
    injected.push_back(p.injected[i] >= 0 ? nlohmann::json(p.injected[i]) : nlohmann::json(nullptr));
  }
  return {{"mode", to_string(p.mode)},
          {"template_id", p.template_id},
          {"tokens", tokens},
          {"injected", injected},
          {"slot_positions", p.slot_positions},
          {"response_mask", p.response_mask},
          {"prompt_length", p.prompt_length},
          {"target", p.target}};
}

lm::Vocab build_vocab(const ItemCatalog& catalog, const std::array<PromptTemplate, 3>& templates) {
  lm::Vocab v;
  v.add(",");
  for (const auto& tpl : templates)
    for (const char* word : {"movie", "game"}) {
      std::string text;
      for (const auto& p : tpl.parts) text += p.kind == TemplatePart::Text ? p.text : p.kind == TemplatePart::DomainWord ? std::string(word) : std::string(" ");
      v.add_text(text);
    }
  v.add_text(PromptRenderer::kAnswerCue);
  for (ItemId i = 0; i < catalog.n_items; ++i) v.add_text(catalog.title(i));
  for (ItemId i = 0; i < catalog.n_items; ++i) v.add(std::to_string(i));
  return v;
}

}  // namespace llara::fusion
