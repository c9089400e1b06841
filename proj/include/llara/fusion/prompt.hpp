#pragma once

// Prompt templates and rendering of a sequence example into token ids under
// the four item representations.

#include "llara/corpus/corpus.hpp"
#include "llara/lm/vocab.hpp"

#include <json.hpp>

#include <array>
#include <random>
#include <string>
#include <vector>

namespace llara::fusion {

using corpus::ItemCatalog;
using corpus::ItemId;
using corpus::SequenceExample;

enum class Mode { NumericIndex, BehavioralOnly, TextOnlyPH, Hybrid };

std::string to_string(Mode m);
Mode parse_mode(const std::string& name);
inline bool injects(Mode m) { return m == Mode::BehavioralOnly || m == Mode::Hybrid; }

class TemplateError : public Error {
 public:
  using Error::Error;
};

struct TemplatePart {
  enum Kind { Text, History, Candidates, DomainWord } kind = Text;
  std::string text;
};

struct PromptTemplate {
  int id = 0;
  std::string source;
  std::vector<TemplatePart> parts;

  static PromptTemplate parse(int id, const std::string& source);
};

/// Reads template_1.txt .. template_3.txt from `dir`.
std::array<PromptTemplate, 3> load_templates(const std::string& dir);

/// Uniform draw of a template id in {1, 2, 3}.
int pick_template(std::mt19937_64& rng);

struct Segment {
  enum Kind { TextSpan, ItemSlot } kind = TextSpan;
  std::string text;
  ItemId item = -1;
  enum Role { None, History, Candidate } role = None;
};

/// Template text with the item lists expanded into slots (history in
/// interaction order, candidates in presentation order).
std::vector<Segment> segments(const PromptTemplate& tpl, const SequenceExample& ex, ItemId pad_id,
                              const std::string& domain_word);

struct RenderedPrompt {
  Mode mode = Mode::TextOnlyPH;
  int template_id = 0;
  std::vector<int> tokens;          // placeholder id at injected positions
  std::vector<ItemId> injected;     // item id per position, -1 if a token row
  std::vector<Index> slot_positions;  // position marking each item slot
  std::vector<ItemId> slot_items;
  std::vector<std::uint8_t> response_mask;
  Index prompt_length = 0;          // tokens before the response
  ItemId target = -1;

  Index length() const { return static_cast<Index>(tokens.size()); }
  bool has_injection() const;
};

class PromptRenderer {
 public:
  static constexpr const char* kAnswerCue = "Answer:";

  PromptRenderer(const lm::Vocab& vocab, const ItemCatalog& catalog, std::array<PromptTemplate, 3> templates,
                 std::string domain_word, Index context_limit);

  /// BOS, template with item slots expanded per `mode`, the answer cue, then
  /// (with `with_response`) the target answer and EOS under the response
  /// mask. Throws lm::ContextError when the result exceeds the context.
  RenderedPrompt render(const SequenceExample& ex, int template_id, Mode mode, bool with_response = true) const;

  /// Tokens that answer with `item` under `mode`, without EOS.
  const std::vector<int>& answer_tokens(ItemId item, Mode mode) const;
  const std::vector<int>& title_tokens(ItemId item) const { return titles_.at(static_cast<std::size_t>(item)); }

  const lm::Vocab& vocab() const { return *vocab_; }
  const ItemCatalog& catalog() const { return *catalog_; }
  const std::string& domain_word() const { return domain_word_; }
  Index context_limit() const { return context_; }

  nlohmann::json debug_json(const RenderedPrompt& p) const;

 private:
  const lm::Vocab* vocab_;
  const ItemCatalog* catalog_;
  std::array<PromptTemplate, 3> templates_;
  std::string domain_word_;
  Index context_;
  std::vector<std::vector<int>> titles_, numbers_;
  std::vector<int> cue_;
};

/// Vocabulary covering every title, every template in both domain wordings,
/// the decimal item ids and the answer cue.
lm::Vocab build_vocab(const ItemCatalog& catalog, const std::array<PromptTemplate, 3>& templates);

}  // namespace llara::fusion
