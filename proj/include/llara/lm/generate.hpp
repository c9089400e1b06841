#pragma once

#include "llara/lm/model.hpp"
#include "llara/lm/vocab.hpp"

#include <map>
#include <optional>
#include <vector>

namespace llara::lm {

/// Token-level prefix trie over a fixed set of allowed completions. The end
/// token is appended to each sequence (a trailing one may be given), so a
/// walk that follows the trie always terminates on one of the sequences.
class PrefixTrie {
 public:
  PrefixTrie(const std::vector<std::vector<int>>& sequences, int end_token);

  int root() const { return 0; }
  /// Allowed next tokens from `node`, ascending.
  std::vector<int> allowed(int node) const;
  int advance(int node, int token) const;  // -1 when not allowed
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::map<int, int>> nodes_;
};

struct Generation {
  std::vector<int> ids;  // generated tokens, excluding the end token
  std::string text;
  bool ended = false;  // stopped on the end token
};

/// Greedy decoding from `prefix` (rows already embedded). With `constraint`,
/// each step picks the best token among the trie's allowed children and the
/// result is always one of the constrained sequences. Ties resolve to the
/// lowest token id.
template <class S>
Generation generate(CausalLm<S>& lm, const Vocab& vocab, const Matrix<S>& prefix, const PrefixTrie* constraint,
                    int max_new, bool lora) {
  ad::NoGradGuard no_grad;
  Generation out;
  Matrix<S> rows = prefix;
  int node = constraint ? constraint->root() : -1;
  const int limit = constraint ? std::numeric_limits<int>::max() : max_new;
  for (int step = 0; step < limit; ++step) {
    int next = -1;
    std::vector<int> allowed;
    if (constraint) {
      allowed = constraint->allowed(node);
      if (allowed.size() == 1) next = allowed.front();
    }
    if (next < 0) {
      if (rows.rows() >= lm.config().context) break;
      auto h = lm.hidden(ad::constant(rows), lora);
      const auto logits = lm.logits_from_hidden(ad::slice_rows(h, h.rows() - 1, 1)).value();
      if (constraint) {
        next = allowed.front();
        for (int t : allowed)
          if (logits(0, t) > logits(0, next)) next = t;
      } else {
        Index best = 0;
        logits.row(0).maxCoeff(&best);
        next = static_cast<int>(best);
      }
    }
    if (next == vocab.eos()) {
      out.ended = true;
      break;
    }
    out.ids.push_back(next);
    if (constraint) node = constraint->advance(node, next);
    const auto emb = lm.embed_tokens({next}).value();
    rows.conservativeResize(rows.rows() + 1, Eigen::NoChange);
    rows.row(rows.rows() - 1) = emb.row(0);
  }
  out.text = vocab.detokenize(out.ids);
  return out;
}

}  // namespace llara::lm
