#pragma once

// Projection of recommender item embeddings into the language model's input
// space, and assembly of rendered prompts into embedding sequences.

#include "llara/fusion/prompt.hpp"
#include "llara/lm/model.hpp"
#include "llara/recsys/model.hpp"

namespace llara::fusion {

/// Two-layer perceptron d -> hidden -> d_lm with a GELU between.
template <class S>
struct Adapter {
  nn::Linear<S> first, second;

  Adapter() = default;
  Adapter(Index d, Index hidden, Index d_lm, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    first = nn::Linear<S>(d, hidden, rng);
    second = nn::Linear<S>(hidden, d_lm, rng);
  }

  Index input_dim() const { return first.in_features(); }
  Index output_dim() const { return second.out_features(); }

  ad::Var<S> operator()(const ad::Var<S>& e) {
    require_shape(e.cols() == input_dim(),
                  "adapter: input width " + std::to_string(e.cols()) + " != " + std::to_string(input_dim()));
    return second(ad::gelu(first(e)));
  }

  RowVector<S> project(const RowVector<S>& e) {
    ad::NoGradGuard g;
    return (*this)(ad::constant(Matrix<S>(e))).value().row(0);
  }

  std::vector<nn::NamedParam<S>> parameters() {
    std::vector<nn::NamedParam<S>> out;
    first.collect("adapter.first", out);
    second.collect("adapter.second", out);
    return out;
  }

  template <class T>
  Adapter<T> cast() const {
    Adapter<T> out;
    out.first.weight = first.weight.template cast<T>();
    out.first.bias = first.bias.template cast<T>();
    out.second.weight = second.weight.template cast<T>();
    out.second.bias = second.bias.template cast<T>();
    return out;
  }
};

/// Title rows followed by the behavioral row.
template <class S>
ad::Var<S> hybrid_concat(const ad::Var<S>& text_rows, const ad::Var<S>& behavioral) {
  require_shape(text_rows.rows() >= 1, "hybrid_concat: needs at least one text row");
  require_shape(behavioral.rows() == 1, "hybrid_concat: behavioral input must be one row");
  return ad::concat_rows<S>({text_rows, behavioral});
}

/// Frozen recommender plus adapter that produce injected rows.
template <class S>
struct Injector {
  recsys::RecommenderModel<S>* recommender = nullptr;
  Adapter<S>* adapter = nullptr;

  ad::Var<S> rows(const std::vector<ItemId>& items) {
    if (!recommender || !adapter) throw Error("injection needs a recommender and an adapter");
    std::vector<Index> ids(items.begin(), items.end());
    return (*adapter)(ad::gather_rows(ad::leaf(recommender->item_embeddings), ids));
  }
};

enum class Injection { Project, Placeholder };

/// Embedding rows for the first `length` positions of `p` (all when
/// negative). Injected positions take projected rows, or the placeholder
/// embedding under Injection::Placeholder.
template <class S>
lm::EmbeddingSequence<S> assemble(const RenderedPrompt& p, lm::CausalLm<S>& lm, Injector<S>* injector,
                                  Index length = -1, Injection how = Injection::Project) {
  const Index n = length < 0 ? p.length() : std::min(length, p.length());
  if (n > lm.config().context) throw lm::ContextError(n, lm.config().context);
  lm::EmbeddingSequence<S> seq;
  seq.token_ids.assign(p.tokens.begin(), p.tokens.begin() + n);
  seq.response_mask.assign(p.response_mask.begin(), p.response_mask.begin() + n);
  seq.provenance.assign(static_cast<std::size_t>(n), lm::Provenance::Token);
  std::vector<ItemId> items;
  for (Index i = 0; i < n; ++i)
    if (p.injected[static_cast<std::size_t>(i)] >= 0) {
      items.push_back(p.injected[static_cast<std::size_t>(i)]);
      seq.provenance[static_cast<std::size_t>(i)] = lm::Provenance::Injected;
    }
  auto base = lm.embed_tokens(seq.token_ids);
  if (items.empty() || how == Injection::Placeholder) {
    seq.rows = base;
    return seq;
  }
  if (!injector) throw Error("prompt in mode " + to_string(p.mode) + " needs a recommender and an adapter");
  auto injected = injector->rows(items);
  std::vector<ad::RowRef<S>> refs;
  refs.reserve(static_cast<std::size_t>(n));
  Index k = 0;
  for (Index i = 0; i < n; ++i) {
    if (seq.provenance[static_cast<std::size_t>(i)] == lm::Provenance::Injected) refs.push_back({injected, k++});
    else refs.push_back({base, i});
  }
  seq.rows = ad::compose_rows(refs);
  return seq;
}

}  // namespace llara::fusion
