#pragma once

// Sequential recommenders whose item-embedding table is the behavioral
// knowledge source for the language model.

#include "llara/core/nn.hpp"
#include "llara/corpus/corpus.hpp"

#include <json.hpp>

#include <array>
#include <span>
#include <string>
#include <vector>

namespace llara::recsys {

using corpus::ItemId;

enum class EncoderKind { Gru, Cnn, SelfAttention };

std::string to_string(EncoderKind k);
EncoderKind parse_encoder_kind(const std::string& s);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::SelfAttention;
  int dim = 64;
  int history = corpus::kHistoryLength;
  double init_stddev = 0.1;  // item embeddings ~ N(0, init_stddev^2)
  // CNN
  int vertical_filters = 4;
  int horizontal_filters = 8;  // per height
  std::array<int, 3> heights = {2, 3, 4};
  // Self-attention
  int layers = 2;
  int heads = 2;

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
};

template <class S>
struct AttentionBlock {
  nn::LayerNorm<S> ln1, ln2;
  nn::Linear<S> q, k, v, o, ff1, ff2;

  AttentionBlock() = default;
  AttentionBlock(Index d, std::mt19937_64& rng)
      : ln1(d), ln2(d), q(d, d, rng), k(d, d, rng), v(d, d, rng), o(d, d, rng), ff1(d, d, rng), ff2(d, d, rng) {}

  void collect(const std::string& p, std::vector<nn::NamedParam<S>>& out) {
    ln1.collect(p + ".ln1", out);
    q.collect(p + ".q", out);
    k.collect(p + ".k", out);
    v.collect(p + ".v", out);
    o.collect(p + ".o", out);
    ln2.collect(p + ".ln2", out);
    ff1.collect(p + ".ff1", out);
    ff2.collect(p + ".ff2", out);
  }
};

/// Item-embedding table (n_items + 1 rows; the last row is the pad) plus one
/// sequence encoder. Scores are dot products between the encoder state and
/// item embeddings; the pad row never receives a score.
template <class S>
class RecommenderModel {
 public:
  RecommenderModel() = default;

  RecommenderModel(std::int64_t n_items, EncoderConfig cfg, std::uint64_t seed) : n_items_(n_items), cfg_(cfg) {
    std::mt19937_64 rng(seed);
    const Index d = cfg.dim;
    item_embeddings = Parameter<S>(nn::normal_init<S>(n_items + 1, d, cfg.init_stddev, rng));
    switch (cfg.kind) {
      case EncoderKind::Gru:
        gru_input = nn::Linear<S>(d, 3 * d, rng);
        gru_hidden = nn::Linear<S>(d, 3 * d, rng);
        break;
      case EncoderKind::Cnn: {
        vertical = Parameter<S>(nn::normal_init<S>(cfg.vertical_filters, cfg.history, 1.0 / cfg.history, rng));
        for (std::size_t i = 0; i < cfg.heights.size(); ++i)
          horizontal[i] = nn::Linear<S>(cfg.heights[i] * d, cfg.horizontal_filters, rng);
        const Index feat = cfg.vertical_filters * d + static_cast<Index>(cfg.heights.size()) * cfg.horizontal_filters;
        cnn_out = nn::Linear<S>(feat, d, rng);
        break;
      }
      case EncoderKind::SelfAttention:
        positions = Parameter<S>(nn::normal_init<S>(cfg.history, d, cfg.init_stddev, rng));
        for (int l = 0; l < cfg.layers; ++l) blocks.emplace_back(d, rng);
        final_norm = nn::LayerNorm<S>(d);
        break;
    }
  }

  std::int64_t n_items() const { return n_items_; }
  ItemId pad_id() const { return n_items_; }
  const EncoderConfig& config() const { return cfg_; }

  /// Row `id` of the item-embedding table (the pad id is accepted).
  RowVector<S> sr_embed(ItemId id) const {
    if (id < 0 || id > n_items_) throw IndexError("sr_embed: item id " + std::to_string(id) + " out of range");
    return item_embeddings.value.row(id);
  }

  /// Encodes a batch of left-padded histories into states (B x d).
  ad::Var<S> encode(const std::vector<std::vector<ItemId>>& histories) {
    require_shape(!histories.empty(), "encode: empty batch");
    const Index len = static_cast<Index>(histories.front().size());
    std::vector<Index> ids;
    std::vector<std::uint8_t> real;
    for (const auto& h : histories) {
      require_shape(static_cast<Index>(h.size()) == len, "encode: ragged batch");
      int n_real = 0;
      for (ItemId id : h) {
        if (id < 0 || id > n_items_) throw IndexError("encode: item id out of range");
        ids.push_back(id);
        real.push_back(id != pad_id());
        n_real += id != pad_id();
      }
      if (n_real == 0) throw Error("encode: history has no real items");
    }
    switch (cfg_.kind) {
      case EncoderKind::Gru: return encode_gru(ids, real, len);
      case EncoderKind::Cnn: return encode_cnn(ids, len);
      case EncoderKind::SelfAttention: return encode_attention(ids, real, len);
    }
    throw Error("encode: unknown encoder");
  }

  ad::Var<S> encode_history(const std::vector<ItemId>& history, int history_len) {
    if (history_len <= 0) throw Error("encode_history: history_len must be positive");
    return encode({history});
  }

  /// Full-catalog logits (B x n_items), pad excluded.
  ad::Var<S> catalog_logits(const ad::Var<S>& states) {
    return ad::matmul_nt(states, ad::slice_rows(ad::leaf(item_embeddings), 0, n_items_));
  }

  /// Candidate scores for one example, in candidate order.
  std::vector<S> score_candidates(const corpus::SequenceExample& ex) {
    const auto state = encode({ex.history}).value();
    std::vector<S> out;
    out.reserve(ex.candidates.size());
    for (ItemId c : ex.candidates) {
      if (c < 0 || c >= n_items_) throw IndexError("score_candidates: candidate outside catalog");
      out.push_back(state.row(0).dot(item_embeddings.value.row(c)));
    }
    return out;
  }

  std::vector<nn::NamedParam<S>> parameters() {
    std::vector<nn::NamedParam<S>> out;
    out.push_back({"item_embeddings", &item_embeddings});
    switch (cfg_.kind) {
      case EncoderKind::Gru:
        gru_input.collect("gru.input", out);
        gru_hidden.collect("gru.hidden", out);
        break;
      case EncoderKind::Cnn:
        out.push_back({"cnn.vertical", &vertical});
        for (std::size_t i = 0; i < horizontal.size(); ++i) horizontal[i].collect("cnn.horizontal" + std::to_string(i), out);
        cnn_out.collect("cnn.out", out);
        break;
      case EncoderKind::SelfAttention:
        out.push_back({"sa.positions", &positions});
        for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect("sa.block" + std::to_string(i), out);
        final_norm.collect("sa.final_norm", out);
        break;
    }
    return out;
  }

  template <class T>
  RecommenderModel<T> cast() const {
    RecommenderModel<T> out;
    out.n_items_ = n_items_;
    out.cfg_ = cfg_;
    out.item_embeddings = item_embeddings.template cast<T>();
    out.gru_input = cast_linear<T>(gru_input);
    out.gru_hidden = cast_linear<T>(gru_hidden);
    out.vertical = vertical.template cast<T>();
    for (std::size_t i = 0; i < horizontal.size(); ++i) out.horizontal[i] = cast_linear<T>(horizontal[i]);
    out.cnn_out = cast_linear<T>(cnn_out);
    out.positions = positions.template cast<T>();
    for (const auto& b : blocks) {
      AttentionBlock<T> nb;
      nb.ln1 = cast_norm<T>(b.ln1);
      nb.ln2 = cast_norm<T>(b.ln2);
      nb.q = cast_linear<T>(b.q);
      nb.k = cast_linear<T>(b.k);
      nb.v = cast_linear<T>(b.v);
      nb.o = cast_linear<T>(b.o);
      nb.ff1 = cast_linear<T>(b.ff1);
      nb.ff2 = cast_linear<T>(b.ff2);
      out.blocks.push_back(std::move(nb));
    }
    out.final_norm = cast_norm<T>(final_norm);
    return out;
  }

  Parameter<S> item_embeddings;
  nn::Linear<S> gru_input, gru_hidden;
  Parameter<S> vertical;
  std::array<nn::Linear<S>, 3> horizontal;
  nn::Linear<S> cnn_out;
  Parameter<S> positions;
  std::vector<AttentionBlock<S>> blocks;
  nn::LayerNorm<S> final_norm;

 private:
  template <class T>
  friend class RecommenderModel;

  template <class T>
  static nn::Linear<T> cast_linear(const nn::Linear<S>& l) {
    nn::Linear<T> out;
    out.weight = l.weight.template cast<T>();
    out.bias = l.bias.template cast<T>();
    return out;
  }
  template <class T>
  static nn::LayerNorm<T> cast_norm(const nn::LayerNorm<S>& l) {
    nn::LayerNorm<T> out;
    out.gain = l.gain.template cast<T>();
    out.bias = l.bias.template cast<T>();
    return out;
  }

  ad::Var<S> encode_gru(const std::vector<Index>& ids, const std::vector<std::uint8_t>& real, Index len) {
    const Index batch = static_cast<Index>(ids.size()) / len, d = cfg_.dim;
    auto table = ad::leaf(item_embeddings);
    ad::Var<S> h = ad::constant<S>(Matrix<S>::Zero(batch, d));
    for (Index t = 0; t < len; ++t) {
      std::vector<Index> step_ids(static_cast<std::size_t>(batch));
      Matrix<S> mask(batch, d);
      for (Index b = 0; b < batch; ++b) {
        step_ids[static_cast<std::size_t>(b)] = ids[static_cast<std::size_t>(b * len + t)];
        mask.row(b).setConstant(real[static_cast<std::size_t>(b * len + t)] ? S(1) : S(0));
      }
      if (mask.isZero()) continue;
      auto x = ad::gather_rows(table, step_ids);
      auto gx = gru_input(x);
      auto gh = gru_hidden(h);
      auto z = ad::sigmoid(ad::add(ad::slice_cols(gx, 0, d), ad::slice_cols(gh, 0, d)));
      auto r = ad::sigmoid(ad::add(ad::slice_cols(gx, d, d), ad::slice_cols(gh, d, d)));
      auto n = ad::tanh(ad::add(ad::slice_cols(gx, 2 * d, d), ad::mul(r, ad::slice_cols(gh, 2 * d, d))));
      // h' = n + z * (h - n); pads leave h unchanged.
      auto h_new = ad::add(n, ad::mul(z, ad::sub(h, n)));
      h = ad::add(h, ad::mul(ad::constant(std::move(mask)), ad::sub(h_new, h)));
    }
    return h;
  }

  ad::Var<S> encode_cnn(const std::vector<Index>& ids, Index len) {
    const Index batch = static_cast<Index>(ids.size()) / len, d = cfg_.dim;
    auto x = ad::gather_rows(ad::leaf(item_embeddings), ids);
    auto vert = ad::segment_left_matmul(ad::leaf(vertical), x, len);
    std::vector<ad::Var<S>> feats{ad::reshape(vert, batch, cfg_.vertical_filters * d)};
    for (std::size_t i = 0; i < horizontal.size(); ++i) {
      const Index h = cfg_.heights[i];
      auto windows = ad::window_stack(x, len, h);
      feats.push_back(ad::segment_max(ad::relu(horizontal[i](windows)), len - h + 1));
    }
    return ad::relu(cnn_out(ad::concat_cols(feats)));
  }

  ad::Var<S> encode_attention(const std::vector<Index>& ids, const std::vector<std::uint8_t>& real, Index len) {
    const Index batch = static_cast<Index>(ids.size()) / len;
    std::vector<Index> pos(ids.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<Index>(i) % len;
    auto x = ad::add(ad::gather_rows(ad::leaf(item_embeddings), ids), ad::gather_rows(ad::leaf(positions), pos));
    for (auto& b : blocks) {
      auto hn = b.ln1(x);
      auto att = ad::attention(b.q(hn), b.k(hn), b.v(hn), cfg_.heads, len, true, real);
      x = ad::add(x, b.o(att));
      x = ad::add(x, b.ff2(ad::relu(b.ff1(b.ln2(x)))));
    }
    std::vector<Index> last(static_cast<std::size_t>(batch));
    for (Index b = 0; b < batch; ++b) last[static_cast<std::size_t>(b)] = b * len + len - 1;
    return final_norm(ad::gather_rows(x, last));
  }

  std::int64_t n_items_ = 0;
  EncoderConfig cfg_;
};

/// Index of the largest score; ties resolve to the lowest index.
template <class S>
std::size_t argmax_first(std::span<const S> scores) {
  if (scores.empty()) throw Error("argmax_first: no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

template <class S>
ItemId predict_from_candidates(RecommenderModel<S>& model, const corpus::SequenceExample& ex) {
  const auto scores = model.score_candidates(ex);
  return ex.candidates[argmax_first<S>(scores)];
}

}  // namespace llara::recsys
