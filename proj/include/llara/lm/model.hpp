#pragma once

// Small decoder-only causal language model with weight-tied output head and
// low-rank adapters on the query and value projections.

#include "llara/core/nn.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace llara::lm {

class ContextError : public Error {
 public:
  ContextError(Index length, Index limit)
      : Error("sequence of length " + std::to_string(length) + " exceeds the context limit " + std::to_string(limit)),
        length_(length) {}
  Index length() const { return length_; }

 private:
  Index length_;
};

struct LoraConfig {
  int rank = 8;
  double alpha = 16.0;
  bool query = true;
  bool value = true;

  double scale() const { return alpha / rank; }
  nlohmann::json to_json() const;
  static LoraConfig from_json(const nlohmann::json& j);
};

struct LmConfig {
  int vocab_size = 0;
  int dim = 128;
  int layers = 4;
  int heads = 4;
  int ff_mult = 4;
  int context = 512;
  double init_stddev = 0.02;
  LoraConfig lora;

  void validate() const;
  nlohmann::json to_json() const;
  static LmConfig from_json(const nlohmann::json& j);
};

/// Additive update B * A * (alpha / r) to a frozen (in x out) projection,
/// with A (r x in) and B (out x r). B starts at zero so the update is exactly
/// zero at initialization.
template <class S>
struct LoraDelta {
  Parameter<S> a;
  Parameter<S> b;
  S scale = S(1);

  LoraDelta() = default;
  LoraDelta(Index in, Index out, const LoraConfig& cfg, std::mt19937_64& rng)
      : a(nn::normal_init<S>(cfg.rank, in, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
        b(Matrix<S>::Zero(out, cfg.rank)),
        scale(static_cast<S>(cfg.scale())) {}

  bool empty() const { return a.value.size() == 0; }

  /// x (L x in) -> x A^T B^T * scale (L x out)
  ad::Var<S> operator()(const ad::Var<S>& x) {
    return ad::scale(ad::matmul_nt(ad::matmul_nt(x, ad::leaf(a)), ad::leaf(b)), scale);
  }
};

template <class S>
struct LmBlock {
  nn::LayerNorm<S> ln1, ln2;
  nn::Linear<S> q, k, v, o, ff1, ff2;
  LoraDelta<S> lora_q, lora_v;
};

/// Rows of an LM input sequence: token embeddings or injected vectors.
enum class Provenance : std::uint8_t { Token, Injected };

template <class S>
struct EmbeddingSequence {
  ad::Var<S> rows;
  std::vector<int> token_ids;  // the slot token at injected positions
  std::vector<Provenance> provenance;
  std::vector<std::uint8_t> response_mask;

  Index length() const { return rows.rows(); }
};

template <class S>
class CausalLm {
 public:
  CausalLm() = default;

  CausalLm(const LmConfig& cfg, std::uint64_t seed, int placeholder_id = 3) : cfg_(cfg), placeholder_id_(placeholder_id) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    const Index d = cfg.dim, ff = static_cast<Index>(cfg.ff_mult) * d;
    const double sd = cfg.init_stddev;
    const double resid_sd = sd / std::sqrt(2.0 * cfg.layers);
    token_embeddings = Parameter<S>(nn::normal_init<S>(cfg.vocab_size, d, sd, rng));
    positions = Parameter<S>(nn::normal_init<S>(cfg.context, d, sd, rng));
    placeholder = Parameter<S>(nn::normal_init<S>(1, d, sd, rng));
    for (int l = 0; l < cfg.layers; ++l) {
      LmBlock<S> b;
      b.ln1 = nn::LayerNorm<S>(d);
      b.ln2 = nn::LayerNorm<S>(d);
      b.q = nn::Linear<S>(d, d, rng, sd);
      b.k = nn::Linear<S>(d, d, rng, sd);
      b.v = nn::Linear<S>(d, d, rng, sd);
      b.o = nn::Linear<S>(d, d, rng, resid_sd);
      b.ff1 = nn::Linear<S>(d, ff, rng, sd);
      b.ff2 = nn::Linear<S>(ff, d, rng, resid_sd);
      if (cfg.lora.query) b.lora_q = LoraDelta<S>(d, d, cfg.lora, rng);
      if (cfg.lora.value) b.lora_v = LoraDelta<S>(d, d, cfg.lora, rng);
      blocks.push_back(std::move(b));
    }
    final_norm = nn::LayerNorm<S>(d);
  }

  const LmConfig& config() const { return cfg_; }
  Index dim() const { return cfg_.dim; }
  int placeholder_id() const { return placeholder_id_; }

  /// Token-embedding rows for `ids`; the placeholder id reads the dedicated
  /// placeholder row.
  ad::Var<S> embed_tokens(const std::vector<int>& ids) {
    require_shape(!ids.empty(), "embed_tokens: empty id list");
    auto table = ad::leaf(token_embeddings);
    auto ph = ad::leaf(placeholder);
    std::vector<ad::RowRef<S>> refs;
    refs.reserve(ids.size());
    for (int id : ids) {
      if (id < 0 || id >= cfg_.vocab_size) throw IndexError("embed_tokens: token id " + std::to_string(id) + " out of range");
      if (id == placeholder_id_) refs.push_back({ph, 0});
      else refs.push_back({table, id});
    }
    return ad::compose_rows(refs);
  }

  /// Final-norm hidden states (L x d). Position t depends on rows <= t only.
  ad::Var<S> hidden(const ad::Var<S>& rows, bool lora) {
    const Index len = rows.rows();
    require_shape(rows.cols() == cfg_.dim, "lm: input width " + std::to_string(rows.cols()) + " != " + std::to_string(cfg_.dim));
    if (len > cfg_.context) throw ContextError(len, cfg_.context);
    auto x = ad::add(rows, ad::slice_rows(ad::leaf(positions), 0, len));
    for (auto& b : blocks) {
      auto h = b.ln1(x);
      auto q = b.q(h);
      auto v = b.v(h);
      if (lora && !b.lora_q.empty()) q = ad::add(q, b.lora_q(h));
      if (lora && !b.lora_v.empty()) v = ad::add(v, b.lora_v(h));
      auto att = ad::attention(q, b.k(h), v, cfg_.heads, len, true);
      x = ad::add(x, b.o(att));
      x = ad::add(x, b.ff2(ad::gelu(b.ff1(b.ln2(x)))));
    }
    return final_norm(x);
  }

  /// Vocabulary logits through the tied embedding matrix.
  ad::Var<S> logits_from_hidden(const ad::Var<S>& h) { return ad::matmul_nt(h, ad::leaf(token_embeddings)); }

  ad::Var<S> forward(const ad::Var<S>& rows, bool lora) { return logits_from_hidden(hidden(rows, lora)); }

  /// Mean next-token negative log-likelihood over positions with
  /// response_mask set; only the needed logits rows are formed.
  ad::Var<S> response_loss(const ad::Var<S>& rows, const std::vector<int>& targets,
                           const std::vector<std::uint8_t>& response_mask, bool lora) {
    std::vector<Index> pred_rows, tgt;
    collect_targets(targets, response_mask, pred_rows, tgt);
    auto h = hidden(rows, lora);
    return ad::cross_entropy(logits_from_hidden(ad::gather_rows(h, pred_rows)), tgt);
  }

  /// Base weights (the frozen backbone under LoRA), including the
  /// placeholder row.
  std::vector<nn::NamedParam<S>> base_parameters() {
    std::vector<nn::NamedParam<S>> out;
    out.push_back({"token_embeddings", &token_embeddings});
    out.push_back({"positions", &positions});
    out.push_back({"placeholder", &placeholder});
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      auto& b = blocks[i];
      const std::string p = "block" + std::to_string(i);
      b.ln1.collect(p + ".ln1", out);
      b.q.collect(p + ".q", out);
      b.k.collect(p + ".k", out);
      b.v.collect(p + ".v", out);
      b.o.collect(p + ".o", out);
      b.ln2.collect(p + ".ln2", out);
      b.ff1.collect(p + ".ff1", out);
      b.ff2.collect(p + ".ff2", out);
    }
    final_norm.collect("final_norm", out);
    return out;
  }

  /// Base weights without the placeholder row.
  std::vector<nn::NamedParam<S>> backbone_parameters() {
    auto all = base_parameters();
    std::vector<nn::NamedParam<S>> out;
    for (auto& p : all)
      if (p.param != &placeholder) out.push_back(p);
    return out;
  }

  std::vector<nn::NamedParam<S>> lora_parameters() {
    std::vector<nn::NamedParam<S>> out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      auto& b = blocks[i];
      const std::string p = "block" + std::to_string(i);
      if (!b.lora_q.empty()) {
        out.push_back({p + ".lora_q.a", &b.lora_q.a});
        out.push_back({p + ".lora_q.b", &b.lora_q.b});
      }
      if (!b.lora_v.empty()) {
        out.push_back({p + ".lora_v.a", &b.lora_v.a});
        out.push_back({p + ".lora_v.b", &b.lora_v.b});
      }
    }
    return out;
  }

  /// Freezes the backbone and makes LoRA factors plus the placeholder row
  /// trainable.
  void prepare_for_lora() {
    auto bb = backbone_parameters();
    nn::set_trainable(bb, false);
    placeholder.trainable = true;
    auto lp = lora_parameters();
    nn::set_trainable(lp, true);
  }

  /// Makes every base weight trainable and freezes LoRA factors.
  void prepare_for_pretraining() {
    auto bp = base_parameters();
    nn::set_trainable(bp, true);
    auto lp = lora_parameters();
    nn::set_trainable(lp, false);
  }

  /// Re-initializes all LoRA factors (A random, B zero).
  void reset_lora(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& b : blocks) {
      if (!b.lora_q.empty()) b.lora_q = LoraDelta<S>(cfg_.dim, cfg_.dim, cfg_.lora, rng);
      if (!b.lora_v.empty()) b.lora_v = LoraDelta<S>(cfg_.dim, cfg_.dim, cfg_.lora, rng);
    }
  }

  template <class T>
  CausalLm<T> cast() const {
    CausalLm<T> out;
    out.cfg_ = cfg_;
    out.placeholder_id_ = placeholder_id_;
    out.token_embeddings = token_embeddings.template cast<T>();
    out.positions = positions.template cast<T>();
    out.placeholder = placeholder.template cast<T>();
    for (const auto& b : blocks) {
      LmBlock<T> nb;
      nb.ln1 = cast_norm<T>(b.ln1);
      nb.ln2 = cast_norm<T>(b.ln2);
      nb.q = cast_linear<T>(b.q);
      nb.k = cast_linear<T>(b.k);
      nb.v = cast_linear<T>(b.v);
      nb.o = cast_linear<T>(b.o);
      nb.ff1 = cast_linear<T>(b.ff1);
      nb.ff2 = cast_linear<T>(b.ff2);
      nb.lora_q.a = b.lora_q.a.template cast<T>();
      nb.lora_q.b = b.lora_q.b.template cast<T>();
      nb.lora_q.scale = static_cast<T>(b.lora_q.scale);
      nb.lora_v.a = b.lora_v.a.template cast<T>();
      nb.lora_v.b = b.lora_v.b.template cast<T>();
      nb.lora_v.scale = static_cast<T>(b.lora_v.scale);
      out.blocks.push_back(std::move(nb));
    }
    out.final_norm = cast_norm<T>(final_norm);
    return out;
  }

  static void collect_targets(const std::vector<int>& targets, const std::vector<std::uint8_t>& mask,
                              std::vector<Index>& pred_rows, std::vector<Index>& tgt) {
    require_shape(targets.size() == mask.size(), "loss: targets and mask differ in length");
    for (std::size_t t = 0; t < mask.size(); ++t) {
      if (!mask[t]) continue;
      if (t == 0) throw Error("loss: position 0 has no preceding context");
      pred_rows.push_back(static_cast<Index>(t - 1));
      tgt.push_back(targets[t]);
    }
    if (pred_rows.empty()) throw Error("loss: response mask selects no position");
  }

  Parameter<S> token_embeddings;  // also the output projection
  Parameter<S> positions;
  Parameter<S> placeholder;       // input row for the placeholder token
  std::vector<LmBlock<S>> blocks;
  nn::LayerNorm<S> final_norm;

 private:
  template <class T>
  friend class CausalLm;

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

  LmConfig cfg_;
  int placeholder_id_ = 3;
};

/// Mean next-token negative log-likelihood over the masked positions of a
/// full logits matrix (L x |V|): position t is scored by logits row t-1.
template <class S>
ad::Var<S> ar_loss(const ad::Var<S>& logits, const std::vector<int>& targets, const std::vector<std::uint8_t>& response_mask) {
  std::vector<Index> pred_rows, tgt;
  CausalLm<S>::collect_targets(targets, response_mask, pred_rows, tgt);
  return ad::cross_entropy(ad::gather_rows(logits, pred_rows), tgt);
}

void save_lm_base(const std::string& path, CausalLm<float>& lm, const nlohmann::json& extra = {});
CausalLm<float> load_lm_base(const std::string& path);

}  // namespace llara::lm
