#pragma once

#include "skyplan/nn/layers.hpp"

#include <json.hpp>

#include <functional>
#include <optional>

namespace skyplan::nn {

/// Architecture hyper-parameters. Defaults are the production sizes.
struct ModelConfig {
  int feature_dim = 5;
  int hidden = 256;
  int heads = 4;
  int layers = 2;
  int ff = 512;
  int desc_dim = 32;
  int desc_heads = 4;
  int desc_ff = 512;

  void validate() const;
  /// Name of the first field that differs from `other`, or empty.
  [[nodiscard]] std::string first_difference(const ModelConfig& other) const;
  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Packed network input: `features` holds one row per (record, view) entry,
/// `descriptors` the matching descriptor rows (may have zero rows), and
/// `segments` the per-record row ranges.
template <typename T>
struct Batch {
  Matrix<T> features;
  Matrix<T> descriptors;
  Segments segments{0};
  KeyMask mask; // optional, per entry row

  [[nodiscard]] int records() const { return static_cast<int>(segments.size()) - 1; }
  [[nodiscard]] bool has_descriptors() const { return descriptors.rows() == features.rows() && descriptors.cols() > 0; }
};

/// Head outputs in log1p space, one row per record.
template <typename T>
struct Outputs {
  Matrix<T> spatial;     // [B, 1]
  Matrix<T> uncertainty; // [B, 1], empty when not requested
};

/// Intermediate values recorded by a training forward pass.
template <typename T>
struct Tape {
  typename Linear<T>::Cache embed1, embed2;
  Matrix<T> embed_pre;
  std::vector<typename EncoderLayer<T>::Cache> encoder;
  typename LayerNorm<T>::Cache enc_norm;
  typename FeedForward<T>::Cache spatial_head;
  Matrix<T> spatial_logit;
  typename EncoderLayer<T>::Cache desc_encoder;
  typename LayerNorm<T>::Cache desc_norm;
  typename Linear<T>::Cache desc_proj;
  typename DecoderLayer<T>::Cache decoder;
  typename LayerNorm<T>::Cache dec_norm;
  typename FeedForward<T>::Cache unc_head;
  Matrix<T> unc_logit;
  Segments token_segments;
  std::vector<int> query_rows;
  int entry_rows = 0;
  bool recorded = false;
  bool has_uncertainty = false;
};

/// Set-fusion reconstructability network.
///
/// Spatial path: every 5-D point-view feature is embedded by a two-layer MLP,
/// a learnable query token is prepended to each record's token set, the set
/// runs through a pre-norm transformer encoder and the query token is read
/// out, normalized and mapped to a scalar by an MLP + softplus.
///
/// Uncertainty path: per-view descriptors self-attend in a narrow encoder,
/// are normalized and projected to the hidden width, and act as keys/values
/// for one cross-attention decoder block whose query is the fused token.
template <typename T>
class Model {
  ModelConfig cfg_;

public:
  Model() : Model(ModelConfig{}) {}
  explicit Model(const ModelConfig& cfg)
      : cfg_((cfg.validate(), cfg)), embed1(cfg.feature_dim, cfg.hidden), embed2(cfg.hidden, cfg.hidden), enc_norm(cfg.hidden),
        spatial_head(cfg.hidden, cfg.hidden, 1), desc_encoder(cfg.desc_dim, cfg.desc_heads, cfg.desc_ff),
        desc_norm(cfg.desc_dim), desc_proj(cfg.desc_dim, cfg.hidden), decoder(cfg.hidden, cfg.heads, cfg.ff),
        dec_norm(cfg.hidden), unc_head(cfg.hidden, cfg.hidden, 1) {
    query.resize(1, cfg.hidden);
    for (int i = 0; i < cfg.layers; ++i) {
      encoder.emplace_back(cfg.hidden, cfg.heads, cfg.ff);
    }
  }

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    embed1.init(rng);
    embed2.init(rng);
    for (Eigen::Index i = 0; i < query.value.size(); ++i) {
      query.value.data()[i] = static_cast<T>(rng.normal(0.0, 0.5));
    }
    for (auto& layer : encoder) {
      layer.init(rng);
    }
    spatial_head.init(rng);
    desc_encoder.init(rng);
    desc_proj.init(rng);
    decoder.init(rng);
    unc_head.init(rng);
  }

  /// Calls f(name, Param<T>&) for every parameter in a fixed order.
  template <typename F>
  void visit(F&& f) {
    embed1.visit("embed.0", f);
    embed2.visit("embed.2", f);
    f(std::string("query"), query);
    for (std::size_t i = 0; i < encoder.size(); ++i) {
      encoder[i].visit("encoder." + std::to_string(i), f);
    }
    enc_norm.visit("encoder.norm", f);
    spatial_head.visit("spatial_head", f);
    desc_encoder.visit("desc_encoder", f);
    desc_norm.visit("desc_encoder.norm", f);
    desc_proj.visit("desc_proj", f);
    decoder.visit("decoder", f);
    dec_norm.visit("decoder.norm", f);
    unc_head.visit("uncertainty_head", f);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<Model*>(this)->visit([&](const std::string& name, Param<T>& p) { f(name, std::as_const(p)); });
  }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Param<T>& p) { n += static_cast<std::size_t>(p.value.size()); });
    return n;
  }

  void zero_grad() {
    visit([](const std::string&, Param<T>& p) { p.zero_grad(); });
  }

  template <typename U>
  [[nodiscard]] Model<U> cast() const {
    Model<U> out(cfg_);
    std::vector<const Param<T>*> src;
    visit([&](const std::string&, const Param<T>& p) { src.push_back(&p); });
    std::size_t i = 0;
    out.visit([&](const std::string&, Param<U>& p) {
      p.value = src[i++]->value.template cast<U>();
      p.grad.setZero(p.value.rows(), p.value.cols());
    });
    return out;
  }

  /// Runs the network. With a tape the pass is recorded for backward();
  /// without one the call is const and thread-safe.
  Outputs<T> forward(const Batch<T>& batch, bool with_uncertainty, Tape<T>* tape) const {
    const int records = batch.records();
    check_segments(batch.segments, batch.features.rows(), "model input");
    if (batch.features.cols() != cfg_.feature_dim) {
      throw ShapeError("model input: feature width " + std::to_string(batch.features.cols()) + " != " +
                       std::to_string(cfg_.feature_dim));
    }
    if (!batch.mask.empty() && static_cast<Eigen::Index>(batch.mask.size()) != batch.features.rows()) {
      throw ShapeError("model input: mask length != entry rows");
    }

    Matrix<T> pre = embed1.forward(batch.features, tape ? &tape->embed1 : nullptr);
    const Matrix<T> emb = embed2.forward(pre.cwiseMax(T(0)), tape ? &tape->embed2 : nullptr);

    // token layout: [query, entries...] per record
    Segments tseg(records + 1, 0);
    std::vector<int> qrows(records);
    for (int r = 0; r < records; ++r) {
      tseg[r + 1] = batch.segments[r + 1] + r + 1;
      qrows[r] = tseg[r];
    }
    Matrix<T> x(tseg.back(), cfg_.hidden);
    KeyMask tmask;
    if (!batch.mask.empty()) {
      tmask.assign(tseg.back(), 1);
    }
    for (int r = 0; r < records; ++r) {
      x.row(qrows[r]) = query.value.row(0);
      const int n = batch.segments[r + 1] - batch.segments[r];
      if (n > 0) {
        x.middleRows(qrows[r] + 1, n) = emb.middleRows(batch.segments[r], n);
      }
      for (int e = 0; e < n && !tmask.empty(); ++e) {
        tmask[qrows[r] + 1 + e] = batch.mask[batch.segments[r] + e];
      }
    }
    if (tape != nullptr) {
      tape->encoder.assign(encoder.size(), {});
    }
    for (std::size_t l = 0; l < encoder.size(); ++l) {
      x = encoder[l].forward(x, tseg, tmask, tape ? &tape->encoder[l] : nullptr);
    }
    Matrix<T> fused(records, cfg_.hidden);
    for (int r = 0; r < records; ++r) {
      fused.row(r) = x.row(qrows[r]);
    }
    const Matrix<T> fnth = enc_norm.forward(fused, tape ? &tape->enc_norm : nullptr);

    Outputs<T> out;
    Matrix<T> s_logit = spatial_head.forward(fnth, tape ? &tape->spatial_head : nullptr);
    out.spatial = s_logit.unaryExpr([](T z) { return softplus(z); });

    Matrix<T> u_logit;
    if (with_uncertainty) {
      if (!batch.has_descriptors() || batch.descriptors.cols() != cfg_.desc_dim) {
        throw ShapeError("model input: uncertainty head needs one descriptor of width " +
                         std::to_string(cfg_.desc_dim) + " per entry");
      }
      Matrix<T> d = desc_encoder.forward(batch.descriptors, batch.segments, batch.mask,
                                         tape ? &tape->desc_encoder : nullptr);
      d = desc_norm.forward(d, tape ? &tape->desc_norm : nullptr);
      const Matrix<T> kv = desc_proj.forward(d, tape ? &tape->desc_proj : nullptr);
      Segments qseg(records + 1);
      for (int r = 0; r <= records; ++r) {
        qseg[r] = r;
      }
      Matrix<T> u = decoder.forward(fnth, qseg, kv, batch.segments, batch.mask, tape ? &tape->decoder : nullptr);
      u = dec_norm.forward(u, tape ? &tape->dec_norm : nullptr);
      u_logit = unc_head.forward(u, tape ? &tape->unc_head : nullptr);
      out.uncertainty = u_logit.unaryExpr([](T z) { return softplus(z); });
    }

    if (tape != nullptr) {
      tape->embed_pre = std::move(pre);
      tape->spatial_logit = std::move(s_logit);
      tape->unc_logit = std::move(u_logit);
      tape->token_segments = std::move(tseg);
      tape->query_rows = std::move(qrows);
      tape->entry_rows = static_cast<int>(batch.features.rows());
      tape->has_uncertainty = with_uncertainty;
      tape->recorded = true;
    }
    return out;
  }

  /// Accumulates parameter gradients given d loss / d output for either head
  /// (an empty matrix means that head does not contribute).
  void backward(const Matrix<T>& d_spatial, const Matrix<T>& d_uncertainty, const Tape<T>& tape) {
    if (!tape.recorded) {
      throw ShapeError("backward called without a recorded forward pass");
    }
    const int records = static_cast<int>(tape.query_rows.size());
    Matrix<T> dfnth = Matrix<T>::Zero(records, cfg_.hidden);
    Matrix<T> ddesc;

    if (d_spatial.size() > 0) {
      if (d_spatial.rows() != records || d_spatial.cols() != 1) {
        throw ShapeError("backward: spatial gradient shape mismatch");
      }
      const Matrix<T> dlogit = d_spatial.cwiseProduct(tape.spatial_logit.unaryExpr([](T z) { return sigmoid(z); }));
      dfnth += spatial_head.backward(dlogit, tape.spatial_head);
    }
    if (d_uncertainty.size() > 0) {
      if (!tape.has_uncertainty) {
        throw ShapeError("backward: uncertainty head was not evaluated in the recorded pass");
      }
      if (d_uncertainty.rows() != records || d_uncertainty.cols() != 1) {
        throw ShapeError("backward: uncertainty gradient shape mismatch");
      }
      const Matrix<T> dlogit = d_uncertainty.cwiseProduct(tape.unc_logit.unaryExpr([](T z) { return sigmoid(z); }));
      Matrix<T> du = dec_norm.backward(unc_head.backward(dlogit, tape.unc_head), tape.dec_norm);
      auto [dq, dkv] = decoder.backward(du, tape.decoder);
      dfnth += dq;
      Matrix<T> dd = desc_norm.backward(desc_proj.backward(dkv, tape.desc_proj), tape.desc_norm);
      (void)desc_encoder.backward(dd, tape.desc_encoder);
    }

    const Matrix<T> dfused = enc_norm.backward(dfnth, tape.enc_norm);
    Matrix<T> dx = Matrix<T>::Zero(tape.token_segments.back(), cfg_.hidden);
    for (int r = 0; r < records; ++r) {
      dx.row(tape.query_rows[r]) = dfused.row(r);
    }
    for (std::size_t l = encoder.size(); l-- > 0;) {
      dx = encoder[l].backward(dx, tape.encoder[l]);
    }
    Matrix<T> demb(tape.entry_rows, cfg_.hidden);
    for (int r = 0; r < records; ++r) {
      query.grad.row(0) += dx.row(tape.query_rows[r]);
      const int n = tape.token_segments[r + 1] - tape.token_segments[r] - 1;
      const int entry0 = tape.query_rows[r] - r;
      if (n > 0) {
        demb.middleRows(entry0, n) = dx.middleRows(tape.query_rows[r] + 1, n);
      }
    }
    Matrix<T> dpre = embed2.backward(demb, tape.embed2);
    dpre.array() *= (tape.embed_pre.array() > T(0)).template cast<T>();
    (void)embed1.backward(dpre, tape.embed1);
  }

  Linear<T> embed1, embed2;
  Param<T> query;
  std::vector<EncoderLayer<T>> encoder;
  LayerNorm<T> enc_norm;
  FeedForward<T> spatial_head;
  EncoderLayer<T> desc_encoder;
  LayerNorm<T> desc_norm;
  Linear<T> desc_proj;
  DecoderLayer<T> decoder;
  LayerNorm<T> dec_norm;
  FeedForward<T> unc_head;
};

} // namespace skyplan::nn
