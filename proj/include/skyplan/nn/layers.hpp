#pragma once

#include "skyplan/nn/tensor.hpp"
#include "skyplan/rng.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace skyplan::nn {

// Every layer is stateless apart from its parameters. forward() optionally
// fills a cache that the matching backward() consumes; passing nullptr gives a
// pure inference pass that is safe to run concurrently.

template <typename T>
class Linear {
public:
  struct Cache {
    Matrix<T> x;
    bool recorded = false;
  };

  Linear() = default;
  Linear(int in, int out) {
    weight.resize(in, out);
    bias.resize(1, out);
  }

  [[nodiscard]] int in_dim() const { return static_cast<int>(weight.value.rows()); }
  [[nodiscard]] int out_dim() const { return static_cast<int>(weight.value.cols()); }

  /// PyTorch-style uniform(-1/sqrt(in), 1/sqrt(in)) for weights and bias.
  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim()));
    for (Eigen::Index i = 0; i < weight.value.size(); ++i) {
      weight.value.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    for (Eigen::Index i = 0; i < bias.value.size(); ++i) {
      bias.value.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
  }

  Matrix<T> forward(const Matrix<T>& x, Cache* cache) const {
    if (x.cols() != weight.value.rows()) {
      throw ShapeError("linear: input width " + std::to_string(x.cols()) + " != " +
                       std::to_string(weight.value.rows()));
    }
    Matrix<T> y(x.rows(), weight.value.cols());
    y.noalias() = x * weight.value;
    y.rowwise() += bias.value.row(0);
    if (cache != nullptr) {
      cache->x = x;
      cache->recorded = true;
    }
    return y;
  }

  Matrix<T> backward(const Matrix<T>& dy, const Cache& cache) {
    if (!cache.recorded) {
      throw ShapeError("linear: backward without a recorded forward pass");
    }
    weight.grad.noalias() += cache.x.transpose() * dy;
    bias.grad += dy.colwise().sum();
    Matrix<T> dx(dy.rows(), weight.value.rows());
    dx.noalias() = dy * weight.value.transpose();
    return dx;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }

  Param<T> weight;
  Param<T> bias;
};

template <typename T>
class LayerNorm {
public:
  struct Cache {
    Matrix<T> xhat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
    bool recorded = false;
  };

  static constexpr double kEps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(int dim) {
    gamma.resize(1, dim);
    beta.resize(1, dim);
    gamma.value.setOnes();
  }

  [[nodiscard]] int dim() const { return static_cast<int>(gamma.value.cols()); }

  /// Normalized rows before the affine part; exposed for testing.
  static Matrix<T> normalize(const Matrix<T>& x, Eigen::Matrix<T, Eigen::Dynamic, 1>* rstd_out) {
    Matrix<T> xhat(x.rows(), x.cols());
    if (rstd_out != nullptr) {
      rstd_out->resize(x.rows());
    }
    const T n = static_cast<T>(x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const T mean = x.row(r).sum() / n;
      const T var = (x.row(r).array() - mean).square().sum() / n;
      const T rstd = T(1) / std::sqrt(var + static_cast<T>(kEps));
      xhat.row(r) = (x.row(r).array() - mean) * rstd;
      if (rstd_out != nullptr) {
        (*rstd_out)(r) = rstd;
      }
    }
    return xhat;
  }

  Matrix<T> forward(const Matrix<T>& x, Cache* cache) const {
    if (x.cols() != gamma.value.cols()) {
      throw ShapeError("layernorm: input width mismatch");
    }
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
    Matrix<T> xhat = normalize(x, cache != nullptr ? &rstd : nullptr);
    Matrix<T> y = (xhat.array().rowwise() * gamma.value.row(0).array()).matrix();
    y.rowwise() += beta.value.row(0);
    if (cache != nullptr) {
      cache->xhat = std::move(xhat);
      cache->rstd = std::move(rstd);
      cache->recorded = true;
    }
    return y;
  }

  Matrix<T> backward(const Matrix<T>& dy, const Cache& cache) {
    if (!cache.recorded) {
      throw ShapeError("layernorm: backward without a recorded forward pass");
    }
    gamma.grad += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    beta.grad += dy.colwise().sum();
    const Matrix<T> dxhat = (dy.array().rowwise() * gamma.value.row(0).array()).matrix();
    const T n = static_cast<T>(dy.cols());
    Matrix<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const T m1 = dxhat.row(r).sum() / n;
      const T m2 = dxhat.row(r).dot(cache.xhat.row(r)) / n;
      dx.row(r) = cache.rstd(r) * (dxhat.row(r).array() - m1 - cache.xhat.row(r).array() * m2);
    }
    return dx;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
  }

  Param<T> gamma;
  Param<T> beta;
};

/// Multi-head scaled dot-product attention over packed segments: query rows of
/// segment s attend only to key rows of segment s.
template <typename T>
class MultiHeadAttention {
public:
  struct Cache {
    typename Linear<T>::Cache q, k, v, o;
    Matrix<T> qp, kp, vp, heads;
    Segments qseg, kseg;
    std::vector<Matrix<T>> probs; // [segment * heads + head]
    bool recorded = false;
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(int dim, int heads) : heads_(heads), q(dim, dim), k(dim, dim), v(dim, dim), o(dim, dim) {
    if (heads <= 0 || dim % heads != 0) {
      throw ShapeError("attention: dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                       " heads");
    }
  }

  [[nodiscard]] int heads() const { return heads_; }
  [[nodiscard]] int dim() const { return q.in_dim(); }

  void init(Rng& rng) {
    q.init(rng);
    k.init(rng);
    v.init(rng);
    o.init(rng);
  }

  /// Fully masked (or empty) key sets produce zero rows before the output projection.
  Matrix<T> forward(const Matrix<T>& xq, const Segments& qseg, const Matrix<T>& xkv, const Segments& kseg,
                    const KeyMask& mask, Cache* cache) const {
    check_segments(qseg, xq.rows(), "attention queries");
    check_segments(kseg, xkv.rows(), "attention keys");
    if (qseg.size() != kseg.size()) {
      throw ShapeError("attention: query and key batches differ in record count");
    }
    if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != xkv.rows()) {
      throw ShapeError("attention: mask length != key rows");
    }
    Matrix<T> qp = q.forward(xq, cache ? &cache->q : nullptr);
    Matrix<T> kp = k.forward(xkv, cache ? &cache->k : nullptr);
    Matrix<T> vp = v.forward(xkv, cache ? &cache->v : nullptr);
    const int dh = dim() / heads_;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    Matrix<T> heads = Matrix<T>::Zero(xq.rows(), dim());
    if (cache != nullptr) {
      cache->probs.assign((qseg.size() - 1) * heads_, Matrix<T>());
    }
    for (std::size_t s = 0; s + 1 < qseg.size(); ++s) {
      const int q0 = qseg[s], nq = qseg[s + 1] - qseg[s];
      const int k0 = kseg[s], nk = kseg[s + 1] - kseg[s];
      if (nq == 0) {
        continue;
      }
      for (int h = 0; h < heads_; ++h) {
        Matrix<T> p = Matrix<T>::Zero(nq, nk);
        if (nk > 0) {
          p.noalias() = qp.block(q0, h * dh, nq, dh) * kp.block(k0, h * dh, nk, dh).transpose();
          p *= scale;
          softmax_rows(p, mask, k0);
          heads.block(q0, h * dh, nq, dh).noalias() = p * vp.block(k0, h * dh, nk, dh);
        }
        if (cache != nullptr) {
          cache->probs[s * heads_ + h] = std::move(p);
        }
      }
    }
    Matrix<T> y = o.forward(heads, cache ? &cache->o : nullptr);
    if (cache != nullptr) {
      cache->qp = std::move(qp);
      cache->kp = std::move(kp);
      cache->vp = std::move(vp);
      cache->heads = std::move(heads);
      cache->qseg = qseg;
      cache->kseg = kseg;
      cache->recorded = true;
    }
    return y;
  }

  /// Returns (d query input, d key/value input).
  std::pair<Matrix<T>, Matrix<T>> backward(const Matrix<T>& dy, const Cache& cache) {
    if (!cache.recorded) {
      throw ShapeError("attention: backward without a recorded forward pass");
    }
    const Matrix<T> dheads = o.backward(dy, cache.o);
    const int dh = dim() / heads_;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    Matrix<T> dqp = Matrix<T>::Zero(cache.qp.rows(), cache.qp.cols());
    Matrix<T> dkp = Matrix<T>::Zero(cache.kp.rows(), cache.kp.cols());
    Matrix<T> dvp = Matrix<T>::Zero(cache.vp.rows(), cache.vp.cols());
    for (std::size_t s = 0; s + 1 < cache.qseg.size(); ++s) {
      const int q0 = cache.qseg[s], nq = cache.qseg[s + 1] - cache.qseg[s];
      const int k0 = cache.kseg[s], nk = cache.kseg[s + 1] - cache.kseg[s];
      if (nq == 0 || nk == 0) {
        continue;
      }
      for (int h = 0; h < heads_; ++h) {
        const Matrix<T>& p = cache.probs[s * heads_ + h];
        const auto dout = dheads.block(q0, h * dh, nq, dh);
        dvp.block(k0, h * dh, nk, dh).noalias() += p.transpose() * dout;
        Matrix<T> dp(nq, nk);
        dp.noalias() = dout * cache.vp.block(k0, h * dh, nk, dh).transpose();
        // softmax Jacobian; masked entries have p = 0 and drop out
        const Eigen::Matrix<T, Eigen::Dynamic, 1> inner = (dp.array() * p.array()).rowwise().sum();
        Matrix<T> ds = (p.array() * (dp.array().colwise() - inner.array())).matrix() * scale;
        dqp.block(q0, h * dh, nq, dh).noalias() += ds * cache.kp.block(k0, h * dh, nk, dh);
        dkp.block(k0, h * dh, nk, dh).noalias() += ds.transpose() * cache.qp.block(q0, h * dh, nq, dh);
      }
    }
    Matrix<T> dxq = q.backward(dqp, cache.q);
    Matrix<T> dxkv = k.backward(dkp, cache.k);
    dxkv += v.backward(dvp, cache.v);
    return {std::move(dxq), std::move(dxkv)};
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    q.visit(prefix + ".q", f);
    k.visit(prefix + ".k", f);
    v.visit(prefix + ".v", f);
    o.visit(prefix + ".o", f);
  }

private:
  static void softmax_rows(Matrix<T>& p, const KeyMask& mask, int k0) {
    const T neg_inf = -std::numeric_limits<T>::infinity();
    if (!mask.empty()) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        if (mask[k0 + c] == 0) {
          p.col(c).setConstant(neg_inf);
        }
      }
    }
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const T mx = p.row(r).maxCoeff();
      if (mx == neg_inf) {
        p.row(r).setZero();
        continue;
      }
      p.row(r) = (p.row(r).array() - mx).exp();
      p.row(r) /= p.row(r).sum();
    }
  }

  int heads_ = 1;

public:
  Linear<T> q, k, v, o;
};

/// Linear -> ReLU -> Linear.
template <typename T>
class FeedForward {
public:
  struct Cache {
    typename Linear<T>::Cache l1, l2;
    Matrix<T> pre;
    bool recorded = false;
  };

  FeedForward() = default;
  FeedForward(int dim, int hidden) : l1(dim, hidden), l2(hidden, dim) {}
  FeedForward(int in, int hidden, int out) : l1(in, hidden), l2(hidden, out) {}

  void init(Rng& rng) {
    l1.init(rng);
    l2.init(rng);
  }

  Matrix<T> forward(const Matrix<T>& x, Cache* cache) const {
    Matrix<T> pre = l1.forward(x, cache ? &cache->l1 : nullptr);
    Matrix<T> h = pre.cwiseMax(T(0));
    Matrix<T> y = l2.forward(h, cache ? &cache->l2 : nullptr);
    if (cache != nullptr) {
      cache->pre = std::move(pre);
      cache->recorded = true;
    }
    return y;
  }

  Matrix<T> backward(const Matrix<T>& dy, const Cache& cache) {
    if (!cache.recorded) {
      throw ShapeError("feed-forward: backward without a recorded forward pass");
    }
    Matrix<T> dh = l2.backward(dy, cache.l2);
    dh.array() *= (cache.pre.array() > T(0)).template cast<T>();
    return l1.backward(dh, cache.l1);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    l1.visit(prefix + ".0", f);
    l2.visit(prefix + ".2", f);
  }

  Linear<T> l1, l2;
};

/// Pre-norm self-attention block: x + MHA(LN(x)), then + FF(LN(.)).
template <typename T>
class EncoderLayer {
public:
  struct Cache {
    typename LayerNorm<T>::Cache ln1, ln2;
    typename MultiHeadAttention<T>::Cache attn;
    typename FeedForward<T>::Cache ff;
    bool recorded = false;
  };

  EncoderLayer() = default;
  EncoderLayer(int dim, int heads, int ff_dim) : ln1(dim), attn(dim, heads), ln2(dim), ff(dim, ff_dim) {}

  void init(Rng& rng) {
    attn.init(rng);
    ff.init(rng);
  }

  Matrix<T> forward(const Matrix<T>& x, const Segments& seg, const KeyMask& mask, Cache* cache) const {
    const Matrix<T> a = ln1.forward(x, cache ? &cache->ln1 : nullptr);
    Matrix<T> x1 = x + attn.forward(a, seg, a, seg, mask, cache ? &cache->attn : nullptr);
    const Matrix<T> b = ln2.forward(x1, cache ? &cache->ln2 : nullptr);
    x1 += ff.forward(b, cache ? &cache->ff : nullptr);
    if (cache != nullptr) {
      cache->recorded = true;
    }
    return x1;
  }

  Matrix<T> backward(const Matrix<T>& dy, const Cache& cache) {
    if (!cache.recorded) {
      throw ShapeError("encoder layer: backward without a recorded forward pass");
    }
    Matrix<T> dx1 = dy + ln2.backward(ff.backward(dy, cache.ff), cache.ln2);
    auto [dq, dkv] = attn.backward(dx1, cache.attn);
    dq += dkv;
    dx1 += ln1.backward(dq, cache.ln1);
    return dx1;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    ln1.visit(prefix + ".ln1", f);
    attn.visit(prefix + ".attn", f);
    ln2.visit(prefix + ".ln2", f);
    ff.visit(prefix + ".ff", f);
  }

  LayerNorm<T> ln1;
  MultiHeadAttention<T> attn;
  LayerNorm<T> ln2;
  FeedForward<T> ff;
};

/// Pre-norm cross-attention block. Queries are normalized; keys/values are
/// expected to be normalized by the caller.
template <typename T>
class DecoderLayer {
public:
  struct Cache {
    typename LayerNorm<T>::Cache ln1, ln2;
    typename MultiHeadAttention<T>::Cache attn;
    typename FeedForward<T>::Cache ff;
    bool recorded = false;
  };

  DecoderLayer() = default;
  DecoderLayer(int dim, int heads, int ff_dim) : ln1(dim), attn(dim, heads), ln2(dim), ff(dim, ff_dim) {}

  void init(Rng& rng) {
    attn.init(rng);
    ff.init(rng);
  }

  Matrix<T> forward(const Matrix<T>& xq, const Segments& qseg, const Matrix<T>& kv, const Segments& kseg,
                    const KeyMask& mask, Cache* cache) const {
    const Matrix<T> a = ln1.forward(xq, cache ? &cache->ln1 : nullptr);
    Matrix<T> x1 = xq + attn.forward(a, qseg, kv, kseg, mask, cache ? &cache->attn : nullptr);
    const Matrix<T> b = ln2.forward(x1, cache ? &cache->ln2 : nullptr);
    x1 += ff.forward(b, cache ? &cache->ff : nullptr);
    if (cache != nullptr) {
      cache->recorded = true;
    }
    return x1;
  }

  /// Returns (d queries, d keys/values).
  std::pair<Matrix<T>, Matrix<T>> backward(const Matrix<T>& dy, const Cache& cache) {
    if (!cache.recorded) {
      throw ShapeError("decoder layer: backward without a recorded forward pass");
    }
    Matrix<T> dx1 = dy + ln2.backward(ff.backward(dy, cache.ff), cache.ln2);
    auto [dq, dkv] = attn.backward(dx1, cache.attn);
    dx1 += ln1.backward(dq, cache.ln1);
    return {std::move(dx1), std::move(dkv)};
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    ln1.visit(prefix + ".ln1", f);
    attn.visit(prefix + ".attn", f);
    ln2.visit(prefix + ".ln2", f);
    ff.visit(prefix + ".ff", f);
  }

  LayerNorm<T> ln1;
  MultiHeadAttention<T> attn;
  LayerNorm<T> ln2;
  FeedForward<T> ff;
};

} // namespace skyplan::nn
