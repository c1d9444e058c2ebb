#include "skyplan/nn/gradcheck.hpp"
#include "skyplan/nn/optim.hpp"
#include "skyplan/rng.hpp"

#include <doctest.h>

using namespace skyplan;
using namespace skyplan::nn;

namespace {

template <typename T>
Matrix<T> random_matrix(Rng& rng, int rows, int cols) {
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<T>(rng.normal());
  }
  return m;
}

Batch<double> random_batch(Rng& rng, const std::vector<int>& sizes, int desc_dim) {
  Batch<double> b;
  int rows = 0;
  for (int n : sizes) {
    rows += n;
    b.segments.push_back(rows);
  }
  b.features = random_matrix<double>(rng, rows, 5);
  b.descriptors = random_matrix<double>(rng, rows, desc_dim);
  return b;
}

// Adapts a single layer to the module interface the optimizer expects.
template <typename T>
struct Single {
  Linear<T>& layer;
  template <typename F>
  void visit(F&& f) {
    layer.visit("layer", f);
  }
};

template <typename T>
void adam_step(Adam<T>& opt, Linear<T>& layer) {
  Single<T> m{layer};
  opt.step(m);
}

} // namespace

TEST_CASE("linear layer: identity, constant and a double-precision reference") {
  Linear<float> id(4, 4);
  id.weight.value.setIdentity();
  Rng rng(1);
  const Matrix<float> x = random_matrix<float>(rng, 3, 4);
  CHECK(id.forward(x, nullptr).isApprox(x));

  Linear<float> c(4, 2);
  c.bias.value << 1.5f, -2.0f;
  const Matrix<float> y = c.forward(x, nullptr);
  for (int r = 0; r < 3; ++r) {
    CHECK(y(r, 0) == 1.5f);
    CHECK(y(r, 1) == -2.0f);
  }

  Linear<float> l(7, 5);
  l.init(rng);
  const Matrix<float> in = random_matrix<float>(rng, 6, 7);
  const Matrix<float> out = l.forward(in, nullptr);
  for (int r = 0; r < 6; ++r) {
    for (int j = 0; j < 5; ++j) {
      double ref = l.bias.value(0, j);
      for (int k = 0; k < 7; ++k) {
        ref += static_cast<double>(in(r, k)) * static_cast<double>(l.weight.value(k, j));
      }
      CHECK(std::abs(out(r, j) - ref) <= 1e-5 * std::max(1.0, std::abs(ref)));
    }
  }
  CHECK_THROWS_AS(l.forward(random_matrix<float>(rng, 2, 3), nullptr), ShapeError);
}

TEST_CASE("attention over identical keys returns the shared value row") {
  Rng rng(2);
  MultiHeadAttention<double> att(8, 2);
  att.init(rng);
  const Matrix<double> q = random_matrix<double>(rng, 2, 8);
  Matrix<double> kv(5, 8);
  const Matrix<double> row = random_matrix<double>(rng, 1, 8);
  for (int i = 0; i < 5; ++i) {
    kv.row(i) = row.row(0);
  }
  const Matrix<double> y = att.forward(q, {0, 2}, kv, {0, 5}, {}, nullptr);
  // value projection of the shared row, then the output projection
  const Matrix<double> v = att.v.forward(row, nullptr);
  const Matrix<double> expect = att.o.forward(v, nullptr);
  for (int r = 0; r < 2; ++r) {
    CHECK((y.row(r) - expect.row(0)).norm() < 1e-12);
  }
}

TEST_CASE("attention is invariant to permuting key, value and mask slots together") {
  Rng rng(3);
  MultiHeadAttention<double> att(8, 4);
  att.init(rng);
  const Matrix<double> q = random_matrix<double>(rng, 1, 8);
  const Matrix<double> kv = random_matrix<double>(rng, 6, 8);
  KeyMask mask = {1, 1, 0, 1, 1, 0};
  const Matrix<double> y = att.forward(q, {0, 1}, kv, {0, 6}, mask, nullptr);
  std::vector<int> perm = {4, 2, 0, 5, 1, 3};
  Matrix<double> kv2(6, 8);
  KeyMask mask2(6);
  for (int i = 0; i < 6; ++i) {
    kv2.row(i) = kv.row(perm[i]);
    mask2[i] = mask[perm[i]];
  }
  const Matrix<double> y2 = att.forward(q, {0, 1}, kv2, {0, 6}, mask2, nullptr);
  CHECK((y - y2).cwiseAbs().maxCoeff() < 1e-6);

  KeyMask none(6, 0);
  const Matrix<double> z = att.forward(q, {0, 1}, kv, {0, 6}, none, nullptr);
  // fully masked row: zero attention output, so only the output bias remains
  CHECK((z.row(0) - att.o.bias.value.row(0)).norm() < 1e-12);
}

TEST_CASE("layer normalization gives zero-mean unit-variance rows before the affine part") {
  Rng rng(4);
  const Matrix<double> x = random_matrix<double>(rng, 10, 16) * 3.0;
  const Matrix<double> xh = LayerNorm<double>::normalize(x, nullptr);
  for (int r = 0; r < 10; ++r) {
    const double mean = xh.row(r).mean();
    const double var = (xh.row(r).array() - mean).square().mean();
    CHECK(std::abs(mean) <= 1e-6);
    CHECK(std::abs(var - 1.0) <= 1e-4);
  }
}

TEST_CASE("l1 loss values and subgradient") {
  Matrix<double> p(2, 2), t(2, 2);
  p << 1, 2, 3, 4;
  CHECK(l1_loss(p, p).loss == 0.0);
  CHECK(l1_loss(p, p).grad.cwiseAbs().maxCoeff() == 0.0);
  t << 2, 1, 4, 3;
  const auto r = l1_loss(p, t);
  CHECK(r.loss == 1.0);
  CHECK(r.grad(0, 0) == -0.25);
  CHECK(r.grad(0, 1) == 0.25);

  Rng rng(5);
  const Matrix<float> a = random_matrix<float>(rng, 7, 3);
  const Matrix<float> b = random_matrix<float>(rng, 7, 3);
  double ref = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    ref += std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]));
  }
  CHECK(std::abs(l1_loss(a, b).loss - ref / 21.0) < 1e-6);
  CHECK_THROWS_AS(l1_loss(a, Matrix<float>(2, 2)), ShapeError);
}

TEST_CASE("single linear layer under l1 loss has the sign closed-form gradient") {
  Rng rng(6);
  Linear<double> l(3, 1);
  l.init(rng);
  const Matrix<double> x = random_matrix<double>(rng, 5, 3);
  const Matrix<double> t = random_matrix<double>(rng, 5, 1);
  Linear<double>::Cache cache;
  const Matrix<double> y = l.forward(x, &cache);
  const auto loss = l1_loss(y, t);
  l.weight.zero_grad();
  l.bias.zero_grad();
  l.backward(loss.grad, cache);
  Matrix<double> gw = Matrix<double>::Zero(3, 1);
  double gb = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double s = y(i, 0) > t(i, 0) ? 1.0 : (y(i, 0) < t(i, 0) ? -1.0 : 0.0);
    gw += s / 5.0 * x.row(i).transpose();
    gb += s / 5.0;
  }
  CHECK((l.weight.grad - gw).norm() < 1e-12);
  CHECK(std::abs(l.bias.grad(0, 0) - gb) < 1e-12);
}

TEST_CASE("backward without a recorded forward pass is rejected") {
  Model<double> m(gradcheck_config());
  Tape<double> tape;
  CHECK_THROWS_AS(m.backward(Matrix<double>::Ones(1, 1), {}, tape), ShapeError);
}

TEST_CASE("adam: zero gradients and zero learning rate leave parameters unchanged") {
  Rng rng(7);
  Linear<float> l(4, 3);
  l.init(rng);
  const Matrix<float> w0 = l.weight.value;
  Adam<float> opt(AdamConfig{1e-3});
  adam_step(opt, l);
  CHECK(l.weight.value == w0);

  Adam<float> frozen(AdamConfig{0.0});
  l.weight.grad.setConstant(0.7f);
  adam_step(frozen, l);
  CHECK(l.weight.value == w0);
  CHECK(l.weight.grad.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("adam with a constant gradient steps against its sign") {
  Linear<double> l(2, 2);
  Adam<double> opt(AdamConfig{1e-2});
  Matrix<double> g(2, 2);
  g << 0.3, -2.0, 1e-3, -5e-4;
  for (int i = 0; i < 200; ++i) {
    const Matrix<double> before = l.weight.value;
    l.weight.grad = g;
    adam_step(opt, l);
    if (i > 100) {
      const Matrix<double> step = l.weight.value - before;
      for (int k = 0; k < 4; ++k) {
        CHECK(step.data()[k] * g.data()[k] < 0.0);
        CHECK(std::abs(std::abs(step.data()[k]) - 1e-2) < 1e-4);
      }
    }
  }
}

TEST_CASE("adam descends a quadratic bowl monotonically after step ten") {
  Linear<double> p(1, 4);
  p.weight.value << 3.0, -2.0, 1.0, 0.5;
  Adam<double> opt(AdamConfig{1e-3});
  double prev = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 300; ++step) {
    const double loss = 0.5 * p.weight.value.squaredNorm();
    if (step >= 10) {
      CHECK(loss < prev);
    }
    prev = loss;
    p.weight.grad = p.weight.value;
    adam_step(opt, p);
  }
}

TEST_CASE("model forward is bit-identical on repeat and invariant to entry order") {
  Model<double> m(gradcheck_config());
  m.init(11);
  Rng rng(12);
  const Batch<double> b = random_batch(rng, {3, 0, 5}, gradcheck_config().desc_dim);
  const Outputs<double> a = m.forward(b, true, nullptr);
  const Outputs<double> a2 = m.forward(b, true, nullptr);
  CHECK(a.spatial == a2.spatial);
  CHECK(a.uncertainty == a2.uncertainty);
  CHECK((a.spatial.array() >= 0).all());

  Batch<double> p = b;
  const std::vector<int> order = {2, 0, 1, 3, 7, 5, 4, 6};
  for (int i = 0; i < 8; ++i) {
    p.features.row(i) = b.features.row(order[i]);
    p.descriptors.row(i) = b.descriptors.row(order[i]);
  }
  const Outputs<double> c = m.forward(p, true, nullptr);
  CHECK((a.spatial - c.spatial).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((a.uncertainty - c.uncertainty).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("relative error helper") {
  CHECK(gradient_rel_error(1.0, 1.0) == 0.0);
  CHECK(gradient_rel_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(gradient_rel_error(1e-9, 0.0) == doctest::Approx(1e-3));
}

TEST_CASE("every parameter gradient matches central differences on five seeds") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const GradcheckResult r = gradcheck_model(seed);
    INFO("seed " << seed << " worst " << r.worst_parameter);
    CHECK(r.max_rel_error <= 1e-4);
    Model<double> m(gradcheck_config());
    CHECK(r.checked == m.parameter_count());
  }
}
