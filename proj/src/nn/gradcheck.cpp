#include "skyplan/nn/gradcheck.hpp"

#include "skyplan/rng.hpp"

namespace skyplan::nn {

namespace {

using Mat = Matrix<double>;

Batch<double> random_batch(Rng& rng, const ModelConfig& cfg) {
  // includes an empty record and a partially masked one
  const std::vector<int> sizes = {3, 0, 2, 4};
  Batch<double> b;
  b.segments = {0};
  for (int n : sizes) {
    b.segments.push_back(b.segments.back() + n);
  }
  const int rows = b.segments.back();
  b.features.resize(rows, cfg.feature_dim);
  b.descriptors.resize(rows, cfg.desc_dim);
  for (Eigen::Index i = 0; i < b.features.size(); ++i) {
    b.features.data()[i] = rng.uniform(-1.0, 1.0);
  }
  for (Eigen::Index i = 0; i < b.descriptors.size(); ++i) {
    b.descriptors.data()[i] = rng.uniform(-1.0, 1.0);
  }
  b.mask.assign(rows, 1);
  b.mask[b.segments[3] + 1] = 0;
  return b;
}

void append_signs(const Mat& pre, std::vector<std::uint8_t>& out) {
  for (Eigen::Index i = 0; i < pre.size(); ++i) {
    out.push_back(pre.data()[i] > 0.0 ? 1 : 0);
  }
}

// ReLU activation pattern of a recorded pass.
std::vector<std::uint8_t> relu_pattern(const Tape<double>& t) {
  std::vector<std::uint8_t> out;
  append_signs(t.embed_pre, out);
  for (const auto& layer : t.encoder) {
    append_signs(layer.ff.pre, out);
  }
  append_signs(t.spatial_head.pre, out);
  append_signs(t.desc_encoder.ff.pre, out);
  append_signs(t.decoder.ff.pre, out);
  append_signs(t.unc_head.pre, out);
  return out;
}

struct Objective {
  Mat ws, wu; // random weights on the two heads

  double operator()(const Model<double>& m, const Batch<double>& b, Tape<double>* tape) const {
    const Outputs<double> out = m.forward(b, true, tape);
    return out.spatial.cwiseProduct(ws).sum() + out.uncertainty.cwiseProduct(wu).sum();
  }
};

} // namespace

ModelConfig gradcheck_config() {
  ModelConfig c;
  c.hidden = 8;
  c.heads = 4;
  c.layers = 2;
  c.ff = 12;
  c.desc_dim = 8;
  c.desc_heads = 4;
  c.desc_ff = 12;
  return c;
}

double gradient_rel_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradcheckResult gradcheck_model(std::uint64_t seed, const ModelConfig& cfg, double h) {
  Rng rng(derive_seed(seed, 0x6C4E));
  Model<double> model(cfg);
  model.init(derive_seed(seed, 1));
  const Batch<double> batch = random_batch(rng, cfg);
  Objective obj;
  obj.ws.resize(batch.records(), 1);
  obj.wu.resize(batch.records(), 1);
  for (int i = 0; i < batch.records(); ++i) {
    obj.ws(i, 0) = rng.uniform(-1.0, 1.0);
    obj.wu(i, 0) = rng.uniform(-1.0, 1.0);
  }

  Tape<double> tape;
  model.zero_grad();
  (void)obj(model, batch, &tape);
  model.backward(obj.ws, obj.wu, tape);
  const auto base_pattern = relu_pattern(tape);

  GradcheckResult result;
  Tape<double> probe;
  const auto eval = [&](double& slot, double value) {
    const double saved = slot;
    slot = value;
    const double f = obj(model, batch, &probe);
    slot = saved;
    return std::make_pair(f, relu_pattern(probe) == base_pattern);
  };

  model.visit([&](const std::string& name, Param<double>& p) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& slot = p.value.data()[i];
      const double x0 = slot;
      double step = h;
      double numeric = 0.0;
      for (int attempt = 0; attempt < 5; ++attempt, step *= 0.1) {
        // Richardson: (4 D(h/2) - D(h)) / 3 cancels the h^2 term of the central difference
        const auto [fp, same_p] = eval(slot, x0 + step);
        const auto [fm, same_m] = eval(slot, x0 - step);
        const auto [fp2, same_p2] = eval(slot, x0 + 0.5 * step);
        const auto [fm2, same_m2] = eval(slot, x0 - 0.5 * step);
        const double coarse = (fp - fm) / (2.0 * step);
        const double fine = (fp2 - fm2) / step;
        numeric = (4.0 * fine - coarse) / 3.0;
        if (same_p && same_m && same_p2 && same_m2) {
          break;
        }
        if (attempt == 0) {
          ++result.refined;
        }
      }
      const double err = gradient_rel_error(p.grad.data()[i], numeric);
      if (err > result.max_rel_error || result.worst_parameter.empty()) {
        result.max_rel_error = err;
        result.worst_parameter = name + "[" + std::to_string(i) + "]";
      }
      ++result.checked;
    }
  });
  return result;
}

} // namespace skyplan::nn
