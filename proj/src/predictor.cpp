#include "skyplan/predictor.hpp"

#include "skyplan/parallel.hpp"

#include <cmath>

namespace skyplan {

std::string to_string(PredictorKind kind) {
  switch (kind) {
  case PredictorKind::heuristic:
    return "heuristic";
  case PredictorKind::visible_count:
    return "visible_count";
  case PredictorKind::oracle:
    return "oracle";
  case PredictorKind::learned_spatial:
    return "learned_spatial";
  case PredictorKind::learned_uncertainty:
    return "learned_uncertainty";
  }
  return "unknown";
}

PredictorKind predictor_kind_from_string(const std::string& name) {
  for (auto k : {PredictorKind::heuristic, PredictorKind::visible_count, PredictorKind::oracle,
                 PredictorKind::learned_spatial, PredictorKind::learned_uncertainty}) {
    if (to_string(k) == name) {
      return k;
    }
  }
  throw InputError("unknown predictor '" + name +
                   "' (expected heuristic, visible_count, oracle, learned_spatial or learned_uncertainty)");
}

void HeuristicParams::validate() const {
  if (!(k1 > 0.0) || !(k3 > 0.0)) {
    throw InputError("heuristic: k1 and k3 must be positive");
  }
  if (!(alpha1 > 0.0 && alpha1 < alpha3 && alpha3 < std::numbers::pi)) {
    throw InputError("heuristic: need 0 < alpha1 < alpha3 < pi");
  }
  if (!(d_max > 0.0)) {
    throw InputError("heuristic: d_max must be positive");
  }
}

void to_json(nlohmann::json& j, const HeuristicParams& p) {
  j = {{"k1", p.k1}, {"k3", p.k3}, {"alpha1", p.alpha1}, {"alpha3", p.alpha3}, {"d_max", p.d_max}};
}

void from_json(const nlohmann::json& j, HeuristicParams& p) {
  p.k1 = j.value("k1", p.k1);
  p.k3 = j.value("k3", p.k3);
  p.alpha1 = j.value("alpha1", p.alpha1);
  p.alpha3 = j.value("alpha3", p.alpha3);
  p.d_max = j.value("d_max", p.d_max);
  p.validate();
}

Vec3 entry_direction(const SurfaceSample& sample, const SpatialFeature& f) {
  const Vec3 x = tangent_axis(sample.normal);
  const Vec3 y = sample.normal.cross(x);
  const double c = std::cos(f.phi);
  return c * std::cos(f.omega) * x + c * std::sin(f.omega) * y + std::sin(f.phi) * sample.normal;
}

PointPrediction heuristic_score(const PointInput& input, const HeuristicParams& p) {
  const auto& e = input.entries;
  std::vector<Vec3> dirs(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    // the local frame is orthonormal, so the frame itself is irrelevant for angles
    const double c = std::cos(e[i].feature.phi);
    dirs[i] = Vec3(c * std::cos(e[i].feature.omega), c * std::sin(e[i].feature.omega), std::sin(e[i].feature.phi));
  }
  double score = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      const double psi = std::acos(std::clamp(dirs[i].dot(dirs[j]), -1.0, 1.0));
      const double w1 = 1.0 / (1.0 + std::exp(-p.k1 * (psi - p.alpha1)));
      const double w2 = 1.0 - std::min(std::max(e[i].feature.d, e[j].feature.d) / p.d_max, 1.0);
      const double w3 = 1.0 - 1.0 / (1.0 + std::exp(p.k3 * (psi - p.alpha3)));
      const double theta = std::max(e[i].feature.alpha, e[j].feature.alpha);
      score += w1 * w2 * w3 * std::cos(theta);
    }
  }
  return {score, PredictorKind::heuristic};
}

PointPrediction visible_count_score(const PointInput& input) {
  return {static_cast<double>(input.entries.size()), PredictorKind::visible_count};
}

PointPrediction oracle_score(const PointInput& input) {
  std::vector<Vec3> centres;
  centres.reserve(input.entries.size());
  for (const PointEntry& e : input.entries) {
    centres.push_back(input.sample.position + e.feature.d * entry_direction(input.sample, e.feature));
  }
  return {oracle_terms(input.sample, centres).quality(), PredictorKind::oracle};
}

nn::Batch<float> pack_inputs(std::span<const PointInput> inputs, bool with_descriptors) {
  nn::Batch<float> b;
  b.segments.assign(1, 0);
  for (const PointInput& in : inputs) {
    b.segments.push_back(b.segments.back() + static_cast<int>(in.entries.size()));
  }
  const int rows = b.segments.back();
  b.features.resize(rows, static_cast<Eigen::Index>(kFeatureDim));
  if (with_descriptors) {
    b.descriptors.resize(rows, static_cast<Eigen::Index>(kDescriptorDim));
  }
  int r = 0;
  for (const PointInput& in : inputs) {
    for (const PointEntry& e : in.entries) {
      for (std::size_t c = 0; c < kFeatureDim; ++c) {
        b.features(r, static_cast<Eigen::Index>(c)) = e.encoded[c];
      }
      if (with_descriptors) {
        if (!e.descriptor) {
          throw InputError("uncertainty-aware prediction needs a descriptor on every view entry");
        }
        for (std::size_t c = 0; c < kDescriptorDim; ++c) {
          b.descriptors(r, static_cast<Eigen::Index>(c)) = (*e.descriptor)[c];
        }
      }
      ++r;
    }
  }
  return b;
}

std::vector<double> predict_learned(const LearnedModel& model, std::span<const PointInput> inputs,
                                    bool uncertainty_aware, std::size_t chunk) {
  if (uncertainty_aware) {
    for (const PointInput& in : inputs) {
      if (!in.has_descriptors()) {
        throw InputError("uncertainty-aware prediction needs a descriptor on every view entry");
      }
    }
  }
  chunk = std::max<std::size_t>(chunk, 1);
  std::vector<double> out(inputs.size());
  const std::size_t chunks = (inputs.size() + chunk - 1) / chunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(inputs.size(), begin + chunk);
    const auto part = inputs.subspan(begin, end - begin);
    const auto res = model.forward(pack_inputs(part, uncertainty_aware), uncertainty_aware, nullptr);
    const auto& head = uncertainty_aware ? res.uncertainty : res.spatial;
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = std::max(0.0, std::expm1(static_cast<double>(head(static_cast<Eigen::Index>(i - begin), 0))));
    }
  });
  return out;
}

PointPrediction predict_spatial(const LearnedModel& model, const PointInput& input) {
  return {predict_learned(model, std::span(&input, 1), false).front(), PredictorKind::learned_spatial};
}

PointPrediction predict_uncertainty_aware(const LearnedModel& model, const PointInput& input) {
  return {predict_learned(model, std::span(&input, 1), true).front(), PredictorKind::learned_uncertainty};
}

namespace {

class FunctionPredictor final : public Predictor {
public:
  using Fn = PointPrediction (*)(const PointInput&);
  FunctionPredictor(PredictorKind kind, Fn fn) : kind_(kind), fn_(fn) {}
  [[nodiscard]] PredictorKind kind() const override { return kind_; }
  [[nodiscard]] std::vector<double> predict(std::span<const PointInput> inputs) const override {
    std::vector<double> out(inputs.size());
    parallel_for(inputs.size(), [&](std::size_t i) { out[i] = fn_(inputs[i]).value; });
    return out;
  }

private:
  PredictorKind kind_;
  Fn fn_;
};

class HeuristicPredictor final : public Predictor {
public:
  explicit HeuristicPredictor(const HeuristicParams& p) : params_(p) { params_.validate(); }
  [[nodiscard]] PredictorKind kind() const override { return PredictorKind::heuristic; }
  [[nodiscard]] std::vector<double> predict(std::span<const PointInput> inputs) const override {
    std::vector<double> out(inputs.size());
    parallel_for(inputs.size(), [&](std::size_t i) { out[i] = heuristic_score(inputs[i], params_).value; });
    return out;
  }

private:
  HeuristicParams params_;
};

class LearnedPredictor final : public Predictor {
public:
  LearnedPredictor(std::shared_ptr<const LearnedModel> model, bool uncertainty)
      : model_(std::move(model)), uncertainty_(uncertainty) {
    if (!model_) {
      throw InputError("learned predictor needs a loaded checkpoint");
    }
  }
  [[nodiscard]] PredictorKind kind() const override {
    return uncertainty_ ? PredictorKind::learned_uncertainty : PredictorKind::learned_spatial;
  }
  [[nodiscard]] bool needs_descriptors() const override { return uncertainty_; }
  [[nodiscard]] std::vector<double> predict(std::span<const PointInput> inputs) const override {
    return predict_learned(*model_, inputs, uncertainty_);
  }

private:
  std::shared_ptr<const LearnedModel> model_;
  bool uncertainty_;
};

} // namespace

std::unique_ptr<Predictor> make_heuristic_predictor(const HeuristicParams& params) {
  return std::make_unique<HeuristicPredictor>(params);
}

std::unique_ptr<Predictor> make_visible_count_predictor() {
  return std::make_unique<FunctionPredictor>(PredictorKind::visible_count, &visible_count_score);
}

std::unique_ptr<Predictor> make_oracle_predictor() {
  return std::make_unique<FunctionPredictor>(PredictorKind::oracle, &oracle_score);
}

std::unique_ptr<Predictor> make_learned_predictor(std::shared_ptr<const LearnedModel> model, bool uncertainty_aware) {
  return std::make_unique<LearnedPredictor>(std::move(model), uncertainty_aware);
}

} // namespace skyplan
