#include "skyplan/parallel.hpp"
#include "skyplan/rng.hpp"
#include "skyplan/scene.hpp"

#include <numbers>

namespace skyplan {

namespace {

constexpr double kCoverageViews = 4.0;
constexpr double kBestParallaxDeg = 20.0;
constexpr double kParallaxSpreadDeg = 15.0;
constexpr double kResolutionScale = 40.0; // meters
constexpr double kFullRetentionQuality = 0.2;
constexpr double kSigmaFloor = 0.02;  // meters
constexpr double kSigmaSpan = 0.3;    // meters

} // namespace

OracleTerms oracle_terms(const SurfaceSample& sample, std::span<const Vec3> visible_positions) {
  OracleTerms terms;
  const auto n = static_cast<int>(visible_positions.size());
  terms.visible_count = n;
  terms.coverage = 1.0 - std::exp(-static_cast<double>(n) / kCoverageViews);
  if (n == 0) {
    return terms;
  }
  std::vector<Vec3> dirs(visible_positions.size());
  std::vector<double> dists(visible_positions.size());
  for (std::size_t i = 0; i < visible_positions.size(); ++i) {
    const Vec3 d = visible_positions[i] - sample.position;
    dists[i] = d.norm();
    dirs[i] = d / dists[i];
    terms.grazing = std::max(terms.grazing, std::max(0.0, sample.normal.dot(dirs[i])));
  }
  const double best = deg2rad(kBestParallaxDeg);
  const double spread = deg2rad(kParallaxSpreadDeg);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    for (std::size_t j = i + 1; j < dirs.size(); ++j) {
      const double psi = std::acos(std::clamp(dirs[i].dot(dirs[j]), -1.0, 1.0));
      const double w = std::exp(-(psi - best) * (psi - best) / (2.0 * spread * spread));
      terms.triangulation = std::max(terms.triangulation, w);
    }
  }
  // mean distance of the two closest views: adding a view never increases it
  std::vector<double> nearest = dists;
  std::sort(nearest.begin(), nearest.end());
  const double mean_dist = n >= 2 ? 0.5 * (nearest[0] + nearest[1]) : nearest[0];
  terms.resolution = std::exp(-mean_dist / kResolutionScale);
  return terms;
}

double oracle_quality(const ProxyMesh& gt, std::span<const Viewpoint> views, const SurfaceSample& sample) {
  std::vector<Vec3> positions;
  for (const Viewpoint& v : views) {
    if (visible(gt, v, sample)) {
      positions.push_back(v.position);
    }
  }
  return oracle_terms(sample, positions).quality();
}

// Quartic falloff: sigma(0) = 0.32 m and sigma(1) = 0.02 m, but the error
// shrinks fast enough over the reachable quality range that the accuracy
// projection with a 0.2 m radius still resolves it.
double reconstruction_sigma(double quality) {
  const double miss = 1.0 - std::clamp(quality, 0.0, 1.0);
  return kSigmaFloor + kSigmaSpan * miss * miss * miss * miss;
}

ReconCloud simulate_reconstruction(const ProxyMesh& gt, std::span<const Viewpoint> views, double density,
                                   std::uint64_t seed) {
  if (!(density > 0.0)) {
    throw InputError("reconstruction density must be positive");
  }
  ReconCloud cloud;
  if (views.empty() || gt.empty()) {
    return cloud;
  }
  const auto count = static_cast<std::size_t>(std::llround(gt.surface_area() * density));
  const auto candidates = sample_uniform(gt, count, derive_seed(seed, 1));
  struct Outcome {
    Vec3 point;
    double acc = -1.0;
  };
  std::vector<Outcome> outcome(candidates.size());
  parallel_for(candidates.size(), [&](std::size_t i) {
    const double q = oracle_quality(gt, views, candidates[i]);
    Rng rng(derive_seed(seed, 2, i));
    const double keep = std::min(1.0, q / kFullRetentionQuality);
    if (!(rng.uniform() < keep)) {
      return;
    }
    Vec3 dir(rng.normal(), rng.normal(), rng.normal());
    while (dir.squaredNorm() < 1e-12) {
      dir = Vec3(rng.normal(), rng.normal(), rng.normal());
    }
    dir.normalize();
    const double mag = std::abs(rng.normal(0.0, reconstruction_sigma(q)));
    outcome[i] = {candidates[i].position + mag * dir, mag};
  });
  for (const Outcome& o : outcome) {
    if (o.acc >= 0.0) {
      cloud.points.push_back(o.point);
      cloud.accuracy.push_back(o.acc);
    }
  }
  return cloud;
}

} // namespace skyplan
