#include "skyplan/eval.hpp"
#include "skyplan/parallel.hpp"
#include "skyplan/spatial_index.hpp"

#include <numeric>

namespace skyplan {

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) {
      ++j;
    }
    const double r = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t k = i; k < j; ++k) {
      ranks[order[k]] = r;
    }
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InputError("spearman: length mismatch (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                     ")");
  }
  if (a.size() < 2) {
    throw InputError("spearman: need at least two values");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) {
      throw InputError("spearman: non-finite value");
    }
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0; // average ranks always sum to n(n+1)/2
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw InputError("spearman: undefined for constant input (zero rank variance)");
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

const std::vector<double>& default_percents() {
  static const std::vector<double> p = {70.0, 80.0, 90.0, 95.0};
  return p;
}

const std::vector<double>& default_completeness_thresholds() {
  static const std::vector<double> t = {0.02, 0.05, 0.075};
  return t;
}

double percentile(std::vector<double> d, double percent) {
  if (d.empty()) {
    throw InputError("percentile of an empty set");
  }
  if (!(percent > 0.0 && percent <= 100.0)) {
    throw InputError("percentile must lie in (0, 100]");
  }
  std::sort(d.begin(), d.end());
  // smallest y such that at least percent% of the distances are <= y
  const auto rank = static_cast<std::size_t>(std::ceil(percent / 100.0 * static_cast<double>(d.size()) - 1e-9));
  return d[std::clamp<std::size_t>(rank, 1, d.size()) - 1];
}

namespace {

std::vector<double> readout(std::vector<double> d, std::span<const double> percents) {
  std::sort(d.begin(), d.end());
  std::vector<double> out;
  for (double p : percents) {
    out.push_back(percentile(d, p));
  }
  return out;
}

std::vector<double> nearest_distances(std::span<const Vec3> from, std::span<const Vec3> to) {
  const KdTree tree(to);
  std::vector<double> d(from.size());
  parallel_for(from.size(), [&](std::size_t i) { d[i] = tree.nearest(from[i]).second; });
  return d;
}

} // namespace

std::vector<double> accuracy_at(std::span<const Vec3> recon, const ProxyMesh& gt, std::span<const double> percents) {
  if (recon.empty()) {
    throw InputError("accuracy: empty reconstruction");
  }
  if (gt.empty()) {
    throw InputError("accuracy: empty ground truth");
  }
  std::vector<double> d(recon.size());
  parallel_for(recon.size(), [&](std::size_t i) { d[i] = gt.closest_point(recon[i]).distance; });
  return readout(std::move(d), percents);
}

std::vector<double> completeness_at(std::span<const Vec3> gt_points, std::span<const Vec3> recon,
                                    std::span<const double> percents) {
  if (gt_points.empty() || recon.empty()) {
    throw InputError("completeness: empty point set");
  }
  return readout(nearest_distances(gt_points, recon), percents);
}

std::vector<double> completeness_within(std::span<const Vec3> gt_points, std::span<const Vec3> recon,
                                        std::span<const double> thresholds) {
  if (gt_points.empty()) {
    throw InputError("completeness: empty ground-truth set");
  }
  std::vector<double> out(thresholds.size(), 0.0);
  if (recon.empty()) {
    return out;
  }
  const auto d = nearest_distances(gt_points, recon);
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    const auto hits = std::count_if(d.begin(), d.end(), [&](double v) { return v <= thresholds[t]; });
    out[t] = static_cast<double>(hits) / static_cast<double>(d.size());
  }
  return out;
}

FScore fscore(std::span<const Vec3> recon, std::span<const Vec3> gt_points, double threshold) {
  if (!(threshold > 0.0)) {
    throw InputError("fscore: threshold must be positive");
  }
  if (recon.empty() || gt_points.empty()) {
    throw InputError("fscore: empty point set");
  }
  const auto within = [&](std::span<const Vec3> from, std::span<const Vec3> to) {
    const auto d = nearest_distances(from, to);
    const auto hits = std::count_if(d.begin(), d.end(), [&](double v) { return v <= threshold; });
    return 100.0 * static_cast<double>(hits) / static_cast<double>(d.size());
  };
  FScore s;
  s.precision = within(recon, gt_points);
  s.recall = within(gt_points, recon);
  s.f = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

FScore fscore_against_mesh(std::span<const Vec3> recon, const ProxyMesh& gt, std::span<const Vec3> gt_points,
                           double threshold) {
  if (!(threshold > 0.0)) {
    throw InputError("fscore: threshold must be positive");
  }
  if (gt.empty() || gt_points.empty()) {
    throw InputError("fscore: empty ground truth");
  }
  FScore s;
  if (recon.empty()) {
    return s;
  }
  std::vector<char> close(recon.size());
  parallel_for(recon.size(), [&](std::size_t i) { close[i] = gt.closest_point(recon[i]).distance <= threshold; });
  s.precision = 100.0 * static_cast<double>(std::count(close.begin(), close.end(), 1)) /
                static_cast<double>(recon.size());
  const auto d = nearest_distances(gt_points, recon);
  s.recall = 100.0 * static_cast<double>(std::count_if(d.begin(), d.end(), [&](double v) { return v <= threshold; })) /
             static_cast<double>(d.size());
  s.f = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

SurfaceSample project_to_ground_truth(const ProxyMesh& gt, const SurfaceSample& proxy_sample) {
  const ClosestPoint c = gt.closest_point(proxy_sample.position);
  return {c.point, gt.normals()[c.triangle], c.triangle};
}

} // namespace skyplan
