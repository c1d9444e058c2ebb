#include "skyplan/features.hpp"

#include "skyplan/rng.hpp"

#include <numbers>

namespace skyplan {

Vec3 tangent_axis(const Vec3& normal) {
  const Vec3 ref = std::abs(normal.dot(Vec3::UnitX())) > 0.99 ? Vec3::UnitY() : Vec3::UnitX();
  return (ref - ref.dot(normal) * normal).normalized();
}

SpatialFeature point_view_feature(const SurfaceSample& sample, const Viewpoint& view) {
  const Vec3 to_view = view.position - sample.position;
  const double d = to_view.norm();
  if (!(d > 0.0)) {
    throw InputError("point_view_feature: view and sample positions coincide");
  }
  const Vec3& n = sample.normal;
  const Vec3 x = tangent_axis(n);
  const Vec3 y = n.cross(x);
  const Vec3 u = to_view / d;
  SpatialFeature f;
  f.d = d;
  f.omega = std::atan2(u.dot(y), u.dot(x));
  f.alpha = std::acos(std::clamp(n.dot(u), -1.0, 1.0));
  f.phi = 0.5 * std::numbers::pi - f.alpha;
  f.beta = std::acos(std::clamp(view.direction.dot(-u), -1.0, 1.0));
  return f;
}

std::array<float, kFeatureDim> normalize_feature(const SpatialFeature& f, double max_range) {
  constexpr double inv_pi = 1.0 / std::numbers::pi;
  return {static_cast<float>(f.omega * inv_pi), static_cast<float>(f.phi * inv_pi),
          static_cast<float>(f.d / max_range), static_cast<float>(f.alpha * inv_pi),
          static_cast<float>(f.beta * inv_pi)};
}

std::vector<bool> PointInput::mask() const {
  std::vector<bool> m(std::max(k_cap, entries.size()), false);
  std::fill(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(entries.size()), true);
  return m;
}

bool PointInput::has_descriptors() const {
  return std::all_of(entries.begin(), entries.end(), [](const PointEntry& e) { return e.descriptor.has_value(); });
}

PointInput assemble_from_visible(const SurfaceSample& sample, std::span<const Viewpoint> views,
                                 std::span<const std::uint32_t> visible, const DescriptorProvider* descriptors,
                                 std::size_t k_cap) {
  if (k_cap == 0) {
    throw InputError("k_cap must be at least 1");
  }
  PointInput input;
  input.sample = sample;
  input.k_cap = k_cap;
  input.entries.reserve(visible.size());
  for (std::uint32_t idx : visible) {
    PointEntry e;
    e.view_index = idx;
    e.feature = point_view_feature(sample, views[idx]);
    e.encoded = normalize_feature(e.feature, views[idx].max_range);
    input.entries.push_back(e);
  }
  if (input.entries.size() > k_cap) {
    std::sort(input.entries.begin(), input.entries.end(), [](const PointEntry& a, const PointEntry& b) {
      if (a.feature.alpha != b.feature.alpha) {
        return a.feature.alpha < b.feature.alpha;
      }
      return a.view_index < b.view_index;
    });
    input.entries.resize(k_cap);
  }
  std::sort(input.entries.begin(), input.entries.end(),
            [](const PointEntry& a, const PointEntry& b) { return a.view_index < b.view_index; });
  if (descriptors != nullptr) {
    for (PointEntry& e : input.entries) {
      e.descriptor = (*descriptors)(e.view_index, sample);
    }
  }
  return input;
}

PointInput assemble_point_input(const ProxyMesh& mesh, const SurfaceSample& sample, std::span<const Viewpoint> views,
                                const DescriptorProvider* descriptors, std::size_t k_cap) {
  const auto vis = visible_views(mesh, views, sample);
  return assemble_from_visible(sample, views, vis, descriptors, k_cap);
}

double normal_discrepancy(const ProxyMesh& gt, const SurfaceSample& sample) {
  constexpr double kMax = 2.0;
  double best = kMax;
  for (double sign : {1.0, -1.0}) {
    if (auto hit = gt.raycast(sample.position, sign * sample.normal, -1e-6, kMax)) {
      best = std::min(best, std::abs(hit->t));
    }
  }
  return std::clamp(best, 0.0, kMax);
}

ViewDescriptor synthetic_descriptor(const ProxyMesh& gt, const ProxyMesh& proxy, const Viewpoint& view,
                                    const SurfaceSample& sample, std::uint64_t seed) {
  (void)proxy; // the sample already lives on the proxy
  namespace slot = descriptor_slot;
  ViewDescriptor out{};
  const double disc = normal_discrepancy(gt, sample);
  const SpatialFeature f = point_view_feature(sample, view);
  out[slot::discrepancy] = static_cast<float>(disc);
  out[slot::discrepancy_seen] = static_cast<float>(disc * std::cos(f.alpha));
  out[slot::distance] = static_cast<float>(f.d / view.max_range);
  out[slot::alpha] = static_cast<float>(f.alpha / std::numbers::pi);

  const auto cell = [](double v) { return static_cast<std::int64_t>(std::floor(v / 2.0)); };
  Rng texture(derive_seed(seed, 0x7E47, cell(sample.position.x()), cell(sample.position.y()),
                          cell(sample.position.z())));
  out[slot::texture] = static_cast<float>(texture.uniform());

  const auto q = [](double v) { return static_cast<std::int64_t>(std::llround(v * 1e4)); };
  Rng noise(derive_seed(seed, q(view.position.x()), q(view.position.y()), q(view.position.z()),
                        q(sample.position.x()), q(sample.position.y()), q(sample.position.z())));
  for (std::size_t i = slot::first_noise; i < kDescriptorDim; ++i) {
    out[i] = static_cast<float>(noise.uniform(-1.0, 1.0));
  }
  return out;
}

} // namespace skyplan
