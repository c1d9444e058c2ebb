#pragma once

#include "skyplan/scene.hpp"

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace skyplan {

/// Point-view spatial attributes. omega/phi/d are the spherical coordinates of
/// the view in the sample's tangent frame; alpha is the angle between the
/// normal and the direction to the view; beta the angle between the viewing
/// direction and the direction from the view to the sample.
struct SpatialFeature {
  double omega = 0.0;
  double phi = 0.0;
  double d = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
};

constexpr std::size_t kFeatureDim = 5;
constexpr std::size_t kDescriptorDim = 32;
constexpr std::size_t kDefaultKCap = 32;

using ViewDescriptor = std::array<float, kDescriptorDim>;

/// Tangent x-axis used as the azimuth reference for a given normal.
Vec3 tangent_axis(const Vec3& normal);

/// Throws InputError for coincident positions.
SpatialFeature point_view_feature(const SurfaceSample& sample, const Viewpoint& view);

/// Network-facing encoding: d / max_range, angles / pi.
std::array<float, kFeatureDim> normalize_feature(const SpatialFeature& f, double max_range);

struct PointEntry {
  std::uint32_t view_index = 0;
  SpatialFeature feature;
  std::array<float, kFeatureDim> encoded{};
  std::optional<ViewDescriptor> descriptor;
};

struct PointInput {
  SurfaceSample sample;
  std::vector<PointEntry> entries; // sorted by view index
  std::size_t k_cap = kDefaultKCap;

  [[nodiscard]] std::size_t size() const { return entries.size(); }
  /// One flag per slot; exactly the first size() slots are valid.
  [[nodiscard]] std::vector<bool> mask() const;
  [[nodiscard]] bool has_descriptors() const;
};

/// Supplies a per-view descriptor for (view index, sample).
using DescriptorProvider = std::function<ViewDescriptor(std::uint32_t view_index, const SurfaceSample&)>;

/// Gathers the views that see `sample` on `mesh`, keeps the k_cap most frontal
/// (smallest alpha, ties by index) and orders entries by view index.
PointInput assemble_point_input(const ProxyMesh& mesh, const SurfaceSample& sample, std::span<const Viewpoint> views,
                                const DescriptorProvider* descriptors, std::size_t k_cap = kDefaultKCap);

/// Same, from a precomputed list of visible view indices.
PointInput assemble_from_visible(const SurfaceSample& sample, std::span<const Viewpoint> views,
                                 std::span<const std::uint32_t> visible, const DescriptorProvider* descriptors,
                                 std::size_t k_cap = kDefaultKCap);

/// Stand-in for image features: encodes local proxy-vs-ground-truth
/// discrepancy, view distance and alpha, a procedural texture scalar, and
/// seeded hash noise.
ViewDescriptor synthetic_descriptor(const ProxyMesh& gt, const ProxyMesh& proxy, const Viewpoint& view,
                                    const SurfaceSample& sample, std::uint64_t seed);

/// Slot layout of synthetic_descriptor.
namespace descriptor_slot {
constexpr std::size_t discrepancy = 0;
constexpr std::size_t discrepancy_seen = 1; // discrepancy * cos(alpha)
constexpr std::size_t distance = 2;
constexpr std::size_t alpha = 3;
constexpr std::size_t texture = 4;
constexpr std::size_t first_noise = 5;
} // namespace descriptor_slot

/// Proxy-to-ground-truth distance along +-normal, clamped to [0, 2] m.
double normal_discrepancy(const ProxyMesh& gt, const SurfaceSample& sample);

} // namespace skyplan
