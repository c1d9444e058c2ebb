#pragma once

#include "skyplan/geometry.hpp"

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace skyplan {

/// Uniform hash grid over a point set for fixed-radius queries.
class PointGrid {
public:
  PointGrid(std::span<const Vec3> points, double cell_size);

  /// Indices of all points within `radius` of p (radius <= cell size visits 27 cells).
  void within(const Vec3& p, double radius, std::vector<std::uint32_t>& out) const;

private:
  using Key = std::uint64_t;
  [[nodiscard]] Key key_of(long x, long y, long z) const;
  [[nodiscard]] long cell(double v) const { return static_cast<long>(std::floor(v / cell_)); }

  std::span<const Vec3> points_;
  double cell_;
  std::unordered_map<Key, std::vector<std::uint32_t>> cells_;
};

/// Static 3-D kd-tree for nearest and k-nearest queries.
class KdTree {
public:
  explicit KdTree(std::span<const Vec3> points);

  [[nodiscard]] bool empty() const { return order_.empty(); }
  /// Index and distance of the closest point; ties broken by the smaller index.
  [[nodiscard]] std::pair<std::uint32_t, double> nearest(const Vec3& p) const;
  /// k nearest indices sorted by (distance, index).
  [[nodiscard]] std::vector<std::pair<std::uint32_t, double>> knn(const Vec3& p, std::size_t k) const;

private:
  struct Node {
    std::uint32_t begin, end;
    int axis; // -1 for leaves
    double split;
    std::uint32_t left, right;
  };
  std::uint32_t build(std::uint32_t begin, std::uint32_t end, int depth);

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

} // namespace skyplan
