#include "skyplan/spatial_index.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

namespace skyplan {

PointGrid::PointGrid(std::span<const Vec3> points, double cell_size) : points_(points), cell_(cell_size) {
  if (!(cell_size > 0.0)) {
    throw std::invalid_argument("PointGrid cell size must be positive");
  }
  for (std::uint32_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    cells_[key_of(cell(p.x()), cell(p.y()), cell(p.z()))].push_back(i);
  }
}

PointGrid::Key PointGrid::key_of(long x, long y, long z) const {
  const auto ux = static_cast<std::uint64_t>(x + (1L << 20)) & 0x1FFFFF;
  const auto uy = static_cast<std::uint64_t>(y + (1L << 20)) & 0x1FFFFF;
  const auto uz = static_cast<std::uint64_t>(z + (1L << 20)) & 0x1FFFFF;
  return (ux << 42) | (uy << 21) | uz;
}

void PointGrid::within(const Vec3& p, double radius, std::vector<std::uint32_t>& out) const {
  out.clear();
  const long reach = std::max(1L, static_cast<long>(std::ceil(radius / cell_)));
  const long cx = cell(p.x());
  const long cy = cell(p.y());
  const long cz = cell(p.z());
  const double r2 = radius * radius;
  for (long x = cx - reach; x <= cx + reach; ++x) {
    for (long y = cy - reach; y <= cy + reach; ++y) {
      for (long z = cz - reach; z <= cz + reach; ++z) {
        const auto it = cells_.find(key_of(x, y, z));
        if (it == cells_.end()) {
          continue;
        }
        for (std::uint32_t i : it->second) {
          if ((points_[i] - p).squaredNorm() <= r2) {
            out.push_back(i);
          }
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
}

namespace {
constexpr std::uint32_t kKdLeaf = 8;
}

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!order_.empty()) {
    nodes_.reserve(2 * points_.size() / kKdLeaf + 2);
    build(0, static_cast<std::uint32_t>(order_.size()), 0);
  }
}

std::uint32_t KdTree::build(std::uint32_t begin, std::uint32_t end, int depth) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({begin, end, -1, 0.0, 0, 0});
  if (end - begin <= kKdLeaf || depth > 40) {
    return index;
  }
  Aabb box;
  for (std::uint32_t i = begin; i < end; ++i) {
    box.expand(points_[order_[i]]);
  }
  const Vec3 ext = box.extent();
  int axis = 0;
  if (ext.y() > ext[axis]) axis = 1;
  if (ext.z() > ext[axis]) axis = 2;
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const std::uint32_t left = build(begin, mid, depth + 1);
  const std::uint32_t right = build(mid, end, depth + 1);
  nodes_[index].axis = axis;
  nodes_[index].split = split;
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

std::pair<std::uint32_t, double> KdTree::nearest(const Vec3& p) const {
  const auto r = knn(p, 1);
  if (r.empty()) {
    return {0, std::numeric_limits<double>::infinity()};
  }
  return r.front();
}

std::vector<std::pair<std::uint32_t, double>> KdTree::knn(const Vec3& p, std::size_t k) const {
  // max-heap on (squared distance, index)
  using Item = std::pair<double, std::uint32_t>;
  std::priority_queue<Item> heap;
  if (order_.empty() || k == 0) {
    return {};
  }
  auto bound = [&] { return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.top().first; };
  struct Pending {
    std::uint32_t node;
    double gap_sq;
  };
  std::vector<Pending> stack;
  stack.push_back({0, 0.0});
  while (!stack.empty()) {
    const Pending cur = stack.back();
    stack.pop_back();
    if (cur.gap_sq > bound()) {
      continue;
    }
    const Node& n = nodes_[cur.node];
    if (n.axis < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const std::uint32_t idx = order_[i];
        const Item item{(points_[idx] - p).squaredNorm(), idx};
        if (heap.size() < k) {
          heap.push(item);
        } else if (item < heap.top()) {
          heap.pop();
          heap.push(item);
        }
      }
      continue;
    }
    const double diff = p[n.axis] - n.split;
    const std::uint32_t near = diff < 0.0 ? n.left : n.right;
    const std::uint32_t far = diff < 0.0 ? n.right : n.left;
    stack.push_back({far, std::max(cur.gap_sq, diff * diff)});
    stack.push_back({near, cur.gap_sq});
  }
  std::vector<std::pair<std::uint32_t, double>> out(heap.size());
  for (std::size_t i = heap.size(); i-- > 0;) {
    out[i] = {heap.top().second, std::sqrt(heap.top().first)};
    heap.pop();
  }
  return out;
}

} // namespace skyplan
