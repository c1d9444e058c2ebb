#include "skyplan/mesh.hpp"

#include <numeric>

namespace skyplan {

namespace {

constexpr std::uint32_t kLeafSize = 4;
constexpr int kBins = 12;
constexpr double kDegenerateArea = 1e-12;

Vec3 safe_inverse(const Vec3& d) {
  Vec3 inv;
  for (int a = 0; a < 3; ++a) {
    inv[a] = 1.0 / d[a]; // +-inf for zero components, handled by intersect_aabb
  }
  return inv;
}

} // namespace

Bvh::Bvh(std::span<const Vec3> vertices, std::span<const Triangle> triangles) {
  const auto n = static_cast<std::uint32_t>(triangles.size());
  prims_.resize(n);
  std::iota(prims_.begin(), prims_.end(), 0u);
  if (n == 0) {
    return;
  }
  std::vector<Aabb> boxes(n);
  std::vector<Vec3> centroids(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      boxes[i].expand(vertices[triangles[i][c]]);
    }
    centroids[i] = boxes[i].center();
  }
  nodes_.reserve(2 * n);
  build(boxes, centroids, 0, n);
}

std::uint32_t Bvh::build(std::vector<Aabb>& boxes, std::vector<Vec3>& centroids, std::uint32_t begin,
                         std::uint32_t end) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({});
  Aabb box;
  Aabb centroid_box;
  for (std::uint32_t i = begin; i < end; ++i) {
    box.expand(boxes[prims_[i]]);
    centroid_box.expand(centroids[prims_[i]]);
  }
  nodes_[index].box = box;
  const std::uint32_t count = end - begin;
  if (count <= kLeafSize) {
    nodes_[index].first = begin;
    nodes_[index].count = count;
    return index;
  }

  // binned SAH over the widest centroid axis
  const Vec3 ext = centroid_box.extent();
  int axis = 0;
  if (ext.y() > ext[axis]) {
    axis = 1;
  }
  if (ext.z() > ext[axis]) {
    axis = 2;
  }
  std::uint32_t mid = begin + count / 2;
  if (ext[axis] > 0.0) {
    std::array<Aabb, kBins> bin_box;
    std::array<std::uint32_t, kBins> bin_count{};
    const double scale = kBins / ext[axis];
    auto bin_of = [&](std::uint32_t prim) {
      const int b = static_cast<int>((centroids[prim][axis] - centroid_box.lo[axis]) * scale);
      return std::clamp(b, 0, kBins - 1);
    };
    for (std::uint32_t i = begin; i < end; ++i) {
      const int b = bin_of(prims_[i]);
      bin_box[b].expand(boxes[prims_[i]]);
      ++bin_count[b];
    }
    std::array<double, kBins - 1> cost{};
    Aabb left;
    std::uint32_t left_count = 0;
    for (int b = 0; b < kBins - 1; ++b) {
      left.expand(bin_box[b]);
      left_count += bin_count[b];
      cost[b] = left.surface_area() * left_count;
    }
    Aabb right;
    std::uint32_t right_count = 0;
    for (int b = kBins - 1; b > 0; --b) {
      right.expand(bin_box[b]);
      right_count += bin_count[b];
      cost[b - 1] += right.surface_area() * right_count;
    }
    const int best = static_cast<int>(std::min_element(cost.begin(), cost.end()) - cost.begin());
    auto split = std::partition(prims_.begin() + begin, prims_.begin() + end,
                                [&](std::uint32_t prim) { return bin_of(prim) <= best; });
    mid = static_cast<std::uint32_t>(split - prims_.begin());
    if (mid == begin || mid == end) {
      mid = begin + count / 2;
    }
  }
  if (ext[axis] <= 0.0 || mid == begin + count / 2) {
    std::nth_element(prims_.begin() + begin, prims_.begin() + mid, prims_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       if (centroids[a][axis] != centroids[b][axis]) {
                         return centroids[a][axis] < centroids[b][axis];
                       }
                       return a < b;
                     });
  }
  build(boxes, centroids, begin, mid);
  const std::uint32_t right_child = build(boxes, centroids, mid, end);
  nodes_[index].first = right_child;
  nodes_[index].count = 0;
  return index;
}

ProxyMesh::ProxyMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)) {
  triangles_.reserve(triangles.size());
  normals_.reserve(triangles.size());
  for (const Triangle& t : triangles) {
    for (std::uint32_t idx : t) {
      if (idx >= vertices_.size()) {
        throw InputError("triangle references vertex " + std::to_string(idx) + " but mesh has " +
                         std::to_string(vertices_.size()) + " vertices");
      }
    }
    const Vec3 n = (vertices_[t[1]] - vertices_[t[0]]).cross(vertices_[t[2]] - vertices_[t[0]]);
    const double twice_area = n.norm();
    if (!(0.5 * twice_area > kDegenerateArea)) {
      ++dropped_;
      continue;
    }
    triangles_.push_back(t);
    normals_.push_back(n / twice_area);
  }
  for (const Vec3& v : vertices_) {
    if (!v.allFinite()) {
      throw InputError("mesh contains a non-finite vertex");
    }
    bounds_.expand(v);
  }
  bvh_ = std::make_shared<const Bvh>(vertices_, triangles_);
}

double ProxyMesh::triangle_area(std::uint32_t tri) const {
  return 0.5 * (vertex(tri, 1) - vertex(tri, 0)).cross(vertex(tri, 2) - vertex(tri, 0)).norm();
}

double ProxyMesh::surface_area() const {
  double area = 0.0;
  for (std::uint32_t i = 0; i < triangles_.size(); ++i) {
    area += triangle_area(i);
  }
  return area;
}

std::optional<RayHit> ProxyMesh::raycast(const Vec3& origin, const Vec3& dir, double tmin,
                                         double tmax) const {
  if (triangles_.empty()) {
    return std::nullopt;
  }
  const auto nodes = bvh_->nodes();
  const auto prims = bvh_->primitives();
  const Vec3 inv = safe_inverse(dir);
  std::optional<RayHit> best;
  std::uint32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Bvh::Node& node = nodes[stack[--top]];
    if (!intersect_aabb(node.box, origin, inv, tmin, tmax)) {
      continue;
    }
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t tri = prims[i];
        if (auto t = intersect_triangle(origin, dir, vertex(tri, 0), vertex(tri, 1), vertex(tri, 2), tmin,
                                        tmax)) {
          if (!best || *t < best->t || (*t == best->t && tri < best->triangle)) {
            best = RayHit{*t, tri};
            tmax = *t;
          }
        }
      }
      continue;
    }
    const std::uint32_t left = static_cast<std::uint32_t>(&node - nodes.data()) + 1;
    const std::uint32_t right = node.first;
    // visit the nearer child first
    const auto tl = intersect_aabb(nodes[left].box, origin, inv, tmin, tmax);
    const auto tr = intersect_aabb(nodes[right].box, origin, inv, tmin, tmax);
    if (tl && tr) {
      if (*tl <= *tr) {
        stack[top++] = right;
        stack[top++] = left;
      } else {
        stack[top++] = left;
        stack[top++] = right;
      }
    } else if (tl) {
      stack[top++] = left;
    } else if (tr) {
      stack[top++] = right;
    }
  }
  return best;
}

bool ProxyMesh::occluded(const Vec3& origin, const Vec3& dir, double tmin, double tmax) const {
  if (triangles_.empty()) {
    return false;
  }
  const auto nodes = bvh_->nodes();
  const auto prims = bvh_->primitives();
  const Vec3 inv = safe_inverse(dir);
  std::uint32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const std::uint32_t idx = stack[--top];
    const Bvh::Node& node = nodes[idx];
    if (!intersect_aabb(node.box, origin, inv, tmin, tmax)) {
      continue;
    }
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t tri = prims[i];
        if (intersect_triangle(origin, dir, vertex(tri, 0), vertex(tri, 1), vertex(tri, 2), tmin, tmax)) {
          return true;
        }
      }
      continue;
    }
    stack[top++] = node.first;
    stack[top++] = idx + 1;
  }
  return false;
}

ClosestPoint ProxyMesh::closest_point(const Vec3& p) const {
  ClosestPoint best;
  best.distance = std::numeric_limits<double>::infinity();
  if (triangles_.empty()) {
    return best;
  }
  const auto nodes = bvh_->nodes();
  const auto prims = bvh_->primitives();
  double best_sq = std::numeric_limits<double>::infinity();
  struct Entry {
    std::uint32_t node;
    double dist_sq;
  };
  Entry stack[64];
  int top = 0;
  stack[top++] = {0, nodes[0].box.squared_distance(p)};
  while (top > 0) {
    const Entry e = stack[--top];
    if (e.dist_sq > best_sq) {
      continue;
    }
    const Bvh::Node& node = nodes[e.node];
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t tri = prims[i];
        const Vec3 q = closest_point_on_triangle(p, vertex(tri, 0), vertex(tri, 1), vertex(tri, 2));
        const double d = (q - p).squaredNorm();
        if (d < best_sq || (d == best_sq && tri < best.triangle)) {
          best_sq = d;
          best.point = q;
          best.triangle = tri;
        }
      }
      continue;
    }
    const std::uint32_t left = e.node + 1;
    const std::uint32_t right = node.first;
    const double dl = nodes[left].box.squared_distance(p);
    const double dr = nodes[right].box.squared_distance(p);
    // push the farther child first so the nearer one is popped next
    if (dl <= dr) {
      stack[top++] = {right, dr};
      stack[top++] = {left, dl};
    } else {
      stack[top++] = {left, dl};
      stack[top++] = {right, dr};
    }
  }
  best.distance = std::sqrt(best_sq);
  return best;
}

bool ProxyMesh::inside(const Vec3& p) const {
  const Vec3 up(0.0, 0.0, 1.0);
  const auto hit = raycast(p, up, 0.0, std::numeric_limits<double>::infinity());
  return hit && normals_[hit->triangle].dot(up) > 0.0;
}

ProxyMesh merge_meshes(const ProxyMesh& a, const ProxyMesh& b) {
  std::vector<Vec3> vertices(a.vertices().begin(), a.vertices().end());
  vertices.insert(vertices.end(), b.vertices().begin(), b.vertices().end());
  std::vector<Triangle> triangles(a.triangles().begin(), a.triangles().end());
  const auto offset = static_cast<std::uint32_t>(a.vertices().size());
  for (Triangle t : b.triangles()) {
    triangles.push_back({t[0] + offset, t[1] + offset, t[2] + offset});
  }
  return {std::move(vertices), std::move(triangles)};
}

} // namespace skyplan
