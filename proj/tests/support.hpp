#pragma once

#include "skyplan/scene.hpp"

#include <filesystem>
#include <string>

namespace skytest {

using skyplan::ProxyMesh;
using skyplan::SurfaceSample;
using skyplan::Vec3;
using skyplan::Viewpoint;

/// Closed axis-aligned box with outward-facing triangles.
ProxyMesh box_mesh(const Vec3& lo, const Vec3& hi);
ProxyMesh unit_cube();
/// Square in the z = height plane, normal +Z, side `size` centred at the origin.
ProxyMesh plane_mesh(double size, double height = 0.0);

/// Visibility decided triangle by triangle with an independent ray/plane test.
bool brute_force_visible(const ProxyMesh& mesh, const Viewpoint& view, const SurfaceSample& sample);
/// First hit along origin + t dir, checking every triangle; negative when none.
double brute_force_raycast(const ProxyMesh& mesh, const Vec3& origin, const Vec3& dir, double tmin, double tmax);

/// Fresh empty directory under the system temp path.
std::filesystem::path scratch_dir(const std::string& name);

} // namespace skytest
