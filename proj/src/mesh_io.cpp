#include "skyplan/mesh.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace skyplan {

namespace {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

ProxyMesh load_obj(std::istream& in, const std::filesystem::path& path) {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) {
      continue;
    }
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) {
        throw InputError(path.string() + ":" + std::to_string(line_no) + ": malformed vertex");
      }
      vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<std::uint32_t> poly;
      std::string token;
      while (ls >> token) {
        // v, v/vt, v//vn, v/vt/vn
        const long idx = std::stol(token.substr(0, token.find('/')));
        long resolved = idx > 0 ? idx - 1 : static_cast<long>(vertices.size()) + idx;
        if (idx == 0 || resolved < 0) {
          throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad face index");
        }
        poly.push_back(static_cast<std::uint32_t>(resolved));
      }
      if (poly.size() < 3) {
        throw InputError(path.string() + ":" + std::to_string(line_no) + ": face with fewer than 3 vertices");
      }
      for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
        triangles.push_back({poly[0], poly[i], poly[i + 1]});
      }
    }
  }
  return {std::move(vertices), std::move(triangles)};
}

std::size_t ply_type_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") {
    return 1;
  }
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") {
    return 2;
  }
  if (type == "int" || type == "uint" || type == "float" || type == "int32" || type == "uint32" ||
      type == "float32") {
    return 4;
  }
  if (type == "double" || type == "float64") {
    return 8;
  }
  throw InputError("unsupported PLY property type '" + type + "'");
}

double ply_read_scalar(const char* p, const std::string& type) {
  auto rd = [p]<typename T>(T) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
  };
  if (type == "char" || type == "int8") return rd(std::int8_t{});
  if (type == "uchar" || type == "uint8") return rd(std::uint8_t{});
  if (type == "short" || type == "int16") return rd(std::int16_t{});
  if (type == "ushort" || type == "uint16") return rd(std::uint16_t{});
  if (type == "int" || type == "int32") return rd(std::int32_t{});
  if (type == "uint" || type == "uint32") return rd(std::uint32_t{});
  if (type == "float" || type == "float32") return rd(float{});
  return rd(double{});
}

struct PlyProperty {
  std::string name;
  std::string type;
  bool is_list = false;
  std::string count_type;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

ProxyMesh load_ply(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) {
    throw InputError(path.string() + ": missing PLY magic");
  }
  std::vector<PlyElement> elements;
  bool binary_le = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (tag == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (tag == "property") {
      if (elements.empty()) {
        throw InputError(path.string() + ": PLY property before element");
      }
      PlyProperty p;
      std::string type;
      ls >> type;
      if (type == "list") {
        p.is_list = true;
        ls >> p.count_type >> p.type >> p.name;
      } else {
        p.type = type;
        ls >> p.name;
      }
      elements.back().props.push_back(p);
    } else if (tag == "end_header") {
      break;
    }
  }
  if (!binary_le) {
    throw InputError(path.string() + ": only binary_little_endian PLY is supported");
  }

  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<char> buf(8);
  for (const PlyElement& e : elements) {
    for (std::size_t i = 0; i < e.count; ++i) {
      Vec3 v = Vec3::Zero();
      for (const PlyProperty& p : e.props) {
        if (p.is_list) {
          const std::size_t cs = ply_type_size(p.count_type);
          if (!in.read(buf.data(), static_cast<std::streamsize>(cs))) {
            throw InputError(path.string() + ": truncated PLY body");
          }
          const auto n = static_cast<std::size_t>(ply_read_scalar(buf.data(), p.count_type));
          const std::size_t is = ply_type_size(p.type);
          std::vector<std::uint32_t> poly(n);
          for (std::size_t k = 0; k < n; ++k) {
            if (!in.read(buf.data(), static_cast<std::streamsize>(is))) {
              throw InputError(path.string() + ": truncated PLY body");
            }
            poly[k] = static_cast<std::uint32_t>(ply_read_scalar(buf.data(), p.type));
          }
          if (e.name == "face" && (p.name == "vertex_indices" || p.name == "vertex_index")) {
            for (std::size_t k = 1; k + 1 < n; ++k) {
              triangles.push_back({poly[0], poly[k], poly[k + 1]});
            }
          }
        } else {
          const std::size_t s = ply_type_size(p.type);
          if (!in.read(buf.data(), static_cast<std::streamsize>(s))) {
            throw InputError(path.string() + ": truncated PLY body");
          }
          if (e.name == "vertex") {
            const double value = ply_read_scalar(buf.data(), p.type);
            if (p.name == "x") v.x() = value;
            if (p.name == "y") v.y() = value;
            if (p.name == "z") v.z() = value;
          }
        }
      }
      if (e.name == "vertex") {
        vertices.push_back(v);
      }
    }
  }
  return {std::move(vertices), std::move(triangles)};
}

} // namespace

ProxyMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open mesh file " + path.string());
  }
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".obj") {
    return load_obj(in, path);
  }
  if (ext == ".ply") {
    return load_ply(in, path);
  }
  throw InputError("unsupported mesh format: " + path.string());
}

void save_obj(const ProxyMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << std::setprecision(17);
  for (const Vec3& v : mesh.vertices()) {
    out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  }
  for (const Triangle& t : mesh.triangles()) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
}

void save_ply(const ProxyMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << mesh.vertices().size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "element face " << mesh.triangles().size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  for (const Vec3& v : mesh.vertices()) {
    const float xyz[3] = {static_cast<float>(v.x()), static_cast<float>(v.y()), static_cast<float>(v.z())};
    out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
  }
  for (const Triangle& t : mesh.triangles()) {
    const std::uint8_t n = 3;
    out.write(reinterpret_cast<const char*>(&n), 1);
    const std::int32_t idx[3] = {static_cast<std::int32_t>(t[0]), static_cast<std::int32_t>(t[1]),
                                 static_cast<std::int32_t>(t[2])};
    out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
  }
}

} // namespace skyplan
