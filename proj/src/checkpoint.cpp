#include "skyplan/binary_io.hpp"
#include "skyplan/predictor.hpp"

#include <zlib.h>

#include <fstream>
#include <sstream>

namespace skyplan {

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open '" + path.string() + "' for reading");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, const std::string& data) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  }
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) {
    throw std::runtime_error("failed writing '" + path.string() + "'");
  }
}

std::uint32_t crc32_of(std::string_view data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < data.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(data.size() - pos, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data() + pos), n);
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

Checkpoint fresh_checkpoint(const nn::ModelConfig& cfg, std::uint64_t seed) {
  Checkpoint ckpt{LearnedModel(cfg), 0, nlohmann::json::object()};
  ckpt.model.init(seed);
  ckpt.meta["init_seed"] = seed;
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json tensors = nlohmann::json::array();
  ckpt.model.visit([&](const std::string& name, const nn::Param<float>& p) {
    tensors.push_back({{"name", name}, {"shape", {p.value.rows(), p.value.cols()}}});
  });
  const nlohmann::json header = {{"architecture", ckpt.model.config()},
                                 {"trained_phase", ckpt.trained_phase},
                                 {"meta", ckpt.meta},
                                 {"tensors", tensors}};
  ByteWriter w;
  w.bytes("SKPL");
  w.u32(kCheckpointVersion);
  w.str(header.dump());
  ckpt.model.visit([&](const std::string&, const nn::Param<float>& p) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      w.f32(p.value.data()[i]);
    }
  });
  w.u32(crc32_of(w.data()));
  write_file_bytes(path, w.data());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const nn::ModelConfig* expected) {
  if (!std::filesystem::exists(path)) {
    throw InputError("checkpoint '" + path.string() + "' does not exist");
  }
  const std::string data = read_file_bytes(path);
  const std::string what = "checkpoint '" + path.string() + "'";
  if (data.size() < 12 || data.compare(0, 4, "SKPL") != 0) {
    throw InputError(what + ": not a checkpoint (bad magic)");
  }
  const std::string_view body(data.data(), data.size() - 4);
  ByteReader tail(std::string_view(data).substr(data.size() - 4), what);
  if (crc32_of(body) != tail.u32()) {
    throw InputError(what + ": checksum mismatch (file truncated or corrupt)");
  }
  ByteReader r(body, what);
  (void)r.bytes(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw InputError(what + ": unsupported format version " + std::to_string(version) + " (expected " +
                     std::to_string(kCheckpointVersion) + ")");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(what + ": malformed header: " + e.what());
  }
  if (!header.contains("architecture")) {
    throw InputError(what + ": header lacks 'architecture'");
  }
  const auto cfg = header.at("architecture").get<nn::ModelConfig>();
  if (expected != nullptr) {
    const std::string field = expected->first_difference(cfg);
    if (!field.empty()) {
      const nlohmann::json have = cfg, want = *expected;
      throw InputError(what + ": architecture mismatch in field '" + field + "': checkpoint has " +
                       have.at(field).dump() + ", expected " + want.at(field).dump());
    }
  }
  cfg.validate();
  Checkpoint ckpt{LearnedModel(cfg), header.value("trained_phase", 0), header.value("meta", nlohmann::json::object())};
  const auto& table = header.at("tensors");
  std::size_t idx = 0;
  ckpt.model.visit([&](const std::string& name, nn::Param<float>& p) {
    if (idx >= table.size()) {
      throw InputError(what + ": missing tensor '" + name + "'");
    }
    const auto& entry = table.at(idx++);
    const auto stored = entry.at("name").get<std::string>();
    if (stored != name) {
      throw InputError(what + ": tensor '" + stored + "' found where '" + name + "' was expected");
    }
    const auto shape = entry.at("shape").get<std::vector<long>>();
    if (shape.size() != 2 || shape[0] != p.value.rows() || shape[1] != p.value.cols()) {
      throw InputError(what + ": tensor '" + name + "' has shape " + entry.at("shape").dump() + ", expected [" +
                       std::to_string(p.value.rows()) + "," + std::to_string(p.value.cols()) + "]");
    }
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      p.value.data()[i] = r.f32();
    }
  });
  if (idx != table.size() || r.remaining() != 0) {
    throw InputError(what + ": trailing tensors or bytes after the expected parameters");
  }
  return ckpt;
}

} // namespace skyplan
