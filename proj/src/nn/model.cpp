#include "skyplan/nn/model.hpp"

#include "skyplan/geometry.hpp"

namespace skyplan::nn {

void ModelConfig::validate() const {
  const auto positive = [](int v, const char* name) {
    if (v <= 0) {
      throw InputError(std::string("model config: ") + name + " must be positive");
    }
  };
  positive(feature_dim, "feature_dim");
  positive(hidden, "hidden");
  positive(heads, "heads");
  positive(layers, "layers");
  positive(ff, "ff");
  positive(desc_dim, "desc_dim");
  positive(desc_heads, "desc_heads");
  positive(desc_ff, "desc_ff");
  if (hidden % heads != 0) {
    throw InputError("model config: hidden " + std::to_string(hidden) + " is not divisible by heads " +
                     std::to_string(heads));
  }
  if (desc_dim % desc_heads != 0) {
    throw InputError("model config: desc_dim " + std::to_string(desc_dim) + " is not divisible by desc_heads " +
                     std::to_string(desc_heads));
  }
}

std::string ModelConfig::first_difference(const ModelConfig& o) const {
  const std::pair<const char*, std::pair<int, int>> fields[] = {
      {"feature_dim", {feature_dim, o.feature_dim}}, {"hidden", {hidden, o.hidden}},
      {"heads", {heads, o.heads}},                   {"layers", {layers, o.layers}},
      {"ff", {ff, o.ff}},                            {"desc_dim", {desc_dim, o.desc_dim}},
      {"desc_heads", {desc_heads, o.desc_heads}},    {"desc_ff", {desc_ff, o.desc_ff}},
  };
  for (const auto& [name, values] : fields) {
    if (values.first != values.second) {
      return name;
    }
  }
  return {};
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"feature_dim", c.feature_dim}, {"hidden", c.hidden}, {"heads", c.heads},
       {"layers", c.layers},           {"ff", c.ff},         {"desc_dim", c.desc_dim},
       {"desc_heads", c.desc_heads},   {"desc_ff", c.desc_ff}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  const auto field = [&](const char* name, int& out) {
    if (!j.contains(name)) {
      throw InputError(std::string("model header: missing field '") + name + "'");
    }
    if (!j.at(name).is_number_integer()) {
      throw InputError(std::string("model header: field '") + name + "' is not an integer");
    }
    out = j.at(name).get<int>();
  };
  field("feature_dim", c.feature_dim);
  field("hidden", c.hidden);
  field("heads", c.heads);
  field("layers", c.layers);
  field("ff", c.ff);
  field("desc_dim", c.desc_dim);
  field("desc_heads", c.desc_heads);
  field("desc_ff", c.desc_ff);
}

} // namespace skyplan::nn
