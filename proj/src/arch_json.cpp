#include "accpred/arch_json.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace accpred {

using nlohmann::json;

namespace json_field {

const json& require(const json& obj, const char* key) {
  if (!obj.is_object()) throw Error(ErrorCode::ParseError, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
  return *it;
}

std::int64_t integer(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_number_integer())
    throw Error(ErrorCode::ParseError, std::string("field '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

double number(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_number()) throw Error(ErrorCode::ParseError, std::string("field '") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw Error(ErrorCode::ParseError, std::string("field '") + key + "' is not finite");
  return d;
}

std::string string(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_string()) throw Error(ErrorCode::ParseError, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

bool boolean(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_boolean()) throw Error(ErrorCode::ParseError, std::string("field '") + key + "' must be a boolean");
  return v.get<bool>();
}

void expect_keys(const json& obj, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw Error(ErrorCode::ParseError, "expected an object");
  for (const char* k : keys) require(obj, k);
  if (obj.size() != keys.size()) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known) throw Error(ErrorCode::ParseError, "unexpected field '" + it.key() + "'");
    }
  }
}

void expect_version(const json& obj) {
  if (integer(obj, "v") != kSchemaVersion) {
    throw Error(ErrorCode::ParseError, "unsupported schema version " + require(obj, "v").dump());
  }
}

}  // namespace json_field

namespace {

using namespace json_field;

int small_int(const json& obj, const char* key) {
  const auto v = integer(obj, key);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw Error(ErrorCode::ParseError, std::string("field '") + key + "' out of range");
  return static_cast<int>(v);
}

Padding padding_from(const std::string& s) {
  if (s == "same") return Padding::Same;
  if (s == "valid") return Padding::Valid;
  throw Error(ErrorCode::ParseError, "unknown padding '" + s + "'");
}

PoolMode pool_mode_from(const std::string& s) {
  if (s == "max") return PoolMode::Max;
  if (s == "avg") return PoolMode::Avg;
  throw Error(ErrorCode::ParseError, "unknown pooling mode '" + s + "'");
}

}  // namespace

json layer_to_json(const LayerSpec& layer) {
  json j;
  j["kind"] = std::string(to_string(kind_of(layer)));
  std::visit(
      [&](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Convolution>) {
          j["kernel_size"] = l.kernel_size;
          j["stride"] = l.stride;
          j["padding"] = l.padding == Padding::Same ? "same" : "valid";
          j["out_channels"] = l.out_channels;
          j["batch_norm"] = l.batch_norm;
        } else if constexpr (std::is_same_v<T, Pooling>) {
          j["mode"] = l.mode == PoolMode::Max ? "max" : "avg";
          j["kernel_size"] = l.kernel_size;
          j["stride"] = l.stride;
        } else if constexpr (std::is_same_v<T, Dropout>) {
          j["rate"] = l.rate;
        } else if constexpr (std::is_same_v<T, ResidualBlock>) {
          j["kernel_size"] = l.kernel_size;
          j["stride"] = l.stride;
          j["out_channels"] = l.out_channels;
          j["repeat"] = l.repeat;
        } else if constexpr (std::is_same_v<T, SkipConnection>) {
          j["source_index"] = l.source_index;
        } else if constexpr (std::is_same_v<T, FullyConnected>) {
          j["units"] = l.units;
        }
      },
      layer);
  return j;
}

LayerSpec layer_from_json(const json& j) {
  const auto kind = layer_kind_from_string(string(j, "kind"));
  if (!kind) throw Error(ErrorCode::ParseError, "unknown layer kind " + j["kind"].dump());
  switch (*kind) {
    case LayerKind::Convolution:
      expect_keys(j, {"kind", "kernel_size", "stride", "padding", "out_channels", "batch_norm"});
      return Convolution{small_int(j, "kernel_size"), small_int(j, "stride"),
                         padding_from(string(j, "padding")), small_int(j, "out_channels"),
                         boolean(j, "batch_norm")};
    case LayerKind::Pooling:
      expect_keys(j, {"kind", "mode", "kernel_size", "stride"});
      return Pooling{pool_mode_from(string(j, "mode")), small_int(j, "kernel_size"),
                     small_int(j, "stride")};
    case LayerKind::BatchNorm:
      expect_keys(j, {"kind"});
      return BatchNorm{};
    case LayerKind::Dropout:
      expect_keys(j, {"kind", "rate"});
      return Dropout{number(j, "rate")};
    case LayerKind::ResidualBlock:
      expect_keys(j, {"kind", "kernel_size", "stride", "out_channels", "repeat"});
      return ResidualBlock{small_int(j, "kernel_size"), small_int(j, "stride"),
                           small_int(j, "out_channels"), small_int(j, "repeat")};
    case LayerKind::SkipConnection:
      expect_keys(j, {"kind", "source_index"});
      return SkipConnection{small_int(j, "source_index")};
    case LayerKind::FullyConnected:
      expect_keys(j, {"kind", "units"});
      return FullyConnected{small_int(j, "units")};
    case LayerKind::GlobalPooling:
      expect_keys(j, {"kind"});
      return GlobalPooling{};
  }
  throw Error(ErrorCode::ParseError, "unreachable layer kind");
}

json layers_to_json(const std::vector<LayerSpec>& layers) {
  json arr = json::array();
  for (const auto& l : layers) arr.push_back(layer_to_json(l));
  return arr;
}

std::vector<LayerSpec> layers_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, "'layers' must be an array");
  std::vector<LayerSpec> layers;
  layers.reserve(j.size());
  for (const auto& item : j) layers.push_back(layer_from_json(item));
  return layers;
}

json architecture_to_json(const ArchitectureSpec& arch) {
  json j;
  j["v"] = kSchemaVersion;
  j["num_classes"] = arch.num_classes;
  j["layers"] = layers_to_json(arch.layers);
  return j;
}

ArchitectureSpec architecture_from_json(const json& j) {
  expect_keys(j, {"v", "num_classes", "layers"});
  expect_version(j);
  ArchitectureSpec arch;
  arch.num_classes = small_int(j, "num_classes");
  arch.layers = layers_from_json(j["layers"]);
  return arch;
}

ArchitectureSpec read_architecture_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  ArchitectureSpec arch = architecture_from_json(j);
  validate(arch);
  return arch;
}

void write_architecture_file(const std::filesystem::path& path, const ArchitectureSpec& arch) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << architecture_to_json(arch).dump(2) << '\n';
}

json trace_to_json(const ShapeTrace& trace) {
  auto shape = [](TensorShape s) { return json::array({s.height, s.width, s.channels}); };
  json arr = json::array();
  for (const auto& t : trace.layers) {
    arr.push_back({{"input", shape(t.input)},
                   {"output", shape(t.output)},
                   {"params", t.cost.params},
                   {"flops", t.cost.flops},
                   {"memory_bytes", t.cost.memory_bytes},
                   {"cumulative_flops", t.cumulative_flops},
                   {"cumulative_memory_bytes", t.cumulative_memory_bytes},
                   {"depth", t.depth}});
  }
  return arr;
}

}  // namespace accpred
