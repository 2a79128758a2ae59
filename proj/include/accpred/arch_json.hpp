#pragma once

#include <filesystem>

#include <json.hpp>

#include "accpred/archspace.hpp"
#include "accpred/shape.hpp"

namespace accpred {

inline constexpr int kSchemaVersion = 1;

/// {"kind": "...", <kind-specific fields named as in the structs>}
nlohmann::json layer_to_json(const LayerSpec& layer);
/// Strict: unknown kinds, missing or extra fields, and wrong types throw Error(ParseError).
LayerSpec layer_from_json(const nlohmann::json& j);

nlohmann::json layers_to_json(const std::vector<LayerSpec>& layers);
std::vector<LayerSpec> layers_from_json(const nlohmann::json& j);

/// {"v": 1, "num_classes": N, "layers": [...]}
nlohmann::json architecture_to_json(const ArchitectureSpec& arch);
ArchitectureSpec architecture_from_json(const nlohmann::json& j);

ArchitectureSpec read_architecture_file(const std::filesystem::path& path);
void write_architecture_file(const std::filesystem::path& path, const ArchitectureSpec& arch);

nlohmann::json trace_to_json(const ShapeTrace& trace);

/// Field accessors shared by the file loaders; all throw Error(ParseError).
namespace json_field {
const nlohmann::json& require(const nlohmann::json& obj, const char* key);
std::int64_t integer(const nlohmann::json& obj, const char* key);
double number(const nlohmann::json& obj, const char* key);
std::string string(const nlohmann::json& obj, const char* key);
bool boolean(const nlohmann::json& obj, const char* key);
void expect_keys(const nlohmann::json& obj, std::initializer_list<const char*> keys);
void expect_version(const nlohmann::json& obj);
}  // namespace json_field

}  // namespace accpred
