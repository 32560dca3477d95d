#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ph::jsonio {

using nlohmann::json;

/// Calls `fn(where, record)` for every non-blank line; `where` is "name:line".
/// Lines that are not JSON objects raise SchemaError.
void for_each_record(std::istream& in, const std::string& source_name,
                     const std::function<void(const std::string& where, const json&)>& fn);

std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);
void append_jsonl(const std::filesystem::path& path, const json& record);

json read_json(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_json(const std::filesystem::path& path, const json& value);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// Typed field access that reports SchemaError with location and field name.
std::string require_string(const json& obj, const char* field, const std::string& where);
std::optional<std::string> optional_string(const json& obj, const char* field,
                                           const std::string& where);
std::vector<std::string> require_string_array(const json& obj, const char* field,
                                              const std::string& where, bool allow_empty);
const json& require_array(const json& obj, const char* field, const std::string& where);

/// First balanced {...} span in `text` that parses as a JSON object.
/// Surrounding prose and code fences are skipped.
std::optional<json> first_json_object(std::string_view text);

inline json opt(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace ph::jsonio
