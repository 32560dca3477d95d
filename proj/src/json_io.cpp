#include "persona_harness/json_io.hpp"

#include <fstream>
#include <sstream>

#include "persona_harness/errors.hpp"

namespace ph::jsonio {

void for_each_record(std::istream& in, const std::string& source_name,
                     const std::function<void(const std::string&, const json&)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError(where, "<record>", std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_object()) throw SchemaError(where, "<record>", "expected a JSON object");
    fn(where, record);
  }
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<json> out;
  for_each_record(in, path.filename().string(),
                  [&](const std::string&, const json& r) { out.push_back(r); });
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
  std::ostringstream os;
  for (const auto& r : records) os << r.dump() << '\n';
  write_text(path, os.str());
}

void append_jsonl(const std::filesystem::path& path, const json& record) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot append to " + path.string());
  out << record.dump() << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string(), "<document>", std::string("invalid JSON: ") + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& value) {
  write_text(path, value.dump(2) + "\n");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string require_string(const json& obj, const char* field, const std::string& where) {
  auto it = obj.find(field);
  if (it == obj.end()) throw SchemaError(where, field, "missing");
  if (!it->is_string()) throw SchemaError(where, field, "expected a string");
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* field,
                                           const std::string& where) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw SchemaError(where, field, "expected a string or null");
  return it->get<std::string>();
}

const json& require_array(const json& obj, const char* field, const std::string& where) {
  auto it = obj.find(field);
  if (it == obj.end()) throw SchemaError(where, field, "missing");
  if (!it->is_array()) throw SchemaError(where, field, "expected an array");
  return *it;
}

std::vector<std::string> require_string_array(const json& obj, const char* field,
                                              const std::string& where, bool allow_empty) {
  const json& arr = require_array(obj, field, where);
  if (!allow_empty && arr.empty()) throw SchemaError(where, field, "must not be empty");
  std::vector<std::string> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_string()) throw SchemaError(where, field, "expected an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::optional<json> first_json_object(std::string_view text) {
  for (std::size_t open = text.find('{'); open != std::string_view::npos; open = text.find('{', open + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}' && --depth == 0) {
        auto parsed = json::parse(text.substr(open, i - open + 1), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) return parsed;
        break;
      }
    }
  }
  return std::nullopt;
}

}  // namespace ph::jsonio
