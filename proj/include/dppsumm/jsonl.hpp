#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dppsumm/errors.hpp"

namespace dppsumm {

using json = nlohmann::json;

// Parses one JSON object per line; blank lines are skipped. Errors carry the
// 1-based line number so a bad record in a large file can be found.
inline std::vector<json> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open jsonl file: " + path.string());
  std::vector<json> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool blank = true;
    for (char c : line) {
      if (c != ' ' && c != '\t' && c != '\r') {
        blank = false;
        break;
      }
    }
    if (blank) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": malformed JSON line");
    }
    if (!j.is_object()) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": record is not a JSON object");
    }
    records.push_back(std::move(j));
  }
  return records;
}

// Writes records one per line. Keys are emitted in sorted order (nlohmann
// default), which keeps repeated runs byte-identical.
inline void store_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write jsonl file: " + path.string());
  for (const auto& r : records) {
    out << r.dump() << '\n';
  }
}

inline void append_jsonl(const std::filesystem::path& path, const json& record) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw ValidationError("cannot append to jsonl file: " + path.string());
  out << record.dump() << '\n';
}

// Fetches a required field, naming the record and field on failure.
template <typename T>
T require_field(const json& j, const char* field, const std::string& context) {
  auto it = j.find(field);
  if (it == j.end()) {
    throw ValidationError(context + ": missing field '" + field + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(context + ": field '" + field + "' has wrong type");
  }
}

}  // namespace dppsumm
