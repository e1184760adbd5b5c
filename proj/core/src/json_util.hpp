#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "json.hpp"
#include "shapdoor/common.hpp"

namespace shapdoor {

using json = nlohmann::json;

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::string& text, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

inline void write_json_file(const json& doc, const std::filesystem::path& path) {
  write_text_file(doc.dump(2) + "\n", path);
}

// Reads fields out of a JSON object and rejects keys nobody asked for.
// Call finish() after all reads.
class KeyChecker {
 public:
  KeyChecker(const json& obj, std::string context) : obj_(obj), context_(std::move(context)) {
    if (!obj_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
  }

  const std::string& context() const { return context_; }

  bool has(const std::string& key) {
    if (!obj_.contains(key)) return false;
    used_.insert(key);
    return true;
  }

  const json& object(const std::string& key) {
    if (!obj_.contains(key)) throw ConfigError(context_ + ": missing key '" + key + "'");
    used_.insert(key);
    return obj_.at(key);
  }

  template <typename T>
  T required(const std::string& key) {
    const json& v = object(key);
    try {
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(context_ + ": key '" + key + "' has the wrong type (" + e.what() + ")");
    }
  }

  template <typename T>
  T optional(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return required<T>(key);
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!used_.contains(it.key())) {
        throw ConfigError(context_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

 private:
  const json& obj_;
  std::string context_;
  std::set<std::string> used_;
};

}  // namespace shapdoor
