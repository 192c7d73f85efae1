#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace mclp {

// Small TOML subset: [section] headers (dots allowed), key = value lines,
// # comments, and scalar values (integer, float, bool, quoted string) plus
// flat arrays of those. Enough for run configs, nothing more.
struct TomlValue {
  enum class Kind { integer, real, boolean, text, array };
  Kind kind = Kind::integer;
  std::int64_t int_v = 0;
  double real_v = 0.0;
  bool bool_v = false;
  std::string text_v;
  std::vector<TomlValue> items;

  std::string describe() const;
};

// Parses one value literal, e.g. "3", "0.7", "true", "\"adam\"", "[1, 2]".
TomlValue parse_toml_value(const std::string& text,
                           const std::string& context);

class TomlDoc {
 public:
  static TomlDoc parse(const std::string& text, const std::string& source);
  static TomlDoc parse_file(const std::string& path);

  bool has(const std::string& key) const;
  const TomlValue& at(const std::string& key) const;
  // Replaces or adds a dotted key, value given as a TOML literal.
  void set_override(const std::string& key, const std::string& literal);
  // Keys in first-seen order, overrides appended.
  const std::vector<std::string>& keys() const { return order_; }
  const std::string& source() const { return source_; }

 private:
  std::string source_;
  std::map<std::string, TomlValue> entries_;
  std::vector<std::string> order_;
};

// Typed access that tracks which keys were read. finish() rejects any key
// the binder never consumed, so misspelled settings fail loudly.
class TomlBinder {
 public:
  explicit TomlBinder(const TomlDoc& doc) : doc_(doc) {}

  std::int64_t get_int(const std::string& key, std::int64_t fallback);
  double get_real(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::string get_text(const std::string& key, const std::string& fallback);
  void finish() const;

 private:
  const TomlValue* take(const std::string& key);
  const TomlDoc& doc_;
  std::set<std::string> consumed_;
};

}  // namespace mclp
