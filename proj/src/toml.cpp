#include "mclp/toml.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mclp/error.hpp"

namespace mclp {

namespace {

bool is_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
         c == '.';
}

std::string strip(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Removes a trailing comment, honoring quotes.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
    } else if (c == '"') {
      in_string = true;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

[[noreturn]] void fail(const std::string& context, const std::string& what) {
  throw ConfigError(context + ": " + what);
}

std::string parse_quoted(const std::string& text, const std::string& context,
                         std::size_t* pos) {
  std::string out;
  std::size_t i = *pos + 1;
  while (i < text.size() && text[i] != '"') {
    char c = text[i];
    if (c == '\\') {
      ++i;
      if (i >= text.size()) fail(context, "dangling escape in string");
      switch (text[i]) {
        case 'n': c = '\n'; break;
        case 't': c = '\t'; break;
        case '"': c = '"'; break;
        case '\\': c = '\\'; break;
        default:
          fail(context, std::string("unknown escape \\") + text[i]);
      }
    }
    out += c;
    ++i;
  }
  if (i >= text.size()) fail(context, "unterminated string");
  *pos = i + 1;
  return out;
}

TomlValue parse_scalar(const std::string& raw, const std::string& context) {
  TomlValue v;
  if (raw == "true" || raw == "false") {
    v.kind = TomlValue::Kind::boolean;
    v.bool_v = raw == "true";
    return v;
  }
  const bool looks_real =
      raw.find_first_of(".eE") != std::string::npos &&
      raw.find_first_not_of("+-0123456789.eE") == std::string::npos;
  char* end = nullptr;
  if (!looks_real) {
    const long long iv = std::strtoll(raw.c_str(), &end, 10);
    if (end == raw.c_str() + raw.size() && !raw.empty()) {
      v.kind = TomlValue::Kind::integer;
      v.int_v = iv;
      return v;
    }
  }
  const double dv = std::strtod(raw.c_str(), &end);
  if (end == raw.c_str() + raw.size() && !raw.empty()) {
    v.kind = TomlValue::Kind::real;
    v.real_v = dv;
    return v;
  }
  fail(context, "cannot parse value \"" + raw + "\"");
}

}  // namespace

std::string TomlValue::describe() const {
  switch (kind) {
    case Kind::integer: return "integer";
    case Kind::real: return "float";
    case Kind::boolean: return "bool";
    case Kind::text: return "string";
    case Kind::array: return "array";
  }
  return "?";
}

TomlValue parse_toml_value(const std::string& text,
                           const std::string& context) {
  const std::string raw = strip(text);
  if (raw.empty()) fail(context, "empty value");
  if (raw.front() == '"') {
    std::size_t pos = 0;
    TomlValue v;
    v.kind = TomlValue::Kind::text;
    v.text_v = parse_quoted(raw, context, &pos);
    if (strip(raw.substr(pos)) != "")
      fail(context, "trailing characters after string");
    return v;
  }
  if (raw.front() == '[') {
    if (raw.back() != ']') fail(context, "unterminated array");
    TomlValue v;
    v.kind = TomlValue::Kind::array;
    const std::string inner = strip(raw.substr(1, raw.size() - 2));
    if (inner.empty()) return v;
    // Split on commas outside quotes; nested arrays are not supported.
    std::string cur;
    bool in_string = false;
    for (std::size_t i = 0; i < inner.size(); ++i) {
      const char c = inner[i];
      if (in_string) {
        cur += c;
        if (c == '\\' && i + 1 < inner.size()) cur += inner[++i];
        else if (c == '"') in_string = false;
      } else if (c == '"') {
        cur += c;
        in_string = true;
      } else if (c == '[') {
        fail(context, "nested arrays are not supported");
      } else if (c == ',') {
        v.items.push_back(parse_toml_value(cur, context));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (strip(cur).empty()) fail(context, "trailing comma in array");
    v.items.push_back(parse_toml_value(cur, context));
    return v;
  }
  return parse_scalar(raw, context);
}

TomlDoc TomlDoc::parse(const std::string& text, const std::string& source) {
  TomlDoc doc;
  doc.source_ = source;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::set<std::string> seen_sections;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string context = source + ":" + std::to_string(line_no);
    line = strip(strip_comment(line));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.size() < 3 || line.back() != ']')
        fail(context, "malformed section header");
      if (line[1] == '[') fail(context, "arrays of tables are not supported");
      section = strip(line.substr(1, line.size() - 2));
      if (section.empty() ||
          !std::all_of(section.begin(), section.end(), is_key_char))
        fail(context, "bad section name \"" + section + "\"");
      if (!seen_sections.insert(section).second)
        fail(context, "section [" + section + "] reopened");
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(context, "expected key = value");
    const std::string key_part = strip(line.substr(0, eq));
    if (key_part.empty() ||
        !std::all_of(key_part.begin(), key_part.end(), is_key_char))
      fail(context, "bad key \"" + key_part + "\"");
    const std::string key =
        section.empty() ? key_part : section + "." + key_part;
    if (doc.entries_.count(key)) fail(context, "duplicate key " + key);
    doc.entries_[key] = parse_toml_value(line.substr(eq + 1), context);
    doc.order_.push_back(key);
  }
  return doc;
}

TomlDoc TomlDoc::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

bool TomlDoc::has(const std::string& key) const {
  return entries_.count(key) != 0;
}

const TomlValue& TomlDoc::at(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end())
    throw UsageError(source_ + ": key " + key + " absent");
  return it->second;
}

void TomlDoc::set_override(const std::string& key,
                           const std::string& literal) {
  if (key.empty() || !std::all_of(key.begin(), key.end(), is_key_char))
    throw ConfigError("override: bad key \"" + key + "\"");
  const bool fresh = entries_.count(key) == 0;
  TomlValue value;
  try {
    value = parse_toml_value(literal, "override " + key);
  } catch (const ConfigError&) {
    // Command-line overrides may pass bare strings without quotes.
    value.kind = TomlValue::Kind::text;
    value.text_v = literal;
  }
  entries_[key] = std::move(value);
  if (fresh) order_.push_back(key);
}

// ---- binder ----

const TomlValue* TomlBinder::take(const std::string& key) {
  if (!doc_.has(key)) return nullptr;
  consumed_.insert(key);
  return &doc_.at(key);
}

std::int64_t TomlBinder::get_int(const std::string& key,
                                 std::int64_t fallback) {
  const TomlValue* v = take(key);
  if (!v) return fallback;
  if (v->kind != TomlValue::Kind::integer)
    throw ConfigError(doc_.source() + ": " + key + " must be an integer, got " +
                      v->describe());
  return v->int_v;
}

double TomlBinder::get_real(const std::string& key, double fallback) {
  const TomlValue* v = take(key);
  if (!v) return fallback;
  if (v->kind == TomlValue::Kind::integer)
    return static_cast<double>(v->int_v);
  if (v->kind != TomlValue::Kind::real)
    throw ConfigError(doc_.source() + ": " + key + " must be a number, got " +
                      v->describe());
  return v->real_v;
}

bool TomlBinder::get_bool(const std::string& key, bool fallback) {
  const TomlValue* v = take(key);
  if (!v) return fallback;
  if (v->kind != TomlValue::Kind::boolean)
    throw ConfigError(doc_.source() + ": " + key + " must be a bool, got " +
                      v->describe());
  return v->bool_v;
}

std::string TomlBinder::get_text(const std::string& key,
                                 const std::string& fallback) {
  const TomlValue* v = take(key);
  if (!v) return fallback;
  if (v->kind != TomlValue::Kind::text)
    throw ConfigError(doc_.source() + ": " + key + " must be a string, got " +
                      v->describe());
  return v->text_v;
}

void TomlBinder::finish() const {
  for (const std::string& key : doc_.keys())
    if (!consumed_.count(key))
      throw ConfigError(doc_.source() + ": unknown setting \"" + key + "\"");
}

}  // namespace mclp
