// SPDX-License-Identifier: Apache-2.0
//
// Minimal TOML reader covering what the service config needs: [tables] with
// dotted names, [[arrays of tables]], bare/quoted keys, and string / integer
// / float / boolean / string-array values. Anything outside that subset is
// rejected with a line number.

#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dynasr/error.hpp"

namespace dynasr::minitoml {

struct Value {
  enum class Kind { Str, Int, Float, Bool, StrArray };
  Kind kind = Kind::Str;
  std::string str;
  int64_t integer = 0;
  double real = 0.0;
  bool boolean = false;
  std::vector<std::string> array;

  double as_number() const { return kind == Kind::Int ? static_cast<double>(integer) : real; }
};

struct Table {
  std::map<std::string, Value> entries;

  const Value* find(const std::string& key) const {
    auto it = entries.find(key);
    return it == entries.end() ? nullptr : &it->second;
  }
};

struct Document {
  std::map<std::string, Table> tables;                    // "" is the root table
  std::map<std::string, std::vector<Table>> table_arrays; // e.g. "models"

  const Table& table(const std::string& name) const {
    static const Table empty;
    auto it = tables.find(name);
    return it == tables.end() ? empty : it->second;
  }
};

namespace detail {

[[noreturn]] inline void fail(size_t line, const std::string& what) {
  raise(Err::BadConfig, "line " + std::to_string(line) + ": " + what);
}

inline void skip_ws(std::string_view& s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
}

inline std::string parse_basic_string(std::string_view& s, size_t line) {
  // opening quote already consumed
  std::string out;
  while (!s.empty()) {
    char c = s.front();
    s.remove_prefix(1);
    if (c == '"') return out;
    if (c == '\\') {
      if (s.empty()) fail(line, "dangling escape");
      char e = s.front();
      s.remove_prefix(1);
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default: fail(line, std::string("unsupported escape \\") + e);
      }
    } else {
      out += c;
    }
  }
  fail(line, "unterminated string");
}

inline std::string parse_key(std::string_view& s, size_t line) {
  skip_ws(s);
  if (s.empty()) fail(line, "expected key");
  if (s.front() == '"') {
    s.remove_prefix(1);
    return parse_basic_string(s, line);
  }
  size_t n = 0;
  while (n < s.size() &&
         (std::isalnum(static_cast<unsigned char>(s[n])) || s[n] == '_' || s[n] == '-'))
    ++n;
  if (n == 0) fail(line, "bad key");
  std::string key(s.substr(0, n));
  s.remove_prefix(n);
  return key;
}

inline Value parse_scalar(std::string_view token, size_t line) {
  Value v;
  if (token == "true" || token == "false") {
    v.kind = Value::Kind::Bool;
    v.boolean = token == "true";
    return v;
  }
  // numeric: allow sign, digits, one dot, exponent
  bool has_dot = false, has_exp = false, all_numeric = !token.empty();
  for (size_t i = 0; i < token.size() && all_numeric; ++i) {
    char c = token[i];
    if (std::isdigit(static_cast<unsigned char>(c))) continue;
    if ((c == '+' || c == '-') &&
        (i == 0 || token[i - 1] == 'e' || token[i - 1] == 'E'))
      continue;
    if (c == '.' && !has_dot) {
      has_dot = true;
      continue;
    }
    if ((c == 'e' || c == 'E') && !has_exp && i > 0) {
      has_exp = true;
      continue;
    }
    all_numeric = false;
  }
  if (!all_numeric) fail(line, "unrecognized value '" + std::string(token) + "'");
  if (has_dot || has_exp) {
    v.kind = Value::Kind::Float;
    v.real = std::stod(std::string(token));
  } else {
    v.kind = Value::Kind::Int;
    v.integer = std::stoll(std::string(token));
  }
  return v;
}

inline Value parse_value(std::string_view& s, size_t line) {
  skip_ws(s);
  if (s.empty()) fail(line, "expected value");
  Value v;
  if (s.front() == '"') {
    s.remove_prefix(1);
    v.kind = Value::Kind::Str;
    v.str = parse_basic_string(s, line);
    return v;
  }
  if (s.front() == '[') {
    s.remove_prefix(1);
    v.kind = Value::Kind::StrArray;
    skip_ws(s);
    while (!s.empty() && s.front() != ']') {
      skip_ws(s);
      if (s.empty() || s.front() != '"')
        fail(line, "arrays may contain strings only");
      s.remove_prefix(1);
      v.array.push_back(parse_basic_string(s, line));
      skip_ws(s);
      if (!s.empty() && s.front() == ',') {
        s.remove_prefix(1);
        skip_ws(s);
      }
    }
    if (s.empty()) fail(line, "unterminated array");
    s.remove_prefix(1);  // ']'
    return v;
  }
  size_t n = 0;
  while (n < s.size() && s[n] != ' ' && s[n] != '\t' && s[n] != '#') ++n;
  Value scalar = parse_scalar(s.substr(0, n), line);
  s.remove_prefix(n);
  return scalar;
}

inline std::string strip_comment(const std::string& raw) {
  bool in_str = false, esc = false;
  for (size_t i = 0; i < raw.size(); ++i) {
    char c = raw[i];
    if (esc) {
      esc = false;
      continue;
    }
    if (in_str && c == '\\') {
      esc = true;
      continue;
    }
    if (c == '"') in_str = !in_str;
    if (c == '#' && !in_str) return raw.substr(0, i);
  }
  return raw;
}

}  // namespace detail

inline Document parse(std::string_view text) {
  using namespace detail;
  Document doc;
  Table* current = &doc.tables[""];
  std::istringstream stream{std::string(text)};
  std::string raw;
  size_t line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    std::string stripped = strip_comment(raw);
    std::string_view s(stripped);
    skip_ws(s);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
      s.remove_suffix(1);
    if (s.empty()) continue;

    if (s.front() == '[') {
      const bool is_array = s.size() > 1 && s[1] == '[';
      const std::string_view close = is_array ? "]]" : "]";
      s.remove_prefix(is_array ? 2 : 1);
      const size_t end = s.find(close);
      if (end == std::string_view::npos) fail(line_no, "unterminated table header");
      std::string name(s.substr(0, end));
      if (name.empty()) fail(line_no, "empty table name");
      if (is_array) {
        doc.table_arrays[name].emplace_back();
        current = &doc.table_arrays[name].back();
      } else {
        current = &doc.tables[name];
      }
      continue;
    }

    std::string key = parse_key(s, line_no);
    skip_ws(s);
    if (s.empty() || s.front() != '=') fail(line_no, "expected '=' after key");
    s.remove_prefix(1);
    Value v = parse_value(s, line_no);
    skip_ws(s);
    if (!s.empty()) fail(line_no, "trailing characters after value");
    if (current->entries.count(key)) fail(line_no, "duplicate key '" + key + "'");
    current->entries.emplace(std::move(key), std::move(v));
  }
  return doc;
}

inline Document parse_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Err::BadConfig, "cannot open config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse(text);
}

// Typed accessors; `req_*` raise BadConfig when the key is missing.

inline std::string get_str(const Table& t, const std::string& key,
                           const std::string& fallback) {
  const Value* v = t.find(key);
  if (!v) return fallback;
  if (v->kind != Value::Kind::Str) raise(Err::BadConfig, key + " must be a string");
  return v->str;
}

inline std::string req_str(const Table& t, const std::string& key) {
  const Value* v = t.find(key);
  if (!v) raise(Err::BadConfig, "missing required key '" + key + "'");
  if (v->kind != Value::Kind::Str) raise(Err::BadConfig, key + " must be a string");
  return v->str;
}

inline double get_num(const Table& t, const std::string& key, double fallback) {
  const Value* v = t.find(key);
  if (!v) return fallback;
  if (v->kind != Value::Kind::Int && v->kind != Value::Kind::Float)
    raise(Err::BadConfig, key + " must be a number");
  return v->as_number();
}

inline double req_num(const Table& t, const std::string& key) {
  const Value* v = t.find(key);
  if (!v) raise(Err::BadConfig, "missing required key '" + key + "'");
  if (v->kind != Value::Kind::Int && v->kind != Value::Kind::Float)
    raise(Err::BadConfig, key + " must be a number");
  return v->as_number();
}

inline int64_t get_int(const Table& t, const std::string& key, int64_t fallback) {
  const Value* v = t.find(key);
  if (!v) return fallback;
  if (v->kind != Value::Kind::Int) raise(Err::BadConfig, key + " must be an integer");
  return v->integer;
}

inline bool get_bool(const Table& t, const std::string& key, bool fallback) {
  const Value* v = t.find(key);
  if (!v) return fallback;
  if (v->kind != Value::Kind::Bool) raise(Err::BadConfig, key + " must be a boolean");
  return v->boolean;
}

inline std::vector<std::string> get_str_array(const Table& t, const std::string& key) {
  const Value* v = t.find(key);
  if (!v) return {};
  if (v->kind != Value::Kind::StrArray)
    raise(Err::BadConfig, key + " must be an array of strings");
  return v->array;
}

}  // namespace dynasr::minitoml
