#pragma once

// Minimal TOML subset parser for run configs and schema specs: tables
// ([a] / [a.b]), key = value pairs with strings, integers, floats,
// booleans and flat arrays, plus # comments. Errors carry line/column
// positions. Not supported: array-of-tables, inline tables, dates,
// multi-line strings.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace veritracer::toml {

struct ParseError : std::runtime_error {
  int line, column;
  ParseError(int l, int c, const std::string& msg)
      : std::runtime_error("TOML parse error at line " + std::to_string(l) +
                           ", column " + std::to_string(c) + ": " + msg),
        line(l),
        column(c) {}
};

class Value;
using Table = std::map<std::string, Value>;
using Array = std::vector<Value>;

class Value {
 public:
  using Storage = std::variant<std::monostate, std::string, std::int64_t, double, bool,
                               Array, Table>;

  Value() = default;
  explicit Value(Storage s) : storage_(std::move(s)) {}

  bool is_table() const { return std::holds_alternative<Table>(storage_); }
  bool is_array() const { return std::holds_alternative<Array>(storage_); }
  bool is_string() const { return std::holds_alternative<std::string>(storage_); }
  bool is_integer() const { return std::holds_alternative<std::int64_t>(storage_); }
  bool is_float() const { return std::holds_alternative<double>(storage_); }
  bool is_bool() const { return std::holds_alternative<bool>(storage_); }

  const Table& table() const { return expect<Table>("table"); }
  Table& table() {
    if (!is_table()) storage_ = Table{};
    return std::get<Table>(storage_);
  }
  const Array& array() const { return expect<Array>("array"); }
  const std::string& string() const { return expect<std::string>("string"); }
  std::int64_t integer() const { return expect<std::int64_t>("integer"); }
  bool boolean() const { return expect<bool>("boolean"); }
  double number() const {
    if (is_integer()) return static_cast<double>(std::get<std::int64_t>(storage_));
    return expect<double>("number");
  }

  const Value* find(const std::string& key) const {
    const Table& t = table();
    auto it = t.find(key);
    return it == t.end() ? nullptr : &it->second;
  }

 private:
  template <typename T>
  const T& expect(const char* what) const {
    if (!std::holds_alternative<T>(storage_))
      throw std::runtime_error(std::string("TOML value is not a ") + what);
    return std::get<T>(storage_);
  }

  Storage storage_;
};

namespace detail {

struct Cursor {
  const std::string& text;
  std::size_t pos = 0;
  int line = 1, col = 1;

  bool eof() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  char get() {
    char c = text[pos++];
    if (c == '\n') { ++line; col = 1; } else ++col;
    return c;
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line, col, msg); }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) get();
  }
  void skip_ws_and_comment() {
    skip_ws();
    if (!eof() && peek() == '#')
      while (!eof() && peek() != '\n') get();
  }
};

inline std::string parse_bare_or_quoted_key(Cursor& c) {
  c.skip_ws();
  if (c.eof()) c.fail("expected key");
  std::string key;
  if (c.peek() == '"') {
    c.get();
    while (!c.eof() && c.peek() != '"') key += c.get();
    if (c.eof()) c.fail("unterminated quoted key");
    c.get();
  } else {
    while (!c.eof() &&
           (std::isalnum(static_cast<unsigned char>(c.peek())) || c.peek() == '_' ||
            c.peek() == '-'))
      key += c.get();
    if (key.empty()) c.fail("expected key");
  }
  return key;
}

Value parse_value(Cursor& c);

inline Value parse_scalar(Cursor& c) {
  c.skip_ws();
  if (c.eof()) c.fail("expected value");
  if (c.peek() == '"') {
    c.get();
    std::string s;
    while (!c.eof() && c.peek() != '"') {
      char ch = c.get();
      if (ch == '\\') {
        if (c.eof()) c.fail("dangling escape");
        char e = c.get();
        switch (e) {
          case 'n': s += '\n'; break;
          case 't': s += '\t'; break;
          case '"': s += '"'; break;
          case '\\': s += '\\'; break;
          default: c.fail(std::string("unsupported escape \\") + e);
        }
      } else if (ch == '\n') {
        c.fail("newline in string");
      } else {
        s += ch;
      }
    }
    if (c.eof()) c.fail("unterminated string");
    c.get();
    return Value(Value::Storage(s));
  }
  std::string tok;
  while (!c.eof() && c.peek() != ',' && c.peek() != ']' && c.peek() != '\n' &&
         c.peek() != '#' && c.peek() != ' ' && c.peek() != '\t' && c.peek() != '\r')
    tok += c.get();
  if (tok == "true") return Value(Value::Storage(true));
  if (tok == "false") return Value(Value::Storage(false));
  if (tok.empty()) c.fail("expected value");
  const bool floaty = tok.find_first_of(".eEiInN") != std::string::npos;
  try {
    if (!floaty) {
      std::size_t used = 0;
      std::int64_t v = std::stoll(tok, &used);
      if (used == tok.size()) return Value(Value::Storage(v));
    }
    std::size_t used = 0;
    double v = std::stod(tok, &used);
    if (used == tok.size()) return Value(Value::Storage(v));
  } catch (...) {
  }
  c.fail("cannot parse value '" + tok + "'");
}

inline Value parse_value(Cursor& c) {
  c.skip_ws();
  if (c.eof()) c.fail("expected value");
  if (c.peek() == '[') {
    c.get();
    Array arr;
    c.skip_ws_and_comment();
    while (true) {
      c.skip_ws();
      while (!c.eof() && (c.peek() == '\n' || c.peek() == '\r')) { c.get(); c.skip_ws_and_comment(); }
      if (c.eof()) c.fail("unterminated array");
      if (c.peek() == ']') { c.get(); break; }
      arr.push_back(parse_value(c));
      c.skip_ws();
      while (!c.eof() && (c.peek() == '\n' || c.peek() == '\r')) { c.get(); c.skip_ws_and_comment(); }
      if (c.eof()) c.fail("unterminated array");
      if (c.peek() == ',') { c.get(); continue; }
      if (c.peek() == ']') { c.get(); break; }
      c.fail("expected ',' or ']' in array");
    }
    return Value(Value::Storage(arr));
  }
  return parse_scalar(c);
}

}  // namespace detail

inline Value parse(const std::string& text) {
  detail::Cursor c{text};
  Value root{Value::Storage(Table{})};
  Value* current = &root;

  while (!c.eof()) {
    c.skip_ws_and_comment();
    if (c.eof()) break;
    if (c.peek() == '\n' || c.peek() == '\r') { c.get(); continue; }

    if (c.peek() == '[') {
      c.get();
      if (!c.eof() && c.peek() == '[')
        c.fail("array-of-tables is not supported");
      std::vector<std::string> path;
      path.push_back(detail::parse_bare_or_quoted_key(c));
      c.skip_ws();
      while (!c.eof() && c.peek() == '.') {
        c.get();
        path.push_back(detail::parse_bare_or_quoted_key(c));
        c.skip_ws();
      }
      if (c.eof() || c.peek() != ']') c.fail("expected ']' after table name");
      c.get();
      current = &root;
      for (const auto& p : path) current = &current->table()[p];
      current->table();  // materialize
    } else {
      std::string key = detail::parse_bare_or_quoted_key(c);
      c.skip_ws();
      if (c.eof() || c.peek() != '=') c.fail("expected '=' after key '" + key + "'");
      c.get();
      Value v = detail::parse_value(c);
      if (current->table().count(key)) c.fail("duplicate key '" + key + "'");
      current->table()[key] = std::move(v);
    }
    c.skip_ws_and_comment();
    if (!c.eof() && c.peek() != '\n' && c.peek() != '\r')
      c.fail("unexpected trailing characters");
  }
  return root;
}

inline Value parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open TOML file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace veritracer::toml
