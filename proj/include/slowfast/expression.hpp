#pragma once

// Scalar drift expressions in the variables x and y, e.g.
//   "sin(sqrt(abs(x)) + sqrt(abs(y)))"   or   "0.5*cos(sqrt(abs(x)) + abs(y))".
// Supported: numbers, pi, x, y, + - * / (and the middle dot), parentheses,
// sin cos sqrt abs.

#include <cctype>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <string_view>

#include "slowfast/errors.hpp"

namespace slowfast {

using ScalarFn = std::function<double(double, double)>;

namespace detail {

class ExpressionParser {
 public:
  explicit ExpressionParser(std::string_view src) : src_(src) {}

  ScalarFn parse() {
    ScalarFn e = parse_sum();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  ScalarFn parse_sum() {
    ScalarFn lhs = parse_product();
    for (;;) {
      skip_ws();
      if (accept('+')) {
        lhs = [a = lhs, b = parse_product()](double x, double y) { return a(x, y) + b(x, y); };
      } else if (accept('-')) {
        lhs = [a = lhs, b = parse_product()](double x, double y) { return a(x, y) - b(x, y); };
      } else {
        return lhs;
      }
    }
  }

  ScalarFn parse_product() {
    ScalarFn lhs = parse_unary();
    for (;;) {
      skip_ws();
      if (accept('*') || accept("\xc2\xb7")) {
        lhs = [a = lhs, b = parse_unary()](double x, double y) { return a(x, y) * b(x, y); };
      } else if (accept('/')) {
        lhs = [a = lhs, b = parse_unary()](double x, double y) { return a(x, y) / b(x, y); };
      } else {
        return lhs;
      }
    }
  }

  ScalarFn parse_unary() {
    skip_ws();
    if (accept('-')) return [a = parse_unary()](double x, double y) { return -a(x, y); };
    if (accept('+')) return parse_unary();
    return parse_primary();
  }

  ScalarFn parse_primary() {
    skip_ws();
    if (accept('(')) {
      ScalarFn inner = parse_sum();
      expect(')');
      return inner;
    }
    if (pos_ < src_.size() &&
        (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) {
      std::size_t used = 0;
      const double v = std::stod(std::string(src_.substr(pos_)), &used);
      pos_ += used;
      return [v](double, double) { return v; };
    }
    const std::string name = identifier();
    if (name == "x") return [](double x, double) { return x; };
    if (name == "y") return [](double, double y) { return y; };
    if (name == "pi") return [](double, double) { return std::numbers::pi; };
    double (*fn)(double) = nullptr;
    if (name == "sin") fn = [](double v) { return std::sin(v); };
    if (name == "cos") fn = [](double v) { return std::cos(v); };
    if (name == "sqrt") fn = [](double v) { return std::sqrt(v); };
    if (name == "abs") fn = [](double v) { return std::fabs(v); };
    if (fn == nullptr) fail("unknown identifier '" + name + "'");
    expect('(');
    ScalarFn arg = parse_sum();
    expect(')');
    return [fn, arg](double x, double y) { return fn(arg(x, y)); };
  }

  std::string identifier() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < src_.size() && std::isalpha(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    if (start == pos_) fail("expected a number, variable or function");
    return std::string(src_.substr(start, pos_ - start));
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool accept(std::string_view token) {
    skip_ws();
    if (src_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("drift expression \"" + std::string(src_) + "\": " + what + " at offset " +
                      std::to_string(pos_));
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline ScalarFn parse_expression(std::string_view src) {
  return detail::ExpressionParser(src).parse();
}

}  // namespace slowfast
