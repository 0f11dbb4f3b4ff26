// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "liblab/poly.hpp"

namespace liblab {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

class PolyParser {
 public:
  explicit PolyParser(std::string_view src) {
    for (char ch : src)
      if (!std::isspace(static_cast<unsigned char>(ch))) s_.push_back(ch);
  }

  NCPoly parse() {
    if (s_.empty()) fail("empty expression");
    NCPoly p;
    double sign = 1.0;
    while (true) {
      p += sign * term();
      if (at_end()) break;
      char op = s_[pos_++];
      if (op != '+' && op != '-') fail(std::string("expected '+' or '-' between terms, got '") + op + "'");
      sign = op == '+' ? 1.0 : -1.0;
    }
    return p;
  }

 private:
  std::string s_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("poly parse error at offset " + std::to_string(pos_) + ": " + msg);
  }
  bool at_end() const { return pos_ >= s_.size(); }
  char peek() const { return at_end() ? '\0' : s_[pos_]; }
  void expect(char ch) {
    if (peek() != ch) fail(std::string("expected '") + ch + "'");
    ++pos_;
  }

  double number() {
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) fail("expected a number");
    pos_ += static_cast<std::size_t>(end - begin);
    return v;
  }

  // "a+bi", optionally parenthesized; a bare real "a" is accepted too.
  Complex literal() {
    bool paren = peek() == '(';
    if (paren) ++pos_;
    double re = number();
    double im = 0.0;
    if ((peek() == '+' || peek() == '-') && looks_like_imag()) {
      im = number();
      expect('i');
    }
    if (paren) expect(')');
    return {re, im};
  }

  // After the real part: is the following "(+|-)<number>i"?
  bool looks_like_imag() const {
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    std::strtod(begin, &end);
    return end != begin && *end == 'i' && !std::isalpha(static_cast<unsigned char>(end[1])) &&
           end[1] != '(';
  }

  NCPoly term() {
    NCPoly t(literal());
    while (peek() == '*') {
      ++pos_;
      t = t * atom();
    }
    return t;
  }

  NCPoly atom() {
    std::string name;
    while (!at_end() && (std::isalpha(static_cast<unsigned char>(peek())) || peek() == '*')) {
      if (peek() == '*' && !(name == "u" || name == "ut" || name == "v")) break;
      name.push_back(s_[pos_++]);
    }
    expect('(');
    std::vector<double> args;
    args.push_back(number());
    while (peek() == ',') {
      ++pos_;
      args.push_back(number());
    }
    expect(')');
    auto idx = [&](std::size_t k) {
      if (args[k] != std::floor(args[k]) || args[k] < 0) fail("index must be a non-negative integer");
      return static_cast<int>(args[k]);
    };
    auto need = [&](std::size_t n) {
      if (args.size() != n) fail(name + " takes " + std::to_string(n) + " arguments");
    };
    using namespace letters;
    if (name == "x") {
      if (args.size() == 1) return NCPoly(x(idx(0)));
      need(2);
      return NCPoly(x(idx(0), idx(1)));
    }
    if (name == "xl") {
      need(3);
      return NCPoly(xl(idx(0), idx(1), args[2]));
    }
    need(2);
    int i = idx(0);
    double t = args[1];
    if (t < 0) fail("time must be non-negative");
    if (name == "u") return NCPoly(u(i, t));
    if (name == "u*") return NCPoly(u_star(i, t));
    if (name == "ut") return NCPoly(ut(i, t));
    if (name == "ut*") return NCPoly(ut_star(i, t));
    if (name == "v") return NCPoly(v(i, t));
    if (name == "v*") return NCPoly(v_star(i, t));
    if (name == "y") return NCPoly(u(i, t), std::exp(t / 2));
    if (name == "yinv") return NCPoly(u_star(i, t), std::exp(-t / 2));
    fail("unknown atom '" + name + "'");
  }
};

}  // namespace detail

// Parses the expression grammar, e.g. "1+0i*x(1)*u(1,0.5) + 1+0i*u*(1,0.5)*x(1)".
inline NCPoly parse_poly(std::string_view src) { return detail::PolyParser(src).parse(); }

}  // namespace liblab
