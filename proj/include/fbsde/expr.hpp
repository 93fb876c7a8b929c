#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fbsde::expr {

// Scalar arithmetic sub-language for coefficient expressions. Variables:
// t, x, y, z, r, f, regime; operators + - * / ^; functions sin, cos, exp,
// abs. Parsed once into a postfix program, evaluated with a fixed stack.

struct Env {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double r = 0.0;
  double f = 0.0;
  double regime = 1.0;  // 1-based, as written in scenario files
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t position)
      : std::runtime_error("parse error at position " +
                           std::to_string(position) + ": " + msg),
        pos(position) {}
  std::size_t pos;
};

class Expression {
 public:
  struct Instr {
    int op;
    double value;
  };

  double eval(const Env& env) const;
  bool uses(char var) const;  // 't', 'x', 'y', 'z', 'r', 'f', 'g'(regime)
  const std::string& source() const { return src_; }

 private:
  friend Expression parse(const std::string&);
  std::vector<Instr> program_;
  std::string src_;
  unsigned used_mask_ = 0;
};

Expression parse(const std::string& src);

}  // namespace fbsde::expr
