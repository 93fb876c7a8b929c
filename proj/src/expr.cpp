#include "fbsde/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

namespace fbsde::expr {

namespace {

enum Op {
  op_const,
  op_var_t,
  op_var_x,
  op_var_y,
  op_var_z,
  op_var_r,
  op_var_f,
  op_var_regime,
  op_add,
  op_sub,
  op_mul,
  op_div,
  op_pow,
  op_neg,
  op_sin,
  op_cos,
  op_exp,
  op_abs,
};

struct Parser {
  const std::string& src;
  std::size_t pos = 0;
  std::vector<Expression::Instr>* out;
  unsigned* used_mask;

  void skip_ws() {
    while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos])))
      ++pos;
  }

  bool eat(char c) {
    skip_ws();
    if (pos < src.size() && src[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos < src.size() ? src[pos] : '\0';
  }

  void emit(int op, double v = 0.0) { out->push_back({op, v}); }

  void expression() {
    term();
    while (true) {
      if (eat('+')) {
        term();
        emit(op_add);
      } else if (eat('-')) {
        term();
        emit(op_sub);
      } else {
        break;
      }
    }
  }

  void term() {
    factor();
    while (true) {
      if (eat('*')) {
        factor();
        emit(op_mul);
      } else if (eat('/')) {
        factor();
        emit(op_div);
      } else {
        break;
      }
    }
  }

  void factor() {
    unary();
    if (eat('^')) {
      factor();  // right-associative
      emit(op_pow);
    }
  }

  void unary() {
    if (eat('-')) {
      unary();
      emit(op_neg);
      return;
    }
    primary();
  }

  void primary() {
    skip_ws();
    if (pos >= src.size()) throw ParseError("unexpected end of expression", pos);
    char c = src[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = src.c_str() + pos;
      char* end = nullptr;
      double v = std::strtod(begin, &end);
      if (end == begin) throw ParseError("malformed number", pos);
      pos += static_cast<std::size_t>(end - begin);
      emit(op_const, v);
      return;
    }
    if (c == '(') {
      ++pos;
      expression();
      if (!eat(')')) throw ParseError("expected ')'", pos);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos;
      while (pos < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[pos])) ||
              src[pos] == '_'))
        ++pos;
      std::string name = src.substr(start, pos - start);
      if (peek() == '(') {
        ++pos;  // consume '('
        expression();
        if (!eat(')')) throw ParseError("expected ')' after argument", pos);
        if (name == "sin") emit(op_sin);
        else if (name == "cos") emit(op_cos);
        else if (name == "exp") emit(op_exp);
        else if (name == "abs") emit(op_abs);
        else throw ParseError("unknown function '" + name + "'", start);
        return;
      }
      if (name == "t") { emit(op_var_t); *used_mask |= 1u << 0; }
      else if (name == "x") { emit(op_var_x); *used_mask |= 1u << 1; }
      else if (name == "y") { emit(op_var_y); *used_mask |= 1u << 2; }
      else if (name == "z") { emit(op_var_z); *used_mask |= 1u << 3; }
      else if (name == "r") { emit(op_var_r); *used_mask |= 1u << 4; }
      else if (name == "f") { emit(op_var_f); *used_mask |= 1u << 5; }
      else if (name == "regime") { emit(op_var_regime); *used_mask |= 1u << 6; }
      else throw ParseError("unknown identifier '" + name + "'", start);
      return;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", pos);
  }
};

}  // namespace

Expression parse(const std::string& src) {
  Expression e;
  e.src_ = src;
  Parser p{src, 0, &e.program_, &e.used_mask_};
  p.expression();
  p.skip_ws();
  if (p.pos != src.size())
    throw ParseError("trailing characters", p.pos);
  return e;
}

double Expression::eval(const Env& env) const {
  double stack[64];
  int top = -1;
  for (const auto& in : program_) {
    switch (in.op) {
      case op_const: stack[++top] = in.value; break;
      case op_var_t: stack[++top] = env.t; break;
      case op_var_x: stack[++top] = env.x; break;
      case op_var_y: stack[++top] = env.y; break;
      case op_var_z: stack[++top] = env.z; break;
      case op_var_r: stack[++top] = env.r; break;
      case op_var_f: stack[++top] = env.f; break;
      case op_var_regime: stack[++top] = env.regime; break;
      case op_add: --top; stack[top] += stack[top + 1]; break;
      case op_sub: --top; stack[top] -= stack[top + 1]; break;
      case op_mul: --top; stack[top] *= stack[top + 1]; break;
      case op_div: --top; stack[top] /= stack[top + 1]; break;
      case op_pow: --top; stack[top] = std::pow(stack[top], stack[top + 1]); break;
      case op_neg: stack[top] = -stack[top]; break;
      case op_sin: stack[top] = std::sin(stack[top]); break;
      case op_cos: stack[top] = std::cos(stack[top]); break;
      case op_exp: stack[top] = std::exp(stack[top]); break;
      case op_abs: stack[top] = std::abs(stack[top]); break;
    }
  }
  return top >= 0 ? stack[top] : 0.0;
}

bool Expression::uses(char var) const {
  switch (var) {
    case 't': return used_mask_ & (1u << 0);
    case 'x': return used_mask_ & (1u << 1);
    case 'y': return used_mask_ & (1u << 2);
    case 'z': return used_mask_ & (1u << 3);
    case 'r': return used_mask_ & (1u << 4);
    case 'f': return used_mask_ & (1u << 5);
    case 'g': return used_mask_ & (1u << 6);
  }
  return false;
}

}  // namespace fbsde::expr
