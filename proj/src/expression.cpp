#include "effpop/expression.hpp"

#include "effpop/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

namespace effpop {

class ExpressionParser {
 public:
  ExpressionParser(const std::string& text, const std::vector<std::string>& vars,
                   const std::map<std::string, double>& constants)
      : s_(text), vars_(vars), constants_(constants) {}

  Expression run() {
    Expression e;
    e.text_ = s_;
    e.arity_ = vars_.size();
    expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    e.program_ = std::move(out_);
    e.max_depth_ = max_depth_;
    return e;
  }

 private:
  using Op = Expression::Op;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("expression \"" + s_ + "\", position " + std::to_string(pos_) + ": " + msg);
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  void emit(Op op, double value = 0.0, std::size_t index = 0) {
    out_.push_back({op, value, index});
    switch (op) {
      case Op::Const:
      case Op::Var:
        ++depth_;
        break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
      case Op::Pow:
      case Op::Min:
      case Op::Max:
        --depth_;
        break;
      default:
        break;
    }
    max_depth_ = std::max(max_depth_, depth_);
  }

  void expr() {
    term();
    while (true) {
      if (accept('+')) {
        term();
        emit(Op::Add);
      } else if (accept('-')) {
        term();
        emit(Op::Sub);
      } else {
        return;
      }
    }
  }

  void term() {
    unary();
    while (true) {
      if (accept('*')) {
        unary();
        emit(Op::Mul);
      } else if (accept('/')) {
        unary();
        emit(Op::Div);
      } else {
        return;
      }
    }
  }

  void unary() {
    if (accept('-')) {
      unary();
      emit(Op::Neg);
    } else if (accept('+')) {
      unary();
    } else {
      power();
    }
  }

  void power() {
    primary();
    if (accept('^')) {
      unary();
      emit(Op::Pow);
    }
  }

  void primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      expr();
      expect(')');
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      const double value = std::strtod(begin, &end);
      if (end == begin) fail("malformed number");
      pos_ += static_cast<std::size_t>(end - begin);
      emit(Op::Const, value);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      const std::string name = s_.substr(start, pos_ - start);
      if (accept('(')) {
        call(name);
        return;
      }
      const auto it = std::find(vars_.begin(), vars_.end(), name);
      if (it != vars_.end()) {
        emit(Op::Var, 0.0, static_cast<std::size_t>(it - vars_.begin()));
        return;
      }
      const auto ct = constants_.find(name);
      if (ct != constants_.end()) {
        emit(Op::Const, ct->second);
        return;
      }
      pos_ = start;
      fail("unknown name '" + name + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  void call(const std::string& name) {
    int args = 0;
    if (!accept(')')) {
      do {
        expr();
        ++args;
      } while (accept(','));
      expect(')');
    }
    auto want = [&](int n) {
      if (args != n) fail(name + " takes " + std::to_string(n) + " argument(s)");
    };
    if (name == "abs") {
      want(1);
      emit(Op::Abs);
    } else if (name == "sqrt") {
      want(1);
      emit(Op::Sqrt);
    } else if (name == "exp") {
      want(1);
      emit(Op::Exp);
    } else if (name == "log") {
      want(1);
      emit(Op::Log);
    } else if (name == "min") {
      want(2);
      emit(Op::Min);
    } else if (name == "max") {
      want(2);
      emit(Op::Max);
    } else if (name == "pow") {
      want(2);
      emit(Op::Pow);
    } else {
      fail("unknown function '" + name + "'");
    }
  }

  std::string s_;
  const std::vector<std::string>& vars_;
  const std::map<std::string, double>& constants_;
  std::size_t pos_ = 0;
  std::size_t depth_ = 0;
  std::size_t max_depth_ = 0;
  std::vector<Expression::Instr> out_;
};

Expression Expression::parse(const std::string& text, const std::vector<std::string>& variables,
                             const std::map<std::string, double>& constants) {
  return ExpressionParser(text, variables, constants).run();
}

double Expression::operator()(std::span<const double> values) const {
  if (program_.empty()) return 0.0;
  if (values.size() < arity_) throw ConfigError("expression \"" + text_ + "\" evaluated with too few values");
  // Expressions in configs are short; a fixed stack keeps evaluation allocation-free.
  constexpr std::size_t kStack = 64;
  if (max_depth_ > kStack) throw ConfigError("expression \"" + text_ + "\" is nested too deeply");
  double stack[kStack];
  std::size_t top = 0;
  for (const Instr& in : program_) {
    switch (in.op) {
      case Op::Const: stack[top++] = in.value; break;
      case Op::Var: stack[top++] = values[in.index]; break;
      case Op::Add: --top; stack[top - 1] += stack[top]; break;
      case Op::Sub: --top; stack[top - 1] -= stack[top]; break;
      case Op::Mul: --top; stack[top - 1] *= stack[top]; break;
      case Op::Div: --top; stack[top - 1] /= stack[top]; break;
      case Op::Pow: --top; stack[top - 1] = std::pow(stack[top - 1], stack[top]); break;
      case Op::Min: --top; stack[top - 1] = std::min(stack[top - 1], stack[top]); break;
      case Op::Max: --top; stack[top - 1] = std::max(stack[top - 1], stack[top]); break;
      case Op::Neg: stack[top - 1] = -stack[top - 1]; break;
      case Op::Abs: stack[top - 1] = std::abs(stack[top - 1]); break;
      case Op::Sqrt: stack[top - 1] = std::sqrt(stack[top - 1]); break;
      case Op::Exp: stack[top - 1] = std::exp(stack[top - 1]); break;
      case Op::Log: stack[top - 1] = std::log(stack[top - 1]); break;
    }
  }
  return stack[0];
}

}  // namespace effpop
