#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace effpop {

/// A small arithmetic language for rates and growth functions in config files.
///
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := ('-' | '+') unary | power
///   power   := primary ('^' unary)?
///   primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
///
/// Names resolve to the declared variables first, then to the constants map.
/// Functions: abs, sqrt, exp, log, min, max, pow. Parsing compiles to a flat
/// postfix program, so evaluation is a tight loop with no allocation.
class Expression {
 public:
  Expression() = default;

  /// Throws ConfigError with the offending position on syntax errors or
  /// unknown names.
  static Expression parse(const std::string& text, const std::vector<std::string>& variables,
                          const std::map<std::string, double>& constants = {});

  double operator()(std::span<const double> values) const;
  double operator()(double x) const { return (*this)(std::span<const double>(&x, 1)); }

  const std::string& text() const noexcept { return text_; }
  std::size_t arity() const noexcept { return arity_; }

  enum class Op : unsigned char { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Abs, Sqrt, Exp, Log, Min, Max };
  struct Instr {
    Op op;
    double value = 0.0;
    std::size_t index = 0;
  };

 private:
  std::string text_;
  std::size_t arity_ = 0;
  std::size_t max_depth_ = 0;
  std::vector<Instr> program_;

  friend class ExpressionParser;
};

}  // namespace effpop
