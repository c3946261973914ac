#pragma once

// Small arithmetic grammar for planar field components:
//
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := ('+' | '-') unary | power
//   power  := atom ('^' unary)?
//   atom   := number | 'x' | 'y' | 'pi' | 'e' | '(' expr ')'
//           | ('sin' | 'cos' | 'exp') '(' expr ')' | 'pow' '(' expr ',' expr ')'
//
// Expressions compile to a postfix program evaluated on a fixed stack, in
// double precision or with dual numbers for the gradient.

#include "basinforge/dual.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace basinforge::expr {

class ParseError : public std::invalid_argument {
public:
    ParseError(const std::string& what, std::size_t column)
        : std::invalid_argument(what + " at column " + std::to_string(column + 1)), column_(column) {}
    std::size_t column() const { return column_; }

private:
    std::size_t column_;
};

enum class Op : unsigned char { Const, X, Y, Add, Sub, Mul, Div, Neg, Pow, PowInt, Sin, Cos, Exp };

struct Instr {
    Op op;
    double value = 0.0;  // Const literal or PowInt exponent
};

class Program {
public:
    static Program compile(const std::string& source);

    double eval(double x, double y) const;
    Dual<2> eval(const Dual<2>& x, const Dual<2>& y) const;

    const std::string& source() const { return source_; }
    std::size_t size() const { return code_.size(); }

private:
    template <class T>
    T run(const T& x, const T& y) const;

    std::string source_;
    std::vector<Instr> code_;
    std::size_t max_depth_ = 0;
};

}  // namespace basinforge::expr
