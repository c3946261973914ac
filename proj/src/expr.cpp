#include "basinforge/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>

namespace basinforge::expr {

namespace {

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    std::vector<Instr> parse() {
        expression();
        skip();
        if (pos_ != s_.size()) throw ParseError("unexpected '" + std::string(1, s_[pos_]) + "'", pos_);
        return std::move(code_);
    }

private:
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
        if (!accept(c)) throw ParseError(std::string("expected '") + c + "'", pos_);
    }

    void emit(Op op, double v = 0.0) { code_.push_back({op, v}); }

    void expression() {
        term();
        for (;;) {
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
        for (;;) {
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
        atom();
        if (accept('^')) exponent();
    }

    // Integer literal exponents use repeated multiplication so negative bases work.
    void exponent(bool full = false) {
        const std::size_t mark = code_.size();
        if (full)
            expression();
        else
            unary();
        if (code_.size() == mark + 1 && code_[mark].op == Op::Const) {
            const double p = code_[mark].value;
            if (p == std::round(p) && std::abs(p) <= 64) {
                code_.pop_back();
                emit(Op::PowInt, p);
                return;
            }
        }
        emit(Op::Pow);
    }

    void atom() {
        skip();
        if (pos_ >= s_.size()) throw ParseError("unexpected end of expression", pos_);
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.c_str() + pos_;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) throw ParseError("malformed number", pos_);
            pos_ += static_cast<std::size_t>(end - begin);
            emit(Op::Const, v);
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
            const std::string name = s_.substr(start, pos_ - start);
            if (name == "x") return emit(Op::X);
            if (name == "y") return emit(Op::Y);
            if (name == "pi") return emit(Op::Const, std::numbers::pi);
            if (name == "e") return emit(Op::Const, std::numbers::e);
            if (name == "sin" || name == "cos" || name == "exp") {
                expect('(');
                expression();
                expect(')');
                return emit(name == "sin" ? Op::Sin : name == "cos" ? Op::Cos : Op::Exp);
            }
            if (name == "pow") {
                expect('(');
                expression();
                expect(',');
                exponent(true);
                expect(')');
                return;
            }
            throw ParseError("unknown identifier '" + name + "'", start);
        }
        if (accept('(')) {
            expression();
            expect(')');
            return;
        }
        throw ParseError("unexpected '" + std::string(1, c) + "'", pos_);
    }

    const std::string& s_;
    std::size_t pos_ = 0;
    std::vector<Instr> code_;
};

double ipow(double b, int p) {
    double r = 1.0;
    for (int i = 0; i < std::abs(p); ++i) r *= b;
    return p < 0 ? 1.0 / r : r;
}

double apply_pow(double a, double b) { return std::pow(a, b); }

Dual<2> apply_pow(const Dual<2>& a, const Dual<2>& b) {
    const double v = std::pow(a.v, b.v);
    Dual<2> r(v);
    const double da = b.v * std::pow(a.v, b.v - 1.0);
    const double db = a.v > 0 ? v * std::log(a.v) : 0.0;
    for (int i = 0; i < 2; ++i) r.d[i] = da * a.d[i] + db * b.d[i];
    return r;
}

Dual<2> ipow(const Dual<2>& b, int p) {
    if (p == 0) return Dual<2>(1.0);
    const double v = ipow(b.v, p);
    const double slope = p * ipow(b.v, p - 1);
    return chain(b, v, slope);
}

using std::cos;
using std::exp;
using std::sin;

}  // namespace

Program Program::compile(const std::string& source) {
    Program p;
    p.source_ = source;
    p.code_ = Parser(source).parse();
    std::size_t depth = 0;
    for (const Instr& in : p.code_) {
        switch (in.op) {
            case Op::Const:
            case Op::X:
            case Op::Y: ++depth; break;
            case Op::Add:
            case Op::Sub:
            case Op::Mul:
            case Op::Div:
            case Op::Pow: --depth; break;
            default: break;
        }
        p.max_depth_ = std::max(p.max_depth_, depth);
    }
    return p;
}

template <class T>
T Program::run(const T& x, const T& y) const {
    constexpr std::size_t kInline = 32;
    T inline_stack[kInline]{};
    std::vector<T> heap;
    T* st = inline_stack;
    if (max_depth_ > kInline) {
        heap.resize(max_depth_);
        st = heap.data();
    }
    std::size_t sp = 0;
    for (const Instr& in : code_) {
        switch (in.op) {
            case Op::Const: st[sp++] = T(in.value); break;
            case Op::X: st[sp++] = x; break;
            case Op::Y: st[sp++] = y; break;
            case Op::Add: --sp; st[sp - 1] = st[sp - 1] + st[sp]; break;
            case Op::Sub: --sp; st[sp - 1] = st[sp - 1] - st[sp]; break;
            case Op::Mul: --sp; st[sp - 1] = st[sp - 1] * st[sp]; break;
            case Op::Div: --sp; st[sp - 1] = st[sp - 1] / st[sp]; break;
            case Op::Pow: --sp; st[sp - 1] = apply_pow(st[sp - 1], st[sp]); break;
            case Op::PowInt: st[sp - 1] = ipow(st[sp - 1], static_cast<int>(in.value)); break;
            case Op::Neg: st[sp - 1] = -st[sp - 1]; break;
            case Op::Sin: st[sp - 1] = sin(st[sp - 1]); break;
            case Op::Cos: st[sp - 1] = cos(st[sp - 1]); break;
            case Op::Exp: st[sp - 1] = exp(st[sp - 1]); break;
        }
    }
    return st[0];
}

double Program::eval(double x, double y) const { return run(x, y); }

Dual<2> Program::eval(const Dual<2>& x, const Dual<2>& y) const { return run(x, y); }

}  // namespace basinforge::expr
