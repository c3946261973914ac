#pragma once

// Forward-mode dual numbers with a fixed-size gradient. Used to obtain exact
// Jacobians of the composite maps and fields without hand-written chain rules.

#include <array>
#include <cmath>

namespace basinforge {

template <int N>
struct Dual {
    double v = 0.0;
    std::array<double, N> d{};

    Dual() = default;
    Dual(double value) : v(value) {}  // NOLINT: implicit promotion of constants
    Dual(double value, const std::array<double, N>& grad) : v(value), d(grad) {}

    static Dual variable(double value, int index) {
        Dual r(value);
        r.d[index] = 1.0;
        return r;
    }

    Dual& operator+=(const Dual& o) {
        v += o.v;
        for (int i = 0; i < N; ++i) d[i] += o.d[i];
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        v -= o.v;
        for (int i = 0; i < N; ++i) d[i] -= o.d[i];
        return *this;
    }
    Dual& operator*=(const Dual& o) {
        for (int i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
        v *= o.v;
        return *this;
    }
    Dual& operator/=(const Dual& o) {
        const double inv = 1.0 / o.v;
        for (int i = 0; i < N; ++i) d[i] = (d[i] - v * inv * o.d[i]) * inv;
        v *= inv;
        return *this;
    }
};

template <int N> Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <int N> Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <int N> Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <int N> Dual<N> operator/(Dual<N> a, const Dual<N>& b) { return a /= b; }
template <int N> Dual<N> operator+(Dual<N> a, double b) { a.v += b; return a; }
template <int N> Dual<N> operator+(double b, Dual<N> a) { a.v += b; return a; }
template <int N> Dual<N> operator-(Dual<N> a, double b) { a.v -= b; return a; }
template <int N> Dual<N> operator-(double b, const Dual<N>& a) {
    Dual<N> r(b - a.v);
    for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
    return r;
}
template <int N> Dual<N> operator-(const Dual<N>& a) { return 0.0 - a; }
template <int N> Dual<N> operator*(Dual<N> a, double b) {
    a.v *= b;
    for (auto& x : a.d) x *= b;
    return a;
}
template <int N> Dual<N> operator*(double b, Dual<N> a) { return a * b; }
template <int N> Dual<N> operator/(Dual<N> a, double b) { return a * (1.0 / b); }
template <int N> Dual<N> operator/(double b, const Dual<N>& a) { return Dual<N>(b) / a; }

/// Applies a scalar function with known value and slope to a dual argument.
template <int N>
Dual<N> chain(const Dual<N>& x, double value, double slope) {
    Dual<N> r(value);
    for (int i = 0; i < N; ++i) r.d[i] = slope * x.d[i];
    return r;
}

template <int N> Dual<N> sin(const Dual<N>& x) { return chain(x, std::sin(x.v), std::cos(x.v)); }
template <int N> Dual<N> cos(const Dual<N>& x) { return chain(x, std::cos(x.v), -std::sin(x.v)); }
template <int N> Dual<N> exp(const Dual<N>& x) {
    const double e = std::exp(x.v);
    return chain(x, e, e);
}

inline double value_of(double x) { return x; }
template <int N> double value_of(const Dual<N>& x) { return x.v; }

}  // namespace basinforge
