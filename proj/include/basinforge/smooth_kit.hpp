#pragma once

// C-infinity scalar building blocks: the bump chi, the smooth step zeta and its
// windowed form, the periodic gate phi, the halting-gated phi_bar, smooth
// rounding, and smooth digit extraction (mod / div by the tape base).
//
// Every function has a matching *_prime derivative and a Dual<N> overload so
// composite maps get exact Jacobians. Plateau values (rounding, residues) are
// produced by branching and are bit-exact.

#include "basinforge/dual.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace basinforge::smooth {

class DegenerateWindow : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// (integral_0^1 exp(1/(x(x-1))) dx)^-1, computed once by adaptive quadrature.
double zeta_normalizer();

double chi(double x);
double chi_prime(double x);

double zeta(double x);
double zeta_prime(double x);

double zeta_ab(double a, double b, double x);
double zeta_ab_prime(double a, double b, double x);

double phi(double t);
double phi_prime(double t);

/// phi(t) + zeta_{m-1/4, m-3/16}(v3).
double phi_bar(double t, double v3, int m);
double phi_bar_dt(double t, double v3, int m);
double phi_bar_dv3(double t, double v3, int m);

double smooth_round(double x);
double smooth_round_prime(double x);

/// Periodic cardinal function of period n on the integers: 1 at multiples of
/// n, 0 at the other integers (trigonometric Lagrange interpolant).
double cardinal(double d, int n);
double cardinal_prime(double d, int n);

double smooth_mod(double x, int b);
double smooth_mod_prime(double x, int b);
double smooth_div(double x, int b);
double smooth_div_prime(double x, int b);

/// True when x is an integer-valued double.
inline bool is_integral(double x) { return std::floor(x) == x; }

template <int N> Dual<N> chi(const Dual<N>& x) { return chain(x, chi(x.v), chi_prime(x.v)); }
template <int N> Dual<N> zeta(const Dual<N>& x) { return chain(x, zeta(x.v), zeta_prime(x.v)); }
template <int N> Dual<N> zeta_ab(double a, double b, const Dual<N>& x) {
    return chain(x, zeta_ab(a, b, x.v), zeta_ab_prime(a, b, x.v));
}
template <int N> Dual<N> phi(const Dual<N>& t) { return chain(t, phi(t.v), phi_prime(t.v)); }
template <int N> Dual<N> phi_bar(const Dual<N>& t, const Dual<N>& v3, int m) {
    Dual<N> r(phi_bar(t.v, v3.v, m));
    const double dt = phi_bar_dt(t.v, v3.v, m), dv = phi_bar_dv3(t.v, v3.v, m);
    for (int i = 0; i < N; ++i) r.d[i] = dt * t.d[i] + dv * v3.d[i];
    return r;
}
template <int N> Dual<N> smooth_round(const Dual<N>& x) {
    return chain(x, smooth_round(x.v), smooth_round_prime(x.v));
}
template <int N> Dual<N> cardinal(const Dual<N>& d, int n) {
    return chain(d, cardinal(d.v, n), cardinal_prime(d.v, n));
}
template <int N> Dual<N> smooth_mod(const Dual<N>& x, int b) {
    return chain(x, smooth_mod(x.v, b), smooth_mod_prime(x.v, b));
}
template <int N> Dual<N> smooth_div(const Dual<N>& x, int b) {
    return chain(x, smooth_div(x.v, b), smooth_div_prime(x.v, b));
}

/// A named scalar primitive with parameters, evaluable with its derivative.
class SmoothScalarFn {
public:
    enum class Kind { Chi, Zeta, ZetaAB, Phi, SmoothRound, ResidueKernel, SmoothMod, SmoothDiv };

    static SmoothScalarFn chi_fn() { return SmoothScalarFn(Kind::Chi); }
    static SmoothScalarFn zeta_fn() { return SmoothScalarFn(Kind::Zeta); }
    static SmoothScalarFn zeta_ab_fn(double a, double b);
    static SmoothScalarFn phi_fn() { return SmoothScalarFn(Kind::Phi); }
    static SmoothScalarFn smooth_round_fn() { return SmoothScalarFn(Kind::SmoothRound); }
    /// Kernel K_j on residues mod b: K_j(i) = [i == j mod b].
    static SmoothScalarFn residue_kernel_fn(int base, int j);
    static SmoothScalarFn smooth_mod_fn(int base);
    static SmoothScalarFn smooth_div_fn(int base);

    double operator()(double x) const;
    double derivative(double x) const;
    Kind kind() const { return kind_; }
    std::string name() const;

private:
    explicit SmoothScalarFn(Kind k, double a = 0, double b = 0, int base = 0, int j = 0)
        : kind_(k), a_(a), b_(b), base_(base), j_(j) {}

    Kind kind_;
    double a_, b_;
    int base_, j_;
};

}  // namespace basinforge::smooth
