#include "basinforge/smooth_kit.hpp"

#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <array>
#include <cmath>
#include <sstream>

namespace basinforge::smooth {

namespace {

constexpr double kPi = boost::math::constants::pi<double>();
constexpr double kInvSqrt2 = boost::math::constants::one_div_root_two<double>();

// zeta on [0, 1/2] is tabulated at kKnots+1 equispaced knots; between knots the
// same fixed Gauss-Legendre rule that built the table integrates chi, so the
// interpolant is continuous at the knots and monotone inside each cell.
constexpr int kKnots = 512;
constexpr double kCell = 0.5 / kKnots;
using Rule = boost::math::quadrature::gauss<double, 20>;

double raw_chi(double x) {
    if (x <= 0.0 || x >= 1.0) return 0.0;
    return std::exp(1.0 / (x * (x - 1.0)));
}

struct ZetaTable {
    double c = 0.0;
    std::array<double, kKnots + 1> z{};

    ZetaTable() {
        double err = 0.0;
        const double total = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
            raw_chi, 0.0, 1.0, 20, 1e-14, &err);
        c = 1.0 / total;
        z[0] = 0.0;
        for (int i = 1; i <= kKnots; ++i)
            z[i] = z[i - 1] + c * Rule::integrate(raw_chi, (i - 1) * kCell, i * kCell);
    }
};

const ZetaTable& table() {
    static const ZetaTable t;  // thread-safe one-time initialization
    return t;
}

// zeta on [0, 1/2].
double zeta_lower(double x) {
    const ZetaTable& t = table();
    int i = static_cast<int>(x / kCell);
    if (i >= kKnots) i = kKnots - 1;
    const double x0 = i * kCell;
    if (x == x0) return t.z[i];
    return t.z[i] + t.c * Rule::integrate(raw_chi, x0, x);
}

void check_window(double a, double b) {
    if (!(a < b)) {
        std::ostringstream os;
        os << "zeta window needs a < b (got a=" << a << ", b=" << b << ")";
        throw DegenerateWindow(os.str());
    }
}

// Phase of the gate inside one period.
double frac(double t) { return t - std::floor(t); }

bool gate_closed(double f) { return f <= 0.25 || f >= 0.5; }

}  // namespace

double zeta_normalizer() { return table().c; }

double chi(double x) { return raw_chi(x); }

double chi_prime(double x) {
    if (x <= 0.0 || x >= 1.0) return 0.0;
    const double p = x * (x - 1.0);
    return raw_chi(x) * (-(2.0 * x - 1.0) / (p * p));
}

double zeta(double x) {
    if (std::isnan(x)) return x;
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    if (x <= 0.5) return zeta_lower(x);
    return 1.0 - zeta_lower(1.0 - x);
}

double zeta_prime(double x) { return table().c * raw_chi(x); }

double zeta_ab(double a, double b, double x) {
    check_window(a, b);
    return zeta((x - a) / (b - a));
}

double zeta_ab_prime(double a, double b, double x) {
    check_window(a, b);
    return zeta_prime((x - a) / (b - a)) / (b - a);
}

double phi(double t) {
    const double f = frac(t);
    if (gate_closed(f)) return 0.0;
    return zeta(std::sin(2.0 * kPi * f - kPi / 4.0) - kInvSqrt2);
}

double phi_prime(double t) {
    const double f = frac(t);
    if (gate_closed(f)) return 0.0;
    const double arg = 2.0 * kPi * f - kPi / 4.0;
    return zeta_prime(std::sin(arg) - kInvSqrt2) * 2.0 * kPi * std::cos(arg);
}

double phi_bar(double t, double v3, int m) {
    return phi(t) + zeta_ab(m - 0.25, m - 0.1875, v3);
}

double phi_bar_dt(double t, double, int) { return phi_prime(t); }

double phi_bar_dv3(double, double v3, int m) { return zeta_ab_prime(m - 0.25, m - 0.1875, v3); }

double smooth_round(double x) {
    const double fl = std::floor(x);
    const double f = x - fl;
    if (f <= 0.25) return fl;
    if (f >= 0.75) return fl + 1.0;
    return fl + zeta(2.0 * (f - 0.25));
}

double smooth_round_prime(double x) {
    const double f = x - std::floor(x);
    if (f <= 0.25 || f >= 0.75) return 0.0;
    return 2.0 * zeta_prime(2.0 * (f - 0.25));
}

// Splits d (reduced to the period centred on 0) into nearest integer k and an
// exact remainder e, so sin(pi d) = (-1)^k sin(pi e) keeps full relative
// accuracy next to the integers where the kernel is ill-conditioned.
struct CardinalArg {
    double d, e;
    long long k;
};

CardinalArg reduce(double d, int n) {
    d -= n * std::nearbyint(d / n);
    const double k = std::nearbyint(d);
    return {d, d - k, static_cast<long long>(std::isfinite(k) ? k : 0.0)};
}

double cardinal(double d, int n) {
    const auto [x, e, k] = reduce(d, n);
    if (e == 0.0) return k == 0 ? 1.0 : 0.0;
    const double sp = (k % 2 == 0 ? 1.0 : -1.0) * std::sin(kPi * e);
    const double a = kPi * x / n;
    if (n % 2 == 1) return sp / (n * std::sin(a));
    return sp / (n * std::tan(a));
}

double cardinal_prime(double d, int n) {
    const auto [x, e, k] = reduce(d, n);
    const double sign = k % 2 == 0 ? 1.0 : -1.0;
    const double a = kPi * x / n;
    const double sa = std::sin(a), ca = std::cos(a);
    if (e == 0.0) {
        // limits at the integers: zero at the peak, (-1)^k pi / (n sin a) or
        // (-1)^k pi / (n tan a) elsewhere
        if (k == 0) return 0.0;
        if (n % 2 == 1) return sign * kPi / (n * sa);
        return sign * kPi * ca / (n * sa);
    }
    const double sp = sign * std::sin(kPi * e), cp = sign * std::cos(kPi * e);
    if (n % 2 == 1) return kPi * (cp * sa - sp * ca / n) / (n * sa * sa);
    return kPi * (cp * ca / sa - sp / (n * sa * sa)) / n;
}

double smooth_mod(double x, int b) {
    const double y = smooth_round(x);
    if (is_integral(y)) {
        const double r = std::fmod(y, static_cast<double>(b));
        return r < 0 ? r + b : r;
    }
    double s = 0.0;
    for (int j = 1; j < b; ++j) s += j * cardinal(y - j, b);
    return s;
}

double smooth_mod_prime(double x, int b) {
    const double dr = smooth_round_prime(x);
    if (dr == 0.0) return 0.0;
    const double y = smooth_round(x);
    double s = 0.0;
    for (int j = 1; j < b; ++j) s += j * cardinal_prime(y - j, b);
    return s * dr;
}

double smooth_div(double x, int b) { return (smooth_round(x) - smooth_mod(x, b)) / b; }

double smooth_div_prime(double x, int b) {
    return (smooth_round_prime(x) - smooth_mod_prime(x, b)) / b;
}

SmoothScalarFn SmoothScalarFn::zeta_ab_fn(double a, double b) {
    check_window(a, b);
    return SmoothScalarFn(Kind::ZetaAB, a, b);
}

SmoothScalarFn SmoothScalarFn::residue_kernel_fn(int base, int j) {
    if (base < 2) throw std::invalid_argument("residue kernel base must be >= 2");
    return SmoothScalarFn(Kind::ResidueKernel, 0, 0, base, j);
}

SmoothScalarFn SmoothScalarFn::smooth_mod_fn(int base) {
    if (base < 2) throw std::invalid_argument("smooth_mod base must be >= 2");
    return SmoothScalarFn(Kind::SmoothMod, 0, 0, base);
}

SmoothScalarFn SmoothScalarFn::smooth_div_fn(int base) {
    if (base < 2) throw std::invalid_argument("smooth_div base must be >= 2");
    return SmoothScalarFn(Kind::SmoothDiv, 0, 0, base);
}

double SmoothScalarFn::operator()(double x) const {
    switch (kind_) {
        case Kind::Chi: return chi(x);
        case Kind::Zeta: return zeta(x);
        case Kind::ZetaAB: return zeta_ab(a_, b_, x);
        case Kind::Phi: return phi(x);
        case Kind::SmoothRound: return smooth_round(x);
        case Kind::ResidueKernel: return cardinal(x - j_, base_);
        case Kind::SmoothMod: return smooth_mod(x, base_);
        case Kind::SmoothDiv: return smooth_div(x, base_);
    }
    return 0.0;
}

double SmoothScalarFn::derivative(double x) const {
    switch (kind_) {
        case Kind::Chi: return chi_prime(x);
        case Kind::Zeta: return zeta_prime(x);
        case Kind::ZetaAB: return zeta_ab_prime(a_, b_, x);
        case Kind::Phi: return phi_prime(x);
        case Kind::SmoothRound: return smooth_round_prime(x);
        case Kind::ResidueKernel: return cardinal_prime(x - j_, base_);
        case Kind::SmoothMod: return smooth_mod_prime(x, base_);
        case Kind::SmoothDiv: return smooth_div_prime(x, base_);
    }
    return 0.0;
}

std::string SmoothScalarFn::name() const {
    std::ostringstream os;
    switch (kind_) {
        case Kind::Chi: return "chi";
        case Kind::Zeta: return "zeta";
        case Kind::ZetaAB: os << "zeta_ab(" << a_ << "," << b_ << ")"; break;
        case Kind::Phi: return "phi";
        case Kind::SmoothRound: return "smooth_round";
        case Kind::ResidueKernel: os << "residue_kernel(" << base_ << "," << j_ << ")"; break;
        case Kind::SmoothMod: os << "smooth_mod(" << base_ << ")"; break;
        case Kind::SmoothDiv: os << "smooth_div(" << base_ << ")"; break;
    }
    return os.str();
}

}  // namespace basinforge::smooth
