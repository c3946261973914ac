#include "basinforge/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace basinforge {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double bump_profile(double s) { return s >= 1.0 ? 0.0 : std::exp(1.0 - 1.0 / (1.0 - s)); }

double bump_profile_prime(double s) {
    if (s >= 1.0) return 0.0;
    const double u = 1.0 - s;
    return -bump_profile(s) / (u * u);
}

// sup over s in [0,1) of |psi'(s)| sqrt(s), by a dense sweep padded with the
// largest jump between neighbouring samples.
double bump_slope_sup() {
    static const double value = [] {
        const int n = 20000;
        double best = 0.0, jump = 0.0, prev = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double s = static_cast<double>(i) / n;
            const double g = std::abs(bump_profile_prime(s)) * std::sqrt(s);
            best = std::max(best, g);
            if (i > 0) jump = std::max(jump, std::abs(g - prev));
            prev = g;
        }
        return best + jump;
    }();
    return value;
}

VectorXd or_zero(const VectorXd& v, int d) { return v.size() == d ? v : VectorXd::Zero(d); }

double max_weight(const VectorXd& w) { return w.size() ? w.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

PerturbationSpec PerturbationSpec::constant(double alpha, VectorXd weights) {
    PerturbationSpec s;
    s.kind = Kind::Constant;
    s.alpha = alpha;
    s.weights = std::move(weights);
    return s;
}

PerturbationSpec PerturbationSpec::sinusoidal(double alpha, VectorXd weights, VectorXd phases) {
    PerturbationSpec s;
    s.kind = Kind::Sinusoidal;
    s.alpha = alpha;
    s.weights = std::move(weights);
    s.phases = or_zero(phases, s.dim());
    return s;
}

PerturbationSpec PerturbationSpec::gaussian_tail(double alpha, VectorXd weights, VectorXd center) {
    if (alpha <= 0) throw std::invalid_argument("gaussian-tail perturbation needs alpha > 0");
    PerturbationSpec s;
    s.kind = Kind::GaussianTail;
    s.alpha = alpha;
    s.weights = std::move(weights);
    s.center = or_zero(center, s.dim());
    return s;
}

PerturbationSpec PerturbationSpec::bump(double alpha, VectorXd weights, VectorXd center,
                                        double radius) {
    if (radius <= 0) throw std::invalid_argument("bump perturbation needs radius > 0");
    PerturbationSpec s;
    s.kind = Kind::Bump;
    s.alpha = alpha;
    s.weights = std::move(weights);
    s.center = or_zero(center, s.dim());
    s.radius = radius;
    return s;
}

VectorXd PerturbationSpec::value(const VectorXd& x) const {
    switch (kind) {
        case Kind::Constant: return alpha * weights;
        case Kind::Sinusoidal: {
            VectorXd out(dim());
            for (int i = 0; i < dim(); ++i) out[i] = alpha * weights[i] * std::sin(x[i] + phases[i]);
            return out;
        }
        case Kind::GaussianTail:
            return std::exp(-alpha * (1.0 + (x - center).squaredNorm())) * weights;
        case Kind::Bump:
            return alpha * bump_profile((x - center).squaredNorm() / (radius * radius)) * weights;
    }
    return VectorXd::Zero(dim());
}

MatrixXd PerturbationSpec::jacobian(const VectorXd& x) const {
    const int d = dim();
    switch (kind) {
        case Kind::Constant: return MatrixXd::Zero(d, d);
        case Kind::Sinusoidal: {
            MatrixXd J = MatrixXd::Zero(d, d);
            for (int i = 0; i < d; ++i) J(i, i) = alpha * weights[i] * std::cos(x[i] + phases[i]);
            return J;
        }
        case Kind::GaussianTail: {
            const VectorXd y = x - center;
            const double e = std::exp(-alpha * (1.0 + y.squaredNorm()));
            return weights * (-2.0 * alpha * e * y).transpose();
        }
        case Kind::Bump: {
            const VectorXd y = x - center;
            const double r2 = radius * radius;
            const double g = alpha * bump_profile_prime(y.squaredNorm() / r2) * 2.0 / r2;
            return weights * (g * y).transpose();
        }
    }
    return MatrixXd::Zero(d, d);
}

double PerturbationSpec::c0_bound() const {
    const double w = max_weight(weights);
    switch (kind) {
        case Kind::Constant:
        case Kind::Sinusoidal:
        case Kind::Bump: return std::abs(alpha) * w;
        case Kind::GaussianTail: return std::exp(-alpha) * w;
    }
    return 0.0;
}

double PerturbationSpec::c1_bound() const {
    const double w = max_weight(weights);
    const double d = dim();
    switch (kind) {
        case Kind::Constant: return 0.0;
        case Kind::Sinusoidal: return std::abs(alpha) * w;
        case Kind::GaussianTail:
            // sup_r 2 alpha sqrt(d) r exp(-alpha r^2) is attained at r = 1/sqrt(2 alpha)
            return std::sqrt(2.0 * alpha * d / std::exp(1.0)) * std::exp(-alpha) * w;
        case Kind::Bump: return std::abs(alpha) * w * 2.0 * std::sqrt(d) / radius * bump_slope_sup();
    }
    return 0.0;
}

void PerturbationSpec::check_budget(double c0, double c1) const {
    if (c0_bound() > c0 || c1_bound() > c1) {
        std::ostringstream os;
        os << describe() << " exceeds budget (C0 " << c0_bound() << " vs " << c0 << ", C1 "
           << c1_bound() << " vs " << c1 << ")";
        throw BudgetExceeded(os.str());
    }
}

std::string PerturbationSpec::describe() const {
    static const char* names[] = {"constant", "sinusoidal", "gaussian-tail", "bump"};
    std::ostringstream os;
    os << names[static_cast<int>(kind)] << "(alpha=" << alpha << ", dim=" << dim() << ")";
    return os.str();
}

PerturbationSpec random_perturbation(PerturbationSpec::Kind kind, int dim, double c0_budget,
                                     double c1_budget, std::uint64_t seed, const VectorXd& center) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0), frac(0.1, 0.95);
    VectorXd w(dim);
    for (int i = 0; i < dim; ++i) w[i] = U(rng);
    w /= w.cwiseAbs().maxCoeff();  // normalise so the largest amplitude is exactly 1

    using K = PerturbationSpec::Kind;
    switch (kind) {
        case K::Constant: return PerturbationSpec::constant(frac(rng) * c0_budget, w);
        case K::Sinusoidal: {
            VectorXd ph(dim);
            for (int i = 0; i < dim; ++i) ph[i] = M_PI * U(rng);
            return PerturbationSpec::sinusoidal(frac(rng) * std::min(c0_budget, c1_budget), w, ph);
        }
        case K::GaussianTail: {
            // Both bounds decrease in alpha once alpha > 1/2; find the smallest
            // admissible alpha by bisection and sample above it.
            auto fits = [&](double a) {
                const auto s = PerturbationSpec::gaussian_tail(a, w, center);
                return s.c0_bound() < c0_budget && s.c1_bound() < c1_budget;
            };
            double lo = 0.5, hi = 60.0;
            for (int it = 0; it < 100; ++it) {
                const double mid = 0.5 * (lo + hi);
                (fits(mid) ? hi : lo) = mid;
            }
            return PerturbationSpec::gaussian_tail(hi * (1.0 + 0.5 * (frac(rng) - 0.1)), w, center);
        }
        case K::Bump: {
            auto probe = PerturbationSpec::bump(1.0, w, center, 1.0);
            const double amax = std::min(c0_budget / probe.c0_bound(), c1_budget / probe.c1_bound());
            return PerturbationSpec::bump(frac(rng) * amax, w, center, 1.0);
        }
    }
    return PerturbationSpec::constant(0.0, w);
}

ProbeSup probe_sup(const PerturbationSpec& spec, const VectorXd& center, double half_width,
                   int samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-half_width, half_width);
    ProbeSup out;
    VectorXd x(spec.dim());
    for (int n = 0; n < samples; ++n) {
        for (int i = 0; i < spec.dim(); ++i) x[i] = center[i] + U(rng);
        out.c0 = std::max(out.c0, spec.value(x).cwiseAbs().maxCoeff());
        out.c1 = std::max(out.c1, row_sum_norm(spec.jacobian(x)));
    }
    return out;
}

}  // namespace basinforge
