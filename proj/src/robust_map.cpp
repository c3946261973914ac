#include "basinforge/robust_map.hpp"

#include "basinforge/dual.hpp"
#include "basinforge/smooth_kit.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

namespace basinforge::robust {

namespace {

using D3 = Dual<3>;
using smooth::cardinal;
using tm::Move;

// Integer fast path of F: all three inputs integral, tape halves non-negative
// and small enough that every intermediate is exact in double precision.
bool exact_transition(const tm::TuringMachine& M, const std::array<double, 3>& y,
                      std::array<double, 3>& out) {
    constexpr double kExact = 9007199254740992.0 / 16;  // 2^49, leaves room for b*w1 + a'
    for (double v : y)
        if (!smooth::is_integral(v)) return false;
    if (y[0] < 0 || y[1] < 0 || y[0] > kExact || y[1] > kExact) return false;
    const int q = static_cast<int>(y[2]);
    if (q < 1 || q > M.num_states() || y[2] != q) return false;
    if (q == M.halting_state()) {
        out = y;
        return true;
    }
    const double b = M.base();
    const double a = std::fmod(y[1], b);
    const tm::Rule& r = M.rule(q, static_cast<int>(a));
    switch (r.move) {
        case Move::Stay: out = {y[0], y[1] - a + r.write, 0}; break;
        case Move::Right: out = {b * y[0] + r.write, (y[1] - a) / b, 0}; break;
        case Move::Left: {
            const double a1 = std::fmod(y[0], b);
            out = {(y[0] - a1) / b, b * (y[1] - a + r.write) + a1, 0};
            break;
        }
    }
    out[2] = r.next;
    return true;
}

template <class T>
Eigen::Matrix<double, 3, 1> values(const std::array<T, 3>& a) {
    return {value_of(a[0]), value_of(a[1]), value_of(a[2])};
}

}  // namespace

RobustMap::RobustMap(tm::TuringMachine machine, double lambda)
    : machine_(std::move(machine)), lambda_(lambda) {
    if (!(lambda > 0.0 && lambda < 1.0)) {
        std::ostringstream os;
        os << "contraction constant must lie in (0,1), got " << lambda;
        throw BadLambda(os.str());
    }
}

template <class T>
std::array<T, 3> RobustMap::transition(const std::array<T, 3>& y) const {
    if constexpr (std::is_same_v<T, double>) {
        std::array<double, 3> out;
        if (exact_transition(machine_, y, out)) return out;
    }
    const int m = machine_.num_states();
    const int b = machine_.base();

    // digit split of the left half, needed only by L moves
    T res1(0.0);
    for (int j = 1; j < b; ++j) res1 += j * cardinal(y[0] - static_cast<double>(j), b);
    const T quot1 = (y[0] - res1) / static_cast<double>(b);

    std::array<T, 3> out{T(0.0), T(0.0), T(0.0)};
    std::vector<T> symbol_weight(b);
    for (int a = 0; a < b; ++a) symbol_weight[a] = cardinal(y[1] - static_cast<double>(a), b);

    for (int q = 1; q <= m; ++q) {
        const T wq = cardinal(y[2] - static_cast<double>(q), m);
        if (q == m) {
            for (int i = 0; i < 3; ++i) out[i] += wq * y[i];
            continue;
        }
        for (int a = 0; a < b; ++a) {
            const T w = wq * symbol_weight[a];
            const tm::Rule& r = machine_.rule(q, a);
            const double shift = static_cast<double>(r.write - a);
            switch (r.move) {
                case Move::Stay:
                    out[0] += w * y[0];
                    out[1] += w * (y[1] + shift);
                    break;
                case Move::Right:
                    out[0] += w * (static_cast<double>(b) * y[0] + static_cast<double>(r.write));
                    out[1] += w * ((y[1] - static_cast<double>(a)) / static_cast<double>(b));
                    break;
                case Move::Left:
                    out[0] += w * quot1;
                    out[1] += w * (static_cast<double>(b) * (y[1] + shift) + res1);
                    break;
            }
            out[2] += w * static_cast<double>(r.next);
        }
    }
    return out;
}

template <class T>
std::array<T, 3> RobustMap::eval(const std::array<T, 3>& x) const {
    std::array<T, 3> y;
    for (int i = 0; i < 3; ++i) y[i] = smooth::smooth_round(x[i]);
    std::array<T, 3> out = transition(y);
    for (int i = 0; i < 3; ++i) out[i] += lambda_ * (x[i] - y[i]);
    return out;
}

template std::array<double, 3> RobustMap::transition(const std::array<double, 3>&) const;
template std::array<D3, 3> RobustMap::transition(const std::array<D3, 3>&) const;
template std::array<double, 3> RobustMap::eval(const std::array<double, 3>&) const;
template std::array<D3, 3> RobustMap::eval(const std::array<D3, 3>&) const;

Vec3 RobustMap::operator()(const Vec3& x) const { return values(eval(std::array<double, 3>{x[0], x[1], x[2]})); }

Mat3 RobustMap::jacobian(const Vec3& x) const {
    std::array<D3, 3> xd;
    for (int i = 0; i < 3; ++i) xd[i] = D3::variable(x[i], i);
    const auto out = eval(xd);
    Mat3 J;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) J(i, j) = out[i].d[j];
    return J;
}

RobustMap build_extension(const tm::TuringMachine& machine, double lambda) {
    return RobustMap(machine, lambda);
}

PerturbedMap::PerturbedMap(RobustMap base, PerturbationSpec p) : base_(std::move(base)), p_(std::move(p)) {
    if (p_->dim() != 3) throw std::invalid_argument("perturbation of a 3-D map must be 3-D");
}

Vec3 PerturbedMap::operator()(const Vec3& x) const {
    Vec3 y = base_(x);
    if (p_) y += p_->value(x);
    return y;
}

Mat3 PerturbedMap::jacobian(const Vec3& x) const {
    Mat3 J = base_.jacobian(x);
    if (p_) J += p_->jacobian(x);
    return J;
}

Vec3 to_vec(const tm::EncodedConfig& c) {
    return {c.w1.convert_to<double>(), c.w2.convert_to<double>(), static_cast<double>(c.q)};
}

namespace {

SinkResult newton(const MapFn& h, const JacFn& Dh, const Eigen::VectorXd& seed, double tol) {
    SinkResult r;
    Eigen::VectorXd x = seed;
    for (int it = 0; it <= 100; ++it) {
        const Eigen::VectorXd hx = h(x);
        r.residual = hx.cwiseAbs().maxCoeff();
        if (!std::isfinite(r.residual)) break;
        if (r.residual <= tol) {
            r.point = x;
            r.iterations = it;
            return r;
        }
        if (it == 100) break;
        const auto lu = Dh(x).fullPivLu();
        if (!lu.isInvertible()) throw NewtonDiverged("singular Jacobian during Newton iteration");
        x -= lu.solve(hx);
    }
    std::ostringstream os;
    os << "Newton did not converge in 100 iterations (residual " << r.residual << ")";
    throw NewtonDiverged(os.str());
}

}  // namespace

SinkResult find_sink(const MapFn& g, const JacFn& Dg, const Eigen::VectorXd& seed, double tol) {
    const auto n = seed.size();
    SinkResult r = newton([&](const Eigen::VectorXd& x) { return Eigen::VectorXd(g(x) - x); },
                          [&](const Eigen::VectorXd& x) {
                              return Eigen::MatrixXd(Dg(x) - Eigen::MatrixXd::Identity(n, n));
                          },
                          seed, tol);
    r.eigenvalues = Dg(r.point).eigenvalues();
    for (const auto& ev : r.eigenvalues)
        if (std::abs(ev) >= 1.0) {
            std::ostringstream os;
            os << "fixed point is not a sink: eigenvalue of modulus " << std::abs(ev);
            throw NotASink(os.str());
        }
    return r;
}

SinkResult find_sink(const PerturbedMap& g, const Vec3& seed, double tol) {
    return find_sink([&](const Eigen::VectorXd& x) { return Eigen::VectorXd(g(Vec3(x))); },
                     [&](const Eigen::VectorXd& x) { return Eigen::MatrixXd(g.jacobian(Vec3(x))); },
                     seed, tol);
}

SinkResult find_flow_sink(const MapFn& f, const JacFn& Df, const Eigen::VectorXd& seed, double tol) {
    SinkResult r = newton(f, Df, seed, tol);
    r.eigenvalues = Df(r.point).eigenvalues();
    for (const auto& ev : r.eigenvalues)
        if (ev.real() >= 0.0) {
            std::ostringstream os;
            os << "equilibrium is not a sink: eigenvalue with real part " << ev.real();
            throw NotASink(os.str());
        }
    return r;
}

std::vector<TrackRow> iterate_tracked(const PerturbedMap& g, const Vec3& xbar0,
                                      const tm::EncodedConfig& x0, std::uint64_t j_max) {
    std::vector<TrackRow> rows;
    rows.reserve(j_max + 1);
    Vec3 x = xbar0;
    tm::EncodedConfig c = x0;
    const auto& M = g.base().machine();
    for (std::uint64_t j = 0;; ++j) {
        rows.push_back({j, (x - to_vec(c)).cwiseAbs().maxCoeff()});
        if (j == j_max) break;
        x = g(x);
        c = tm::step(M, c);
    }
    return rows;
}

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::In: return "IN";
        case Verdict::NotYet: return "NOT_YET";
        case Verdict::Escaped: return "ESCAPED";
    }
    return "?";
}

Membership basin_membership(const PerturbedMap& g, const tm::BigInt& w, double eps,
                            std::uint64_t j_max, double escape_bound) {
    const Vec3 s{0.0, 0.0, static_cast<double>(g.base().machine().halting_state())};
    return basin_membership(g, Vec3(find_sink(g, s).point), w, eps, j_max, escape_bound);
}

Membership basin_membership(const PerturbedMap& g, const Vec3& sink, const tm::BigInt& w,
                            double eps, std::uint64_t j_max, double escape_bound) {
    Membership out;
    out.sink = sink;
    Vec3 x = to_vec(tm::encode_input(g.base().machine(), w));
    for (std::uint64_t j = 0;; ++j) {
        out.steps = j;
        if ((x - sink).cwiseAbs().maxCoeff() <= eps / 5.0) {
            out.verdict = Verdict::In;
            return out;
        }
        if (!x.allFinite() || x.cwiseAbs().maxCoeff() > escape_bound) {
            out.verdict = Verdict::Escaped;
            return out;
        }
        if (j == j_max) break;
        x = g(x);
    }
    out.verdict = Verdict::NotYet;
    return out;
}

void write_tracking_csv(std::ostream& out, const std::vector<TrackRow>& rows) {
    out << "j,dev\n";
    out.precision(17);
    for (const auto& r : rows) out << r.j << ',' << r.dev << '\n';
}

void write_membership_csv(std::ostream& out, const std::vector<MembershipRow>& rows) {
    out << "w,verdict,steps\n";
    for (const auto& r : rows) out << r.w << ',' << to_string(r.verdict) << ',' << r.steps << '\n';
}

}  // namespace basinforge::robust
