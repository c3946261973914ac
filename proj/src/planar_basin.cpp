#include "basinforge/planar_basin.hpp"

#include "basinforge/integrator.hpp"

#include <nlohmann/json.hpp>
#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

namespace basinforge::planar {

namespace {

using integ::Event;
using integ::Options;
using integ::Trajectory;
using V2 = integ::Vec<2>;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTolHyp = 1e-6;

Options planar_options(double tol) {
    Options o;
    o.rtol = tol;
    o.atol = tol;
    o.hmax = 0.5;
    return o;
}

auto rhs_of(const PlanarField& f) {
    return [&f](double, const V2& x, V2& dx) { dx = f(x); };
}

Event<2> disk_exit_event(double R) {
    Event<2> e;
    e.id = "exit";
    e.g = [R2 = R * R * (1 + 1e-12)](double, const V2& x) { return x.squaredNorm() - R2; };
    e.direction = +1;
    e.terminal = true;
    return e;
}

// Appends the dense output of every stored step, subdivided so that
// consecutive vertices are at most `spacing` apart.
void append_dense(Polyline& out, const Trajectory<2>& tr, double spacing) {
    if (out.empty() || (out.back() - tr.x.front()).norm() > 0) out.push_back(tr.x.front());
    for (std::size_t i = 0; i + 1 < tr.t.size(); ++i) {
        const double len = (tr.x[i + 1] - tr.x[i]).norm();
        const int pieces = std::max(1, static_cast<int>(std::ceil(len / spacing)) * 2);
        for (int p = 1; p <= pieces; ++p) {
            const double s = tr.t[i] + (tr.t[i + 1] - tr.t[i]) * p / pieces;
            out.push_back(p == pieces ? Vec2(tr.x[i + 1]) : Vec2(tr.dense[i](s)));
        }
    }
}

double segment_distance(const Vec2& x, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double L = ab.squaredNorm();
    const double s = L > 0 ? std::clamp((x - a).dot(ab) / L, 0.0, 1.0) : 0.0;
    return (x - a - s * ab).norm();
}

bool point_in_polygon(const Vec2& x, const Polyline& p) {
    bool in = false;
    const std::size_t n = p.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = p[i];
        const Vec2& b = p[j];
        if ((a.y() > x.y()) != (b.y() > x.y())) {
            const double xi = a.x() + (x.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
            if (x.x() < xi) in = !in;
        }
    }
    return in;
}

// Max over vertices of a of the distance to b, and vice versa.
double polyline_hausdorff(const Polyline& a, const Polyline& b, bool closed) {
    double d = 0.0;
    for (const auto& p : a) d = std::max(d, distance_to_polyline(p, b, closed));
    for (const auto& p : b) d = std::max(d, distance_to_polyline(p, a, closed));
    return d;
}

double polyline_gap(const Polyline& a, const Polyline& b) {
    double d = kInf;
    for (const auto& p : a) d = std::min(d, distance_to_polyline(p, b, true));
    for (const auto& p : b) d = std::min(d, distance_to_polyline(p, a, true));
    return d;
}

std::array<std::complex<double>, 2> eigen2(const Mat2& A) {
    const double tr = A.trace(), det = A.determinant();
    const std::complex<double> disc = std::sqrt(std::complex<double>(tr * tr / 4 - det));
    std::array<std::complex<double>, 2> ev{tr / 2 - disc, tr / 2 + disc};
    if (ev[0].real() > ev[1].real()) std::swap(ev[0], ev[1]);
    return ev;
}

Vec2 real_eigenvector(const Mat2& A, double lambda) {
    const Mat2 B = A - lambda * Mat2::Identity();
    Vec2 v1(-B(0, 1), B(0, 0)), v2(-B(1, 1), B(1, 0));
    Vec2 v = v1.squaredNorm() >= v2.squaredNorm() ? v1 : v2;
    if (v.squaredNorm() == 0) v = Vec2(1, 0);  // B = 0: every direction
    v.normalize();
    if (v.x() < 0 || (v.x() == 0 && v.y() < 0)) v = -v;
    return v;
}

// Solves A^T P + P A = -I.
Mat2 lyapunov_matrix(const Mat2& A) {
    Eigen::Matrix4d K = Eigen::Matrix4d::Zero();
    const Mat2 I = Mat2::Identity();
    const Mat2 At = A.transpose();
    // column-major vec: vec(At P) = (I kron At) vec(P), vec(P A) = (A^T kron I) vec(P)
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            K.block<2, 2>(2 * i, 2 * j) += I(i, j) * At;
            K.block<2, 2>(2 * i, 2 * j) += At(i, j) * I;
        }
    Eigen::Vector4d rhs(-1, 0, 0, -1);
    const Eigen::Vector4d p = K.fullPivLu().solve(rhs);
    Mat2 P;
    P << p[0], p[2], p[1], p[3];
    return 0.5 * (P + P.transpose());
}

std::optional<Vec2> newton(const PlanarField& f, Vec2 x, double R) {
    Vec2 fx = f(x);
    for (int it = 0; it < 60; ++it) {
        const Mat2 J = f.jacobian(x);
        const double det = J.determinant();
        if (!std::isfinite(det) || std::abs(det) < 1e-300) return std::nullopt;
        Vec2 step = J.partialPivLu().solve(fx);
        double lam = 1.0;
        Vec2 xn = x - step, fn = f(xn);
        for (int b = 0; b < 20 && !(fn.norm() < fx.norm()) && fx.norm() > 1e-14; ++b) {
            lam *= 0.5;
            xn = x - lam * step;
            fn = f(xn);
        }
        const bool small = (xn - x).norm() <= 1e-14 * (1 + x.norm());
        x = xn;
        fx = fn;
        if (!x.allFinite() || x.norm() > 4 * R) return std::nullopt;
        if (fx.cwiseAbs().maxCoeff() < 1e-13 || small) break;
    }
    if (!(fx.cwiseAbs().maxCoeff() < 1e-9) || x.norm() >= R) return std::nullopt;
    return x;
}

int index_of(EquilibriumKind k) { return k == EquilibriumKind::Saddle ? -1 : 1; }

// Jacobian nonsingularity over the square, in the form
// ||Df(y) - A|| < sigma_min(A) for sampled y, which makes f injective there.
bool unique_in_square(const PlanarField& f, const Vec2& e, double side) {
    const Mat2 A = f.jacobian(e);
    const double smin = Eigen::JacobiSVD<Mat2>(A).singularValues().minCoeff();
    const int n = 9;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const Vec2 y = e + side * Vec2(static_cast<double>(i) / (n - 1) - 0.5, static_cast<double>(j) / (n - 1) - 0.5);
            const Mat2 D = f.jacobian(y) - A;
            if (!(Eigen::JacobiSVD<Mat2>(D).singularValues().maxCoeff() < smin)) return false;
        }
    return true;
}

bool sink_core_inward(const PlanarField& f, const EquilibriumBox& b, int samples) {
    // boundary of {e^T P e = level}: e = sqrt(level) L^{-T} u for |u| = 1, P = L L^T
    const Eigen::LLT<Mat2> llt(b.lyapunov);
    if (llt.info() != Eigen::Success || b.level <= 0) return false;
    const Mat2 LinvT = Mat2(llt.matrixU()).inverse();
    for (int s = 0; s < samples; ++s) {
        const double a = 2 * std::numbers::pi * s / samples;
        const Vec2 e = std::sqrt(b.level) * LinvT * Vec2(std::cos(a), std::sin(a));
        if (!((b.lyapunov * e).dot(f(b.equilibrium + e)) < 0)) return false;
    }
    return true;
}

// ---- return maps -------------------------------------------------------

struct Section {
    Vec2 c, u, n;
    double sgn = 1.0;  // orientation of crossings: sgn * n.f > 0
    Vec2 at(double r) const { return c + r * u; }
};

struct Return {
    bool ok = false;
    double r = 0.0;
    double time = 0.0;
};

Return return_map(const PlanarField& f, const Section& sec, double r, double t_max,
                  Trajectory<2>* keep = nullptr) {
    Return out;
    const V2 x0 = sec.at(r);
    if (!(sec.sgn * sec.n.dot(f(x0)) > 0)) return out;
    Options o = planar_options(1e-11);
    o.store = keep != nullptr;
    Event<2> cross;
    cross.id = "section";
    cross.g = [&sec](double t, const V2& x) { return t < 1e-3 ? 1.0 : sec.sgn * sec.n.dot(x - sec.c); };
    cross.direction = +1;
    const std::vector<Event<2>> events{disk_exit_event(f.radius()), cross};
    try {
        auto tr = integ::dopri5<2>(rhs_of(f), 0.0, x0, t_max, o, events);
        if (!tr.stopped_by_event || tr.events.back().id != "section") return out;
        const Vec2 hit = tr.events.back().x;
        out.r = sec.u.dot(hit - sec.c);
        out.time = tr.events.back().t;
        out.ok = out.r > 0;
        if (keep) *keep = std::move(tr);
    } catch (const integ::IntegrationError&) {
        return out;
    }
    return out;
}

struct OrbitFit {
    bool ok = false;
    double r = 0.0, period = 0.0, slope = 0.0;
};

// Locates the unique fixed point of the return map of f on [r0, r1].
OrbitFit fit_orbit(const PlanarField& f, const Section& sec, double r0, double r1, double t_max) {
    OrbitFit out;
    constexpr int samples = 9;
    std::array<double, samples> rs{}, gs{};
    for (int i = 0; i < samples; ++i) {
        rs[i] = r0 + (r1 - r0) * i / (samples - 1);
        const Return ret = return_map(f, sec, rs[i], t_max);
        if (!ret.ok) return out;
        gs[i] = ret.r - rs[i];
    }
    int changes = 0, where = -1;
    for (int i = 0; i + 1 < samples; ++i)
        if ((gs[i] < 0) != (gs[i + 1] < 0)) {
            ++changes;
            where = i;
        }
    if (changes == 0) throw NoOrbitInHint("return map has no fixed point in the hint annulus");
    if (changes > 1) throw AmbiguousHint("return map changes sign " + std::to_string(changes) + " times in the hint annulus");
    double lo = rs[where], hi = rs[where + 1];
    const bool lo_neg = gs[where] < 0;
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        const Return ret = return_map(f, sec, mid, t_max);
        if (!ret.ok) return out;
        ((ret.r - mid < 0) == lo_neg ? lo : hi) = mid;
    }
    out.r = 0.5 * (lo + hi);
    const Return at = return_map(f, sec, out.r, t_max);
    const double d = 1e-4;
    const Return a = return_map(f, sec, out.r - d, t_max), b = return_map(f, sec, out.r + d, t_max);
    if (!at.ok || !a.ok || !b.ok) return out;
    out.period = at.time;
    out.slope = (b.r - a.r) / (2 * d);
    out.ok = true;
    return out;
}

Polyline one_turn(const PlanarField& f, const Section& sec, double r, double t_max, double spacing) {
    Trajectory<2> tr;
    const Return ret = return_map(f, sec, r, t_max, &tr);
    if (!ret.ok) throw NoOrbitInHint("trajectory from the section does not return");
    Polyline p;
    append_dense(p, tr, spacing);
    return p;
}

}  // namespace

// ---- PlanarField -----------------------------------------------------------

PlanarField::PlanarField(Eval f, Jac df, double radius, std::string name)
    : f_(std::move(f)), df_(std::move(df)), radius_(radius), name_(std::move(name)) {
    if (!(radius > 0)) throw FieldFormatError("disk radius must be positive");
}

PlanarField PlanarField::from_expressions(const std::string& fx, const std::string& fy, double radius,
                                          std::string name) {
    auto px = std::make_shared<expr::Program>(expr::Program::compile(fx));
    auto py = std::make_shared<expr::Program>(expr::Program::compile(fy));
    Eval f = [px, py](const Vec2& x) { return Vec2(px->eval(x.x(), x.y()), py->eval(x.x(), x.y())); };
    Jac df = [px, py](const Vec2& x) {
        const auto X = Dual<2>::variable(x.x(), 0), Y = Dual<2>::variable(x.y(), 1);
        const Dual<2> a = px->eval(X, Y), b = py->eval(X, Y);
        Mat2 J;
        J << a.d[0], a.d[1], b.d[0], b.d[1];
        return J;
    };
    return PlanarField(std::move(f), std::move(df), radius, std::move(name));
}

namespace {

// Keys cubic convolution kernel (a = -1/2) and its derivative.
double keys(double s) {
    s = std::abs(s);
    if (s <= 1) return (1.5 * s - 2.5) * s * s + 1;
    if (s < 2) return ((-0.5 * s + 2.5) * s - 4) * s + 2;
    return 0.0;
}

double keys_prime(double s) {
    const double sg = s < 0 ? -1.0 : 1.0;
    s = std::abs(s);
    if (s <= 1) return sg * (4.5 * s - 5) * s;
    if (s < 2) return sg * ((-1.5 * s + 5) * s - 4);
    return 0.0;
}

struct Table {
    double x0, y0, hx, hy;
    int nx, ny;
    std::vector<double> u, v;

    double g(const std::vector<double>& a, int i, int j) const {
        i = std::clamp(i, 0, nx - 1);
        j = std::clamp(j, 0, ny - 1);
        return a[static_cast<std::size_t>(j) * nx + i];
    }

    // value and gradient of both components
    void eval(const Vec2& p, Vec2& val, Mat2& jac) const {
        const double fx = (p.x() - x0) / hx, fy = (p.y() - y0) / hy;
        const int i = static_cast<int>(std::floor(fx)), j = static_cast<int>(std::floor(fy));
        const double tx = fx - i, ty = fy - j;
        double wx[4], wy[4], dx[4], dy[4];
        for (int m = 0; m < 4; ++m) {
            wx[m] = keys(tx - (m - 1));
            dx[m] = keys_prime(tx - (m - 1)) / hx;
            wy[m] = keys(ty - (m - 1));
            dy[m] = keys_prime(ty - (m - 1)) / hy;
        }
        val.setZero();
        jac.setZero();
        for (int n = 0; n < 4; ++n)
            for (int m = 0; m < 4; ++m) {
                const double a = g(u, i + m - 1, j + n - 1), b = g(v, i + m - 1, j + n - 1);
                val += Vec2(a, b) * wx[m] * wy[n];
                jac(0, 0) += a * dx[m] * wy[n];
                jac(0, 1) += a * wx[m] * dy[n];
                jac(1, 0) += b * dx[m] * wy[n];
                jac(1, 1) += b * wx[m] * dy[n];
            }
    }
};

}  // namespace

PlanarField PlanarField::from_table(double x0, double x1, int nx, double y0, double y1, int ny,
                                    std::vector<double> u, std::vector<double> v, double radius,
                                    std::string name) {
    if (nx < 2 || ny < 2 || !(x1 > x0) || !(y1 > y0))
        throw FieldFormatError("table grid needs at least 2x2 nodes over a non-empty box");
    const std::size_t n = static_cast<std::size_t>(nx) * ny;
    if (u.size() != n || v.size() != n)
        throw FieldFormatError("table has " + std::to_string(u.size()) + "/" + std::to_string(v.size()) +
                               " samples, expected " + std::to_string(n));
    if (x0 > -radius || x1 < radius || y0 > -radius || y1 < radius)
        throw FieldFormatError("table grid does not cover the disk");
    auto t = std::make_shared<Table>(Table{x0, y0, (x1 - x0) / (nx - 1), (y1 - y0) / (ny - 1), nx, ny,
                                           std::move(u), std::move(v)});
    Eval f = [t](const Vec2& p) {
        Vec2 val;
        Mat2 J;
        t->eval(p, val, J);
        return val;
    };
    Jac df = [t](const Vec2& p) {
        Vec2 val;
        Mat2 J;
        t->eval(p, val, J);
        return J;
    };
    return PlanarField(std::move(f), std::move(df), radius, std::move(name));
}

BoundaryCheck PlanarField::inward_check(int samples) const {
    BoundaryCheck c;
    c.max_dot = -kInf;
    for (int s = 0; s < samples; ++s) {
        const double a = 2 * std::numbers::pi * s / samples;
        const Vec2 x(radius_ * std::cos(a), radius_ * std::sin(a));
        const double d = f_(x).dot(x);
        c.max_dot = std::max(c.max_dot, d);
        if (!(d < 0)) ++c.violations;
    }
    c.inward = c.violations == 0;
    return c;
}

PlanarField PlanarField::plus(const PerturbationSpec& p) const {
    if (p.dim() != 2) throw std::invalid_argument("planar perturbation must be 2-dimensional");
    Eval f = [g = f_, p](const Vec2& x) -> Vec2 { return g(x) + p.value(x); };
    Jac df = [g = df_, p](const Vec2& x) -> Mat2 { return g(x) + p.jacobian(x); };
    return PlanarField(std::move(f), std::move(df), radius_, name_ + "+" + p.describe());
}

PlanarField PlanarField::reversed() const {
    Eval f = [g = f_](const Vec2& x) -> Vec2 { return -g(x); };
    Jac df = [g = df_](const Vec2& x) -> Mat2 { return -g(x); };
    return PlanarField(std::move(f), std::move(df), radius_, name_.empty() ? "reversed" : name_ + " reversed");
}

const char* to_string(EquilibriumKind k) {
    switch (k) {
        case EquilibriumKind::Sink: return "sink";
        case EquilibriumKind::Source: return "source";
        case EquilibriumKind::Saddle: return "saddle";
    }
    return "?";
}

const char* to_string(OrbitKind k) { return k == OrbitKind::Attracting ? "attracting" : "repelling"; }

const char* to_string(Status s) {
    switch (s) {
        case Status::I: return "I";
        case Status::II: return "II";
        case Status::III: return "III";
        case Status::Exited: return "exited";
        case Status::Timeout: return "timeout";
    }
    return "?";
}

// ---- equilibria ------------------------------------------------------------

int boundary_winding_number(const PlanarField& field, int samples) {
    const double R = field.radius();
    double total = 0.0, prev = 0.0;
    for (int s = 0; s <= samples; ++s) {
        const double a = 2 * std::numbers::pi * s / samples;
        const Vec2 v = field(Vec2(R * std::cos(a), R * std::sin(a)));
        const double ang = std::atan2(v.y(), v.x());
        if (s > 0) total += std::remainder(ang - prev, 2 * std::numbers::pi);
        prev = ang;
    }
    return static_cast<int>(std::lround(total / (2 * std::numbers::pi)));
}

bool check_invariance(const PlanarField& field, const EquilibriumBox& sink, int samples) {
    return sink.kind == EquilibriumKind::Sink && sink_core_inward(field, sink, samples);
}

std::vector<EquilibriumBox> find_equilibria(const PlanarField& field, int seed_resolution, int k) {
    if (seed_resolution < 2) throw std::invalid_argument("seed resolution must be at least 2");
    if (k < 1) throw std::invalid_argument("k must be positive");
    const double R = field.radius();
    std::vector<Vec2> roots;
    for (int i = 0; i < seed_resolution; ++i)
        for (int j = 0; j < seed_resolution; ++j) {
            const Vec2 s(-R + 2 * R * (i + 0.5) / seed_resolution, -R + 2 * R * (j + 0.5) / seed_resolution);
            if (s.norm() > R) continue;
            const auto r = newton(field, s, R);
            if (!r) continue;
            const bool seen = std::any_of(roots.begin(), roots.end(), [&](const Vec2& q) { return (q - *r).norm() < 1e-6; });
            if (!seen) roots.push_back(*r);
        }
    std::sort(roots.begin(), roots.end(), [](const Vec2& a, const Vec2& b) {
        return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
    });

    std::vector<EquilibriumBox> boxes;
    int index_sum = 0;
    for (const Vec2& e : roots) {
        EquilibriumBox b;
        b.equilibrium = e;
        b.center = e;
        const Mat2 A = field.jacobian(e);
        b.eigenvalues = eigen2(A);
        const double re0 = b.eigenvalues[0].real(), re1 = b.eigenvalues[1].real();
        if (std::abs(re0) <= kTolHyp || std::abs(re1) <= kTolHyp) {
            std::ostringstream os;
            os << "equilibrium (" << e.x() << ", " << e.y() << ") is not hyperbolic: eigenvalues "
               << b.eigenvalues[0] << ", " << b.eigenvalues[1];
            throw NonHyperbolicEquilibrium(os.str());
        }
        b.kind = re1 < 0 ? EquilibriumKind::Sink : re0 > 0 ? EquilibriumKind::Source : EquilibriumKind::Saddle;
        if (b.kind == EquilibriumKind::Saddle) {
            b.stable_direction = real_eigenvector(A, re0);
            b.unstable_direction = real_eigenvector(A, re1);
        }
        index_sum += index_of(b.kind);

        double side = 0.999 / k;
        for (const Vec2& q : roots)
            if ((q - e).norm() > 0) side = std::min(side, 0.5 * (q - e).cwiseAbs().maxCoeff());
        side = std::min(side, 0.99 * std::sqrt(2.0) * (R - e.norm()));
        bool ok = false;
        for (int shrink = 0; shrink < 60 && !ok; ++shrink, side *= 0.7) {
            if (!unique_in_square(field, e, side)) continue;
            if (b.kind == EquilibriumKind::Sink) {
                b.lyapunov = lyapunov_matrix(A);
                const double lmin = Eigen::SelfAdjointEigenSolver<Mat2>(b.lyapunov).eigenvalues().minCoeff();
                b.side = side;
                b.level = 0.999 * lmin * (side / 2) * (side / 2);
                if (!sink_core_inward(field, b, 64)) continue;
            }
            b.side = side;
            ok = true;
        }
        if (!ok) {
            std::ostringstream os;
            os << "no certified box around the equilibrium (" << e.x() << ", " << e.y() << ")";
            throw NewtonMiss(os.str());
        }
        boxes.push_back(b);
    }
    const int winding = boundary_winding_number(field);
    if (winding != index_sum) {
        std::ostringstream os;
        os << "equilibrium indices sum to " << index_sum << " but the boundary winding number is " << winding
           << "; refine the seed grid";
        throw NewtonMiss(os.str());
    }
    return boxes;
}

// ---- periodic orbits -------------------------------------------------------

bool PeriodicAnnulus::contains(const Vec2& x) const {
    return point_in_polygon(x, outer) && !point_in_polygon(x, inner);
}

std::vector<PeriodicAnnulus> locate_periodic_annuli(const PlanarField& field, const std::vector<PeriodicHint>& hints,
                                                    int k) {
    std::vector<PeriodicAnnulus> out;
    constexpr double t_max = 100.0;
    for (const auto& h : hints) {
        if (!(h.r_outer > h.r_inner) || h.r_inner <= 0) throw std::invalid_argument("hint needs 0 < r_inner < r_outer");
        Section sec;
        sec.c = h.center;
        sec.u = Vec2(std::cos(h.angle), std::sin(h.angle));
        sec.n = Vec2(-sec.u.y(), sec.u.x());
        const double probe = sec.n.dot(field(sec.at(0.5 * (h.r_inner + h.r_outer))));
        sec.sgn = probe >= 0 ? 1.0 : -1.0;

        PeriodicAnnulus a;
        a.hint = h;
        // trapping arcs are built with whichever time direction attracts
        const PlanarField back = field.reversed();
        const PlanarField* attract = &field;
        OrbitFit fit = fit_orbit(field, sec, h.r_inner, h.r_outer, t_max);
        if (fit.ok && std::abs(fit.slope) < 1) {
            a.kind = OrbitKind::Attracting;
            a.multiplier = fit.slope;
        } else {
            Section rs = sec;
            rs.sgn = -sec.sgn;
            const OrbitFit rfit = fit_orbit(back, rs, h.r_inner, h.r_outer, t_max);
            if (!rfit.ok) throw NoOrbitInHint("return map undefined in both time directions inside the hint");
            if (std::abs(rfit.slope) >= 1) throw AmbiguousHint("return map derivative is 1 at the orbit");
            a.kind = OrbitKind::Repelling;
            a.multiplier = 1.0 / rfit.slope;
            fit = rfit;
            sec = rs;
            attract = &back;
        }
        a.section_radius = fit.r;
        a.period = fit.period;
        const double spacing = 0.01;
        a.orbit = one_turn(*attract, sec, fit.r, t_max, spacing);

        double delta = std::min({1.0 / (8 * k), 0.5 * (fit.r - h.r_inner), 0.5 * (h.r_outer - fit.r)});
        for (int tries = 0;; ++tries, delta *= 0.5) {
            if (tries > 20) throw NoOrbitInHint("could not build a thin trapping annulus");
            Polyline ib = one_turn(*attract, sec, fit.r - delta, t_max, spacing);
            Polyline ob = one_turn(*attract, sec, fit.r + delta, t_max, spacing);
            if (polyline_hausdorff(ib, a.orbit, true) >= 1.0 / (4 * k) ||
                polyline_hausdorff(ob, a.orbit, true) >= 1.0 / (4 * k))
                continue;
            a.inner = std::move(ib);
            a.outer = std::move(ob);
            break;
        }
        a.margin = polyline_gap(a.inner, a.outer);
        if (!(a.margin > 0)) throw AmbiguousHint("inner and outer boundaries touch");
        out.push_back(std::move(a));
    }
    return out;
}

bool check_invariance(const PlanarField& field, const PeriodicAnnulus& a, int samples) {
    const PlanarField f = a.kind == OrbitKind::Attracting ? field : field.reversed();
    // the closing segments are transversal, crossed in the orbit's direction
    const Vec2 c = a.hint.center;
    const Vec2 u(std::cos(a.hint.angle), std::sin(a.hint.angle));
    const Vec2 n(-u.y(), u.x());
    const double sgn = n.dot(f(c + a.section_radius * u)) >= 0 ? 1.0 : -1.0;
    for (const Polyline* p : {&a.inner, &a.outer}) {
        const Vec2 s0 = p->back(), s1 = p->front();
        for (int i = 0; i <= samples; ++i) {
            const Vec2 x = s0 + (s1 - s0) * static_cast<double>(i) / samples;
            if (!(sgn * n.dot(f(x)) > 0)) return false;
        }
    }
    // points strictly inside stay inside over two periods
    Options o = planar_options(1e-10);
    o.store = false;
    const double r_in = u.dot(a.inner.front() - c), r_out = u.dot(a.outer.front() - c);
    for (int i = 1; i < samples; ++i) {
        const double r = r_in + (r_out - r_in) * i / samples;
        V2 x = c + r * u;
        for (int turn = 0; turn < 8; ++turn) {
            const auto tr = integ::dopri5<2>(rhs_of(f), 0.0, x, a.period / 4, o);
            x = tr.final_state();
            // IB and OB are chord approximations of curved arcs
            const bool on_boundary = std::min(distance_to_polyline(x, a.inner, true), distance_to_polyline(x, a.outer, true)) < 1e-4;
            if (!a.contains(x) && !on_boundary) return false;
        }
    }
    return true;
}

// ---- inventory -------------------------------------------------------------

int Inventory::num_sinks() const {
    return static_cast<int>(std::count_if(equilibria.begin(), equilibria.end(),
                                          [](const auto& b) { return b.kind == EquilibriumKind::Sink; }));
}

const EquilibriumBox& Inventory::sink(int i) const {
    int seen = 0;
    for (const auto& b : equilibria)
        if (b.kind == EquilibriumKind::Sink && ++seen == i) return b;
    throw std::out_of_range("sink index " + std::to_string(i) + " out of range 1.." + std::to_string(num_sinks()));
}

std::vector<const EquilibriumBox*> Inventory::sinks() const {
    std::vector<const EquilibriumBox*> v;
    for (const auto& b : equilibria)
        if (b.kind == EquilibriumKind::Sink) v.push_back(&b);
    return v;
}

std::vector<const EquilibriumBox*> Inventory::saddles() const {
    std::vector<const EquilibriumBox*> v;
    for (const auto& b : equilibria)
        if (b.kind == EquilibriumKind::Saddle) v.push_back(&b);
    return v;
}

bool Inventory::in_excluded(const Vec2& x) const {
    for (const auto& b : equilibria)
        if (b.kind == EquilibriumKind::Source && b.in_square(x)) return true;
    for (const auto& a : annuli)
        if (a.kind == OrbitKind::Repelling && a.contains(x)) return true;
    return false;
}

Inventory build_inventory(const PlanarField& field, const std::vector<PeriodicHint>& hints, int k,
                          int seed_resolution) {
    Inventory inv;
    inv.equilibria = find_equilibria(field, seed_resolution, k);
    inv.annuli = locate_periodic_annuli(field, hints, k);
    return inv;
}

// ---- classification --------------------------------------------------------

Classification classify_point(const Vec2& x, const Inventory& inv, const PlanarField& field, double T_max,
                              int target_sink, double tol) {
    const double R = field.radius();
    if (x.norm() > R) return {Status::Exited, 0, 0.0};
    const auto sinks = inv.sinks();
    if (target_sink < 0 || target_sink > static_cast<int>(sinks.size()))
        throw std::out_of_range("target sink " + std::to_string(target_sink) + " out of range");

    auto status_at = [&](const Vec2& p, double t) -> std::optional<Classification> {
        for (std::size_t j = 0; j < sinks.size(); ++j)
            if (sinks[j]->in_core(p)) {
                const int idx = static_cast<int>(j) + 1;
                return Classification{idx == target_sink ? Status::I : Status::II, idx, t};
            }
        int i = 0;
        for (const auto& a : inv.annuli) {
            ++i;
            if (a.kind == OrbitKind::Attracting && a.contains(p)) return Classification{Status::III, i, t};
        }
        return std::nullopt;
    };

    Options o = planar_options(tol);
    o.store = false;
    const std::vector<Event<2>> events{disk_exit_event(R)};
    V2 state = x;
    double t = 0.0;
    for (;;) {
        if (auto s = status_at(state, t)) return *s;
        if (t >= T_max) return {Status::Timeout, 0, t};
        const auto tr = integ::dopri5<2>(rhs_of(field), t, state, t + 1.0, o, events);
        if (tr.stopped_by_event) return {Status::Exited, 0, tr.final_time()};
        state = tr.final_state();
        o.h0 = tr.h_next;
        t += 1.0;
    }
}

Polyline stable_manifold_curve(const EquilibriumBox& saddle, const PlanarField& field, double T,
                               const Inventory* inv, double h) {
    if (saddle.kind != EquilibriumKind::Saddle) throw std::invalid_argument("stable manifold needs a saddle");
    const PlanarField back = field.reversed();
    Options o = planar_options(1e-10);
    const std::vector<Event<2>> events{disk_exit_event(field.radius())};

    auto branch = [&](double sign) {
        const V2 z = saddle.equilibrium + sign * h * saddle.stable_direction;
        const auto tr = integ::dopri5<2>(rhs_of(back), 0.0, z, T, o, events);
        Polyline p;
        p.push_back(saddle.equilibrium);
        append_dense(p, tr, 0.01);
        // stop inside C_B; another saddle's box means a saddle connection
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!inv) break;
            for (const auto* s : inv->saddles())
                if ((s->equilibrium - saddle.equilibrium).norm() > 1e-9 && s->in_square(p[i])) {
                    std::ostringstream os;
                    os << "backward orbit from saddle (" << saddle.equilibrium.x() << ", " << saddle.equilibrium.y()
                       << ") reaches the saddle box at (" << s->equilibrium.x() << ", " << s->equilibrium.y() << ")";
                    throw SaddleConnectionSuspected(os.str());
                }
            if (inv->in_excluded(p[i])) {
                p.resize(i + 1);
                break;
            }
        }
        return p;
    };
    Polyline a = branch(+1.0), b = branch(-1.0);
    std::reverse(a.begin(), a.end());
    a.insert(a.end(), b.begin() + 1, b.end());  // both branches start at the saddle
    return a;
}

// ---- rasters ---------------------------------------------------------------

Raster::Raster(int l_, double R_) : l(l_), n(1 << l_), R(R_), labels(static_cast<std::size_t>(n) * n, 0) {
    if (l_ < 1 || l_ > 14) throw std::invalid_argument("raster level must be in 1..14");
}

std::size_t Raster::count(std::uint8_t code) const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), code)); }

int default_level(double R, int k) {
    int l = 1;
    while (2 * R / (1 << l) > 1.0 / (4 * k)) ++l;
    return l;
}

int worker_count(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("BASIN_FORGE_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

double distance_to_polyline(const Vec2& x, const Polyline& p, bool closed) {
    if (p.empty()) return kInf;
    if (p.size() == 1) return (x - p[0]).norm();
    double d = kInf;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) d = std::min(d, segment_distance(x, p[i], p[i + 1]));
    if (closed) d = std::min(d, segment_distance(x, p.back(), p.front()));
    return d;
}

namespace {

template <class Body>
void parallel_rows(int n, int threads, Body&& body) {
    tbb::task_arena arena(worker_count(threads));
    arena.execute([&] {
        tbb::parallel_for(tbb::blocked_range<int>(0, n), [&](const tbb::blocked_range<int>& r) {
            for (int j = r.begin(); j < r.end(); ++j) body(j);
        });
    });
}

double distance_to_excluded(const Vec2& x, const Inventory& inv) {
    double d = kInf;
    for (const auto& b : inv.equilibria)
        if (b.kind == EquilibriumKind::Source) {
            const Vec2 q = ((x - b.center).cwiseAbs().array() - b.side / 2).cwiseMax(0.0).matrix();
            d = std::min(d, q.norm());
        }
    for (const auto& a : inv.annuli)
        if (a.kind == OrbitKind::Repelling) {
            if (a.contains(x)) return 0.0;
            d = std::min({d, distance_to_polyline(x, a.inner, true), distance_to_polyline(x, a.outer, true)});
        }
    return d;
}

}  // namespace

BasinResult compute_basin(const PlanarField& field, const Inventory& inv, int target_sink, int k,
                          const BasinOptions& opt) {
    if (k < 1) throw std::invalid_argument("k must be positive");
    if (target_sink < 1 || target_sink > inv.num_sinks())
        throw std::out_of_range("target sink " + std::to_string(target_sink) + " out of range 1.." +
                                std::to_string(inv.num_sinks()));
    const double R = field.radius();
    BasinResult res;
    res.raster = Raster(opt.l > 0 ? opt.l : default_level(R, k), R);
    res.target_code = label::SinkBase + target_sink;
    for (const auto* s : inv.saddles()) res.gammas.push_back(stable_manifold_curve(*s, field, 50.0, &inv));

    Raster& r = res.raster;
    const double band = 1.0 / k;
    std::atomic<std::size_t> classified{0}, timeouts{0}, exited{0}, margin{0}, excluded{0};
    parallel_rows(r.n, opt.threads, [&](int j) {
        for (int i = 0; i < r.n; ++i) {
            const Vec2 x = r.center(i, j);
            std::uint8_t code = label::Outside;
            if (x.norm() > R) {
                r.at(i, j) = code;
                continue;
            }
            if (inv.in_excluded(x)) {
                code = label::Excluded;
                ++excluded;
            } else {
                bool near = distance_to_excluded(x, inv) <= band;
                for (const auto& g : res.gammas)
                    if (!near && distance_to_polyline(x, g) <= band) near = true;
                if (near) {
                    code = label::Margin;
                    ++margin;
                } else {
                    const Classification c = classify_point(x, inv, field, opt.T_max, target_sink, opt.tol);
                    ++classified;
                    switch (c.status) {
                        case Status::I:
                        case Status::II: code = static_cast<std::uint8_t>(label::SinkBase + c.index); break;
                        case Status::III: code = static_cast<std::uint8_t>(label::CycleBase + c.index); break;
                        case Status::Exited: code = label::Exited; ++exited; break;
                        case Status::Timeout: code = label::Unknown; ++timeouts; break;
                    }
                }
            }
            r.at(i, j) = code;
        }
    });
    res.classified = classified;
    res.timeouts = timeouts;
    res.exited = exited;
    res.margin = margin;
    res.excluded = excluded;
    if (static_cast<double>(res.timeouts) > opt.timeout_fraction * static_cast<double>(res.classified)) {
        std::ostringstream os;
        os << res.timeouts << " of " << res.classified << " classified cells timed out at T_max=" << opt.T_max
           << "; the inventory is missing an attractor or T_max is too small";
        throw IncompleteInventory(os.str(), res.timeouts, res.classified);
    }
    return res;
}

Raster brute_force_classify(const PlanarField& field, int l, double T, const std::vector<Vec2>& sinks,
                            const std::vector<Polyline>& cycles, double snap, int threads) {
    const double R = field.radius();
    Raster r(l, R);
    Options o = planar_options(1e-9);
    o.store = false;
    const std::vector<Event<2>> events{disk_exit_event(R)};
    parallel_rows(r.n, threads, [&](int j) {
        for (int i = 0; i < r.n; ++i) {
            const Vec2 x = r.center(i, j);
            if (x.norm() > R) {
                r.at(i, j) = label::Outside;
                continue;
            }
            const auto tr = integ::dopri5<2>(rhs_of(field), 0.0, V2(x), T, o, events);
            if (tr.stopped_by_event) {
                r.at(i, j) = label::Exited;
                continue;
            }
            const Vec2 e = tr.final_state();
            std::uint8_t code = label::Unknown;
            double best = snap;
            for (std::size_t s = 0; s < sinks.size(); ++s) {
                const double d = (e - sinks[s]).norm();
                if (d < best) {
                    best = d;
                    code = static_cast<std::uint8_t>(label::SinkBase + s + 1);
                }
            }
            for (std::size_t c = 0; c < cycles.size(); ++c) {
                const double d = distance_to_polyline(e, cycles[c], true);
                if (d < best) {
                    best = d;
                    code = static_cast<std::uint8_t>(label::CycleBase + c + 1);
                }
            }
            r.at(i, j) = code;
        }
    });
    return r;
}

namespace {

// Exact squared Euclidean distance transform (Felzenszwalb-Huttenlocher), in
// cell units, of the cells where `mask` is set.
std::vector<double> edt(const std::vector<char>& mask, int n) {
    const std::size_t N = static_cast<std::size_t>(n);
    std::vector<double> d(N * N);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = mask[i] ? 0.0 : kInf;
    std::vector<double> f(N), out(N), z(N + 1);
    std::vector<int> v(N);
    // lower envelope of the parabolas (q - p)^2 + f[p] over the finite sites
    auto transform_line = [&] {
        int k = -1;
        for (int q = 0; q < n; ++q) {
            if (f[q] == kInf) continue;
            if (k < 0) {
                k = 0;
                v[0] = q;
                z[0] = -kInf;
                z[1] = kInf;
                continue;
            }
            double s;
            for (;;) {
                const int p = v[k];
                s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
                if (s > z[k]) break;
                --k;
            }
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = kInf;
        }
        if (k < 0) {
            std::fill(out.begin(), out.end(), kInf);
            return;
        }
        k = 0;
        for (int q = 0; q < n; ++q) {
            while (z[k + 1] < q) ++k;
            const double dq = q - v[k];
            out[q] = dq * dq + f[v[k]];
        }
    };
    for (std::size_t j = 0; j < N; ++j) {  // rows
        for (std::size_t i = 0; i < N; ++i) f[i] = d[j * N + i];
        transform_line();
        for (std::size_t i = 0; i < N; ++i) d[j * N + i] = out[i];
    }
    for (std::size_t i = 0; i < N; ++i) {  // columns
        for (std::size_t j = 0; j < N; ++j) f[j] = d[j * N + i];
        transform_line();
        for (std::size_t j = 0; j < N; ++j) d[j * N + i] = out[j];
    }
    return d;
}

}  // namespace

double hausdorff(const Raster& a, const Raster& b, const std::function<bool(std::uint8_t)>& in_set) {
    if (a.n != b.n || a.R != b.R) throw GridMismatch("rasters do not share a grid");
    const std::size_t N = a.labels.size();
    std::vector<char> ma(N), mb(N);
    bool any_a = false, any_b = false;
    for (std::size_t i = 0; i < N; ++i) {
        ma[i] = in_set(a.labels[i]);
        mb[i] = in_set(b.labels[i]);
        any_a |= ma[i] != 0;
        any_b |= mb[i] != 0;
    }
    if (!any_a && !any_b) return 0.0;
    if (!any_a || !any_b) return kInf;
    const auto da = edt(ma, a.n), db = edt(mb, a.n);
    double worst = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        if (ma[i]) worst = std::max(worst, db[i]);
        if (mb[i]) worst = std::max(worst, da[i]);
    }
    return std::sqrt(worst) * a.cell();
}

std::function<bool(std::uint8_t)> complement_of(int target_code) {
    return [target_code](std::uint8_t c) { return c != label::Outside && c != target_code; };
}

double agreement(const Raster& a, const Raster& b) {
    if (a.n != b.n || a.R != b.R) throw GridMismatch("rasters do not share a grid");
    std::size_t total = 0, same = 0;
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
        const auto x = a.labels[i], y = b.labels[i];
        if (x == label::Outside || x == label::Margin || x == label::Excluded) continue;
        if (y == label::Outside || y == label::Margin || y == label::Excluded) continue;
        ++total;
        same += x == y;
    }
    return total ? static_cast<double>(same) / static_cast<double>(total) : 1.0;
}

// ---- I/O -------------------------------------------------------------------

void write_pgm(std::ostream& out, const Raster& r) {
    out << "P5\n" << r.n << " " << r.n << "\n255\n";
    out.write(reinterpret_cast<const char*>(r.labels.data()), static_cast<std::streamsize>(r.labels.size()));
}

Raster read_pgm(std::istream& in, double R) {
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic;
    auto skip_comments = [&] {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string line;
            std::getline(in, line);
            in >> std::ws;
        }
    };
    skip_comments();
    in >> w;
    skip_comments();
    in >> h;
    skip_comments();
    in >> maxval;
    in.get();
    if (magic != "P5" || w != h || w <= 0 || maxval != 255 || (w & (w - 1)) != 0)
        throw FieldFormatError("not a square power-of-two P5 label raster");
    int l = 0;
    while ((1 << l) < w) ++l;
    Raster r(l, R);
    in.read(reinterpret_cast<char*>(r.labels.data()), static_cast<std::streamsize>(r.labels.size()));
    if (!in) throw FieldFormatError("truncated PGM raster");
    return r;
}

std::string legend_json(const Raster& r, const Inventory& inv, int target_sink) {
    nlohmann::ordered_json j;
    j["grid"] = {{"level", r.l}, {"cells", r.n}, {"radius", r.R}, {"cell", r.cell()}, {"row0", "top"}};
    nlohmann::ordered_json codes;
    codes[std::to_string(label::Outside)] = "outside disk";
    codes[std::to_string(label::Excluded)] = "excluded (source box or repelling annulus)";
    codes[std::to_string(label::Margin)] = "boundary margin";
    codes[std::to_string(label::Unknown)] = "unknown (timeout)";
    codes[std::to_string(label::Exited)] = "left the disk";
    int idx = 0;
    for (const auto* s : inv.sinks()) {
        ++idx;
        std::ostringstream os;
        os << "sink " << idx << " at (" << s->equilibrium.x() << ", " << s->equilibrium.y() << ")"
           << (idx == target_sink ? " [target]" : "");
        codes[std::to_string(label::SinkBase + idx)] = os.str();
    }
    idx = 0;
    for (const auto& a : inv.annuli) {
        ++idx;
        if (a.kind == OrbitKind::Attracting)
            codes[std::to_string(label::CycleBase + idx)] = "attracting periodic orbit " + std::to_string(idx);
    }
    j["labels"] = codes;
    nlohmann::ordered_json counts;
    std::array<std::size_t, 256> hist{};
    for (auto c : r.labels) ++hist[c];
    for (int c = 0; c < 256; ++c)
        if (hist[c]) counts[std::to_string(c)] = hist[c];
    j["counts"] = counts;
    j["target"] = label::SinkBase + target_sink;
    return j.dump(2);
}

void write_polylines_csv(std::ostream& out, const std::vector<Polyline>& curves) {
    out << "curve,vertex,x,y\n";
    out.precision(17);
    for (std::size_t c = 0; c < curves.size(); ++c)
        for (std::size_t v = 0; v < curves[c].size(); ++v)
            out << c + 1 << "," << v << "," << curves[c][v].x() << "," << curves[c][v].y() << "\n";
}

void write_annuli_csv(std::ostream& out, const std::vector<PeriodicAnnulus>& annuli) {
    out << "annulus,kind,curve,vertex,x,y\n";
    out.precision(17);
    for (std::size_t i = 0; i < annuli.size(); ++i) {
        const auto& a = annuli[i];
        const std::pair<const char*, const Polyline*> curves[] = {{"orbit", &a.orbit}, {"inner", &a.inner}, {"outer", &a.outer}};
        for (const auto& [name, p] : curves)
            for (std::size_t v = 0; v < p->size(); ++v)
                out << i + 1 << "," << to_string(a.kind) << "," << name << "," << v << "," << (*p)[v].x() << ","
                    << (*p)[v].y() << "\n";
    }
}

FieldManifest load_field_manifest(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FieldFormatError(std::string("field manifest is not valid JSON: ") + e.what());
    }
    try {
        const double R = j.at("radius").get<double>();
        const std::string name = j.value("name", "");
        std::optional<PlanarField> field;
        if (j.contains("f")) {
            const auto& f = j.at("f");
            if (!f.is_array() || f.size() != 2) throw FieldFormatError("\"f\" must be [fx, fy]");
            try {
                field = PlanarField::from_expressions(f[0].get<std::string>(), f[1].get<std::string>(), R, name);
            } catch (const expr::ParseError& e) {
                throw FieldFormatError(std::string("field expression: ") + e.what());
            }
        } else if (j.contains("table")) {
            const auto& t = j.at("table");
            const auto xr = t.at("x").get<std::vector<double>>(), yr = t.at("y").get<std::vector<double>>();
            if (xr.size() != 2 || yr.size() != 2) throw FieldFormatError("table ranges must be [lo, hi]");
            field = PlanarField::from_table(xr[0], xr[1], t.at("nx").get<int>(), yr[0], yr[1], t.at("ny").get<int>(),
                                            t.at("u").get<std::vector<double>>(), t.at("v").get<std::vector<double>>(),
                                            R, name);
        } else {
            throw FieldFormatError("field manifest needs \"f\" or \"table\"");
        }
        FieldManifest m{std::move(*field), {}, {}, j.value("T_max", 200.0)};
        for (const auto& h : j.value("hints", nlohmann::json::array())) {
            PeriodicHint hint;
            const auto c = h.value("center", std::vector<double>{0.0, 0.0});
            if (c.size() != 2) throw FieldFormatError("hint center must be [x, y]");
            hint.center = Vec2(c[0], c[1]);
            hint.r_inner = h.at("r_inner").get<double>();
            hint.r_outer = h.at("r_outer").get<double>();
            hint.angle = h.value("angle", 0.0);
            m.hints.push_back(hint);
        }
        for (const auto& s : j.value("sinks", nlohmann::json::array())) {
            const auto v = s.get<std::vector<double>>();
            if (v.size() != 2) throw FieldFormatError("sink must be [x, y]");
            m.sinks.emplace_back(v[0], v[1]);
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FieldFormatError(std::string("field manifest: ") + e.what());
    }
}

FieldManifest load_field_manifest_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FieldFormatError("cannot open field manifest " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_field_manifest(ss.str());
}

}  // namespace basinforge::planar
