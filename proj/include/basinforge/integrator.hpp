#pragma once

// Dormand-Prince 5(4) with PI step control, continuous-extension dense output and
// sign-change event location. The core is a template over the state size so
// planar sweeps run allocation-free on Eigen fixed-size vectors; the 7-D
// machine fields use the dynamic instantiation through the Field wrappers.

#include "basinforge/ode_system.hpp"
#include "basinforge/perturbation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace basinforge::integ {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;

class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, double t) : std::runtime_error(what), t_(t) {}
    double time() const { return t_; }

private:
    double t_;
};

class StepUnderflow : public IntegrationError {
public:
    using IntegrationError::IntegrationError;
};

class RegionExit : public IntegrationError {
public:
    using IntegrationError::IntegrationError;
};

struct Options {
    double rtol = 1e-10;
    double atol = 1e-10;
    double h0 = 0.0;  // 0: automatic initial step
    double hmax = std::numeric_limits<double>::infinity();
    double hmin = 1e-14;
    std::uint64_t max_steps = 100'000'000;
    bool store = true;  // keep every accepted step and its dense segment; else only the endpoint
    /// Optional admissible box; leaving it raises RegionExit.
    Eigen::VectorXd box_lo, box_hi;
};

/// An event fires where g changes sign (direction +1: - to +, -1: + to -,
/// 0: either). With fire_at_start, g(t0, x0) >= 0 fires immediately.
template <int N>
struct Event {
    std::string id;
    std::function<double(double, const Vec<N>&)> g;
    bool terminal = true;
    int direction = 0;
    bool fire_at_start = false;
};

template <int N>
struct EventHit {
    double t;
    std::string id;
    Vec<N> x;
};

/// Continuous extension of one accepted step (Dormand-Prince, order 4).
template <int N>
struct DenseSegment {
    double t0 = 0.0, h = 0.0;
    Vec<N> r1, r2, r3, r4, r5;

    Vec<N> operator()(double time) const {
        const double s = (time - t0) / h;
        const double s1 = 1.0 - s;
        return r1 + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)));
    }
};

template <int N>
struct Trajectory {
    std::vector<double> t;
    std::vector<Vec<N>> x;
    std::vector<Vec<N>> dx;
    /// dense[i] covers [t[i], t[i+1]] (only when Options::store is set)
    std::vector<DenseSegment<N>> dense;
    std::vector<EventHit<N>> events;
    bool stopped_by_event = false;
    std::uint64_t accepted = 0, rejected = 0, evaluations = 0;
    double h_next = 0.0;  // proposed size of the next step, for resuming

    const Vec<N>& final_state() const { return x.back(); }
    double final_time() const { return t.back(); }

    /// Dense output between stored steps.
    Vec<N> at(double time) const {
        if (time <= t.front()) return x.front();
        if (time >= t.back()) return x.back();
        const auto it = std::upper_bound(t.begin(), t.end(), time);
        const std::size_t i = static_cast<std::size_t>(it - t.begin()) - 1;
        if (i >= dense.size()) throw std::logic_error("trajectory was integrated without dense output");
        return dense[i](time);
    }
};

namespace detail {

template <int N>
double error_norm(const Vec<N>& e, const Vec<N>& x0, const Vec<N>& x1, const Options& o) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < e.size(); ++i) {
        const double sc = o.atol + o.rtol * std::max(std::abs(x0[i]), std::abs(x1[i]));
        const double r = e[i] / sc;
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(e.size()));
}

}  // namespace detail

/// Integrates x' = f(t, x) from t0 to t1 > t0. f has signature
/// void(double t, const Vec<N>& x, Vec<N>& dx).
template <int N, class F>
Trajectory<N> dopri5(F&& f, double t0, Vec<N> x0, double t1, const Options& o,
                     const std::vector<Event<N>>& events = {}) {
    // Butcher tableau
    constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                     a65 = -5103.0 / 18656;
    constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                     a76 = 11.0 / 84;
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                     e6 = 22.0 / 525, e7 = -1.0 / 40;
    constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                     d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                     d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

    Trajectory<N> tr;
    const Eigen::Index n = x0.size();
    Vec<N> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y(n), x1(n), err(n);

    auto call = [&](double t, const Vec<N>& x, Vec<N>& out) {
        f(t, x, out);
        ++tr.evaluations;
    };

    double t = t0;
    Vec<N> x = x0;
    call(t, x, k1);
    auto push = [&](double tt, const Vec<N>& xx, const Vec<N>& ff) {
        if (!o.store && !tr.t.empty()) {
            tr.t.back() = tt;
            tr.x.back() = xx;
            tr.dx.back() = ff;
            return;
        }
        tr.t.push_back(tt);
        tr.x.push_back(xx);
        tr.dx.push_back(ff);
    };
    push(t, x, k1);

    std::vector<double> gval(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        gval[i] = events[i].g(t, x);
        if (events[i].fire_at_start && gval[i] >= 0) {
            tr.events.push_back({t, events[i].id, x});
            if (events[i].terminal) {
                tr.stopped_by_event = true;
                return tr;
            }
        }
    }
    if (!(t1 > t0)) return tr;

    const bool boxed = o.box_lo.size() == n && o.box_hi.size() == n;
    auto check_box = [&](double tt, const Vec<N>& xx) {
        if (!boxed) return;
        for (Eigen::Index i = 0; i < n; ++i)
            if (xx[i] < o.box_lo[i] || xx[i] > o.box_hi[i]) {
                std::ostringstream os;
                os << "state left the admissible box at t=" << tt << " (component " << i << " = " << xx[i] << ")";
                throw RegionExit(os.str(), tt);
            }
    };

    // initial step (Hairer, Norsett & Wanner, II.4)
    double h = o.h0;
    if (h <= 0) {
        double d0 = 0, d1 = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double sc = o.atol + o.rtol * std::abs(x[i]);
            d0 += (x[i] / sc) * (x[i] / sc);
            d1 += (k1[i] / sc) * (k1[i] / sc);
        }
        d0 = std::sqrt(d0 / n);
        d1 = std::sqrt(d1 / n);
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min(h0, t1 - t0);
        y = x + h0 * k1;
        call(t + h0, y, k2);
        double d2 = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double sc = o.atol + o.rtol * std::abs(x[i]);
            d2 += ((k2[i] - k1[i]) / sc) * ((k2[i] - k1[i]) / sc);
        }
        d2 = std::sqrt(d2 / n) / h0;
        const double dm = std::max(d1, d2);
        const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
        h = std::min(100 * h0, h1);
    }
    h = std::min({h, o.hmax, t1 - t0});

    constexpr double beta = 0.04, expo1 = 0.2 - beta * 0.75, safe = 0.9;
    double facold = 1e-4;
    bool last_rejected = false;
    double h_planned = h;

    while (t < t1) {
        if (tr.accepted + tr.rejected >= o.max_steps)
            throw IntegrationError("step budget exhausted at t=" + std::to_string(t), t);
        if (h < o.hmin) {
            std::ostringstream os;
            os << "step size " << h << " below " << o.hmin << " at t=" << t;
            throw StepUnderflow(os.str(), t);
        }
        const bool final_step = t + h >= t1;
        const double hs = final_step ? t1 - t : h;
        h_planned = h;

        y = x + hs * a21 * k1;
        call(t + c2 * hs, y, k2);
        y = x + hs * (a31 * k1 + a32 * k2);
        call(t + c3 * hs, y, k3);
        y = x + hs * (a41 * k1 + a42 * k2 + a43 * k3);
        call(t + c4 * hs, y, k4);
        y = x + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        call(t + c5 * hs, y, k5);
        y = x + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        call(t + hs, y, k6);
        x1 = x + hs * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
        call(t + hs, x1, k7);
        err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        double en = detail::error_norm<N>(err, x, x1, o);
        if (!std::isfinite(en) || !x1.allFinite()) en = 1e10;

        const double fac11 = std::pow(std::max(en, 1e-300), expo1);
        if (en <= 1.0) {
            // accepted
            const double tn = final_step ? t1 : t + hs;
            ++tr.accepted;

            DenseSegment<N> seg;
            seg.t0 = t;
            seg.h = hs;
            seg.r1 = x;
            seg.r2 = x1 - x;
            seg.r3 = hs * k1 - seg.r2;
            seg.r4 = seg.r2 - hs * k7 - seg.r3;
            seg.r5 = hs * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);

            // events on this step
            double t_hit = std::numeric_limits<double>::infinity();
            std::vector<std::pair<double, std::size_t>> hits;
            for (std::size_t i = 0; i < events.size(); ++i) {
                const double gn = events[i].g(tn, x1);
                const double gp = gval[i];
                const bool rising = gp < 0 && gn >= 0;
                const bool falling = gp > 0 && gn <= 0;
                const int dir = events[i].direction;
                if ((rising && dir >= 0) || (falling && dir <= 0)) {
                    double lo = t, hi = tn;
                    while (hi - lo > 1e-10) {
                        const double mid = 0.5 * (lo + hi);
                        const double gm = events[i].g(mid, seg(mid));
                        const bool crossed = rising ? gm >= 0 : gm <= 0;
                        (crossed ? hi : lo) = mid;
                    }
                    hits.emplace_back(hi, i);
                    if (events[i].terminal) t_hit = std::min(t_hit, hi);
                }
                gval[i] = gn;
            }
            std::sort(hits.begin(), hits.end());
            for (const auto& [te, i] : hits) {
                if (te > t_hit) break;
                tr.events.push_back({te, events[i].id, seg(te)});
            }
            if (std::isfinite(t_hit)) {
                const Vec<N> xe = seg(t_hit);
                Vec<N> fe(n);
                call(t_hit, xe, fe);
                if (o.store) tr.dense.push_back(seg);
                push(t_hit, xe, fe);
                tr.stopped_by_event = true;
                tr.h_next = hs;
                return tr;
            }

            t = tn;
            x = x1;
            k1 = k7;  // first-same-as-last
            if (o.store) tr.dense.push_back(std::move(seg));
            push(t, x, k1);
            check_box(t, x);

            double fac = fac11 / std::pow(facold, beta);
            fac = std::clamp(fac / safe, 0.2, 10.0);  // growth factor 1/fac in [0.1, 5]
            double hnew = hs / fac;
            if (last_rejected) hnew = std::min(hnew, hs);
            facold = std::max(en, 1e-4);
            last_rejected = false;
            h = std::min(hnew, o.hmax);
        } else {
            ++tr.rejected;
            last_rejected = true;
            h = hs / std::min(5.0, fac11 / safe);
        }
    }
    tr.h_next = std::max(h, h_planned);  // a step truncated to land on t1 says little
    return tr;
}

// ---- Field-level API -------------------------------------------------------

using VecX = Eigen::VectorXd;
using DynTrajectory = Trajectory<Eigen::Dynamic>;
using DynEvent = Event<Eigen::Dynamic>;

DynTrajectory integrate(const ode::Field& field, const VecX& x0, double T, double rtol = 1e-10,
                        double atol = 1e-10, double t0 = 0.0);

DynTrajectory integrate_with_events(const ode::Field& field, const VecX& x0, double T,
                                    const std::vector<DynEvent>& events, const Options& options = {},
                                    double t0 = 0.0);

/// Fires on entering the max-norm ball B(center, radius); an initial point
/// already inside fires at the start time.
DynEvent ball_entry_event(const std::string& id, const VecX& center, double radius, bool terminal = true);
/// Fires when the clock component crosses an integer (non-terminal).
DynEvent clock_event(const std::string& id, int component);

/// The field plus the perturbation; throws BudgetExceeded when the certified
/// bounds violate the budgets.
ode::Field perturb_field(const ode::Field& field, const PerturbationSpec& spec, double c0_budget = 0.25,
                         double c1_budget = 1.0 / 16);

struct Region {
    VecX lo, hi;
};

struct DivergenceBound {
    double lipschitz = 0.0;  // certified sup ||Df|| over the region (padded)
    double grid_sup = 0.0;   // unpadded sample sup
    double bound = 0.0;      // ||x - y|| e^{L t}
};

/// ||x - y|| e^{L t} with L the grid sup of ||Df|| over the region, padded by
/// an estimate of the Lipschitz constant of Df times half the grid spacing.
DivergenceBound divergence_bound(const ode::Field& field, const Region& region, const VecX& x,
                                 const VecX& y, double t, int points_per_axis = 0);

struct TrackingReport {
    double max_deviation = 0.0;
    std::vector<std::pair<int, double>> per_clock;  // (k, deviation at z = k)
    int steps_to_halt = -1;                         // -1 when the oracle did not halt within k_max
    double entered_halt_ball = -1.0;                // time of entry into B(x_halt, 1/8), -1 if never
    double max_distance_after_entry = 0.0;
    double final_time = 0.0;
    DynTrajectory trajectory;
};

/// Integrates a stage-full field from (0,w,1,0,w,1,0) + offset and compares
/// (v1,v2,v3) at each upward integer crossing of the clock z with the machine
/// orbit. Runs until z passes k_max or the trajectory settles at x_halt.
TrackingReport track_against_discrete(const ode::Field& field, const tm::TuringMachine& machine,
                                      const tm::BigInt& w, int k_max, const VecX& offset = VecX(),
                                      const Options& options = {}, double settle_time = 3.0);

void write_trajectory_csv(std::ostream& out, const DynTrajectory& tr);

}  // namespace basinforge::integ
