#include "basinforge/integrator.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

namespace basinforge::integ {

namespace {

Options make_options(double rtol, double atol) {
    Options o;
    o.rtol = rtol;
    o.atol = atol;
    return o;
}

}  // namespace

DynTrajectory integrate(const ode::Field& field, const VecX& x0, double T, double rtol, double atol,
                        double t0) {
    return integrate_with_events(field, x0, T, {}, make_options(rtol, atol), t0);
}

DynTrajectory integrate_with_events(const ode::Field& field, const VecX& x0, double T,
                                    const std::vector<DynEvent>& events, const Options& options, double t0) {
    if (x0.size() != field.dim()) throw std::invalid_argument("initial state dimension does not match the field");
    if (!(T >= 0)) throw std::invalid_argument("integration horizon must be non-negative");
    auto rhs = [&field](double t, const VecX& x, VecX& dx) { field.eval(t, x, dx); };
    Options o = options;
    o.hmax = std::min(o.hmax, field.params().max_step);
    return dopri5<Eigen::Dynamic>(rhs, t0, x0, t0 + T, o, events);
}

DynEvent ball_entry_event(const std::string& id, const VecX& center, double radius, bool terminal) {
    DynEvent e;
    e.id = id;
    e.g = [center, radius](double, const VecX& x) { return radius - (x - center).cwiseAbs().maxCoeff(); };
    e.terminal = terminal;
    e.direction = +1;
    e.fire_at_start = true;
    return e;
}

DynEvent clock_event(const std::string& id, int component) {
    DynEvent e;
    e.id = id;
    e.g = [component](double, const VecX& x) { return std::sin(std::numbers::pi * x[component]); };
    e.terminal = false;
    e.direction = 0;
    return e;
}

ode::Field perturb_field(const ode::Field& field, const PerturbationSpec& spec, double c0_budget,
                         double c1_budget) {
    spec.check_budget(c0_budget, c1_budget);
    return field.plus(spec);
}

DivergenceBound divergence_bound(const ode::Field& field, const Region& region, const VecX& x, const VecX& y,
                                 double t, int points_per_axis) {
    const int d = field.dim();
    if (region.lo.size() != d || region.hi.size() != d)
        throw std::invalid_argument("region dimension does not match the field");
    int n = points_per_axis;
    if (n <= 0) {
        // keep n^d within a fixed evaluation budget
        n = std::max(2, static_cast<int>(std::floor(std::pow(20000.0, 1.0 / d))));
        n = std::min(n, 401);
    }
    std::vector<double> step(d);
    for (int i = 0; i < d; ++i) step[i] = (region.hi[i] - region.lo[i]) / (n - 1);

    auto op_norm = [](const ode::MatX& J) { return J.cwiseAbs().rowwise().sum().maxCoeff(); };

    std::vector<int> idx(d, 0);
    double sup = 0.0, lip_j = 0.0;
    // walk the grid in lexicographic order; compare each node with its
    // predecessor along the fastest axis to estimate the Lipschitz constant of Df
    ode::MatX last;
    bool have_last = false;
    std::size_t total = 1;
    for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(n);
    VecX p(d);
    for (std::size_t k = 0; k < total; ++k) {
        for (int i = 0; i < d; ++i) p[i] = region.lo[i] + idx[i] * step[i];
        const ode::MatX J = field.jacobian(t, p);
        sup = std::max(sup, op_norm(J));
        if (have_last && idx[0] > 0 && step[0] > 0) lip_j = std::max(lip_j, op_norm(J - last) / step[0]);
        last = J;
        have_last = true;
        for (int i = 0; i < d; ++i) {
            if (++idx[i] < n) break;
            idx[i] = 0;
        }
    }
    double h = 0.0;
    for (int i = 0; i < d; ++i) h = std::max(h, step[i]);

    DivergenceBound out;
    out.grid_sup = sup;
    out.lipschitz = sup + lip_j * h / 2;
    out.bound = (x - y).cwiseAbs().maxCoeff() * std::exp(out.lipschitz * t);
    return out;
}

TrackingReport track_against_discrete(const ode::Field& field, const tm::TuringMachine& machine,
                                      const tm::BigInt& w, int k_max, const VecX& offset,
                                      const Options& options, double settle_time) {
    if (field.params().stage != ode::Stage::Full || field.dim() != 7)
        throw ode::BadStage("track_against_discrete needs a stage-full field");

    // discrete orbit f_M^k(0, w, 1)
    std::vector<Eigen::Vector3d> orbit;
    tm::EncodedConfig c = tm::encode_input(machine, w);
    TrackingReport rep;
    for (int k = 0; k <= k_max; ++k) {
        orbit.push_back(robust::to_vec(c));
        if (c.q == machine.halting_state()) {
            if (rep.steps_to_halt < 0) rep.steps_to_halt = k;
        }
        c = tm::step(machine, c);
    }

    const Eigen::Vector3d start = orbit.front();
    VecX x0(7);
    x0 << start[0], start[1], start[2], start[0], start[1], start[2], 0.0;
    if (offset.size() == 7) x0 += offset;

    const VecX x_halt = ode::halting_point(machine);
    std::vector<DynEvent> events{ball_entry_event("halt_ball", x_halt, 0.125, false), clock_event("clock", 6)};

    // run long enough to pass k_max on the clock, or to settle after halting
    const double horizon =
        rep.steps_to_halt >= 0 ? rep.steps_to_halt + 1.5 + settle_time + std::log(8.0 * (rep.steps_to_halt + 2))
                               : k_max + 0.9;
    Options o = options;
    o.store = true;
    rep.trajectory = integrate_with_events(field, x0, horizon, events, o);

    int last_clock = 0;
    auto deviation = [&](int k, const VecX& x) {
        const Eigen::Vector3d ref = orbit[std::min<std::size_t>(k, orbit.size() - 1)];
        return std::max({std::abs(x[3] - ref[0]), std::abs(x[4] - ref[1]), std::abs(x[5] - ref[2])});
    };
    rep.per_clock.emplace_back(0, deviation(0, x0));
    rep.max_deviation = rep.per_clock.back().second;
    for (const auto& ev : rep.trajectory.events) {
        if (ev.id == "halt_ball") {
            if (rep.entered_halt_ball < 0) rep.entered_halt_ball = ev.t;
            continue;
        }
        // upward crossings only: after the brake engages z relaxes back to 0
        const int k = static_cast<int>(std::lround(ev.x[6]));
        if (k != last_clock + 1 || k > k_max) continue;
        last_clock = k;
        const double dev = deviation(k, ev.x);
        rep.per_clock.emplace_back(k, dev);
        rep.max_deviation = std::max(rep.max_deviation, dev);
    }
    if (rep.entered_halt_ball >= 0) {
        for (std::size_t i = 0; i < rep.trajectory.t.size(); ++i)
            if (rep.trajectory.t[i] >= rep.entered_halt_ball)
                rep.max_distance_after_entry = std::max(
                    rep.max_distance_after_entry, (rep.trajectory.x[i] - x_halt).cwiseAbs().maxCoeff());
    }
    rep.final_time = rep.trajectory.final_time();
    return rep;
}

void write_trajectory_csv(std::ostream& out, const DynTrajectory& tr) {
    const std::size_t d = tr.x.empty() ? 0 : static_cast<std::size_t>(tr.x.front().size());
    out << "t";
    for (std::size_t i = 1; i <= d; ++i) out << ",x" << i;
    out << ",event\n";
    const auto prec = out.precision(17);
    std::size_t e = 0;
    for (std::size_t i = 0; i < tr.t.size(); ++i) {
        // events are interleaved at their located times
        while (e < tr.events.size() && tr.events[e].t <= tr.t[i]) {
            out << tr.events[e].t;
            for (std::size_t j = 0; j < d; ++j) out << ',' << tr.events[e].x[j];
            out << ',' << tr.events[e].id << '\n';
            ++e;
        }
        out << tr.t[i];
        for (std::size_t j = 0; j < d; ++j) out << ',' << tr.x[i][j];
        out << ",\n";
    }
    for (; e < tr.events.size(); ++e) {
        out << tr.events[e].t;
        for (std::size_t j = 0; j < d; ++j) out << ',' << tr.events[e].x[j];
        out << ',' << tr.events[e].id << '\n';
    }
    out.precision(prec);
}

}  // namespace basinforge::integ
