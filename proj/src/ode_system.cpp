#include "basinforge/ode_system.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace basinforge::ode {

namespace {

using smooth::phi;
using smooth::phi_bar;
using smooth::phi_bar_dt;
using smooth::phi_bar_dv3;
using smooth::phi_prime;
using smooth::smooth_round;
using smooth::smooth_round_prime;

// Window of the clock brake.
double clock_lo(int m) { return m - 0.1875; }
double clock_hi(int m) { return m - 0.125; }

double cubic_lin(double s) { return s * s * s + s; }
double cubic_lin_prime(double s) { return 3 * s * s + 1; }
double cubic(double s) { return s * s * s; }
double cubic_prime(double s) { return 3 * s * s; }

Field make_pair(std::shared_ptr<const robust::RobustMap> F, double c) {
    auto rhs = [F, c](double t, const VecX& x, VecX& dx) {
        dx.resize(2);
        dx[0] = c * cubic(pair_map(*F, smooth_round(x[1])) - x[0]) * phi(t);
        dx[1] = c * cubic(smooth_round(x[0]) - x[1]) * phi(t + 0.5);
    };
    auto jac = [F, c](double t, const VecX& x, MatX& J) {
        J.setZero(2, 2);
        const double y = smooth_round(x[1]);
        const double s0 = pair_map(*F, y) - x[0];
        const double dmap = F->jacobian(robust::Vec3(0, y, 1))(1, 1);
        J(0, 0) = -c * cubic_prime(s0) * phi(t);
        J(0, 1) = c * cubic_prime(s0) * dmap * smooth_round_prime(x[1]) * phi(t);
        const double s1 = smooth_round(x[0]) - x[1];
        J(1, 0) = c * cubic_prime(s1) * smooth_round_prime(x[0]) * phi(t + 0.5);
        J(1, 1) = -c * cubic_prime(s1) * phi(t + 0.5);
    };
    return Field(2, false, rhs, jac);
}

Field make_six(std::shared_ptr<const robust::RobustMap> F, double c) {
    auto rhs = [F, c](double t, const VecX& x, VecX& dx) {
        dx.resize(6);
        const robust::Vec3 y(smooth_round(x[3]), smooth_round(x[4]), smooth_round(x[5]));
        const robust::Vec3 T = (*F)(y);
        const double p = phi(t), q = phi(t + 0.5);
        for (int i = 0; i < 3; ++i) {
            dx[i] = c * cubic(T[i] - x[i]) * p;
            dx[3 + i] = c * cubic(smooth_round(x[i]) - x[3 + i]) * q;
        }
    };
    auto jac = [F, c](double t, const VecX& x, MatX& J) {
        J.setZero(6, 6);
        const robust::Vec3 y(smooth_round(x[3]), smooth_round(x[4]), smooth_round(x[5]));
        const robust::Vec3 T = (*F)(y);
        const robust::Mat3 DF = F->jacobian(y);
        const double p = phi(t), q = phi(t + 0.5);
        for (int i = 0; i < 3; ++i) {
            const double gu = cubic_prime(T[i] - x[i]);
            J(i, i) = -c * gu * p;
            for (int j = 0; j < 3; ++j) J(i, 3 + j) = c * gu * p * DF(i, j) * smooth_round_prime(x[3 + j]);
            const double gv = cubic_prime(smooth_round(x[i]) - x[3 + i]);
            J(3 + i, i) = c * gv * smooth_round_prime(x[i]) * q;
            J(3 + i, 3 + i) = -c * gv * q;
        }
    };
    return Field(6, false, rhs, jac);
}

Field make_full(std::shared_ptr<const robust::RobustMap> F, double c, int m) {
    auto rhs = [F, c, m](double, const VecX& x, VecX& dx) {
        dx.resize(7);
        const double v3 = x[5], z = x[6];
        const robust::Vec3 y(smooth_round(x[3]), smooth_round(x[4]), smooth_round(v3));
        const robust::Vec3 T = (*F)(y);
        const double P = phi_bar(z, v3, m), Q = phi_bar(z + 0.5, v3, m);
        for (int i = 0; i < 3; ++i) {
            dx[i] = c * cubic_lin(T[i] - x[i]) * P;
            dx[3 + i] = c * cubic_lin(smooth_round(x[i]) - x[3 + i]) * Q;
        }
        dx[6] = 1.0 - smooth::zeta_ab(clock_lo(m), clock_hi(m), v3) * (z + 1.0);
    };
    auto jac = [F, c, m](double, const VecX& x, MatX& J) {
        J.setZero(7, 7);
        const double v3 = x[5], z = x[6];
        const robust::Vec3 y(smooth_round(x[3]), smooth_round(x[4]), smooth_round(v3));
        const robust::Vec3 T = (*F)(y);
        const robust::Mat3 DF = F->jacobian(y);
        const double P = phi_bar(z, v3, m), Q = phi_bar(z + 0.5, v3, m);
        const double Pz = phi_bar_dt(z, v3, m), Qz = phi_bar_dt(z + 0.5, v3, m);
        const double Pv = phi_bar_dv3(z, v3, m), Qv = phi_bar_dv3(z + 0.5, v3, m);
        for (int i = 0; i < 3; ++i) {
            const double su = T[i] - x[i];
            const double gu = cubic_lin_prime(su);
            J(i, i) = -c * gu * P;
            for (int j = 0; j < 3; ++j) J(i, 3 + j) = c * gu * P * DF(i, j) * smooth_round_prime(x[3 + j]);
            J(i, 5) += c * cubic_lin(su) * Pv;
            J(i, 6) = c * cubic_lin(su) * Pz;

            const double sv = smooth_round(x[i]) - x[3 + i];
            const double gv = cubic_lin_prime(sv);
            J(3 + i, i) = c * gv * smooth_round_prime(x[i]) * Q;
            J(3 + i, 3 + i) = -c * gv * Q;
            J(3 + i, 5) += c * cubic_lin(sv) * Qv;
            J(3 + i, 6) = c * cubic_lin(sv) * Qz;
        }
        J(6, 5) = -smooth::zeta_ab_prime(clock_lo(m), clock_hi(m), v3) * (z + 1.0);
        J(6, 6) = -smooth::zeta_ab(clock_lo(m), clock_hi(m), v3);
    };
    return Field(7, true, rhs, jac);
}

}  // namespace

Stage parse_stage(const std::string& name) {
    if (name == "targeting") return Stage::Targeting;
    if (name == "pair") return Stage::Pair;
    if (name == "six") return Stage::Six;
    if (name == "full") return Stage::Full;
    throw BadStage("unknown stage \"" + name + "\" (expected pair, six or full)");
}

const char* to_string(Stage s) {
    switch (s) {
        case Stage::Targeting: return "targeting";
        case Stage::Pair: return "pair";
        case Stage::Six: return "six";
        case Stage::Full: return "full";
    }
    return "?";
}

double gate_integral(const TargetingSpec& spec) {
    if (!(spec.t1 > spec.t0)) throw ZeroGateIntegral("gate window needs t1 > t0");
    const auto& g = spec.gate;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [&g](double t) { return g(t); }, spec.t0, spec.t1, 15, 1e-13);
}

double phi_window_integral() {
    static const double value = gate_integral(TargetingSpec{});
    return value;
}

double choose_c(double gamma, double integral, bool robust) {
    if (!(integral > 0)) throw ZeroGateIntegral("gate integral must be positive");
    if (!(gamma > 0)) throw std::invalid_argument("targeting error gamma must be positive");
    const double c = robust ? 3.0 / (8.0 * gamma * gamma * integral) : 1.0 / (2.0 * gamma * gamma * integral);
    return std::max(1.0, c);
}

double choose_c(const TargetingSpec& spec, bool robust) {
    return choose_c(spec.gamma, gate_integral(spec), robust);
}

Field::Field(int dim, bool autonomous, RhsFn f, JacobianFn df, FieldParams params)
    : dim_(dim), autonomous_(autonomous), f_(std::move(f)), df_(std::move(df)), params_(std::move(params)) {}

void Field::eval(double t, const VecX& x, VecX& dx) const { f_(t, x, dx); }

VecX Field::operator()(double t, const VecX& x) const {
    VecX dx(dim_);
    f_(t, x, dx);
    return dx;
}

MatX Field::jacobian(double t, const VecX& x) const {
    MatX J(dim_, dim_);
    df_(t, x, J);
    return J;
}

Field Field::plus(const PerturbationSpec& p) const {
    if (p.dim() != dim_) throw std::invalid_argument("perturbation dimension does not match the field");
    Field g = *this;
    auto f = f_;
    auto df = df_;
    g.f_ = [f, p](double t, const VecX& x, VecX& dx) {
        f(t, x, dx);
        dx += p.value(x);
    };
    g.df_ = [df, p](double t, const VecX& x, MatX& J) {
        df(t, x, J);
        J += p.jacobian(x);
    };
    g.perturbation_ = p;
    return g;
}

Field targeting_field(double target, double c, const smooth::SmoothScalarFn& gate,
                      std::function<double(double, double)> xi) {
    auto rhs = [=](double t, const VecX& x, VecX& dx) {
        dx.resize(1);
        dx[0] = c * cubic(target - x[0]) * gate(t) + (xi ? xi(t, x[0]) : 0.0);
    };
    auto jac = [=](double t, const VecX& x, MatX& J) {
        J.resize(1, 1);
        J(0, 0) = -c * cubic_prime(target - x[0]) * gate(t);
    };
    FieldParams params;
    params.stage = Stage::Targeting;
    params.c = c;
    params.max_step = 1.0 / 16;
    return Field(1, false, rhs, jac, params);
}

double pair_map(const robust::RobustMap& f, double x) { return f(robust::Vec3(0.0, x, 1.0))[1]; }

Field build_field(const tm::TuringMachine& machine, Stage stage, double c, double lambda) {
    if (!(c > 0)) throw std::invalid_argument("field constant c must be positive");
    auto F = std::make_shared<const robust::RobustMap>(machine, lambda);
    Field field = [&] {
        switch (stage) {
            case Stage::Pair: return make_pair(F, c);
            case Stage::Six: return make_six(F, c);
            case Stage::Full: return make_full(F, c, machine.num_states());
            case Stage::Targeting: break;
        }
        throw BadStage("build_field needs stage pair, six or full");
    }();
    FieldParams& p = field.params();
    p.stage = stage;
    p.c = c;
    p.lambda = lambda;
    p.gamma = stage == Stage::Full ? 1.0 / 16 : 0.25;
    p.max_step = 1.0 / 16;  // the active gate windows are 1/4 long
    p.m = machine.num_states();
    p.b = machine.base();
    field.set_map(F);
    return field;
}

Field build_field(const tm::TuringMachine& machine, const std::string& stage, double c, double lambda) {
    return build_field(machine, parse_stage(stage), c, lambda);
}

VecX halting_point(const tm::TuringMachine& machine) {
    const double m = machine.num_states();
    VecX x(7);
    x << 0, 0, m, 0, 0, m, 0;
    return x;
}

MatX jacobian_at_halt(const Field& field) {
    if (field.params().stage != Stage::Full || field.dim() != 7)
        throw BadStage("jacobian_at_halt needs a stage-full field");
    const int m = field.params().m;
    VecX x(7);
    x << 0, 0, m, 0, 0, m, 0;
    return field.jacobian(0.0, x);
}

std::string field_manifest(const Field& field, const tm::TuringMachine& machine) {
    using nlohmann::json;
    const auto& p = field.params();
    json doc;
    doc["stage"] = to_string(p.stage);
    doc["dim"] = field.dim();
    doc["c"] = p.c;
    doc["lambda"] = p.lambda;
    doc["gamma"] = p.gamma;
    doc["m"] = p.m;
    doc["b"] = p.b;
    doc["machine_path"] = p.machine_path;
    doc["machine"] = json::parse(machine.to_json());
    if (p.stage == Stage::Full) {
        const VecX h = halting_point(machine);
        doc["x_halt"] = std::vector<double>(h.data(), h.data() + h.size());
    }
    if (field.perturbation()) doc["perturbation"] = field.perturbation()->describe();
    return doc.dump(2) + "\n";  // doubles are written in shortest round-trip form
}

LoadedField field_from_manifest(const std::string& text) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw tm::MachineFormatError(std::string("malformed manifest: ") + e.what());
    }
    tm::TuringMachine machine = [&] {
        if (doc.contains("machine")) return tm::TuringMachine::from_json(doc["machine"].dump());
        if (doc.contains("machine_path") && !doc["machine_path"].get<std::string>().empty())
            return tm::TuringMachine::from_file(doc["machine_path"].get<std::string>());
        throw tm::MachineFormatError("manifest names no machine");
    }();
    const Stage stage = parse_stage(doc.value("stage", std::string("full")));
    const double c = doc.at("c").get<double>();
    const double lambda = doc.value("lambda", 0.5);
    Field field = build_field(machine, stage, c, lambda);
    field.params().gamma = doc.value("gamma", field.params().gamma);
    field.params().machine_path = doc.value("machine_path", std::string());
    return {std::move(machine), std::move(field)};
}

}  // namespace basinforge::ode
