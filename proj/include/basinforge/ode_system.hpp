#pragma once

// Continuous-time simulation of a machine: the scalar targeting equation, the
// two-variable iteration pair, the six-variable componentwise iteration, and
// the autonomous seven-variable system with the z clock,
//
//   u' = c ((T - u)^3 + (T - u)) phibar(z, v3),        T = fbar(r(v))
//   v' = c ((r(u) - v)^3 + (r(u) - v)) phibar(z + 1/2, v3)
//   z' = 1 - zeta_{m-3/16, m-1/8}(v3) (z + 1)
//
// whose equilibrium x_halt = (0,0,m,0,0,m,0) is the sink reached exactly when
// the machine halts.

#include "basinforge/perturbation.hpp"
#include "basinforge/robust_map.hpp"
#include "basinforge/smooth_kit.hpp"
#include "basinforge/tm_core.hpp"

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

namespace basinforge::ode {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

class ZeroGateIntegral : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class BadStage : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Stage { Targeting, Pair, Six, Full };
Stage parse_stage(const std::string& name);
const char* to_string(Stage s);

struct TargetingSpec {
    double target = 0.0;
    smooth::SmoothScalarFn gate = smooth::SmoothScalarFn::phi_fn();
    double t0 = 0.25;
    double t1 = 0.5;
    double gamma = 0.25;
    double rho = 0.0;
};

/// Quadrature of the gate over [t0, t1].
double gate_integral(const TargetingSpec& spec);
/// Integral of phi over its active quarter [1/4, 1/2] (cached).
double phi_window_integral();

/// Smallest admissible c: 1/(2 gamma^2 I), or 3/(8 gamma^2 I) for the robust
/// variant, floored at 1.
double choose_c(const TargetingSpec& spec, bool robust);
double choose_c(double gamma, double integral, bool robust);

struct FieldParams {
    Stage stage = Stage::Full;
    double c = 1.0;
    double lambda = 0.5;
    double gamma = 0.25;
    int m = 0;
    int b = 0;
    std::string machine_path;
    /// Upper bound on integrator steps so no gate window can be stepped over.
    double max_step = std::numeric_limits<double>::infinity();
};

using RhsFn = std::function<void(double t, const VecX& x, VecX& dx)>;
using JacobianFn = std::function<void(double t, const VecX& x, MatX& J)>;

/// An evaluable vector field x' = f(t, x) with its Jacobian in x.
class Field {
public:
    Field(int dim, bool autonomous, RhsFn f, JacobianFn df, FieldParams params = {});

    int dim() const { return dim_; }
    bool autonomous() const { return autonomous_; }
    const FieldParams& params() const { return params_; }
    FieldParams& params() { return params_; }

    void eval(double t, const VecX& x, VecX& dx) const;
    VecX operator()(double t, const VecX& x) const;
    MatX jacobian(double t, const VecX& x) const;

    /// The map that generated the field (stages pair/six/full), else null.
    std::shared_ptr<const robust::RobustMap> map() const { return map_; }
    void set_map(std::shared_ptr<const robust::RobustMap> m) { map_ = std::move(m); }

    const std::optional<PerturbationSpec>& perturbation() const { return perturbation_; }
    /// Copy of this field with p added to the right-hand side.
    Field plus(const PerturbationSpec& p) const;

private:
    int dim_;
    bool autonomous_;
    RhsFn f_;
    JacobianFn df_;
    FieldParams params_;
    std::shared_ptr<const robust::RobustMap> map_;
    std::optional<PerturbationSpec> perturbation_;
};

/// x' = c (b - x)^3 gate(t) + xi(t, x).
Field targeting_field(double target, double c, const smooth::SmoothScalarFn& gate,
                      std::function<double(double, double)> xi = {});

Field build_field(const tm::TuringMachine& machine, Stage stage, double c, double lambda = 0.5);
Field build_field(const tm::TuringMachine& machine, const std::string& stage, double c,
                  double lambda = 0.5);

/// The scalar map iterated by stage pair: x -> fbar(0, x, 1)_2.
double pair_map(const robust::RobustMap& f, double x);

VecX halting_point(const tm::TuringMachine& machine);

/// Analytic Jacobian of a stage-full field at x_halt.
MatX jacobian_at_halt(const Field& field);

/// JSON manifest that rebuilds the field bit-identically (machine inlined).
std::string field_manifest(const Field& field, const tm::TuringMachine& machine);
struct LoadedField {
    tm::TuringMachine machine;
    Field field;
};
LoadedField field_from_manifest(const std::string& text);

}  // namespace basinforge::ode
