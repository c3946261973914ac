#pragma once

// The robust real extension fbar: R^3 -> R^3 of a machine's transition map.
//
//   fbar(x) = F(r(x)) + lambda (x - r(x))
//
// r is componentwise smooth rounding and F applies the rule table to a
// (possibly non-integral) configuration by trigonometric interpolation over the
// finite (state, symbol) grid. On the plateau ball of radius 1/4 around any
// integer configuration x0 this collapses to f_M(x0) + lambda (x - x0), which
// gives exactness on N^3 and the lambda-contraction in one formula.

#include "basinforge/perturbation.hpp"
#include "basinforge/tm_core.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

namespace basinforge::robust {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

class BadLambda : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NewtonDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotASink : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RobustMap {
public:
    RobustMap(tm::TuringMachine machine, double lambda = 0.5);

    const tm::TuringMachine& machine() const { return machine_; }
    double lambda() const { return lambda_; }

    Vec3 operator()(const Vec3& x) const;
    Mat3 jacobian(const Vec3& x) const;

    /// F on an already-rounded argument; works for double and Dual<3>.
    template <class T>
    std::array<T, 3> transition(const std::array<T, 3>& y) const;

    /// fbar with generic scalar type (double or Dual<3>).
    template <class T>
    std::array<T, 3> eval(const std::array<T, 3>& x) const;

private:
    tm::TuringMachine machine_;
    double lambda_;
};

RobustMap build_extension(const tm::TuringMachine& machine, double lambda = 0.5);

/// g = fbar + p with certified bounds delta = sup|p| and theta = sup|Dp|.
class PerturbedMap {
public:
    explicit PerturbedMap(RobustMap base) : base_(std::move(base)) {}
    PerturbedMap(RobustMap base, PerturbationSpec p);

    const RobustMap& base() const { return base_; }
    const std::optional<PerturbationSpec>& perturbation() const { return p_; }
    double delta() const { return p_ ? p_->c0_bound() : 0.0; }
    double theta() const { return p_ ? p_->c1_bound() : 0.0; }

    Vec3 operator()(const Vec3& x) const;
    Mat3 jacobian(const Vec3& x) const;

private:
    RobustMap base_;
    std::optional<PerturbationSpec> p_;
};

Vec3 to_vec(const tm::EncodedConfig& c);

using MapFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct SinkResult {
    Eigen::VectorXd point;
    Eigen::VectorXcd eigenvalues;  // of Dg (maps) or Df (flows) at the point
    int iterations = 0;
    double residual = 0.0;
};

/// Newton on h(x) = g(x) - x; certifies |eig(Dg)| < 1.
SinkResult find_sink(const MapFn& g, const JacFn& Dg, const Eigen::VectorXd& seed, double tol = 1e-10);
SinkResult find_sink(const PerturbedMap& g, const Vec3& seed, double tol = 1e-10);

/// Newton on f(x) = 0; certifies Re eig(Df) < 0.
SinkResult find_flow_sink(const MapFn& f, const JacFn& Df, const Eigen::VectorXd& seed,
                          double tol = 1e-10);

struct TrackRow {
    std::uint64_t j = 0;
    double dev = 0.0;
};

/// Max-norm distance between g^j(xbar0) and f_M^j(x0) for j = 0..j_max.
std::vector<TrackRow> iterate_tracked(const PerturbedMap& g, const Vec3& xbar0,
                                      const tm::EncodedConfig& x0, std::uint64_t j_max);

enum class Verdict { In, NotYet, Escaped };
const char* to_string(Verdict v);

struct Membership {
    Verdict verdict = Verdict::NotYet;
    std::uint64_t steps = 0;
    Vec3 sink = Vec3::Zero();
};

/// Iterates g from (0, w, 1): IN once within eps/5 of the perturbed sink s_g,
/// ESCAPED past |x| > escape_bound, NOT_YET when the budget runs out.
Membership basin_membership(const PerturbedMap& g, const tm::BigInt& w, double eps,
                            std::uint64_t j_max, double escape_bound = 1e9);
/// Same, with s_g supplied by the caller (avoids repeating the Newton solve).
Membership basin_membership(const PerturbedMap& g, const Vec3& sink, const tm::BigInt& w,
                            double eps, std::uint64_t j_max, double escape_bound = 1e9);

struct MembershipRow {
    tm::BigInt w;
    Verdict verdict;
    std::uint64_t steps;
};

void write_tracking_csv(std::ostream& out, const std::vector<TrackRow>& rows);
void write_membership_csv(std::ostream& out, const std::vector<MembershipRow>& rows);

}  // namespace basinforge::robust
