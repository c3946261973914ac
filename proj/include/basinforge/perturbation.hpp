#pragma once

// Certified additive perturbation families p: R^d -> R^d. Each spec carries
// analytic bounds on sup|p| (C0, max norm) and sup|Dp| (C1, the operator norm
// induced by the max norm, i.e. the largest absolute row sum).

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace basinforge {

class BudgetExceeded : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct PerturbationSpec {
    enum class Kind { Constant, Sinusoidal, GaussianTail, Bump };

    Kind kind = Kind::Constant;
    double alpha = 0.0;
    /// Per-component amplitude in [-1, 1]; zero entries mask a component out.
    Eigen::VectorXd weights;
    /// Sinusoidal phase shifts, one per component (may be empty -> zero).
    Eigen::VectorXd phases;
    /// Centre of the Gaussian tail / bump (may be empty -> origin).
    Eigen::VectorXd center;
    /// Bump support radius (Euclidean).
    double radius = 1.0;

    static PerturbationSpec constant(double alpha, Eigen::VectorXd weights);
    static PerturbationSpec sinusoidal(double alpha, Eigen::VectorXd weights,
                                       Eigen::VectorXd phases = {});
    static PerturbationSpec gaussian_tail(double alpha, Eigen::VectorXd weights,
                                          Eigen::VectorXd center = {});
    static PerturbationSpec bump(double alpha, Eigen::VectorXd weights, Eigen::VectorXd center,
                                 double radius);

    int dim() const { return static_cast<int>(weights.size()); }

    Eigen::VectorXd value(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const;

    /// Analytic sup-norm bound of the perturbation.
    double c0_bound() const;
    /// Analytic bound of sup ||Dp|| (row-sum norm).
    double c1_bound() const;

    /// Throws BudgetExceeded if c0_bound() > c0 or c1_bound() > c1.
    void check_budget(double c0, double c1) const;

    std::string describe() const;
};

/// Random spec of the given kind whose certified bounds lie strictly inside the
/// budgets. Deterministic in `seed`.
PerturbationSpec random_perturbation(PerturbationSpec::Kind kind, int dim, double c0_budget,
                                     double c1_budget, std::uint64_t seed,
                                     const Eigen::VectorXd& center = {});

/// Empirical sup of |p| and |Dp| over `samples` uniform points of the box
/// center +- half_width. Used as a sanity check of the analytic bounds.
struct ProbeSup {
    double c0 = 0.0;
    double c1 = 0.0;
};
ProbeSup probe_sup(const PerturbationSpec& spec, const Eigen::VectorXd& center, double half_width,
                   int samples, std::uint64_t seed);

/// Matrix norm induced by the max norm (largest absolute row sum).
inline double row_sum_norm(const Eigen::MatrixXd& A) { return A.cwiseAbs().rowwise().sum().maxCoeff(); }

}  // namespace basinforge
