#include "basinforge/perturbation.hpp"

#include <doctest.h>

#include <cmath>

using namespace basinforge;
using K = PerturbationSpec::Kind;

TEST_CASE("analytic bounds of the families") {
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(3);
    const auto c = PerturbationSpec::constant(0.01, ones);
    CHECK(c.c0_bound() == doctest::Approx(0.01));
    CHECK(c.c1_bound() == 0.0);
    const auto s = PerturbationSpec::sinusoidal(0.03, ones);
    CHECK(s.c0_bound() == doctest::Approx(0.03));
    CHECK(s.c1_bound() == doctest::Approx(0.03));
    const auto g = PerturbationSpec::gaussian_tail(4.0, ones);
    CHECK(g.c0_bound() == doctest::Approx(std::exp(-4.0)));
    CHECK(g.c0_bound() == doctest::Approx(0.0183).epsilon(1e-3));
    CHECK(g.value(Eigen::VectorXd::Zero(3))[0] == doctest::Approx(std::exp(-4.0)));
}

TEST_CASE("probe sups stay below and near the certified bounds") {
    for (auto kind : {K::Constant, K::Sinusoidal, K::GaussianTail, K::Bump}) {
        for (int d : {2, 3, 7}) {
            const auto p = random_perturbation(kind, d, 0.1, 0.05, 17 + d);
            CHECK(p.c0_bound() < 0.1);
            CHECK(p.c1_bound() < 0.05);
            const auto sup = probe_sup(p, Eigen::VectorXd::Zero(d), 2.0, 20000, 3);
            INFO(p.describe());
            CHECK(sup.c0 <= p.c0_bound() * (1 + 1e-12));
            CHECK(sup.c1 <= p.c1_bound() * (1 + 1e-12));
        }
    }
    // in one dimension the extremisers are easy to hit, so the bounds are tight
    const auto s = PerturbationSpec::sinusoidal(0.04, Eigen::VectorXd::Ones(1));
    const auto sup = probe_sup(s, Eigen::VectorXd::Zero(1), 4.0, 20000, 1);
    CHECK(sup.c0 >= 0.99 * s.c0_bound());
    CHECK(sup.c1 >= 0.99 * s.c1_bound());
    const auto g = PerturbationSpec::gaussian_tail(2.0, Eigen::VectorXd::Ones(1));
    const auto gs = probe_sup(g, Eigen::VectorXd::Zero(1), 1.0, 50000, 1);
    CHECK(gs.c0 >= 0.99 * g.c0_bound());
    CHECK(gs.c1 >= 0.99 * g.c1_bound());
    const auto b = PerturbationSpec::bump(0.02, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1), 1.0);
    const auto bs = probe_sup(b, Eigen::VectorXd::Zero(1), 1.0, 50000, 1);
    CHECK(bs.c1 >= 0.99 * b.c1_bound());
    CHECK(bs.c1 <= b.c1_bound());
}

TEST_CASE("Jacobians match finite differences") {
    for (auto kind : {K::Sinusoidal, K::GaussianTail, K::Bump}) {
        const auto p = random_perturbation(kind, 3, 0.2, 0.2, 5, Eigen::Vector3d(0.1, -0.2, 0.3));
        const Eigen::Vector3d x(0.3, -0.1, 0.5);
        const Eigen::MatrixXd J = p.jacobian(x);
        for (int j = 0; j < 3; ++j) {
            Eigen::Vector3d e = Eigen::Vector3d::Zero();
            e[j] = 1e-6;
            const Eigen::VectorXd fd = (p.value(x + e) - p.value(x - e)) / 2e-6;
            CHECK((J.col(j) - fd).cwiseAbs().maxCoeff() <= 1e-8);
        }
    }
}

TEST_CASE("budget check") {
    const auto s = PerturbationSpec::sinusoidal(0.1, Eigen::VectorXd::Ones(7));
    CHECK_NOTHROW(s.check_budget(0.25, 0.1));
    CHECK_THROWS_AS(s.check_budget(0.25, 1.0 / 16), BudgetExceeded);
    CHECK_THROWS_AS(s.check_budget(0.05, 1.0), BudgetExceeded);
}
