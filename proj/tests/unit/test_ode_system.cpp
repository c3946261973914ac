#include "basinforge/integrator.hpp"
#include "basinforge/ode_system.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace basinforge;
using ode::MatX;
using ode::VecX;

namespace {

// Frozen high-precision quadrature of phi over [1/4, 1/2].
constexpr double kIphi = 0.00627163594786349975401408577401;

MatX fd_jacobian(const ode::Field& f, double t, const VecX& x, double h) {
    const int d = f.dim();
    MatX J(d, d);
    for (int j = 0; j < d; ++j) {
        VecX a = x, b = x, a2 = x, b2 = x;
        a[j] += h;
        b[j] -= h;
        a2[j] += 2 * h;
        b2[j] -= 2 * h;
        J.col(j) = (8 * (f(t, a) - f(t, b)) - (f(t, a2) - f(t, b2))) / (12 * h);
    }
    return J;
}

double robust_c() { return ode::choose_c(1.0 / 16, ode::phi_window_integral(), true); }

}  // namespace

TEST_CASE("choose_c arithmetic") {
    CHECK(ode::choose_c(0.25, 0.1, false) == doctest::Approx(80.0).epsilon(1e-14));
    CHECK(ode::choose_c(0.25, 0.1, true) == doctest::Approx(60.0).epsilon(1e-14));
    CHECK(ode::choose_c(100.0, 0.1, false) == 1.0);  // floor at 1
    CHECK(ode::phi_window_integral() == doctest::Approx(kIphi).epsilon(1e-12));
    CHECK(robust_c() == doctest::Approx(3.0 / (8.0 / 256.0 * kIphi)).epsilon(1e-12));
    CHECK(robust_c() == doctest::Approx(15307.0109295332157).epsilon(1e-12));
    ode::TargetingSpec spec;
    spec.gamma = 0.25;
    CHECK(ode::choose_c(spec, false) == doctest::Approx(1275.58424412776798).epsilon(1e-12));
}

TEST_CASE("choose_c rejects empty gates") {
    CHECK_THROWS_AS(ode::choose_c(0.25, 0.0, false), ode::ZeroGateIntegral);
    ode::TargetingSpec spec;
    spec.t0 = 0.5;
    spec.t1 = 1.0;  // phi vanishes on [1/2, 1]
    CHECK_THROWS_AS(ode::choose_c(spec, false), ode::ZeroGateIntegral);
    spec.t1 = 0.5;
    CHECK_THROWS_AS(ode::choose_c(spec, false), ode::ZeroGateIntegral);
}

TEST_CASE("stage names") {
    CHECK(ode::parse_stage("pair") == ode::Stage::Pair);
    CHECK(ode::parse_stage("six") == ode::Stage::Six);
    CHECK(ode::parse_stage("full") == ode::Stage::Full);
    CHECK_THROWS_AS(ode::parse_stage("seven"), ode::BadStage);
    CHECK_THROWS_AS(ode::build_field(tm::make_eraser(), "bogus", 1.0), ode::BadStage);
    CHECK_THROWS_AS(ode::build_field(tm::make_eraser(), ode::Stage::Targeting, 1.0), ode::BadStage);
}

TEST_CASE("halting point") {
    for (int m : {2, 3, 5}) {
        std::vector<tm::Rule> rules;
        for (int q = 1; q < m; ++q)
            for (int a = 0; a < 2; ++a) rules.push_back({0, tm::Move::Stay, q + 1});
        const tm::TuringMachine M(m, 2, rules);
        VecX expect(7);
        expect << 0, 0, m, 0, 0, m, 0;
        CHECK(ode::halting_point(M) == expect);
    }
}

TEST_CASE("full field vanishes at x_halt and the clock runs before halting") {
    for (const auto& M : {tm::make_eraser(), tm::make_looper(), tm::make_binary_incrementer()}) {
        const auto f = ode::build_field(M, ode::Stage::Full, robust_c());
        const VecX h = ode::halting_point(M);
        CHECK(f(0.0, h).cwiseAbs().maxCoeff() == 0.0);
        VecX x = h;
        x[6] = 0.0;
        x[5] = M.num_states();
        CHECK(f(0.0, x)[6] == 0.0);
        x << 0, 7, 1, 0, 7, 1, 0;
        CHECK(f(0.0, x)[6] == 1.0);
        x[6] = 3.3;
        CHECK(f(0.0, x)[6] == 1.0);
    }
}

TEST_CASE("jacobian at x_halt") {
    const auto M = tm::make_eraser();
    // with c = 1 the matrix is exactly diag(-1, ..., -1)
    const MatX A = ode::jacobian_at_halt(ode::build_field(M, ode::Stage::Full, 1.0));
    CHECK((A + MatX::Identity(7, 7)).cwiseAbs().maxCoeff() <= 1e-9);

    // at the working c the targeting rows scale with c, the clock row does not
    const double c = robust_c();
    const MatX Ac = ode::jacobian_at_halt(ode::build_field(M, ode::Stage::Full, c));
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) {
            const double expect = i != j ? 0.0 : (i < 6 ? -c : -1.0);
            CHECK(Ac(i, j) == doctest::Approx(expect).epsilon(1e-12));
        }
    for (const auto& ev : Ac.eigenvalues()) CHECK(ev.real() <= -1.0 + 1e-9);

    CHECK_THROWS_AS(ode::jacobian_at_halt(ode::build_field(M, ode::Stage::Six, 1.0)), ode::BadStage);
}

TEST_CASE("analytic Jacobians agree with finite differences") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(-0.5, 0.5);
    for (const auto& M : {tm::make_eraser(), tm::make_binary_incrementer()}) {
        for (auto stage : {ode::Stage::Pair, ode::Stage::Six, ode::Stage::Full}) {
            const auto f = ode::build_field(M, stage, 1.0);
            const int d = f.dim();
            double worst = 0.0;
            for (int k = 0; k < 200; ++k) {
                VecX x(d);
                // near encoded configurations, where the dynamics lives
                for (int i = 0; i < d; ++i) x[i] = std::floor(4 * (U(rng) + 0.5)) + U(rng);
                if (d >= 6) {
                    x[2] = 1 + std::floor(M.num_states() * (U(rng) + 0.5)) + 0.3 * U(rng);
                    x[5] = 1 + std::floor(M.num_states() * (U(rng) + 0.5)) + 0.3 * U(rng);
                }
                if (d == 7) x[6] = 4 * (U(rng) + 0.5);
                const double t = U(rng) + 0.5;
                const MatX J = f.jacobian(t, x);
                const MatX Jfd = fd_jacobian(f, t, x, 1e-5);
                worst = std::max(worst, ((J - Jfd).cwiseAbs().array() / (1.0 + J.cwiseAbs().array())).maxCoeff());
            }
            INFO("stage " << ode::to_string(stage) << " m=" << M.num_states());
            CHECK(worst <= 1e-5);
        }
    }
}

TEST_CASE("dissipativity around x_halt once the gate saturates") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-0.25, 0.25);
    std::uniform_real_distribution<double> V3(-0.125, 0.25);
    for (const auto& M : {tm::make_eraser(), tm::make_binary_incrementer()}) {
        for (double c : {1.0, robust_c()}) {
            const auto f = ode::build_field(M, ode::Stage::Full, c);
            const VecX h = ode::halting_point(M);
            int bad = 0;
            for (int k = 0; k < 10000; ++k) {
                VecX x = h;
                for (int i = 0; i < 7; ++i) x[i] += U(rng);
                x[5] = h[5] + V3(rng);
                const VecX e = x - h;
                if (f(0.0, x).dot(e) > -e.squaredNorm()) ++bad;
            }
            CHECK(bad == 0);
        }
    }
}

TEST_CASE("manifest round trip rebuilds the field bit-identically") {
    const auto M = tm::make_binary_incrementer();
    const auto f = ode::build_field(M, ode::Stage::Full, robust_c(), 0.5);
    const std::string text = ode::field_manifest(f, M);
    const auto loaded = ode::field_from_manifest(text);
    CHECK(loaded.field.params().c == f.params().c);
    CHECK(loaded.field.params().stage == ode::Stage::Full);
    CHECK(loaded.machine.to_json() == M.to_json());
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(0, 4);
    for (int k = 0; k < 100; ++k) {
        VecX x(7);
        for (int i = 0; i < 7; ++i) x[i] = U(rng);
        CHECK(loaded.field(0.0, x) == f(0.0, x));
    }
    CHECK(ode::field_from_manifest(ode::field_manifest(loaded.field, loaded.machine)).field.params().c ==
          f.params().c);
    CHECK_THROWS_AS(ode::field_from_manifest("{not json"), tm::MachineFormatError);
}

TEST_CASE("stage pair tracks the integer iteration with gamma = 1/4") {
    // the scalar map x -> fbar(0, x, 1)_2 on the eraser: drop the last digit
    // unless it is 0 (that rule stays put)
    auto oracle = [](long long n) { return n % 10 == 0 ? n : n / 10; };
    ode::TargetingSpec spec;
    spec.gamma = 0.25;
    const double c_min = ode::choose_c(spec, false);

    auto worst_deviation = [&](double c, long long w, double rtol, double atol) {
        const auto f = ode::build_field(tm::make_eraser(), ode::Stage::Pair, c);
        VecX x0(2);
        x0 << static_cast<double>(w), static_cast<double>(w);
        const auto tr = integ::integrate(f, x0, 30.5, rtol, atol);
        long long ref = w;
        double worst = 0.0;
        for (int k = 0; k <= 30; ++k) {
            worst = std::max(worst, std::abs(tr.at(k)[0] - ref));
            for (double s = 0.0; s <= 0.5; s += 0.0625) worst = std::max(worst, std::abs(tr.at(k + s)[1] - ref));
            ref = oracle(ref);
        }
        return worst;
    };

    // With the minimal c a jump of size s lands 1/(128 s^2) inside the 1/4
    // ball, so the solver error has to stay below that margin.
    for (long long w : {7LL, 345LL, 4321LL}) {
        INFO("w=" << w);
        CHECK(worst_deviation(c_min, w, 1e-13, 1e-12) <= 0.25);
    }
    // larger jumps with any admissible c above the minimum
    for (long long w : {123456789LL, 1020304050LL}) {
        INFO("w=" << w);
        CHECK(worst_deviation(2 * c_min, w, 1e-12, 1e-12) <= 0.25);
    }
}
