#include "basinforge/robust_map.hpp"
#include "basinforge/dual.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace basinforge;
using namespace basinforge::robust;
using tm::EncodedConfig;

namespace {

std::vector<tm::TuringMachine> machines() {
    return {tm::make_eraser(), tm::make_looper(), tm::make_binary_incrementer()};
}

double dist(const Vec3& a, const Vec3& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("build_extension rejects lambda outside (0,1)") {
    CHECK_THROWS_AS(build_extension(tm::make_eraser(), 0.0), BadLambda);
    CHECK_THROWS_AS(build_extension(tm::make_eraser(), 1.0), BadLambda);
    CHECK_THROWS_AS(build_extension(tm::make_eraser(), -0.3), BadLambda);
    CHECK_NOTHROW(build_extension(tm::make_eraser(), 0.99));
}

TEST_CASE("fbar on eraser configurations") {
    const auto f = build_extension(tm::make_eraser());
    CHECK(f(Vec3(0, 0, 2)) == Vec3(0, 0, 2));
    CHECK(f(Vec3(0, 35, 1)) == Vec3(0, 3, 1));
    const Vec3 v = f(Vec3(0.1, 35.1, 1.1));
    CHECK(v[0] == doctest::Approx(0.05).epsilon(1e-14));
    CHECK(v[1] == doctest::Approx(3.05).epsilon(1e-14));
    CHECK(v[2] == doctest::Approx(1.05).epsilon(1e-14));
}

TEST_CASE("fbar equals step on reachable configurations, exactly") {
    for (const auto& M : machines()) {
        const auto f = build_extension(M);
        for (long w : {0L, 1L, 6L, 13L, 35L, 50L, 255L, 1000L}) {
            for (const auto& c : tm::reachable(M, w, 200))
                CHECK(f(to_vec(c)) == to_vec(tm::step(M, c)));
        }
    }
}

TEST_CASE("smooth path agrees with the integer fast path at configurations") {
    // The generic (Dual) evaluation runs the interpolation formula even on
    // integer inputs; its value part must reproduce step exactly.
    for (const auto& M : machines()) {
        const auto f = build_extension(M);
        for (const auto& c : tm::reachable(M, 37, 60)) {
            std::array<Dual<3>, 3> x;
            const Vec3 v = to_vec(c);
            for (int i = 0; i < 3; ++i) x[i] = Dual<3>::variable(v[i], i);
            const auto out = f.eval(x);
            const Vec3 expect = to_vec(tm::step(M, c));
            for (int i = 0; i < 3; ++i) CHECK(out[i].v == expect[i]);
        }
    }
}

TEST_CASE("contraction on 1/4-balls around configurations") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> U(-0.25, 0.25);
    for (const auto& M : machines()) {
        const auto f = build_extension(M, 0.5);
        const auto path = tm::reachable(M, 45, 50);
        for (int i = 0; i < 300; ++i) {
            const Vec3 x0 = to_vec(path[i % path.size()]);
            const Vec3 x = x0 + Vec3(U(rng), U(rng), U(rng));
            CHECK(dist(f(x), f(x0)) <= 0.5 * dist(x, x0) + 1e-12);
        }
    }
}

TEST_CASE("Jacobian is lambda*I on plateaus and matches differences elsewhere") {
    const auto f = build_extension(tm::make_binary_incrementer(), 0.5);
    const Mat3 J = f.jacobian(Vec3(0.1, 5.2, 1.05));
    CHECK((J - 0.5 * Mat3::Identity()).cwiseAbs().maxCoeff() == 0.0);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(0.0, 12.0), Q(1.0, 4.0);
    const double h = 1e-6;
    for (int n = 0; n < 200; ++n) {
        const Vec3 x(U(rng), U(rng), Q(rng));
        const Mat3 A = f.jacobian(x);
        for (int j = 0; j < 3; ++j) {
            Vec3 e = Vec3::Zero();
            e[j] = h;
            const Vec3 fd = (f(x + e) - f(x - e)) / (2 * h);
            CHECK((A.col(j) - fd).cwiseAbs().maxCoeff() <= 1e-4 * std::max(1.0, A.col(j).cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("iterate_tracked") {
    const auto M = tm::make_eraser();
    const PerturbedMap g0(build_extension(M));
    const EncodedConfig x0 = tm::encode_input(M, 35);
    for (const auto& row : iterate_tracked(g0, to_vec(x0), x0, 20)) CHECK(row.dev == 0.0);

    const PerturbedMap g(build_extension(M), PerturbationSpec::constant(0.05, Eigen::Vector3d(1, -1, 1)));
    const auto rows = iterate_tracked(g, to_vec(x0) + Vec3(0.15, 0.15, 0.15), x0, 50);
    CHECK(rows.size() == 51);
    for (const auto& row : rows) CHECK(row.dev <= 0.2);

    std::ostringstream os;
    write_tracking_csv(os, rows);
    CHECK(os.str().rfind("j,dev\n0,", 0) == 0);
}

TEST_CASE("find_sink") {
    const auto f = build_extension(tm::make_eraser());
    const auto s = find_sink(PerturbedMap(f), Vec3(0, 0, 2));
    CHECK(dist(Vec3(s.point), Vec3(0, 0, 2)) == 0.0);

    const PerturbedMap g(f, PerturbationSpec::sinusoidal(0.01, Eigen::Vector3d(1, 1, 1)));
    const auto sg = find_sink(g, Vec3(0, 0, 2));
    CHECK(dist(Vec3(sg.point), Vec3(0, 0, 2)) < 0.1);
    for (const auto& ev : sg.eigenvalues) CHECK(std::abs(ev) < 1.0);

    const auto toy = find_sink([](const Eigen::VectorXd& x) { return Eigen::VectorXd(x / 2); },
                               [](const Eigen::VectorXd& x) {
                                   return Eigen::MatrixXd(Eigen::MatrixXd::Identity(x.size(), x.size()) / 2);
                               },
                               Eigen::Vector3d(1, 1, 1));
    CHECK(toy.point.norm() <= 1e-10);

    CHECK_THROWS_AS(find_sink([](const Eigen::VectorXd& x) { return Eigen::VectorXd(2 * x); },
                              [](const Eigen::VectorXd& x) {
                                  return Eigen::MatrixXd(2 * Eigen::MatrixXd::Identity(x.size(), x.size()));
                              },
                              Eigen::Vector3d(1, 1, 1)),
                    NotASink);
    CHECK_THROWS_AS(find_sink([](const Eigen::VectorXd& x) { return Eigen::VectorXd(x.array() + 1.0); },
                              [](const Eigen::VectorXd& x) {
                                  return Eigen::MatrixXd(Eigen::MatrixXd::Identity(x.size(), x.size()));
                              },
                              Eigen::Vector3d(1, 1, 1)),
                    NewtonDiverged);
}

TEST_CASE("basin_membership examples") {
    const PerturbedMap erase(build_extension(tm::make_eraser()));
    CHECK(basin_membership(erase, 35, 0.2, 100).verdict == Verdict::In);
    const PerturbedMap loop(build_extension(tm::make_looper()));
    CHECK(basin_membership(loop, 5, 0.2, 100).verdict == Verdict::NotYet);
    const PerturbedMap perturbed(build_extension(tm::make_eraser()),
                                 PerturbationSpec::sinusoidal(0.05, Eigen::Vector3d(1, -0.5, 0.7)));
    CHECK(perturbed.theta() == doctest::Approx(0.05));
    CHECK(basin_membership(perturbed, 35, 0.2, 100).verdict == Verdict::In);

    const PerturbedMap wild(build_extension(tm::make_eraser()),
                            PerturbationSpec::constant(1e10, Eigen::Vector3d(1, 1, 1)));
    CHECK(basin_membership(wild, Vec3(0, 0, 2), 35, 0.2, 100).verdict == Verdict::Escaped);
}

TEST_CASE("halting correspondence for w <= 50") {
    for (const auto& M : machines()) {
        const PerturbedMap g(build_extension(M));
        const Vec3 s = find_sink(g, Vec3(0, 0, M.halting_state())).point;
        for (long w = 0; w <= 50; ++w) {
            const auto oracle = tm::run(M, w, 500);
            const auto budget = 10 * std::max<std::uint64_t>(oracle.steps_used, 1);
            const auto v = basin_membership(g, s, w, 0.2, budget);
            CHECK((v.verdict == Verdict::In) == oracle.reached_halting_config());
            CHECK(v.verdict != Verdict::Escaped);
        }
    }
}
