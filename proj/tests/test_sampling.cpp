#include <catch2/catch_amalgamated.hpp>

#include "gridtopo/experiment.hpp"
#include "gridtopo/sampling.hpp"
#include "oracles.hpp"

using namespace gridtopo;
using Catch::Approx;

namespace {

/// Largest |empirical - exact| / standard error over all entries.
double worst_z(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& exact) {
    const auto n = static_cast<std::size_t>(samples.rows());
    const Eigen::MatrixXd emp = samples.transpose() * samples / static_cast<double>(n);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < exact.rows(); ++i) {
        for (Eigen::Index j = i; j < exact.cols(); ++j) {
            worst = std::max(worst, std::abs(emp(i, j) - exact(i, j)) / oracle::moment_se(exact, i, j, n));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("seed derivation and uniform stream", "[sampling]") {
    CHECK(derive_seed(7, 0) != derive_seed(7, 1));
    CHECK(derive_seed(7, 0) != derive_seed(8, 0));
    SeededRng rng(1);
    for (int k = 0; k < 1000; ++k) {
        const double u = rng.uniform();
        CHECK((u > 0.0 && u < 1.0));
    }
}

TEST_CASE("injection samples have the requested nodal blocks", "[sampling]") {
    const auto stats = InjectionStats::uniform(3, 1.0, 1.0, 0.5);
    const std::size_t n = 100000;
    const auto x = sample_injections(stats, n, 123);
    REQUIRE(x.rows() == static_cast<Eigen::Index>(n));
    REQUIRE(x.cols() == 6);
    const Eigen::MatrixXd emp = x.transpose() * x / static_cast<double>(n);
    for (int b = 0; b < 3; ++b) {
        CHECK(emp(b, b) == Approx(1.0).margin(0.02));
        CHECK(emp(b + 3, b + 3) == Approx(1.0).margin(0.02));
        CHECK(emp(b, b + 3) == Approx(0.5).margin(0.02));
        CHECK(std::abs(emp(b, (b + 1) % 3)) < 0.02);  // buses independent
    }
    CHECK_THROWS_AS(sample_injections(InjectionStats::uniform(3, 1, 1, 1), 10, 1), Error);
}

TEST_CASE("sampling is deterministic and prefix-stable", "[sampling]") {
    const auto gc = builtin_grid("radial20");
    const auto a = generate_voltage_samples(gc.grid, gc.stats_or_default(), ModelKind::LC, 500, 99);
    const auto b = generate_voltage_samples(gc.grid, gc.stats_or_default(), ModelKind::LC, 500, 99);
    CHECK(a.samples == b.samples);
    const auto c = generate_voltage_samples(gc.grid, gc.stats_or_default(), ModelKind::LC, 200, 99);
    CHECK(c.samples == a.samples.topRows(200));
    const auto one = generate_voltage_samples(gc.grid, gc.stats_or_default(), ModelKind::DC, 1, 5);
    CHECK(one.count() == 1);
    CHECK(one.dimension() == 19);
    CHECK(a.dimension() == 38);
    CHECK(to_string(a.labels.front()) == "v_1");
    CHECK(to_string(a.labels.back()) == "theta_19");
}

TEST_CASE("DC solve", "[sampling]") {
    const Grid one(2, 0, {{0, 1, 0.0, 0.5, std::nullopt}});  // beta = 2
    const auto model = DcModel::from_grid(one);
    CHECK(solve_dc(model, Eigen::VectorXd::Constant(1, 1.0))(0) == Approx(0.5));

    const auto gc = builtin_grid("radial20");
    const auto dc = DcModel::from_grid(gc.grid);
    CHECK(solve_dc(dc, Eigen::VectorXd::Zero(19)).isZero());
    const Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(19, -1.0, 2.0);
    const Eigen::VectorXd theta = solve_dc(dc, p);
    CHECK((dc.h_beta.matrix * theta - p).norm() / p.norm() < 1e-10);
}

TEST_CASE("LC solve", "[sampling]") {
    const auto radial = builtin_grid("radial20");
    const auto model = LcModel::from_grid(radial.grid);
    const auto zero = solve_lc(model, Eigen::VectorXd::Zero(19), Eigen::VectorXd::Zero(19));
    CHECK(zero.v.isZero());
    CHECK(zero.theta.isZero());

    const Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(19, -1.0, 1.0);
    const Eigen::VectorXd q = Eigen::VectorXd::LinSpaced(19, 0.5, -0.3);
    const auto sol = solve_lc(model, p, q);
    const Eigen::MatrixXd r_inv = oracle::path_sum_inverse(radial.grid, [](const Line& l) { return l.r; });
    const Eigen::MatrixXd x_inv = oracle::path_sum_inverse(radial.grid, [](const Line& l) { return l.x; });
    CHECK((sol.v - (r_inv * p + x_inv * q)).norm() < 1e-10 * sol.v.norm());
    CHECK((sol.theta - (x_inv * p - r_inv * q)).norm() < 1e-10 * sol.theta.norm());

    const auto ieee = builtin_grid("ieee14");
    const auto m14 = LcModel::from_grid(ieee.grid);
    const Eigen::VectorXd p14 = Eigen::VectorXd::LinSpaced(13, -1.0, 1.0);
    const Eigen::VectorXd q14 = Eigen::VectorXd::LinSpaced(13, 1.0, 0.0);
    const auto s14 = solve_lc(m14, p14, q14);
    Eigen::VectorXd x(26), rhs(26);
    x << s14.v, s14.theta;
    rhs << p14, q14;
    CHECK((m14.system_matrix() * x - rhs).norm() / rhs.norm() < 1e-10);
}

TEST_CASE("sampled covariances agree with the analytical ones", "[sampling][montecarlo]") {
    const auto gc = builtin_grid("radial20");
    const auto stats = gc.stats_or_default();
    const std::size_t n = 100000;
    const auto dc = generate_voltage_samples(gc.grid, stats, ModelKind::DC, n, 2024);
    // Bonferroni-style bound over 190 entries (~4.4 SE for 1% family-wise).
    CHECK(worst_z(dc.samples, exact_covariance(gc.grid, stats, ModelKind::DC)) < 4.5);
    const auto lc = generate_voltage_samples(gc.grid, stats, ModelKind::LC, n, 2025);
    CHECK(worst_z(lc.samples, exact_covariance(gc.grid, stats, ModelKind::LC)) < 4.8);
}
