#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gridtopo/estimation.hpp"
#include "gridtopo/experiment.hpp"
#include "oracles.hpp"

using namespace gridtopo;
using Catch::Approx;

namespace {

Eigen::MatrixXd random_pd(std::mt19937_64& rng, int d, int n_factor = 3) {
    std::normal_distribution<double> z;
    Eigen::MatrixXd x(n_factor * d, d);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = z(rng);
    }
    return x.transpose() * x / static_cast<double>(x.rows());
}

}  // namespace

TEST_CASE("sample covariance", "[estimation]") {
    Eigen::MatrixXd one(1, 3);
    one << 1, 2, 3;
    Eigen::MatrixXd expected = one.transpose() * one;
    CHECK(sample_covariance(one).isApprox(expected));

    const Eigen::MatrixXd basis = 2.0 * Eigen::MatrixXd::Identity(3, 3);
    CHECK(sample_covariance(basis).isApprox(Eigen::MatrixXd(Eigen::Vector3d::Constant(4.0 / 3.0).asDiagonal())));
}

TEST_CASE("direct inversion", "[estimation]") {
    CHECK(invert_covariance(Eigen::MatrixXd::Identity(4, 4)).matrix.isApprox(Eigen::MatrixXd::Identity(4, 4)));
    Eigen::MatrixXd d = Eigen::Vector2d(2, 4).asDiagonal();
    CHECK(invert_covariance(d).matrix.isApprox(Eigen::MatrixXd(Eigen::Vector2d(0.5, 0.25).asDiagonal())));

    const auto gc = builtin_grid("radial20");
    const auto stats = gc.stats_or_default();
    const auto exact = exact_concentration(gc.grid, stats, ModelKind::DC).matrix;
    const auto inv = invert_covariance(exact_covariance(gc.grid, stats, ModelKind::DC)).matrix;
    CHECK((inv - exact).cwiseAbs().maxCoeff() < 1e-8 * exact.cwiseAbs().maxCoeff());
}

TEST_CASE("rank deficiency is reported with the eigenvalue", "[estimation]") {
    Eigen::MatrixXd x(2, 4);
    x << 1, 2, 3, 4, 0, 1, 0, 1;
    try {
        invert_covariance(sample_covariance(x));
        FAIL("expected rank deficiency");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::RankDeficiency);
        CHECK(std::string(e.what()).find("eigenvalue") != std::string::npos);
    }
}

TEST_CASE("graphical lasso with zero penalty is the inverse", "[estimation][glasso]") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 5; ++t) {
        const auto cov = random_pd(rng, 8 + t);
        GlassoConfig cfg;
        cfg.lambda = 0.0;
        const auto fit = graphical_lasso(cov, cfg);
        const Eigen::MatrixXd inv = cov.inverse();
        CHECK((fit.matrix - inv).cwiseAbs().maxCoeff() < 1e-5 * inv.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("graphical lasso on two variables", "[estimation][glasso]") {
    Eigen::Matrix2d s;
    s << 2.0, 0.8, 0.8, 1.0;
    for (double lambda : {0.0, 0.1, 0.5, 0.79, 1.0}) {
        GlassoConfig cfg;
        cfg.lambda = lambda;
        cfg.tol = 1e-10;
        const auto fit = graphical_lasso(s, cfg);
        const Eigen::Matrix2d expected = oracle::glasso_2x2(s, lambda);
        INFO("lambda " << lambda);
        CHECK((fit.matrix - Eigen::MatrixXd(expected)).cwiseAbs().maxCoeff() < 1e-7);
    }
}

TEST_CASE("graphical lasso satisfies its optimality conditions", "[estimation][glasso]") {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 10; ++t) {
        const int d = 5 + t;
        const auto cov = random_pd(rng, d);
        GlassoConfig cfg;
        cfg.lambda = 0.05 + 0.02 * t;
        const auto fit = graphical_lasso(cov, cfg);
        CHECK(fit.converged);
        CHECK(glasso_kkt_residual(fit.matrix, cov, cfg.lambda) < 1e-4);
        for (std::size_t k = 1; k < fit.objective_trace.size(); ++k) {
            CHECK(fit.objective_trace[k] <= fit.objective_trace[k - 1] + 1e-12 * std::abs(fit.objective_trace[k - 1]));
        }
    }
}

TEST_CASE("large penalty shrinks to a diagonal", "[estimation][glasso]") {
    std::mt19937_64 rng(15);
    const auto cov = random_pd(rng, 6);
    GlassoConfig cfg;
    cfg.lambda = 10.0 * cov.cwiseAbs().maxCoeff();
    auto fit = graphical_lasso(cov, cfg);
    for (int i = 0; i < 6; ++i) {
        CHECK(fit.matrix(i, i) == Approx(1.0 / cov(i, i)).epsilon(1e-8));
        for (int j = 0; j < 6; ++j) {
            if (i != j) CHECK(fit.matrix(i, j) == 0.0);
        }
    }
    cfg.diagonal_penalized = true;
    fit = graphical_lasso(cov, cfg);
    for (int i = 0; i < 6; ++i) CHECK(fit.matrix(i, i) == Approx(1.0 / (cov(i, i) + cfg.lambda)).epsilon(1e-8));
}

TEST_CASE("non-convergence is flagged, not thrown", "[estimation][glasso]") {
    std::mt19937_64 rng(16);
    const auto cov = random_pd(rng, 12, 2);
    GlassoConfig cfg;
    cfg.lambda = 0.01;
    cfg.max_iters = 1;
    cfg.tol = 1e-14;
    const auto fit = graphical_lasso(cov, cfg);
    CHECK_FALSE(fit.converged);
    CHECK(fit.iterations == 1);
}

TEST_CASE("invalid glasso configuration", "[estimation][glasso]") {
    GlassoConfig cfg;
    cfg.lambda = -1.0;
    CHECK_THROWS_AS(graphical_lasso(Eigen::MatrixXd::Identity(3, 3), cfg), Error);
    cfg.lambda = 0.1;
    Eigen::MatrixXd asym = Eigen::MatrixXd::Identity(3, 3);
    asym(0, 1) = 0.5;
    CHECK_THROWS_AS(graphical_lasso(asym, cfg), Error);
}

TEST_CASE("default penalty rate", "[estimation]") {
    CHECK(select_lambda(400, 40) == Approx(0.5 * std::sqrt(std::log(40.0) / 400.0)));
    CHECK(select_lambda(400, 40) == Approx(0.0480).margin(5e-5));
    CHECK(select_lambda(800, 40) == Approx(select_lambda(400, 40) / std::sqrt(2.0)));
    CHECK(select_lambda(100000000, 40) < 1e-4);
}

TEST_CASE("extended BIC search picks a candidate", "[estimation]") {
    const auto gc = builtin_grid("radial20");
    const auto set = generate_voltage_samples(gc.grid, gc.stats_or_default(), ModelKind::DC, 60, 3);
    const auto search = select_lambda_ebic(sample_covariance(set), 60);
    REQUIRE(search.candidates.size() == 5);
    CHECK(std::find(search.candidates.begin(), search.candidates.end(), search.lambda) != search.candidates.end());
}

TEST_CASE("auto estimator chooses by sample size", "[estimation]") {
    const auto gc = builtin_grid("radial20");
    const auto big = generate_voltage_samples(gc.grid, gc.stats_or_default(), ModelKind::DC, 200, 1);
    CHECK(estimate_concentration(big.samples, EstimationMethod::Auto).method == EstimationMethod::Direct);
    const auto small = generate_voltage_samples(gc.grid, gc.stats_or_default(), ModelKind::DC, 40, 1);
    CHECK(estimate_concentration(small.samples, EstimationMethod::Auto).method == EstimationMethod::Glasso);
    // fewer samples than variables: direct fails, lasso still works
    const auto tiny = generate_voltage_samples(gc.grid, gc.stats_or_default(), ModelKind::DC, 10, 1);
    CHECK_THROWS_AS(estimate_concentration(tiny.samples, EstimationMethod::Direct), Error);
    CHECK(estimate_concentration(tiny.samples, EstimationMethod::Glasso).matrix.allFinite());
}
