#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridtopo/errors.hpp"
#include "gridtopo/powerflow.hpp"
#include "gridtopo/sampling.hpp"

namespace gridtopo {

enum class EstimationMethod { Direct, Glasso, Auto };

inline std::string to_string(EstimationMethod m) {
    switch (m) {
        case EstimationMethod::Direct: return "direct";
        case EstimationMethod::Glasso: return "glasso";
        case EstimationMethod::Auto: return "auto";
    }
    return "unknown";
}

struct GlassoConfig {
    double lambda = 0.0;
    double tol = 1e-6;  ///< max absolute change of any entry over one sweep
    int max_iters = 500;  ///< sweeps
    bool diagonal_penalized = false;

    void validate() const {
        if (!(lambda >= 0.0)) throw Error(ErrorKind::Precondition, "glasso lambda must be non-negative");
        if (!(tol > 0.0)) throw Error(ErrorKind::Precondition, "glasso tolerance must be positive");
        if (max_iters < 1) throw Error(ErrorKind::Precondition, "glasso max_iters must be at least 1");
    }
};

struct EstimatedConcentration {
    Eigen::MatrixXd matrix;
    EstimationMethod method = EstimationMethod::Direct;
    std::vector<double> objective_trace;  ///< glasso only; one value per sweep plus the start
    int iterations = 0;
    bool converged = true;
    std::string termination;
};

/// (1/n) sum_k x_k x_k^T; samples are zero-mean fluctuations so no centring.
inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& samples) {
    if (samples.rows() < 1) throw Error(ErrorKind::Precondition, "need at least one sample");
    Eigen::MatrixXd cov = (samples.transpose() * samples) / static_cast<double>(samples.rows());
    return (0.5 * (cov + cov.transpose())).eval();
}

inline Eigen::MatrixXd sample_covariance(const SampleSet& set) { return sample_covariance(set.samples); }

namespace detail {

/// Relative floor below which an eigenvalue counts as zero.
inline constexpr double kPdEpsilon = 1e-12;

inline void require_square_symmetric(const Eigen::MatrixXd& m, const char* what) {
    if (m.rows() != m.cols() || m.rows() == 0) {
        throw Error(ErrorKind::Precondition, std::string(what) + " must be a non-empty square matrix");
    }
    const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw Error(ErrorKind::Precondition, std::string(what) + " is not symmetric");
    }
}

inline double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

}  // namespace detail

/// Matrix inverse of a covariance; requires the smallest eigenvalue to be
/// clearly positive.
inline EstimatedConcentration invert_covariance(const Eigen::MatrixXd& cov) {
    detail::require_square_symmetric(cov, "covariance");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
    const double smallest = eig.eigenvalues()(0);
    const double largest = eig.eigenvalues()(eig.eigenvalues().size() - 1);
    if (!(smallest > detail::kPdEpsilon * std::max(largest, 0.0)) || !(smallest > 0.0)) {
        std::ostringstream msg;
        msg << "covariance is rank deficient or ill-conditioned: smallest eigenvalue " << smallest
            << " (largest " << largest << ")";
        throw Error(ErrorKind::RankDeficiency, msg.str());
    }
    const auto n = cov.rows();
    Eigen::MatrixXd inv = cov.llt().solve(Eigen::MatrixXd::Identity(n, n));
    inv = 0.5 * (inv + inv.transpose());
    return {std::move(inv), EstimationMethod::Direct, {}, 0, true, "direct inverse"};
}

/// -log det S + <S, cov> + lambda * sum |S_ij| (diagonal included only when penalised).
inline double glasso_objective(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& cov, double lambda,
                               bool diagonal_penalized) {
    Eigen::LLT<Eigen::MatrixXd> llt(theta);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    double l1 = theta.cwiseAbs().sum();
    if (!diagonal_penalized) l1 -= theta.diagonal().cwiseAbs().sum();
    return -log_det + (theta.cwiseProduct(cov)).sum() + lambda * l1;
}

/// Graphical lasso by primal row/column block coordinate descent.
///
/// Each sweep visits every column j. Holding the other columns fixed, the
/// objective in (theta_12, theta_22) reduces to the lasso
///     min_g  c g^T Q g + 2 s_12^T g + 2 lambda |g|_1,   Q = Theta_11^{-1},
/// with c = s_22 (+ lambda when the diagonal is penalised) and
/// theta_22 = 1/c + g^T Q g. The lasso is solved by cyclic coordinate
/// descent with soft-thresholding, warm-started at the current column, so
/// the full objective never increases. W = Theta^{-1} is maintained by the
/// block inverse formula and refreshed by Cholesky after each sweep.
inline EstimatedConcentration graphical_lasso(const Eigen::MatrixXd& cov, const GlassoConfig& config) {
    config.validate();
    detail::require_square_symmetric(cov, "covariance");
    const auto d = cov.rows();
    if ((cov.diagonal().array() <= 0.0).any()) {
        throw Error(ErrorKind::Precondition, "covariance must have a positive diagonal");
    }
    const double diag_pen = config.diagonal_penalized ? config.lambda : 0.0;
    const double lambda = config.lambda;

    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(d, d);
    theta.diagonal() = (cov.diagonal().array() + diag_pen).inverse().matrix();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, d);
    w.diagonal() = cov.diagonal().array() + diag_pen;

    EstimatedConcentration out;
    out.method = EstimationMethod::Glasso;
    out.objective_trace.push_back(glasso_objective(theta, cov, lambda, config.diagonal_penalized));

    if (d == 1) {
        out.matrix = theta;
        out.termination = "closed form (d = 1)";
        return out;
    }

    std::vector<Eigen::Index> others(static_cast<std::size_t>(d - 1));
    Eigen::MatrixXd q(d - 1, d - 1);
    Eigen::VectorXd s12(d - 1), gamma(d - 1), q_gamma(d - 1), w12(d - 1);
    const double inner_tol = std::max(config.tol * 1e-3, 1e-15);

    bool converged = false;
    int sweep = 0;
    while (sweep < config.max_iters) {
        ++sweep;
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            for (Eigen::Index k = 0, m = 0; k < d; ++k) {
                if (k != j) others[static_cast<std::size_t>(m++)] = k;
            }
            const double w22 = w(j, j);
            for (Eigen::Index a = 0; a < d - 1; ++a) {
                const auto ia = others[static_cast<std::size_t>(a)];
                w12(a) = w(ia, j);
                s12(a) = cov(ia, j);
                gamma(a) = theta(ia, j);
            }
            for (Eigen::Index a = 0; a < d - 1; ++a) {
                const auto ia = others[static_cast<std::size_t>(a)];
                for (Eigen::Index b = 0; b < d - 1; ++b) {
                    q(a, b) = w(ia, others[static_cast<std::size_t>(b)]) - w12(a) * w12(b) / w22;
                }
            }
            const double c = cov(j, j) + diag_pen;

            // lasso: 1/2 g^T (cQ) g + s12^T g + lambda |g|_1
            const Eigen::VectorXd old_gamma = gamma;
            if (lambda == 0.0) {
                // no penalty: the coordinate solver's fixed point is the linear solve
                gamma = -(c * q).llt().solve(s12);
            } else {
                Eigen::VectorXd grad = c * (q * gamma);  // cQ g, kept current
                for (int inner = 0; inner < 10000; ++inner) {
                    double inner_change = 0.0;
                    for (Eigen::Index a = 0; a < d - 1; ++a) {
                        const double caa = c * q(a, a);
                        const double partial = s12(a) + grad(a) - caa * gamma(a);
                        const double next = -detail::soft_threshold(partial, lambda) / caa;
                        const double delta = next - gamma(a);
                        if (delta != 0.0) {
                            grad += (c * delta) * q.col(a);
                            gamma(a) = next;
                            inner_change = std::max(inner_change, std::abs(delta));
                        }
                    }
                    if (inner_change < inner_tol) break;
                }
            }
            q_gamma = q * gamma;
            const double theta22 = 1.0 / c + gamma.dot(q_gamma);

            max_change = std::max(max_change, (gamma - old_gamma).cwiseAbs().maxCoeff());
            max_change = std::max(max_change, std::abs(theta22 - theta(j, j)));

            theta(j, j) = theta22;
            for (Eigen::Index a = 0; a < d - 1; ++a) {
                const auto ia = others[static_cast<std::size_t>(a)];
                theta(ia, j) = gamma(a);
                theta(j, ia) = gamma(a);
            }
            // W = Theta^{-1}: W22 = c, W12 = -c Q g, W11 = Q + c (Qg)(Qg)^T
            w(j, j) = c;
            for (Eigen::Index a = 0; a < d - 1; ++a) {
                const auto ia = others[static_cast<std::size_t>(a)];
                w(ia, j) = -c * q_gamma(a);
                w(j, ia) = w(ia, j);
                for (Eigen::Index b = 0; b < d - 1; ++b) {
                    w(ia, others[static_cast<std::size_t>(b)]) = q(a, b) + c * q_gamma(a) * q_gamma(b);
                }
            }
        }
        theta = 0.5 * (theta + theta.transpose());
        Eigen::LLT<Eigen::MatrixXd> llt(theta);
        if (llt.info() != Eigen::Success) {
            throw Error(ErrorKind::Numerical, "graphical lasso iterate lost positive definiteness");
        }
        w = llt.solve(Eigen::MatrixXd::Identity(d, d));
        w = 0.5 * (w + w.transpose());
        out.objective_trace.push_back(glasso_objective(theta, cov, lambda, config.diagonal_penalized));
        if (max_change < config.tol) {
            converged = true;
            break;
        }
    }
    out.matrix = std::move(theta);
    out.iterations = sweep;
    out.converged = converged;
    out.termination = converged ? "max parameter change below tolerance" : "reached max_iters";
    return out;
}

/// Largest violation of the graphical lasso optimality conditions over
/// off-diagonal entries: |grad| <= lambda where theta_ij = 0, and
/// grad + lambda sign(theta_ij) = 0 elsewhere, with grad = cov - theta^{-1}.
inline double glasso_kkt_residual(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& cov, double lambda) {
    const auto d = theta.rows();
    const Eigen::MatrixXd w = theta.llt().solve(Eigen::MatrixXd::Identity(d, d));
    double worst = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            if (i == j) continue;
            const double grad = cov(i, j) - w(i, j);
            const double violation = theta(i, j) == 0.0
                                         ? std::max(0.0, std::abs(grad) - lambda)
                                         : std::abs(grad + lambda * (theta(i, j) > 0.0 ? 1.0 : -1.0));
            worst = std::max(worst, violation);
        }
    }
    return worst;
}

/// Default multiplier in lambda = c sqrt(log d / n).
inline constexpr double kLambdaScale = 0.5;

inline double select_lambda(std::size_t n, std::size_t d, double c = kLambdaScale) {
    if (n < 2) throw Error(ErrorKind::Precondition, "lambda selection needs at least two samples");
    if (d < 2) return 0.0;
    return c * std::sqrt(std::log(static_cast<double>(d)) / static_cast<double>(n));
}

struct LambdaSearch {
    double lambda = 0.0;
    std::vector<double> candidates;
    std::vector<double> scores;  ///< extended BIC per candidate
};

/// Extended BIC: n (-log det S + <S, cov>) + |E| log n + 4 gamma |E| log d,
/// with |E| the number of non-zero upper-triangular entries.
inline double extended_bic(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& cov, std::size_t n,
                           double gamma = 0.5) {
    const auto d = theta.rows();
    std::size_t edges = 0;
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i + 1; j < d; ++j) edges += theta(i, j) != 0.0 ? 1 : 0;
    }
    const double nll = glasso_objective(theta, cov, 0.0, false);
    const double dn = static_cast<double>(n);
    return dn * nll + static_cast<double>(edges) * std::log(dn) +
           4.0 * gamma * static_cast<double>(edges) * std::log(static_cast<double>(d));
}

/// Grid search over multiples of the default lambda scored by extended BIC.
inline LambdaSearch select_lambda_ebic(const Eigen::MatrixXd& cov, std::size_t n,
                                       const std::vector<double>& multipliers = {0.25, 0.5, 1.0, 2.0, 4.0},
                                       GlassoConfig base = {}) {
    LambdaSearch out;
    const double center = select_lambda(n, static_cast<std::size_t>(cov.rows()));
    double best = std::numeric_limits<double>::infinity();
    for (double m : multipliers) {
        base.lambda = m * center;
        const auto fit = graphical_lasso(cov, base);
        const double score = extended_bic(fit.matrix, cov, n);
        out.candidates.push_back(base.lambda);
        out.scores.push_back(score);
        if (score < best) {
            best = score;
            out.lambda = base.lambda;
        }
    }
    return out;
}

/// Minimum samples-per-dimension ratio for `auto` to pick direct inversion.
inline constexpr double kDirectSampleRatio = 5.0;

/// Concentration estimate from samples. `Auto` inverts directly when
/// n >= 5 d and the sample covariance is positive definite, otherwise runs
/// the graphical lasso. With `default_lambda` the lasso uses select_lambda
/// instead of config.lambda.
inline EstimatedConcentration estimate_concentration(const Eigen::MatrixXd& samples, EstimationMethod method,
                                                     GlassoConfig config = {}, bool default_lambda = true) {
    const Eigen::MatrixXd cov = sample_covariance(samples);
    const auto n = static_cast<std::size_t>(samples.rows());
    const auto d = static_cast<std::size_t>(samples.cols());
    auto run_glasso = [&] {
        if (default_lambda) config.lambda = select_lambda(std::max<std::size_t>(n, 2), d);
        return graphical_lasso(cov, config);
    };
    switch (method) {
        case EstimationMethod::Direct: return invert_covariance(cov);
        case EstimationMethod::Glasso: return run_glasso();
        case EstimationMethod::Auto:
            if (static_cast<double>(n) >= kDirectSampleRatio * static_cast<double>(d)) {
                try {
                    return invert_covariance(cov);
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::RankDeficiency) throw;
                }
            }
            return run_glasso();
    }
    return invert_covariance(cov);
}

/// Wraps an estimate with the sample labels so it can feed topology learning.
inline ConcentrationMatrix as_concentration(const EstimatedConcentration& est, const SampleSet& set) {
    return {est.matrix, set.labels, set.model_kind};
}

}  // namespace gridtopo
