#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gridtopo/errors.hpp"
#include "gridtopo/grid.hpp"

namespace gridtopo {

enum class ModelKind { DC, LC };

inline std::string to_string(ModelKind kind) { return kind == ModelKind::DC ? "dc" : "lc"; }

enum class VoltageKind { Magnitude, Angle };

/// Identifies one voltage variable: magnitude or phase angle at a bus.
struct VariableLabel {
    BusId bus = 0;
    VoltageKind kind = VoltageKind::Angle;

    friend bool operator==(const VariableLabel&, const VariableLabel&) = default;
};

inline std::string to_string(const VariableLabel& label) {
    return (label.kind == VoltageKind::Angle ? "theta_" : "v_") + std::to_string(label.bus);
}

/// Labels in model order: DC is [theta...], LC is [v..., theta...].
inline std::vector<VariableLabel> variable_labels(const std::vector<BusId>& buses, ModelKind kind) {
    std::vector<VariableLabel> out;
    if (kind == ModelKind::LC) {
        for (BusId b : buses) out.push_back({b, VoltageKind::Magnitude});
    }
    for (BusId b : buses) out.push_back({b, VoltageKind::Angle});
    return out;
}

/// Per-bus covariance of active/reactive injection fluctuations, indexed
/// by matrix index (non-reference buses in id order).
struct InjectionStats {
    Eigen::VectorXd pp;
    Eigen::VectorXd qq;
    Eigen::VectorXd pq;

    static InjectionStats uniform(std::size_t n, double sigma_pp, double sigma_qq, double sigma_pq) {
        const auto m = static_cast<Eigen::Index>(n);
        return {Eigen::VectorXd::Constant(m, sigma_pp), Eigen::VectorXd::Constant(m, sigma_qq),
                Eigen::VectorXd::Constant(m, sigma_pq)};
    }

    /// Equal p/q variances with p-q correlation 0.5.
    static InjectionStats defaults(std::size_t n) { return uniform(n, 1.0, 1.0, 0.5); }

    Eigen::Index size() const noexcept { return pp.size(); }

    /// Determinants of the nodal 2x2 blocks.
    Eigen::VectorXd block_determinants() const { return (pp.array() * qq.array() - pq.array().square()).matrix(); }

    void validate(std::size_t expected) const {
        if (pp.size() != static_cast<Eigen::Index>(expected) || qq.size() != pp.size() || pq.size() != pp.size()) {
            throw Error(ErrorKind::Precondition, "injection statistics cover " + std::to_string(pp.size()) +
                                                     " buses, expected " + std::to_string(expected));
        }
        for (Eigen::Index i = 0; i < pp.size(); ++i) {
            if (!(pp(i) > 0.0) || !(qq(i) > 0.0)) {
                throw Error(ErrorKind::Precondition,
                            "injection variances must be positive (index " + std::to_string(i) + ")");
            }
            if (!(pp(i) * qq(i) - pq(i) * pq(i) > 0.0)) {
                throw Error(ErrorKind::Precondition,
                            "degenerate injection covariance block at index " + std::to_string(i));
            }
        }
    }
};

/// p = H_beta * theta
struct DcModel {
    WeightedReducedLaplacian h_beta;
    std::vector<BusId> buses;

    static DcModel from_grid(const Grid& grid) {
        return {reduced_laplacian(grid, WeightKind::Susceptance), grid.non_reference_buses()};
    }
    std::size_t size() const noexcept { return buses.size(); }
};

/// [v; theta] = S^{-1} [p; q] with S = [[H_g, H_beta], [H_beta, -H_g]].
struct LcModel {
    WeightedReducedLaplacian h_g;
    WeightedReducedLaplacian h_beta;
    std::vector<BusId> buses;

    static LcModel from_grid(const Grid& grid) {
        return {reduced_laplacian(grid, WeightKind::Conductance), reduced_laplacian(grid, WeightKind::Susceptance),
                grid.non_reference_buses()};
    }
    std::size_t size() const noexcept { return buses.size(); }

    Eigen::MatrixXd system_matrix() const {
        const auto n = h_g.matrix.rows();
        Eigen::MatrixXd s(2 * n, 2 * n);
        s << h_g.matrix, h_beta.matrix, h_beta.matrix, -h_g.matrix;
        return s;
    }
};

/// Symmetric positive-definite inverse covariance of voltage variables.
struct ConcentrationMatrix {
    Eigen::MatrixXd matrix;
    std::vector<VariableLabel> labels;
    ModelKind kind = ModelKind::DC;

    /// Buses in label order, one per bus.
    std::vector<BusId> buses() const {
        std::vector<BusId> out;
        for (const auto& l : labels) {
            if (l.kind == VoltageKind::Angle) out.push_back(l.bus);
        }
        return out;
    }
};

namespace detail {

inline Eigen::LLT<Eigen::MatrixXd> factor_spd(const Eigen::MatrixXd& m, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) throw Error(ErrorKind::Numerical, std::string(what) + " is not positive definite");
    return llt;
}

inline Eigen::PartialPivLU<Eigen::MatrixXd> factor_general(const Eigen::MatrixXd& m, const char* what) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    if (!(lu.rcond() > 1e-14)) throw Error(ErrorKind::Numerical, std::string(what) + " is singular");
    return lu;
}

inline double max_abs(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// Per-entry evaluation of H Sigma_p^{-1} H for a reduced Laplacian H:
///   (i,j), i != j: -b_ij (b_i / s_i + b_j / s_j) + sum_{k != i,j} b_ik b_jk / s_k
///   (i,i):         b_i^2 / s_i + sum_{k != i} b_ik^2 / s_k
/// with b_ij = -H(i,j) and b_i = H(i,i). Only neighbours contribute.
inline Eigen::MatrixXd dc_concentration_by_entries(const Eigen::MatrixXd& h, const Eigen::VectorXd& sigma_p) {
    const auto n = h.rows();
    std::vector<std::vector<Eigen::Index>> nbrs(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k != i && h(i, k) != 0.0) nbrs[i].push_back(k);
        }
    }
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double diag = h(i, i) * h(i, i) / sigma_p(i);
        for (auto k : nbrs[i]) diag += h(i, k) * h(i, k) / sigma_p(k);
        out(i, i) = diag;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double value = 0.0;
            const double b_ij = -h(i, j);
            if (b_ij != 0.0) value -= b_ij * (h(i, i) / sigma_p(i) + h(j, j) / sigma_p(j));
            for (auto k : nbrs[i]) {
                if (k == j) continue;
                const double b_jk = -h(j, k);
                if (b_jk != 0.0) value += (-h(i, k)) * b_jk / sigma_p(k);
            }
            out(i, j) = value;
            out(j, i) = value;
        }
    }
    return out;
}

}  // namespace detail

/// Sigma_theta = H_beta^{-1} Sigma_p H_beta^{-1}
inline Eigen::MatrixXd dc_phase_covariance(const DcModel& model, const InjectionStats& stats) {
    stats.validate(model.size());
    const auto llt = detail::factor_spd(model.h_beta.matrix, "H_beta");
    const auto n = model.h_beta.matrix.rows();
    const Eigen::MatrixXd h_inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::MatrixXd cov = h_inv * stats.pp.asDiagonal() * h_inv;
    return (0.5 * (cov + cov.transpose())).eval();
}

/// H_beta Sigma_p^{-1} H_beta. The dense product is cross-checked against
/// the per-entry neighbourhood formula; disagreement beyond 1e-10 relative
/// raises a numerical error.
inline ConcentrationMatrix dc_concentration(const DcModel& model, const InjectionStats& stats) {
    stats.validate(model.size());
    detail::factor_spd(model.h_beta.matrix, "H_beta");
    const auto& h = model.h_beta.matrix;
    Eigen::MatrixXd product = h * stats.pp.cwiseInverse().asDiagonal() * h;
    product = 0.5 * (product + product.transpose());
    const Eigen::MatrixXd entries = detail::dc_concentration_by_entries(h, stats.pp);
    const double scale = std::max(detail::max_abs(product), 1e-300);
    const double gap = detail::max_abs(product - entries) / scale;
    if (gap > 1e-10) {
        throw Error(ErrorKind::Numerical, "DC concentration self-check failed: relative gap " + std::to_string(gap));
    }
    return {std::move(product), variable_labels(model.buses, ModelKind::DC), ModelKind::DC};
}

/// Block covariance of [p; q]; each block diagonal.
inline Eigen::MatrixXd injection_covariance(const InjectionStats& stats) {
    const auto n = stats.size();
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    sigma.topLeftCorner(n, n).diagonal() = stats.pp;
    sigma.bottomRightCorner(n, n).diagonal() = stats.qq;
    sigma.topRightCorner(n, n).diagonal() = stats.pq;
    sigma.bottomLeftCorner(n, n).diagonal() = stats.pq;
    return sigma;
}

/// S^{-1} Sigma_(p,q) S^{-1}
inline Eigen::MatrixXd lc_voltage_covariance(const LcModel& model, const InjectionStats& stats) {
    stats.validate(model.size());
    const Eigen::MatrixXd s = model.system_matrix();
    const auto lu = detail::factor_general(s, "LC system matrix");
    const Eigen::MatrixXd s_inv = lu.solve(Eigen::MatrixXd::Identity(s.rows(), s.cols()));
    Eigen::MatrixXd cov = s_inv * injection_covariance(stats) * s_inv.transpose();
    return (0.5 * (cov + cov.transpose())).eval();
}

/// Four blocks of the LC concentration matrix.
struct LcConcentrationBlocks {
    Eigen::MatrixXd vv, vtheta, thetav, thetatheta;
};

/// Closed-form blocks of S Sigma_(p,q)^{-1} S. With a = D^{-1} Sigma_qq,
/// b = D^{-1} Sigma_pq, c = D^{-1} Sigma_pp and D = |Sigma_pp Sigma_qq - Sigma_pq^2|:
///   J_vv   = G a G - G b B - B b G + B c B
///   J_vth  = G a B + G b G - B b B - B c G
///   J_thv  = B a G + G b G - B b B - G c B
///   J_thth = B a B + G b B + B b G + G c G
inline LcConcentrationBlocks lc_concentration_blocks(const LcModel& model, const InjectionStats& stats) {
    stats.validate(model.size());
    const auto& g = model.h_g.matrix;
    const auto& b = model.h_beta.matrix;
    const Eigen::VectorXd d = stats.block_determinants().cwiseAbs();
    const Eigen::VectorXd a_diag = stats.qq.cwiseQuotient(d);
    const Eigen::VectorXd b_diag = stats.pq.cwiseQuotient(d);
    const Eigen::VectorXd c_diag = stats.pp.cwiseQuotient(d);
    const auto a = a_diag.asDiagonal();
    const auto bb = b_diag.asDiagonal();
    const auto c = c_diag.asDiagonal();

    LcConcentrationBlocks out;
    out.vv = g * a * g - g * bb * b - b * bb * g + b * c * b;
    out.vtheta = g * a * b + g * bb * g - b * bb * b - b * c * g;
    out.thetav = b * a * g + g * bb * g - b * bb * b - g * c * b;
    out.thetatheta = b * a * b + g * bb * b + b * bb * g + g * c * g;
    return out;
}

inline ConcentrationMatrix lc_concentration(const LcModel& model, const InjectionStats& stats) {
    const auto blocks = lc_concentration_blocks(model, stats);
    const auto n = blocks.vv.rows();
    Eigen::MatrixXd j(2 * n, 2 * n);
    j << blocks.vv, blocks.vtheta, blocks.thetav, blocks.thetatheta;
    j = 0.5 * (j + j.transpose());
    return {std::move(j), variable_labels(model.buses, ModelKind::LC), ModelKind::LC};
}

/// Analytical concentration for a grid under either model.
inline ConcentrationMatrix exact_concentration(const Grid& grid, const InjectionStats& stats, ModelKind kind) {
    if (kind == ModelKind::DC) return dc_concentration(DcModel::from_grid(grid), stats);
    return lc_concentration(LcModel::from_grid(grid), stats);
}

inline Eigen::MatrixXd exact_covariance(const Grid& grid, const InjectionStats& stats, ModelKind kind) {
    if (kind == ModelKind::DC) return dc_phase_covariance(DcModel::from_grid(grid), stats);
    return lc_voltage_covariance(LcModel::from_grid(grid), stats);
}

}  // namespace gridtopo
