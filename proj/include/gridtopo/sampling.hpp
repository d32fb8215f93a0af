#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gridtopo/errors.hpp"
#include "gridtopo/grid.hpp"
#include "gridtopo/powerflow.hpp"

namespace gridtopo {

/// SplitMix64 finaliser; used to derive independent child seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Child seed for stream `index` (e.g. a trial number) of a master seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

/// mt19937_64 with explicit uniform and Box-Muller normal transforms, so a
/// seed gives the same stream with every standard library.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double radius = std::sqrt(-2.0 * std::log(uniform()));
        const double angle = 2.0 * std::numbers::pi * uniform();
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// n x 2N matrix; columns [p_0 .. p_{N-1}, q_0 .. q_{N-1}]. Rows are
/// generated in order, so a shorter run with the same seed is a prefix.
inline Eigen::MatrixXd sample_injections(const InjectionStats& stats, std::size_t n, std::uint64_t seed) {
    stats.validate(static_cast<std::size_t>(stats.size()));
    if (n < 1) throw Error(ErrorKind::Precondition, "sample count must be at least 1");
    const auto buses = stats.size();
    // per-bus Cholesky factor of [[pp, pq], [pq, qq]]
    const Eigen::ArrayXd l11 = stats.pp.array().sqrt();
    const Eigen::ArrayXd l21 = stats.pq.array() / l11;
    const Eigen::ArrayXd l22 = (stats.qq.array() - l21.square()).sqrt();

    SeededRng rng(seed);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), 2 * buses);
    for (Eigen::Index row = 0; row < out.rows(); ++row) {
        for (Eigen::Index b = 0; b < buses; ++b) {
            const double z1 = rng.normal();
            const double z2 = rng.normal();
            out(row, b) = l11(b) * z1;
            out(row, buses + b) = l21(b) * z1 + l22(b) * z2;
        }
    }
    return out;
}

inline Eigen::VectorXd solve_dc(const DcModel& model, const Eigen::VectorXd& p) {
    if (p.size() != static_cast<Eigen::Index>(model.size())) {
        throw Error(ErrorKind::Precondition, "injection vector has wrong dimension");
    }
    return detail::factor_spd(model.h_beta.matrix, "H_beta").solve(p);
}

struct LcSolution {
    Eigen::VectorXd v;
    Eigen::VectorXd theta;
};

inline LcSolution solve_lc(const LcModel& model, const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    const auto n = static_cast<Eigen::Index>(model.size());
    if (p.size() != n || q.size() != n) throw Error(ErrorKind::Precondition, "injection vectors have wrong dimension");
    Eigen::VectorXd rhs(2 * n);
    rhs << p, q;
    const Eigen::VectorXd x = detail::factor_general(model.system_matrix(), "LC system matrix").solve(rhs);
    return {x.head(n), x.tail(n)};
}

/// n voltage samples (rows) with their variable labels.
struct SampleSet {
    ModelKind model_kind = ModelKind::DC;
    Eigen::MatrixXd samples;
    std::vector<VariableLabel> labels;
    std::uint64_t seed = 0;

    Eigen::Index count() const noexcept { return samples.rows(); }
    Eigen::Index dimension() const noexcept { return samples.cols(); }
};

/// Injections mapped through the linear power flow. DC draws (p, q) like LC
/// and uses only p.
inline SampleSet generate_voltage_samples(const Grid& grid, const InjectionStats& stats, ModelKind kind,
                                          std::size_t n, std::uint64_t seed) {
    stats.validate(grid.size());
    const Eigen::MatrixXd injections = sample_injections(stats, n, seed);
    const auto buses = static_cast<Eigen::Index>(grid.size());
    SampleSet out;
    out.model_kind = kind;
    out.seed = seed;
    out.labels = variable_labels(grid.non_reference_buses(), kind);
    if (kind == ModelKind::DC) {
        const auto model = DcModel::from_grid(grid);
        const auto llt = detail::factor_spd(model.h_beta.matrix, "H_beta");
        out.samples = llt.solve(injections.leftCols(buses).transpose()).transpose();
    } else {
        const auto model = LcModel::from_grid(grid);
        const auto lu = detail::factor_general(model.system_matrix(), "LC system matrix");
        out.samples = lu.solve(injections.transpose()).transpose();
    }
    return out;
}

}  // namespace gridtopo
