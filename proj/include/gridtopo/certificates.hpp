#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gridtopo/grid.hpp"
#include "gridtopo/powerflow.hpp"

namespace gridtopo {

/// Sufficient conditions for a line to keep a negative DC concentration
/// entry, and hence be found by thresholding.
enum class Certificate {
    TriviallySafe,  ///< no common neighbour: entry is -beta_ij (beta_i/s_i + beta_j/s_j)
    SingleTriangle,  ///< exactly one common neighbour
    General,  ///< any set of common neighbours
    EqualCovariance,  ///< equal injection variances at all buses
    Geometric,  ///< equal variances and susceptance proportional to length
};

inline std::string to_string(Certificate c) {
    switch (c) {
        case Certificate::TriviallySafe: return "trivially-safe";
        case Certificate::SingleTriangle: return "T8";
        case Certificate::General: return "T9";
        case Certificate::EqualCovariance: return "T10";
        case Certificate::Geometric: return "C2";
    }
    return "unknown";
}

struct CertificateCheck {
    Certificate certificate = Certificate::General;
    bool satisfied = false;
    double margin = 0.0;  ///< left side minus right side of the inequality
};

struct SufficiencyRecord {
    Edge edge;
    std::vector<BusId> common;  ///< common non-reference neighbours
    Certificate certificate = Certificate::General;  ///< most specific applicable one
    bool satisfied = false;
    double margin = 0.0;
    std::vector<CertificateCheck> checks;  ///< every applicable certificate
};

/// One record per line between non-reference buses.
struct SufficiencyReport {
    std::vector<SufficiencyRecord> records;
};

namespace detail {

/// Positive root of x^2 + 2 b x - c = 0.
inline double quadratic_root(double b, double c) { return -b + std::sqrt(b * b + c); }

inline bool all_equal(const Eigen::VectorXd& v, double rel = 1e-12) {
    if (v.size() == 0) return true;
    return (v.array() - v(0)).abs().maxCoeff() <= rel * std::abs(v(0));
}

/// Common ratio beta/length over all lines, or a negative value when lengths
/// are missing or the ratio varies.
inline double susceptance_per_length(const Grid& grid) {
    double ratio = -1.0;
    for (const auto& line : grid.lines()) {
        if (!line.length || !(*line.length > 0.0)) return -1.0;
        const double r = susceptance(line) / *line.length;
        if (ratio < 0.0) {
            ratio = r;
        } else if (std::abs(r - ratio) > 1e-9 * ratio) {
            return -1.0;
        }
    }
    return ratio;
}

}  // namespace detail

/// Evaluates the triangle sufficiency conditions for every line under the
/// DC model with injection variances stats.pp.
inline SufficiencyReport check_triangle_sufficiency(const Grid& grid, const InjectionStats& stats) {
    stats.validate(grid.size());
    const bool equal_cov = detail::all_equal(stats.pp);
    const bool geometric = equal_cov && detail::susceptance_per_length(grid) > 0.0;

    auto beta = [&](BusId a, BusId b) { return susceptance(*grid.find_line(a, b)); };
    auto total_beta = [&](BusId a) {
        double s = 0.0;
        for (BusId n : grid.neighbors_of(a)) s += beta(a, n);
        return s;
    };
    auto sigma = [&](BusId a) { return stats.pp(grid.index_of(a)); };

    SufficiencyReport report;
    for (const auto& e : grid.non_reference_edges()) {
        const BusId i = e.u;
        const BusId j = e.v;
        SufficiencyRecord rec;
        rec.edge = e;
        rec.common = common_neighbors(grid, i, j);
        const double b_ij = beta(i, j);

        if (rec.common.empty()) {
            rec.checks.push_back({Certificate::TriviallySafe, true, b_ij});
        } else {
            const double si = sigma(i);
            const double sj = sigma(j);
            const double ssum = si + sj;

            // general condition
            double tri = 0.0;
            for (BusId k : rec.common) tri += beta(i, k) * beta(j, k) / sigma(k);
            const double b9 = (sj * (total_beta(i) - b_ij) + si * (total_beta(j) - b_ij)) / (2.0 * ssum);
            const double c9 = si * sj / ssum * tri;
            const double m9 = b_ij - detail::quadratic_root(b9, c9);
            rec.checks.push_back({Certificate::General, m9 > 0.0, m9});

            if (rec.common.size() == 1) {
                const BusId k = rec.common.front();
                const double b8 = (sj * beta(i, k) + si * beta(j, k)) / (2.0 * ssum);
                const double c8 = si * sj * beta(i, k) * beta(j, k) / (sigma(k) * ssum);
                const double m8 = b_ij - detail::quadratic_root(b8, c8);
                rec.checks.push_back({Certificate::SingleTriangle, m8 > 0.0, m8});
            }

            const double shrink = 1.0 + std::sqrt(1.0 + 2.0 / static_cast<double>(rec.common.size()));
            if (equal_cov) {
                double widest = 0.0;
                for (BusId k : rec.common) widest = std::max({widest, beta(k, i), beta(k, j)});
                const double m10 = b_ij - widest / shrink;
                rec.checks.push_back({Certificate::EqualCovariance, m10 > 0.0, m10});
            }
            if (geometric) {
                auto length = [&](BusId a, BusId b) { return *grid.find_line(a, b)->length; };
                double longest = 0.0;
                for (BusId k : rec.common) longest = std::max({longest, length(k, i), length(k, j)});
                const double mc = length(i, j) - longest / shrink;
                rec.checks.push_back({Certificate::Geometric, mc > 0.0, mc});
            }
        }

        auto rank = [](Certificate c) {
            switch (c) {
                case Certificate::Geometric: return 4;
                case Certificate::EqualCovariance: return 3;
                case Certificate::SingleTriangle: return 2;
                case Certificate::General: return 1;
                case Certificate::TriviallySafe: return 5;
            }
            return 0;
        };
        const auto best = std::max_element(rec.checks.begin(), rec.checks.end(), [&](const auto& a, const auto& b) {
            return rank(a.certificate) < rank(b.certificate);
        });
        rec.certificate = best->certificate;
        rec.satisfied = best->satisfied;
        rec.margin = best->margin;
        report.records.push_back(std::move(rec));
    }
    return report;
}

}  // namespace gridtopo
