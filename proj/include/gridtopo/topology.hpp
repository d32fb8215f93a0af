#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gridtopo/errors.hpp"
#include "gridtopo/grid.hpp"
#include "gridtopo/powerflow.hpp"

namespace gridtopo {

// ---------------------------------------------------------------------------
// Graphical model and hybrid graph

/// Thresholded support of a concentration matrix. Edges index into `labels`.
struct GraphicalModel {
    std::vector<VariableLabel> labels;
    EdgeSet edges;
    double tau = 0.0;
    ModelKind source = ModelKind::DC;
};

/// Undirected graph with one vertex per bus.
struct BusGraph {
    std::vector<BusId> buses;
    EdgeSet edges;
};

using HybridGraph = BusGraph;

inline GraphicalModel build_graphical_model(const ConcentrationMatrix& conc, double tau1) {
    if (!(tau1 > 0.0)) throw Error(ErrorKind::Precondition, "tau1 must be positive");
    const auto d = conc.matrix.rows();
    if (static_cast<std::size_t>(d) != conc.labels.size()) {
        throw Error(ErrorKind::Precondition, "concentration labels do not match its dimension");
    }
    GraphicalModel gm{conc.labels, {}, tau1, conc.kind};
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i + 1; j < d; ++j) {
            if (std::abs(conc.matrix(i, j)) >= tau1) gm.edges.insert({static_cast<int>(i), static_cast<int>(j)});
        }
    }
    return gm;
}

/// Merges the magnitude and angle vertices of each bus.
inline HybridGraph hybridize(const GraphicalModel& gm) {
    if (gm.source != ModelKind::LC) {
        throw Error(ErrorKind::Misuse, "hybrid graphs are defined for LC graphical models only");
    }
    HybridGraph out;
    std::set<BusId> buses;
    for (const auto& l : gm.labels) buses.insert(l.bus);
    out.buses.assign(buses.begin(), buses.end());
    for (const auto& e : gm.edges) {
        const BusId a = gm.labels[e.u].bus;
        const BusId b = gm.labels[e.v].bus;
        if (a != b) out.edges.insert(make_edge(a, b));
    }
    return out;
}

/// Bus-level view of a graphical model: relabelled for DC, hybridized for LC.
inline BusGraph bus_graph(const GraphicalModel& gm) {
    if (gm.source == ModelKind::LC) return hybridize(gm);
    BusGraph out;
    for (const auto& l : gm.labels) out.buses.push_back(l.bus);
    std::sort(out.buses.begin(), out.buses.end());
    for (const auto& e : gm.edges) out.edges.insert(make_edge(gm.labels[e.u].bus, gm.labels[e.v].bus));
    return out;
}

// ---------------------------------------------------------------------------
// Learned topologies

enum class Algorithm { Counting, Thresholding };

inline std::string to_string(Algorithm a) { return a == Algorithm::Counting ? "counting" : "thresholding"; }

struct LearnedTopology {
    EdgeSet edges;  ///< over non-reference bus ids
    Algorithm algorithm = Algorithm::Thresholding;
    double threshold = 0.0;  ///< tau1 for counting, tau2 for thresholding
};

/// Counting result that also reports vertices left without a leaf parent.
struct CountingOutcome {
    LearnedTopology topology;
    std::vector<BusId> non_leaf;
    std::vector<BusId> unresolved;
    std::vector<std::string> diagnostics;
};

/// Neighbourhood counting on a bus-level graphical model.
///
/// Step 1 accepts a graph edge (i, j) as a true edge between non-leaf buses
/// when some k, l, themselves non-adjacent, are adjacent to both i and j.
/// Step 2 attaches each remaining bus k to the unique non-leaf bus i with
/// {i} + accepted(i) equal to the non-leaf graph-neighbours of k.
inline CountingOutcome count_neighborhoods(const BusGraph& graph) {
    std::map<BusId, std::set<BusId>> adj;
    for (BusId b : graph.buses) adj[b];
    for (const auto& e : graph.edges) {
        if (!adj.contains(e.u) || !adj.contains(e.v)) {
            throw Error(ErrorKind::UnknownBus, "graph edge references a bus outside its vertex set");
        }
        adj[e.u].insert(e.v);
        adj[e.v].insert(e.u);
    }

    CountingOutcome out;
    out.topology.algorithm = Algorithm::Counting;
    std::map<BusId, std::set<BusId>> accepted;
    for (const auto& e : graph.edges) {
        std::vector<BusId> common;
        std::set_intersection(adj[e.u].begin(), adj[e.u].end(), adj[e.v].begin(), adj[e.v].end(),
                              std::back_inserter(common));
        bool found = false;
        for (std::size_t a = 0; a < common.size() && !found; ++a) {
            for (std::size_t b = a + 1; b < common.size() && !found; ++b) {
                found = !adj[common[a]].contains(common[b]);
            }
        }
        if (found) {
            out.topology.edges.insert(e);
            accepted[e.u].insert(e.v);
            accepted[e.v].insert(e.u);
        }
    }
    for (const auto& [bus, _] : accepted) out.non_leaf.push_back(bus);
    if (out.non_leaf.size() < 3) {
        out.diagnostics.push_back("fewer than three non-leaf buses identified (" +
                                  std::to_string(out.non_leaf.size()) + ")");
    }

    const std::set<BusId> non_leaf(out.non_leaf.begin(), out.non_leaf.end());
    for (BusId k : graph.buses) {
        if (non_leaf.contains(k)) continue;
        std::set<BusId> target;
        for (BusId n : adj[k]) {
            if (non_leaf.contains(n)) target.insert(n);
        }
        std::vector<BusId> parents;
        for (BusId i : target) {
            auto closed = accepted[i];
            closed.insert(i);
            if (closed == target) parents.push_back(i);
        }
        if (parents.size() == 1) {
            out.topology.edges.insert(make_edge(k, parents.front()));
        } else {
            out.unresolved.push_back(k);
            out.diagnostics.push_back("bus " + std::to_string(k) +
                                      (parents.empty() ? ": no consistent leaf parent"
                                                       : ": " + std::to_string(parents.size()) + " candidate parents"));
        }
    }
    return out;
}

/// Neighbourhood counting on a bus-level graph; throws on any unresolved bus.
inline LearnedTopology learn_by_counting(const BusGraph& graph) {
    auto outcome = count_neighborhoods(graph);
    if (outcome.non_leaf.size() < 3) throw Error(ErrorKind::Size, outcome.diagnostics.front());
    if (!outcome.unresolved.empty()) {
        std::string msg = "leaf attachment ambiguous";
        for (const auto& d : outcome.diagnostics) msg += "; " + d;
        throw Error(ErrorKind::Ambiguity, msg);
    }
    return outcome.topology;
}

/// Neighbourhood counting from a graphical model (LC models are hybridized first).
inline LearnedTopology learn_by_counting(const GraphicalModel& gm) {
    auto topo = learn_by_counting(bus_graph(gm));
    topo.threshold = gm.tau;
    return topo;
}

namespace detail {

/// Matrix indices of (v_b, theta_b) per bus, in bus order. v index is -1 for DC.
struct BusSlots {
    std::vector<BusId> buses;
    std::vector<int> v;
    std::vector<int> theta;
};

inline BusSlots bus_slots(const ConcentrationMatrix& conc) {
    std::map<BusId, std::pair<int, int>> slots;
    for (std::size_t k = 0; k < conc.labels.size(); ++k) {
        auto& s = slots.try_emplace(conc.labels[k].bus, -1, -1).first->second;
        (conc.labels[k].kind == VoltageKind::Magnitude ? s.first : s.second) = static_cast<int>(k);
    }
    BusSlots out;
    for (const auto& [bus, s] : slots) {
        if (s.second < 0 || (conc.kind == ModelKind::LC && s.first < 0)) {
            throw Error(ErrorKind::Precondition, "concentration labels miss a variable for bus " + std::to_string(bus));
        }
        out.buses.push_back(bus);
        out.v.push_back(s.first);
        out.theta.push_back(s.second);
    }
    return out;
}

/// Thresholding statistic for the bus pair (a, b).
inline double pair_statistic(const ConcentrationMatrix& conc, const BusSlots& slots, std::size_t a, std::size_t b) {
    double value = conc.matrix(slots.theta[a], slots.theta[b]);
    if (conc.kind == ModelKind::LC) value += conc.matrix(slots.v[a], slots.v[b]);
    return value;
}

}  // namespace detail

/// Thresholding: edge (i, j) iff the DC entry, or J_vv + J_thth for LC, is <= tau2.
inline LearnedTopology learn_by_thresholding(const ConcentrationMatrix& conc, double tau2) {
    if (!(tau2 < 0.0)) throw Error(ErrorKind::Precondition, "tau2 must be negative");
    const auto slots = detail::bus_slots(conc);
    LearnedTopology out{{}, Algorithm::Thresholding, tau2};
    for (std::size_t a = 0; a < slots.buses.size(); ++a) {
        for (std::size_t b = a + 1; b < slots.buses.size(); ++b) {
            if (detail::pair_statistic(conc, slots, a, b) <= tau2) {
                out.edges.insert(make_edge(slots.buses[a], slots.buses[b]));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Thresholds

/// Rescales so each bus has unit average diagonal: DC uses sqrt(J_bb); LC
/// scales v_b and theta_b by the same sqrt((J_vv,bb + J_thth,bb) / 2).
/// Zero pattern and the sign of every thresholding statistic are unchanged.
inline ConcentrationMatrix bus_scaled(const ConcentrationMatrix& conc) {
    const auto slots = detail::bus_slots(conc);
    Eigen::VectorXd inv_scale(conc.matrix.rows());
    for (std::size_t b = 0; b < slots.buses.size(); ++b) {
        double diag = conc.matrix(slots.theta[b], slots.theta[b]);
        if (conc.kind == ModelKind::LC) diag = 0.5 * (diag + conc.matrix(slots.v[b], slots.v[b]));
        if (!(diag > 0.0)) throw Error(ErrorKind::Precondition, "concentration has a non-positive diagonal");
        const double s = 1.0 / std::sqrt(diag);
        inv_scale(slots.theta[b]) = s;
        if (conc.kind == ModelKind::LC) inv_scale(slots.v[b]) = s;
    }
    ConcentrationMatrix out = conc;
    out.matrix = inv_scale.asDiagonal() * conc.matrix * inv_scale.asDiagonal();
    return out;
}

/// Relative factor for thresholds on exact matrices.
inline constexpr double kExactRelativeThreshold = 1e-4;

inline double max_off_diagonal(const ConcentrationMatrix& conc) {
    double m = 0.0;
    for (Eigen::Index i = 0; i < conc.matrix.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < conc.matrix.cols(); ++j) m = std::max(m, std::abs(conc.matrix(i, j)));
    }
    return m;
}

inline double default_tau1(const ConcentrationMatrix& conc) { return kExactRelativeThreshold * max_off_diagonal(conc); }
inline double default_tau2(const ConcentrationMatrix& conc) { return -default_tau1(conc); }

/// A candidate cut between two consecutive sorted magnitudes.
struct GapCut {
    double cut = 0.0;  ///< geometric midpoint of the gap
    double ratio = 0.0;  ///< upper / lower
};

/// Every cut between consecutive magnitudes (sorted descending) that keeps
/// at least `min_keep` of them, ordered by decreasing ratio. Values below
/// `floor` are treated as `floor`, so the noise tail cannot produce spurious
/// gaps and cuts never fall below the floor.
inline std::vector<GapCut> gap_cuts(std::vector<double> magnitudes, std::size_t min_keep, double floor) {
    std::sort(magnitudes.begin(), magnitudes.end(), std::greater<>());
    floor = std::max(floor, 1e-300);
    std::vector<GapCut> cuts;
    const std::size_t m = magnitudes.size();
    const std::size_t first = min_keep == 0 ? 0 : std::min(min_keep, m) - 1;
    for (std::size_t k = first; k < m; ++k) {
        const double upper = std::max(magnitudes[k], floor);
        const double lower = k + 1 < m ? std::max(magnitudes[k + 1], floor) : floor;
        if (upper > lower) cuts.push_back({std::sqrt(upper * lower), upper / lower});
    }
    std::stable_sort(cuts.begin(), cuts.end(), [](const GapCut& a, const GapCut& b) { return a.ratio > b.ratio; });
    return cuts;
}

/// Cut at the largest ratio between consecutive sorted magnitudes (see
/// gap_cuts). With nothing above the floor the result exceeds every value.
inline double gap_threshold(std::vector<double> magnitudes, std::size_t min_keep, double floor) {
    const double top = magnitudes.empty() ? 0.0 : *std::max_element(magnitudes.begin(), magnitudes.end());
    const auto cuts = gap_cuts(std::move(magnitudes), min_keep, floor);
    if (cuts.empty()) return std::max({floor, top, 1e-300}) * 2.0;
    return cuts.front().cut;
}

/// Standard error scale of a bus-scaled entry estimated from n samples.
inline double noise_floor(std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

/// Counting reads the maximum of up to four noisy entries per bus pair, so
/// its floor sits a few standard errors up.
inline constexpr double kCountingFloorScale = 3.0;

namespace detail {

/// Largest magnitude among the entries linking each pair of distinct buses.
inline std::vector<double> pair_magnitudes(const ConcentrationMatrix& conc) {
    std::map<std::pair<BusId, BusId>, double> pairs;
    for (Eigen::Index i = 0; i < conc.matrix.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < conc.matrix.cols(); ++j) {
            const BusId a = conc.labels[i].bus;
            const BusId b = conc.labels[j].bus;
            if (a == b) continue;
            auto& m = pairs[std::minmax(a, b)];
            m = std::max(m, std::abs(conc.matrix(i, j)));
        }
    }
    std::vector<double> mags;
    for (const auto& [_, m] : pairs) mags.push_back(m);
    return mags;
}

inline std::size_t counting_min_keep(const ConcentrationMatrix& conc) {
    const auto buses = bus_slots(conc).buses.size();
    return buses > 1 ? 2 * buses - 3 : 0;
}

}  // namespace detail

/// Pairs at hop distance 1 or 2 in `edges`: the graphical model a counting
/// result predicts.
inline EdgeSet two_hop_closure(const std::vector<BusId>& buses, const EdgeSet& edges) {
    std::map<BusId, std::set<BusId>> adj;
    for (BusId b : buses) adj[b];
    for (const auto& e : edges) {
        adj[e.u].insert(e.v);
        adj[e.v].insert(e.u);
    }
    EdgeSet out = edges;
    for (const auto& [k, nbrs] : adj) {
        for (auto a = nbrs.begin(); a != nbrs.end(); ++a) {
            for (auto b = std::next(a); b != nbrs.end(); ++b) out.insert(make_edge(*a, *b));
        }
    }
    return out;
}

/// A counting outcome is self-consistent when every bus is placed, at least
/// three are non-leaf, and its two-hop closure reproduces the input graph.
inline bool counting_consistent(const BusGraph& graph, const CountingOutcome& outcome) {
    if (!outcome.unresolved.empty() || outcome.non_leaf.size() < 3) return false;
    return two_hop_closure(graph.buses, outcome.topology.edges) == graph.edges;
}

/// Gap-based tau1 over per-bus-pair magnitudes (largest entry among the
/// blocks linking two buses, which is what decides a hybrid edge). Counting
/// needs every 1- and 2-hop pair; a connected graph of girth >= 5 on N
/// buses has at least N - 1 + N - 2 of them, so that many are kept.
inline double gap_tau1(const ConcentrationMatrix& conc, double floor) {
    return gap_threshold(detail::pair_magnitudes(conc), detail::counting_min_keep(conc), floor);
}

/// Gap-based tau2 over the negative thresholding statistics.
inline double gap_tau2(const ConcentrationMatrix& conc, double floor) {
    const auto slots = detail::bus_slots(conc);
    std::vector<double> mags;
    for (std::size_t a = 0; a < slots.buses.size(); ++a) {
        for (std::size_t b = a + 1; b < slots.buses.size(); ++b) {
            const double s = detail::pair_statistic(conc, slots, a, b);
            if (s < 0.0) mags.push_back(-s);
        }
    }
    const auto buses = slots.buses.size();
    return -gap_threshold(std::move(mags), buses > 0 ? buses - 1 : 0, floor);
}

/// A threshold given explicitly or chosen automatically.
struct ThresholdSetting {
    std::optional<double> value;  ///< nullopt = auto
};

/// Learns a topology from a concentration matrix. The matrix is bus-scaled
/// first and thresholds refer to the scaled matrix. With `auto` thresholds,
/// `samples` selects the rule: nullopt (exact matrix) uses the relative
/// default, a sample count uses the gap heuristic above a noise floor
/// (1/sqrt(n) for thresholding, 3/sqrt(n) for counting, where the cut must
/// also give a self-consistent counting result when one exists).
inline CountingOutcome learn_topology(const ConcentrationMatrix& conc, Algorithm algorithm, ThresholdSetting setting,
                                      std::optional<std::size_t> samples) {
    const auto scaled = bus_scaled(conc);
    if (algorithm == Algorithm::Thresholding) {
        double tau2 = setting.value ? *setting.value
                      : samples    ? gap_tau2(scaled, noise_floor(*samples))
                                   : default_tau2(scaled);
        CountingOutcome out;
        out.topology = learn_by_thresholding(scaled, tau2);
        return out;
    }
    if (setting.value || !samples) {
        const double tau1 = setting.value ? *setting.value : default_tau1(scaled);
        const auto gm = build_graphical_model(scaled, tau1);
        auto out = count_neighborhoods(bus_graph(gm));
        out.topology.threshold = tau1;
        return out;
    }
    // Sampled, auto: walk the gap cuts from the widest down and keep the first
    // whose counting result explains the thresholded graph; otherwise the
    // widest gap.
    const auto cuts = gap_cuts(detail::pair_magnitudes(scaled), detail::counting_min_keep(scaled),
                               kCountingFloorScale * noise_floor(*samples));
    std::optional<CountingOutcome> fallback;
    for (const auto& cut : cuts) {
        const auto graph = bus_graph(build_graphical_model(scaled, cut.cut));
        auto out = count_neighborhoods(graph);
        out.topology.threshold = cut.cut;
        if (counting_consistent(graph, out)) return out;
        if (!fallback) fallback = std::move(out);
    }
    if (fallback) return *fallback;
    const double tau1 = gap_tau1(scaled, kCountingFloorScale * noise_floor(*samples));
    auto out = count_neighborhoods(bus_graph(build_graphical_model(scaled, tau1)));
    out.topology.threshold = tau1;
    return out;
}

// ---------------------------------------------------------------------------
// Joint parameter and topology learning

struct ParameterEstimate {
    Eigen::MatrixXd h_beta;
    EdgeSet edges;  ///< over `buses`
    std::map<std::pair<BusId, BusId>, double> susceptances;
};

/// H = Sigma_p^{1/2} sqrt(Sigma_p^{-1/2} Sigma_theta^{-1} Sigma_p^{-1/2}) Sigma_p^{1/2},
/// with the principal square root taken by eigendecomposition.
inline ParameterEstimate learn_parameters(const Eigen::MatrixXd& phase_cov, const Eigen::VectorXd& sigma_p,
                                          std::vector<BusId> buses = {}) {
    const auto n = phase_cov.rows();
    if (phase_cov.cols() != n || sigma_p.size() != n) {
        throw Error(ErrorKind::Precondition, "phase covariance and injection variances disagree in size");
    }
    if ((sigma_p.array() <= 0.0).any()) {
        throw Error(ErrorKind::Precondition, "injection variances must be positive");
    }
    if (buses.empty()) {
        for (Eigen::Index i = 0; i < n; ++i) buses.push_back(static_cast<BusId>(i));
    }
    Eigen::LLT<Eigen::MatrixXd> llt(phase_cov);
    if (llt.info() != Eigen::Success) throw Error(ErrorKind::Precondition, "phase covariance is not positive definite");
    const Eigen::MatrixXd precision = llt.solve(Eigen::MatrixXd::Identity(n, n));

    const Eigen::VectorXd root = sigma_p.cwiseSqrt();
    const Eigen::VectorXd inv_root = root.cwiseInverse();
    Eigen::MatrixXd m = inv_root.asDiagonal() * precision * inv_root.asDiagonal();
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    if (eig.info() != Eigen::Success || (eig.eigenvalues().array() <= 0.0).any()) {
        throw Error(ErrorKind::Precondition, "scaled precision matrix is not positive definite");
    }
    const Eigen::MatrixXd sqrt_m =
        eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();

    ParameterEstimate out;
    out.h_beta = root.asDiagonal() * sqrt_m * root.asDiagonal();
    out.h_beta = 0.5 * (out.h_beta + out.h_beta.transpose());
    const double zero = 1e-9 * out.h_beta.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (std::abs(out.h_beta(i, j)) > zero) {
                out.edges.insert(make_edge(buses[i], buses[j]));
                out.susceptances[std::minmax(buses[i], buses[j])] = -out.h_beta(i, j);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scoring

struct EdgeErrors {
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
    std::size_t total = 0;

    friend bool operator==(const EdgeErrors&, const EdgeErrors&) = default;
};

/// False positives plus false negatives against the grid's lines between
/// non-reference buses.
inline EdgeErrors edge_errors(const EdgeSet& learned, const Grid& truth) {
    for (const auto& e : learned) {
        for (BusId b : {e.u, e.v}) {
            if (!truth.contains(b) || b == truth.reference()) {
                throw Error(ErrorKind::BusSetMismatch,
                            "learned edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                                ") uses a bus that is not a non-reference bus of the grid");
            }
        }
        if (e.u == e.v) throw Error(ErrorKind::BusSetMismatch, "learned edge is a self-loop");
    }
    const auto true_edges = truth.non_reference_edges();
    EdgeErrors out;
    for (const auto& e : learned) out.false_positives += true_edges.contains(e) ? 0 : 1;
    for (const auto& e : true_edges) out.false_negatives += learned.contains(e) ? 0 : 1;
    out.total = out.false_positives + out.false_negatives;
    return out;
}

inline EdgeErrors edge_errors(const LearnedTopology& learned, const Grid& truth) {
    return edge_errors(learned.edges, truth);
}

}  // namespace gridtopo
