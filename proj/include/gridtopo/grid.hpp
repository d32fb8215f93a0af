#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <limits>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gridtopo/errors.hpp"

namespace gridtopo {

using BusId = int;

/// Undirected bus pair, stored with the smaller id first.
struct Edge {
    BusId u = 0;
    BusId v = 0;

    friend auto operator<=>(const Edge&, const Edge&) = default;
};

inline Edge make_edge(BusId a, BusId b) { return a < b ? Edge{a, b} : Edge{b, a}; }

using EdgeSet = std::set<Edge>;

struct Bus {
    BusId id = 0;
    bool is_reference = false;
};

struct Line {
    BusId i = 0;
    BusId j = 0;
    double r = 0.0;  ///< resistance, p.u.
    double x = 0.0;  ///< reactance, p.u.
    std::optional<double> length;  ///< only used by geometric certificates
};

enum class WeightKind { Susceptance, Conductance, InverseResistance, InverseReactance };

inline void check_line_parameters(const Line& line) {
    if (!(line.x > 0.0) || !std::isfinite(line.x)) {
        throw Error(ErrorKind::InvalidLine, "line (" + std::to_string(line.i) + "," +
                                                std::to_string(line.j) +
                                                ") has non-positive reactance");
    }
    if (!(line.r >= 0.0) || !std::isfinite(line.r)) {
        throw Error(ErrorKind::InvalidLine, "line (" + std::to_string(line.i) + "," +
                                                std::to_string(line.j) +
                                                ") has negative resistance");
    }
}

/// beta = x / (x^2 + r^2)
inline double susceptance(const Line& line) {
    check_line_parameters(line);
    return line.x / (line.x * line.x + line.r * line.r);
}

/// g = r / (r^2 + x^2)
inline double conductance(const Line& line) {
    check_line_parameters(line);
    return line.r / (line.x * line.x + line.r * line.r);
}

inline double line_weight(const Line& line, WeightKind kind) {
    switch (kind) {
        case WeightKind::Susceptance: return susceptance(line);
        case WeightKind::Conductance: return conductance(line);
        case WeightKind::InverseReactance:
            check_line_parameters(line);
            return 1.0 / line.x;
        case WeightKind::InverseResistance:
            check_line_parameters(line);
            if (line.r <= 0.0) {
                throw Error(ErrorKind::InvalidLine,
                            "line (" + std::to_string(line.i) + "," + std::to_string(line.j) +
                                ") has zero resistance; 1/r weight undefined");
            }
            return 1.0 / line.r;
    }
    return 0.0;
}

using Adjacency = std::vector<std::vector<BusId>>;

/// Connected power grid on buses 0..bus_count-1 with one reference bus.
///
/// Matrices built from a grid drop the reference bus; matrix index k
/// corresponds to the k-th non-reference bus in increasing id order.
class Grid {
public:
    Grid(std::size_t bus_count, BusId reference, std::vector<Line> lines)
        : bus_count_(bus_count), reference_(reference), lines_(std::move(lines)) {
        validate();
        adjacency_.assign(bus_count_, {});
        for (const auto& line : lines_) {
            adjacency_[line.i].push_back(line.j);
            adjacency_[line.j].push_back(line.i);
        }
        for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
        index_.assign(bus_count_, -1);
        for (BusId b = 0; b < static_cast<BusId>(bus_count_); ++b) {
            if (b == reference_) continue;
            index_[b] = static_cast<int>(buses_by_index_.size());
            buses_by_index_.push_back(b);
        }
        check_connected();
    }

    std::size_t bus_count() const noexcept { return bus_count_; }
    /// Number of non-reference buses (the matrix dimension N).
    std::size_t size() const noexcept { return bus_count_ - 1; }
    BusId reference() const noexcept { return reference_; }
    const std::vector<Line>& lines() const noexcept { return lines_; }

    std::vector<Bus> buses() const {
        std::vector<Bus> out;
        out.reserve(bus_count_);
        for (BusId b = 0; b < static_cast<BusId>(bus_count_); ++b) out.push_back({b, b == reference_});
        return out;
    }

    bool contains(BusId b) const noexcept { return b >= 0 && b < static_cast<BusId>(bus_count_); }

    void require_bus(BusId b) const {
        if (!contains(b)) throw Error(ErrorKind::UnknownBus, "unknown bus id " + std::to_string(b));
    }

    int index_of(BusId b) const {
        require_bus(b);
        if (b == reference_) {
            throw Error(ErrorKind::Misuse, "reference bus " + std::to_string(b) + " has no matrix index");
        }
        return index_[b];
    }

    BusId bus_at(int index) const { return buses_by_index_.at(static_cast<std::size_t>(index)); }
    const std::vector<BusId>& non_reference_buses() const noexcept { return buses_by_index_; }

    const std::vector<BusId>& neighbors_of(BusId b) const {
        require_bus(b);
        return adjacency_[b];
    }
    const Adjacency& adjacency() const noexcept { return adjacency_; }

    const Line* find_line(BusId a, BusId b) const {
        for (const auto& line : lines_) {
            if ((line.i == a && line.j == b) || (line.i == b && line.j == a)) return &line;
        }
        return nullptr;
    }

    /// All lines as edges.
    EdgeSet edges() const {
        EdgeSet out;
        for (const auto& line : lines_) out.insert(make_edge(line.i, line.j));
        return out;
    }

    /// Lines whose endpoints are both non-reference buses; the learning target.
    EdgeSet non_reference_edges() const {
        EdgeSet out;
        for (const auto& line : lines_) {
            if (line.i != reference_ && line.j != reference_) out.insert(make_edge(line.i, line.j));
        }
        return out;
    }

private:
    void validate() const {
        if (bus_count_ < 2) throw Error(ErrorKind::Structural, "grid needs at least two buses");
        if (reference_ < 0 || reference_ >= static_cast<BusId>(bus_count_)) {
            throw Error(ErrorKind::UnknownBus, "reference bus " + std::to_string(reference_) + " out of range");
        }
        std::set<std::pair<BusId, BusId>> seen;
        for (std::size_t k = 0; k < lines_.size(); ++k) {
            const auto& line = lines_[k];
            const std::string where = "line #" + std::to_string(k) + " (" + std::to_string(line.i) + "," +
                                      std::to_string(line.j) + ")";
            if (!contains(line.i) || !contains(line.j)) {
                throw Error(ErrorKind::UnknownBus, where + " references an unknown bus");
            }
            if (line.i == line.j) throw Error(ErrorKind::Structural, where + " is a self-loop");
            try {
                check_line_parameters(line);
            } catch (const Error& e) {
                throw Error(ErrorKind::InvalidLine, where + ": " + e.what());
            }
            auto key = std::minmax(line.i, line.j);
            if (!seen.insert({key.first, key.second}).second) {
                throw Error(ErrorKind::Structural, where + " duplicates an existing line");
            }
        }
    }

    void check_connected() const {
        std::vector<char> seen(bus_count_, 0);
        std::queue<BusId> frontier;
        frontier.push(reference_);
        seen[reference_] = 1;
        std::size_t reached = 1;
        while (!frontier.empty()) {
            BusId b = frontier.front();
            frontier.pop();
            for (BusId n : adjacency_[b]) {
                if (!seen[n]) {
                    seen[n] = 1;
                    ++reached;
                    frontier.push(n);
                }
            }
        }
        if (reached != bus_count_) {
            for (BusId b = 0; b < static_cast<BusId>(bus_count_); ++b) {
                if (!seen[b]) {
                    throw Error(ErrorKind::Structural,
                                "grid is disconnected: bus " + std::to_string(b) + " unreachable from reference");
                }
            }
        }
    }

    std::size_t bus_count_;
    BusId reference_;
    std::vector<Line> lines_;
    Adjacency adjacency_;
    std::vector<int> index_;
    std::vector<BusId> buses_by_index_;
};

/// Weighted Laplacian with the reference row and column removed.
struct WeightedReducedLaplacian {
    Eigen::MatrixXd matrix;
    WeightKind weight_kind = WeightKind::Susceptance;
};

inline WeightedReducedLaplacian reduced_laplacian(const Grid& grid, WeightKind kind) {
    const auto n = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    const BusId ref = grid.reference();
    for (const auto& line : grid.lines()) {
        const double w = line_weight(line, kind);
        if (line.i != ref) h(grid.index_of(line.i), grid.index_of(line.i)) += w;
        if (line.j != ref) h(grid.index_of(line.j), grid.index_of(line.j)) += w;
        if (line.i != ref && line.j != ref) {
            const int a = grid.index_of(line.i);
            const int b = grid.index_of(line.j);
            h(a, b) -= w;
            h(b, a) -= w;
        }
    }
    return {std::move(h), kind};
}

// ---------------------------------------------------------------------------
// Structural queries

/// BFS hop counts from `source`; -1 marks unreachable buses. With
/// `skip_reference`, paths may not pass through the reference bus.
inline std::vector<int> hop_distances(const Grid& grid, BusId source, bool skip_reference = false) {
    grid.require_bus(source);
    std::vector<int> dist(grid.bus_count(), -1);
    if (skip_reference && source == grid.reference()) return dist;
    std::queue<BusId> frontier;
    dist[source] = 0;
    frontier.push(source);
    while (!frontier.empty()) {
        BusId b = frontier.front();
        frontier.pop();
        for (BusId n : grid.neighbors_of(b)) {
            if (skip_reference && n == grid.reference()) continue;
            if (dist[n] < 0) {
                dist[n] = dist[b] + 1;
                frontier.push(n);
            }
        }
    }
    return dist;
}

inline std::set<BusId> neighbors(const Grid& grid, BusId bus) {
    const auto& n = grid.neighbors_of(bus);
    return {n.begin(), n.end()};
}

/// Buses at shortest-path distance exactly two.
inline std::set<BusId> two_hop_neighbors(const Grid& grid, BusId bus) {
    const auto dist = hop_distances(grid, bus);
    std::set<BusId> out;
    for (BusId b = 0; b < static_cast<BusId>(dist.size()); ++b) {
        if (dist[b] == 2) out.insert(b);
    }
    return out;
}

/// Length of the shortest cycle; nullopt for a tree.
inline std::optional<int> girth(const Grid& grid) {
    std::optional<int> best;
    const auto& adj = grid.adjacency();
    for (const auto& line : grid.lines()) {
        // shortest i -> j path avoiding the edge itself
        std::vector<int> dist(grid.bus_count(), -1);
        std::queue<BusId> frontier;
        dist[line.i] = 0;
        frontier.push(line.i);
        while (!frontier.empty() && dist[line.j] < 0) {
            BusId b = frontier.front();
            frontier.pop();
            for (BusId n : adj[b]) {
                if (b == line.i && n == line.j) continue;
                if (dist[n] < 0) {
                    dist[n] = dist[b] + 1;
                    frontier.push(n);
                }
            }
        }
        if (dist[line.j] > 0) {
            int cycle = dist[line.j] + 1;
            if (!best || cycle < *best) best = cycle;
        }
    }
    return best;
}

inline bool is_radial(const Grid& grid) { return !girth(grid).has_value(); }

/// Common neighbours of the endpoints of (a, b), reference bus excluded.
inline std::vector<BusId> common_neighbors(const Grid& grid, BusId a, BusId b) {
    const auto& na = grid.neighbors_of(a);
    const auto& nb = grid.neighbors_of(b);
    std::vector<BusId> out;
    std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(out));
    std::erase(out, grid.reference());
    return out;
}

/// Lines that lie on at least one 3-cycle (reference bus included).
inline EdgeSet triangle_edges(const Grid& grid) {
    EdgeSet out;
    for (const auto& line : grid.lines()) {
        const auto& na = grid.neighbors_of(line.i);
        const auto& nb = grid.neighbors_of(line.j);
        std::vector<BusId> common;
        std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(common));
        if (!common.empty()) out.insert(make_edge(line.i, line.j));
    }
    return out;
}

/// Matrix-index pairs (a < b) whose hop distance, avoiding the reference
/// bus, is 1 or 2. This is the support of the voltage concentration matrices.
inline std::set<std::pair<int, int>> expected_concentration_support(const Grid& grid) {
    std::set<std::pair<int, int>> out;
    for (BusId b : grid.non_reference_buses()) {
        const auto dist = hop_distances(grid, b, true);
        for (BusId c : grid.non_reference_buses()) {
            if (c <= b) continue;
            if (dist[c] == 1 || dist[c] == 2) out.insert({grid.index_of(b), grid.index_of(c)});
        }
    }
    return out;
}

}  // namespace gridtopo
