#pragma once

// Random test grids. Impedances are drawn from ranges typical of feeders.

#include <random>
#include <set>
#include <vector>

#include "gridtopo/grid.hpp"

namespace testgrid {

using gridtopo::Grid;
using gridtopo::Line;

inline Line random_line(std::mt19937_64& rng, int i, int j, bool allow_zero_r = false) {
    std::uniform_real_distribution<double> r(0.01, 0.08), x(0.02, 0.2);
    Line l{i, j, r(rng), x(rng), std::nullopt};
    if (allow_zero_r && std::uniform_int_distribution<int>(0, 9)(rng) == 0) l.r = 0.0;
    return l;
}

/// Random tree on `buses` vertices (each vertex k > 0 attaches to a random
/// earlier one); reference bus 0.
inline Grid random_tree(std::mt19937_64& rng, int buses, bool allow_zero_r = false) {
    std::vector<Line> lines;
    for (int k = 1; k < buses; ++k) {
        lines.push_back(random_line(rng, std::uniform_int_distribution<int>(0, k - 1)(rng), k, allow_zero_r));
    }
    return Grid(static_cast<std::size_t>(buses), 0, std::move(lines));
}

/// Random tree plus chords; chords closing a triangle among non-reference
/// buses are added first so every returned grid has at least one.
inline Grid random_grid_with_triangles(std::mt19937_64& rng, int buses, int extra_chords) {
    std::vector<Line> lines;
    std::set<std::pair<int, int>> used;
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(buses));
    auto add = [&](int a, int b) {
        if (a == b || used.contains(std::minmax(a, b))) return false;
        used.insert(std::minmax(a, b));
        lines.push_back(random_line(rng, a, b));
        adj[a].push_back(b);
        adj[b].push_back(a);
        return true;
    };
    // path 0-1-2 keeps 1 and 2 as non-reference buses; 3 joins both of them.
    add(0, 1);
    add(1, 2);
    add(2, 3);
    add(1, 3);
    for (int k = 4; k < buses; ++k) add(std::uniform_int_distribution<int>(0, k - 1)(rng), k);
    std::uniform_int_distribution<int> pick(1, buses - 1);
    for (int c = 0, tries = 0; c < extra_chords && tries < 100; ++tries) {
        // close a triangle through a random bus and two of its neighbours
        const int k = pick(rng);
        if (adj[k].size() < 2) continue;
        std::uniform_int_distribution<std::size_t> nb(0, adj[k].size() - 1);
        const int a = adj[k][nb(rng)];
        const int b = adj[k][nb(rng)];
        if (a == 0 || b == 0) continue;
        if (add(a, b)) ++c;
    }
    return Grid(static_cast<std::size_t>(buses), 0, std::move(lines));
}

}  // namespace testgrid
