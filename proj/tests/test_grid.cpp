#include <catch2/catch_amalgamated.hpp>

#include "gridtopo/experiment.hpp"
#include "gridtopo/grid.hpp"
#include "oracles.hpp"
#include "random_grids.hpp"

using namespace gridtopo;
using Catch::Approx;

namespace {

Line unit(BusId i, BusId j) { return {i, j, 0.0, 1.0, std::nullopt}; }

Grid path_grid(int buses) {
    std::vector<Line> lines;
    for (int k = 0; k + 1 < buses; ++k) lines.push_back(unit(k, k + 1));
    return Grid(static_cast<std::size_t>(buses), 0, lines);
}

}  // namespace

TEST_CASE("susceptance and conductance from impedance", "[grid]") {
    CHECK(susceptance({0, 1, 0.0, 1.0, std::nullopt}) == Approx(1.0));
    CHECK(susceptance({0, 1, 1.0, 1.0, std::nullopt}) == Approx(0.5));
    CHECK(susceptance({0, 1, 0.03, 0.04, std::nullopt}) == Approx(16.0));
    CHECK(conductance({0, 1, 0.0, 1.0, std::nullopt}) == 0.0);
    CHECK(conductance({0, 1, 1.0, 1.0, std::nullopt}) == Approx(0.5));
    CHECK(conductance({0, 1, 0.03, 0.04, std::nullopt}) == Approx(12.0));
}

TEST_CASE("line parameters are validated", "[grid]") {
    CHECK_THROWS_MATCHES(susceptance({0, 1, 0.1, 0.0, std::nullopt}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) { return e.kind() == ErrorKind::InvalidLine; }));
    CHECK_THROWS_AS(susceptance({0, 1, 0.1, -1.0, std::nullopt}), Error);
    CHECK_THROWS_AS(conductance({0, 1, -0.1, 1.0, std::nullopt}), Error);
    try {
        Grid(3, 0, {unit(0, 1), {1, 2, 0.1, 0.0, std::nullopt}});
        FAIL("expected an invalid-line error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidLine);
        CHECK(std::string(e.what()).find("(1,2)") != std::string::npos);
    }
}

TEST_CASE("grid construction rejects bad structure", "[grid]") {
    auto kind_of = [](auto&& build) {
        try {
            build();
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::Usage;
    };
    CHECK(kind_of([] { Grid(4, 0, {unit(0, 1), unit(2, 3)}); }) == ErrorKind::Structural);
    CHECK(kind_of([] { Grid(3, 0, {unit(0, 1), unit(1, 7)}); }) == ErrorKind::UnknownBus);
    CHECK(kind_of([] { Grid(3, 5, {unit(0, 1), unit(1, 2)}); }) == ErrorKind::UnknownBus);
    CHECK(kind_of([] { Grid(3, 0, {unit(0, 1), unit(1, 2), unit(2, 1)}); }) == ErrorKind::Structural);
    CHECK(kind_of([] { Grid(2, 0, {unit(1, 1)}); }) == ErrorKind::Structural);
}

TEST_CASE("reduced Laplacian on tiny grids", "[grid]") {
    const Grid two(2, 0, {unit(0, 1)});
    const auto h2 = reduced_laplacian(two, WeightKind::Susceptance).matrix;
    REQUIRE(h2.rows() == 1);
    CHECK(h2(0, 0) == Approx(1.0));

    const auto h3 = reduced_laplacian(path_grid(3), WeightKind::Susceptance).matrix;
    Eigen::Matrix2d expected;
    expected << 2, -1, -1, 1;
    CHECK((h3 - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("reduced Laplacian matches the incidence product", "[grid]") {
    for (const auto& name : builtin_grid_names()) {
        const auto gc = builtin_grid(name);
        const auto beta = reduced_laplacian(gc.grid, WeightKind::Susceptance).matrix;
        CHECK((beta - oracle::incidence_laplacian(gc.grid, oracle::beta)).cwiseAbs().maxCoeff() < 1e-9);
        const auto g = reduced_laplacian(gc.grid, WeightKind::Conductance).matrix;
        const auto g_ref = oracle::incidence_laplacian(gc.grid, [](const Line& l) { return l.r / (l.r * l.r + l.x * l.x); });
        CHECK((g - g_ref).cwiseAbs().maxCoeff() < 1e-9);
    }
    // the reference need not be bus 0
    const Grid shifted(4, 2, {unit(0, 1), unit(1, 2), {2, 3, 0.1, 0.3, std::nullopt}});
    CHECK((reduced_laplacian(shifted, WeightKind::Susceptance).matrix -
           oracle::incidence_laplacian(shifted, oracle::beta))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}

TEST_CASE("reference bus has no matrix index", "[grid]") {
    const auto g = path_grid(3);
    CHECK(g.index_of(1) == 0);
    CHECK(g.index_of(2) == 1);
    CHECK_THROWS_AS(g.index_of(0), Error);
    CHECK_THROWS_AS(g.index_of(9), Error);
}

TEST_CASE("neighbourhoods", "[grid]") {
    const auto path = path_grid(3);  // 0-1-2
    CHECK(two_hop_neighbors(path, 0) == std::set<BusId>{2});
    CHECK(neighbors(path, 1) == std::set<BusId>{0, 2});

    const Grid tri(3, 0, {unit(0, 1), unit(1, 2), unit(0, 2)});
    CHECK(two_hop_neighbors(tri, 0).empty());
    CHECK_THROWS_AS(neighbors(tri, 4), Error);

    const auto gc = builtin_grid("radial20");
    const auto adj = oracle::adjacency(gc.grid, false);
    for (BusId leaf = 0; leaf < 20; ++leaf) {
        if (adj[leaf].size() != 1) continue;
        const auto dist = oracle::bfs(adj, leaf);
        std::set<BusId> two;
        for (BusId b = 0; b < 20; ++b) {
            if (dist[b] == 2) two.insert(b);
        }
        CHECK(two_hop_neighbors(gc.grid, leaf) == two);
        CHECK(hop_distances(gc.grid, leaf) == dist);
    }
}

TEST_CASE("girth", "[grid]") {
    CHECK_FALSE(girth(path_grid(6)).has_value());
    CHECK(girth(Grid(3, 0, {unit(0, 1), unit(1, 2), unit(0, 2)})) == 3);
    CHECK_FALSE(girth(builtin_grid("radial20").grid).has_value());
    CHECK(girth(builtin_grid("loopy20_c4").grid) == 4);
    CHECK(girth(builtin_grid("loopy20_c7").grid) == 7);
    CHECK(girth(builtin_grid("ieee14").grid) == 3);

    std::mt19937_64 rng(11);
    for (int t = 0; t < 30; ++t) {
        const auto g = testgrid::random_grid_with_triangles(rng, 5 + t % 8, t % 4);
        CHECK(girth(g).value_or(0) == oracle::girth(oracle::adjacency(g, false)));
    }
}

TEST_CASE("triangle edges and common neighbours", "[grid]") {
    const auto ieee = builtin_grid("ieee14").grid;
    CHECK_FALSE(triangle_edges(ieee).empty());
    const auto radial = builtin_grid("radial20").grid;
    CHECK(triangle_edges(radial).empty());
    // triangle 0-1-2 through the reference: the reference is not a common neighbour
    const Grid g(4, 0, {unit(0, 1), unit(0, 2), unit(1, 2), unit(2, 3)});
    CHECK(common_neighbors(g, 1, 2).empty());
    CHECK(common_neighbors(g, 1, 3) == std::vector<BusId>{2});
}

TEST_CASE("expected concentration support is the distance-two closure", "[grid]") {
    const auto gc = builtin_grid("loopy20_c4");
    const auto support = expected_concentration_support(gc.grid);
    const auto adj = oracle::adjacency(gc.grid, true);
    for (int a = 0; a < static_cast<int>(gc.grid.size()); ++a) {
        const auto dist = oracle::bfs(adj, gc.grid.bus_at(a));
        for (int b = 0; b < static_cast<int>(gc.grid.size()); ++b) {
            const int d = dist[gc.grid.bus_at(b)];
            CHECK(support.contains({a, b}) == (a < b && (d == 1 || d == 2)));
        }
    }
}
