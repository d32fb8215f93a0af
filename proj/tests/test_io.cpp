#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <functional>

#include "gridtopo/experiment.hpp"
#include "gridtopo/io.hpp"

using namespace gridtopo;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::Usage;
}

}  // namespace

TEST_CASE("grid JSON round trip", "[io]") {
    const auto gc = builtin_grid("loopy20_c4");
    const auto text = io::grid_to_json(gc.grid, gc.stats).dump();
    const auto back = io::parse_grid_json(text);
    CHECK(back.grid.lines().size() == gc.grid.lines().size());
    CHECK(back.grid.edges() == gc.grid.edges());
    CHECK(io::grid_hash(back.grid) == io::grid_hash(gc.grid));
    REQUIRE(back.stats.has_value());
    CHECK(back.stats->pq.isApprox(gc.stats->pq));
}

TEST_CASE("grid JSON errors name the offending line", "[io]") {
    const std::string bad_x = R"({"reference":0,"buses":[0,1,2],"lines":[{"i":0,"j":1,"r":0,"x":1},{"i":1,"j":2,"r":0.1,"x":0}]})";
    try {
        io::parse_grid_json(bad_x, "g.json");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidLine);
        CHECK(std::string(e.what()).find("line #1") != std::string::npos);
    }
    CHECK(kind_of([] { io::parse_grid_json("{"); }) == ErrorKind::Parse);
    CHECK(kind_of([] { io::parse_grid_json(R"({"reference":0,"buses":[0,1],"lines":[{"i":0,"j":1,"r":0}]})"); }) ==
          ErrorKind::Parse);
    CHECK(kind_of([] {
              io::parse_grid_json(R"({"reference":0,"buses":[0,1,2,3],"lines":[{"i":0,"j":1,"r":0,"x":1},{"i":2,"j":3,"r":0,"x":1}]})");
          }) == ErrorKind::Structural);
}

TEST_CASE("line-data CSV", "[io]") {
    const std::string csv = "from,to,r,x\n1,2,0.01,0.05\n2,3,0,0.2\n# comment\n1,3,0.02,0.1\n";
    const auto gc = io::parse_line_csv(csv);
    CHECK(gc.grid.bus_count() == 3);
    CHECK(gc.grid.reference() == 0);
    CHECK(gc.grid.find_line(1, 2) != nullptr);
    CHECK(kind_of([] { io::parse_line_csv("1,2,0.01,-1\n"); }) == ErrorKind::InvalidLine);
    CHECK(kind_of([] { io::parse_line_csv("1,2,0.01\n"); }) == ErrorKind::Parse);
    CHECK(kind_of([] { io::parse_line_csv("1,2,a,0.1\n"); }) == ErrorKind::Parse);
    const auto ieee = builtin_grid("ieee14");
    CHECK(ieee.grid.bus_count() == 14);
    CHECK(ieee.grid.lines().size() == 20);
}

TEST_CASE("samples CSV round trip", "[io]") {
    const auto gc = builtin_grid("radial20");
    const auto set = generate_voltage_samples(gc.grid, gc.stats_or_default(), ModelKind::LC, 25, 4);
    const auto back = io::parse_samples_csv(io::samples_to_csv(set));
    CHECK(back.model_kind == ModelKind::LC);
    CHECK(back.labels == set.labels);
    CHECK(back.samples == set.samples);  // %.17g round-trips exactly
    const auto meta = io::samples_metadata(set, gc.grid);
    CHECK(meta["n"] == 25);
    CHECK(meta["model_kind"] == "lc");
    CHECK(kind_of([] { io::parse_samples_csv("theta_1,theta_2\n1,2\n3\n"); }) == ErrorKind::Parse);
    CHECK(kind_of([] { io::parse_samples_csv("foo\n1\n"); }) == ErrorKind::Parse);
}

TEST_CASE("concentration JSON round trip", "[io]") {
    const auto gc = builtin_grid("ieee14");
    const auto conc = exact_concentration(gc.grid, gc.stats_or_default(), ModelKind::LC);
    const auto back = io::concentration_from_json(io::concentration_to_json(conc).dump());
    CHECK(back.kind == ModelKind::LC);
    CHECK(back.labels == conc.labels);
    CHECK(back.matrix.isApprox(conc.matrix, 1e-15));
}

TEST_CASE("topology and report output", "[io]") {
    LearnedTopology topo{{{1, 2}, {2, 3}}, Algorithm::Counting, 0.5};
    const auto doc = io::topology_to_json(topo);
    CHECK(doc["edges"].size() == 2);
    CHECK(doc["algorithm"] == "counting");
    const auto gc = builtin_grid("ieee14");
    const auto csv = io::report_to_csv(check_triangle_sufficiency(gc.grid, gc.stats_or_default()));
    CHECK(csv.rfind("edge,theorem,satisfied,margin\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + static_cast<long>(gc.grid.non_reference_edges().size()));
}
