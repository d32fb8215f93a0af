// Minimal end-to-end run: sample LC voltages on the bundled radial feeder,
// estimate the concentration matrix, and recover the lines both ways.

#include <iostream>

#include "gridtopo.hpp"

int main() {
    using namespace gridtopo;
    const auto feeder = builtin_grid("radial20");
    const auto stats = feeder.stats_or_default();

    for (std::size_t n : {500, 2000, 10000}) {
        const auto set = generate_voltage_samples(feeder.grid, stats, ModelKind::LC, n, 42);
        const auto conc = as_concentration(estimate_concentration(set.samples, EstimationMethod::Auto), set);
        for (auto algo : {Algorithm::Thresholding, Algorithm::Counting}) {
            const auto learned = learn_topology(conc, algo, {}, n);
            const auto err = edge_errors(learned.topology, feeder.grid);
            std::cout << "n=" << n << " " << to_string(algo) << ": " << learned.topology.edges.size()
                      << " edges, fp=" << err.false_positives << " fn=" << err.false_negatives << "\n";
        }
    }
}
