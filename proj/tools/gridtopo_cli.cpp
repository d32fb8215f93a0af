// gridtopo: command-line front end for topology learning from voltage samples.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridtopo.hpp"

using namespace gridtopo;
using nlohmann::json;

namespace {

void emit(const json& doc, const std::string& out) {
    const auto text = doc.dump(2) + "\n";
    if (out.empty() || out == "-") {
        std::cout << text;
    } else {
        io::write_file(out, text);
    }
}

void emit_text(const std::string& text, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << text;
    } else {
        io::write_file(out, text);
    }
}

std::optional<std::uint64_t> env_seed() {
    const char* env = std::getenv("GRIDTOPO_SEED");
    if (!env || !*env) return std::nullopt;
    try {
        std::size_t pos = 0;
        const auto v = std::stoull(env, &pos);
        if (pos == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::Usage, std::string("GRIDTOPO_SEED is not an unsigned integer: '") + env + "'");
}

std::vector<SampleCount> parse_counts(const std::string& list) {
    std::vector<SampleCount> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_sample_count(item));
    return out;
}

json grid_info(const io::GridCase& gc) {
    const Grid& g = gc.grid;
    json triangles = json::array();
    for (const auto& e : triangle_edges(g)) triangles.push_back({e.u, e.v});
    const auto gth = girth(g);
    return {{"grid", gc.name},
            {"N", g.bus_count()},
            {"non_reference", g.size()},
            {"reference", g.reference()},
            {"lines", g.lines().size()},
            {"girth", gth ? json(*gth) : json("inf")},
            {"radial", !gth.has_value()},
            {"triangle_edges", triangles}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Power-grid topology learning from nodal voltage samples"};
    app.require_subcommand(1);

    std::string grid_id = "radial20";
    std::string out;
    std::string model = "dc";
    std::string algo = "thresholding";

    // grid validate | info
    auto* grid_cmd = app.add_subcommand("grid", "Inspect a grid");
    grid_cmd->require_subcommand(1);
    auto* validate_cmd = grid_cmd->add_subcommand("validate", "Check a grid file");
    validate_cmd->add_option("--grid", grid_id, "Built-in name or grid file")->required();
    auto* info_cmd = grid_cmd->add_subcommand("info", "Structural summary");
    info_cmd->add_option("--grid", grid_id, "Built-in name or grid file")->required();
    std::string export_path;
    info_cmd->add_option("--export", export_path, "Also write the grid as JSON");

    // sample
    auto* sample_cmd = app.add_subcommand("sample", "Draw voltage samples");
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    std::string meta;
    sample_cmd->add_option("--grid", grid_id, "Built-in name or grid file")->required();
    sample_cmd->add_option("--model", model, "dc or lc");
    sample_cmd->add_option("--n", n, "Number of samples")->check(CLI::PositiveNumber);
    sample_cmd->add_option("--seed", seed, "RNG seed");
    sample_cmd->add_option("--out", out, "Samples CSV (default stdout)");
    sample_cmd->add_option("--meta", meta, "Sidecar JSON (default <out>.json)");

    // estimate
    auto* estimate_cmd = app.add_subcommand("estimate", "Estimate a concentration matrix");
    std::string samples_path;
    std::string method = "auto";
    std::optional<double> lambda;
    estimate_cmd->add_option("--samples", samples_path, "Samples CSV")->required();
    estimate_cmd->add_option("--method", method, "direct, glasso or auto");
    estimate_cmd->add_option("--lambda", lambda, "Graphical lasso penalty (default: rate-based)");
    estimate_cmd->add_option("--out", out, "Output JSON (default stdout)");

    // learn
    auto* learn_cmd = app.add_subcommand("learn", "Learn a topology");
    std::string conc_source = "exact";
    std::optional<double> tau;
    learn_cmd->add_option("--conc", conc_source, "'exact' or a concentration JSON file");
    learn_cmd->add_option("--grid", grid_id, "Grid (needed for --conc exact; scores the result if given)");
    learn_cmd->add_option("--model", model, "dc or lc (for --conc exact)");
    learn_cmd->add_option("--algo", algo, "counting or thresholding");
    learn_cmd->add_option("--tau", tau, "tau1 > 0 (counting) or tau2 < 0 (thresholding); default auto");
    learn_cmd->add_option("--out", out, "Output JSON (default stdout)");

    // certify
    auto* certify_cmd = app.add_subcommand("certify", "Triangle sufficiency report");
    certify_cmd->add_option("--grid", grid_id, "Built-in name or grid file")->required();
    certify_cmd->add_option("--out", out, "Report CSV (default stdout)");

    // experiment
    auto* exp_cmd = app.add_subcommand("experiment", "Error-versus-samples sweep");
    std::string config_path, estimator = "auto", counts, tau_text;
    std::size_t trials = 1;
    unsigned threads = 0;
    exp_cmd->add_option("--config", config_path, "JSON config; flags override it");
    auto* o_grid = exp_cmd->add_option("--grid", grid_id, "Built-in name or grid file");
    auto* o_model = exp_cmd->add_option("--model", model, "dc or lc");
    auto* o_algo = exp_cmd->add_option("--algo", algo, "counting or thresholding");
    auto* o_est = exp_cmd->add_option("--estimator", estimator, "direct, glasso or auto");
    auto* o_n = exp_cmd->add_option("--n", counts, "Comma-separated sample counts; 'inf' = exact matrix");
    auto* o_trials = exp_cmd->add_option("--trials", trials, "Trials per sample count");
    auto* o_seed = exp_cmd->add_option("--seed", seed, "Master seed");
    auto* o_tau = exp_cmd->add_option("--tau", tau_text, "Threshold or 'auto'");
    exp_cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");
    exp_cmd->add_option("--out", out, "Results CSV (default stdout)");
    exp_cmd->add_option("--meta", meta, "Summary JSON (default <out>.json)");

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e);
        } catch (const CLI::CallForAllHelp& e) {
            return app.exit(e);
        } catch (const CLI::ParseError& e) {
            throw Error(ErrorKind::Usage, e.what());
        }

        if (validate_cmd->parsed()) {
            const auto gc = resolve_grid(grid_id);
            emit({{"valid", true}, {"buses", gc.grid.bus_count()}, {"lines", gc.grid.lines().size()}}, "");
        } else if (info_cmd->parsed()) {
            const auto gc = resolve_grid(grid_id);
            if (!export_path.empty()) emit(io::grid_to_json(gc.grid, gc.stats), export_path);
            emit(grid_info(gc), "");
        } else if (sample_cmd->parsed()) {
            if (const auto s = env_seed()) seed = *s;
            const auto gc = resolve_grid(grid_id);
            const auto set = generate_voltage_samples(gc.grid, gc.stats_or_default(), parse_model(model), n, seed);
            emit_text(io::samples_to_csv(set), out);
            if (meta.empty() && !out.empty() && out != "-") meta = out + ".json";
            if (!meta.empty()) emit(io::samples_metadata(set, gc.grid), meta);
        } else if (estimate_cmd->parsed()) {
            const auto set = io::parse_samples_csv(io::read_file(samples_path));
            GlassoConfig config;
            if (lambda) config.lambda = *lambda;
            const auto est = estimate_concentration(set.samples, parse_estimator(method), config, !lambda.has_value());
            auto doc = io::concentration_to_json(as_concentration(est, set), &est);
            doc["samples"] = set.count();
            emit(doc, out);
        } else if (learn_cmd->parsed()) {
            std::optional<io::GridCase> gc;
            if (learn_cmd->get_option("--grid")->count() || conc_source == "exact") gc = resolve_grid(grid_id);
            ConcentrationMatrix conc;
            std::optional<std::size_t> samples;
            if (conc_source == "exact") {
                conc = exact_concentration(gc->grid, gc->stats_or_default(), parse_model(model));
            } else {
                const auto text = io::read_file(conc_source);
                conc = io::concentration_from_json(text);
                const auto doc = json::parse(text);
                if (doc.contains("samples")) samples = doc["samples"].get<std::size_t>();
            }
            const auto outcome = learn_topology(conc, parse_algorithm(algo), {tau}, samples);
            auto doc = io::topology_to_json(outcome.topology, outcome.unresolved);
            if (gc) {
                const auto err = edge_errors(outcome.topology, gc->grid);
                doc["errors"] = {{"fp", err.false_positives}, {"fn", err.false_negatives}, {"total", err.total}};
            }
            emit(doc, out);
        } else if (certify_cmd->parsed()) {
            const auto gc = resolve_grid(grid_id);
            emit_text(io::report_to_csv(check_triangle_sufficiency(gc.grid, gc.stats_or_default())), out);
        } else if (exp_cmd->parsed()) {
            ExperimentSpec spec;
            if (!config_path.empty()) {
                try {
                    spec = spec_from_json(json::parse(io::read_file(config_path)));
                } catch (const json::parse_error& e) {
                    throw Error(ErrorKind::Parse, config_path + ": " + e.what());
                }
            }
            if (o_grid->count()) spec.grid = grid_id;
            if (o_model->count()) spec.model = parse_model(model);
            if (o_algo->count()) spec.algorithm = parse_algorithm(algo);
            if (o_est->count()) spec.estimator = parse_estimator(estimator);
            if (o_n->count()) spec.sample_counts = parse_counts(counts);
            if (o_trials->count()) spec.trials = trials;
            if (o_seed->count()) spec.seed = seed;
            if (o_tau->count()) {
                spec.threshold.value = tau_text == "auto" ? std::nullopt : std::optional(std::stod(tau_text));
            }
            if (const auto s = env_seed()) spec.seed = *s;
            spec.threads = threads;
            const auto result = run_experiment(spec);
            emit_text(results_to_csv(result), out);
            if (meta.empty() && !out.empty() && out != "-") meta = out + ".json";
            if (!meta.empty()) emit(results_metadata(result), meta);
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << json{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}}.dump() << "\n";
        return e.kind() == ErrorKind::Usage ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
        return 1;
    }
}
