#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridtopo/errors.hpp"
#include "gridtopo/estimation.hpp"
#include "gridtopo/grid.hpp"
#include "gridtopo/io.hpp"
#include "gridtopo/powerflow.hpp"
#include "gridtopo/sampling.hpp"
#include "gridtopo/topology.hpp"

#ifndef GRIDTOPO_DATA_DIR
#define GRIDTOPO_DATA_DIR "data"
#endif

namespace gridtopo {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Built-in grids

inline const std::vector<std::string>& builtin_grid_names() {
    static const std::vector<std::string> names{"radial20", "loopy20_c4", "loopy20_c7", "ieee14"};
    return names;
}

/// Directory holding the bundled grid files; GRIDTOPO_DATA overrides the
/// compiled-in location.
inline std::filesystem::path data_dir() {
    if (const char* env = std::getenv("GRIDTOPO_DATA"); env && *env) return env;
    return GRIDTOPO_DATA_DIR;
}

/// Loads a bundled grid. The loopy 20-bus variants are checked against their
/// intended minimum cycle length on load.
inline io::GridCase builtin_grid(const std::string& name) {
    const auto& names = builtin_grid_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
        throw Error(ErrorKind::Usage, "unknown built-in grid '" + name + "'");
    }
    const auto dir = data_dir();
    io::GridCase out = name == "ieee14" ? io::load_grid_file((dir / "ieee14.csv").string(), 1)
                                        : io::load_grid_file((dir / (name + ".json")).string());
    out.name = name;

    const std::map<std::string, std::optional<int>> expected_girth{
        {"radial20", std::nullopt}, {"loopy20_c4", 4}, {"loopy20_c7", 7}, {"ieee14", 3}};
    if (girth(out.grid) != expected_girth.at(name)) {
        throw Error(ErrorKind::Structural, "bundled grid '" + name + "' does not have its expected girth");
    }
    if (!out.stats) out.stats = InjectionStats::defaults(out.grid.size());
    return out;
}

/// A built-in name or a path to a grid JSON / line-data CSV file.
inline io::GridCase resolve_grid(const std::string& id) {
    const auto& names = builtin_grid_names();
    if (std::find(names.begin(), names.end(), id) != names.end()) return builtin_grid(id);
    if (!std::filesystem::exists(id)) throw Error(ErrorKind::Usage, "'" + id + "' is neither a built-in grid nor a file");
    auto out = io::load_grid_file(id);
    out.name = id;
    return out;
}

// ---------------------------------------------------------------------------
// Experiment configuration

/// A sample count; nullopt stands for the exact analytical matrix ("inf").
using SampleCount = std::optional<std::size_t>;

inline std::string to_string(const SampleCount& n) { return n ? std::to_string(*n) : "inf"; }

inline SampleCount parse_sample_count(const std::string& text) {
    if (text == "inf" || text == "exact") return std::nullopt;
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &pos);
    } catch (const std::exception&) {
        throw Error(ErrorKind::Usage, "bad sample count '" + text + "'");
    }
    if (pos != text.size() || v == 0) throw Error(ErrorKind::Usage, "bad sample count '" + text + "'");
    return static_cast<std::size_t>(v);
}

inline ModelKind parse_model(const std::string& s) {
    if (s == "dc") return ModelKind::DC;
    if (s == "lc") return ModelKind::LC;
    throw Error(ErrorKind::Usage, "model must be dc or lc, got '" + s + "'");
}

inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "counting") return Algorithm::Counting;
    if (s == "thresholding") return Algorithm::Thresholding;
    throw Error(ErrorKind::Usage, "algorithm must be counting or thresholding, got '" + s + "'");
}

inline EstimationMethod parse_estimator(const std::string& s) {
    if (s == "direct") return EstimationMethod::Direct;
    if (s == "glasso") return EstimationMethod::Glasso;
    if (s == "auto") return EstimationMethod::Auto;
    throw Error(ErrorKind::Usage, "estimator must be direct, glasso or auto, got '" + s + "'");
}

struct ExperimentSpec {
    std::string grid = "radial20";
    ModelKind model = ModelKind::DC;
    Algorithm algorithm = Algorithm::Thresholding;
    EstimationMethod estimator = EstimationMethod::Auto;
    std::vector<SampleCount> sample_counts;
    std::size_t trials = 1;
    std::uint64_t seed = 0;
    ThresholdSetting threshold;  ///< tau1 (counting) or tau2 (thresholding); empty = auto
    unsigned threads = 0;  ///< 0 = hardware concurrency

    void validate() const {
        if (sample_counts.empty()) throw Error(ErrorKind::Precondition, "sample_counts is empty");
        for (std::size_t k = 0; k < sample_counts.size(); ++k) {
            if (!sample_counts[k] && k + 1 != sample_counts.size()) {
                throw Error(ErrorKind::Precondition, "the exact-matrix entry (inf) must be the last sample count");
            }
            if (k > 0 && sample_counts[k] && *sample_counts[k] <= *sample_counts[k - 1]) {
                throw Error(ErrorKind::Precondition, "sample_counts must be strictly increasing");
            }
        }
        if (trials < 1) throw Error(ErrorKind::Precondition, "trials must be at least 1");
        if (threshold.value) {
            const double t = *threshold.value;
            if (algorithm == Algorithm::Thresholding && !(t < 0.0)) {
                throw Error(ErrorKind::Precondition, "thresholding needs tau2 < 0");
            }
            if (algorithm == Algorithm::Counting && !(t > 0.0)) {
                throw Error(ErrorKind::Precondition, "counting needs tau1 > 0");
            }
        }
    }
};

inline nlohmann::json spec_to_json(const ExperimentSpec& spec) {
    nlohmann::json counts = nlohmann::json::array();
    for (const auto& n : spec.sample_counts) {
        if (n) {
            counts.push_back(*n);
        } else {
            counts.push_back("inf");
        }
    }
    nlohmann::json doc = {{"grid", spec.grid},
                          {"model", to_string(spec.model)},
                          {"algo", to_string(spec.algorithm)},
                          {"estimator", to_string(spec.estimator)},
                          {"sample_counts", counts},
                          {"trials", spec.trials},
                          {"seed", spec.seed}};
    if (spec.threshold.value) {
        doc["threshold"] = *spec.threshold.value;
    } else {
        doc["threshold"] = "auto";
    }
    return doc;
}

/// Reads a config object; absent keys keep the values already in `base`.
inline ExperimentSpec spec_from_json(const nlohmann::json& doc, ExperimentSpec base = {}) {
    try {
        if (doc.contains("grid")) base.grid = doc["grid"].get<std::string>();
        if (doc.contains("model")) base.model = parse_model(doc["model"].get<std::string>());
        if (doc.contains("algo")) base.algorithm = parse_algorithm(doc["algo"].get<std::string>());
        if (doc.contains("estimator")) base.estimator = parse_estimator(doc["estimator"].get<std::string>());
        if (doc.contains("sample_counts")) {
            base.sample_counts.clear();
            for (const auto& n : doc["sample_counts"]) {
                base.sample_counts.push_back(n.is_string() ? parse_sample_count(n.get<std::string>())
                                                           : SampleCount(n.get<std::size_t>()));
            }
        }
        if (doc.contains("trials")) base.trials = doc["trials"].get<std::size_t>();
        if (doc.contains("seed")) base.seed = doc["seed"].get<std::uint64_t>();
        if (doc.contains("threshold")) {
            const auto& t = doc["threshold"];
            base.threshold.value = t.is_string() && t.get<std::string>() == "auto" ? std::nullopt
                                                                                  : std::optional(t.get<double>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("experiment config: ") + e.what());
    }
    return base;
}

// ---------------------------------------------------------------------------
// Results

struct TrialRecord {
    SampleCount n;
    std::size_t trial = 0;
    std::optional<EdgeErrors> errors;  ///< empty when the trial failed
    std::string failure;  ///< error kind and message of a failed trial
};

struct SampleSummary {
    SampleCount n;
    double mean = 0.0;  ///< over successful trials
    double sd = 0.0;
    std::size_t succeeded = 0;
    std::size_t failed = 0;
};

struct ExperimentResult {
    ExperimentSpec spec;
    std::vector<TrialRecord> records;  ///< sorted by (n, trial); inf last
    std::vector<SampleSummary> summary;
    std::string started;
    std::string finished;
    std::string version = kVersion;
};

namespace detail {

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline bool record_less(const TrialRecord& a, const TrialRecord& b) {
    const auto key = [](const SampleCount& n) { return n ? *n : std::numeric_limits<std::size_t>::max(); };
    return std::pair(key(a.n), a.trial) < std::pair(key(b.n), b.trial);
}

/// Scores one concentration matrix; counting keeps whatever it could resolve.
inline EdgeErrors score(const ConcentrationMatrix& conc, const ExperimentSpec& spec, const Grid& grid,
                        std::optional<std::size_t> samples) {
    const auto outcome = learn_topology(conc, spec.algorithm, spec.threshold, samples);
    return edge_errors(outcome.topology, grid);
}

inline std::vector<SampleSummary> summarize(const ExperimentSpec& spec, const std::vector<TrialRecord>& records) {
    std::vector<SampleSummary> out;
    for (const auto& n : spec.sample_counts) {
        SampleSummary s;
        s.n = n;
        std::vector<double> totals;
        for (const auto& r : records) {
            if (r.n != n) continue;
            if (r.errors) {
                totals.push_back(static_cast<double>(r.errors->total));
            } else {
                ++s.failed;
            }
        }
        s.succeeded = totals.size();
        if (!totals.empty()) {
            for (double t : totals) s.mean += t;
            s.mean /= static_cast<double>(totals.size());
            if (totals.size() > 1) {
                double ss = 0.0;
                for (double t : totals) ss += (t - s.mean) * (t - s.mean);
                s.sd = std::sqrt(ss / static_cast<double>(totals.size() - 1));
            }
        }
        out.push_back(s);
    }
    return out;
}

}  // namespace detail

/// Runs every (n, trial) cell. Trial t draws from derive_seed(seed, t); all
/// sample counts of a trial are prefixes of one sample matrix. Trials run in
/// parallel; a failing cell is recorded and the sweep continues.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, const io::GridCase& grid_case) {
    spec.validate();
    ExperimentResult result;
    result.spec = spec;
    result.started = detail::utc_timestamp();

    const Grid& grid = grid_case.grid;
    const InjectionStats stats = grid_case.stats_or_default();
    stats.validate(grid.size());

    std::vector<std::size_t> finite;
    bool exact = false;
    for (const auto& n : spec.sample_counts) {
        if (n) {
            finite.push_back(*n);
        } else {
            exact = true;
        }
    }

    // The exact matrix is the same for every trial.
    std::optional<TrialRecord> exact_template;
    if (exact) {
        TrialRecord rec;
        try {
            rec.errors = detail::score(exact_concentration(grid, stats, spec.model), spec, grid, std::nullopt);
        } catch (const Error& e) {
            rec.failure = std::string(to_string(e.kind())) + ": " + e.what();
        }
        exact_template = rec;
    }

    std::vector<TrialRecord> records;
    std::mutex records_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t = next++; t < spec.trials; t = next++) {
            std::vector<TrialRecord> local;
            std::optional<SampleSet> set;
            std::string sample_failure;
            if (!finite.empty()) {
                try {
                    set = generate_voltage_samples(grid, stats, spec.model, finite.back(), derive_seed(spec.seed, t));
                } catch (const Error& e) {
                    sample_failure = std::string(to_string(e.kind())) + ": " + e.what();
                }
            }
            for (std::size_t n : finite) {
                TrialRecord rec;
                rec.n = n;
                rec.trial = t;
                if (!set) {
                    rec.failure = sample_failure;
                } else {
                    try {
                        const auto est = estimate_concentration(set->samples.topRows(static_cast<Eigen::Index>(n)),
                                                                spec.estimator);
                        rec.errors = detail::score(as_concentration(est, *set), spec, grid, n);
                    } catch (const Error& e) {
                        rec.failure = std::string(to_string(e.kind())) + ": " + e.what();
                    }
                }
                local.push_back(std::move(rec));
            }
            if (exact_template) {
                TrialRecord rec = *exact_template;
                rec.trial = t;
                local.push_back(std::move(rec));
            }
            std::lock_guard lock(records_mutex);
            for (auto& r : local) records.push_back(std::move(r));
        }
    };

    unsigned threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, spec.trials));
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < threads; ++k) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    std::sort(records.begin(), records.end(), detail::record_less);
    result.records = std::move(records);
    result.summary = detail::summarize(spec, result.records);
    result.finished = detail::utc_timestamp();
    return result;
}

inline ExperimentResult run_experiment(const ExperimentSpec& spec) { return run_experiment(spec, resolve_grid(spec.grid)); }

/// Results CSV; deterministic for a given spec.
inline std::string results_to_csv(const ExperimentResult& result) {
    const auto& s = result.spec;
    std::string out = "grid,model,algo,estimator,n,trial,fp,fn,total\n";
    const std::string prefix =
        s.grid + "," + to_string(s.model) + "," + to_string(s.algorithm) + "," + to_string(s.estimator) + ",";
    for (const auto& r : result.records) {
        out += prefix + to_string(r.n) + "," + std::to_string(r.trial) + ",";
        if (r.errors) {
            out += std::to_string(r.errors->false_positives) + "," + std::to_string(r.errors->false_negatives) + "," +
                   std::to_string(r.errors->total);
        } else {
            out += ",,";
        }
        out += "\n";
    }
    return out;
}

/// Sidecar with the spec, per-n summary, failures and run metadata.
inline nlohmann::json results_metadata(const ExperimentResult& result) {
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& s : result.summary) {
        summary.push_back({{"n", to_string(s.n)},
                           {"mean_total", s.mean},
                           {"sd_total", s.sd},
                           {"succeeded", s.succeeded},
                           {"failed", s.failed}});
    }
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& r : result.records) {
        if (!r.errors) failures.push_back({{"n", to_string(r.n)}, {"trial", r.trial}, {"error", r.failure}});
    }
    return {{"spec", spec_to_json(result.spec)},
            {"summary", summary},
            {"failures", failures},
            {"records", result.records.size()},
            {"started", result.started},
            {"finished", result.finished},
            {"version", result.version}};
}

}  // namespace gridtopo
