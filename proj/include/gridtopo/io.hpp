#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridtopo/certificates.hpp"
#include "gridtopo/errors.hpp"
#include "gridtopo/estimation.hpp"
#include "gridtopo/grid.hpp"
#include "gridtopo/powerflow.hpp"
#include "gridtopo/sampling.hpp"
#include "gridtopo/topology.hpp"

namespace gridtopo::io {

using nlohmann::json;

/// A grid plus the injection statistics stored alongside it, if any.
struct GridCase {
    std::string name;
    Grid grid;
    std::optional<InjectionStats> stats;

    InjectionStats stats_or_default() const { return stats ? *stats : InjectionStats::defaults(grid.size()); }
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Parse, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Parse, "cannot write " + path);
    out << content;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Grid JSON

/// { "reference": id, "buses": [ids], "lines": [{"i","j","r","x"[,"length"]}],
///   optional "injections": [{"bus","pp","qq","pq"}] }
inline GridCase parse_grid_json(const std::string& text, const std::string& name = "grid") {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Parse, name + ": " + e.what());
    }
    auto fail = [&](const std::string& msg) -> Error { return Error(ErrorKind::Parse, name + ": " + msg); };
    try {
        if (!doc.is_object()) throw fail("top level must be an object");
        if (!doc.contains("reference")) throw fail("missing \"reference\"");
        if (!doc.contains("buses") || !doc["buses"].is_array()) throw fail("missing \"buses\" array");
        if (!doc.contains("lines") || !doc["lines"].is_array()) throw fail("missing \"lines\" array");

        std::vector<int> ids = doc["buses"].get<std::vector<int>>();
        std::sort(ids.begin(), ids.end());
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (ids[k] != static_cast<int>(k)) {
                throw Error(ErrorKind::Structural, name + ": bus ids must be contiguous 0..N; found " +
                                                       std::to_string(ids[k]) + " at position " + std::to_string(k));
            }
        }
        std::vector<Line> lines;
        std::size_t k = 0;
        for (const auto& item : doc["lines"]) {
            const std::string where = "lines[" + std::to_string(k++) + "]";
            for (const char* key : {"i", "j", "r", "x"}) {
                if (!item.contains(key)) throw fail(where + " is missing \"" + key + "\"");
            }
            Line line{item["i"].get<BusId>(), item["j"].get<BusId>(), item["r"].get<double>(), item["x"].get<double>(),
                      std::nullopt};
            if (item.contains("length")) line.length = item["length"].get<double>();
            lines.push_back(line);
        }
        Grid grid(ids.size(), doc["reference"].get<BusId>(), std::move(lines));

        std::optional<InjectionStats> stats;
        if (doc.contains("injections")) {
            InjectionStats s = InjectionStats::uniform(grid.size(), 0.0, 0.0, 0.0);
            std::vector<char> seen(grid.size(), 0);
            for (const auto& item : doc["injections"]) {
                const BusId b = item.at("bus").get<BusId>();
                const int idx = grid.index_of(b);
                s.pp(idx) = item.at("pp").get<double>();
                s.qq(idx) = item.at("qq").get<double>();
                s.pq(idx) = item.value("pq", 0.0);
                seen[idx] = 1;
            }
            for (std::size_t b = 0; b < seen.size(); ++b) {
                if (!seen[b]) throw fail("injections missing bus " + std::to_string(grid.bus_at(static_cast<int>(b))));
            }
            s.validate(grid.size());
            stats = s;
        }
        return {name, std::move(grid), std::move(stats)};
    } catch (const json::exception& e) {
        throw fail(e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Parse) throw;
        throw Error(e.kind(), name + ": " + e.what());
    }
}

inline json grid_to_json(const Grid& grid, const std::optional<InjectionStats>& stats = std::nullopt) {
    json doc;
    doc["reference"] = grid.reference();
    json buses = json::array();
    for (const auto& b : grid.buses()) buses.push_back(b.id);
    doc["buses"] = buses;
    json lines = json::array();
    for (const auto& l : grid.lines()) {
        json item = {{"i", l.i}, {"j", l.j}, {"r", l.r}, {"x", l.x}};
        if (l.length) item["length"] = *l.length;
        lines.push_back(item);
    }
    doc["lines"] = lines;
    if (stats) {
        json inj = json::array();
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const auto idx = static_cast<Eigen::Index>(k);
            inj.push_back({{"bus", grid.bus_at(static_cast<int>(k))},
                           {"pp", stats->pp(idx)},
                           {"qq", stats->qq(idx)},
                           {"pq", stats->pq(idx)}});
        }
        doc["injections"] = inj;
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Line-data CSV (from, to, r, x)

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    return out;
}

inline std::optional<double> to_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return std::nullopt;
    return v;
}

}  // namespace detail

/// IEEE-style branch list. Bus ids may start at 0 or 1; 1-based files are
/// shifted to 0-based. `reference` is given in the file's numbering and
/// defaults to the smallest id.
inline GridCase parse_line_csv(const std::string& text, std::optional<int> reference = std::nullopt,
                               const std::string& name = "grid") {
    struct Row {
        int from, to;
        double r, x;
        std::size_t line_no;
    };
    std::vector<Row> rows;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = detail::trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const auto fields = detail::split_csv(line);
        const std::string where = name + ":" + std::to_string(line_no);
        if (fields.size() < 4) throw Error(ErrorKind::Parse, where + ": expected from,to,r,x");
        const auto f = detail::to_number(fields[0]);
        if (!f) {
            if (rows.empty()) continue;  // header
            throw Error(ErrorKind::Parse, where + ": non-numeric bus id '" + fields[0] + "'");
        }
        const auto t = detail::to_number(fields[1]);
        const auto r = detail::to_number(fields[2]);
        const auto x = detail::to_number(fields[3]);
        if (!t || !r || !x) throw Error(ErrorKind::Parse, where + ": malformed numeric field");
        if (*f != std::floor(*f) || *t != std::floor(*t)) throw Error(ErrorKind::Parse, where + ": bus ids must be integers");
        rows.push_back({static_cast<int>(*f), static_cast<int>(*t), *r, *x, line_no});
    }
    if (rows.empty()) throw Error(ErrorKind::Parse, name + ": no line rows");
    int lo = rows.front().from, hi = lo;
    for (const auto& row : rows) {
        lo = std::min({lo, row.from, row.to});
        hi = std::max({hi, row.from, row.to});
    }
    if (lo != 0 && lo != 1) throw Error(ErrorKind::Parse, name + ": bus ids must start at 0 or 1");
    std::vector<Line> lines;
    for (const auto& row : rows) {
        lines.push_back({row.from - lo, row.to - lo, row.r, row.x, std::nullopt});
        try {
            check_line_parameters(lines.back());
        } catch (const Error& e) {
            throw Error(ErrorKind::InvalidLine, name + ":" + std::to_string(row.line_no) + ": " + e.what());
        }
    }
    const int ref = reference.value_or(lo) - lo;
    try {
        return {name, Grid(static_cast<std::size_t>(hi - lo + 1), ref, std::move(lines)), std::nullopt};
    } catch (const Error& e) {
        throw Error(e.kind(), name + ": " + e.what());
    }
}

inline GridCase load_grid_file(const std::string& path, std::optional<int> reference = std::nullopt) {
    const auto text = read_file(path);
    const bool is_csv = path.size() >= 4 && path.substr(path.size() - 4) == ".csv";
    return is_csv ? parse_line_csv(text, reference, path) : parse_grid_json(text, path);
}

/// FNV-1a over a canonical rendering of the grid.
inline std::string grid_hash(const Grid& grid) {
    std::string canon = std::to_string(grid.bus_count()) + ";" + std::to_string(grid.reference());
    for (const auto& l : grid.lines()) {
        canon += ";" + std::to_string(l.i) + "," + std::to_string(l.j) + "," + format_double(l.r) + "," +
                 format_double(l.x);
    }
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

// ---------------------------------------------------------------------------
// Samples

inline std::string samples_to_csv(const SampleSet& set) {
    std::string out;
    for (std::size_t k = 0; k < set.labels.size(); ++k) {
        if (k) out += ',';
        out += to_string(set.labels[k]);
    }
    out += '\n';
    for (Eigen::Index r = 0; r < set.samples.rows(); ++r) {
        for (Eigen::Index c = 0; c < set.samples.cols(); ++c) {
            if (c) out += ',';
            out += format_double(set.samples(r, c));
        }
        out += '\n';
    }
    return out;
}

inline json samples_metadata(const SampleSet& set, const Grid& grid) {
    return {{"grid_hash", grid_hash(grid)},
            {"model_kind", to_string(set.model_kind)},
            {"seed", set.seed},
            {"n", set.count()}};
}

inline VariableLabel parse_label(const std::string& text) {
    auto parse_bus = [&](std::size_t offset) {
        BusId bus = 0;
        const char* first = text.data() + offset;
        const char* last = text.data() + text.size();
        auto [ptr, ec] = std::from_chars(first, last, bus);
        if (ec != std::errc() || ptr != last || first == last) {
            throw Error(ErrorKind::Parse, "bad variable label '" + text + "'");
        }
        return bus;
    };
    if (text.rfind("theta_", 0) == 0) return {parse_bus(6), VoltageKind::Angle};
    if (text.rfind("v_", 0) == 0) return {parse_bus(2), VoltageKind::Magnitude};
    throw Error(ErrorKind::Parse, "bad variable label '" + text + "'");
}

inline SampleSet parse_samples_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::Parse, "empty sample file");
    SampleSet set;
    for (const auto& f : detail::split_csv(detail::trim(line))) set.labels.push_back(parse_label(f));
    set.model_kind = ModelKind::DC;
    for (const auto& l : set.labels) {
        if (l.kind == VoltageKind::Magnitude) set.model_kind = ModelKind::LC;
    }
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = detail::trim(line);
        if (t.empty()) continue;
        const auto fields = detail::split_csv(t);
        if (fields.size() != set.labels.size()) {
            throw Error(ErrorKind::Parse, "sample row " + std::to_string(line_no) + " has " +
                                              std::to_string(fields.size()) + " fields");
        }
        std::vector<double> row;
        for (const auto& f : fields) {
            const auto v = detail::to_number(f);
            if (!v) throw Error(ErrorKind::Parse, "sample row " + std::to_string(line_no) + ": bad number '" + f + "'");
            row.push_back(*v);
        }
        rows.push_back(std::move(row));
    }
    set.samples.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(set.labels.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            set.samples(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return set;
}

// ---------------------------------------------------------------------------
// Concentration matrices

inline json concentration_to_json(const ConcentrationMatrix& conc, const EstimatedConcentration* est = nullptr) {
    json doc;
    doc["model"] = to_string(conc.kind);
    json labels = json::array();
    for (const auto& l : conc.labels) labels.push_back(to_string(l));
    doc["labels"] = labels;
    json rows = json::array();
    for (Eigen::Index r = 0; r < conc.matrix.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < conc.matrix.cols(); ++c) row.push_back(conc.matrix(r, c));
        rows.push_back(row);
    }
    doc["matrix"] = rows;
    if (est) {
        doc["method"] = to_string(est->method);
        doc["iterations"] = est->iterations;
        doc["converged"] = est->converged;
        doc["termination"] = est->termination;
        if (!est->objective_trace.empty()) doc["objective"] = est->objective_trace.back();
    } else {
        doc["method"] = "exact";
    }
    return doc;
}

inline ConcentrationMatrix concentration_from_json(const std::string& text) {
    try {
        const auto doc = json::parse(text);
        ConcentrationMatrix conc;
        conc.kind = doc.at("model").get<std::string>() == "lc" ? ModelKind::LC : ModelKind::DC;
        for (const auto& l : doc.at("labels")) conc.labels.push_back(parse_label(l.get<std::string>()));
        const auto& rows = doc.at("matrix");
        const auto n = static_cast<Eigen::Index>(rows.size());
        if (static_cast<std::size_t>(n) != conc.labels.size()) {
            throw Error(ErrorKind::Parse, "matrix size does not match labels");
        }
        conc.matrix.resize(n, n);
        for (Eigen::Index r = 0; r < n; ++r) {
            if (static_cast<Eigen::Index>(rows[r].size()) != n) throw Error(ErrorKind::Parse, "matrix is not square");
            for (Eigen::Index c = 0; c < n; ++c) conc.matrix(r, c) = rows[r][c].get<double>();
        }
        return conc;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("concentration file: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Topologies and certificates

inline json topology_to_json(const LearnedTopology& topo, const std::vector<BusId>& unresolved = {}) {
    json edges = json::array();
    for (const auto& e : topo.edges) edges.push_back({e.u, e.v});
    json doc = {{"algorithm", to_string(topo.algorithm)}, {"threshold", topo.threshold}, {"edges", edges}};
    if (!unresolved.empty()) doc["unresolved"] = unresolved;
    return doc;
}

inline std::string report_to_csv(const SufficiencyReport& report) {
    std::string out = "edge,theorem,satisfied,margin\n";
    for (const auto& rec : report.records) {
        out += std::to_string(rec.edge.u) + "-" + std::to_string(rec.edge.v) + "," + to_string(rec.certificate) + "," +
               (rec.satisfied ? "true" : "false") + "," + format_double(rec.margin) + "\n";
    }
    return out;
}

}  // namespace gridtopo::io
