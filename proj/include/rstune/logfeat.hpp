#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rstune/csv.hpp"
#include "rstune/simkernel/simulator.hpp"

namespace rstune::logfeat {

inline const std::vector<std::string>& mandatory_log_keys() {
    static const std::vector<std::string> keys{
        "SIMULATOR_ID",   "END_STATUS",      "ELAPSED_S",        "CPU_S",
        "MEMORY_PEAK_MB", "TIMESTEPS",       "NEWTON_CYCLES",    "LINEAR_ITERS",
        "SOLVER_FAILURES","CUTS",            "DAYS_SIMULATED",   "AVG_IMPLICITNESS",
        "MBE_OIL",        "MBE_WATER",       "MBE_GAS",          "KERNEL_ASSEMBLY_S",
        "KERNEL_LINSOLVE_S", "KERNEL_WELLS_S", "KERNEL_IO_S"};
    return keys;
}

struct LogDocument {
    std::vector<std::pair<std::string, std::string>> records;

    [[nodiscard]] bool has(const std::string& key) const {
        for (const auto& [k, _] : records)
            if (k == key) return true;
        return false;
    }

    [[nodiscard]] const std::string& get(const std::string& key) const {
        for (const auto& [k, v] : records)
            if (k == key) return v;
        throw std::runtime_error("log: missing key " + key);
    }

    [[nodiscard]] double get_num(const std::string& key) const {
        return std::stod(get(key));
    }
};

inline LogDocument emit_log(const sim::SimulationResult& r, const sim::SimulationCase&) {
    LogDocument d;
    auto put = [&d](const std::string& k, const std::string& v) { d.records.emplace_back(k, v); };
    put("SIMULATOR_ID", sim::kSimulatorId);
    put("END_STATUS", sim::to_string(r.status));
    put("ELAPSED_S", format_double(r.elapsed_s));
    put("CPU_S", format_double(r.cpu_s));
    put("MEMORY_PEAK_MB", format_double(r.memory_peak_mb));
    put("TIMESTEPS", std::to_string(r.counters.timesteps));
    put("NEWTON_CYCLES", std::to_string(r.counters.newton_cycles));
    put("LINEAR_ITERS", std::to_string(r.counters.linear_iterations));
    put("SOLVER_FAILURES", std::to_string(r.counters.solver_failures));
    put("CUTS", std::to_string(r.counters.cuts));
    put("DAYS_SIMULATED", format_double(r.days_simulated));
    put("AVG_IMPLICITNESS", format_double(r.average_implicitness));
    put("MBE_OIL", format_double(r.mbe_oil));
    put("MBE_WATER", format_double(r.mbe_water));
    put("MBE_GAS", format_double(r.mbe_gas));
    put("KERNEL_ASSEMBLY_S", format_double(r.kernel_timings.assembly));
    put("KERNEL_LINSOLVE_S", format_double(r.kernel_timings.linear_solve));
    put("KERNEL_WELLS_S", format_double(r.kernel_timings.well_management));
    put("KERNEL_IO_S", format_double(r.kernel_timings.io));
    return d;
}

inline std::string to_text(const LogDocument& d) {
    std::string out;
    for (const auto& [k, v] : d.records) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

inline LogDocument parse_log(const std::string& text) {
    LogDocument d;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        ++line_no;
        const std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::runtime_error("log: malformed line " + std::to_string(line_no));
        const std::string key = line.substr(0, eq);
        for (char c : key)
            if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_')
                throw std::runtime_error("log: malformed line " + std::to_string(line_no));
        d.records.emplace_back(key, line.substr(eq + 1));
    }

    if (!d.has("END_STATUS")) throw std::runtime_error("log: missing key END_STATUS");
    if (d.get("END_STATUS") == "NORMAL") {
        for (const auto& key : mandatory_log_keys()) {
            int count = 0;
            for (const auto& [k, _] : d.records)
                if (k == key) ++count;
            if (count == 0) throw std::runtime_error("log: missing key " + key);
            if (count > 1) throw std::runtime_error("log: duplicate key " + key);
        }
    }
    return d;
}

// ---- Curve statistics ------------------------------------------------------

inline constexpr int kHistogramBins = 10;

struct CurveStats {
    double min = 0.0, max = 0.0, mean = 0.0, std = 0.0;
    std::vector<double> histogram = std::vector<double>(kHistogramBins, 0.0);
};

inline CurveStats curve_statistics(const std::vector<double>& series) {
    if (series.empty()) throw std::runtime_error("curve_statistics: empty series");
    CurveStats s;
    s.min = *std::min_element(series.begin(), series.end());
    s.max = *std::max_element(series.begin(), series.end());
    double sum = 0.0;
    for (double v : series) sum += v;
    s.mean = sum / static_cast<double>(series.size());
    double var = 0.0;
    for (double v : series) var += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(var / static_cast<double>(series.size()));

    const double width = (s.max - s.min) / kHistogramBins;
    for (double v : series) {
        int bin = 0;
        if (width > 0.0) bin = std::min(kHistogramBins - 1, static_cast<int>((v - s.min) / width));
        s.histogram[bin] += 1.0;
    }
    return s;
}

// ---- Feature vector --------------------------------------------------------

struct FeatureVector {
    double active_blocks = 0.0;
    double cuts = 0.0;
    double days_simulated = 0.0;
    double doms = 1.0;
    double newton_cycles = 0.0;
    double solver_failures = 0.0;
    double timesteps = 0.0;
    double solver_iterations = 0.0;
    double total_blocks = 0.0;
    double wells = 0.0;
    double et_per_timestep = 0.0;
    CurveStats perm_x_stats, perm_y_stats, poro_stats;
    CurveStats gp_stats, np_stats, wp_stats;
    double avg_implicitness = 1.0;
    double kernel_assembly_s = 0.0, kernel_linsolve_s = 0.0, kernel_wells_s = 0.0,
           kernel_io_s = 0.0;
    double cpu_time = 0.0;
    double elapsed_time = 0.0;
    double end_status_normal = 0.0, end_status_abnormal = 0.0, end_status_timeout = 0.0;
    double mbe_o = 0.0, mbe_w = 0.0, mbe_g = 0.0;
    double sim_horizon_years = 0.0;
    double simulator_id = 1.0;
};

inline void flatten_stats(const CurveStats& s, std::vector<double>& out) {
    out.push_back(s.min);
    out.push_back(s.max);
    out.push_back(s.mean);
    out.push_back(s.std);
    out.insert(out.end(), s.histogram.begin(), s.histogram.end());
}

inline constexpr std::size_t kFeatureLength = 11 + 6 * (4 + kHistogramBins) + 1 + 4 + 2 + 3 + 3 + 1 + 1;

inline std::vector<double> flatten(const FeatureVector& f) {
    std::vector<double> out;
    out.reserve(kFeatureLength);
    out.push_back(f.active_blocks);
    out.push_back(f.cuts);
    out.push_back(f.days_simulated);
    out.push_back(f.doms);
    out.push_back(f.newton_cycles);
    out.push_back(f.solver_failures);
    out.push_back(f.timesteps);
    out.push_back(f.solver_iterations);
    out.push_back(f.total_blocks);
    out.push_back(f.wells);
    out.push_back(f.et_per_timestep);
    flatten_stats(f.perm_x_stats, out);
    flatten_stats(f.perm_y_stats, out);
    flatten_stats(f.poro_stats, out);
    flatten_stats(f.gp_stats, out);
    flatten_stats(f.np_stats, out);
    flatten_stats(f.wp_stats, out);
    out.push_back(f.avg_implicitness);
    out.push_back(f.kernel_assembly_s);
    out.push_back(f.kernel_linsolve_s);
    out.push_back(f.kernel_wells_s);
    out.push_back(f.kernel_io_s);
    out.push_back(f.cpu_time);
    out.push_back(f.elapsed_time);
    out.push_back(f.end_status_normal);
    out.push_back(f.end_status_abnormal);
    out.push_back(f.end_status_timeout);
    out.push_back(f.mbe_o);
    out.push_back(f.mbe_w);
    out.push_back(f.mbe_g);
    out.push_back(f.sim_horizon_years);
    out.push_back(f.simulator_id);
    return out;
}

inline std::vector<std::string> feature_names() {
    std::vector<std::string> names{"active_blocks", "cuts",          "days_simulated",
                                   "doms",          "newton_cycles", "solver_failures",
                                   "timesteps",     "solver_iterations", "total_blocks",
                                   "wells",         "et_per_timestep"};
    for (const std::string& base :
         {"perm_x", "perm_y", "poro", "gp", "np", "wp"}) {
        for (const std::string& stat : {"min", "max", "mean", "std"}) names.push_back(base + "_" + stat);
        for (int b = 0; b < kHistogramBins; ++b)
            names.push_back(base + "_hist_" + std::to_string(b));
    }
    names.insert(names.end(),
                 {"avg_implicitness", "kernel_assembly_s", "kernel_linsolve_s", "kernel_wells_s",
                  "kernel_io_s", "cpu_time", "elapsed_time", "end_status_normal",
                  "end_status_abnormal", "end_status_timeout", "mbe_o", "mbe_w", "mbe_g",
                  "sim_horizon_years", "simulator_id"});
    return names;
}

/// Builds the feature vector from a parsed log, the case description, and the
/// exported production curves.
inline FeatureVector extract_features(const LogDocument& log, const sim::SimulationCase& cs,
                                      const CsvTable& curves) {
    FeatureVector f;
    f.timesteps = log.get_num("TIMESTEPS");
    if (f.timesteps <= 0.0) throw std::runtime_error("extract_features: log reports no completed timesteps");

    f.active_blocks = cs.grid.active_cells();
    f.total_blocks = cs.grid.total_cells();
    f.wells = static_cast<double>(cs.wells.size());
    f.cuts = log.get_num("CUTS");
    f.days_simulated = log.get_num("DAYS_SIMULATED");
    f.doms = 1.0;
    f.newton_cycles = log.get_num("NEWTON_CYCLES");
    f.solver_failures = log.get_num("SOLVER_FAILURES");
    f.solver_iterations = log.get_num("LINEAR_ITERS");
    f.elapsed_time = log.get_num("ELAPSED_S");
    f.cpu_time = log.get_num("CPU_S");
    f.et_per_timestep = f.elapsed_time / f.timesteps;
    f.avg_implicitness = log.get_num("AVG_IMPLICITNESS");
    f.kernel_assembly_s = log.get_num("KERNEL_ASSEMBLY_S");
    f.kernel_linsolve_s = log.get_num("KERNEL_LINSOLVE_S");
    f.kernel_wells_s = log.get_num("KERNEL_WELLS_S");
    f.kernel_io_s = log.get_num("KERNEL_IO_S");

    const std::string status = log.get("END_STATUS");
    f.end_status_normal = status == "NORMAL" ? 1.0 : 0.0;
    f.end_status_abnormal = status == "ABNORMAL" ? 1.0 : 0.0;
    f.end_status_timeout = status == "TIMEOUT" ? 1.0 : 0.0;

    f.mbe_o = log.get_num("MBE_OIL");
    f.mbe_w = log.get_num("MBE_WATER");
    f.mbe_g = log.get_num("MBE_GAS");
    f.sim_horizon_years = cs.horizon_days / 365.0;
    f.simulator_id = 1.0;

    std::vector<double> perm_x, perm_y, poro;
    for (int c = 0; c < cs.grid.total_cells(); ++c) {
        if (!cs.grid.active_mask[c]) continue;
        perm_x.push_back(cs.grid.perm_x[c]);
        perm_y.push_back(cs.grid.perm_y[c]);
        poro.push_back(cs.grid.porosity[c]);
    }
    f.perm_x_stats = curve_statistics(perm_x);
    f.perm_y_stats = curve_statistics(perm_y);
    f.poro_stats = curve_statistics(poro);

    const int np_col = curves.column("FOPT");
    const int wp_col = curves.column("FWPT");
    if (np_col < 0 || wp_col < 0)
        throw std::runtime_error("extract_features: curves table lacks field cumulatives");
    std::vector<double> np, wp;
    np.reserve(curves.nrows());
    wp.reserve(curves.nrows());
    for (const auto& row : curves.rows) {
        np.push_back(std::stod(row[np_col]));
        wp.push_back(std::stod(row[wp_col]));
    }
    if (np.empty()) throw std::runtime_error("extract_features: curves table has no rows");
    f.np_stats = curve_statistics(np);
    f.wp_stats = curve_statistics(wp);
    f.gp_stats = curve_statistics(std::vector<double>(np.size(), 0.0));
    return f;
}

/// Shortcut from an in-memory result; identical to running the result through
/// emit_log and extract_features.
inline FeatureVector features_from_result(const sim::SimulationResult& r,
                                          const sim::SimulationCase& cs) {
    return extract_features(emit_log(r, cs), cs, r.curves);
}

struct DerivedMetrics {
    double ni_per_ts = 0.0;
    double li_per_ni = 0.0;
};

inline DerivedMetrics derived_metrics(const FeatureVector& f) {
    if (f.timesteps <= 0.0) throw std::runtime_error("derived_metrics: timesteps is zero");
    if (f.newton_cycles <= 0.0) throw std::runtime_error("derived_metrics: newton_cycles is zero");
    return {f.newton_cycles / f.timesteps, f.solver_iterations / f.newton_cycles};
}

}  // namespace rstune::logfeat
