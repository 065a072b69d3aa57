#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rstune/searchspace.hpp"

#include <nlohmann/json.hpp>

namespace rstune::sim {

/// m³/day resulting from (mD · m²) / (cP · m) · bar.
inline constexpr double kDarcy = 8.527017312e-3;

/// Cap that stands in for an unlimited cut budget.
inline constexpr int kUnlimitedCuts = 10000;

struct GridModel {
    int nx = 1, ny = 1;
    double dx = 50.0, dy = 50.0, dz = 10.0;  // m
    std::vector<double> perm_x, perm_y;      // mD, row-major nx*ny
    std::vector<double> porosity;            // fraction
    std::vector<std::uint8_t> active_mask;   // 1 = active
    double depth = 0.0;                      // m

    [[nodiscard]] int total_cells() const { return nx * ny; }
    [[nodiscard]] int cell(int i, int j) const { return j * nx + i; }

    [[nodiscard]] int active_cells() const {
        int n = 0;
        for (auto a : active_mask) n += a ? 1 : 0;
        return n;
    }

    void check() const {
        if (nx < 1 || ny < 1) throw std::runtime_error("grid: nx and ny must be positive");
        if (dx <= 0 || dy <= 0 || dz <= 0) throw std::runtime_error("grid: cell sizes must be positive");
        const auto n = static_cast<std::size_t>(total_cells());
        if (perm_x.size() != n || perm_y.size() != n || porosity.size() != n ||
            active_mask.size() != n)
            throw std::runtime_error("grid: field maps must have nx*ny entries");
        for (std::size_t c = 0; c < n; ++c) {
            if (!active_mask[c]) continue;
            if (!(perm_x[c] > 0.0) || !(perm_y[c] > 0.0))
                throw std::runtime_error("grid: permeability must be positive on active cells");
            if (!(porosity[c] > 0.0) || !(porosity[c] < 1.0))
                throw std::runtime_error("grid: porosity must lie in (0,1) on active cells");
        }
        if (active_cells() == 0) throw std::runtime_error("grid: no active cells");
    }
};

/// Slightly compressible oil-water description with Corey relative
/// permeabilities.
struct FluidModel {
    double mu_o = 2.0, mu_w = 0.5;              // cP
    double c_o = 1e-4, c_w = 4e-5, c_r = 5e-5;  // 1/bar
    double n_o = 2.0, n_w = 2.0;                // Corey exponents
    double swc = 0.1, sor = 0.15;               // end-point saturations
    double krw_end = 0.6, kro_end = 0.9;
    double p_ref = 200.0;                       // bar

    void check() const {
        if (!(mu_o > 0.0) || !(mu_w > 0.0)) throw std::runtime_error("fluid: viscosities must be positive");
        if (c_o < 0.0 || c_w < 0.0 || c_r < 0.0)
            throw std::runtime_error("fluid: compressibilities must be non-negative");
        if (n_o < 1.0 || n_w < 1.0) throw std::runtime_error("fluid: Corey exponents must be >= 1");
        for (double e : {swc, sor, krw_end, kro_end})
            if (e < 0.0 || e > 1.0) throw std::runtime_error("fluid: endpoints must lie in [0,1]");
        if (swc + sor >= 1.0) throw std::runtime_error("fluid: swc + sor must be below 1");
    }

    /// Surface volume per reservoir volume, linearized around p_ref.
    [[nodiscard]] double b_o(double p) const { return 1.0 + c_o * (p - p_ref); }
    [[nodiscard]] double b_w(double p) const { return 1.0 + c_w * (p - p_ref); }

    [[nodiscard]] double mobile_span() const { return 1.0 - swc - sor; }

    [[nodiscard]] double krw(double sw) const {
        const double se = std::clamp((sw - swc) / mobile_span(), 0.0, 1.0);
        return krw_end * std::pow(se, n_w);
    }
    [[nodiscard]] double kro(double sw) const {
        const double se = std::clamp((sw - swc) / mobile_span(), 0.0, 1.0);
        return kro_end * std::pow(1.0 - se, n_o);
    }
    [[nodiscard]] double dkrw_dsw(double sw) const {
        const double span = mobile_span();
        const double se = (sw - swc) / span;
        if (se <= 0.0 || se >= 1.0) return 0.0;
        return krw_end * n_w * std::pow(se, n_w - 1.0) / span;
    }
    [[nodiscard]] double dkro_dsw(double sw) const {
        const double span = mobile_span();
        const double se = (sw - swc) / span;
        if (se <= 0.0 || se >= 1.0) return 0.0;
        return -kro_end * n_o * std::pow(1.0 - se, n_o - 1.0) / span;
    }
};

enum class WellKind { injector, producer };
enum class WellControlKind { rate, bhp };

struct WellControl {
    WellControlKind kind = WellControlKind::rate;
    double value = 0.0;  // m³/day for rate, bar for bhp
};

struct WellInterval {
    double start_day = 0.0;
    double end_day = 0.0;
    WellControl control;
};

struct WellSpec {
    std::string name;
    int cell = 0;
    WellKind kind = WellKind::injector;
    double well_index = 50.0;  // mD·m, Peaceman-style connection factor
    std::vector<WellInterval> schedule;

    [[nodiscard]] std::optional<WellControl> control_at(double day) const {
        for (const auto& iv : schedule)
            if (day >= iv.start_day && day < iv.end_day) return iv.control;
        return std::nullopt;
    }

    void check(int total_cells, double horizon_days) const {
        if (name.empty()) throw std::runtime_error("well with empty name");
        if (cell < 0 || cell >= total_cells)
            throw std::runtime_error("well " + name + ": cell index out of range");
        if (well_index <= 0.0) throw std::runtime_error("well " + name + ": well index must be positive");
        for (const auto& iv : schedule) {
            if (!(iv.start_day < iv.end_day))
                throw std::runtime_error("well " + name + ": empty schedule interval");
            if (iv.start_day < 0.0 || iv.end_day > horizon_days + 1e-9)
                throw std::runtime_error("well " + name + ": interval outside horizon");
            if (iv.control.kind == WellControlKind::rate && iv.control.value < 0.0)
                throw std::runtime_error("well " + name + ": rate must be non-negative");
        }
        for (std::size_t a = 0; a < schedule.size(); ++a)
            for (std::size_t b = a + 1; b < schedule.size(); ++b) {
                const auto& x = schedule[a];
                const auto& y = schedule[b];
                if (x.start_day < y.end_day && y.start_day < x.end_day)
                    throw std::runtime_error("well " + name + ": overlapping schedule intervals");
            }
    }
};

enum class Ordering { natural, red_black, rcm };
enum class SolverKind { direct, iterative };
enum class Formulation { fully_implicit, impes };

struct NumericalControls {
    double dt_min = 1e-3, dt_max = 365.0;  // days
    int newton_max = 10;
    int lin_iter_max = 10;
    double lin_tol = 1e-4;
    int north_restart = 30;
    int ncuts_max = kUnlimitedCuts;
    double norm_press = 30.0, maxchange_press = 60.0;   // bar
    double norm_satur = 0.1, maxchange_satur = 0.1;     // fraction
    Ordering ordering = Ordering::red_black;
    SolverKind solver_kind = SolverKind::iterative;
    bool pivot_stab = false;
    Formulation formulation = Formulation::fully_implicit;

    void check() const {
        if (!(dt_min > 0.0) || !(dt_min <= dt_max))
            throw std::runtime_error("controls: need 0 < dt_min <= dt_max");
        if (newton_max < 1 || lin_iter_max < 1 || north_restart < 1 || ncuts_max < 1)
            throw std::runtime_error("controls: iteration counts must be >= 1");
        if (lin_tol < 1e-12 || lin_tol > 1e-2)
            throw std::runtime_error("controls: lin_tol outside sane range");
        if (norm_press > maxchange_press || norm_satur > maxchange_satur)
            throw std::runtime_error("controls: norm targets must not exceed maxchange limits");
        if (norm_press <= 0.0 || norm_satur <= 0.0)
            throw std::runtime_error("controls: norm targets must be positive");
    }
};

inline std::string to_string(Ordering o) {
    switch (o) {
        case Ordering::natural: return "natural";
        case Ordering::red_black: return "red-black";
        case Ordering::rcm: return "rcm";
    }
    return "?";
}
inline std::string to_string(SolverKind s) {
    return s == SolverKind::direct ? "direct" : "iterative";
}
inline std::string to_string(Formulation f) {
    return f == Formulation::fully_implicit ? "fully-implicit" : "impes";
}

/// Maps a point of the builtin tuning space onto solver controls.
inline NumericalControls controls_from_sample(const space::ConfigSample& s) {
    NumericalControls c;
    c.dt_max = s.real_at("dt_max");
    c.dt_min = s.real_at("dt_min");
    c.lin_iter_max = static_cast<int>(s.int_at("lin_iter_max"));
    c.maxchange_press = s.real_at("maxchange_press");
    c.maxchange_satur = s.real_at("maxchange_satur");
    const std::string& cuts = s.cat_at("ncuts_max");
    c.ncuts_max = cuts == "unlimited" ? kUnlimitedCuts : std::stoi(cuts);
    c.newton_max = static_cast<int>(s.int_at("newton_max"));
    c.norm_press = s.real_at("norm_press");
    c.norm_satur = s.real_at("norm_satur");
    c.north_restart = static_cast<int>(s.int_at("north_restart"));
    c.pivot_stab = s.cat_at("pivot_stab") == "on";
    c.lin_tol = s.real_at("lin_tol");
    c.solver_kind = s.cat_at("solver_kind") == "direct" ? SolverKind::direct : SolverKind::iterative;
    const std::string& ord = s.cat_at("ordering");
    c.ordering = ord == "natural" ? Ordering::natural
                                  : (ord == "rcm" ? Ordering::rcm : Ordering::red_black);
    c.formulation = s.cat_at("formulation") == "impes" ? Formulation::impes
                                                       : Formulation::fully_implicit;
    c.check();
    return c;
}

struct SimulationCase {
    GridModel grid;
    FluidModel fluid;
    std::vector<WellSpec> wells;
    NumericalControls controls;
    double horizon_days = 360.0;
    double report_interval_days = 30.0;
    std::vector<double> p_init;   // bar, per cell
    std::vector<double> sw_init;  // fraction, per cell

    void check() const {
        grid.check();
        fluid.check();
        controls.check();
        if (!(horizon_days > 0.0)) throw std::runtime_error("case: horizon_days must be positive");
        if (!(report_interval_days > 0.0) || report_interval_days > horizon_days + 1e-9)
            throw std::runtime_error("case: report interval must lie in (0, horizon]");
        const auto n = static_cast<std::size_t>(grid.total_cells());
        if (p_init.size() != n || sw_init.size() != n)
            throw std::runtime_error("case: initial fields must have nx*ny entries");
        for (std::size_t c = 0; c < n; ++c) {
            if (!grid.active_mask[c]) continue;
            if (sw_init[c] < 0.0 || sw_init[c] > 1.0)
                throw std::runtime_error("case: initial water saturation outside [0,1]");
        }
        for (const auto& w : wells) {
            w.check(grid.total_cells(), horizon_days);
            if (!grid.active_mask[w.cell])
                throw std::runtime_error("well " + w.name + ": completed in an inactive cell");
        }
    }
};

// ---- JSON serialization -------------------------------------------------

inline nlohmann::json case_to_json(const SimulationCase& cs) {
    nlohmann::json j;
    j["grid"] = {{"nx", cs.grid.nx},
                 {"ny", cs.grid.ny},
                 {"dx", cs.grid.dx},
                 {"dy", cs.grid.dy},
                 {"dz", cs.grid.dz},
                 {"depth", cs.grid.depth},
                 {"perm_x", cs.grid.perm_x},
                 {"perm_y", cs.grid.perm_y},
                 {"porosity", cs.grid.porosity},
                 {"active_mask", cs.grid.active_mask}};
    j["fluid"] = {{"mu_o", cs.fluid.mu_o},   {"mu_w", cs.fluid.mu_w},
                  {"c_o", cs.fluid.c_o},     {"c_w", cs.fluid.c_w},
                  {"c_r", cs.fluid.c_r},     {"n_o", cs.fluid.n_o},
                  {"n_w", cs.fluid.n_w},     {"swc", cs.fluid.swc},
                  {"sor", cs.fluid.sor},     {"krw_end", cs.fluid.krw_end},
                  {"kro_end", cs.fluid.kro_end}, {"p_ref", cs.fluid.p_ref}};
    j["wells"] = nlohmann::json::array();
    for (const auto& w : cs.wells) {
        nlohmann::json wj;
        wj["name"] = w.name;
        wj["cell"] = w.cell;
        wj["kind"] = w.kind == WellKind::injector ? "injector" : "producer";
        wj["well_index"] = w.well_index;
        wj["schedule"] = nlohmann::json::array();
        for (const auto& iv : w.schedule)
            wj["schedule"].push_back({{"start_day", iv.start_day},
                                      {"end_day", iv.end_day},
                                      {"control", iv.control.kind == WellControlKind::rate ? "rate" : "bhp"},
                                      {"value", iv.control.value}});
        j["wells"].push_back(wj);
    }
    const auto& c = cs.controls;
    j["controls"] = {{"dt_min", c.dt_min},
                     {"dt_max", c.dt_max},
                     {"newton_max", c.newton_max},
                     {"lin_iter_max", c.lin_iter_max},
                     {"lin_tol", c.lin_tol},
                     {"north_restart", c.north_restart},
                     {"ncuts_max", c.ncuts_max},
                     {"norm_press", c.norm_press},
                     {"maxchange_press", c.maxchange_press},
                     {"norm_satur", c.norm_satur},
                     {"maxchange_satur", c.maxchange_satur},
                     {"ordering", to_string(c.ordering)},
                     {"solver_kind", to_string(c.solver_kind)},
                     {"pivot_stab", c.pivot_stab ? "on" : "off"},
                     {"formulation", to_string(c.formulation)}};
    j["horizon_days"] = cs.horizon_days;
    j["report_interval_days"] = cs.report_interval_days;
    j["p_init"] = cs.p_init;
    j["sw_init"] = cs.sw_init;
    return j;
}

inline SimulationCase case_from_json(const nlohmann::json& j) {
    SimulationCase cs;
    const auto& g = j.at("grid");
    cs.grid.nx = g.at("nx").get<int>();
    cs.grid.ny = g.at("ny").get<int>();
    cs.grid.dx = g.at("dx").get<double>();
    cs.grid.dy = g.at("dy").get<double>();
    cs.grid.dz = g.at("dz").get<double>();
    cs.grid.depth = g.value("depth", 0.0);
    cs.grid.perm_x = g.at("perm_x").get<std::vector<double>>();
    cs.grid.perm_y = g.at("perm_y").get<std::vector<double>>();
    cs.grid.porosity = g.at("porosity").get<std::vector<double>>();
    cs.grid.active_mask = g.at("active_mask").get<std::vector<std::uint8_t>>();

    const auto& f = j.at("fluid");
    cs.fluid.mu_o = f.at("mu_o").get<double>();
    cs.fluid.mu_w = f.at("mu_w").get<double>();
    cs.fluid.c_o = f.at("c_o").get<double>();
    cs.fluid.c_w = f.at("c_w").get<double>();
    cs.fluid.c_r = f.at("c_r").get<double>();
    cs.fluid.n_o = f.at("n_o").get<double>();
    cs.fluid.n_w = f.at("n_w").get<double>();
    cs.fluid.swc = f.at("swc").get<double>();
    cs.fluid.sor = f.at("sor").get<double>();
    cs.fluid.krw_end = f.at("krw_end").get<double>();
    cs.fluid.kro_end = f.at("kro_end").get<double>();
    cs.fluid.p_ref = f.at("p_ref").get<double>();

    for (const auto& wj : j.at("wells")) {
        WellSpec w;
        w.name = wj.at("name").get<std::string>();
        w.cell = wj.at("cell").get<int>();
        w.kind = wj.at("kind").get<std::string>() == "injector" ? WellKind::injector
                                                                : WellKind::producer;
        w.well_index = wj.at("well_index").get<double>();
        for (const auto& ij : wj.at("schedule")) {
            WellInterval iv;
            iv.start_day = ij.at("start_day").get<double>();
            iv.end_day = ij.at("end_day").get<double>();
            iv.control.kind = ij.at("control").get<std::string>() == "rate"
                                  ? WellControlKind::rate
                                  : WellControlKind::bhp;
            iv.control.value = ij.at("value").get<double>();
            w.schedule.push_back(iv);
        }
        cs.wells.push_back(std::move(w));
    }

    const auto& c = j.at("controls");
    cs.controls.dt_min = c.at("dt_min").get<double>();
    cs.controls.dt_max = c.at("dt_max").get<double>();
    cs.controls.newton_max = c.at("newton_max").get<int>();
    cs.controls.lin_iter_max = c.at("lin_iter_max").get<int>();
    cs.controls.lin_tol = c.at("lin_tol").get<double>();
    cs.controls.north_restart = c.at("north_restart").get<int>();
    cs.controls.ncuts_max = c.at("ncuts_max").get<int>();
    cs.controls.norm_press = c.at("norm_press").get<double>();
    cs.controls.maxchange_press = c.at("maxchange_press").get<double>();
    cs.controls.norm_satur = c.at("norm_satur").get<double>();
    cs.controls.maxchange_satur = c.at("maxchange_satur").get<double>();
    const std::string ord = c.at("ordering").get<std::string>();
    cs.controls.ordering = ord == "natural" ? Ordering::natural
                                            : (ord == "rcm" ? Ordering::rcm : Ordering::red_black);
    cs.controls.solver_kind = c.at("solver_kind").get<std::string>() == "direct"
                                  ? SolverKind::direct
                                  : SolverKind::iterative;
    cs.controls.pivot_stab = c.at("pivot_stab").get<std::string>() == "on";
    cs.controls.formulation = c.at("formulation").get<std::string>() == "impes"
                                  ? Formulation::impes
                                  : Formulation::fully_implicit;

    cs.horizon_days = j.at("horizon_days").get<double>();
    cs.report_interval_days = j.at("report_interval_days").get<double>();
    cs.p_init = j.at("p_init").get<std::vector<double>>();
    cs.sw_init = j.at("sw_init").get<std::vector<double>>();
    cs.check();
    return cs;
}

inline SimulationCase load_case(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open case file " + path);
    nlohmann::json j;
    is >> j;
    return case_from_json(j);
}

inline void save_case(const SimulationCase& cs, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << case_to_json(cs).dump(2) << '\n';
}

}  // namespace rstune::sim
