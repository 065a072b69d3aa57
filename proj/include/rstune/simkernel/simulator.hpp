#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "rstune/csv.hpp"
#include "rstune/simkernel/assembly.hpp"
#include "rstune/simkernel/linear.hpp"
#include "rstune/simkernel/model.hpp"

#include <nlohmann/json.hpp>

namespace rstune::sim {

inline constexpr const char* kSimulatorId = "rstune-fv2p-1.0";

enum class RunStatus { normal, abnormal, timeout };

inline std::string to_string(RunStatus s) {
    switch (s) {
        case RunStatus::normal: return "NORMAL";
        case RunStatus::abnormal: return "ABNORMAL";
        case RunStatus::timeout: return "TIMEOUT";
    }
    return "?";
}

inline RunStatus run_status_from_string(const std::string& s) {
    if (s == "NORMAL") return RunStatus::normal;
    if (s == "ABNORMAL") return RunStatus::abnormal;
    if (s == "TIMEOUT") return RunStatus::timeout;
    throw std::runtime_error("unknown run status: " + s);
}

/// Time is metered deterministically: every kernel charges a fixed cost per
/// unit of work, so identical runs report identical timings regardless of
/// machine load or scheduling. Measured wall time is reported separately.
struct CostModel {
    double asm_fi_cell = 2.4e-7;
    double asm_impes_cell = 1.0e-7;
    double ilu_nnz = 1.0e-8;
    double gmres_nnz_iter = 4.0e-9;
    double gmres_basis_iter = 8.0e-9;
    double direct_n15 = 6.0e-9;
    double direct_nnz = 2.0e-8;
    double well_eval = 3.0e-7;
    double io_value = 2.0e-6;
    double io_run = 5.0e-4;
    double cycle_overhead = 4.0e-6;
    double attempt_overhead = 1.5e-5;
    double run_overhead = 2.0e-3;
};

struct KernelTimings {
    double assembly = 0.0;
    double linear_solve = 0.0;
    double well_management = 0.0;
    double io = 0.0;

    [[nodiscard]] double sum() const { return assembly + linear_solve + well_management + io; }
};

struct RunCounters {
    long long timesteps = 0;
    long long newton_cycles = 0;
    long long linear_iterations = 0;
    long long solver_failures = 0;
    long long cuts = 0;
};

struct SimulationResult {
    RunStatus status = RunStatus::normal;
    double elapsed_s = 0.0;      // metered seconds
    double cpu_s = 0.0;
    double wall_clock_s = 0.0;   // measured, excluded from determinism contracts
    double memory_peak_mb = 0.0;
    RunCounters counters;
    KernelTimings kernel_timings;
    CsvTable curves;       // day, per-well and field cumulatives
    CsvTable fip_series;   // day, FIP_OIL, FIP_WATER, FIP_GAS
    double mbe_oil = 0.0, mbe_water = 0.0, mbe_gas = 0.0;  // percent
    double average_implicitness = 1.0;
    double days_simulated = 0.0;
    std::string abort_reason;
};

struct StepStats {
    double dt_used = 0.0;
    double dp_max = 0.0;
    double ds_max = 0.0;
    int newton_cycles = 0;
    int linear_iterations = 0;
    int solver_failures = 0;
    int cuts = 0;
    bool converged = false;
};

/// Eq-style balance check: { fip / (ofip - cum_prod + cum_inj) - 1 } * 100.
inline double compute_mbe(double fip, double ofip, double cum_prod, double cum_inj) {
    const double denom = ofip - cum_prod + cum_inj;
    if (denom == 0.0) throw std::runtime_error("compute_mbe: zero denominator");
    return (fip / denom - 1.0) * 100.0;
}

/// Growth heuristic driven by the observed changes of the last accepted step.
inline double select_timestep(double prev_dt, double observed_dp, double observed_ds,
                              const NumericalControls& c) {
    const double inf = std::numeric_limits<double>::infinity();
    const double rp = observed_dp > 0.0 ? c.norm_press / observed_dp : inf;
    const double rs = observed_ds > 0.0 ? c.norm_satur / observed_ds : inf;
    const double factor = std::min({rp, rs, 2.0});
    return std::clamp(prev_dt * factor, c.dt_min, c.dt_max);
}

class Simulator {
public:
    explicit Simulator(SimulationCase cs) : cs_(std::move(cs)) {
        cs_.check();
        asmb_ = std::make_unique<Assembler>(cs_);
        const auto& topo = asmb_->topology();
        cell_perm_ = make_cell_ordering(cs_.controls.ordering, topo.n_active, topo.adj,
                                        topo.ij_of_act);
        const int block = cs_.controls.formulation == Formulation::fully_implicit ? 2 : 1;
        unknown_perm_ = expand_ordering(cell_perm_, block);
    }

    [[nodiscard]] const Assembler& assembler() const { return *asmb_; }
    [[nodiscard]] const SimulationCase& sim_case() const { return cs_; }

    SimulationResult run(double wall_timeout_s) {
        const auto wall_start = std::chrono::steady_clock::now();
        SimulationResult res;
        res.curves = make_curves_table();
        res.fip_series.header = {"day", "FIP_OIL", "FIP_WATER", "FIP_GAS"};

        State state = asmb_->initial_state();
        asmb_->fluid_in_place(state, ofip_o_, ofip_w_);
        cum_ = {};
        clock_ = {};
        implicit_cell_steps_ = 0;
        total_cell_steps_ = 0;
        clock_.io += cost_.io_run;

        record_rows(res, 0.0, state);

        const auto boundaries = make_boundaries();
        double t = 0.0;
        double dt_nominal = std::clamp(1.0, cs_.controls.dt_min, cs_.controls.dt_max);
        bool aborted = false;

        while (t < cs_.horizon_days - 1e-9) {
            if (elapsed_virtual() > wall_timeout_s) {
                res.status = RunStatus::timeout;
                res.abort_reason = "metered time exceeded " + format_double(wall_timeout_s) + " s";
                aborted = true;
                break;
            }
            const double next_b = *boundaries.upper_bound(t + 1e-9);
            const double dt_try = std::min(dt_nominal, next_b - t);

            StepStats stats;
            const bool timed_out = !solve_timestep(state, dt_try, t, wall_timeout_s, stats);
            res.counters.newton_cycles += stats.newton_cycles;
            res.counters.linear_iterations += stats.linear_iterations;
            res.counters.solver_failures += stats.solver_failures;
            res.counters.cuts += stats.cuts;
            if (timed_out) {
                res.status = RunStatus::timeout;
                res.abort_reason = "metered time exceeded " + format_double(wall_timeout_s) + " s";
                aborted = true;
                break;
            }
            if (!stats.converged) {
                res.status = RunStatus::abnormal;
                res.abort_reason = "timestep cut limit exhausted at day " + format_double(t) +
                                   " (dt = " + format_double(stats.dt_used) + ")";
                aborted = true;
                break;
            }

            res.counters.timesteps += 1;
            t += stats.dt_used;
            accumulate_production(state, t, stats.dt_used);

            const int n = asmb_->topology().n_active;
            total_cell_steps_ += n;
            if (cs_.controls.formulation == Formulation::fully_implicit)
                implicit_cell_steps_ += n;

            if (std::abs(t - next_b) < 1e-9 && is_report_day(next_b)) record_rows(res, t, state);

            dt_nominal = select_timestep(std::clamp(stats.dt_used, cs_.controls.dt_min, cs_.controls.dt_max),
                                         stats.dp_max, stats.ds_max, cs_.controls);
        }

        if (!aborted) res.status = RunStatus::normal;
        res.days_simulated = t;

        double fip_o = 0.0, fip_w = 0.0;
        asmb_->fluid_in_place(state, fip_o, fip_w);
        // an absent phase balances trivially; only a phase that is present
        // with a vanishing denominator is a genuine error
        const auto mbe_or_zero = [](double fip, double ofip, double prod, double inj) {
            if (ofip - prod + inj == 0.0 && fip == 0.0) return 0.0;
            return compute_mbe(fip, ofip, prod, inj);
        };
        res.mbe_oil = mbe_or_zero(fip_o, ofip_o_, cum_.oil_prod, cum_.oil_inj);
        res.mbe_water = mbe_or_zero(fip_w, ofip_w_, cum_.water_prod, cum_.water_inj);
        res.mbe_gas = 0.0;

        res.average_implicitness =
            total_cell_steps_ > 0
                ? static_cast<double>(implicit_cell_steps_) / static_cast<double>(total_cell_steps_)
                : (cs_.controls.formulation == Formulation::fully_implicit ? 1.0 : 0.0);

        res.kernel_timings = clock_;
        res.elapsed_s = elapsed_virtual();
        res.cpu_s = res.elapsed_s;
        res.memory_peak_mb = model_memory_mb();
        res.wall_clock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
        return res;
    }

    /// One timestep with the internal cut loop. Returns false when the
    /// metered clock passes the timeout mid-step; stats.converged reports
    /// whether the step was accepted.
    bool solve_timestep(State& state, double dt_in, double day, double wall_timeout_s,
                        StepStats& stats) {
        stats = {};
        double dt = dt_in;
        const auto& c = cs_.controls;

        for (;;) {
            clock_.overhead += cost_.attempt_overhead;
            StepAttempt att = attempt_step(state, dt, day);
            stats.newton_cycles += att.newton_cycles;
            stats.linear_iterations += att.linear_iterations;
            stats.solver_failures += att.solver_failures;

            if (att.accepted) {
                state = std::move(att.result);
                stats.dt_used = dt;
                stats.dp_max = att.dp_max;
                stats.ds_max = att.ds_max;
                stats.converged = true;
                return true;
            }
            if (elapsed_virtual() > wall_timeout_s) return false;
            if (dt <= c.dt_min * (1.0 + 1e-12) || stats.cuts >= c.ncuts_max) {
                stats.dt_used = dt;
                stats.converged = false;
                return true;
            }
            dt = std::max(dt * 0.5, c.dt_min);
            stats.cuts += 1;
        }
    }

    static double select_timestep_for(double prev_dt, double dp, double ds,
                                      const NumericalControls& c) {
        return select_timestep(prev_dt, dp, ds, c);
    }

private:
    struct Cumulatives {
        double oil_prod = 0.0, oil_inj = 0.0;
        double water_prod = 0.0, water_inj = 0.0;
        std::vector<double> well_oil_prod, well_water_prod, well_water_inj;
    };

    struct VirtualClock {
        double assembly = 0.0;
        double linear_solve = 0.0;
        double well_management = 0.0;
        double io = 0.0;
        double overhead = 0.0;

        operator KernelTimings() const { return {assembly, linear_solve, well_management, io}; }
    };

    struct StepAttempt {
        bool accepted = false;
        State result;
        double dp_max = 0.0, ds_max = 0.0;
        int newton_cycles = 0;
        int linear_iterations = 0;
        int solver_failures = 0;
    };

    [[nodiscard]] double elapsed_virtual() const {
        return clock_.assembly + clock_.linear_solve + clock_.well_management + clock_.io +
               clock_.overhead;
    }

    [[nodiscard]] std::set<double> make_boundaries() const {
        std::set<double> b;
        for (double d = cs_.report_interval_days; d < cs_.horizon_days - 1e-9;
             d += cs_.report_interval_days)
            b.insert(d);
        b.insert(cs_.horizon_days);
        for (const auto& w : cs_.wells)
            for (const auto& iv : w.schedule) {
                if (iv.start_day > 1e-9 && iv.start_day < cs_.horizon_days - 1e-9)
                    b.insert(iv.start_day);
                if (iv.end_day > 1e-9 && iv.end_day < cs_.horizon_days - 1e-9) b.insert(iv.end_day);
            }
        return b;
    }

    [[nodiscard]] bool is_report_day(double day) const {
        const double k = day / cs_.report_interval_days;
        if (std::abs(k - std::round(k)) < 1e-6) return true;
        return std::abs(day - cs_.horizon_days) < 1e-9;
    }

    StepAttempt attempt_step(const State& xold, double dt, double day) {
        return cs_.controls.formulation == Formulation::fully_implicit
                   ? attempt_step_fi(xold, dt, day)
                   : attempt_step_impes(xold, dt, day);
    }

    [[nodiscard]] double scaled_norm(const std::vector<double>& r, int eqs_per_cell) const {
        double s = 0.0;
        const int n = asmb_->topology().n_active;
        for (int a = 0; a < n; ++a)
            for (int e = 0; e < eqs_per_cell; ++e)
                s = std::max(s, std::abs(r[a * eqs_per_cell + e]) / asmb_->pv0(a));
        return s;
    }

    void charge_linear(const Csr& m, const LinearReport& rep) {
        const auto& c = cs_.controls;
        if (c.solver_kind == SolverKind::direct) {
            clock_.linear_solve +=
                cost_.direct_n15 * std::pow(m.n, 1.5) + cost_.direct_nnz * m.nnz();
        } else {
            const double basis = std::min(c.north_restart, m.n);
            clock_.linear_solve += cost_.ilu_nnz * m.nnz() +
                                   rep.iterations * (cost_.gmres_nnz_iter * m.nnz() +
                                                     cost_.gmres_basis_iter * m.n * (0.5 * basis + 1.0));
        }
    }

    StepAttempt attempt_step_fi(const State& xold, double dt, double day) {
        StepAttempt att;
        const auto& c = cs_.controls;
        const int n = asmb_->topology().n_active;
        State x = xold;
        Csr j = asmb_->make_fi_matrix();
        std::vector<double> r;
        const int n_wells = static_cast<int>(asmb_->wells_at(day).size());

        double s0 = -1.0;
        bool converged = false;
        for (int cycle = 0; cycle < c.newton_max; ++cycle) {
            att.newton_cycles += 1;
            clock_.overhead += cost_.cycle_overhead;
            asmb_->assemble_fi(x, xold, dt, day, r, j);
            clock_.assembly += cost_.asm_fi_cell * n;
            clock_.well_management += cost_.well_eval * n_wells;

            const double s = scaled_norm(r, 2);
            if (cycle == 0) s0 = s;
            if (s <= std::max(1e-12, 1e-6 * s0)) {
                converged = true;
                break;
            }

            std::vector<double> rhs(r.size());
            for (std::size_t i = 0; i < r.size(); ++i) rhs[i] = -r[i];
            LinearReport rep;
            const auto dx = linear_solve(j, rhs, c, unknown_perm_, rep);
            att.linear_iterations += rep.iterations;
            if (rep.failed) att.solver_failures += 1;
            charge_linear(j, rep);

            for (int a = 0; a < n; ++a) {
                x.p[a] += dx[2 * a];
                x.sw[a] = std::clamp(x.sw[a] + dx[2 * a + 1], 0.0, 1.0);
            }
        }
        if (!converged) return att;

        for (int a = 0; a < n; ++a) {
            att.dp_max = std::max(att.dp_max, std::abs(x.p[a] - xold.p[a]));
            att.ds_max = std::max(att.ds_max, std::abs(x.sw[a] - xold.sw[a]));
        }
        if (att.dp_max > c.maxchange_press || att.ds_max > c.maxchange_satur) return att;

        att.accepted = true;
        att.result = std::move(x);
        return att;
    }

    StepAttempt attempt_step_impes(const State& xold, double dt, double day) {
        StepAttempt att;
        const auto& c = cs_.controls;
        const int n = asmb_->topology().n_active;
        std::vector<double> p = xold.p;
        Csr j = asmb_->make_impes_matrix();
        std::vector<double> r;
        const int n_wells = static_cast<int>(asmb_->wells_at(day).size());

        double s0 = -1.0;
        bool converged = false;
        for (int cycle = 0; cycle < c.newton_max; ++cycle) {
            att.newton_cycles += 1;
            clock_.overhead += cost_.cycle_overhead;
            asmb_->assemble_impes(p, xold, dt, day, r, j);
            clock_.assembly += cost_.asm_impes_cell * n;
            clock_.well_management += cost_.well_eval * n_wells;

            const double s = scaled_norm(r, 1);
            if (cycle == 0) s0 = s;
            if (s <= std::max(1e-12, 1e-6 * s0)) {
                converged = true;
                break;
            }

            std::vector<double> rhs(r.size());
            for (std::size_t i = 0; i < r.size(); ++i) rhs[i] = -r[i];
            LinearReport rep;
            const auto dp = linear_solve(j, rhs, c, unknown_perm_, rep);
            att.linear_iterations += rep.iterations;
            if (rep.failed) att.solver_failures += 1;
            charge_linear(j, rep);

            for (int a = 0; a < n; ++a) p[a] += dp[a];
        }
        if (!converged) return att;

        std::vector<double> sw_new;
        if (!asmb_->explicit_water_update(p, xold, dt, day, sw_new)) return att;
        clock_.assembly += cost_.asm_impes_cell * n;

        for (int a = 0; a < n; ++a) {
            att.dp_max = std::max(att.dp_max, std::abs(p[a] - xold.p[a]));
            att.ds_max = std::max(att.ds_max, std::abs(sw_new[a] - xold.sw[a]));
        }
        if (att.dp_max > c.maxchange_press || att.ds_max > c.maxchange_satur) return att;

        att.accepted = true;
        att.result.p = std::move(p);
        att.result.sw = std::move(sw_new);
        return att;
    }

    /// IMPES accounts wells at the new pressure with old saturations, the
    /// same values its water balance used.
    void accumulate_production(const State& accepted, double t_end, double dt) {
        State eval = accepted;
        const double day = t_end - dt;
        if (cum_.well_oil_prod.empty()) {
            cum_.well_oil_prod.assign(cs_.wells.size(), 0.0);
            cum_.well_water_prod.assign(cs_.wells.size(), 0.0);
            cum_.well_water_inj.assign(cs_.wells.size(), 0.0);
        }
        const auto rates = asmb_->rates_at(eval, day);
        for (std::size_t wi = 0; wi < rates.size(); ++wi) {
            const auto& q = rates[wi];
            cum_.well_oil_prod[wi] += std::max(0.0, -q.q_o) * dt;
            cum_.well_water_prod[wi] += std::max(0.0, -q.q_w) * dt;
            cum_.well_water_inj[wi] += std::max(0.0, q.q_w) * dt;
            cum_.oil_prod += std::max(0.0, -q.q_o) * dt;
            cum_.oil_inj += std::max(0.0, q.q_o) * dt;
            cum_.water_prod += std::max(0.0, -q.q_w) * dt;
            cum_.water_inj += std::max(0.0, q.q_w) * dt;
        }
    }

    [[nodiscard]] CsvTable make_curves_table() const {
        CsvTable t;
        t.header.push_back("day");
        for (const auto& w : cs_.wells) {
            t.header.push_back(w.name + ":OPT");
            t.header.push_back(w.name + ":WPT");
            t.header.push_back(w.name + ":WIT");
        }
        t.header.push_back("FOPT");
        t.header.push_back("FWPT");
        t.header.push_back("FWIT");
        return t;
    }

    void record_rows(SimulationResult& res, double day, const State& state) {
        if (cum_.well_oil_prod.empty()) {
            cum_.well_oil_prod.assign(cs_.wells.size(), 0.0);
            cum_.well_water_prod.assign(cs_.wells.size(), 0.0);
            cum_.well_water_inj.assign(cs_.wells.size(), 0.0);
        }
        std::vector<std::string> row{format_double(day)};
        for (std::size_t wi = 0; wi < cs_.wells.size(); ++wi) {
            row.push_back(format_double(cum_.well_oil_prod[wi]));
            row.push_back(format_double(cum_.well_water_prod[wi]));
            row.push_back(format_double(cum_.well_water_inj[wi]));
        }
        row.push_back(format_double(cum_.oil_prod));
        row.push_back(format_double(cum_.water_prod));
        row.push_back(format_double(cum_.water_inj));
        res.curves.add_row(std::move(row));

        double fip_o = 0.0, fip_w = 0.0;
        asmb_->fluid_in_place(state, fip_o, fip_w);
        res.fip_series.add_row(
            {format_double(day), format_double(fip_o), format_double(fip_w), format_double(0.0)});

        clock_.io += cost_.io_value * static_cast<double>(res.curves.header.size() + 4);
    }

    [[nodiscard]] double model_memory_mb() const {
        const auto& topo = asmb_->topology();
        const int block = cs_.controls.formulation == Formulation::fully_implicit ? 2 : 1;
        const double n = static_cast<double>(topo.n_active) * block;
        double nnz = 0.0;
        for (const auto& a : topo.adj) nnz += static_cast<double>(a.size() + 1);
        nnz *= block * block;
        double bytes = nnz * 20.0 + n * 8.0 * 6.0;
        if (cs_.controls.solver_kind == SolverKind::direct)
            bytes += 40.0 * n * std::sqrt(n);
        else
            bytes += n * 8.0 * (std::min<double>(cs_.controls.north_restart, n) + 4.0);
        return 8.0 + bytes / 1e6;
    }

    SimulationCase cs_;
    std::unique_ptr<Assembler> asmb_;
    std::vector<int> cell_perm_;
    std::vector<int> unknown_perm_;
    CostModel cost_;
    VirtualClock clock_;
    Cumulatives cum_;
    double ofip_o_ = 0.0, ofip_w_ = 0.0;
    long long implicit_cell_steps_ = 0;
    long long total_cell_steps_ = 0;
};

inline SimulationResult run_simulation(const SimulationCase& cs, double wall_timeout_s) {
    Simulator s(cs);
    return s.run(wall_timeout_s);
}

// ---- Result serialization -------------------------------------------------

inline nlohmann::json csv_to_json(const CsvTable& t) {
    return nlohmann::json{{"header", t.header}, {"rows", t.rows}};
}

inline CsvTable csv_from_json(const nlohmann::json& j) {
    CsvTable t;
    t.header = j.at("header").get<std::vector<std::string>>();
    t.rows = j.at("rows").get<std::vector<std::vector<std::string>>>();
    return t;
}

inline nlohmann::json result_to_json(const SimulationResult& r) {
    nlohmann::json j;
    j["status"] = to_string(r.status);
    j["elapsed_s"] = r.elapsed_s;
    j["cpu_s"] = r.cpu_s;
    j["wall_clock_s"] = r.wall_clock_s;
    j["memory_peak_mb"] = r.memory_peak_mb;
    j["counters"] = {{"timesteps", r.counters.timesteps},
                     {"newton_cycles", r.counters.newton_cycles},
                     {"linear_iterations", r.counters.linear_iterations},
                     {"solver_failures", r.counters.solver_failures},
                     {"cuts", r.counters.cuts}};
    j["kernel_timings"] = {{"assembly", r.kernel_timings.assembly},
                           {"linear_solve", r.kernel_timings.linear_solve},
                           {"well_management", r.kernel_timings.well_management},
                           {"io", r.kernel_timings.io}};
    j["curves"] = csv_to_json(r.curves);
    j["fip_series"] = csv_to_json(r.fip_series);
    j["mbe"] = {{"oil", r.mbe_oil}, {"water", r.mbe_water}, {"gas", r.mbe_gas}};
    j["average_implicitness"] = r.average_implicitness;
    j["days_simulated"] = r.days_simulated;
    j["abort_reason"] = r.abort_reason;
    return j;
}

inline SimulationResult result_from_json(const nlohmann::json& j) {
    SimulationResult r;
    r.status = run_status_from_string(j.at("status").get<std::string>());
    r.elapsed_s = j.at("elapsed_s").get<double>();
    r.cpu_s = j.at("cpu_s").get<double>();
    r.wall_clock_s = j.value("wall_clock_s", 0.0);
    r.memory_peak_mb = j.at("memory_peak_mb").get<double>();
    const auto& c = j.at("counters");
    r.counters.timesteps = c.at("timesteps").get<long long>();
    r.counters.newton_cycles = c.at("newton_cycles").get<long long>();
    r.counters.linear_iterations = c.at("linear_iterations").get<long long>();
    r.counters.solver_failures = c.at("solver_failures").get<long long>();
    r.counters.cuts = c.at("cuts").get<long long>();
    const auto& k = j.at("kernel_timings");
    r.kernel_timings.assembly = k.at("assembly").get<double>();
    r.kernel_timings.linear_solve = k.at("linear_solve").get<double>();
    r.kernel_timings.well_management = k.at("well_management").get<double>();
    r.kernel_timings.io = k.at("io").get<double>();
    r.curves = csv_from_json(j.at("curves"));
    r.fip_series = csv_from_json(j.at("fip_series"));
    r.mbe_oil = j.at("mbe").at("oil").get<double>();
    r.mbe_water = j.at("mbe").at("water").get<double>();
    r.mbe_gas = j.at("mbe").at("gas").get<double>();
    r.average_implicitness = j.at("average_implicitness").get<double>();
    r.days_simulated = j.at("days_simulated").get<double>();
    r.abort_reason = j.value("abort_reason", std::string{});
    return r;
}

}  // namespace rstune::sim
