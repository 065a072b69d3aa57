// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Each criterion carries a fixed tolerance and a wall-clock budget; a run
// over budget fails even if the numbers are right.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rstune/ensemble_gen.hpp"
#include "rstune/esmda.hpp"
#include "rstune/oracle/cv.hpp"
#include "rstune/project.hpp"
#include "rstune/searchspace.hpp"
#include "rstune/simkernel/assembly.hpp"
#include "rstune/simkernel/simulator.hpp"
#include "rstune/workflow.hpp"

using namespace rstune;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    return buf;
}

// ---- 1. linear-Gaussian posterior -----------------------------------------

Outcome check_linear_gaussian() {
    const double y = 1.2;
    const double exact_mean = y / 2.0, exact_var = 0.5;
    const int n_r = 2000;

    double mean_sum = 0.0, var_sum = 0.0;
    for (std::uint64_t seed = 2024; seed <= 2028; ++seed) {
        esmda::EnsembleState prior;
        prior.m = Eigen::MatrixXd(1, n_r);
        Rng rng(derive_seed(seed, 0xBE));
        for (int j = 0; j < n_r; ++j) prior.m(0, j) = rng.normal();
        prior.param_names = {"m"};

        esmda::ObservationSet obs;
        obs.d_obs = Eigen::VectorXd::Constant(1, y);
        obs.variances = Eigen::VectorXd::Constant(1, 1.0);

        esmda::AssimilationConfig config;
        config.n_a = 4;
        config.alphas = {4.0, 4.0, 4.0, 4.0};
        config.seed = seed;

        const auto result = esmda::run_esmda(
            prior, obs, config, [](const Eigen::MatrixXd& m, int) { return m; });

        const auto& m = result.final_state.m;
        const double mean = m.row(0).mean();
        double var = 0.0;
        for (int j = 0; j < n_r; ++j) var += (m(0, j) - mean) * (m(0, j) - mean);
        var /= n_r - 1;
        mean_sum += mean;
        var_sum += var;
    }
    const double mean = mean_sum / 5.0, var = var_sum / 5.0;
    const double mean_err = std::abs(mean - exact_mean) / exact_mean;
    const double var_err = std::abs(var - exact_var) / exact_var;

    Outcome o;
    o.pass = mean_err <= 0.05 && var_err <= 0.05;
    o.detail = "mean " + fmt(mean) + " vs " + fmt(exact_mean) + " (" + fmt(100 * mean_err, 2) +
               "% off), variance " + fmt(var) + " vs " + fmt(exact_var) + " (" +
               fmt(100 * var_err, 2) + "% off), averaged over 5 seeds";
    return o;
}

// ---- 2. two-member scalar update ------------------------------------------

Outcome check_scalar_update() {
    Eigen::MatrixXd m(1, 2), d(1, 2), d_uc(1, 2);
    m << 0.0, 2.0;
    d << 0.0, 2.0;
    d_uc << 3.0, 3.0;
    Eigen::VectorXd c_d = Eigen::VectorXd::Constant(1, 1.0);

    const auto cov = esmda::cross_covariance(m, d);
    const auto k = esmda::kalman_gain(cov.c_md, cov.c_dd, c_d, 1.0);
    const auto updated = esmda::update_ensemble(m, d, d_uc, k);

    const double k_err = std::abs(k(0, 0) - 2.0 / 3.0);
    const double m1_err = std::abs(updated(0, 0) - 2.0);
    const double m2_err = std::abs(updated(0, 1) - 8.0 / 3.0);

    Outcome o;
    o.pass = k_err <= 1e-12 && m1_err <= 1e-12 && m2_err <= 1e-12;
    o.detail = "gain " + fmt(k(0, 0), 12) + " (want 2/3), members " + fmt(updated(0, 0), 12) +
               " and " + fmt(updated(0, 1), 12) + " (want 2 and 8/3)";
    return o;
}

// ---- 3. conservation on the reference case ---------------------------------

Outcome check_conservation() {
    gen::FieldSpec spec;
    auto cs = gen::synth_case(spec, 4020);
    cs.controls.solver_kind = sim::SolverKind::direct;
    cs.controls.lin_tol = 1e-10;
    cs.controls.dt_max = 1.0;

    const auto r = sim::run_simulation(cs, 1e15);
    const double worst =
        std::max({std::abs(r.mbe_oil), std::abs(r.mbe_water), std::abs(r.mbe_gas)});

    Outcome o;
    o.pass = r.status == sim::RunStatus::normal && worst <= 1e-4;
    o.detail = "20x20 direct run, " + std::to_string(r.counters.timesteps) +
               " steps, worst |MBE| " + fmt(worst, 3) + "% (limit 1e-4%)";
    return o;
}

// ---- 4. analytic Jacobian vs central differences ----------------------------

sim::SimulationCase jacobian_case() {
    sim::SimulationCase cs;
    cs.grid.nx = 3;
    cs.grid.ny = 3;
    cs.grid.dx = 40.0;
    cs.grid.dy = 40.0;
    cs.grid.dz = 8.0;
    cs.grid.perm_x = {120, 80, 200, 50, 150, 90, 300, 60, 110};
    cs.grid.perm_y = {60, 40, 100, 25, 75, 45, 150, 30, 55};
    cs.grid.porosity.assign(9, 0.2);
    cs.grid.active_mask.assign(9, 1);
    cs.horizon_days = 100.0;
    cs.report_interval_days = 100.0;
    cs.p_init.assign(9, 200.0);
    cs.sw_init.assign(9, 0.25);

    sim::WellSpec inj;
    inj.name = "I";
    inj.cell = 0;
    inj.kind = sim::WellKind::injector;
    inj.schedule.push_back({0.0, 100.0, {sim::WellControlKind::rate, 40.0}});
    sim::WellSpec prod_bhp;
    prod_bhp.name = "PB";
    prod_bhp.cell = 8;
    prod_bhp.kind = sim::WellKind::producer;
    prod_bhp.well_index = 30.0;
    prod_bhp.schedule.push_back({0.0, 100.0, {sim::WellControlKind::bhp, 150.0}});
    sim::WellSpec prod_rate;
    prod_rate.name = "PR";
    prod_rate.cell = 4;
    prod_rate.kind = sim::WellKind::producer;
    prod_rate.schedule.push_back({0.0, 100.0, {sim::WellControlKind::rate, 15.0}});
    cs.wells = {inj, prod_bhp, prod_rate};
    cs.check();
    return cs;
}

Outcome check_jacobian() {
    const auto cs = jacobian_case();
    sim::Assembler asmb(cs);
    const int n = asmb.topology().n_active;
    const double dt = 5.0;
    const auto& fluid = asmb.sim_case().fluid;

    Rng rng(404);
    auto random_state = [&]() {
        sim::State s;
        s.p.resize(n);
        s.sw.resize(n);
        for (int a = 0; a < n; ++a) {
            s.p[a] = rng.uniform(160.0, 240.0);
            s.sw[a] = rng.uniform(fluid.swc + 0.05, 1.0 - fluid.sor - 0.05);
        }
        return s;
    };

    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const sim::State xold = random_state();
        sim::State x = random_state();

        sim::Csr j = asmb.make_fi_matrix();
        std::vector<double> r;
        asmb.assemble_fi(x, xold, dt, 0.0, r, j);
        double jmax = 0.0;
        for (double v : j.vals) jmax = std::max(jmax, std::abs(v));

        for (int k = 0; k < 2 * n; ++k) {
            const int cell = k / 2, comp = k % 2;
            double& slot = comp == 0 ? x.p[cell] : x.sw[cell];
            const double orig = slot;
            const double h = comp == 0 ? 1e-5 * std::max(1.0, std::abs(orig)) : 1e-7;

            std::vector<double> rp, rm;
            sim::Csr scratch = asmb.make_fi_matrix();
            slot = orig + h;
            asmb.assemble_fi(x, xold, dt, 0.0, rp, scratch);
            slot = orig - h;
            asmb.assemble_fi(x, xold, dt, 0.0, rm, scratch);
            slot = orig;

            for (int row = 0; row < 2 * n; ++row) {
                const double fd = (rp[row] - rm[row]) / (2.0 * h);
                double an = 0.0;
                for (int kk = j.row_ptr[row]; kk < j.row_ptr[row + 1]; ++kk)
                    if (j.col_idx[kk] == k) an = j.vals[kk];
                worst = std::max(worst, std::abs(fd - an) / jmax);
            }
        }
    }

    Outcome o;
    o.pass = worst <= 1e-5;
    o.detail = "max relative error " + fmt(worst, 3) + " over 20 random 3x3 states (limit 1e-5)";
    return o;
}

// ---- 5. weighted elapsed time branches --------------------------------------

Outcome check_wet() {
    const bool branches = flow::weighted_elapsed_time(100.0, 0.03) == 100.0 &&
                          flow::weighted_elapsed_time(100.0, 0.07) == 200.0 &&
                          flow::weighted_elapsed_time(100.0, 0.20) == 100000.0;
    const bool boundaries = flow::weighted_elapsed_time(100.0, 0.05) == 100.0 &&
                            flow::weighted_elapsed_time(100.0, 0.10) == 200.0;

    Outcome o;
    o.pass = branches && boundaries;
    o.detail = std::string("bands give 100/200/100000 for elapsed 100; thresholds 0.05 and 0.10 ") +
               (boundaries ? "stay in the cheaper band" : "LEAK into the dearer band");
    return o;
}

// ---- 6. Latin hypercube stratification ---------------------------------------

Outcome check_lhs() {
    Rng rng(606);
    bool kind_seen[4] = {false, false, false, false};
    long spaces_checked = 0, dims_checked = 0;

    for (int s = 0; s < 200; ++s) {
        space::SearchSpace sp;
        const int dims = 1 + static_cast<int>(rng.below(6));
        for (int d = 0; d < dims; ++d) {
            const auto kind = static_cast<int>(rng.below(4));
            kind_seen[kind] = true;
            const std::string name = "p" + std::to_string(d);
            if (kind == 0) {
                const double lo = rng.uniform(-50.0, 50.0);
                const double hi = lo + rng.uniform(0.5, 100.0);
                sp.params.push_back(space::real_param(name, lo, hi, (lo + hi) / 2));
            } else if (kind == 1) {
                const double lo = rng.uniform(1e-6, 1.0);
                const double hi = lo * rng.uniform(10.0, 1e6);
                sp.params.push_back(space::log_real_param(name, lo, hi, std::sqrt(lo * hi)));
            } else if (kind == 2) {
                const long long lo = static_cast<long long>(rng.below(100));
                const long long hi = lo + 1 + static_cast<long long>(rng.below(400));
                sp.params.push_back(space::int_param(name, lo, hi, lo));
            } else {
                const int ncat = 2 + static_cast<int>(rng.below(4));
                std::vector<std::string> cats;
                for (int c = 0; c < ncat; ++c) cats.push_back("c" + std::to_string(c));
                sp.params.push_back(space::cat_param(name, cats, cats[0]));
            }
        }

        const auto n = 1 + rng.below(100);
        const auto samples = space::lhs_sample(sp, n, derive_seed(606, 7, s));
        if (samples.size() != n) return {false, "sample count mismatch"};
        ++spaces_checked;

        for (const auto& p : sp.params) {
            if (p.kind == space::ParamKind::real || p.kind == space::ParamKind::log_real) {
                std::vector<int> counts(n, 0);
                for (const auto& smp : samples) {
                    double v = smp.real_at(p.name);
                    double lo = p.lo, hi = p.hi;
                    if (p.kind == space::ParamKind::log_real) {
                        v = std::log(v);
                        lo = std::log(p.lo);
                        hi = std::log(p.hi);
                    }
                    const double u = (v - lo) / (hi - lo);
                    const auto stratum = std::min<std::size_t>(
                        n - 1, static_cast<std::size_t>(u * static_cast<double>(n)));
                    ++counts[stratum];
                }
                for (int c : counts)
                    if (c != 1)
                        return {false, "stratum with " + std::to_string(c) + " samples in " +
                                           p.name + " (n=" + std::to_string(n) + ")"};
                ++dims_checked;
            } else if (p.kind == space::ParamKind::categorical) {
                std::vector<int> counts(p.categories.size(), 0);
                for (const auto& smp : samples) {
                    const auto it = std::find(p.categories.begin(), p.categories.end(),
                                              smp.cat_at(p.name));
                    ++counts[static_cast<std::size_t>(it - p.categories.begin())];
                }
                const auto [mn, mx] = std::minmax_element(counts.begin(), counts.end());
                if (*mx - *mn > 1)
                    return {false, "category imbalance " + std::to_string(*mx - *mn) + " in " +
                                       p.name};
                ++dims_checked;
            } else {
                for (const auto& smp : samples) {
                    const double v = smp.real_at(p.name);
                    if (v < p.lo || v > p.hi) return {false, "integer sample out of bounds"};
                }
            }
        }
    }

    Outcome o;
    o.pass = kind_seen[0] && kind_seen[1] && kind_seen[2] && kind_seen[3];
    o.detail = std::to_string(spaces_checked) + " random spaces, " + std::to_string(dims_checked) +
               " stratified dimensions, all parameter kinds drawn";
    return o;
}

// ---- 7. leave-one-group-out splits hold groups apart --------------------------

Outcome check_logo() {
    Rng rng(707);
    for (int groups = 2; groups <= 16; ++groups) {
        oracle::Dataset ds;
        ds.schema = {{"x"}, {"c0"}};
        for (int g = 0; g < groups; ++g) {
            const int rows = 2 + static_cast<int>(rng.below(3));
            for (int r = 0; r < rows; ++r) {
                oracle::DatasetRow row;
                row.group_id = "g" + std::to_string(g);
                row.status = "NORMAL";
                row.features = {static_cast<double>(g)};
                row.config = {0.0};
                row.elapsed_s = 40.0 + 11.0 * g;
                ds.rows.push_back(row);
            }
        }
        rng.shuffle(ds.rows);

        oracle::OracleConfig knn;
        knn.kind = oracle::RegressorKind::knn;
        knn.hp.n_neighbors = 1;
        const auto result = oracle::logo_cv(ds, {knn}, 707);
        const auto& splits = result.report.configs[0].splits;

        if (static_cast<int>(splits.size()) != groups)
            return {false,
                    std::to_string(splits.size()) + " splits for " + std::to_string(groups) +
                        " groups"};
        auto held = std::vector<std::string>{};
        for (const auto& s : splits) {
            held.push_back(s.held_group);
            if (s.train.mape != 0.0)
                return {false, "memorizing model missed its own training rows: leakage suspected"};
            if (!(s.validation.mape > 0.0))
                return {false,
                        "held-out group " + s.held_group + " predicted exactly: leakage"};
        }
        std::sort(held.begin(), held.end());
        if (held != ds.group_ids()) return {false, "held groups do not cover the group set"};
    }
    return {true, "2..16 groups: one split per group, zero train error, nonzero held-out error"};
}

// ---- 8. forest learns a smooth runtime surface --------------------------------

Outcome check_learnability() {
    Rng rng(808);
    oracle::Dataset ds;
    ds.schema = {{"timesteps"}, {"c0", "c1", "c2", "c3"}};
    const int n_rows = 2000;
    for (int i = 0; i < n_rows; ++i) {
        const double c0 = rng.uniform(), c1 = rng.uniform(), c2 = rng.uniform(),
                     c3 = rng.uniform();
        const double smooth = 50.0 + 30.0 * c0 + 20.0 * c1 * c1 + 15.0 * std::sin(3.0 * c2) +
                              10.0 * c3 + 5.0 * c0 * c1;
        oracle::DatasetRow row;
        row.group_id = "g" + std::to_string(i % 10);
        row.status = "NORMAL";
        row.features = {100.0};
        row.config = {c0, c1, c2, c3};
        row.elapsed_s = smooth * (1.0 + 0.05 * rng.normal());
        ds.rows.push_back(row);
    }

    oracle::OracleConfig forest;
    forest.kind = oracle::RegressorKind::forest;
    const auto result = oracle::logo_cv(ds, {forest}, 808);
    const double mape = result.report.configs[0].mean_validation.mape;

    Outcome o;
    o.pass = mape <= 20.0;
    o.detail = "forest LOGO validation MAPE " + fmt(mape, 3) + "% on " + std::to_string(n_rows) +
               " rows with 5% noise (limit 20%)";
    return o;
}

// ---- 9 & 11. end-to-end tuning gain and schedule determinism ------------------

struct TuningArtifacts {
    flow::EnsembleSetup setup;
    esmda::ObservationSet obs;
    esmda::AssimilationConfig ac;
    flow::WorkflowConfig wf;
    oracle::Dataset corpus;
    std::optional<flow::WorkflowResult> tuned;
};

TuningArtifacts& tuning_artifacts() {
    static TuningArtifacts art;
    return art;
}

Outcome check_tuning_gain() {
    auto& art = tuning_artifacts();

    project::ProjectConfig cfg;
    cfg.generator.seed = 909;
    cfg.generator.n_realizations = 20;
    cfg.generator.truth_member = -1;
    cfg.generator.obs_noise_frac = 0.05;
    cfg.campaign.lhs_n = 8;
    cfg.campaign.oat_levels = 0;
    cfg.campaign.seed = 5;
    cfg.campaign.wall_timeout_s = 600.0;

    art.setup = project::make_setup(cfg.generator);
    art.obs = project::make_observations(cfg.generator);
    art.corpus = project::run_campaign(cfg).dataset;

    art.ac.n_a = 5;
    art.ac.alphas = esmda::uniform_alphas(5);
    art.ac.seed = 7;

    auto engineer = space::builtin_space().defaults();
    engineer.values["lin_iter_max"] = 5.0;
    engineer.values["dt_max"] = 5.0;

    art.wf.query_size = 2000;
    art.wf.run_seed = 4242;
    art.wf.workers = 1;
    art.wf.baseline_mode = flow::BaselineMode::engineer;
    art.wf.engineer_sample = engineer;
    art.wf.oracle_config.kind = oracle::RegressorKind::forest;
    art.wf.oracle_config.hp.max_features = "sqrt";
    art.wf.oracle_config.hp.n_estimators = 50;

    const auto tuned = flow::coupled_run(art.setup, art.obs, art.ac, art.wf, art.corpus);
    const auto baseline = flow::baseline_run(art.setup, art.obs, art.ac, art.wf, art.corpus);
    art.tuned = tuned;

    const long planned = flow::planned_simulation_count(art.ac.n_a, 20);
    if (static_cast<long>(tuned.ledger.entries.size()) != planned ||
        static_cast<long>(baseline.ledger.entries.size()) != planned)
        return {false, "expected " + std::to_string(planned) + " runs per arm"};

    double tuned_sum = 0.0, baseline_sum = 0.0;
    long n = 0;
    for (int round = 2; round <= 5; ++round) {
        for (const auto* e : tuned.ledger.round_entries(round)) tuned_sum += e->elapsed_s;
        for (const auto* e : baseline.ledger.round_entries(round)) {
            baseline_sum += e->elapsed_s;
            ++n;
        }
    }
    const double tuned_mean = tuned_sum / n, baseline_mean = baseline_sum / n;
    const double gain = 1.0 - tuned_mean / baseline_mean;

    double worst_mbe = 0.0;
    for (const auto& e : tuned.ledger.entries)
        if (e.tuned) worst_mbe = std::max(worst_mbe, e.mean_abs_mbe);

    Outcome o;
    o.pass = gain >= 0.10 && worst_mbe <= 0.10;
    o.detail = "120 runs per arm; rounds 2-5 mean elapsed " + fmt(tuned_mean, 4) + " s tuned vs " +
               fmt(baseline_mean, 4) + " s baseline (" + fmt(100 * gain, 3) +
               "% lower, need >=10%); worst tuned mean |MBE| " + fmt(worst_mbe, 3) +
               " (limit 0.10)";
    return o;
}

Outcome check_count_accounting() {
    const long five_round_50 = flow::planned_simulation_count(4, 50);
    const long five_round_48 = flow::planned_simulation_count(4, 48);
    const long six_round_20 = flow::planned_simulation_count(5, 20);

    Outcome o;
    o.pass = five_round_50 == 250 && five_round_48 == 240 && six_round_20 == 120;
    o.detail = "a five-round schedule (four assimilations plus forecast) plans " +
               std::to_string(five_round_50) + "/" + std::to_string(five_round_48) +
               " runs for 50/48 members (want 250/240); five assimilations plus forecast plan " +
               std::to_string(six_round_20) + " for 20 members (want 120)";
    return o;
}

Outcome check_determinism() {
    auto& art = tuning_artifacts();
    if (!art.tuned) return {false, "tuning-gain artifacts unavailable (criterion 9 failed early)"};

    auto wf3 = art.wf;
    wf3.workers = 3;
    const auto rerun = flow::coupled_run(art.setup, art.obs, art.ac, wf3, art.corpus);
    const auto& first = *art.tuned;

    const auto sp = space::builtin_space();
    std::ostringstream a, b;
    write_csv(flow::ledger_to_csv(first.ledger, sp), a);
    write_csv(flow::ledger_to_csv(rerun.ledger, sp), b);
    const bool ledgers_equal = a.str() == b.str();

    bool samples_equal = first.ledger.entries.size() == rerun.ledger.entries.size();
    for (std::size_t i = 0; samples_equal && i < first.ledger.entries.size(); ++i)
        samples_equal = first.ledger.entries[i].sample == rerun.ledger.entries[i].sample;

    const double m_diff =
        (first.final_state.m - rerun.final_state.m).cwiseAbs().maxCoeff();

    Outcome o;
    o.pass = ledgers_equal && samples_equal && m_diff == 0.0;
    o.detail = std::string("workers 1 vs 3: ledgers ") +
               (ledgers_equal ? "byte-identical" : "DIFFER") + ", chosen configurations " +
               (samples_equal ? "identical" : "DIFFER") + ", final ensembles differ by " +
               fmt(m_diff, 3);
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "smoother recovers the linear-Gaussian posterior", 30.0, check_linear_gaussian},
        {2, "two-member scalar update is exact", 1.0, check_scalar_update},
        {3, "reference case conserves mass", 10.0, check_conservation},
        {4, "analytic Jacobian matches central differences", 10.0, check_jacobian},
        {5, "quality bands weight elapsed time exactly", 5.0, check_wet},
        {6, "Latin hypercube keeps one sample per stratum", 30.0, check_lhs},
        {7, "group-wise validation never sees its held group", 60.0, check_logo},
        {8, "forest learns a smooth runtime surface", 300.0, check_learnability},
        {9, "tuned history match beats the fixed baseline", 900.0, check_tuning_gain},
        {10, "run accounting matches the planned schedule", 5.0, check_count_accounting},
        {11, "schedules are worker-count independent", 900.0, check_determinism},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_budget = elapsed <= c.budget_s;
        const bool pass = o.pass && in_budget;
        if (!pass) ++failures;
        std::printf("[%s] %2d. %s (%.1fs of %.0fs budget): %s%s\n", pass ? "PASS" : "FAIL", c.id,
                    c.name, elapsed, c.budget_s, o.detail.c_str(),
                    in_budget ? "" : " [OVER BUDGET]");
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
                criteria.size());
    return failures;
}
