#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <rstune/project.hpp>

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
};

void add_common(CLI::App* sub, CommonFlags& f, bool config_required) {
    auto* cfg = sub->add_option("--config", f.config_path, "Project configuration JSON");
    if (config_required) cfg->required()->check(CLI::ExistingFile);
    sub->add_option("--out", f.out_dir, "Output directory (defaults to the configured workdir)");
    sub->add_option("--seed", f.seed, "Override the command's primary seed")
        ->each([&f](const std::string&) { f.seed_set = true; });
    sub->add_option("--workers", f.workers, "Worker pool size")->check(CLI::PositiveNumber);
}

int load_config(const CommonFlags& f, rstune::project::ProjectConfig& cfg) {
    try {
        if (!f.config_path.empty()) cfg = rstune::project::load_project(f.config_path);
        if (f.workers > 0) cfg.workflow.workers = f.workers;
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return rstune::project::kExitUsage;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rstune: reservoir-simulation autotuning toolkit"};
    app.require_subcommand(1);
    int rc = 0;

    // simulate ---------------------------------------------------------------
    auto* simulate = app.add_subcommand("simulate", "Run one case and write its results");
    CommonFlags sim_flags;
    std::string case_path, controls_path;
    double timeout_s = 0.0;
    simulate->add_option("--case", case_path, "Simulation case JSON")
        ->required()
        ->check(CLI::ExistingFile);
    simulate->add_option("--controls", controls_path, "Numerical-controls sample JSON");
    simulate->add_option("--timeout", timeout_s, "Wall timeout in metered seconds");
    add_common(simulate, sim_flags, false);
    simulate->callback([&] {
        rstune::project::ProjectConfig cfg;
        if ((rc = load_config(sim_flags, cfg)) != 0) return;
        if (timeout_s > 0.0) cfg.workflow.initial_wall_timeout_s = timeout_s;
        rc = rstune::project::cmd_simulate(cfg, case_path, controls_path, sim_flags.out_dir);
    });

    // dataset ----------------------------------------------------------------
    auto* dataset = app.add_subcommand("dataset", "Run the sampling campaign and write the corpus");
    CommonFlags ds_flags;
    add_common(dataset, ds_flags, true);
    dataset->callback([&] {
        rstune::project::ProjectConfig cfg;
        if ((rc = load_config(ds_flags, cfg)) != 0) return;
        if (ds_flags.seed_set) cfg.campaign.seed = ds_flags.seed;
        rc = rstune::project::cmd_dataset(cfg, ds_flags.out_dir);
    });

    // train ------------------------------------------------------------------
    auto* train = app.add_subcommand("train", "Grid-search the performance model on the corpus");
    CommonFlags tr_flags;
    add_common(train, tr_flags, true);
    train->callback([&] {
        rstune::project::ProjectConfig cfg;
        if ((rc = load_config(tr_flags, cfg)) != 0) return;
        if (tr_flags.seed_set) cfg.train_seed = tr_flags.seed;
        rc = rstune::project::cmd_train(cfg, tr_flags.out_dir);
    });

    // esmda ------------------------------------------------------------------
    auto* esmda = app.add_subcommand("esmda", "Run the history match (tuned and/or baseline arm)");
    CommonFlags es_flags;
    bool arm_tuned = false, arm_baseline = false;
    esmda->add_flag("--tuned", arm_tuned, "Run the autotuned arm");
    esmda->add_flag("--baseline", arm_baseline, "Run the fixed-configuration arm");
    add_common(esmda, es_flags, true);
    esmda->callback([&] {
        rstune::project::ProjectConfig cfg;
        if ((rc = load_config(es_flags, cfg)) != 0) return;
        if (es_flags.seed_set) cfg.workflow.run_seed = es_flags.seed;
        rc = rstune::project::cmd_esmda(cfg, arm_tuned, arm_baseline, es_flags.out_dir);
    });

    // report -----------------------------------------------------------------
    auto* report = app.add_subcommand("report", "Compare two run ledgers");
    std::string tuned_csv, baseline_csv, report_out;
    double t1 = 0.05, t2 = 0.10;
    report->add_option("--tuned", tuned_csv, "Tuned-arm ledger CSV")
        ->required()
        ->check(CLI::ExistingFile);
    report->add_option("--baseline", baseline_csv, "Baseline-arm ledger CSV")
        ->required()
        ->check(CLI::ExistingFile);
    report->add_option("--out", report_out, "Output directory");
    report->add_option("--t1", t1, "Quality threshold separating clean from degraded runs");
    report->add_option("--t2", t2, "Quality threshold separating degraded from rejected runs");
    report->callback(
        [&] { rc = rstune::project::cmd_report(tuned_csv, baseline_csv, report_out, t1, t2); });

    // gencase ----------------------------------------------------------------
    auto* gencase = app.add_subcommand("gencase", "Write a synthetic waterflood case file");
    std::string gen_out = "case.json";
    int gen_nx = 20, gen_ny = 20;
    std::uint64_t gen_seed = 4020;
    double gen_horizon = 360.0;
    gencase->add_option("--out", gen_out, "Case file to write");
    gencase->add_option("--nx", gen_nx, "Grid cells in x")->check(CLI::PositiveNumber);
    gencase->add_option("--ny", gen_ny, "Grid cells in y")->check(CLI::PositiveNumber);
    gencase->add_option("--seed", gen_seed, "Field seed");
    gencase->add_option("--horizon", gen_horizon, "Simulation horizon in days");
    gencase->callback([&] {
        try {
            rstune::gen::FieldSpec spec;
            spec.nx = gen_nx;
            spec.ny = gen_ny;
            spec.horizon_days = gen_horizon;
            rstune::sim::save_case(rstune::gen::synth_case(spec, gen_seed), gen_out);
            std::cout << "gencase: wrote " << gen_out << "\n";
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            rc = rstune::project::kExitUsage;
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return rstune::project::kExitUsage;
    }
    return rc;
}
