#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rstune/ensemble_gen.hpp"
#include "rstune/logfeat.hpp"
#include "rstune/oracle/cv.hpp"
#include "rstune/searchspace.hpp"
#include "rstune/simkernel/simulator.hpp"
#include "rstune/workflow.hpp"

namespace rstune::project {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitSimulation = 2;
inline constexpr int kExitTraining = 3;

// ---- Configuration document -----------------------------------------------

/// Synthetic geological ensemble: one smoothed log-normal permeability field
/// per member, plus the truth member the observations are manufactured from.
struct GeneratorSpec {
    std::uint64_t seed = 1;
    int n_realizations = 4;
    gen::FieldSpec field;
    int truth_member = -1;  // -1 simulates a held-out field instead of a member
    std::uint64_t truth_seed = 991;
    double obs_noise_frac = 0.05;
    std::uint64_t obs_seed = 17;
    std::vector<std::string> obs_columns = {"PRD1:OPT", "PRD1:WPT"};

    void check() const {
        if (n_realizations < 1)
            throw std::runtime_error("generator: n_realizations must be at least 1");
        if (field.sigma_log_perm < 0.0)
            throw std::runtime_error("generator: sigma_log_perm must be non-negative");
        if (truth_member >= n_realizations)
            throw std::runtime_error("generator: truth_member must be below n_realizations");
        if (obs_noise_frac < 0.0)
            throw std::runtime_error("generator: obs_noise_frac must be non-negative");
        if (obs_columns.empty())
            throw std::runtime_error("generator: obs_columns must not be empty");
    }
};

/// Sampling plan for the training-corpus command. Every realization runs the
/// same one-at-a-time sweep plus its own Latin hypercube batch.
struct CampaignSpec {
    int lhs_n = 8;
    int oat_levels = 0;  // 0 skips the one-at-a-time sweep
    double wall_timeout_s = 600.0;
    std::uint64_t seed = 99;

    void check() const {
        if (lhs_n < 0) throw std::runtime_error("campaign: lhs_n must be non-negative");
        if (oat_levels != 0 && oat_levels < 2)
            throw std::runtime_error("campaign: oat_levels must be 0 or at least 2");
        if (lhs_n == 0 && oat_levels == 0)
            throw std::runtime_error("campaign: needs lhs_n > 0 or oat_levels >= 2");
        if (!(wall_timeout_s > 0.0))
            throw std::runtime_error("campaign: wall_timeout_s must be positive");
    }
};

struct EsmdaSpec {
    int n_a = 2;
    std::vector<double> alphas;  // empty picks the uniform schedule
    std::uint64_t seed = 7;
    double svd_tol = 1e-8;

    [[nodiscard]] esmda::AssimilationConfig assimilation_config() const {
        esmda::AssimilationConfig c;
        c.n_a = n_a;
        c.alphas = alphas.empty() ? esmda::uniform_alphas(n_a) : alphas;
        c.seed = seed;
        c.svd_tol = svd_tol;
        return c;
    }
};

/// Small representative grid for the training command when the config does
/// not spell one out: both tree criteria, two forests, two kNN variants.
inline std::vector<oracle::OracleConfig> default_train_grid() {
    std::vector<oracle::OracleConfig> grid;
    for (const auto& crit : oracle::grid_tree_criteria()) {
        oracle::OracleConfig c;
        c.kind = oracle::RegressorKind::tree;
        c.hp.criterion = crit;
        grid.push_back(c);
    }
    {
        oracle::OracleConfig c;
        c.kind = oracle::RegressorKind::forest;
        c.hp.max_depth = 20;
        c.hp.max_features = "sqrt";
        c.hp.n_estimators = 50;
        grid.push_back(c);
        c.hp.max_depth = -1;
        c.hp.n_estimators = 100;
        grid.push_back(c);
    }
    {
        oracle::OracleConfig c;
        c.kind = oracle::RegressorKind::knn;
        c.hp.n_neighbors = 3;
        c.hp.p = 2;
        grid.push_back(c);
        c.hp.n_neighbors = 6;
        c.hp.p = 1;
        grid.push_back(c);
    }
    return grid;
}

struct ProjectConfig {
    std::string workdir = "out";
    std::string dataset_csv = "dataset.csv";
    std::string dataset_schema = "dataset_schema.json";
    std::string oracle_store = "oracle.json";
    GeneratorSpec generator;
    CampaignSpec campaign;
    EsmdaSpec esmda;
    flow::WorkflowConfig workflow;
    std::vector<oracle::OracleConfig> train_grid;  // empty uses default_train_grid()
    std::vector<std::string> holdout_groups;
    std::uint64_t train_seed = 33;

    void check() const {
        if (workdir.empty()) throw std::runtime_error("project: workdir must not be empty");
        if (dataset_csv.empty() || dataset_schema.empty() || oracle_store.empty())
            throw std::runtime_error("project: artifact file names must not be empty");
        generator.check();
        campaign.check();
        if (esmda.n_a < 1) throw std::runtime_error("project: n_a must be at least 1");
        workflow.check();
    }
};

// ---- JSON binding ----------------------------------------------------------

inline nlohmann::json field_to_json(const gen::FieldSpec& f) {
    return {{"nx", f.nx},
            {"ny", f.ny},
            {"dx", f.dx},
            {"dy", f.dy},
            {"dz", f.dz},
            {"mean_log_perm", f.mean_log_perm},
            {"sigma_log_perm", f.sigma_log_perm},
            {"blur_radius", f.blur_radius},
            {"perm_y_ratio", f.perm_y_ratio},
            {"poro_base", f.poro_base},
            {"poro_scale", f.poro_scale},
            {"p_init", f.p_init},
            {"horizon_days", f.horizon_days},
            {"report_interval_days", f.report_interval_days},
            {"inject_rate", f.inject_rate},
            {"produce_rate", f.produce_rate}};
}

inline gen::FieldSpec field_from_json(const nlohmann::json& j) {
    gen::FieldSpec d;
    gen::FieldSpec f;
    f.nx = j.value("nx", d.nx);
    f.ny = j.value("ny", d.ny);
    f.dx = j.value("dx", d.dx);
    f.dy = j.value("dy", d.dy);
    f.dz = j.value("dz", d.dz);
    f.mean_log_perm = j.value("mean_log_perm", d.mean_log_perm);
    f.sigma_log_perm = j.value("sigma_log_perm", d.sigma_log_perm);
    f.blur_radius = j.value("blur_radius", d.blur_radius);
    f.perm_y_ratio = j.value("perm_y_ratio", d.perm_y_ratio);
    f.poro_base = j.value("poro_base", d.poro_base);
    f.poro_scale = j.value("poro_scale", d.poro_scale);
    f.p_init = j.value("p_init", d.p_init);
    f.horizon_days = j.value("horizon_days", d.horizon_days);
    f.report_interval_days = j.value("report_interval_days", d.report_interval_days);
    f.inject_rate = j.value("inject_rate", d.inject_rate);
    f.produce_rate = j.value("produce_rate", d.produce_rate);
    return f;
}

inline nlohmann::json generator_to_json(const GeneratorSpec& g) {
    return {{"seed", g.seed},
            {"n_realizations", g.n_realizations},
            {"field", field_to_json(g.field)},
            {"truth_member", g.truth_member},
            {"truth_seed", g.truth_seed},
            {"obs_noise_frac", g.obs_noise_frac},
            {"obs_seed", g.obs_seed},
            {"obs_columns", g.obs_columns}};
}

inline GeneratorSpec generator_from_json(const nlohmann::json& j) {
    GeneratorSpec d;
    GeneratorSpec g;
    g.seed = j.value("seed", d.seed);
    g.n_realizations = j.value("n_realizations", d.n_realizations);
    if (j.contains("field")) g.field = field_from_json(j.at("field"));
    g.truth_member = j.value("truth_member", d.truth_member);
    g.truth_seed = j.value("truth_seed", d.truth_seed);
    g.obs_noise_frac = j.value("obs_noise_frac", d.obs_noise_frac);
    g.obs_seed = j.value("obs_seed", d.obs_seed);
    g.obs_columns = j.value("obs_columns", d.obs_columns);
    return g;
}

inline nlohmann::json workflow_to_json(const flow::WorkflowConfig& w) {
    nlohmann::json j{{"query_size", w.query_size},
                     {"wet_t1", w.wet_t1},
                     {"wet_t2", w.wet_t2},
                     {"baseline_mode",
                      w.baseline_mode == flow::BaselineMode::engineer ? "engineer" : "defaults"},
                     {"engineer_elapsed_s", w.engineer_elapsed_s},
                     {"run_seed", w.run_seed},
                     {"workers", w.workers},
                     {"oracle", oracle::oracle_config_to_json(w.oracle_config)},
                     {"initial_wall_timeout_s", w.initial_wall_timeout_s}};
    if (w.engineer_sample) j["engineer_sample"] = space::sample_to_json(*w.engineer_sample);
    return j;
}

inline flow::WorkflowConfig workflow_from_json(const nlohmann::json& j) {
    flow::WorkflowConfig d;
    flow::WorkflowConfig w;
    w.query_size = j.value("query_size", d.query_size);
    w.wet_t1 = j.value("wet_t1", d.wet_t1);
    w.wet_t2 = j.value("wet_t2", d.wet_t2);
    const auto mode = j.value("baseline_mode", std::string("defaults"));
    if (mode == "engineer")
        w.baseline_mode = flow::BaselineMode::engineer;
    else if (mode == "defaults")
        w.baseline_mode = flow::BaselineMode::defaults;
    else
        throw std::runtime_error("project: unknown baseline_mode " + mode);
    if (j.contains("engineer_sample"))
        w.engineer_sample = space::sample_from_json(j.at("engineer_sample"));
    w.engineer_elapsed_s = j.value("engineer_elapsed_s", d.engineer_elapsed_s);
    w.run_seed = j.value("run_seed", d.run_seed);
    w.workers = j.value("workers", d.workers);
    if (j.contains("oracle")) w.oracle_config = oracle::oracle_config_from_json(j.at("oracle"));
    w.initial_wall_timeout_s = j.value("initial_wall_timeout_s", d.initial_wall_timeout_s);
    return w;
}

inline nlohmann::json project_to_json(const ProjectConfig& c) {
    nlohmann::json j{{"workdir", c.workdir},
                     {"dataset_csv", c.dataset_csv},
                     {"dataset_schema", c.dataset_schema},
                     {"oracle_store", c.oracle_store},
                     {"generator", generator_to_json(c.generator)},
                     {"campaign",
                      {{"lhs_n", c.campaign.lhs_n},
                       {"oat_levels", c.campaign.oat_levels},
                       {"wall_timeout_s", c.campaign.wall_timeout_s},
                       {"seed", c.campaign.seed}}},
                     {"esmda",
                      {{"n_a", c.esmda.n_a},
                       {"alphas", c.esmda.alphas},
                       {"seed", c.esmda.seed},
                       {"svd_tol", c.esmda.svd_tol}}},
                     {"workflow", workflow_to_json(c.workflow)},
                     {"holdout_groups", c.holdout_groups},
                     {"train_seed", c.train_seed}};
    if (!c.train_grid.empty()) {
        auto& grid = j["train_grid"] = nlohmann::json::array();
        for (const auto& g : c.train_grid) grid.push_back(oracle::oracle_config_to_json(g));
    }
    return j;
}

inline ProjectConfig project_from_json(const nlohmann::json& j) {
    ProjectConfig d;
    ProjectConfig c;
    c.workdir = j.value("workdir", d.workdir);
    c.dataset_csv = j.value("dataset_csv", d.dataset_csv);
    c.dataset_schema = j.value("dataset_schema", d.dataset_schema);
    c.oracle_store = j.value("oracle_store", d.oracle_store);
    if (j.contains("generator")) c.generator = generator_from_json(j.at("generator"));
    if (j.contains("campaign")) {
        const auto& k = j.at("campaign");
        c.campaign.lhs_n = k.value("lhs_n", d.campaign.lhs_n);
        c.campaign.oat_levels = k.value("oat_levels", d.campaign.oat_levels);
        c.campaign.wall_timeout_s = k.value("wall_timeout_s", d.campaign.wall_timeout_s);
        c.campaign.seed = k.value("seed", d.campaign.seed);
    }
    if (j.contains("esmda")) {
        const auto& k = j.at("esmda");
        c.esmda.n_a = k.value("n_a", d.esmda.n_a);
        c.esmda.alphas = k.value("alphas", d.esmda.alphas);
        c.esmda.seed = k.value("seed", d.esmda.seed);
        c.esmda.svd_tol = k.value("svd_tol", d.esmda.svd_tol);
    }
    if (j.contains("workflow")) c.workflow = workflow_from_json(j.at("workflow"));
    if (j.contains("train_grid"))
        for (const auto& g : j.at("train_grid"))
            c.train_grid.push_back(oracle::oracle_config_from_json(g));
    c.holdout_groups = j.value("holdout_groups", d.holdout_groups);
    c.train_seed = j.value("train_seed", d.train_seed);
    return c;
}

inline ProjectConfig load_project(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("project: cannot read " + path);
    auto cfg = project_from_json(nlohmann::json::parse(in));
    cfg.check();
    return cfg;
}

inline void save_project(const ProjectConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("project: cannot write " + path);
    out << project_to_json(cfg).dump(2) << "\n";
}

// ---- Ensemble and observation builders --------------------------------------

/// Case templates plus the prior log-permeability columns for every member.
inline flow::EnsembleSetup make_setup(const GeneratorSpec& g) {
    g.check();
    flow::EnsembleSetup setup;
    setup.perm_y_ratio = g.field.perm_y_ratio;
    setup.obs_columns = g.obs_columns;
    setup.templates.reserve(static_cast<std::size_t>(g.n_realizations));
    for (int j = 0; j < g.n_realizations; ++j)
        setup.templates.push_back(gen::synth_case(g.field, derive_seed(g.seed, 0x7E, j)));

    const auto prior = gen::make_prior_ensemble(g.field, g.n_realizations, g.seed);
    setup.initial_m = Eigen::MatrixXd(static_cast<Eigen::Index>(prior.front().size()),
                                      g.n_realizations);
    for (int j = 0; j < g.n_realizations; ++j)
        for (std::size_t i = 0; i < prior[static_cast<std::size_t>(j)].size(); ++i)
            setup.initial_m(static_cast<Eigen::Index>(i), j) =
                prior[static_cast<std::size_t>(j)][i];
    return setup;
}

/// The case observations are manufactured from: either one of the prior
/// members or a held-out field drawn with its own seed.
inline sim::SimulationCase truth_case(const GeneratorSpec& g) {
    g.check();
    if (g.truth_member < 0) return gen::synth_case(g.field, g.truth_seed);
    auto cs = gen::synth_case(g.field, derive_seed(g.seed, 0x7E, g.truth_member));
    const auto prior = gen::make_prior_ensemble(g.field, g.n_realizations, g.seed);
    gen::apply_log_perm(cs, prior[static_cast<std::size_t>(g.truth_member)],
                        g.field.perm_y_ratio);
    return cs;
}

/// Simulates the truth case with default controls and perturbs its production
/// curves into an observation set.
inline esmda::ObservationSet make_observations(const GeneratorSpec& g) {
    const auto cs = truth_case(g);
    const auto result = sim::run_simulation(cs, 1e15);
    if (result.status != sim::RunStatus::normal)
        throw std::runtime_error("observations: truth run ended with status " +
                                 sim::to_string(result.status));
    return flow::synth_observations(result.curves, g.obs_columns, g.obs_noise_frac, g.obs_seed);
}

// ---- Dataset campaign --------------------------------------------------------

struct CampaignOutcome {
    oracle::Dataset dataset;  // cleaned rows only
    long planned = 0;
    long discarded = 0;
};

/// Runs the sampling plan over every realization of the generated ensemble and
/// keeps the rows that survive cleaning. Failed, aborted, and degenerate runs
/// count as discards.
inline CampaignOutcome run_campaign(const ProjectConfig& cfg) {
    cfg.check();
    const auto sp = space::builtin_space();
    const auto setup = make_setup(cfg.generator);

    std::vector<std::pair<int, space::ConfigSample>> jobs;
    const auto oat = cfg.campaign.oat_levels >= 2
                         ? space::oat_plan(sp, static_cast<std::size_t>(cfg.campaign.oat_levels))
                         : std::vector<space::ConfigSample>{};
    for (int j = 0; j < cfg.generator.n_realizations; ++j) {
        for (const auto& s : oat) jobs.emplace_back(j, s);
        for (auto& s : space::lhs_sample(sp, static_cast<std::size_t>(cfg.campaign.lhs_n),
                                         derive_seed(cfg.campaign.seed, 0x1A, j)))
            jobs.emplace_back(j, std::move(s));
    }

    oracle::Dataset raw;
    raw.schema = oracle::builtin_schema();
    std::vector<oracle::DatasetRow> rows(jobs.size());
    const auto zero_features = std::vector<double>(raw.schema.feature_names.size(), 0.0);

    std::atomic<std::size_t> cursor{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= jobs.size()) return;
            const auto& [j, sample] = jobs[i];
            auto& row = rows[i];
            row.group_id = "r" + std::to_string(j);
            row.config = space::encode(sample, sp);
            row.features = zero_features;
            try {
                const auto cs = flow::detail::materialize_case(setup, j, setup.initial_m, sample);
                const auto result = sim::run_simulation(cs, cfg.campaign.wall_timeout_s);
                row.status = sim::to_string(result.status);
                row.elapsed_s = result.elapsed_s;
                row.mbe_o = result.mbe_oil;
                row.mbe_w = result.mbe_water;
                row.mbe_g = result.mbe_gas;
                if (result.status == sim::RunStatus::normal)
                    row.features = logfeat::flatten(logfeat::features_from_result(result, cs));
            } catch (const std::exception&) {
                row.status = "ERROR";
            }
        }
    };
    std::vector<std::thread> pool;
    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.workflow.workers),
                                                 std::max<std::size_t>(jobs.size(), 1));
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    raw.rows = std::move(rows);
    CampaignOutcome out;
    out.planned = static_cast<long>(jobs.size());
    out.dataset = oracle::clean_dataset(raw);
    out.discarded = out.planned - static_cast<long>(out.dataset.rows.size());
    return out;
}

// ---- Commands ----------------------------------------------------------------

namespace detail {

inline std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("project: cannot write " + path.string());
    out << j.dump(2) << "\n";
}

inline std::filesystem::path ensure_dir(const std::string& dir) {
    std::filesystem::path p(dir);
    std::filesystem::create_directories(p);
    return p;
}

/// Output root for a command: the explicit override or the configured workdir.
inline std::string base_dir(const ProjectConfig& cfg, const std::string& out_dir) {
    return out_dir.empty() ? cfg.workdir : out_dir;
}

class WallTimer {
  public:
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// Runs one case file, optionally with a controls-override sample, and writes
/// the result document, the run log, and the output curves.
inline int cmd_simulate(const ProjectConfig& cfg, const std::string& case_path,
                        const std::string& controls_path, const std::string& out_dir) {
    detail::WallTimer timer;
    sim::SimulationCase cs;
    try {
        cs = sim::load_case(case_path);
        if (!controls_path.empty()) {
            std::ifstream in(controls_path);
            if (!in) throw std::runtime_error("simulate: cannot read " + controls_path);
            const auto sample = space::sample_from_json(nlohmann::json::parse(in));
            const auto sp = space::builtin_space();
            const auto violations = space::validate(sample, sp);
            if (!violations.empty())
                throw std::runtime_error("simulate: invalid controls: " + violations.front());
            cs.controls = sim::controls_from_sample(sample);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        const auto out = detail::ensure_dir(detail::base_dir(cfg, out_dir));
        const auto result = sim::run_simulation(cs, cfg.workflow.initial_wall_timeout_s);

        detail::write_json_file(out / "result.json", sim::result_to_json(result));
        std::ofstream log(out / "run.log");
        log << logfeat::to_text(logfeat::emit_log(result, cs));
        write_csv(result.curves, (out / "curves.csv").string());
        write_csv(result.fip_series, (out / "fip.csv").string());
        detail::write_json_file(out / "manifest.json",
                                {{"command", "simulate"},
                                 {"case", case_path},
                                 {"status", sim::to_string(result.status)},
                                 {"timestamp", detail::iso_timestamp()},
                                 {"wall_clock_s", timer.seconds()}});

        if (result.status != sim::RunStatus::normal) {
            std::cerr << "simulate: run ended with status " << sim::to_string(result.status)
                      << "\n";
            return kExitSimulation;
        }
        std::cout << "simulate: normal termination after " << result.counters.timesteps
                  << " timesteps, " << format_double(result.elapsed_s) << " s elapsed\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSimulation;
    }
}

/// Builds the training corpus: campaign over the generated ensemble, cleaned
/// rows to CSV, discard accounting to the manifest.
inline int cmd_dataset(const ProjectConfig& cfg, const std::string& out_dir) {
    detail::WallTimer timer;
    try {
        cfg.check();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        const auto out = detail::ensure_dir(detail::base_dir(cfg, out_dir));
        const auto outcome = run_campaign(cfg);
        oracle::save_dataset(outcome.dataset, (out / cfg.dataset_csv).string(),
                             (out / cfg.dataset_schema).string());
        detail::write_json_file(
            out / "dataset_manifest.json",
            {{"command", "dataset"},
             {"planned_runs", outcome.planned},
             {"kept_rows", outcome.dataset.rows.size()},
             {"discarded_runs", outcome.discarded},
             {"fingerprint", oracle::dataset_fingerprint(outcome.dataset)},
             {"generator_seed", cfg.generator.seed},
             {"campaign_seed", cfg.campaign.seed},
             {"timestamp", detail::iso_timestamp()},
             {"wall_clock_s", timer.seconds()}});
        std::cout << "dataset: kept " << outcome.dataset.rows.size() << " of " << outcome.planned
                  << " runs (" << outcome.discarded << " discarded)\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSimulation;
    }
}

/// Grid search with leave-one-group-out validation over the stored dataset;
/// persists the winning oracle and the full report.
inline int cmd_train(const ProjectConfig& cfg, const std::string& out_dir) {
    detail::WallTimer timer;
    oracle::Dataset ds;
    std::filesystem::path out;
    try {
        cfg.check();
        out = detail::ensure_dir(detail::base_dir(cfg, out_dir));
        ds = oracle::load_dataset((out / cfg.dataset_csv).string(),
                                  (out / cfg.dataset_schema).string());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        const auto grid = cfg.train_grid.empty() ? default_train_grid() : cfg.train_grid;
        const auto result = oracle::logo_cv(ds, grid, cfg.train_seed, cfg.holdout_groups);
        oracle::save_oracle(result.best, (out / cfg.oracle_store).string());
        write_csv(oracle::cv_report_to_csv(result.report), (out / "cv_report.csv").string());

        const auto& best_cfg = result.report.configs[result.report.best_index];
        detail::write_json_file(out / "train_manifest.json",
                                {{"command", "train"},
                                 {"grid_size", grid.size()},
                                 {"best", oracle::oracle_config_to_json(result.best.config)},
                                 {"best_mean_validation_mape", best_cfg.mean_validation.mape},
                                 {"dataset_fingerprint", oracle::dataset_fingerprint(ds)},
                                 {"train_seed", cfg.train_seed},
                                 {"holdout_groups", cfg.holdout_groups},
                                 {"timestamp", detail::iso_timestamp()},
                                 {"wall_clock_s", timer.seconds()}});
        std::cout << "train: best " << result.best.config.describe() << " with mean validation MAPE "
                  << format_double(best_cfg.mean_validation.mape) << "%\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitTraining;
    }
}

/// History match, tuned arm and/or baseline arm, sharing every seed so the two
/// arms differ only in configuration tuning.
inline int cmd_esmda(const ProjectConfig& cfg, bool tuned, bool baseline,
                     const std::string& out_dir) {
    detail::WallTimer timer;
    flow::EnsembleSetup setup;
    esmda::ObservationSet obs;
    esmda::AssimilationConfig ac;
    flow::WorkflowConfig wf;
    oracle::Dataset initial;
    std::filesystem::path out;
    nlohmann::json oracle_source = "config";
    if (!tuned && !baseline) tuned = baseline = true;

    try {
        cfg.check();
        if (cfg.generator.n_realizations < 2)
            throw std::runtime_error("esmda: needs at least 2 realizations");
        out = detail::ensure_dir(detail::base_dir(cfg, out_dir));
        ac = cfg.esmda.assimilation_config();
        esmda::validate_alphas(ac.alphas);

        wf = cfg.workflow;
        wf.tuning_enabled = true;
        const auto oracle_path = out / cfg.oracle_store;
        if (std::filesystem::exists(oracle_path)) {
            wf.oracle_config = oracle::load_oracle(oracle_path.string()).config;
            oracle_source = oracle_path.string();
        }

        const auto ds_path = out / cfg.dataset_csv;
        const auto schema_path = out / cfg.dataset_schema;
        if (std::filesystem::exists(ds_path) && std::filesystem::exists(schema_path)) {
            initial = oracle::load_dataset(ds_path.string(), schema_path.string());
            if (!(initial.schema == oracle::builtin_schema()))
                throw std::runtime_error("esmda: stored dataset schema does not match");
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        setup = make_setup(cfg.generator);
        obs = make_observations(cfg.generator);

        nlohmann::json arm_times;
        auto run_arm = [&](const char* name, bool tune) {
            detail::WallTimer arm_timer;
            const auto result = tune ? flow::coupled_run(setup, obs, ac, wf, initial)
                                     : flow::baseline_run(setup, obs, ac, wf, initial);
            const auto sp = space::builtin_space();
            write_csv(flow::ledger_to_csv(result.ledger, sp),
                      (out / (std::string("ledger_") + name + ".csv")).string());
            esmda::save_ledger(result.esmda_ledger, (out / (std::string("esmda_") + name)).string());
            arm_times[name] = arm_timer.seconds();
            std::cout << "esmda: " << name << " arm finished " << result.ledger.entries.size()
                      << " runs over " << result.n_rounds << " rounds\n";
        };
        if (tuned) run_arm("tuned", true);
        if (baseline) run_arm("baseline", false);

        nlohmann::json arms = nlohmann::json::array();
        if (tuned) arms.push_back("tuned");
        if (baseline) arms.push_back("baseline");
        detail::write_json_file(
            out / "esmda_manifest.json",
            {{"command", "esmda"},
             {"arms", arms},
             {"n_realizations", cfg.generator.n_realizations},
             {"n_assimilations", ac.n_a},
             {"total_rounds", flow::total_rounds(ac.n_a)},
             {"planned_simulations_per_arm",
              flow::planned_simulation_count(ac.n_a, cfg.generator.n_realizations)},
             {"alphas", ac.alphas},
             {"generator_seed", cfg.generator.seed},
             {"obs_seed", cfg.generator.obs_seed},
             {"esmda_seed", ac.seed},
             {"run_seed", wf.run_seed},
             {"oracle_config", oracle::oracle_config_to_json(wf.oracle_config)},
             {"oracle_config_source", oracle_source},
             {"initial_dataset_rows", initial.rows.size()},
             {"timestamp", detail::iso_timestamp()},
             {"arm_wall_clock_s", arm_times},
             {"wall_clock_s", timer.seconds()}});
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSimulation;
    }
}

/// Compares two persisted run ledgers and emits the plot-ready tables.
inline int cmd_report(const std::string& tuned_csv, const std::string& baseline_csv,
                      const std::string& out_dir, double t1 = 0.05, double t2 = 0.10) {
    detail::WallTimer timer;
    try {
        const auto sp = space::builtin_space();
        const auto tuned = flow::result_from_ledger(flow::ledger_from_csv(read_csv(tuned_csv), sp));
        const auto baseline =
            flow::result_from_ledger(flow::ledger_from_csv(read_csv(baseline_csv), sp));
        const auto rep = flow::speedup_report(tuned, baseline, t1, t2);

        const auto out = detail::ensure_dir(out_dir.empty() ? "." : out_dir);
        write_csv(rep.rounds, (out / "rounds.csv").string());
        write_csv(rep.summary, (out / "summary.csv").string());
        write_csv(rep.mbe_histogram, (out / "mbe_histogram.csv").string());
        write_csv(rep.elapsed_histogram, (out / "elapsed_histogram.csv").string());
        write_csv(rep.wet_bands, (out / "wet_bands.csv").string());
        detail::write_json_file(out / "report_manifest.json",
                                {{"command", "report"},
                                 {"tuned_ledger", tuned_csv},
                                 {"baseline_ledger", baseline_csv},
                                 {"mean_elapsed_speedup", rep.mean_elapsed_speedup},
                                 {"timestamp", detail::iso_timestamp()},
                                 {"wall_clock_s", timer.seconds()}});
        std::cout << "report: mean elapsed speedup " << format_double(rep.mean_elapsed_speedup)
                  << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

}  // namespace rstune::project
