#pragma once

#include <atomic>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rstune/ensemble_gen.hpp"
#include "rstune/esmda.hpp"
#include "rstune/logfeat.hpp"
#include "rstune/oracle/cv.hpp"
#include "rstune/oracle/oracle.hpp"
#include "rstune/searchspace.hpp"
#include "rstune/simkernel/simulator.hpp"

namespace rstune::flow {

inline constexpr double kWetMidPenalty = 2.0;
inline constexpr double kWetHighPenalty = 1000.0;

enum class BaselineMode { defaults, engineer };

struct WorkflowConfig {
    int query_size = 10000;
    double wet_t1 = 0.05;
    double wet_t2 = 0.10;
    bool tuning_enabled = true;
    BaselineMode baseline_mode = BaselineMode::defaults;
    std::optional<space::ConfigSample> engineer_sample;
    double engineer_elapsed_s = 0.0;  // observed elapsed of the engineer sample, when known
    std::uint64_t run_seed = 0;
    int workers = 1;
    oracle::OracleConfig oracle_config;
    double initial_wall_timeout_s = 3600.0;

    void check() const {
        if (query_size < 1) throw std::runtime_error("workflow: query_size must be at least 1");
        if (!(0.0 < wet_t1 && wet_t1 < wet_t2))
            throw std::runtime_error("workflow: thresholds must satisfy 0 < t1 < t2");
        if (workers < 1) throw std::runtime_error("workflow: workers must be at least 1");
        if (baseline_mode == BaselineMode::engineer && !engineer_sample)
            throw std::runtime_error("workflow: engineer baseline requires a sample");
    }
};

/// Elapsed time weighted by the quality band the run falls into. The
/// mean_abs_mbe argument is a fraction, not a percentage.
inline double weighted_elapsed_time(double et, double mean_abs_mbe, double t1 = 0.05,
                                    double t2 = 0.10) {
    if (!(et > 0.0)) throw std::runtime_error("wet: elapsed time must be positive");
    if (mean_abs_mbe < 0.0) throw std::runtime_error("wet: mean |MBE| must be non-negative");
    if (mean_abs_mbe <= t1) return et;
    if (mean_abs_mbe <= t2) return et * kWetMidPenalty;
    return et * kWetHighPenalty;
}

inline int wet_band(double mean_abs_mbe, double t1 = 0.05, double t2 = 0.10) {
    if (mean_abs_mbe <= t1) return 0;
    if (mean_abs_mbe <= t2) return 1;
    return 2;
}

struct CandidateScore {
    space::ConfigSample sample;
    double predicted_elapsed_s = 0.0;
    double predicted_mean_abs_mbe = 0.0;
    double wet = 0.0;
};

struct QueryResult {
    std::vector<CandidateScore> ranking;  // in candidate order, not sorted
    std::size_t best_index = 0;

    [[nodiscard]] const CandidateScore& best() const { return ranking[best_index]; }
};

/// Scores an LHS batch of candidate configurations for one realization and
/// returns the WET-minimal one. Ties prefer the smaller predicted mean |MBE|,
/// then the earlier candidate.
inline QueryResult query_oracle(const oracle::TrainedOracle& o,
                                const logfeat::FeatureVector& features,
                                const space::SearchSpace& sp, int query_size, std::uint64_t seed,
                                double t1 = 0.05, double t2 = 0.10) {
    const auto samples = space::lhs_sample(sp, query_size, seed);
    const auto flat = logfeat::flatten(features);

    QueryResult out;
    out.ranking.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto pred = o.predict(flat, space::encode(samples[i], sp));
        CandidateScore score;
        score.sample = samples[i];
        score.predicted_elapsed_s = pred.elapsed_s;
        score.predicted_mean_abs_mbe = pred.mean_abs_mbe;
        score.wet = weighted_elapsed_time(pred.elapsed_s, pred.mean_abs_mbe, t1, t2);
        out.ranking.push_back(std::move(score));

        const auto& cur = out.ranking.back();
        const auto& best = out.ranking[out.best_index];
        if (cur.wet < best.wet ||
            (cur.wet == best.wet && cur.predicted_mean_abs_mbe < best.predicted_mean_abs_mbe))
            out.best_index = i;
    }
    return out;
}

struct RunRecord {
    int round = 0;        // 1-based
    int realization = 0;  // 0-based
    space::ConfigSample sample;
    std::string status;
    double elapsed_s = 0.0, cpu_s = 0.0, memory_peak_mb = 0.0;
    double days_simulated = 0.0, average_implicitness = 0.0;
    sim::RunCounters counters;
    double mbe_o = 0.0, mbe_w = 0.0, mbe_g = 0.0;
    double mean_abs_mbe = 0.0;  // fraction
    logfeat::FeatureVector features;
    bool tuned = false;
    double predicted_elapsed_s = 0.0, predicted_mean_abs_mbe = 0.0, predicted_wet = 0.0;
};

struct RunLedger {
    std::vector<RunRecord> entries;

    [[nodiscard]] std::vector<const RunRecord*> round_entries(int round) const {
        std::vector<const RunRecord*> out;
        for (const auto& e : entries)
            if (e.round == round) out.push_back(&e);
        return out;
    }
};

struct WorkflowResult {
    esmda::EnsembleState final_state;
    RunLedger ledger;
    esmda::EsmdaLedger esmda_ledger;
    int n_rounds = 0;
    int n_realizations = 0;
};

/// Geological ensemble plus the per-realization case templates the workflow
/// simulates. Column j of initial_m is realization j's log-permeability map.
struct EnsembleSetup {
    std::vector<sim::SimulationCase> templates;
    Eigen::MatrixXd initial_m;
    double perm_y_ratio = 0.5;
    std::vector<std::string> obs_columns = {"PRD1:OPT", "PRD1:WPT"};
};

/// Stacks the selected curve columns (rows after day zero) into one vector.
inline Eigen::VectorXd extract_observations(const CsvTable& curves,
                                            const std::vector<std::string>& columns) {
    const int day_col = curves.column("day");
    if (day_col < 0) throw std::runtime_error("observations: curves lack a day column");
    std::vector<double> values;
    for (const auto& name : columns) {
        const int c = curves.column(name);
        if (c < 0) throw std::runtime_error("observations: missing curve column " + name);
        for (const auto& row : curves.rows) {
            if (std::stod(row[static_cast<std::size_t>(day_col)]) <= 0.0) continue;
            values.push_back(std::stod(row[static_cast<std::size_t>(c)]));
        }
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Eigen::Index>(i)] = values[i];
    return v;
}

/// Observed data from a designated truth run: truth curves plus Gaussian noise
/// whose standard deviation is noise_frac of each series' peak magnitude.
inline esmda::ObservationSet synth_observations(const CsvTable& truth_curves,
                                                const std::vector<std::string>& columns,
                                                double noise_frac, std::uint64_t seed) {
    const auto clean = extract_observations(truth_curves, columns);
    const auto per_series = clean.size() / static_cast<Eigen::Index>(columns.size());

    esmda::ObservationSet obs;
    obs.d_obs = clean;
    obs.variances = Eigen::VectorXd(clean.size());
    Rng rng(derive_seed(seed, 0x0B5));
    for (std::size_t s = 0; s < columns.size(); ++s) {
        const auto offset = static_cast<Eigen::Index>(s) * per_series;
        double peak = 0.0;
        for (Eigen::Index i = 0; i < per_series; ++i)
            peak = std::max(peak, std::abs(clean[offset + i]));
        const double sigma = std::max(noise_frac * peak, 1e-6);
        for (Eigen::Index i = 0; i < per_series; ++i) {
            obs.d_obs[offset + i] += sigma * rng.normal();
            obs.variances[offset + i] = sigma * sigma;
            obs.labels.push_back(columns[s] + "@" + std::to_string(i));
        }
    }
    return obs;
}

inline int total_rounds(int n_assimilations) { return n_assimilations + 1; }

/// Table-style accounting: every round, including the forecast, simulates the
/// whole ensemble once.
inline long planned_simulation_count(int n_assimilations, int n_realizations) {
    return static_cast<long>(total_rounds(n_assimilations)) * n_realizations;
}

inline oracle::Dataset ledger_to_dataset(const RunLedger& ledger, const space::SearchSpace& sp) {
    oracle::Dataset ds;
    ds.schema = {logfeat::feature_names(), space::encoding_names(sp)};
    for (const auto& e : ledger.entries) {
        oracle::DatasetRow row;
        row.group_id = "r" + std::to_string(e.realization);
        row.status = e.status;
        row.features = logfeat::flatten(e.features);
        row.config = space::encode(e.sample, sp);
        row.elapsed_s = e.elapsed_s;
        row.mbe_o = e.mbe_o;
        row.mbe_w = e.mbe_w;
        row.mbe_g = e.mbe_g;
        ds.rows.push_back(std::move(row));
    }
    return ds;
}

namespace detail {

struct RoundOutcome {
    std::vector<RunRecord> records;
    Eigen::MatrixXd d_sim;
};

inline sim::SimulationCase materialize_case(const EnsembleSetup& setup, int realization,
                                            const Eigen::MatrixXd& m,
                                            const space::ConfigSample& sample) {
    sim::SimulationCase cs = setup.templates[static_cast<std::size_t>(realization)];
    std::vector<double> log_perm(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        log_perm[static_cast<std::size_t>(i)] = std::clamp(m(i, realization), 0.0, 9.2);
    gen::apply_log_perm(cs, log_perm, setup.perm_y_ratio);
    cs.controls = sim::controls_from_sample(sample);
    return cs;
}

/// Runs one round over all realizations with a bounded worker pool. Results
/// land in realization order, so the outcome is schedule-independent.
inline RoundOutcome run_round(const EnsembleSetup& setup, const Eigen::MatrixXd& m, int round,
                              const std::vector<space::ConfigSample>& samples,
                              const std::vector<double>& timeouts, int workers) {
    const auto n_r = static_cast<int>(setup.templates.size());
    std::vector<RunRecord> records(static_cast<std::size_t>(n_r));
    std::vector<Eigen::VectorXd> obs(static_cast<std::size_t>(n_r));
    std::vector<std::string> errors(static_cast<std::size_t>(n_r));

    std::atomic<int> cursor{0};
    auto worker = [&]() {
        for (;;) {
            const int j = cursor.fetch_add(1);
            if (j >= n_r) return;
            try {
                const auto cs = materialize_case(setup, j, m, samples[static_cast<std::size_t>(j)]);
                const auto result =
                    sim::run_simulation(cs, timeouts[static_cast<std::size_t>(j)]);

                RunRecord rec;
                rec.round = round;
                rec.realization = j;
                rec.sample = samples[static_cast<std::size_t>(j)];
                rec.status = sim::to_string(result.status);
                rec.elapsed_s = result.elapsed_s;
                rec.cpu_s = result.cpu_s;
                rec.memory_peak_mb = result.memory_peak_mb;
                rec.days_simulated = result.days_simulated;
                rec.average_implicitness = result.average_implicitness;
                rec.counters = result.counters;
                rec.mbe_o = result.mbe_oil;
                rec.mbe_w = result.mbe_water;
                rec.mbe_g = result.mbe_gas;
                rec.mean_abs_mbe =
                    (std::abs(rec.mbe_o) + std::abs(rec.mbe_w) + std::abs(rec.mbe_g)) / 3.0 /
                    100.0;
                if (result.status == sim::RunStatus::normal)
                    rec.features = logfeat::features_from_result(result, cs);
                records[static_cast<std::size_t>(j)] = std::move(rec);

                if (result.status == sim::RunStatus::normal)
                    obs[static_cast<std::size_t>(j)] =
                        extract_observations(result.curves, setup.obs_columns);
            } catch (const std::exception& e) {
                errors[static_cast<std::size_t>(j)] = e.what();
            }
        }
    };

    std::vector<std::thread> pool;
    const int n_workers = std::min(workers, n_r);
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    for (int j = 0; j < n_r; ++j) {
        if (!errors[static_cast<std::size_t>(j)].empty())
            throw std::runtime_error("workflow: member " + std::to_string(j) + " failed in round " +
                                     std::to_string(round) + ": " +
                                     errors[static_cast<std::size_t>(j)]);
        const auto& rec = records[static_cast<std::size_t>(j)];
        if (rec.status != sim::to_string(sim::RunStatus::normal))
            throw std::runtime_error("workflow: member " + std::to_string(j) +
                                     " ended with status " + rec.status + " in round " +
                                     std::to_string(round));
    }

    RoundOutcome out;
    out.records = std::move(records);
    out.d_sim = Eigen::MatrixXd(obs.front().size(), n_r);
    for (int j = 0; j < n_r; ++j) {
        if (obs[static_cast<std::size_t>(j)].size() != out.d_sim.rows())
            throw std::runtime_error("workflow: inconsistent observation length for member " +
                                     std::to_string(j));
        out.d_sim.col(j) = obs[static_cast<std::size_t>(j)];
    }
    return out;
}

}  // namespace detail

/// Ensemble history match with per-round configuration tuning. Round 1 uses
/// the baseline sample everywhere; each later round refits the performance
/// model on everything simulated so far (plus any starting corpus), asks it
/// for the WET-best configuration per realization, and simulates with the
/// winners. The geological update runs after each of the first n_a rounds and
/// the last round is the forecast of the final ensemble.
inline WorkflowResult coupled_run(const EnsembleSetup& setup, const esmda::ObservationSet& obs,
                                  const esmda::AssimilationConfig& esmda_config,
                                  const WorkflowConfig& config,
                                  const oracle::Dataset& initial_dataset = {}) {
    config.check();
    obs.check();
    if (setup.templates.empty()) throw std::runtime_error("workflow: empty ensemble");
    for (const auto& t : setup.templates) t.check();
    if (setup.initial_m.cols() != static_cast<Eigen::Index>(setup.templates.size()))
        throw std::runtime_error("workflow: ensemble matrix does not match template count");
    if (static_cast<int>(esmda_config.alphas.size()) != esmda_config.n_a)
        throw std::runtime_error("workflow: alpha schedule length differs from n_a");
    esmda::validate_alphas(esmda_config.alphas);

    const auto sp = space::builtin_space();
    const auto n_r = static_cast<int>(setup.templates.size());
    const int rounds = total_rounds(esmda_config.n_a);

    const space::ConfigSample baseline = config.baseline_mode == BaselineMode::engineer
                                             ? *config.engineer_sample
                                             : sp.defaults();
    {
        const auto violations = space::validate(baseline, sp);
        if (!violations.empty())
            throw std::runtime_error("workflow: baseline sample invalid: " + violations.front());
    }

    WorkflowResult out;
    out.n_rounds = rounds;
    out.n_realizations = n_r;
    out.esmda_ledger.alphas = esmda_config.alphas;
    out.esmda_ledger.seed = esmda_config.seed;

    Eigen::MatrixXd m = setup.initial_m;
    out.esmda_ledger.m_snapshots.push_back(m);

    std::vector<double> round1_elapsed(static_cast<std::size_t>(n_r), 0.0);

    for (int round = 1; round <= rounds; ++round) {
        std::vector<space::ConfigSample> samples(static_cast<std::size_t>(n_r), baseline);
        std::vector<CandidateScore> chosen(static_cast<std::size_t>(n_r));
        bool tuned_round = false;

        if (round > 1 && config.tuning_enabled) {
            oracle::Dataset accumulated = initial_dataset;
            if (accumulated.schema.feature_names.empty())
                accumulated.schema = {logfeat::feature_names(), space::encoding_names(sp)};
            const auto ledger_ds = ledger_to_dataset(out.ledger, sp);
            accumulated.rows.insert(accumulated.rows.end(), ledger_ds.rows.begin(),
                                    ledger_ds.rows.end());
            const auto training = oracle::clean_dataset(accumulated);
            const auto model =
                oracle::train_oracle(training, config.oracle_config,
                                     derive_seed(config.run_seed, 0x0A, static_cast<std::uint64_t>(round)));

            const auto prev = out.ledger.round_entries(round - 1);
            for (int j = 0; j < n_r; ++j) {
                const auto query_seed =
                    derive_seed(config.run_seed, static_cast<std::uint64_t>(round),
                                static_cast<std::uint64_t>(j));
                const auto q = query_oracle(model, prev[static_cast<std::size_t>(j)]->features, sp,
                                            config.query_size, query_seed, config.wet_t1,
                                            config.wet_t2);
                samples[static_cast<std::size_t>(j)] = q.best().sample;
                chosen[static_cast<std::size_t>(j)] = q.best();
            }
            tuned_round = true;
        }

        std::vector<double> timeouts(static_cast<std::size_t>(n_r), config.initial_wall_timeout_s);
        if (round > 1)
            for (int j = 0; j < n_r; ++j)
                timeouts[static_cast<std::size_t>(j)] =
                    2.0 * std::max(round1_elapsed[static_cast<std::size_t>(j)],
                                   config.engineer_elapsed_s);

        auto outcome = detail::run_round(setup, m, round, samples, timeouts, config.workers);
        if (round == 1)
            for (int j = 0; j < n_r; ++j)
                round1_elapsed[static_cast<std::size_t>(j)] =
                    outcome.records[static_cast<std::size_t>(j)].elapsed_s;

        for (int j = 0; j < n_r; ++j) {
            auto& rec = outcome.records[static_cast<std::size_t>(j)];
            if (tuned_round) {
                rec.tuned = true;
                const auto& c = chosen[static_cast<std::size_t>(j)];
                rec.predicted_elapsed_s = c.predicted_elapsed_s;
                rec.predicted_mean_abs_mbe = c.predicted_mean_abs_mbe;
                rec.predicted_wet = c.wet;
            }
            out.ledger.entries.push_back(std::move(rec));
        }
        out.esmda_ledger.d_sims.push_back(outcome.d_sim);

        if (round <= esmda_config.n_a) {
            const double alpha = esmda_config.alphas[static_cast<std::size_t>(round - 1)];
            Rng rng(derive_seed(esmda_config.seed, 0xDA, static_cast<std::uint64_t>(round - 1)));
            const auto d_uc = esmda::perturb_observations(obs, alpha, n_r, rng);
            const auto cov = esmda::cross_covariance(m, outcome.d_sim);
            const auto k = esmda::kalman_gain(cov.c_md, cov.c_dd, obs.variances, alpha,
                                              esmda_config.svd_tol);
            m = esmda::update_ensemble(m, outcome.d_sim, d_uc, k);
            out.esmda_ledger.m_snapshots.push_back(m);
        }
    }

    out.final_state.m = m;
    out.final_state.assimilation_index = esmda_config.n_a;
    return out;
}

/// The control arm: the identical loop with tuning disabled, sharing all seeds.
inline WorkflowResult baseline_run(const EnsembleSetup& setup, const esmda::ObservationSet& obs,
                                   const esmda::AssimilationConfig& esmda_config,
                                   const WorkflowConfig& config,
                                   const oracle::Dataset& initial_dataset = {}) {
    WorkflowConfig off = config;
    off.tuning_enabled = false;
    return coupled_run(setup, obs, esmda_config, off, initial_dataset);
}

// ---- Reports -------------------------------------------------------------

struct SpeedupReport {
    CsvTable rounds;             // per-round totals and means for both arms
    CsvTable summary;            // overall totals, means, speedup
    CsvTable mbe_histogram;      // per-run mean |MBE| distribution per arm
    CsvTable elapsed_histogram;  // per-run elapsed time distribution per arm
    CsvTable wet_bands;          // run counts per quality band per arm
    double mean_elapsed_speedup = 0.0;
};

namespace detail {

/// Ten equal-width bins over [0, max(values)], counted separately per arm.
inline CsvTable histogram_table(const std::vector<double>& tuned,
                                const std::vector<double>& baseline) {
    double peak = 0.0;
    for (double v : tuned) peak = std::max(peak, v);
    for (double v : baseline) peak = std::max(peak, v);
    const int bins = 10;
    const double width = peak > 0.0 ? peak / bins : 1.0;
    auto bin_of = [&](double v) { return std::min(bins - 1, static_cast<int>(v / width)); };

    std::vector<int> th(bins, 0), bh(bins, 0);
    for (double v : tuned) ++th[static_cast<std::size_t>(bin_of(v))];
    for (double v : baseline) ++bh[static_cast<std::size_t>(bin_of(v))];

    CsvTable t;
    t.header = {"bin", "lo", "hi", "tuned_count", "baseline_count"};
    for (int b = 0; b < bins; ++b)
        t.add_row({std::to_string(b), format_double(b * width), format_double((b + 1) * width),
                   std::to_string(th[static_cast<std::size_t>(b)]),
                   std::to_string(bh[static_cast<std::size_t>(b)])});
    return t;
}

}  // namespace detail

inline SpeedupReport speedup_report(const WorkflowResult& tuned, const WorkflowResult& baseline,
                                    double t1 = 0.05, double t2 = 0.10) {
    if (tuned.n_rounds != baseline.n_rounds || tuned.n_realizations != baseline.n_realizations ||
        tuned.ledger.entries.size() != baseline.ledger.entries.size())
        throw std::runtime_error("report: ledgers have different shapes");

    SpeedupReport rep;
    rep.rounds.header = {"round",         "tuned_total_s", "baseline_total_s",
                         "tuned_mean_s",  "baseline_mean_s", "round_speedup"};

    double tuned_total = 0.0, baseline_total = 0.0;
    for (int round = 1; round <= tuned.n_rounds; ++round) {
        double ts = 0.0, bs = 0.0;
        int n = 0;
        for (const auto* e : tuned.ledger.round_entries(round)) {
            ts += e->elapsed_s;
            ++n;
        }
        for (const auto* e : baseline.ledger.round_entries(round)) bs += e->elapsed_s;
        tuned_total += ts;
        baseline_total += bs;
        rep.rounds.add_row({std::to_string(round), format_double(ts), format_double(bs),
                            format_double(ts / n), format_double(bs / n),
                            format_double(bs / ts)});
    }

    const auto n_runs = static_cast<double>(tuned.ledger.entries.size());
    rep.mean_elapsed_speedup = (baseline_total / n_runs) / (tuned_total / n_runs);
    rep.summary.header = {"arm", "runs", "total_elapsed_s", "mean_elapsed_s", "mean_speedup"};
    rep.summary.add_row({"tuned", std::to_string(tuned.ledger.entries.size()),
                         format_double(tuned_total), format_double(tuned_total / n_runs),
                         format_double(rep.mean_elapsed_speedup)});
    rep.summary.add_row({"baseline", std::to_string(baseline.ledger.entries.size()),
                         format_double(baseline_total), format_double(baseline_total / n_runs),
                         "1"});

    std::vector<double> tuned_mbe, baseline_mbe, tuned_et, baseline_et;
    for (const auto& e : tuned.ledger.entries) {
        tuned_mbe.push_back(e.mean_abs_mbe);
        tuned_et.push_back(e.elapsed_s);
    }
    for (const auto& e : baseline.ledger.entries) {
        baseline_mbe.push_back(e.mean_abs_mbe);
        baseline_et.push_back(e.elapsed_s);
    }
    rep.mbe_histogram = detail::histogram_table(tuned_mbe, baseline_mbe);
    rep.elapsed_histogram = detail::histogram_table(tuned_et, baseline_et);

    rep.wet_bands.header = {"band", "tuned_count", "baseline_count"};
    std::vector<int> tuned_bands(3, 0), baseline_bands(3, 0);
    for (const auto& e : tuned.ledger.entries)
        ++tuned_bands[static_cast<std::size_t>(wet_band(e.mean_abs_mbe, t1, t2))];
    for (const auto& e : baseline.ledger.entries)
        ++baseline_bands[static_cast<std::size_t>(wet_band(e.mean_abs_mbe, t1, t2))];
    const std::vector<std::string> band_names{"<=t1", "<=t2", ">t2"};
    for (int b = 0; b < 3; ++b)
        rep.wet_bands.add_row({band_names[static_cast<std::size_t>(b)],
                               std::to_string(tuned_bands[static_cast<std::size_t>(b)]),
                               std::to_string(baseline_bands[static_cast<std::size_t>(b)])});
    return rep;
}

// ---- Ledger persistence -----------------------------------------------------

inline CsvTable ledger_to_csv(const RunLedger& ledger, const space::SearchSpace& sp) {
    CsvTable t;
    t.header = {"round",
                "realization",
                "tuned",
                "status",
                "elapsed_s",
                "cpu_s",
                "memory_peak_mb",
                "days_simulated",
                "avg_implicitness",
                "timesteps",
                "newton_cycles",
                "linear_iterations",
                "solver_failures",
                "cuts",
                "mbe_o",
                "mbe_w",
                "mbe_g",
                "mean_abs_mbe",
                "predicted_elapsed_s",
                "predicted_mean_abs_mbe",
                "predicted_wet"};
    for (const auto& p : sp.params) t.header.push_back("param:" + p.name);

    for (const auto& e : ledger.entries) {
        std::vector<std::string> row{std::to_string(e.round),
                                     std::to_string(e.realization),
                                     e.tuned ? "1" : "0",
                                     e.status,
                                     format_double(e.elapsed_s),
                                     format_double(e.cpu_s),
                                     format_double(e.memory_peak_mb),
                                     format_double(e.days_simulated),
                                     format_double(e.average_implicitness),
                                     std::to_string(e.counters.timesteps),
                                     std::to_string(e.counters.newton_cycles),
                                     std::to_string(e.counters.linear_iterations),
                                     std::to_string(e.counters.solver_failures),
                                     std::to_string(e.counters.cuts),
                                     format_double(e.mbe_o),
                                     format_double(e.mbe_w),
                                     format_double(e.mbe_g),
                                     format_double(e.mean_abs_mbe),
                                     format_double(e.predicted_elapsed_s),
                                     format_double(e.predicted_mean_abs_mbe),
                                     format_double(e.predicted_wet)};
        for (const auto& p : sp.params) {
            const auto& v = e.sample.values.at(p.name);
            if (std::holds_alternative<double>(v))
                row.push_back(format_double(std::get<double>(v)));
            else
                row.push_back(std::get<std::string>(v));
        }
        t.add_row(std::move(row));
    }
    return t;
}

/// Rebuilds the summary side of a ledger from its CSV form. Feature vectors
/// are not stored in the CSV, so entries come back with empty features.
inline RunLedger ledger_from_csv(const CsvTable& t, const space::SearchSpace& sp) {
    auto col = [&](const std::string& name) {
        const int c = t.column(name);
        if (c < 0) throw std::runtime_error("ledger: missing column " + name);
        return static_cast<std::size_t>(c);
    };
    const auto c_round = col("round"), c_real = col("realization"), c_tuned = col("tuned");
    const auto c_status = col("status"), c_et = col("elapsed_s"), c_cpu = col("cpu_s");
    const auto c_mem = col("memory_peak_mb"), c_days = col("days_simulated");
    const auto c_impl = col("avg_implicitness"), c_ts = col("timesteps");
    const auto c_nc = col("newton_cycles"), c_li = col("linear_iterations");
    const auto c_sf = col("solver_failures"), c_cuts = col("cuts");
    const auto c_mo = col("mbe_o"), c_mw = col("mbe_w"), c_mg = col("mbe_g");
    const auto c_mbe = col("mean_abs_mbe"), c_pet = col("predicted_elapsed_s");
    const auto c_pmbe = col("predicted_mean_abs_mbe"), c_pwet = col("predicted_wet");
    std::vector<std::size_t> c_params;
    for (const auto& p : sp.params) c_params.push_back(col("param:" + p.name));

    RunLedger ledger;
    for (const auto& row : t.rows) {
        RunRecord e;
        e.round = std::stoi(row[c_round]);
        e.realization = std::stoi(row[c_real]);
        e.tuned = row[c_tuned] == "1";
        e.status = row[c_status];
        e.elapsed_s = std::stod(row[c_et]);
        e.cpu_s = std::stod(row[c_cpu]);
        e.memory_peak_mb = std::stod(row[c_mem]);
        e.days_simulated = std::stod(row[c_days]);
        e.average_implicitness = std::stod(row[c_impl]);
        e.counters.timesteps = std::stoll(row[c_ts]);
        e.counters.newton_cycles = std::stoll(row[c_nc]);
        e.counters.linear_iterations = std::stoll(row[c_li]);
        e.counters.solver_failures = std::stoll(row[c_sf]);
        e.counters.cuts = std::stoll(row[c_cuts]);
        e.mbe_o = std::stod(row[c_mo]);
        e.mbe_w = std::stod(row[c_mw]);
        e.mbe_g = std::stod(row[c_mg]);
        e.mean_abs_mbe = std::stod(row[c_mbe]);
        e.predicted_elapsed_s = std::stod(row[c_pet]);
        e.predicted_mean_abs_mbe = std::stod(row[c_pmbe]);
        e.predicted_wet = std::stod(row[c_pwet]);
        for (std::size_t i = 0; i < sp.params.size(); ++i) {
            const auto& cell = row[c_params[i]];
            if (sp.params[i].is_numeric())
                e.sample.values[sp.params[i].name] = std::stod(cell);
            else
                e.sample.values[sp.params[i].name] = cell;
        }
        ledger.entries.push_back(std::move(e));
    }
    return ledger;
}

/// Wraps a reloaded ledger so the report functions can consume it. The run
/// table must be a complete rounds-by-realizations grid.
inline WorkflowResult result_from_ledger(RunLedger ledger) {
    WorkflowResult out;
    for (const auto& e : ledger.entries) {
        out.n_rounds = std::max(out.n_rounds, e.round);
        out.n_realizations = std::max(out.n_realizations, e.realization + 1);
    }
    const auto expected = static_cast<std::size_t>(out.n_rounds) *
                          static_cast<std::size_t>(out.n_realizations);
    if (ledger.entries.empty() || ledger.entries.size() != expected)
        throw std::runtime_error("ledger: expected " + std::to_string(expected) +
                                 " entries, found " + std::to_string(ledger.entries.size()));
    out.ledger = std::move(ledger);
    return out;
}

}  // namespace rstune::flow
