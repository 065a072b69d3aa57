#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rstune/workflow.hpp"

using namespace rstune;
using namespace rstune::flow;

namespace {

gen::FieldSpec tiny_spec() {
    gen::FieldSpec spec;
    spec.nx = 8;
    spec.ny = 8;
    spec.horizon_days = 90.0;
    spec.report_interval_days = 30.0;
    spec.inject_rate = 60.0;
    spec.produce_rate = 60.0;
    return spec;
}

EnsembleSetup tiny_setup(int n_r, std::uint64_t seed) {
    const auto spec = tiny_spec();
    EnsembleSetup setup;
    for (int j = 0; j < n_r; ++j)
        setup.templates.push_back(gen::synth_case(spec, derive_seed(seed, 7, j)));
    const auto fields = gen::make_prior_ensemble(spec, n_r, seed);
    setup.initial_m = Eigen::MatrixXd(spec.nx * spec.ny, n_r);
    for (int j = 0; j < n_r; ++j)
        for (int i = 0; i < spec.nx * spec.ny; ++i)
            setup.initial_m(i, j) = fields[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    setup.perm_y_ratio = spec.perm_y_ratio;
    return setup;
}

esmda::ObservationSet tiny_obs(std::uint64_t seed) {
    const auto truth_case = gen::synth_case(tiny_spec(), 991);
    const auto truth = sim::run_simulation(truth_case, 3600.0);
    return synth_observations(truth.curves, {"PRD1:OPT", "PRD1:WPT"}, 0.05, seed);
}

WorkflowConfig tiny_config() {
    WorkflowConfig config;
    config.query_size = 60;
    config.run_seed = 42;
    config.oracle_config.kind = oracle::RegressorKind::tree;
    config.oracle_config.hp.criterion = "mse";
    // A known engineer budget keeps the 2x timeout rule from culling the
    // blind picks these tiny smoke ensembles start with.
    config.engineer_elapsed_s = 10.0;
    return config;
}

esmda::AssimilationConfig tiny_esmda() {
    esmda::AssimilationConfig config;
    config.n_a = 2;
    config.alphas = esmda::uniform_alphas(2);
    config.seed = 7;
    return config;
}

/// Oracle over the builtin schema whose elapsed prediction is a function of
/// the encoded config, handy for exercising query ranking.
oracle::TrainedOracle synthetic_oracle(const std::function<double(const space::ConfigSample&)>& et,
                                       std::uint64_t seed) {
    const auto sp = space::builtin_space();
    oracle::Dataset ds;
    ds.schema = {logfeat::feature_names(), space::encoding_names(sp)};
    logfeat::FeatureVector f;
    f.timesteps = 10.0;
    const auto samples = space::lhs_sample(sp, 400, derive_seed(seed, 1));
    for (const auto& s : samples) {
        oracle::DatasetRow row;
        row.group_id = "g" + std::to_string(ds.rows.size() % 4);
        row.status = "NORMAL";
        row.features = logfeat::flatten(f);
        row.config = space::encode(s, sp);
        row.elapsed_s = et(s);
        ds.rows.push_back(std::move(row));
    }
    oracle::OracleConfig config;
    config.kind = oracle::RegressorKind::tree;
    return oracle::train_oracle(ds, config, seed);
}

}  // namespace

TEST_CASE("weighted elapsed time bands") {
    CHECK(weighted_elapsed_time(100.0, 0.03) == 100.0);
    CHECK(weighted_elapsed_time(100.0, 0.07) == 200.0);
    CHECK(weighted_elapsed_time(100.0, 0.20) == 100000.0);

    SECTION("boundaries take the cheaper penalty") {
        CHECK(weighted_elapsed_time(100.0, 0.05) == 100.0);
        CHECK(weighted_elapsed_time(100.0, 0.10) == 200.0);
    }
    SECTION("preconditions") {
        CHECK_THROWS(weighted_elapsed_time(0.0, 0.01));
        CHECK_THROWS(weighted_elapsed_time(-5.0, 0.01));
        CHECK_THROWS(weighted_elapsed_time(10.0, -0.01));
    }
    SECTION("band indices") {
        CHECK(wet_band(0.05) == 0);
        CHECK(wet_band(0.0500001) == 1);
        CHECK(wet_band(0.10) == 1);
        CHECK(wet_band(0.11) == 2);
    }
    SECTION("scaling elapsed times preserves the band structure") {
        for (double mbe : {0.01, 0.07, 0.3})
            CHECK(weighted_elapsed_time(700.0, mbe) == 7.0 * weighted_elapsed_time(100.0, mbe));
    }
}

TEST_CASE("query_oracle on a constant predictor returns the first candidate") {
    const auto model = synthetic_oracle([](const space::ConfigSample&) { return 5.0; }, 3);
    logfeat::FeatureVector f;
    f.timesteps = 10.0;
    const auto q = query_oracle(model, f, space::builtin_space(), 50, 123);
    CHECK(q.ranking.size() == 50);
    CHECK(q.best_index == 0);
}

TEST_CASE("query_oracle avoids a categorical value the oracle penalizes") {
    const auto model = synthetic_oracle(
        [](const space::ConfigSample& s) {
            return s.cat_at("solver_kind") == "direct" ? 50.0 : 5.0;
        },
        9);
    logfeat::FeatureVector f;
    f.timesteps = 10.0;
    const auto sp = space::builtin_space();
    const auto q = query_oracle(model, f, sp, 300, 77);

    CHECK(q.best().sample.cat_at("solver_kind") != "direct");

    std::size_t argmin = 0;
    for (std::size_t i = 1; i < q.ranking.size(); ++i) {
        const auto& a = q.ranking[i];
        const auto& b = q.ranking[argmin];
        if (a.wet < b.wet ||
            (a.wet == b.wet && a.predicted_mean_abs_mbe < b.predicted_mean_abs_mbe))
            argmin = i;
    }
    CHECK(q.best_index == argmin);
    for (const auto& c : q.ranking)
        CHECK(c.wet == weighted_elapsed_time(c.predicted_elapsed_s, c.predicted_mean_abs_mbe));
}

TEST_CASE("query_oracle with a single candidate returns it") {
    const auto model = synthetic_oracle([](const space::ConfigSample&) { return 2.0; }, 5);
    logfeat::FeatureVector f;
    f.timesteps = 10.0;
    const auto q = query_oracle(model, f, space::builtin_space(), 1, 4);
    CHECK(q.ranking.size() == 1);
    CHECK(q.best_index == 0);
    CHECK(space::validate(q.best().sample, space::builtin_space()).empty());
}

TEST_CASE("query_oracle is deterministic per seed") {
    const auto model = synthetic_oracle(
        [](const space::ConfigSample& s) { return 1.0 + s.real_at("dt_max") / 100.0; }, 8);
    logfeat::FeatureVector f;
    f.timesteps = 10.0;
    const auto sp = space::builtin_space();
    const auto a = query_oracle(model, f, sp, 40, 555);
    const auto b = query_oracle(model, f, sp, 40, 555);
    CHECK(a.best_index == b.best_index);
    CHECK(a.best().sample == b.best().sample);
}

TEST_CASE("simulation-count accounting follows the published tables") {
    CHECK(planned_simulation_count(5, 20) == 120);
    // Five total sweeps (four assimilations plus the forecast) over the
    // published ensemble sizes.
    CHECK(planned_simulation_count(4, 50) == 250);
    CHECK(planned_simulation_count(4, 48) == 240);
    CHECK(total_rounds(4) == 5);
}

TEST_CASE("workflow configuration validation") {
    WorkflowConfig config;
    CHECK_NOTHROW(config.check());
    config.query_size = 0;
    CHECK_THROWS(config.check());
    config = {};
    config.wet_t1 = 0.2;
    CHECK_THROWS(config.check());
    config = {};
    config.workers = 0;
    CHECK_THROWS(config.check());
    config = {};
    config.baseline_mode = BaselineMode::engineer;
    CHECK_THROWS(config.check());
    config.engineer_sample = space::builtin_space().defaults();
    CHECK_NOTHROW(config.check());
}

TEST_CASE("observation extraction stacks curve columns after day zero") {
    CsvTable curves;
    curves.header = {"day", "A", "B"};
    curves.add_row({"0", "0", "100"});
    curves.add_row({"30", "1", "200"});
    curves.add_row({"60", "2", "300"});
    const auto v = extract_observations(curves, {"A", "B"});
    REQUIRE(v.size() == 4);
    CHECK(v[0] == 1.0);
    CHECK(v[1] == 2.0);
    CHECK(v[2] == 200.0);
    CHECK(v[3] == 300.0);

    CHECK_THROWS(extract_observations(curves, {"missing"}));
}

TEST_CASE("synthetic observations carry positive variances and are reproducible") {
    const auto obs1 = tiny_obs(31);
    const auto obs2 = tiny_obs(31);
    CHECK(obs1.d_obs == obs2.d_obs);
    for (Eigen::Index i = 0; i < obs1.variances.size(); ++i)
        CHECK(obs1.variances[i] > 0.0);
    CHECK(obs1.d_obs.size() == 2 * 3);  // two series, three report days
    CHECK_NOTHROW(obs1.check());
}

TEST_CASE("coupled run produces the planned ledger and ensembles") {
    const auto setup = tiny_setup(3, 11);
    const auto obs = tiny_obs(31);
    const auto res = coupled_run(setup, obs, tiny_esmda(), tiny_config());

    CHECK(res.n_rounds == 3);
    CHECK(res.n_realizations == 3);
    REQUIRE(res.ledger.entries.size() == 9);

    const auto sp = space::builtin_space();
    const auto baseline = sp.defaults();
    for (const auto& e : res.ledger.entries) {
        CHECK(e.status == "NORMAL");
        if (e.round == 1) {
            CHECK_FALSE(e.tuned);
            CHECK(e.sample == baseline);
        } else {
            CHECK(e.tuned);
            CHECK(space::validate(e.sample, sp).empty());
            CHECK(e.predicted_wet > 0.0);
        }
    }

    CHECK(res.esmda_ledger.m_snapshots.size() == 3);  // prior plus two updates
    CHECK(res.esmda_ledger.d_sims.size() == 3);
    CHECK(res.final_state.m.rows() == 64);
    CHECK(res.final_state.m.cols() == 3);
    CHECK(res.final_state.m.allFinite());

    SECTION("ledger CSV is one row per run with parameter columns") {
        const auto csv = ledger_to_csv(res.ledger, sp);
        CHECK(csv.nrows() == 9);
        CHECK(csv.column("param:dt_max") >= 0);
        CHECK(csv.column("mean_abs_mbe") >= 0);
    }
}

TEST_CASE("baseline run keeps the baseline sample in every round") {
    const auto setup = tiny_setup(3, 11);
    const auto obs = tiny_obs(31);
    const auto res = baseline_run(setup, obs, tiny_esmda(), tiny_config());

    REQUIRE(res.ledger.entries.size() == 9);
    const auto baseline = space::builtin_space().defaults();
    for (const auto& e : res.ledger.entries) {
        CHECK_FALSE(e.tuned);
        CHECK(e.sample == baseline);
    }
}

TEST_CASE("workflows are deterministic and worker-count independent") {
    const auto setup = tiny_setup(3, 11);
    const auto obs = tiny_obs(31);
    const auto sp = space::builtin_space();

    auto config = tiny_config();
    const auto a = coupled_run(setup, obs, tiny_esmda(), config);
    const auto b = coupled_run(setup, obs, tiny_esmda(), config);
    config.workers = 3;
    const auto c = coupled_run(setup, obs, tiny_esmda(), config);

    std::ostringstream sa, sb, sc;
    write_csv(ledger_to_csv(a.ledger, sp), sa);
    write_csv(ledger_to_csv(b.ledger, sp), sb);
    write_csv(ledger_to_csv(c.ledger, sp), sc);
    CHECK(sa.str() == sb.str());
    CHECK(sa.str() == sc.str());
    CHECK((a.final_state.m - c.final_state.m).norm() == 0.0);
}

TEST_CASE("tuned rounds are capped at twice the reference elapsed time") {
    const auto setup = tiny_setup(2, 11);
    const auto obs = tiny_obs(31);

    // A corpus that labels short-dt configurations as cheap steers the oracle
    // toward runs far slower than round 1, which must then hit the 2x budget.
    const auto sp = space::builtin_space();
    oracle::Dataset lying;
    lying.schema = {logfeat::feature_names(), space::encoding_names(sp)};
    logfeat::FeatureVector f;
    f.timesteps = 10.0;
    for (const auto& s : space::lhs_sample(sp, 200, 5)) {
        oracle::DatasetRow row;
        row.group_id = "g" + std::to_string(lying.rows.size() % 3);
        row.status = "NORMAL";
        row.features = logfeat::flatten(f);
        row.config = space::encode(s, sp);
        row.elapsed_s = s.real_at("dt_max");
        lying.rows.push_back(std::move(row));
    }

    auto config = tiny_config();
    config.engineer_elapsed_s = 0.0;
    try {
        coupled_run(setup, obs, tiny_esmda(), config, lying);
        FAIL("expected a timeout abort");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("TIMEOUT") != std::string::npos);
        CHECK(std::string(e.what()).find("member") != std::string::npos);
    }
}

TEST_CASE("speedup report arithmetic") {
    auto make_arm = [](double elapsed) {
        WorkflowResult r;
        r.n_rounds = 2;
        r.n_realizations = 2;
        for (int round = 1; round <= 2; ++round)
            for (int j = 0; j < 2; ++j) {
                RunRecord rec;
                rec.round = round;
                rec.realization = j;
                rec.status = "NORMAL";
                rec.elapsed_s = elapsed;
                rec.mean_abs_mbe = 0.01 * round;
                r.ledger.entries.push_back(rec);
            }
        return r;
    };

    SECTION("identical arms give speedup 1") {
        const auto rep = speedup_report(make_arm(4.0), make_arm(4.0));
        CHECK(rep.mean_elapsed_speedup == 1.0);
    }
    SECTION("a 2x slower baseline gives speedup 2") {
        const auto rep = speedup_report(make_arm(2.0), make_arm(4.0));
        CHECK(rep.mean_elapsed_speedup == 2.0);
        CHECK(rep.rounds.nrows() == 2);
        CHECK(rep.summary.nrows() == 2);
        CHECK(rep.mbe_histogram.nrows() == 10);
        CHECK(rep.wet_bands.nrows() == 3);
    }
    SECTION("shape mismatch is rejected") {
        auto small = make_arm(1.0);
        small.ledger.entries.pop_back();
        CHECK_THROWS(speedup_report(small, make_arm(1.0)));
    }
}
