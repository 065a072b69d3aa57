#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rstune/oracle/cv.hpp"
#include "rstune/oracle/dataset.hpp"
#include "rstune/oracle/oracle.hpp"
#include "rstune/oracle/pipeline.hpp"
#include "rstune/oracle/regressors.hpp"

using namespace rstune;
using namespace rstune::oracle;

namespace {

DatasetSchema tiny_schema() {
    return {{"timesteps", "a", "b"}, {"c0", "c1"}};
}

DatasetRow make_row(const std::string& group, double timesteps, double a, double b, double c0,
                    double c1, double elapsed, const std::string& status = "NORMAL") {
    DatasetRow r;
    r.group_id = group;
    r.status = status;
    r.features = {timesteps, a, b};
    r.config = {c0, c1};
    r.elapsed_s = elapsed;
    r.mbe_o = 0.01;
    r.mbe_w = -0.02;
    r.mbe_g = 0.0;
    return r;
}

/// Smooth positive response on (a, b, c0, c1), used as a learnable target.
double smooth_target(double a, double b, double c0, double c1) {
    return 20.0 + 10.0 * a + 5.0 * b * b + 8.0 * c0 + 3.0 * std::sin(3.0 * c1);
}

Dataset synthetic_dataset(int n_rows, int n_groups, std::uint64_t seed) {
    Dataset ds;
    ds.schema = tiny_schema();
    Rng rng(seed);
    for (int i = 0; i < n_rows; ++i) {
        const double a = rng.uniform();
        const double b = rng.uniform();
        const double c0 = rng.uniform();
        const double c1 = rng.uniform();
        const std::string group = "G" + std::to_string(i % n_groups);
        ds.rows.push_back(make_row(group, 10 + i % 5, a, b, c0, c1, smooth_target(a, b, c0, c1)));
    }
    return ds;
}

}  // namespace

TEST_CASE("cleaning removes failed and single-step rows, keeping order") {
    Dataset ds;
    ds.schema = tiny_schema();
    ds.rows.push_back(make_row("A", 10, 1, 1, 0, 0, 5.0));
    ds.rows.push_back(make_row("A", 10, 2, 2, 0, 0, 6.0, "TIMEOUT"));
    ds.rows.push_back(make_row("B", 10, 3, 3, 0, 0, 7.0));
    ds.rows.push_back(make_row("B", 1, 4, 4, 0, 0, 8.0));

    const auto clean = clean_dataset(ds);
    REQUIRE(clean.rows.size() == 2);
    CHECK(clean.rows[0].features[1] == 1.0);
    CHECK(clean.rows[1].features[1] == 3.0);

    SECTION("all-normal multi-step dataset is unchanged") {
        Dataset ok;
        ok.schema = tiny_schema();
        ok.rows.push_back(make_row("A", 5, 1, 1, 0, 0, 5.0));
        ok.rows.push_back(make_row("B", 5, 2, 2, 0, 0, 6.0));
        CHECK(clean_dataset(ok).rows.size() == 2);
    }
    SECTION("empty result is an error") {
        Dataset bad;
        bad.schema = tiny_schema();
        bad.rows.push_back(make_row("A", 1, 1, 1, 0, 0, 5.0));
        CHECK_THROWS(clean_dataset(bad));
    }
}

TEST_CASE("pipeline scaling follows the fitted statistics") {
    const std::vector<std::vector<double>> x{{1.0, 0.0, 7.0}, {3.0, 10.0, 7.0}};
    const std::vector<double> y{1.0, 2.0};

    SECTION("standardize maps [1,3] to [-1,1] and constants to 0") {
        PipelineSpec spec{ScalerKind::standardize, 1.0};
        const auto fp = fit_pipeline(spec, x, y);
        const auto z0 = fp.transform(x[0]);
        const auto z1 = fp.transform(x[1]);
        CHECK_THAT(z0[0], Catch::Matchers::WithinAbs(-1.0, 1e-15));
        CHECK_THAT(z1[0], Catch::Matchers::WithinAbs(1.0, 1e-15));
        CHECK(z0[2] == 0.0);
        CHECK(z1[2] == 0.0);
    }
    SECTION("rescale_01 maps [0,10] to [0,1]") {
        PipelineSpec spec{ScalerKind::rescale_01, 1.0};
        const auto fp = fit_pipeline(spec, x, y);
        CHECK(fp.transform(x[0])[1] == 0.0);
        CHECK(fp.transform(x[1])[1] == 1.0);
        CHECK(fp.transform({2.0, 5.0, 7.0})[1] == 0.5);
    }
    SECTION("single training row is rejected") {
        CHECK_THROWS(fit_pipeline(PipelineSpec{}, {{1.0, 2.0, 3.0}}, {1.0}));
    }
    SECTION("fraction outside the grid is rejected") {
        CHECK_THROWS(fit_pipeline(PipelineSpec{ScalerKind::standardize, 0.5}, x, y));
    }
}

TEST_CASE("top-k selection keeps the most correlated columns") {
    Rng rng(11);
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (int i = 0; i < 40; ++i) {
        const double t = rng.uniform();
        x.push_back({t, rng.uniform(), 4.2});
        y.push_back(t * 10.0);
    }
    PipelineSpec spec{ScalerKind::standardize, 0.8};
    const auto fp = fit_pipeline(spec, x, y);
    REQUIRE(fp.selected.size() == 2);
    CHECK(fp.selected[0] == 0);
    CHECK(fp.selected[1] == 1);
    CHECK(std::is_sorted(fp.selected.begin(), fp.selected.end()));

    SECTION("k = 0.8 of 10 columns keeps 8") {
        std::vector<std::vector<double>> wide;
        std::vector<double> wy;
        for (int i = 0; i < 30; ++i) {
            std::vector<double> row;
            for (int c = 0; c < 10; ++c) row.push_back(rng.uniform());
            wide.push_back(row);
            wy.push_back(row[0] + 1.0);
        }
        const auto wide_fp = fit_pipeline(spec, wide, wy);
        CHECK(wide_fp.selected.size() == 8);
    }
}

TEST_CASE("depth-unlimited tree reproduces noiseless training data") {
    const auto ds = synthetic_dataset(60, 4, 3);
    OracleConfig config;
    config.kind = RegressorKind::tree;
    config.hp.criterion = "mse";
    const auto o = train_oracle(ds, config, 17);

    std::vector<double> y_true, y_pred;
    for (const auto& r : ds.rows) {
        y_true.push_back(r.elapsed_s);
        y_pred.push_back(o.predict_input(r.input()).elapsed_s);
    }
    const auto m = metrics(y_true, y_pred);
    CHECK_THAT(m.mape, Catch::Matchers::WithinAbs(0.0, 1e-9));
}

TEST_CASE("mae criterion splits on the sum of absolute deviations") {
    DecisionTree t;
    TreeFitOptions opts;
    opts.criterion = "mae";
    t.fit({{0.0}, {1.0}, {2.0}}, {0.0, 0.0, 10.0}, opts);
    CHECK(t.predict({0.0}) == 0.0);
    CHECK(t.predict({1.0}) == 0.0);
    CHECK(t.predict({2.0}) == 10.0);
    CHECK(t.nodes.front().threshold == 1.5);
}

TEST_CASE("knn with k=1 returns each training row's own target") {
    const auto ds = synthetic_dataset(50, 5, 7);
    OracleConfig config;
    config.kind = RegressorKind::knn;
    config.hp.n_neighbors = 1;
    config.hp.p = 2;
    const auto o = train_oracle(ds, config, 1);
    for (const auto& r : ds.rows)
        CHECK_THAT(o.predict_input(r.input()).elapsed_s,
                   Catch::Matchers::WithinAbs(r.elapsed_s, 1e-12));
}

TEST_CASE("knn manhattan distance is honored") {
    KnnRegressor knn;
    Hyperparams hp;
    hp.n_neighbors = 1;
    hp.p = 1;
    // From the origin, (1.5, 0) is nearer under p=1 while (1, 1) is nearer under p=2.
    knn.fit({{1.5, 0.0}, {1.0, 1.0}}, {10.0, 20.0}, hp);
    CHECK(knn.predict({0.0, 0.0}) == 10.0);
    hp.p = 2;
    knn.fit({{1.5, 0.0}, {1.0, 1.0}}, {10.0, 20.0}, hp);
    CHECK(knn.predict({0.0, 0.0}) == 20.0);
}

TEST_CASE("forest predictions stay within the training target range") {
    const auto ds = synthetic_dataset(80, 4, 9);
    OracleConfig config;
    config.kind = RegressorKind::forest;
    config.hp.n_estimators = 20;
    config.hp.max_depth = 10;
    config.hp.max_features = "sqrt";
    const auto o = train_oracle(ds, config, 5);

    double lo = 1e300, hi = -1e300;
    for (const auto& r : ds.rows) {
        lo = std::min(lo, r.elapsed_s);
        hi = std::max(hi, r.elapsed_s);
    }
    Rng rng(33);
    for (int i = 0; i < 50; ++i) {
        const auto p = o.predict_input(
            {10.0, rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()});
        CHECK(p.elapsed_s >= lo);
        CHECK(p.elapsed_s <= hi);
    }
}

TEST_CASE("forest with identical targets predicts that constant") {
    Dataset ds;
    ds.schema = tiny_schema();
    for (int i = 0; i < 12; ++i)
        ds.rows.push_back(make_row("G" + std::to_string(i % 3), 10, i * 0.1, i * 0.2, 0, 0, 42.0));
    OracleConfig config;
    config.kind = RegressorKind::forest;
    config.hp.n_estimators = 10;
    config.hp.max_depth = 10;
    const auto o = train_oracle(ds, config, 2);
    CHECK(o.predict_input({10.0, 0.35, 0.9, 0.0, 0.0}).elapsed_s == 42.0);
}

TEST_CASE("forest training is deterministic per seed") {
    const auto ds = synthetic_dataset(60, 3, 21);
    OracleConfig config;
    config.kind = RegressorKind::forest;
    config.hp.n_estimators = 10;
    config.hp.max_depth = 10;
    config.hp.max_features = "sqrt";
    const auto a = train_oracle(ds, config, 99);
    const auto b = train_oracle(ds, config, 99);
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        const std::vector<double> q{12.0, rng.uniform(), rng.uniform(), rng.uniform(),
                                    rng.uniform()};
        CHECK(a.predict_input(q).elapsed_s == b.predict_input(q).elapsed_s);
        CHECK(a.predict_input(q).mean_abs_mbe == b.predict_input(q).mean_abs_mbe);
    }
}

TEST_CASE("out-of-grid hyperparameters are rejected") {
    Hyperparams hp;
    hp.criterion = "friedman";
    CHECK_THROWS(validate_hyperparams(RegressorKind::tree, hp));
    hp = {};
    hp.n_estimators = 37;
    CHECK_THROWS(validate_hyperparams(RegressorKind::forest, hp));
    hp = {};
    hp.n_neighbors = 9;
    CHECK_THROWS(validate_hyperparams(RegressorKind::knn, hp));
    hp = {};
    hp.p = 3;
    CHECK_THROWS(validate_hyperparams(RegressorKind::knn, hp));
    hp = {};
    hp.max_depth = 10;
    CHECK_NOTHROW(validate_hyperparams(RegressorKind::forest, hp));
}

TEST_CASE("batch prediction preserves candidate order") {
    const auto ds = synthetic_dataset(30, 3, 13);
    OracleConfig config;
    config.kind = RegressorKind::tree;
    const auto o = train_oracle(ds, config, 3);

    Rng rng(8);
    std::vector<std::vector<double>> configs;
    for (int i = 0; i < 10000; ++i) configs.push_back({rng.uniform(), rng.uniform()});
    const std::vector<double> features{11.0, 0.4, 0.6};
    const auto batch = o.predict_batch(features, configs);
    REQUIRE(batch.size() == configs.size());
    for (std::size_t i = 0; i < batch.size(); i += 997) {
        const auto single = o.predict(features, configs[i]);
        CHECK(batch[i].elapsed_s == single.elapsed_s);
        CHECK(batch[i].mean_abs_mbe == single.mean_abs_mbe);
    }
}

TEST_CASE("oracle rejects queries with the wrong shape") {
    const auto ds = synthetic_dataset(20, 2, 5);
    OracleConfig config;
    config.kind = RegressorKind::tree;
    const auto o = train_oracle(ds, config, 3);
    CHECK_THROWS(o.predict({1.0, 2.0}, {0.0, 0.0}));
    CHECK_THROWS(o.predict({1.0, 2.0, 3.0}, {0.0}));
}

TEST_CASE("metric arithmetic on worked examples") {
    const auto m = metrics({100.0, 200.0}, {110.0, 180.0});
    CHECK_THAT(m.mape, Catch::Matchers::WithinAbs(10.0, 1e-12));
    CHECK_THAT(m.mae, Catch::Matchers::WithinAbs(15.0, 1e-12));
    CHECK_THAT(m.mse, Catch::Matchers::WithinAbs(250.0, 1e-12));

    const auto z = metrics({3.0, 4.0}, {3.0, 4.0});
    CHECK(z.mape == 0.0);
    CHECK(z.mse == 0.0);
    CHECK(z.mae == 0.0);

    CHECK_THAT(metrics({1.0}, {2.0}).mape, Catch::Matchers::WithinAbs(100.0, 1e-12));
    CHECK_THROWS(metrics({0.0}, {1.0}));
    CHECK_THROWS(metrics({}, {}));
}

TEST_CASE("logo_cv builds one split per group without leakage") {
    Dataset ds;
    ds.schema = tiny_schema();
    ds.rows.push_back(make_row("A", 10, 0.1, 0.2, 0.3, 0.4, 5.0));
    ds.rows.push_back(make_row("A", 10, 0.5, 0.6, 0.7, 0.8, 6.0));
    ds.rows.push_back(make_row("B", 10, 0.9, 0.1, 0.2, 0.3, 7.0));
    ds.rows.push_back(make_row("C", 10, 0.4, 0.5, 0.6, 0.7, 8.0));

    OracleConfig config;
    config.kind = RegressorKind::knn;
    config.hp.n_neighbors = 1;
    const auto res = logo_cv(ds, {config}, 42);

    REQUIRE(res.report.configs.size() == 1);
    const auto& splits = res.report.configs[0].splits;
    REQUIRE(splits.size() == 3);
    std::set<std::string> held;
    for (const auto& s : splits) held.insert(s.held_group);
    CHECK(held == std::set<std::string>{"A", "B", "C"});
    CHECK(res.report.best_index == 0);
}

TEST_CASE("sixteen groups produce sixteen splits") {
    const auto ds = synthetic_dataset(96, 16, 31);
    OracleConfig config;
    config.kind = RegressorKind::tree;
    const auto res = logo_cv(ds, {config}, 1);
    CHECK(res.report.configs[0].splits.size() == 16);
}

TEST_CASE("logo_cv rejects a single-group dataset") {
    const auto ds = synthetic_dataset(10, 1, 2);
    OracleConfig config;
    config.kind = RegressorKind::tree;
    CHECK_THROWS(logo_cv(ds, {config}, 1));
}

TEST_CASE("grid search picks the configuration with the lowest validation MAPE") {
    const auto ds = synthetic_dataset(120, 6, 55);
    OracleConfig good;
    good.kind = RegressorKind::knn;
    good.hp.n_neighbors = 3;
    OracleConfig weak;
    weak.kind = RegressorKind::knn;
    weak.hp.n_neighbors = 1;
    weak.pipeline.topk_frac = 0.8;

    const auto res = logo_cv(ds, {weak, good}, 7);
    const auto& cfgs = res.report.configs;
    std::size_t expect = cfgs[0].mean_validation.mape <= cfgs[1].mean_validation.mape ? 0 : 1;
    CHECK(res.report.best_index == expect);
    CHECK(res.best.config.describe() == cfgs[expect].config.describe());
}

TEST_CASE("holdout groups are scored by the refit oracle only") {
    const auto ds = synthetic_dataset(80, 8, 44);
    OracleConfig config;
    config.kind = RegressorKind::tree;
    const auto res = logo_cv(ds, {config}, 5, {"G7"});
    CHECK(res.report.configs[0].splits.size() == 7);
    CHECK(res.report.holdout_test.mape >= 0.0);
    for (const auto& s : res.report.configs[0].splits) CHECK(s.held_group != "G7");
}

TEST_CASE("dataset CSV and sidecar survive a save/load round trip") {
    const auto ds = synthetic_dataset(25, 5, 66);
    const std::string csv = "/tmp/rstune_test_dataset.csv";
    const std::string sidecar = "/tmp/rstune_test_dataset.json";
    save_dataset(ds, csv, sidecar);
    const auto back = load_dataset(csv, sidecar);
    REQUIRE(back.rows.size() == ds.rows.size());
    CHECK(back.schema == ds.schema);
    CHECK(dataset_fingerprint(back) == dataset_fingerprint(ds));
    CHECK(back.rows[7].elapsed_s == ds.rows[7].elapsed_s);
    CHECK(back.rows[7].features == ds.rows[7].features);
}

TEST_CASE("trained oracle survives a save/load round trip") {
    const auto ds = synthetic_dataset(40, 4, 12);
    OracleConfig config;
    config.kind = RegressorKind::forest;
    config.hp.n_estimators = 10;
    config.hp.max_depth = 10;
    const auto o = train_oracle(ds, config, 77);
    const std::string path = "/tmp/rstune_test_oracle.json";
    save_oracle(o, path);
    const auto back = load_oracle(path);

    Rng rng(3);
    for (int i = 0; i < 10; ++i) {
        const std::vector<double> q{10.0, rng.uniform(), rng.uniform(), rng.uniform(),
                                    rng.uniform()};
        CHECK(back.predict_input(q).elapsed_s == o.predict_input(q).elapsed_s);
        CHECK(back.predict_input(q).mean_abs_mbe == o.predict_input(q).mean_abs_mbe);
    }
    CHECK(back.dataset_hash == o.dataset_hash);
}

TEST_CASE("oracle config json tolerates partial hyperparams") {
    const auto c = oracle_config_from_json(
        nlohmann::json{{"kind", "knn"}, {"hyperparams", {{"n_neighbors", 1}}}});
    CHECK(c.kind == RegressorKind::knn);
    CHECK(c.hp.n_neighbors == 1);
    CHECK(c.hp.p == 2);
    CHECK(c.hp.criterion == "mse");
    CHECK(c.pipeline.topk_frac == 1.0);

    OracleConfig full;
    full.kind = RegressorKind::forest;
    full.hp.criterion = "mae";
    full.hp.max_depth = 20;
    full.hp.n_estimators = 50;
    full.hp.max_features = "sqrt";
    full.pipeline.scaler = ScalerKind::standardize;
    full.pipeline.topk_frac = 0.8;
    const auto back = oracle_config_from_json(oracle_config_to_json(full));
    CHECK(back.kind == full.kind);
    CHECK(back.hp.criterion == full.hp.criterion);
    CHECK(back.hp.max_depth == full.hp.max_depth);
    CHECK(back.hp.n_estimators == full.hp.n_estimators);
    CHECK(back.hp.max_features == full.hp.max_features);
    CHECK(back.pipeline.scaler == full.pipeline.scaler);
    CHECK(back.pipeline.topk_frac == full.pipeline.topk_frac);
}

TEST_CASE("cv report CSV has one row per split plus a mean row per config") {
    const auto ds = synthetic_dataset(30, 3, 18);
    OracleConfig config;
    config.kind = RegressorKind::tree;
    const auto res = logo_cv(ds, {config}, 9);
    const auto csv = cv_report_to_csv(res.report);
    CHECK(csv.nrows() == 4);
    CHECK(csv.column("val_mape") >= 0);
}
