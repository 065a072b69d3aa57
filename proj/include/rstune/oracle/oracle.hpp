#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rstune/oracle/dataset.hpp"
#include "rstune/oracle/pipeline.hpp"
#include "rstune/oracle/regressors.hpp"

namespace rstune::oracle {

struct OracleConfig {
    RegressorKind kind = RegressorKind::forest;
    Hyperparams hp;
    PipelineSpec pipeline;

    [[nodiscard]] std::string describe() const {
        std::string s = to_string(kind) + "(criterion=" + hp.criterion;
        if (kind == RegressorKind::forest)
            s += ",depth=" + std::to_string(hp.max_depth) + ",features=" + hp.max_features +
                 ",trees=" + std::to_string(hp.n_estimators);
        if (kind == RegressorKind::knn)
            s = to_string(kind) + "(k=" + std::to_string(hp.n_neighbors) +
                ",p=" + std::to_string(hp.p);
        s += ")|" + to_string(pipeline.scaler) + "|topk=" + format_double(pipeline.topk_frac);
        return s;
    }
};

inline nlohmann::json oracle_config_to_json(const OracleConfig& c) {
    return {{"kind", to_string(c.kind)},
            {"hyperparams", hyperparams_to_json(c.hp)},
            {"scaler", to_string(c.pipeline.scaler)},
            {"topk_frac", c.pipeline.topk_frac}};
}

inline OracleConfig oracle_config_from_json(const nlohmann::json& j) {
    OracleConfig c;
    c.kind = regressor_from_string(j.at("kind").get<std::string>());
    if (j.contains("hyperparams")) c.hp = hyperparams_from_json(j.at("hyperparams"));
    if (j.contains("scaler")) c.pipeline.scaler = scaler_from_string(j.at("scaler").get<std::string>());
    c.pipeline.topk_frac = j.value("topk_frac", 1.0);
    return c;
}

/// Elapsed-time and quality regressors sharing one fitted pipeline.
struct TrainedOracle {
    OracleConfig config;
    FittedPipeline pipeline;
    AnyRegressor elapsed_model;
    AnyRegressor quality_model;
    DatasetSchema schema;
    std::uint64_t seed = 0;
    std::uint64_t dataset_hash = 0;

    struct Prediction {
        double elapsed_s = 0.0;
        double mean_abs_mbe = 0.0;
    };

    [[nodiscard]] Prediction predict_input(const std::vector<double>& input) const {
        const auto z = pipeline.transform(input);
        return {elapsed_model.predict(z), quality_model.predict(z)};
    }

    [[nodiscard]] Prediction predict(const std::vector<double>& features,
                                     const std::vector<double>& encoded_config) const {
        if (features.size() != schema.feature_names.size() ||
            encoded_config.size() != schema.config_names.size())
            throw std::runtime_error("oracle: query shape does not match the trained schema");
        std::vector<double> input = features;
        input.insert(input.end(), encoded_config.begin(), encoded_config.end());
        return predict_input(input);
    }

    [[nodiscard]] std::vector<Prediction> predict_batch(
        const std::vector<double>& features,
        const std::vector<std::vector<double>>& encoded_configs) const {
        std::vector<Prediction> out;
        out.reserve(encoded_configs.size());
        for (const auto& cfg : encoded_configs) out.push_back(predict(features, cfg));
        return out;
    }
};

inline TrainedOracle train_oracle(const Dataset& ds, const OracleConfig& config,
                                  std::uint64_t seed) {
    ds.check();
    validate_hyperparams(config.kind, config.hp);
    config.pipeline.check();

    std::vector<std::vector<double>> x;
    std::vector<double> y_elapsed, y_quality;
    x.reserve(ds.rows.size());
    for (const auto& r : ds.rows) {
        x.push_back(r.input());
        y_elapsed.push_back(r.elapsed_s);
        y_quality.push_back(r.mean_abs_mbe_fraction());
    }

    TrainedOracle oracle;
    oracle.config = config;
    oracle.schema = ds.schema;
    oracle.seed = seed;
    oracle.dataset_hash = dataset_fingerprint(ds);
    oracle.pipeline = fit_pipeline(config.pipeline, x, y_elapsed);

    std::vector<std::vector<double>> z;
    z.reserve(x.size());
    for (const auto& row : x) z.push_back(oracle.pipeline.transform(row));

    oracle.elapsed_model.kind = config.kind;
    oracle.quality_model.kind = config.kind;
    oracle.elapsed_model.fit(z, y_elapsed, config.hp, derive_seed(seed, 0xE7));
    oracle.quality_model.fit(z, y_quality, config.hp, derive_seed(seed, 0x9B));
    return oracle;
}

inline nlohmann::json oracle_to_json(const TrainedOracle& o) {
    return {{"kind", to_string(o.config.kind)},
            {"hyperparams", hyperparams_to_json(o.config.hp)},
            {"pipeline", pipeline_to_json(o.pipeline)},
            {"elapsed_model", regressor_to_json(o.elapsed_model)},
            {"quality_model", regressor_to_json(o.quality_model)},
            {"feature_names", o.schema.feature_names},
            {"config_names", o.schema.config_names},
            {"seed", o.seed},
            {"dataset_hash", o.dataset_hash}};
}

inline TrainedOracle oracle_from_json(const nlohmann::json& j) {
    TrainedOracle o;
    o.config.kind = regressor_from_string(j.at("kind").get<std::string>());
    o.config.hp = hyperparams_from_json(j.at("hyperparams"));
    o.pipeline = pipeline_from_json(j.at("pipeline"));
    o.config.pipeline = o.pipeline.spec;
    o.elapsed_model = regressor_from_json(j.at("elapsed_model"));
    o.quality_model = regressor_from_json(j.at("quality_model"));
    o.schema.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    o.schema.config_names = j.at("config_names").get<std::vector<std::string>>();
    o.seed = j.at("seed").get<std::uint64_t>();
    o.dataset_hash = j.at("dataset_hash").get<std::uint64_t>();
    return o;
}

inline void save_oracle(const TrainedOracle& o, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("oracle: cannot write " + path);
    out << oracle_to_json(o).dump() << "\n";
}

inline TrainedOracle load_oracle(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("oracle: cannot read " + path);
    return oracle_from_json(nlohmann::json::parse(in));
}

}  // namespace rstune::oracle
