#pragma once

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "rstune/csv.hpp"
#include "rstune/logfeat.hpp"
#include "rstune/rng.hpp"
#include "rstune/searchspace.hpp"

namespace rstune::oracle {

struct DatasetSchema {
    std::vector<std::string> feature_names;
    std::vector<std::string> config_names;

    [[nodiscard]] std::size_t width() const { return feature_names.size() + config_names.size(); }

    bool operator==(const DatasetSchema&) const = default;
};

inline DatasetSchema builtin_schema() {
    return {logfeat::feature_names(), space::encoding_names(space::builtin_space())};
}

struct DatasetRow {
    std::string group_id;
    std::string status;
    std::vector<double> features;
    std::vector<double> config;
    double elapsed_s = 0.0;
    double mbe_o = 0.0, mbe_w = 0.0, mbe_g = 0.0;

    [[nodiscard]] double mean_abs_mbe_fraction() const {
        return (std::abs(mbe_o) + std::abs(mbe_w) + std::abs(mbe_g)) / 3.0 / 100.0;
    }

    /// Full regressor input, features first then encoded configuration.
    [[nodiscard]] std::vector<double> input() const {
        std::vector<double> x = features;
        x.insert(x.end(), config.begin(), config.end());
        return x;
    }
};

struct Dataset {
    DatasetSchema schema;
    std::vector<DatasetRow> rows;

    [[nodiscard]] std::vector<std::string> group_ids() const {
        std::set<std::string> seen;
        for (const auto& r : rows) seen.insert(r.group_id);
        return {seen.begin(), seen.end()};
    }

    void check() const {
        for (const auto& r : rows) {
            if (r.features.size() != schema.feature_names.size())
                throw std::runtime_error("dataset: row feature width mismatch");
            if (r.config.size() != schema.config_names.size())
                throw std::runtime_error("dataset: row config width mismatch");
        }
    }
};

inline int feature_index(const DatasetSchema& schema, const std::string& name) {
    const auto it = std::find(schema.feature_names.begin(), schema.feature_names.end(), name);
    if (it == schema.feature_names.end())
        throw std::runtime_error("dataset: unknown feature " + name);
    return static_cast<int>(it - schema.feature_names.begin());
}

/// Drops rows the regressors must not see: anything that did not terminate
/// normally, and degenerate runs that finished in at most one timestep.
inline Dataset clean_dataset(const Dataset& raw) {
    Dataset out;
    out.schema = raw.schema;
    const int ts = feature_index(raw.schema, "timesteps");
    for (const auto& r : raw.rows) {
        if (r.status != sim::to_string(sim::RunStatus::normal)) continue;
        if (r.features[static_cast<std::size_t>(ts)] <= 1.0) continue;
        out.rows.push_back(r);
    }
    if (out.rows.empty()) throw std::runtime_error("clean_dataset: no usable rows remain");
    return out;
}

inline CsvTable dataset_to_csv(const Dataset& ds) {
    CsvTable t;
    t.header = {"group", "status", "elapsed_s", "mbe_o", "mbe_w", "mbe_g"};
    t.header.insert(t.header.end(), ds.schema.feature_names.begin(), ds.schema.feature_names.end());
    t.header.insert(t.header.end(), ds.schema.config_names.begin(), ds.schema.config_names.end());
    for (const auto& r : ds.rows) {
        std::vector<std::string> row = {r.group_id,
                                        r.status,
                                        format_double(r.elapsed_s),
                                        format_double(r.mbe_o),
                                        format_double(r.mbe_w),
                                        format_double(r.mbe_g)};
        for (double v : r.features) row.push_back(format_double(v));
        for (double v : r.config) row.push_back(format_double(v));
        t.add_row(std::move(row));
    }
    return t;
}

inline Dataset dataset_from_csv(const CsvTable& t, const DatasetSchema& schema) {
    Dataset ds;
    ds.schema = schema;
    const std::size_t fixed = 6;
    if (t.header.size() != fixed + schema.width())
        throw std::runtime_error("dataset: CSV column count does not match schema");
    for (const auto& row : t.rows) {
        DatasetRow r;
        r.group_id = row[0];
        r.status = row[1];
        r.elapsed_s = std::stod(row[2]);
        r.mbe_o = std::stod(row[3]);
        r.mbe_w = std::stod(row[4]);
        r.mbe_g = std::stod(row[5]);
        std::size_t at = fixed;
        for (std::size_t i = 0; i < schema.feature_names.size(); ++i)
            r.features.push_back(std::stod(row[at++]));
        for (std::size_t i = 0; i < schema.config_names.size(); ++i)
            r.config.push_back(std::stod(row[at++]));
        ds.rows.push_back(std::move(r));
    }
    return ds;
}

inline std::uint64_t dataset_fingerprint(const Dataset& ds) {
    std::ostringstream os;
    write_csv(dataset_to_csv(ds), os);
    return fnv1a(os.str());
}

inline nlohmann::json schema_to_json(const Dataset& ds) {
    return {{"feature_names", ds.schema.feature_names},
            {"config_names", ds.schema.config_names},
            {"group_column", "group"},
            {"status_column", "status"},
            {"target_columns", {"elapsed_s", "mbe_o", "mbe_w", "mbe_g"}},
            {"n_rows", ds.rows.size()},
            {"fingerprint", dataset_fingerprint(ds)}};
}

inline void save_dataset(const Dataset& ds, const std::string& csv_path,
                         const std::string& schema_path) {
    write_csv(dataset_to_csv(ds), csv_path);
    std::ofstream out(schema_path);
    if (!out) throw std::runtime_error("dataset: cannot write " + schema_path);
    out << schema_to_json(ds).dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& csv_path, const std::string& schema_path) {
    std::ifstream in(schema_path);
    if (!in) throw std::runtime_error("dataset: cannot read " + schema_path);
    const auto j = nlohmann::json::parse(in);
    DatasetSchema schema{j.at("feature_names").get<std::vector<std::string>>(),
                         j.at("config_names").get<std::vector<std::string>>()};
    auto ds = dataset_from_csv(read_csv(csv_path), schema);
    const auto expect = j.at("fingerprint").get<std::uint64_t>();
    const auto got = dataset_fingerprint(ds);
    if (expect != got)
        throw std::runtime_error("dataset: fingerprint mismatch for " + csv_path);
    return ds;
}

}  // namespace rstune::oracle
