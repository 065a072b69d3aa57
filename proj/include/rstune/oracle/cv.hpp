#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rstune/oracle/oracle.hpp"

namespace rstune::oracle {

struct Metrics {
    double mape = 0.0;
    double mse = 0.0;
    double mae = 0.0;
};

inline Metrics metrics(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
    if (y_true.empty() || y_true.size() != y_pred.size())
        throw std::runtime_error("metrics: empty or mismatched vectors");
    Metrics m;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] == 0.0)
            throw std::runtime_error("metrics: zero true value makes MAPE undefined");
        const double err = y_true[i] - y_pred[i];
        m.mape += std::abs(err) / std::abs(y_true[i]);
        m.mse += err * err;
        m.mae += std::abs(err);
    }
    const auto n = static_cast<double>(y_true.size());
    m.mape = m.mape / n * 100.0;
    m.mse /= n;
    m.mae /= n;
    return m;
}

struct SplitReport {
    std::string held_group;
    Metrics train;
    Metrics validation;
};

struct ConfigReport {
    OracleConfig config;
    std::vector<SplitReport> splits;
    Metrics mean_train;
    Metrics mean_validation;
};

struct CVReport {
    std::vector<ConfigReport> configs;
    std::size_t best_index = 0;
    std::vector<std::string> holdout_groups;
    Metrics holdout_test;  // meaningful only when holdout groups were given
    bool refit_on_full = true;
};

namespace detail {

inline Metrics evaluate(const TrainedOracle& o, const std::vector<DatasetRow>& rows) {
    std::vector<double> y_true, y_pred;
    y_true.reserve(rows.size());
    y_pred.reserve(rows.size());
    for (const auto& r : rows) {
        y_true.push_back(r.elapsed_s);
        y_pred.push_back(o.predict_input(r.input()).elapsed_s);
    }
    return metrics(y_true, y_pred);
}

inline Metrics mean_metrics(const std::vector<SplitReport>& splits, bool validation) {
    Metrics m;
    for (const auto& s : splits) {
        const Metrics& src = validation ? s.validation : s.train;
        m.mape += src.mape;
        m.mse += src.mse;
        m.mae += src.mae;
    }
    const auto n = static_cast<double>(splits.size());
    m.mape /= n;
    m.mse /= n;
    m.mae /= n;
    return m;
}

}  // namespace detail

struct LogoResult {
    CVReport report;
    TrainedOracle best;
};

/// Leave-one-group-out grid search. Every configuration sees one split per
/// distinct group id; pipelines are fitted inside each split on the training
/// rows only. The winner (lowest mean validation MAPE on the elapsed target)
/// is refit on the full working set.
inline LogoResult logo_cv(const Dataset& ds, const std::vector<OracleConfig>& grid,
                          std::uint64_t seed,
                          const std::vector<std::string>& holdout_groups = {}) {
    if (grid.empty()) throw std::runtime_error("logo_cv: empty configuration grid");
    ds.check();

    Dataset work, holdout;
    work.schema = ds.schema;
    holdout.schema = ds.schema;
    for (const auto& r : ds.rows) {
        const bool held = std::find(holdout_groups.begin(), holdout_groups.end(), r.group_id) !=
                          holdout_groups.end();
        (held ? holdout : work).rows.push_back(r);
    }

    const auto groups = work.group_ids();
    if (groups.size() < 2)
        throw std::runtime_error("logo_cv: need at least 2 groups, have " +
                                 std::to_string(groups.size()));

    CVReport report;
    report.holdout_groups = holdout_groups;
    for (const auto& config : grid) {
        ConfigReport cr;
        cr.config = config;
        for (const auto& g : groups) {
            Dataset train;
            train.schema = work.schema;
            std::vector<DatasetRow> val_rows;
            for (const auto& r : work.rows)
                (r.group_id == g ? val_rows : train.rows).push_back(r);

            const auto fold = train_oracle(train, config, derive_seed(seed, fnv1a(g)));
            SplitReport sr;
            sr.held_group = g;
            sr.train = detail::evaluate(fold, train.rows);
            sr.validation = detail::evaluate(fold, val_rows);
            cr.splits.push_back(std::move(sr));
        }
        cr.mean_train = detail::mean_metrics(cr.splits, false);
        cr.mean_validation = detail::mean_metrics(cr.splits, true);
        report.configs.push_back(std::move(cr));
    }

    report.best_index = 0;
    for (std::size_t i = 1; i < report.configs.size(); ++i)
        if (report.configs[i].mean_validation.mape <
            report.configs[report.best_index].mean_validation.mape)
            report.best_index = i;

    LogoResult out;
    out.best = train_oracle(work, report.configs[report.best_index].config, seed);
    if (!holdout.rows.empty()) report.holdout_test = detail::evaluate(out.best, holdout.rows);
    out.report = std::move(report);
    return out;
}

inline CsvTable cv_report_to_csv(const CVReport& report) {
    CsvTable t;
    t.header = {"config",     "split",    "held_group", "train_mape", "train_mse",
                "train_mae",  "val_mape", "val_mse",    "val_mae",    "best"};
    for (std::size_t c = 0; c < report.configs.size(); ++c) {
        const auto& cr = report.configs[c];
        const std::string best = c == report.best_index ? "1" : "0";
        for (std::size_t s = 0; s < cr.splits.size(); ++s) {
            const auto& sr = cr.splits[s];
            t.add_row({cr.config.describe(), std::to_string(s), sr.held_group,
                       format_double(sr.train.mape), format_double(sr.train.mse),
                       format_double(sr.train.mae), format_double(sr.validation.mape),
                       format_double(sr.validation.mse), format_double(sr.validation.mae), best});
        }
        t.add_row({cr.config.describe(), "mean", "", format_double(cr.mean_train.mape),
                   format_double(cr.mean_train.mse), format_double(cr.mean_train.mae),
                   format_double(cr.mean_validation.mape), format_double(cr.mean_validation.mse),
                   format_double(cr.mean_validation.mae), best});
    }
    return t;
}

}  // namespace rstune::oracle
