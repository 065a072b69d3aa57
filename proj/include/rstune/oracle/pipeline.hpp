#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rstune::oracle {

enum class ScalerKind { rescale_01, standardize };

inline std::string to_string(ScalerKind k) {
    return k == ScalerKind::rescale_01 ? "rescale_01" : "standardize";
}

inline ScalerKind scaler_from_string(const std::string& s) {
    if (s == "rescale_01") return ScalerKind::rescale_01;
    if (s == "standardize") return ScalerKind::standardize;
    throw std::runtime_error("pipeline: unknown scaler " + s);
}

inline const std::vector<double>& allowed_topk_fractions() {
    static const std::vector<double> fr{1.0, 0.9, 0.8};
    return fr;
}

struct PipelineSpec {
    ScalerKind scaler = ScalerKind::standardize;
    double topk_frac = 1.0;

    void check() const {
        for (double f : allowed_topk_fractions())
            if (f == topk_frac) return;
        throw std::runtime_error("pipeline: top-k fraction outside the declared grid");
    }
};

/// Absolute Pearson correlation between a column and the target; columns (or
/// targets) without variance score 0.
inline double abs_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return std::abs(sxy / std::sqrt(sxx * syy));
}

struct FittedPipeline {
    PipelineSpec spec;
    std::vector<double> stat_a;  // per-column min (rescale_01) or mean (standardize)
    std::vector<double> stat_b;  // per-column max or standard deviation
    std::vector<int> selected;

    [[nodiscard]] std::size_t input_width() const { return stat_a.size(); }
    [[nodiscard]] std::size_t output_width() const { return selected.size(); }

    [[nodiscard]] std::vector<double> transform(const std::vector<double>& x) const {
        if (x.size() != stat_a.size())
            throw std::runtime_error("pipeline: input width mismatch");
        std::vector<double> out;
        out.reserve(selected.size());
        for (int c : selected) {
            const double v = x[static_cast<std::size_t>(c)];
            double scaled = 0.0;
            if (spec.scaler == ScalerKind::rescale_01) {
                const double range = stat_b[c] - stat_a[c];
                scaled = range > 0.0 ? (v - stat_a[c]) / range : 0.0;
            } else {
                scaled = stat_b[c] > 0.0 ? (v - stat_a[c]) / stat_b[c] : 0.0;
            }
            out.push_back(scaled);
        }
        return out;
    }
};

/// Scaler statistics and top-k column choice come from the training rows only;
/// selection scores rank columns by |Pearson| against the elapsed target.
inline FittedPipeline fit_pipeline(const PipelineSpec& spec, const std::vector<std::vector<double>>& x,
                                   const std::vector<double>& y_elapsed) {
    spec.check();
    if (x.size() < 2) throw std::runtime_error("fit_pipeline: need at least 2 training rows");
    if (x.size() != y_elapsed.size())
        throw std::runtime_error("fit_pipeline: row count does not match target length");

    const std::size_t ncols = x.front().size();
    for (const auto& row : x)
        if (row.size() != ncols) throw std::runtime_error("fit_pipeline: ragged rows");

    FittedPipeline fp;
    fp.spec = spec;
    fp.stat_a.resize(ncols);
    fp.stat_b.resize(ncols);

    std::vector<double> col(x.size());
    std::vector<double> scores(ncols);
    for (std::size_t c = 0; c < ncols; ++c) {
        for (std::size_t r = 0; r < x.size(); ++r) col[r] = x[r][c];
        if (spec.scaler == ScalerKind::rescale_01) {
            fp.stat_a[c] = *std::min_element(col.begin(), col.end());
            fp.stat_b[c] = *std::max_element(col.begin(), col.end());
        } else {
            const double mean = std::accumulate(col.begin(), col.end(), 0.0) /
                                static_cast<double>(col.size());
            double var = 0.0;
            for (double v : col) var += (v - mean) * (v - mean);
            fp.stat_a[c] = mean;
            fp.stat_b[c] = std::sqrt(var / static_cast<double>(col.size()));
        }
        scores[c] = abs_pearson(col, y_elapsed);
    }

    const auto k = static_cast<std::size_t>(
        std::llround(spec.topk_frac * static_cast<double>(ncols)));
    std::vector<int> order(ncols);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&scores](int a, int b) { return scores[a] > scores[b]; });
    order.resize(k);
    std::sort(order.begin(), order.end());
    fp.selected = std::move(order);
    return fp;
}

inline nlohmann::json pipeline_to_json(const FittedPipeline& fp) {
    return {{"scaler", to_string(fp.spec.scaler)},
            {"topk_frac", fp.spec.topk_frac},
            {"stat_a", fp.stat_a},
            {"stat_b", fp.stat_b},
            {"selected", fp.selected}};
}

inline FittedPipeline pipeline_from_json(const nlohmann::json& j) {
    FittedPipeline fp;
    fp.spec.scaler = scaler_from_string(j.at("scaler").get<std::string>());
    fp.spec.topk_frac = j.at("topk_frac").get<double>();
    fp.stat_a = j.at("stat_a").get<std::vector<double>>();
    fp.stat_b = j.at("stat_b").get<std::vector<double>>();
    fp.selected = j.at("selected").get<std::vector<int>>();
    return fp;
}

}  // namespace rstune::oracle
