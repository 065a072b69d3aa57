#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "rstune/csv.hpp"
#include "rstune/rng.hpp"

#include <nlohmann/json.hpp>

namespace rstune::space {

enum class ParamKind { categorical, integer, real, log_real };

inline std::string to_string(ParamKind k) {
    switch (k) {
        case ParamKind::categorical: return "categorical";
        case ParamKind::integer: return "integer";
        case ParamKind::real: return "real";
        case ParamKind::log_real: return "log_real";
    }
    return "?";
}

inline ParamKind kind_from_string(const std::string& s) {
    if (s == "categorical") return ParamKind::categorical;
    if (s == "integer") return ParamKind::integer;
    if (s == "real") return ParamKind::real;
    if (s == "log_real") return ParamKind::log_real;
    throw std::runtime_error("unknown parameter kind: " + s);
}

using ParamValue = std::variant<double, std::string>;

struct ParameterDef {
    std::string name;
    ParamKind kind = ParamKind::real;
    std::vector<std::string> categories;  // categorical only
    double lo = 0.0;                      // numeric only
    double hi = 1.0;
    ParamValue default_value;

    [[nodiscard]] bool is_numeric() const { return kind != ParamKind::categorical; }

    [[nodiscard]] std::size_t encoded_width() const {
        return kind == ParamKind::categorical ? categories.size() : 1;
    }

    void check() const {
        if (name.empty()) throw std::runtime_error("parameter with empty name");
        if (kind == ParamKind::categorical) {
            if (categories.size() < 2)
                throw std::runtime_error(name + ": categorical needs at least two categories");
            const auto& d = std::get<std::string>(default_value);
            if (std::find(categories.begin(), categories.end(), d) == categories.end())
                throw std::runtime_error(name + ": default '" + d + "' not among categories");
        } else {
            if (!(lo < hi)) throw std::runtime_error(name + ": requires lo < hi");
            if (kind == ParamKind::log_real && lo <= 0.0)
                throw std::runtime_error(name + ": log_real requires lo > 0");
            const double d = std::get<double>(default_value);
            if (d < lo || d > hi) throw std::runtime_error(name + ": default outside [lo, hi]");
        }
    }
};

struct ConfigSample {
    std::map<std::string, ParamValue> values;

    [[nodiscard]] double real_at(const std::string& name) const {
        return std::get<double>(values.at(name));
    }
    [[nodiscard]] long long int_at(const std::string& name) const {
        return std::llround(std::get<double>(values.at(name)));
    }
    [[nodiscard]] const std::string& cat_at(const std::string& name) const {
        return std::get<std::string>(values.at(name));
    }

    bool operator==(const ConfigSample& other) const { return values == other.values; }
};

struct SearchSpace {
    std::vector<ParameterDef> params;

    void check() const {
        for (const auto& p : params) p.check();
        for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t j = i + 1; j < params.size(); ++j)
                if (params[i].name == params[j].name)
                    throw std::runtime_error("duplicate parameter name: " + params[i].name);
    }

    [[nodiscard]] const ParameterDef* find(const std::string& name) const {
        for (const auto& p : params)
            if (p.name == name) return &p;
        return nullptr;
    }

    [[nodiscard]] std::size_t encoded_length() const {
        std::size_t n = 0;
        for (const auto& p : params) n += p.encoded_width();
        return n;
    }

    [[nodiscard]] ConfigSample defaults() const {
        ConfigSample s;
        for (const auto& p : params) s.values[p.name] = p.default_value;
        return s;
    }
};

inline ParameterDef real_param(std::string name, double lo, double hi, double dflt) {
    ParameterDef p;
    p.name = std::move(name);
    p.kind = ParamKind::real;
    p.lo = lo;
    p.hi = hi;
    p.default_value = dflt;
    return p;
}

inline ParameterDef log_real_param(std::string name, double lo, double hi, double dflt) {
    ParameterDef p = real_param(std::move(name), lo, hi, dflt);
    p.kind = ParamKind::log_real;
    return p;
}

inline ParameterDef int_param(std::string name, long long lo, long long hi, long long dflt) {
    ParameterDef p;
    p.name = std::move(name);
    p.kind = ParamKind::integer;
    p.lo = static_cast<double>(lo);
    p.hi = static_cast<double>(hi);
    p.default_value = static_cast<double>(dflt);
    return p;
}

inline ParameterDef cat_param(std::string name, std::vector<std::string> cats, std::string dflt) {
    ParameterDef p;
    p.name = std::move(name);
    p.kind = ParamKind::categorical;
    p.categories = std::move(cats);
    p.default_value = std::move(dflt);
    return p;
}

/// Tunable controls of the built-in simulator.
inline SearchSpace builtin_space() {
    SearchSpace s;
    s.params = {
        real_param("dt_max", 5.0, 365.0, 365.0),
        real_param("dt_min", 1e-6, 1e-3, 1e-3),
        int_param("lin_iter_max", 5, 200, 10),
        int_param("maxchange_press", 15, 300, 60),
        real_param("maxchange_satur", 0.1, 0.9, 0.1),
        cat_param("ncuts_max", {"unlimited", "10", "100"}, "unlimited"),
        int_param("newton_max", 5, 40, 10),
        int_param("norm_press", 10, 70, 30),
        real_param("norm_satur", 0.1, 0.3, 0.1),
        int_param("north_restart", 15, 200, 30),
        cat_param("pivot_stab", {"off", "on"}, "off"),
        log_real_param("lin_tol", 1e-5, 1e-3, 1e-4),
        cat_param("solver_kind", {"direct", "iterative"}, "iterative"),
        cat_param("ordering", {"natural", "rcm", "red-black"}, "red-black"),
        cat_param("formulation", {"fully-implicit", "impes"}, "fully-implicit"),
    };
    s.check();
    return s;
}

namespace detail {

inline bool same_value(const ParamValue& a, const ParamValue& b) {
    return a == b;
}

inline void check_cross_field(const ConfigSample& s, const SearchSpace& space,
                              std::vector<std::string>& out) {
    if (space.find("dt_min") && space.find("dt_max")) {
        if (s.real_at("dt_min") > s.real_at("dt_max"))
            out.push_back("dt_min exceeds dt_max");
    }
    if (space.find("norm_press") && space.find("maxchange_press")) {
        if (s.real_at("norm_press") > s.real_at("maxchange_press"))
            out.push_back("norm_press exceeds maxchange_press");
    }
    if (space.find("norm_satur") && space.find("maxchange_satur")) {
        if (s.real_at("norm_satur") > s.real_at("maxchange_satur"))
            out.push_back("norm_satur exceeds maxchange_satur");
    }
}

}  // namespace detail

/// Returns the full list of violations; empty means the sample is valid.
inline std::vector<std::string> validate(const ConfigSample& sample, const SearchSpace& space) {
    std::vector<std::string> out;
    for (const auto& p : space.params) {
        auto it = sample.values.find(p.name);
        if (it == sample.values.end()) {
            out.push_back(p.name + ": missing");
            continue;
        }
        if (p.kind == ParamKind::categorical) {
            const auto* v = std::get_if<std::string>(&it->second);
            if (!v) {
                out.push_back(p.name + ": expected a category string");
                continue;
            }
            if (std::find(p.categories.begin(), p.categories.end(), *v) == p.categories.end())
                out.push_back(p.name + ": '" + *v + "' not among categories");
        } else {
            const auto* v = std::get_if<double>(&it->second);
            if (!v) {
                out.push_back(p.name + ": expected a number");
                continue;
            }
            if (*v < p.lo || *v > p.hi)
                out.push_back(p.name + ": " + format_double(*v) + " outside [" +
                              format_double(p.lo) + ", " + format_double(p.hi) + "]");
            else if (p.kind == ParamKind::integer && *v != std::llround(*v))
                out.push_back(p.name + ": " + format_double(*v) + " is not integral");
        }
    }
    for (const auto& [name, _] : sample.values)
        if (!space.find(name)) out.push_back(name + ": not a parameter of this space");
    detail::check_cross_field(sample, space, out);
    return out;
}

/// Clamps dependent fields so every sample passes the cross-field rules.
inline void repair_cross_field(ConfigSample& s, const SearchSpace& space) {
    if (space.find("dt_min") && space.find("dt_max")) {
        double lo = s.real_at("dt_min"), hi = s.real_at("dt_max");
        if (lo > hi) {
            s.values["dt_min"] = hi;
            s.values["dt_max"] = lo;
        }
    }
    if (space.find("norm_press") && space.find("maxchange_press")) {
        if (s.real_at("norm_press") > s.real_at("maxchange_press"))
            s.values["norm_press"] = s.real_at("maxchange_press");
    }
    if (space.find("norm_satur") && space.find("maxchange_satur")) {
        if (s.real_at("norm_satur") > s.real_at("maxchange_satur"))
            s.values["norm_satur"] = s.real_at("maxchange_satur");
    }
}

/// Latin Hypercube sampling: every numeric dimension is split into n equal
/// strata (log-domain for log_real) with one draw per stratum; categorical
/// dimensions get near-equal category counts. Deterministic per seed.
inline std::vector<ConfigSample> lhs_sample(const SearchSpace& space, std::size_t n,
                                            std::uint64_t seed) {
    if (n < 1) throw std::runtime_error("lhs_sample: n must be at least 1");
    space.check();

    std::vector<ConfigSample> samples(n);

    for (std::size_t d = 0; d < space.params.size(); ++d) {
        const auto& p = space.params[d];
        Rng rng(derive_seed(seed, d + 1));

        if (p.kind == ParamKind::categorical) {
            const std::size_t k = p.categories.size();
            std::vector<std::size_t> assignment;
            assignment.reserve(n);
            for (std::size_t c = 0; c < k; ++c)
                for (std::size_t r = 0; r < n / k; ++r) assignment.push_back(c);
            std::vector<std::size_t> cats(k);
            for (std::size_t c = 0; c < k; ++c) cats[c] = c;
            rng.shuffle(cats);
            for (std::size_t r = 0; r < n % k; ++r) assignment.push_back(cats[r]);
            rng.shuffle(assignment);
            for (std::size_t i = 0; i < n; ++i)
                samples[i].values[p.name] = p.categories[assignment[i]];
            continue;
        }

        const bool log_dom = p.kind == ParamKind::log_real;
        const double lo = log_dom ? std::log(p.lo) : p.lo;
        const double hi = log_dom ? std::log(p.hi) : p.hi;

        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        rng.shuffle(perm);

        for (std::size_t i = 0; i < n; ++i) {
            const double u = rng.uniform();
            double x = lo + (static_cast<double>(perm[i]) + u) / static_cast<double>(n) * (hi - lo);
            if (log_dom) x = std::exp(x);
            if (p.kind == ParamKind::integer) {
                x = static_cast<double>(std::llround(x));
                x = std::clamp(x, p.lo, p.hi);
            }
            samples[i].values[p.name] = x;
        }
    }

    for (auto& s : samples) repair_cross_field(s, space);
    return samples;
}

/// Baseline plus single-parameter sweeps; variants identical to the baseline
/// are dropped.
inline std::vector<ConfigSample> oat_plan(const SearchSpace& space,
                                          std::size_t levels_per_numeric) {
    if (levels_per_numeric < 2)
        throw std::runtime_error("oat_plan: levels_per_numeric must be at least 2");
    space.check();

    const ConfigSample baseline = space.defaults();
    std::vector<ConfigSample> plan;
    plan.push_back(baseline);

    for (const auto& p : space.params) {
        if (p.kind == ParamKind::categorical) {
            for (const auto& c : p.categories) {
                ConfigSample v = baseline;
                v.values[p.name] = c;
                if (!(v == baseline)) plan.push_back(v);
            }
            continue;
        }
        const bool log_dom = p.kind == ParamKind::log_real;
        const double lo = log_dom ? std::log(p.lo) : p.lo;
        const double hi = log_dom ? std::log(p.hi) : p.hi;
        for (std::size_t l = 0; l < levels_per_numeric; ++l) {
            double x = lo + (hi - lo) * static_cast<double>(l) /
                                static_cast<double>(levels_per_numeric - 1);
            if (log_dom) x = std::exp(x);
            if (p.kind == ParamKind::integer)
                x = std::clamp(static_cast<double>(std::llround(x)), p.lo, p.hi);
            ConfigSample v = baseline;
            v.values[p.name] = x;
            if (!(v == baseline)) plan.push_back(v);
        }
    }
    return plan;
}

/// Min-max scaling to [0,1] for numeric kinds (log-domain for log_real) and
/// one-hot expansion for categoricals, laid out in parameter order.
inline std::vector<double> encode(const ConfigSample& sample, const SearchSpace& space) {
    auto violations = validate(sample, space);
    if (!violations.empty())
        throw std::runtime_error("encode: invalid sample: " + violations.front());

    std::vector<double> out;
    out.reserve(space.encoded_length());
    for (const auto& p : space.params) {
        if (p.kind == ParamKind::categorical) {
            const auto& v = std::get<std::string>(sample.values.at(p.name));
            for (const auto& c : p.categories) out.push_back(c == v ? 1.0 : 0.0);
        } else {
            double v = std::get<double>(sample.values.at(p.name));
            double lo = p.lo, hi = p.hi;
            if (p.kind == ParamKind::log_real) {
                v = std::log(v);
                lo = std::log(p.lo);
                hi = std::log(p.hi);
            }
            out.push_back((v - lo) / (hi - lo));
        }
    }
    return out;
}

/// Column labels matching the encode layout, one per encoded slot.
inline std::vector<std::string> encoding_names(const SearchSpace& space) {
    std::vector<std::string> names;
    names.reserve(space.encoded_length());
    for (const auto& p : space.params) {
        if (p.kind == ParamKind::categorical) {
            for (const auto& c : p.categories) names.push_back(p.name + "=" + c);
        } else {
            names.push_back(p.name);
        }
    }
    return names;
}

/// Inverse layout walk of encode; categorical slots resolve by argmax.
inline ConfigSample decode(const std::vector<double>& vec, const SearchSpace& space) {
    if (vec.size() != space.encoded_length())
        throw std::runtime_error("decode: vector length " + std::to_string(vec.size()) +
                                 " does not match encoded length " +
                                 std::to_string(space.encoded_length()));
    ConfigSample sample;
    std::size_t at = 0;
    for (const auto& p : space.params) {
        if (p.kind == ParamKind::categorical) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < p.categories.size(); ++c)
                if (vec[at + c] > vec[at + best]) best = c;
            sample.values[p.name] = p.categories[best];
            at += p.categories.size();
        } else {
            double lo = p.lo, hi = p.hi;
            const double x = vec[at++];
            double v;
            if (p.kind == ParamKind::log_real) {
                v = std::exp(std::log(lo) + x * (std::log(hi) - std::log(lo)));
            } else {
                v = lo + x * (hi - lo);
            }
            if (p.kind == ParamKind::integer)
                v = std::clamp(static_cast<double>(std::llround(v)), p.lo, p.hi);
            sample.values[p.name] = v;
        }
    }
    return sample;
}

// ---- JSON serialization -------------------------------------------------

inline nlohmann::json space_to_json(const SearchSpace& space) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& p : space.params) {
        nlohmann::json e;
        e["name"] = p.name;
        e["kind"] = to_string(p.kind);
        if (p.kind == ParamKind::categorical) {
            e["categories"] = p.categories;
            e["default"] = std::get<std::string>(p.default_value);
        } else {
            e["lo"] = p.lo;
            e["hi"] = p.hi;
            e["default"] = std::get<double>(p.default_value);
        }
        j.push_back(e);
    }
    return nlohmann::json{{"parameters", j}};
}

inline SearchSpace space_from_json(const nlohmann::json& j) {
    SearchSpace s;
    for (const auto& e : j.at("parameters")) {
        ParameterDef p;
        p.name = e.at("name").get<std::string>();
        p.kind = kind_from_string(e.at("kind").get<std::string>());
        if (p.kind == ParamKind::categorical) {
            p.categories = e.at("categories").get<std::vector<std::string>>();
            p.default_value = e.at("default").get<std::string>();
        } else {
            p.lo = e.at("lo").get<double>();
            p.hi = e.at("hi").get<double>();
            p.default_value = e.at("default").get<double>();
        }
        s.params.push_back(std::move(p));
    }
    s.check();
    return s;
}

inline nlohmann::json sample_to_json(const ConfigSample& sample) {
    nlohmann::json j;
    for (const auto& [name, value] : sample.values) {
        if (const auto* d = std::get_if<double>(&value))
            j[name] = *d;
        else
            j[name] = std::get<std::string>(value);
    }
    return j;
}

inline ConfigSample sample_from_json(const nlohmann::json& j) {
    ConfigSample s;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it->is_string())
            s.values[it.key()] = it->get<std::string>();
        else
            s.values[it.key()] = it->get<double>();
    }
    return s;
}

}  // namespace rstune::space
