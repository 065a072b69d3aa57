#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rstune/rng.hpp"
#include "rstune/simkernel/model.hpp"

namespace rstune::gen {

/// Knobs for the synthetic quarter-five-spot cases used by the demos and the
/// history-matching campaigns.
struct FieldSpec {
    int nx = 20, ny = 20;
    double dx = 50.0, dy = 50.0, dz = 10.0;  // m
    double mean_log_perm = 4.6;              // log mD, about 100 mD
    double sigma_log_perm = 0.8;
    int blur_radius = 2;
    double perm_y_ratio = 0.5;
    double poro_base = 0.18, poro_scale = 0.04;
    double p_init = 200.0;                    // bar
    double horizon_days = 360.0;
    double report_interval_days = 30.0;
    double inject_rate = 120.0;               // m³/day
    double produce_rate = 120.0;
};

/// Smooth unit-variance Gaussian field: white noise box-blurred with a
/// (2r+1)² window, each window sum divided by the square root of the cell
/// count so the variance stays at one.
inline std::vector<double> smooth_gaussian_field(int nx, int ny, int radius, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> white(static_cast<std::size_t>(nx) * ny);
    for (auto& v : white) v = rng.normal();
    if (radius <= 0) return white;

    std::vector<double> out(white.size());
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            double sum = 0.0;
            int count = 0;
            for (int dj = -radius; dj <= radius; ++dj)
                for (int di = -radius; di <= radius; ++di) {
                    const int ii = i + di, jj = j + dj;
                    if (ii < 0 || ii >= nx || jj < 0 || jj >= ny) continue;
                    sum += white[static_cast<std::size_t>(jj) * nx + ii];
                    ++count;
                }
            out[static_cast<std::size_t>(j) * nx + i] = sum / std::sqrt(static_cast<double>(count));
        }
    return out;
}

inline std::vector<double> log_perm_field(const FieldSpec& spec, std::uint64_t seed) {
    auto field = smooth_gaussian_field(spec.nx, spec.ny, spec.blur_radius, seed);
    for (auto& v : field) {
        v = spec.mean_log_perm + spec.sigma_log_perm * v;
        v = std::clamp(v, 0.0, 9.2);  // 1 mD to roughly 10 D
    }
    return field;
}

/// Installs a log-permeability map into a case; porosity is left untouched.
inline void apply_log_perm(sim::SimulationCase& cs, const std::vector<double>& log_perm,
                           double perm_y_ratio) {
    const auto n = static_cast<std::size_t>(cs.grid.total_cells());
    if (log_perm.size() != n)
        throw std::runtime_error("apply_log_perm: field size does not match the grid");
    for (std::size_t c = 0; c < n; ++c) {
        cs.grid.perm_x[c] = std::exp(log_perm[c]);
        cs.grid.perm_y[c] = perm_y_ratio * cs.grid.perm_x[c];
    }
}

/// Quarter-five-spot waterflood on a synthetic heterogeneous field: a rate
/// injector in one corner, a rate producer in the opposite one.
inline sim::SimulationCase synth_case(const FieldSpec& spec, std::uint64_t seed) {
    sim::SimulationCase cs;
    cs.grid.nx = spec.nx;
    cs.grid.ny = spec.ny;
    cs.grid.dx = spec.dx;
    cs.grid.dy = spec.dy;
    cs.grid.dz = spec.dz;
    const auto n = static_cast<std::size_t>(spec.nx) * spec.ny;
    cs.grid.perm_x.resize(n);
    cs.grid.perm_y.resize(n);
    cs.grid.porosity.resize(n);
    cs.grid.active_mask.assign(n, 1);

    const auto logk = log_perm_field(spec, seed);
    apply_log_perm(cs, logk, spec.perm_y_ratio);

    const auto poro_noise = smooth_gaussian_field(spec.nx, spec.ny, spec.blur_radius,
                                                  derive_seed(seed, 0x9e11));
    for (std::size_t c = 0; c < n; ++c)
        cs.grid.porosity[c] = std::clamp(spec.poro_base + spec.poro_scale * poro_noise[c], 0.05, 0.35);

    cs.horizon_days = spec.horizon_days;
    cs.report_interval_days = spec.report_interval_days;
    cs.p_init.assign(n, spec.p_init);
    cs.sw_init.assign(n, cs.fluid.swc);

    sim::WellSpec inj;
    inj.name = "INJ1";
    inj.cell = cs.grid.cell(0, 0);
    inj.kind = sim::WellKind::injector;
    inj.schedule.push_back({0.0, spec.horizon_days,
                            {sim::WellControlKind::rate, spec.inject_rate}});
    sim::WellSpec prod;
    prod.name = "PRD1";
    prod.cell = cs.grid.cell(spec.nx - 1, spec.ny - 1);
    prod.kind = sim::WellKind::producer;
    prod.schedule.push_back({0.0, spec.horizon_days,
                             {sim::WellControlKind::rate, spec.produce_rate}});
    cs.wells.push_back(std::move(inj));
    cs.wells.push_back(std::move(prod));
    cs.check();
    return cs;
}

/// Prior ensemble of log-permeability fields, one per member.
inline std::vector<std::vector<double>> make_prior_ensemble(const FieldSpec& spec, int n_members,
                                                            std::uint64_t seed) {
    std::vector<std::vector<double>> members;
    members.reserve(n_members);
    for (int m = 0; m < n_members; ++m)
        members.push_back(log_perm_field(spec, derive_seed(seed, 101, m)));
    return members;
}

}  // namespace rstune::gen
