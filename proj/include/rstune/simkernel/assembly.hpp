#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rstune/simkernel/linear.hpp"
#include "rstune/simkernel/model.hpp"

namespace rstune::sim {

/// Primary unknowns on active cells.
struct State {
    std::vector<double> p;   // bar
    std::vector<double> sw;  // fraction
};

struct Topology {
    int n_active = 0;
    std::vector<int> act_of_cell;              // -1 for inactive
    std::vector<int> cell_of_act;
    std::vector<std::pair<int, int>> ij_of_act;

    struct Face {
        int a = 0, b = 0;  // active indices
        double trans = 0.0;
    };
    std::vector<Face> faces;
    std::vector<std::vector<int>> adj;  // sorted neighbor lists, active indices
};

inline double harmonic_mean(double a, double b) {
    if (a + b == 0.0) return 0.0;
    return 2.0 * a * b / (a + b);
}

inline Topology build_topology(const GridModel& g) {
    Topology t;
    t.act_of_cell.assign(g.total_cells(), -1);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const int c = g.cell(i, j);
            if (!g.active_mask[c]) continue;
            t.act_of_cell[c] = t.n_active++;
            t.cell_of_act.push_back(c);
            t.ij_of_act.emplace_back(i, j);
        }

    const double ax = g.dy * g.dz / g.dx;  // face area over distance, x direction
    const double ay = g.dx * g.dz / g.dy;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const int c = g.cell(i, j);
            if (t.act_of_cell[c] < 0) continue;
            if (i + 1 < g.nx && t.act_of_cell[g.cell(i + 1, j)] >= 0) {
                const int d = g.cell(i + 1, j);
                t.faces.push_back({t.act_of_cell[c], t.act_of_cell[d],
                                   kDarcy * ax * harmonic_mean(g.perm_x[c], g.perm_x[d])});
            }
            if (j + 1 < g.ny && t.act_of_cell[g.cell(i, j + 1)] >= 0) {
                const int d = g.cell(i, j + 1);
                t.faces.push_back({t.act_of_cell[c], t.act_of_cell[d],
                                   kDarcy * ay * harmonic_mean(g.perm_y[c], g.perm_y[d])});
            }
        }

    t.adj.resize(t.n_active);
    for (const auto& f : t.faces) {
        t.adj[f.a].push_back(f.b);
        t.adj[f.b].push_back(f.a);
    }
    for (auto& nbrs : t.adj) std::sort(nbrs.begin(), nbrs.end());
    return t;
}

/// Surface-rate well contribution at one state, with derivatives for the
/// Jacobian. Positive rates inject into the reservoir.
struct PhaseRates {
    double q_o = 0.0, q_w = 0.0;
    double dqo_dp = 0.0, dqo_ds = 0.0;
    double dqw_dp = 0.0, dqw_ds = 0.0;
};

inline PhaseRates well_rates(const WellSpec& w, const WellControl& ctl, double p, double sw,
                             const FluidModel& f) {
    PhaseRates r;
    const double bo = f.b_o(p), bw = f.b_w(p);
    const double lo = f.kro(sw) / f.mu_o, lw = f.krw(sw) / f.mu_w;
    const double dlo = f.dkro_dsw(sw) / f.mu_o, dlw = f.dkrw_dsw(sw) / f.mu_w;

    if (w.kind == WellKind::injector) {
        if (ctl.kind == WellControlKind::rate) {
            r.q_w = ctl.value;
        } else {
            // injectivity follows total mobility; only water enters
            const double c = kDarcy * w.well_index;
            const double dp = ctl.value - p;
            r.q_w = c * (lo + lw) * bw * dp;
            r.dqw_dp = c * ((lo + lw) * f.c_w * dp - (lo + lw) * bw);
            r.dqw_ds = c * (dlo + dlw) * bw * dp;
        }
        return r;
    }

    if (ctl.kind == WellControlKind::rate) {
        // fixed total surface liquid rate, split by surface mobility
        const double wo = lo * bo, ww = lw * bw;
        const double sum = std::max(wo + ww, 1e-12);
        const double q = -ctl.value;
        r.q_o = q * wo / sum;
        r.q_w = q * ww / sum;
        const double dwo_dp = lo * f.c_o, dww_dp = lw * f.c_w;
        const double dwo_ds = dlo * bo, dww_ds = dlw * bw;
        const double dsum_dp = dwo_dp + dww_dp, dsum_ds = dwo_ds + dww_ds;
        r.dqo_dp = q * (dwo_dp * sum - wo * dsum_dp) / (sum * sum);
        r.dqo_ds = q * (dwo_ds * sum - wo * dsum_ds) / (sum * sum);
        r.dqw_dp = q * (dww_dp * sum - ww * dsum_dp) / (sum * sum);
        r.dqw_ds = q * (dww_ds * sum - ww * dsum_ds) / (sum * sum);
    } else {
        const double c = kDarcy * w.well_index;
        const double dp = ctl.value - p;
        r.q_o = c * lo * bo * dp;
        r.q_w = c * lw * bw * dp;
        r.dqo_dp = c * (lo * f.c_o * dp - lo * bo);
        r.dqo_ds = c * dlo * bo * dp;
        r.dqw_dp = c * (lw * f.c_w * dp - lw * bw);
        r.dqw_ds = c * dlw * bw * dp;
    }
    return r;
}

/// Finite-volume residual and Jacobian assembly for one simulation case.
/// The case must outlive the assembler.
class Assembler {
public:
    explicit Assembler(const SimulationCase& cs) : cs_(&cs), topo_(build_topology(cs.grid)) {
        pv0_.resize(topo_.n_active);
        const double vc = cs.grid.dx * cs.grid.dy * cs.grid.dz;
        for (int a = 0; a < topo_.n_active; ++a)
            pv0_[a] = vc * cs.grid.porosity[topo_.cell_of_act[a]];
    }

    [[nodiscard]] const Topology& topology() const { return topo_; }
    [[nodiscard]] const SimulationCase& sim_case() const { return *cs_; }
    [[nodiscard]] double pv0(int a) const { return pv0_[a]; }

    [[nodiscard]] State initial_state() const {
        State s;
        s.p.resize(topo_.n_active);
        s.sw.resize(topo_.n_active);
        for (int a = 0; a < topo_.n_active; ++a) {
            s.p[a] = cs_->p_init[topo_.cell_of_act[a]];
            s.sw[a] = cs_->sw_init[topo_.cell_of_act[a]];
        }
        return s;
    }

    [[nodiscard]] double pore_volume(int a, double p) const {
        return pv0_[a] * (1.0 + cs_->fluid.c_r * (p - cs_->fluid.p_ref));
    }

    /// Surface fluid in place, per phase.
    void fluid_in_place(const State& s, double& fip_o, double& fip_w) const {
        fip_o = fip_w = 0.0;
        for (int a = 0; a < topo_.n_active; ++a) {
            const double pv = pore_volume(a, s.p[a]);
            fip_o += pv * (1.0 - s.sw[a]) * cs_->fluid.b_o(s.p[a]);
            fip_w += pv * s.sw[a] * cs_->fluid.b_w(s.p[a]);
        }
    }

    [[nodiscard]] Csr make_fi_matrix() const {
        std::vector<std::vector<int>> cols(2 * topo_.n_active);
        for (int a = 0; a < topo_.n_active; ++a) {
            std::vector<int> cells{a};
            cells.insert(cells.end(), topo_.adj[a].begin(), topo_.adj[a].end());
            std::sort(cells.begin(), cells.end());
            for (int e = 0; e < 2; ++e)
                for (int c : cells) {
                    cols[2 * a + e].push_back(2 * c);
                    cols[2 * a + e].push_back(2 * c + 1);
                }
        }
        return make_csr(cols);
    }

    [[nodiscard]] Csr make_impes_matrix() const {
        std::vector<std::vector<int>> cols(topo_.n_active);
        for (int a = 0; a < topo_.n_active; ++a) {
            cols[a].push_back(a);
            cols[a].insert(cols[a].end(), topo_.adj[a].begin(), topo_.adj[a].end());
            std::sort(cols[a].begin(), cols[a].end());
        }
        return make_csr(cols);
    }

    /// Wells with an active schedule interval at the given day, resolved to
    /// active-cell indices.
    struct ActiveWell {
        const WellSpec* spec = nullptr;
        int act = 0;
        WellControl control;
    };

    [[nodiscard]] std::vector<ActiveWell> wells_at(double day) const {
        std::vector<ActiveWell> out;
        for (const auto& w : cs_->wells) {
            auto ctl = w.control_at(day);
            if (!ctl) continue;
            out.push_back({&w, topo_.act_of_cell[w.cell], *ctl});
        }
        return out;
    }

    /// Fully-implicit residual and Jacobian. Equations are ordered
    /// (oil, water) per cell; unknowns (p, sw) per cell. J must carry the
    /// make_fi_matrix pattern.
    void assemble_fi(const State& x, const State& xold, double dt, double day,
                     std::vector<double>& r, Csr& j) const {
        const auto& f = cs_->fluid;
        const int n = topo_.n_active;
        r.assign(2 * n, 0.0);
        std::fill(j.vals.begin(), j.vals.end(), 0.0);

        for (int a = 0; a < n; ++a) {
            const double p = x.p[a], sw = x.sw[a];
            const double pv = pore_volume(a, p);
            const double dpv_dp = pv0_[a] * f.c_r;
            const double bo = f.b_o(p), bw = f.b_w(p);

            const double pv_old = pore_volume(a, xold.p[a]);
            r[2 * a] = pv * (1.0 - sw) * bo - pv_old * (1.0 - xold.sw[a]) * f.b_o(xold.p[a]);
            r[2 * a + 1] = pv * sw * bw - pv_old * xold.sw[a] * f.b_w(xold.p[a]);

            j.at(2 * a, 2 * a) += (1.0 - sw) * (dpv_dp * bo + pv * f.c_o);
            j.at(2 * a, 2 * a + 1) += -pv * bo;
            j.at(2 * a + 1, 2 * a) += sw * (dpv_dp * bw + pv * f.c_w);
            j.at(2 * a + 1, 2 * a + 1) += pv * bw;
        }

        for (const auto& face : topo_.faces) {
            const int a = face.a, b = face.b;
            const double dpf = x.p[b] - x.p[a];
            const int up = dpf > 0.0 ? b : a;
            const double t = face.trans;

            const double bo_up = f.b_o(x.p[up]), bw_up = f.b_w(x.p[up]);
            const double lo = f.kro(x.sw[up]) / f.mu_o, lw = f.krw(x.sw[up]) / f.mu_w;
            const double dlo = f.dkro_dsw(x.sw[up]) / f.mu_o, dlw = f.dkrw_dsw(x.sw[up]) / f.mu_w;

            const double fo = t * lo * bo_up * dpf;  // into a
            const double fw = t * lw * bw_up * dpf;

            r[2 * a] -= dt * fo;
            r[2 * a + 1] -= dt * fw;
            r[2 * b] += dt * fo;
            r[2 * b + 1] += dt * fw;

            // pressure-difference part
            double dfo_dpa = -t * lo * bo_up, dfo_dpb = t * lo * bo_up;
            double dfw_dpa = -t * lw * bw_up, dfw_dpb = t * lw * bw_up;
            // compressibility of the upstream factor
            if (up == a) {
                dfo_dpa += t * lo * f.c_o * dpf;
                dfw_dpa += t * lw * f.c_w * dpf;
            } else {
                dfo_dpb += t * lo * f.c_o * dpf;
                dfw_dpb += t * lw * f.c_w * dpf;
            }
            const double dfo_dsup = t * dlo * bo_up * dpf;
            const double dfw_dsup = t * dlw * bw_up * dpf;

            j.at(2 * a, 2 * a) -= dt * dfo_dpa;
            j.at(2 * a, 2 * b) -= dt * dfo_dpb;
            j.at(2 * a + 1, 2 * a) -= dt * dfw_dpa;
            j.at(2 * a + 1, 2 * b) -= dt * dfw_dpb;
            j.at(2 * b, 2 * a) += dt * dfo_dpa;
            j.at(2 * b, 2 * b) += dt * dfo_dpb;
            j.at(2 * b + 1, 2 * a) += dt * dfw_dpa;
            j.at(2 * b + 1, 2 * b) += dt * dfw_dpb;

            j.at(2 * a, 2 * up + 1) -= dt * dfo_dsup;
            j.at(2 * a + 1, 2 * up + 1) -= dt * dfw_dsup;
            j.at(2 * b, 2 * up + 1) += dt * dfo_dsup;
            j.at(2 * b + 1, 2 * up + 1) += dt * dfw_dsup;
        }

        for (const auto& w : wells_at(day)) {
            const int a = w.act;
            const auto q = well_rates(*w.spec, w.control, x.p[a], x.sw[a], f);
            r[2 * a] -= dt * q.q_o;
            r[2 * a + 1] -= dt * q.q_w;
            j.at(2 * a, 2 * a) -= dt * q.dqo_dp;
            j.at(2 * a, 2 * a + 1) -= dt * q.dqo_ds;
            j.at(2 * a + 1, 2 * a) -= dt * q.dqw_dp;
            j.at(2 * a + 1, 2 * a + 1) -= dt * q.dqw_ds;
        }
    }

    /// Implicit-pressure system with saturations frozen at the previous step.
    /// Reservoir-volume balance; one equation per active cell.
    void assemble_impes(const std::vector<double>& p, const State& xold, double dt, double day,
                        std::vector<double>& r, Csr& j) const {
        const auto& f = cs_->fluid;
        const int n = topo_.n_active;
        r.assign(n, 0.0);
        std::fill(j.vals.begin(), j.vals.end(), 0.0);

        for (int a = 0; a < n; ++a) {
            const double ct = f.c_r + xold.sw[a] * f.c_w + (1.0 - xold.sw[a]) * f.c_o;
            r[a] = ct * pv0_[a] * (p[a] - xold.p[a]);
            j.at(a, a) += ct * pv0_[a];
        }

        for (const auto& face : topo_.faces) {
            const int a = face.a, b = face.b;
            const double dpf = p[b] - p[a];
            const int up = dpf > 0.0 ? b : a;
            const double lt = f.kro(xold.sw[up]) / f.mu_o + f.krw(xold.sw[up]) / f.mu_w;
            const double flux = face.trans * lt * dpf;  // into a
            r[a] -= dt * flux;
            r[b] += dt * flux;
            const double c = dt * face.trans * lt;
            j.at(a, a) += c;
            j.at(a, b) -= c;
            j.at(b, b) += c;
            j.at(b, a) -= c;
        }

        for (const auto& w : wells_at(day)) {
            const int a = w.act;
            const double lt = f.kro(xold.sw[a]) / f.mu_o + f.krw(xold.sw[a]) / f.mu_w;
            double qt = 0.0, dqt_dp = 0.0;
            if (w.control.kind == WellControlKind::rate) {
                qt = w.spec->kind == WellKind::injector ? w.control.value : -w.control.value;
            } else {
                const double c = kDarcy * w.spec->well_index;
                qt = c * lt * (w.control.value - p[a]);
                dqt_dp = -c * lt;
            }
            r[a] -= dt * qt;
            j.at(a, a) -= dt * dqt_dp;
        }
    }

    /// Explicit water balance after the pressure solve. Returns false when a
    /// saturation leaves [0,1] beyond tolerance, signalling a cut.
    bool explicit_water_update(const std::vector<double>& p_new, const State& xold, double dt,
                               double day, std::vector<double>& sw_new) const {
        const auto& f = cs_->fluid;
        const int n = topo_.n_active;
        std::vector<double> vw(n);
        for (int a = 0; a < n; ++a)
            vw[a] = pore_volume(a, xold.p[a]) * xold.sw[a] * f.b_w(xold.p[a]);

        for (const auto& face : topo_.faces) {
            const int a = face.a, b = face.b;
            const double dpf = p_new[b] - p_new[a];
            const int up = dpf > 0.0 ? b : a;
            const double fw = face.trans * (f.krw(xold.sw[up]) / f.mu_w) * f.b_w(p_new[up]) * dpf;
            vw[a] += dt * fw;
            vw[b] -= dt * fw;
        }

        for (const auto& w : wells_at(day)) {
            const int a = w.act;
            const auto q = well_rates(*w.spec, w.control, p_new[a], xold.sw[a], f);
            vw[a] += dt * q.q_w;
        }

        sw_new.resize(n);
        for (int a = 0; a < n; ++a) {
            const double denom = pore_volume(a, p_new[a]) * f.b_w(p_new[a]);
            const double sw = vw[a] / denom;
            if (sw < -1e-9 || sw > 1.0 + 1e-9) return false;
            sw_new[a] = std::clamp(sw, 0.0, 1.0);
        }
        return true;
    }

    /// Per-well surface rates at a state, in well declaration order; wells
    /// with no active interval report zeros.
    [[nodiscard]] std::vector<PhaseRates> rates_at(const State& x, double day) const {
        std::vector<PhaseRates> out(cs_->wells.size());
        for (std::size_t wi = 0; wi < cs_->wells.size(); ++wi) {
            const auto& w = cs_->wells[wi];
            auto ctl = w.control_at(day);
            if (!ctl) continue;
            const int a = topo_.act_of_cell[w.cell];
            out[wi] = well_rates(w, *ctl, x.p[a], x.sw[a], cs_->fluid);
        }
        return out;
    }

private:
    const SimulationCase* cs_;
    Topology topo_;
    std::vector<double> pv0_;
};

/// Newton system at the given iterate: A = Jacobian, b = -residual. The
/// formulation in the case controls picks the fully-implicit or the
/// pressure-only system.
inline std::pair<Csr, std::vector<double>> assemble_system(const Assembler& asmb, const State& x,
                                                           const State& xold, double dt,
                                                           double day) {
    std::vector<double> r;
    Csr j;
    if (asmb.sim_case().controls.formulation == Formulation::fully_implicit) {
        j = asmb.make_fi_matrix();
        asmb.assemble_fi(x, xold, dt, day, r, j);
    } else {
        j = asmb.make_impes_matrix();
        asmb.assemble_impes(x.p, xold, dt, day, r, j);
    }
    std::vector<double> b(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) b[i] = -r[i];
    return {std::move(j), std::move(b)};
}

}  // namespace rstune::sim
