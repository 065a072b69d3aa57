#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "rstune/simkernel/model.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace rstune::sim {

struct Csr {
    int n = 0;
    std::vector<int> row_ptr;  // size n+1
    std::vector<int> col_idx;
    std::vector<double> vals;

    [[nodiscard]] int nnz() const { return static_cast<int>(col_idx.size()); }

    [[nodiscard]] double& at(int row, int col) {
        for (int k = row_ptr[row]; k < row_ptr[row + 1]; ++k)
            if (col_idx[k] == col) return vals[k];
        throw std::runtime_error("csr: entry outside sparsity pattern");
    }

    void multiply(const std::vector<double>& x, std::vector<double>& y) const {
        for (int r = 0; r < n; ++r) {
            double s = 0.0;
            for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += vals[k] * x[col_idx[k]];
            y[r] = s;
        }
    }
};

/// Builds a CSR matrix from per-row sorted column lists; values start at zero.
inline Csr make_csr(const std::vector<std::vector<int>>& cols_per_row) {
    Csr m;
    m.n = static_cast<int>(cols_per_row.size());
    m.row_ptr.resize(m.n + 1, 0);
    for (int r = 0; r < m.n; ++r)
        m.row_ptr[r + 1] = m.row_ptr[r] + static_cast<int>(cols_per_row[r].size());
    m.col_idx.reserve(m.row_ptr[m.n]);
    for (const auto& cols : cols_per_row)
        m.col_idx.insert(m.col_idx.end(), cols.begin(), cols.end());
    m.vals.assign(m.col_idx.size(), 0.0);
    return m;
}

// ---- Cell orderings ------------------------------------------------------

/// Returns a permutation of the active cells: position k of the result holds
/// the old cell index placed k-th in the new numbering.
inline std::vector<int> make_cell_ordering(Ordering kind, int n_cells,
                                           const std::vector<std::vector<int>>& adjacency,
                                           const std::vector<std::pair<int, int>>& cell_ij) {
    std::vector<int> perm(n_cells);
    std::iota(perm.begin(), perm.end(), 0);
    if (kind == Ordering::natural || n_cells == 0) return perm;

    if (kind == Ordering::red_black) {
        std::vector<int> out;
        out.reserve(n_cells);
        for (int c = 0; c < n_cells; ++c)
            if ((cell_ij[c].first + cell_ij[c].second) % 2 == 0) out.push_back(c);
        for (int c = 0; c < n_cells; ++c)
            if ((cell_ij[c].first + cell_ij[c].second) % 2 != 0) out.push_back(c);
        return out;
    }

    // Reverse Cuthill-McKee: BFS from a minimum-degree cell, neighbors visited
    // in increasing-degree order, result reversed. Disconnected components are
    // swept in cell order.
    std::vector<int> degree(n_cells);
    for (int c = 0; c < n_cells; ++c) degree[c] = static_cast<int>(adjacency[c].size());
    std::vector<char> visited(n_cells, 0);
    std::vector<int> order;
    order.reserve(n_cells);
    for (;;) {
        int start = -1;
        for (int c = 0; c < n_cells; ++c)
            if (!visited[c] && (start < 0 || degree[c] < degree[start])) start = c;
        if (start < 0) break;
        std::vector<int> queue{start};
        visited[start] = 1;
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            const int c = queue[qi];
            order.push_back(c);
            std::vector<int> nbrs;
            for (int nb : adjacency[c])
                if (!visited[nb]) nbrs.push_back(nb);
            std::sort(nbrs.begin(), nbrs.end(),
                      [&](int a, int b) { return degree[a] != degree[b] ? degree[a] < degree[b] : a < b; });
            for (int nb : nbrs) {
                visited[nb] = 1;
                queue.push_back(nb);
            }
        }
    }
    std::reverse(order.begin(), order.end());
    return order;
}

/// Expands a cell permutation to the unknown level (block_size unknowns per
/// cell, kept adjacent).
inline std::vector<int> expand_ordering(const std::vector<int>& cell_perm, int block_size) {
    std::vector<int> perm;
    perm.reserve(cell_perm.size() * block_size);
    for (int c : cell_perm)
        for (int b = 0; b < block_size; ++b) perm.push_back(c * block_size + b);
    return perm;
}

inline Csr permute_system(const Csr& a, const std::vector<double>& b,
                          const std::vector<int>& perm, std::vector<double>& b_out) {
    const int n = a.n;
    std::vector<int> inv(n);
    for (int k = 0; k < n; ++k) inv[perm[k]] = k;

    std::vector<std::vector<int>> cols(n);
    for (int r = 0; r < n; ++r) {
        const int old_row = perm[r];
        for (int k = a.row_ptr[old_row]; k < a.row_ptr[old_row + 1]; ++k)
            cols[r].push_back(inv[a.col_idx[k]]);
        std::sort(cols[r].begin(), cols[r].end());
    }
    Csr out = make_csr(cols);
    for (int r = 0; r < n; ++r) {
        const int old_row = perm[r];
        for (int k = a.row_ptr[old_row]; k < a.row_ptr[old_row + 1]; ++k)
            out.at(r, inv[a.col_idx[k]]) = a.vals[k];
    }
    b_out.resize(n);
    for (int r = 0; r < n; ++r) b_out[r] = b[perm[r]];
    return out;
}

// ---- ILU(0) ----------------------------------------------------------------

struct Ilu0 {
    Csr lu;                     // combined factors on the original pattern
    std::vector<int> diag_pos;  // position of the diagonal in each row

    void factor(const Csr& a, bool pivot_stab) {
        lu = a;
        const int n = a.n;
        diag_pos.assign(n, -1);
        for (int r = 0; r < n; ++r)
            for (int k = lu.row_ptr[r]; k < lu.row_ptr[r + 1]; ++k)
                if (lu.col_idx[k] == r) diag_pos[r] = k;
        for (int r = 0; r < n; ++r)
            if (diag_pos[r] < 0) throw std::runtime_error("ilu0: structurally missing diagonal");

        if (pivot_stab) {
            for (int r = 0; r < n; ++r) {
                double row_max = 0.0;
                for (int k = lu.row_ptr[r]; k < lu.row_ptr[r + 1]; ++k)
                    row_max = std::max(row_max, std::abs(lu.vals[k]));
                lu.vals[diag_pos[r]] += 1e-8 * row_max;
            }
        }

        std::vector<int> pos_of_col(n, -1);
        for (int i = 1; i < n; ++i) {
            for (int k = lu.row_ptr[i]; k < lu.row_ptr[i + 1]; ++k) pos_of_col[lu.col_idx[k]] = k;
            for (int k = lu.row_ptr[i]; k < lu.row_ptr[i + 1]; ++k) {
                const int j = lu.col_idx[k];
                if (j >= i) break;
                double piv = lu.vals[diag_pos[j]];
                if (piv == 0.0) piv = 1e-30;
                const double mult = lu.vals[k] / piv;
                lu.vals[k] = mult;
                for (int kk = diag_pos[j] + 1; kk < lu.row_ptr[j + 1]; ++kk) {
                    const int p = pos_of_col[lu.col_idx[kk]];
                    if (p >= 0) lu.vals[p] -= mult * lu.vals[kk];
                }
            }
            for (int k = lu.row_ptr[i]; k < lu.row_ptr[i + 1]; ++k) pos_of_col[lu.col_idx[k]] = -1;
        }
    }

    void apply(const std::vector<double>& r, std::vector<double>& z) const {
        const int n = lu.n;
        z = r;
        for (int i = 0; i < n; ++i) {
            double s = z[i];
            for (int k = lu.row_ptr[i]; k < diag_pos[i]; ++k) s -= lu.vals[k] * z[lu.col_idx[k]];
            z[i] = s;
        }
        for (int i = n - 1; i >= 0; --i) {
            double s = z[i];
            for (int k = diag_pos[i] + 1; k < lu.row_ptr[i + 1]; ++k) s -= lu.vals[k] * z[lu.col_idx[k]];
            double piv = lu.vals[diag_pos[i]];
            if (piv == 0.0) piv = 1e-30;
            z[i] = s / piv;
        }
    }
};

// ---- Solvers ---------------------------------------------------------------

struct LinearReport {
    int iterations = 0;
    bool failed = false;
    double rel_residual = 0.0;
};

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

/// Restarted GMRES with left ILU(0) preconditioning. Always returns the best
/// iterate found; `failed` reports that the cap was hit before the target.
inline std::vector<double> gmres_ilu0(const Csr& a, const std::vector<double>& b,
                                      const NumericalControls& controls, LinearReport& report) {
    const int n = a.n;
    report = {};
    std::vector<double> x(n, 0.0);

    Ilu0 prec;
    prec.factor(a, controls.pivot_stab);

    std::vector<double> pb(n);
    prec.apply(b, pb);
    const double pb_norm = norm2(pb);
    if (pb_norm == 0.0) return x;

    const int m = std::min(controls.north_restart, n);
    std::vector<std::vector<double>> v(m + 1, std::vector<double>(n));
    std::vector<double> h((m + 1) * m, 0.0);
    std::vector<double> cs(m), sn(m), g(m + 1);
    std::vector<double> tmp(n), ptmp(n);

    int total_iters = 0;
    double best_rel = 1.0;

    while (true) {
        // r = M^{-1}(b − A x)
        a.multiply(x, tmp);
        for (int i = 0; i < n; ++i) tmp[i] = b[i] - tmp[i];
        prec.apply(tmp, v[0]);
        double beta = norm2(v[0]);
        best_rel = std::min(best_rel, beta / pb_norm);
        if (beta / pb_norm <= controls.lin_tol) {
            report.iterations = total_iters;
            report.rel_residual = beta / pb_norm;
            return x;
        }
        if (total_iters >= controls.lin_iter_max) {
            report.iterations = total_iters;
            report.failed = true;
            report.rel_residual = beta / pb_norm;
            return x;
        }
        for (int i = 0; i < n; ++i) v[0][i] /= beta;
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = beta;

        int j = 0;
        bool cycle_done = false;
        for (; j < m && !cycle_done; ++j) {
            ++total_iters;
            a.multiply(v[j], tmp);
            prec.apply(tmp, v[j + 1]);
            // modified Gram-Schmidt
            for (int i = 0; i <= j; ++i) {
                double dot = 0.0;
                for (int kk = 0; kk < n; ++kk) dot += v[j + 1][kk] * v[i][kk];
                h[i * m + j] = dot;
                for (int kk = 0; kk < n; ++kk) v[j + 1][kk] -= dot * v[i][kk];
            }
            const double hnext = norm2(v[j + 1]);
            if (hnext > 0.0)
                for (int kk = 0; kk < n; ++kk) v[j + 1][kk] /= hnext;
            // apply accumulated Givens rotations, then form a new one
            double hj = h[j * m + j], hn = hnext;
            for (int i = 0; i < j; ++i) {
                const double t0 = cs[i] * h[i * m + j] + sn[i] * h[(i + 1) * m + j];
                h[(i + 1) * m + j] = -sn[i] * h[i * m + j] + cs[i] * h[(i + 1) * m + j];
                h[i * m + j] = t0;
            }
            hj = h[j * m + j];
            const double denom = std::sqrt(hj * hj + hn * hn);
            if (denom == 0.0) {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = hj / denom;
                sn[j] = hn / denom;
            }
            h[j * m + j] = cs[j] * hj + sn[j] * hn;
            h[(j + 1) * m + j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];

            const double rel = std::abs(g[j + 1]) / pb_norm;
            if (rel <= controls.lin_tol || total_iters >= controls.lin_iter_max || hnext == 0.0) {
                ++j;
                cycle_done = true;
                break;
            }
        }

        // back-substitute the small triangular system and update x
        std::vector<double> y(j, 0.0);
        for (int i = j - 1; i >= 0; --i) {
            double s = g[i];
            for (int kk = i + 1; kk < j; ++kk) s -= h[i * m + kk] * y[kk];
            const double hd = h[i * m + i];
            y[i] = hd != 0.0 ? s / hd : 0.0;
        }
        for (int i = 0; i < j; ++i)
            for (int kk = 0; kk < n; ++kk) x[kk] += y[i] * v[i][kk];

        const double rel = std::abs(g[j]) / pb_norm;
        if (rel <= controls.lin_tol) {
            report.iterations = total_iters;
            report.rel_residual = rel;
            return x;
        }
        if (total_iters >= controls.lin_iter_max) {
            report.iterations = total_iters;
            report.failed = true;
            report.rel_residual = rel;
            return x;
        }
    }
}

inline std::vector<double> sparse_lu_solve(const Csr& a, const std::vector<double>& b) {
    using Sparse = Eigen::SparseMatrix<double>;
    Sparse m(a.n, a.n);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(a.col_idx.size());
    for (int r = 0; r < a.n; ++r)
        for (int k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k)
            trips.emplace_back(r, a.col_idx[k], a.vals[k]);
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();

    Eigen::SparseLU<Sparse> lu;
    lu.analyzePattern(m);
    lu.factorize(m);
    if (lu.info() != Eigen::Success)
        throw std::runtime_error("linear_solve: singular matrix in direct factorization");
    Eigen::VectorXd rhs(a.n);
    for (int i = 0; i < a.n; ++i) rhs(i) = b[i];
    Eigen::VectorXd sol = lu.solve(rhs);
    std::vector<double> x(a.n);
    for (int i = 0; i < a.n; ++i) x[i] = sol(i);
    return x;
}

/// Solves A x = b under the given controls. `perm` renumbers the unknowns
/// before factorization (identity for natural ordering); pass an empty vector
/// to skip permutation.
inline std::vector<double> linear_solve(const Csr& a, const std::vector<double>& b,
                                        const NumericalControls& controls,
                                        const std::vector<int>& perm, LinearReport& report) {
    report = {};
    const Csr* sys = &a;
    const std::vector<double>* rhs = &b;
    Csr permuted;
    std::vector<double> rhs_p;
    const bool use_perm = !perm.empty();
    if (use_perm) {
        if (static_cast<int>(perm.size()) != a.n)
            throw std::runtime_error("linear_solve: permutation size mismatch");
        permuted = permute_system(a, b, perm, rhs_p);
        sys = &permuted;
        rhs = &rhs_p;
    }

    std::vector<double> x_p;
    if (controls.solver_kind == SolverKind::direct) {
        x_p = sparse_lu_solve(*sys, *rhs);
        report.iterations = 1;
    } else {
        x_p = gmres_ilu0(*sys, *rhs, controls, report);
    }

    if (!use_perm) return x_p;
    std::vector<double> x(a.n);
    for (int k = 0; k < a.n; ++k) x[perm[k]] = x_p[k];
    return x;
}

}  // namespace rstune::sim
