#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rstune/csv.hpp"
#include "rstune/rng.hpp"

namespace rstune::esmda {

struct EnsembleState {
    Eigen::MatrixXd m;  // n_params x n_realizations
    std::vector<std::string> param_names;
    int assimilation_index = 0;

    void check() const {
        if (m.cols() < 2) throw std::runtime_error("ensemble: need at least 2 realizations");
        if (!m.allFinite()) throw std::runtime_error("ensemble: non-finite parameter entries");
        if (!param_names.empty() && static_cast<Eigen::Index>(param_names.size()) != m.rows())
            throw std::runtime_error("ensemble: parameter name count mismatch");
    }
};

struct ObservationSet {
    Eigen::VectorXd d_obs;
    Eigen::VectorXd variances;  // diagonal of C_D
    std::vector<std::string> labels;

    void check() const {
        if (d_obs.size() < 1) throw std::runtime_error("observations: empty");
        if (variances.size() != d_obs.size())
            throw std::runtime_error("observations: variance length mismatch");
        for (Eigen::Index i = 0; i < variances.size(); ++i)
            if (!(variances[i] > 0.0))
                throw std::runtime_error("observations: variances must be positive");
    }
};

struct AssimilationConfig {
    int n_a = 4;
    std::vector<double> alphas;  // length n_a
    std::uint64_t seed = 0;
    double svd_tol = 1e-8;
};

inline std::vector<double> uniform_alphas(int n_a) {
    return std::vector<double>(static_cast<std::size_t>(n_a), static_cast<double>(n_a));
}

inline void validate_alphas(const std::vector<double>& alphas) {
    if (alphas.empty()) throw std::runtime_error("alphas: empty schedule");
    double inv_sum = 0.0;
    for (double a : alphas) {
        if (!(a > 0.0)) throw std::runtime_error("alphas: inflation factors must be positive");
        inv_sum += 1.0 / a;
    }
    const double residual = inv_sum - 1.0;
    if (std::abs(residual) > 1e-12)
        throw std::runtime_error("alphas: reciprocal sum off by " + format_double(residual));
}

/// Column j = d_obs + sqrt(alpha) * sqrt(C_D) * z_j, z_j standard normal.
inline Eigen::MatrixXd perturb_observations(const ObservationSet& obs, double alpha, int n_r,
                                            Rng& rng) {
    obs.check();
    if (!(alpha > 0.0)) throw std::runtime_error("perturb: alpha must be positive");
    const auto n_d = obs.d_obs.size();
    Eigen::MatrixXd d_uc(n_d, n_r);
    const double root_alpha = std::sqrt(alpha);
    for (int j = 0; j < n_r; ++j)
        for (Eigen::Index i = 0; i < n_d; ++i)
            d_uc(i, j) = obs.d_obs[i] + root_alpha * std::sqrt(obs.variances[i]) * rng.normal();
    return d_uc;
}

struct CrossCovariances {
    Eigen::MatrixXd c_md;  // n_params x n_d
    Eigen::MatrixXd c_dd;  // n_d x n_d
};

inline CrossCovariances cross_covariance(const Eigen::MatrixXd& m, const Eigen::MatrixXd& d_sim) {
    if (m.cols() != d_sim.cols()) throw std::runtime_error("covariance: realization count mismatch");
    const auto n_r = m.cols();
    if (n_r < 2) throw std::runtime_error("covariance: need at least 2 realizations");

    const Eigen::MatrixXd mc = m.colwise() - m.rowwise().mean();
    const Eigen::MatrixXd dc = d_sim.colwise() - d_sim.rowwise().mean();
    const double scale = 1.0 / static_cast<double>(n_r - 1);
    return {scale * (mc * dc.transpose()), scale * (dc * dc.transpose())};
}

/// Truncated-SVD pseudo-inverse, dropping singular values below tol times the
/// largest one.
inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& a, double tol) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? tol * sv[0] : 0.0;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > cutoff && sv[i] > 0.0) inv[i] = 1.0 / sv[i];
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

inline Eigen::MatrixXd kalman_gain(const Eigen::MatrixXd& c_md, const Eigen::MatrixXd& c_dd,
                                   const Eigen::VectorXd& c_d_diag, double alpha,
                                   double svd_tol = 1e-8) {
    if (c_dd.rows() != c_dd.cols() || c_md.cols() != c_dd.rows() ||
        c_d_diag.size() != c_dd.rows())
        throw std::runtime_error("kalman_gain: inconsistent shapes");
    if (!c_md.allFinite() || !c_dd.allFinite() || !c_d_diag.allFinite())
        throw std::runtime_error("kalman_gain: non-finite input");
    Eigen::MatrixXd denom = c_dd;
    denom.diagonal() += alpha * c_d_diag;
    return c_md * pseudo_inverse(denom, svd_tol);
}

inline Eigen::MatrixXd update_ensemble(const Eigen::MatrixXd& m, const Eigen::MatrixXd& d_sim,
                                       const Eigen::MatrixXd& d_uc, const Eigen::MatrixXd& k) {
    if (d_sim.rows() != d_uc.rows() || d_sim.cols() != d_uc.cols() || m.cols() != d_sim.cols() ||
        k.rows() != m.rows() || k.cols() != d_sim.rows())
        throw std::runtime_error("update_ensemble: inconsistent shapes");
    return m + k * (d_uc - d_sim);
}

/// Full simulated ensemble response for one assimilation round; column j is
/// realization j.
using ForwardModel = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& m, int round)>;

struct EsmdaLedger {
    std::vector<Eigen::MatrixXd> m_snapshots;  // prior, then one per assimilation
    std::vector<Eigen::MatrixXd> d_sims;       // one per forward call, forecast last
    std::vector<double> alphas;
    std::uint64_t seed = 0;
};

struct EsmdaResult {
    EnsembleState final_state;
    EsmdaLedger ledger;
};

inline EsmdaResult run_esmda(const EnsembleState& initial, const ObservationSet& obs,
                             const AssimilationConfig& config, const ForwardModel& forward) {
    initial.check();
    obs.check();
    if (static_cast<int>(config.alphas.size()) != config.n_a)
        throw std::runtime_error("esmda: alpha schedule length differs from n_a");
    validate_alphas(config.alphas);

    const auto n_r = static_cast<int>(initial.m.cols());
    EsmdaResult out;
    out.ledger.alphas = config.alphas;
    out.ledger.seed = config.seed;

    Eigen::MatrixXd m = initial.m;
    out.ledger.m_snapshots.push_back(m);

    auto call_forward = [&](int round) {
        Eigen::MatrixXd d_sim;
        try {
            d_sim = forward(m, round);
        } catch (const std::exception& e) {
            throw std::runtime_error("esmda: forward model failed in round " +
                                     std::to_string(round + 1) + ": " + e.what());
        }
        if (d_sim.rows() != obs.d_obs.size() || d_sim.cols() != n_r)
            throw std::runtime_error("esmda: forward output shape mismatch in round " +
                                     std::to_string(round + 1));
        if (!d_sim.allFinite())
            throw std::runtime_error("esmda: non-finite forward output in round " +
                                     std::to_string(round + 1));
        out.ledger.d_sims.push_back(d_sim);
        return d_sim;
    };

    for (int n = 0; n < config.n_a; ++n) {
        const Eigen::MatrixXd d_sim = call_forward(n);
        Rng rng(derive_seed(config.seed, 0xDA, static_cast<std::uint64_t>(n)));
        const Eigen::MatrixXd d_uc = perturb_observations(obs, config.alphas[n], n_r, rng);
        const auto cov = cross_covariance(m, d_sim);
        const Eigen::MatrixXd k =
            kalman_gain(cov.c_md, cov.c_dd, obs.variances, config.alphas[n], config.svd_tol);
        m = update_ensemble(m, d_sim, d_uc, k);
        out.ledger.m_snapshots.push_back(m);
    }

    call_forward(config.n_a);  // forecast with the final ensemble

    out.final_state.m = m;
    out.final_state.param_names = initial.param_names;
    out.final_state.assimilation_index = config.n_a;
    return out;
}

// ---- Persistence -------------------------------------------------------------

inline CsvTable matrix_to_csv(const Eigen::MatrixXd& m) {
    CsvTable t;
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.header.push_back("member_" + std::to_string(j));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<std::string> row;
        row.reserve(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(format_double(m(i, j)));
        t.add_row(std::move(row));
    }
    return t;
}

inline Eigen::MatrixXd matrix_from_csv(const CsvTable& t) {
    Eigen::MatrixXd m(t.nrows(), t.ncols());
    for (std::size_t i = 0; i < t.nrows(); ++i)
        for (std::size_t j = 0; j < t.ncols(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::stod(t.rows[i][j]);
    return m;
}

inline void save_ledger(const EsmdaLedger& ledger, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (std::size_t n = 0; n < ledger.m_snapshots.size(); ++n)
        write_csv(matrix_to_csv(ledger.m_snapshots[n]),
                  dir + "/ensemble_round_" + std::to_string(n) + ".csv");
    for (std::size_t n = 0; n < ledger.d_sims.size(); ++n)
        write_csv(matrix_to_csv(ledger.d_sims[n]),
                  dir + "/dsim_round_" + std::to_string(n) + ".csv");
    nlohmann::json manifest{{"seed", ledger.seed},
                            {"alphas", ledger.alphas},
                            {"n_snapshots", ledger.m_snapshots.size()},
                            {"n_forward_calls", ledger.d_sims.size()}};
    std::ofstream out(dir + "/esmda_manifest.json");
    if (!out) throw std::runtime_error("esmda: cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

}  // namespace rstune::esmda
