#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flap/errors.hpp"
#include "flap/forecasting.hpp"
#include "flap/panel.hpp"
#include "flap/rng.hpp"

namespace flap {

/// A VAR(P) data generating process with Gaussian innovations.
struct VarProcess {
    std::vector<Eigen::MatrixXd> coefficients;  // A_1..A_P, each m x m
    Eigen::VectorXd intercept;                  // m
    Eigen::MatrixXd innovation_cov;             // m x m SPD
    std::uint64_t seed = 0;
    bool stabilized = false;  // eigenvalues were rescaled after fitting

    Eigen::Index m() const { return intercept.size(); }
    int order() const { return static_cast<int>(coefficients.size()); }
};

inline double companion_radius(const VarProcess& proc) {
    const Eigen::Index m = proc.m();
    const int q = proc.order();
    if (q == 0) return 0.0;
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(m * q, m * q);
    for (int lag = 0; lag < q; ++lag)
        comp.block(0, lag * m, m, m) = proc.coefficients[static_cast<std::size_t>(lag)];
    if (q > 1) comp.block(m, 0, m * (q - 1), m * (q - 1)).setIdentity();
    return comp.eigenvalues().cwiseAbs().maxCoeff();
}

/// Simulates T observations after discarding burn_in draws. Deterministic
/// per seed; the process must be stable.
inline Panel simulate(const VarProcess& proc, int T, int burn_in = 200) {
    if (T < 1) throw ConfigError("simulate: T must be positive");
    const double radius = companion_radius(proc);
    if (radius >= 1.0)
        throw StabilityError("simulate: companion spectral radius " + std::to_string(radius) +
                             " >= 1");
    const Eigen::Index m = proc.m();
    Eigen::LLT<Eigen::MatrixXd> llt(proc.innovation_cov);
    if (llt.info() != Eigen::Success)
        throw CovarianceNotPDError("simulate: innovation covariance is not positive definite");
    const Eigen::MatrixXd chol = llt.matrixL();

    Rng rng(proc.seed);
    const int q = proc.order();
    const int total = burn_in + T;
    Eigen::MatrixXd path(total + q, m);
    path.topRows(q).setZero();  // burn-in washes out the zero start
    Eigen::VectorXd eps(m);
    for (int t = 0; t < total; ++t) {
        for (Eigen::Index j = 0; j < m; ++j) eps[j] = rng.normal();
        Eigen::VectorXd value = proc.intercept + chol * eps;
        for (int lag = 1; lag <= q; ++lag)
            value += proc.coefficients[static_cast<std::size_t>(lag - 1)] *
                     path.row(q + t - lag).transpose();
        path.row(q + t) = value.transpose();
    }
    return make_panel(path.bottomRows(T));
}

/// Wraps a VAR fit as a DGP: identity innovation covariance, and an
/// eigenvalue rescale to radius 0.98 when the fit is explosive.
inline VarProcess fit_dgp_from_panel(const Panel& panel, int order,
                                     std::uint64_t seed = 0) {
    const FittedForecaster f = fit_var(panel, order, true);
    VarProcess proc;
    proc.coefficients = f.var_coef;
    proc.intercept = f.var_intercept;
    proc.innovation_cov = Eigen::MatrixXd::Identity(panel.cols(), panel.cols());
    proc.seed = seed;
    const double radius = companion_radius(proc);
    if (radius >= 0.98 && order > 0) {
        const double alpha = 0.98 / radius;
        double factor = alpha;
        for (auto& a : proc.coefficients) {
            a *= factor;
            factor *= alpha;
        }
        proc.stabilized = true;
    }
    return proc;
}

/// Moving-average coefficient matrices Psi_0..Psi_{count-1} of the process.
inline std::vector<Eigen::MatrixXd> ma_coefficients(const VarProcess& proc, int count) {
    const Eigen::Index m = proc.m();
    std::vector<Eigen::MatrixXd> psi;
    psi.push_back(Eigen::MatrixXd::Identity(m, m));
    for (int j = 1; j < count; ++j) {
        Eigen::MatrixXd pj = Eigen::MatrixXd::Zero(m, m);
        for (int i = 1; i <= std::min(j, proc.order()); ++i)
            pj += proc.coefficients[static_cast<std::size_t>(i - 1)] *
                  psi[static_cast<std::size_t>(j - i)];
        psi.push_back(std::move(pj));
    }
    return psi;
}

/// Population h-step forecast-error covariance of the optimal predictor:
/// sum_{j<h} Psi_j Sigma Psi_j'. Exact, no truncation enters.
inline Eigen::MatrixXd theoretical_error_cov(const VarProcess& proc, int h) {
    if (h < 1) throw ConfigError("theoretical_error_cov: h must be >= 1");
    const auto psi = ma_coefficients(proc, h);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(proc.m(), proc.m());
    for (int j = 0; j < h; ++j)
        w += psi[static_cast<std::size_t>(j)] * proc.innovation_cov *
             psi[static_cast<std::size_t>(j)].transpose();
    return w;
}

/// Optimal h-step predictor of the process from history ending at row
/// `origin` of `panel` (iterated conditional mean).
inline Eigen::VectorXd process_predict(const VarProcess& proc, const Eigen::MatrixXd& panel,
                                       int origin, int h) {
    FittedForecaster f;
    f.family = Family::VAR;
    f.order = proc.order();
    f.series_count = static_cast<int>(proc.m());
    f.var_coef = proc.coefficients;
    f.var_intercept = proc.intercept;
    return detail::var_iterate(f, panel, origin, h);
}

/// Deterministic stable surrogate DGP with dense cross-series dynamics:
/// Gaussian coefficient blocks rescaled so the companion radius is exactly
/// `radius`. Innovations have identity covariance.
inline VarProcess make_surrogate_dgp(Eigen::Index m, int order, std::uint64_t seed,
                                     double radius = 0.9) {
    if (m < 1 || order < 1) throw ConfigError("make_surrogate_dgp: m and order must be positive");
    if (radius <= 0.0 || radius >= 1.0)
        throw ConfigError("make_surrogate_dgp: radius must lie in (0, 1)");
    Rng rng(derive_seed(seed, 0x5bALL));
    VarProcess proc;
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    for (int lag = 1; lag <= order; ++lag) {
        Eigen::MatrixXd a(m, m);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j) a(i, j) = rng.normal() * scale / lag;
        proc.coefficients.push_back(std::move(a));
    }
    proc.intercept = Eigen::VectorXd::Zero(m);
    proc.innovation_cov = Eigen::MatrixXd::Identity(m, m);
    proc.seed = seed;
    const double rho = companion_radius(proc);
    const double alpha = radius / rho;
    double factor = alpha;
    for (auto& a : proc.coefficients) {
        a *= factor;
        factor *= alpha;
    }
    return proc;
}

inline void save_process(const std::filesystem::path& path, const VarProcess& proc) {
    nlohmann::json j;
    j["order"] = proc.order();
    j["m"] = proc.m();
    j["seed"] = proc.seed;
    j["intercept"] = std::vector<double>(proc.intercept.data(),
                                         proc.intercept.data() + proc.intercept.size());
    auto matrix_rows = [](const Eigen::MatrixXd& a) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            const Eigen::RowVectorXd row = a.row(i);
            rows.emplace_back(row.data(), row.data() + row.size());
        }
        return rows;
    };
    j["coefficients"] = nlohmann::json::array();
    for (const auto& a : proc.coefficients) j["coefficients"].push_back(matrix_rows(a));
    j["innovation_cov"] = matrix_rows(proc.innovation_cov);
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path.string());
    out << j.dump(2) << '\n';
}

inline VarProcess load_process(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open process file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("invalid process JSON in " + path.string() + ": " + e.what());
    }
    VarProcess proc;
    try {
        const auto intercept = j.at("intercept").get<std::vector<double>>();
        proc.intercept = Eigen::Map<const Eigen::VectorXd>(intercept.data(),
                                                           static_cast<Eigen::Index>(intercept.size()));
        const Eigen::Index m = proc.intercept.size();
        for (const auto& mat : j.at("coefficients")) {
            Eigen::MatrixXd a(m, m);
            Eigen::Index i = 0;
            for (const auto& row : mat) {
                const auto vals = row.get<std::vector<double>>();
                if (static_cast<Eigen::Index>(vals.size()) != m)
                    throw ConfigError("coefficient row length mismatch");
                a.row(i++) = Eigen::Map<const Eigen::RowVectorXd>(vals.data(), m);
            }
            proc.coefficients.push_back(std::move(a));
        }
        if (j.contains("innovation_cov")) {
            Eigen::MatrixXd cov(m, m);
            Eigen::Index i = 0;
            for (const auto& row : j.at("innovation_cov")) {
                const auto vals = row.get<std::vector<double>>();
                cov.row(i++) = Eigen::Map<const Eigen::RowVectorXd>(vals.data(), m);
            }
            proc.innovation_cov = cov;
        } else {
            proc.innovation_cov = Eigen::MatrixXd::Identity(m, m);
        }
        proc.seed = j.value("seed", 0ULL);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid process definition in " + path.string() + ": " + e.what());
    }
    return proc;
}

}  // namespace flap
