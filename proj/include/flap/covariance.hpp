#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "flap/errors.hpp"
#include "flap/io.hpp"

namespace flap {

/// h-step-ahead in-sample forecast errors, one row per target time point,
/// one column per series of the augmented vector.
struct ResidualMatrix {
    Eigen::MatrixXd residuals;  // n x d
    int horizon = 1;

    Eigen::Index n() const { return residuals.rows(); }
    Eigen::Index dim() const { return residuals.cols(); }
};

inline ResidualMatrix make_residual_matrix(Eigen::MatrixXd residuals, int horizon) {
    if (!residuals.allFinite())
        throw NumericalError("residual matrix has non-finite entries");
    if (residuals.rows() < 2)
        throw InsufficientDataError("residual matrix needs at least 2 rows");
    return ResidualMatrix{std::move(residuals), horizon};
}

enum class CovKind { Empirical, Shrunk, Identity, Known, ProportionalToH1 };

inline std::string cov_kind_name(CovKind k) {
    switch (k) {
        case CovKind::Empirical: return "empirical";
        case CovKind::Shrunk: return "shrunk";
        case CovKind::Identity: return "identity";
        case CovKind::Known: return "known";
        case CovKind::ProportionalToH1: return "proportional_to_h1";
    }
    return "known";
}

struct ShrinkageLambdas {
    double lambda_cor = 0.0;
    double lambda_var = 0.0;
};

/// Forecast-error covariance of the augmented vector at one horizon.
struct CovarianceEstimate {
    Eigen::MatrixXd w;  // d x d symmetric
    CovKind kind = CovKind::Known;
    int horizon = 1;
    std::optional<ShrinkageLambdas> lambdas;
    std::vector<std::string> warnings;

    Eigen::Index dim() const { return w.rows(); }
};

inline CovarianceEstimate identity_cov(Eigen::Index d, int horizon = 1) {
    return CovarianceEstimate{Eigen::MatrixXd::Identity(d, d), CovKind::Identity, horizon, {}, {}};
}

inline CovarianceEstimate known_cov(Eigen::MatrixXd w, int horizon = 1) {
    if (w.rows() != w.cols()) throw DimensionError("known_cov: matrix must be square");
    return CovarianceEstimate{std::move(w), CovKind::Known, horizon, {}, {}};
}

/// Sample covariance of the residuals with divisor n-1. Residuals are
/// mean-centered first unless center=false. May be singular when d >= n.
inline CovarianceEstimate empirical_cov(const ResidualMatrix& r, bool center = true) {
    if (r.n() < 2) throw InsufficientDataError("empirical_cov needs at least 2 residual rows");
    Eigen::MatrixXd x = r.residuals;
    if (center) x.rowwise() -= x.colwise().mean();
    CovarianceEstimate out;
    out.w = x.transpose() * x / static_cast<double>(r.n() - 1);
    out.w = ((out.w + out.w.transpose()) / 2.0).eval();
    out.kind = CovKind::Empirical;
    out.horizon = r.horizon;
    return out;
}

namespace detail {

inline double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    std::sort(v.begin(), v.end());
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct ShrinkInputs {
    Eigen::MatrixXd centered;      // n x d
    Eigen::VectorXd variances;     // d, divisor n-1
    Eigen::MatrixXd correlations;  // d x d, zero where a variance is zero
};

inline ShrinkInputs shrink_inputs(const ResidualMatrix& r, bool center) {
    ShrinkInputs in;
    in.centered = r.residuals;
    if (center) in.centered.rowwise() -= in.centered.colwise().mean();
    const double n1 = static_cast<double>(r.n() - 1);
    in.variances = in.centered.colwise().squaredNorm().transpose() / n1;
    const Eigen::Index d = r.dim();
    in.correlations = Eigen::MatrixXd::Identity(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i + 1; j < d; ++j) {
            const double denom = std::sqrt(in.variances[i] * in.variances[j]);
            const double c = denom > 0.0
                                 ? in.centered.col(i).dot(in.centered.col(j)) / n1 / denom
                                 : 0.0;
            in.correlations(i, j) = c;
            in.correlations(j, i) = c;
        }
    }
    return in;
}

}  // namespace detail

/// Assembles the shrunk covariance from given intensities:
/// correlations scaled by (1 - lambda_cor) off the diagonal, variances
/// pulled toward their median with weight lambda_var.
inline CovarianceEstimate shrink_cov_with(const ResidualMatrix& r, double lambda_cor,
                                          double lambda_var, bool center = true) {
    if (lambda_cor < 0.0 || lambda_cor > 1.0 || lambda_var < 0.0 || lambda_var > 1.0)
        throw ConfigError("shrinkage intensities must lie in [0, 1]");
    const auto in = detail::shrink_inputs(r, center);
    const Eigen::Index d = r.dim();
    std::vector<double> diag(in.variances.data(), in.variances.data() + d);
    const double w_median = detail::median_of(diag);

    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i)
        v[i] = lambda_var * w_median + (1.0 - lambda_var) * in.variances[i];

    CovarianceEstimate out;
    out.w.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        out.w(i, i) = v[i];
        for (Eigen::Index j = i + 1; j < d; ++j) {
            const double rs = (1.0 - lambda_cor) * in.correlations(i, j);
            const double wij = rs * std::sqrt(v[i] * v[j]);
            out.w(i, j) = wij;
            out.w(j, i) = wij;
        }
    }
    out.kind = CovKind::Shrunk;
    out.horizon = r.horizon;
    out.lambdas = ShrinkageLambdas{lambda_cor, lambda_var};
    return out;
}

/// Covariance shrinkage with data-driven intensities.
///
/// With standardized residuals x_ki and products w_kij = x_ki x_kj,
///   var(r_ij) = n/(n-1)^3 * sum_k (w_kij - mean_k w_kij)^2
///   lambda_cor = min(1, sum_{i!=j} var(r_ij) / sum_{i!=j} r_ij^2)
/// and with centered squares v_ki = e_ki^2,
///   var(w_i) = n/(n-1)^3 * sum_k (v_ki - mean_k v_ki)^2
///   lambda_var = min(1, sum_i var(w_i) / sum_i (w_i - w_median)^2).
/// A zero denominator means the target is already attained; the intensity
/// is set to 1 with a warning. The result is positive definite.
inline CovarianceEstimate shrink_cov(const ResidualMatrix& r, bool center = true) {
    const Eigen::Index n = r.n();
    const Eigen::Index d = r.dim();
    if (n < 3) throw InsufficientDataError("shrink_cov needs at least 3 residual rows");
    const auto in = detail::shrink_inputs(r, center);
    if ((in.variances.array() <= 0.0).all())
        throw DegenerateResidualsError("shrink_cov: all residual columns are constant");

    const double nn = static_cast<double>(n);
    const double var_scale = nn / std::pow(nn - 1.0, 3);

    // lambda_cor from standardized products.
    Eigen::MatrixXd x = in.centered;
    for (Eigen::Index j = 0; j < d; ++j) {
        const double sd = std::sqrt(in.variances[j]);
        if (sd > 0.0)
            x.col(j) /= sd;
        else
            x.col(j).setZero();
    }
    double var_sum_cor = 0.0;
    double r2_sum = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i + 1; j < d; ++j) {
            const Eigen::ArrayXd w_kij = x.col(i).array() * x.col(j).array();
            const double wbar = w_kij.mean();
            var_sum_cor += var_scale * (w_kij - wbar).square().sum();
            r2_sum += in.correlations(i, j) * in.correlations(i, j);
        }
    }
    var_sum_cor *= 2.0;  // sums over ordered pairs i != j
    r2_sum *= 2.0;

    std::vector<std::string> warnings;
    double lambda_cor;
    if (r2_sum <= 0.0) {
        lambda_cor = 1.0;
        warnings.push_back("lambda_cor denominator is zero; using full shrinkage");
    } else {
        lambda_cor = std::min(1.0, var_sum_cor / r2_sum);
    }

    // lambda_var from centered squared residuals.
    std::vector<double> diag(in.variances.data(), in.variances.data() + d);
    const double w_median = detail::median_of(diag);
    double var_sum_var = 0.0;
    double dev_sum = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        const Eigen::ArrayXd v_ki = in.centered.col(i).array().square();
        const double vbar = v_ki.mean();
        var_sum_var += var_scale * (v_ki - vbar).square().sum();
        dev_sum += (in.variances[i] - w_median) * (in.variances[i] - w_median);
    }
    double lambda_var;
    if (dev_sum <= 0.0) {
        lambda_var = 1.0;
        warnings.push_back("lambda_var denominator is zero; using full shrinkage");
    } else {
        lambda_var = std::min(1.0, var_sum_var / dev_sum);
    }

    CovarianceEstimate out = shrink_cov_with(r, lambda_cor, lambda_var, center);
    out.warnings = std::move(warnings);

    Eigen::LLT<Eigen::MatrixXd> llt(out.w);
    if (llt.info() != Eigen::Success)
        throw NumericalError("shrink_cov: shrunk covariance is not positive definite");
    return out;
}

/// Retags a 1-step covariance for use at horizon h under the assumption
/// W_h = eta_h * W_1. The matrix is unchanged: the proportionality constant
/// cancels in the projection, so point forecasts are unaffected.
inline CovarianceEstimate proportional_w(const CovarianceEstimate& base, int horizon) {
    if (base.horizon != 1)
        throw ConfigError("proportional_w expects a horizon-1 covariance estimate");
    if (horizon == 1) return base;
    CovarianceEstimate out = base;
    out.kind = CovKind::ProportionalToH1;
    out.horizon = horizon;
    return out;
}

/// CSV matrix plus a JSON sidecar with kind, horizon and shrinkage lambdas.
inline void save_covariance(const std::filesystem::path& csv_path, const CovarianceEstimate& est) {
    write_matrix_csv(csv_path, est.w);
    std::ofstream side(csv_path.string() + ".json");
    side << "{\n  \"kind\": \"" << cov_kind_name(est.kind) << "\",\n  \"horizon\": " << est.horizon;
    if (est.lambdas) {
        side << ",\n  \"lambda_cor\": " << format_double(est.lambdas->lambda_cor)
             << ",\n  \"lambda_var\": " << format_double(est.lambdas->lambda_var);
    }
    side << "\n}\n";
}

}  // namespace flap
