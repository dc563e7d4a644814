#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "flap/errors.hpp"
#include "flap/io.hpp"
#include "flap/panel.hpp"
#include "flap/rng.hpp"

namespace flap {

enum class WeightScheme {
    PCA,
    RandomNormal,
    RandomUniform,
    RandomOrthonormal,
    PCAPlusNormal,
    PCAPlusUniform,
    OrthonormalPlusNormal,
    Custom,
};

inline std::string scheme_name(WeightScheme s) {
    switch (s) {
        case WeightScheme::PCA: return "PCA";
        case WeightScheme::RandomNormal: return "Norm";
        case WeightScheme::RandomUniform: return "Unif";
        case WeightScheme::RandomOrthonormal: return "Ortho";
        case WeightScheme::PCAPlusNormal: return "PCA+Norm";
        case WeightScheme::PCAPlusUniform: return "PCA+Unif";
        case WeightScheme::OrthonormalPlusNormal: return "Ortho+Norm";
        case WeightScheme::Custom: return "Custom";
    }
    return "Custom";
}

/// Component weights: rows are components, columns the original series.
/// When a PCA block is present, components are formed from the transformed
/// data (y - centering) / scaling; purely random schemes carry the identity
/// transform and combine freely with any other weights.
struct WeightMatrix {
    Eigen::MatrixXd weights;  // p x m
    WeightScheme scheme = WeightScheme::Custom;
    std::optional<std::uint64_t> seed;
    Eigen::VectorXd centering;  // m
    Eigen::VectorXd scaling;    // m, 1.0 when unscaled
    bool has_transform = false;

    Eigen::Index p() const { return weights.rows(); }
    Eigen::Index m() const { return weights.cols(); }
};

namespace detail {

inline void check_finite_weights(const Eigen::MatrixXd& w) {
    if (!w.allFinite()) throw NumericalError("weight matrix has non-finite entries");
}

/// Deterministic eigenvector sign: the entry of largest magnitude (first on
/// ties) is made positive.
inline void fix_row_sign(Eigen::MatrixXd& w, Eigen::Index row) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
        const double a = std::abs(w(row, j));
        if (a > best_abs) {
            best_abs = a;
            best = j;
        }
    }
    if (w(row, best) < 0.0) w.row(row) = -w.row(row);
}

inline WeightMatrix identity_transform(Eigen::MatrixXd w, WeightScheme scheme,
                                       std::optional<std::uint64_t> seed) {
    WeightMatrix out;
    out.centering = Eigen::VectorXd::Zero(w.cols());
    out.scaling = Eigen::VectorXd::Ones(w.cols());
    out.weights = std::move(w);
    out.scheme = scheme;
    out.seed = seed;
    out.has_transform = false;
    return out;
}

}  // namespace detail

/// Top-p principal-component loadings of the panel's sample covariance,
/// ordered by descending eigenvalue. With standardize=true the covariance is
/// computed on variance-1 columns (the correlation matrix).
inline WeightMatrix pca_weights(const Panel& panel, Eigen::Index p, bool standardize = false) {
    const Eigen::Index m = panel.cols();
    const Eigen::Index T = panel.rows();
    if (p > m)
        throw DimensionError("pca_weights: p=" + std::to_string(p) + " exceeds m=" + std::to_string(m));
    if (T < 2) throw InsufficientDataError("pca_weights needs at least 2 rows");
    if (!panel.values.allFinite()) throw NumericalError("pca_weights: panel has non-finite values");

    Eigen::VectorXd center(m), scale(m);
    Eigen::MatrixXd x = panel.values;
    for (Eigen::Index j = 0; j < m; ++j) {
        center[j] = x.col(j).mean();
        x.col(j).array() -= center[j];
        if (standardize) {
            const double sd = std::sqrt(x.col(j).squaredNorm() / static_cast<double>(T - 1));
            if (sd <= 0.0)
                throw DegenerateSeriesError("pca_weights: series '" + panel.series_names[j] +
                                            "' has zero variance with standardize=true");
            x.col(j) /= sd;
            scale[j] = sd;
        } else {
            scale[j] = 1.0;
        }
    }
    const Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(T - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw NumericalError("pca_weights: eigendecomposition failed");

    // Eigen returns ascending eigenvalues; take the trailing p columns in
    // reverse so rows come out in descending eigenvalue order.
    Eigen::MatrixXd w(p, m);
    for (Eigen::Index i = 0; i < p; ++i) {
        w.row(i) = es.eigenvectors().col(m - 1 - i).transpose();
        detail::fix_row_sign(w, i);
    }
    detail::check_finite_weights(w);

    WeightMatrix out;
    out.weights = std::move(w);
    out.scheme = WeightScheme::PCA;
    out.centering = std::move(center);
    out.scaling = std::move(scale);
    out.has_transform = true;
    return out;
}

enum class RandomDist { Normal, Uniform };

/// p random rows of length m, normalized to unit Euclidean norm.
/// Row-by-row generation makes the first q rows of (m, p) identical to
/// (m, q) under the same seed, so p-sweeps nest.
inline WeightMatrix random_weights(Eigen::Index m, Eigen::Index p, RandomDist dist,
                                   std::uint64_t seed) {
    if (m < 1 || p < 1) throw DimensionError("random_weights: m and p must be positive");
    Rng rng(seed);
    Eigen::MatrixXd w(p, m);
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = 0; j < m; ++j)
            w(i, j) = dist == RandomDist::Normal ? rng.normal() : rng.uniform(-1.0, 1.0);
        const double norm = w.row(i).norm();
        if (norm <= 0.0) {
            w(i, 0) = 1.0;  // astronomically unlikely all-zero draw
        } else {
            w.row(i) /= norm;
        }
    }
    detail::check_finite_weights(w);
    return detail::identity_transform(std::move(w),
                                      dist == RandomDist::Normal ? WeightScheme::RandomNormal
                                                                 : WeightScheme::RandomUniform,
                                      seed);
}

/// p <= m rows of a Haar-distributed orthonormal matrix: QR of a Gaussian
/// matrix with the R diagonal sign-corrected. Column-by-column generation
/// keeps (m, q) a prefix of (m, p) under the same seed.
inline WeightMatrix orthonormal_weights(Eigen::Index m, Eigen::Index p, std::uint64_t seed) {
    if (p > m)
        throw DimensionError("orthonormal_weights: p=" + std::to_string(p) +
                             " exceeds m=" + std::to_string(m));
    if (m < 1 || p < 1) throw DimensionError("orthonormal_weights: m and p must be positive");
    Rng rng(seed);
    Eigen::MatrixXd a(m, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < m; ++i) a(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, p);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < p; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    detail::check_finite_weights(q.transpose());
    return detail::identity_transform(q.transpose(), WeightScheme::RandomOrthonormal, seed);
}

/// Row-stacks two weight matrices over the same series.
inline WeightMatrix concat_weights(const WeightMatrix& first, const WeightMatrix& second) {
    if (first.m() != second.m())
        throw DimensionError("concat_weights: column counts differ (" + std::to_string(first.m()) +
                             " vs " + std::to_string(second.m()) + ")");
    if (first.has_transform && second.has_transform) {
        const double dc = (first.centering - second.centering).lpNorm<Eigen::Infinity>();
        const double ds = (first.scaling - second.scaling).lpNorm<Eigen::Infinity>();
        if (dc > 1e-12 || ds > 1e-12)
            throw IncompatibleTransformError("concat_weights: conflicting centering/scaling");
    }
    WeightMatrix out;
    out.weights.resize(first.p() + second.p(), first.m());
    out.weights.topRows(first.p()) = first.weights;
    out.weights.bottomRows(second.p()) = second.weights;
    if (first.has_transform) {
        out.centering = first.centering;
        out.scaling = first.scaling;
    } else {
        out.centering = second.centering;
        out.scaling = second.scaling;
    }
    out.has_transform = first.has_transform || second.has_transform;
    out.seed = first.seed ? first.seed : second.seed;

    const auto pair = std::make_pair(first.scheme, second.scheme);
    if (pair == std::make_pair(WeightScheme::PCA, WeightScheme::RandomNormal))
        out.scheme = WeightScheme::PCAPlusNormal;
    else if (pair == std::make_pair(WeightScheme::PCA, WeightScheme::RandomUniform))
        out.scheme = WeightScheme::PCAPlusUniform;
    else if (pair == std::make_pair(WeightScheme::RandomOrthonormal, WeightScheme::RandomNormal))
        out.scheme = WeightScheme::OrthonormalPlusNormal;
    else
        out.scheme = WeightScheme::Custom;
    return out;
}

/// c_t = W (y_t - centering) / scaling, as a T x p panel named C1..Cp.
inline Panel form_components(const Panel& panel, const WeightMatrix& w) {
    if (panel.cols() != w.m())
        throw DimensionError("form_components: panel has " + std::to_string(panel.cols()) +
                             " series, weights expect " + std::to_string(w.m()));
    Eigen::MatrixXd x = panel.values;
    if (w.has_transform) {
        x.rowwise() -= w.centering.transpose();
        x.array().rowwise() /= w.scaling.transpose().array();
    }
    Eigen::MatrixXd c = x * w.weights.transpose();
    std::vector<std::string> names;
    for (Eigen::Index i = 0; i < w.p(); ++i) names.push_back("C" + std::to_string(i + 1));
    return make_panel(std::move(c), std::move(names), panel.time_index);
}

/// Applies the weight matrix to a single observation vector.
inline Eigen::VectorXd apply_weights(const WeightMatrix& w, const Eigen::VectorXd& y) {
    if (y.size() != w.m()) throw DimensionError("apply_weights: dimension mismatch");
    if (!w.has_transform) return w.weights * y;
    return w.weights * ((y - w.centering).array() / w.scaling.array()).matrix();
}

/// CSV (header = series names) plus a JSON sidecar with scheme and transform.
inline void save_weights(const std::filesystem::path& csv_path, const WeightMatrix& w,
                         const std::vector<std::string>& series_names) {
    if (static_cast<Eigen::Index>(series_names.size()) != w.m())
        throw DimensionError("save_weights: series name count mismatch");
    std::ofstream out(csv_path);
    if (!out) throw Error("cannot write file: " + csv_path.string());
    for (std::size_t j = 0; j < series_names.size(); ++j)
        out << (j ? "," : "") << series_names[j];
    out << '\n';
    for (Eigen::Index i = 0; i < w.p(); ++i) {
        for (Eigen::Index j = 0; j < w.m(); ++j)
            out << (j ? "," : "") << format_double(w.weights(i, j));
        out << '\n';
    }
    std::ofstream side(csv_path.string() + ".json");
    side << "{\n  \"scheme\": \"" << scheme_name(w.scheme) << "\",\n  \"seed\": ";
    if (w.seed)
        side << *w.seed;
    else
        side << "null";
    side << ",\n  \"centering\": [";
    for (Eigen::Index j = 0; j < w.m(); ++j) side << (j ? "," : "") << format_double(w.centering[j]);
    side << "],\n  \"scaling\": [";
    for (Eigen::Index j = 0; j < w.m(); ++j) side << (j ? "," : "") << format_double(w.scaling[j]);
    side << "]\n}\n";
}

}  // namespace flap
