#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "flap/covariance.hpp"
#include "flap/errors.hpp"
#include "flap/panel.hpp"
#include "flap/parallel.hpp"
#include "flap/weights.hpp"

namespace flap {

enum class Family { Mean, Naive, SeasonalNaive, AR, VAR, DFM };

inline std::string family_name(Family f) {
    switch (f) {
        case Family::Mean: return "Mean";
        case Family::Naive: return "Naive";
        case Family::SeasonalNaive: return "SNaive";
        case Family::AR: return "AR";
        case Family::VAR: return "VAR";
        case Family::DFM: return "DFM";
    }
    return "AR";
}

enum class InfoCriterion { BIC, AICc };

struct UnivariateSpec {
    Family family = Family::AR;
    int max_order = 8;    // AR: information-criterion search over 0..max_order
    int fixed_order = -1; // AR: >= 0 pins the order and skips the search
    bool with_intercept = true;
    int period = 1;  // SeasonalNaive
    InfoCriterion ic = InfoCriterion::BIC;
};

struct DfmSpec {
    int kmax = 6;  // factors
    int nmax = 3;  // factor lags
    int smin = 1;  // target lags; smin = 0 allows factor-only models
    int smax = 3;
};

struct OrderIc {
    int order = 0;
    double ic_value = 0.0;
    double rss = 0.0;
};

struct DfmGridPoint {
    int k = 0, n = 0, s = 0;
    double rss = 0.0;
    int n_eff = 0;
    int k_params = 0;
    double bic = 0.0;
    bool rank_deficient = false;
};

/// State of a DFM direct-forecast regression for one target series at one
/// horizon: y_{t+h} on an intercept, lagged factor scores and lagged target
/// values.
struct DfmState {
    int k = 0, n = 0, s = 0;
    int horizon = 1;
    int target = 0;
    Eigen::VectorXd coef;     // [alpha, beta_{11..k1}, ..., beta_{1n..kn}, gamma_1..s]
    Eigen::MatrixXd factors;  // T x kmax scores of the training panel
    std::vector<DfmGridPoint> grid;
};

/// A fitted base forecaster. One flat struct covering every family keeps
/// call sites free of virtual dispatch; unused members stay empty.
struct FittedForecaster {
    Family family = Family::Mean;
    bool with_intercept = true;
    int order = 0;
    int period = 1;
    int training_length = 0;
    int series_count = 1;
    bool fallback = false;  // collinearity or ridge fallback during fitting
    double companion_radius = 0.0;
    bool radius_flagged = false;

    Eigen::VectorXd coef;    // AR: [intercept?, phi_1..order]; Mean: [mean]
    Eigen::VectorXd series;  // univariate training data

    std::vector<Eigen::MatrixXd> var_coef;  // A_1..A_order
    Eigen::VectorXd var_intercept;
    Eigen::MatrixXd train_panel;

    DfmState dfm;

    std::vector<OrderIc> selection;
};

namespace detail {

inline double ols_rss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Eigen::VectorXd* beta,
                      bool* deficient) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (deficient) *deficient = qr.rank() < x.cols();
    Eigen::VectorXd b = qr.solve(y);
    if (beta) *beta = b;
    return (y - x * b).squaredNorm();
}

inline double aicc(double rss, int n, int k_params) {
    // k_params counts regression coefficients; +1 for the error variance.
    const int k = k_params + 1;
    if (n - k - 1 <= 0) return std::numeric_limits<double>::infinity();
    const double s2 = std::max(rss / n, 1e-300);
    return n * std::log(s2) + 2.0 * k + 2.0 * k * (k + 1.0) / (n - k - 1.0);
}

inline double bic(double rss, int n, int k_params) {
    const double s2 = std::max(rss / n, 1e-300);
    return n * std::log(s2) + k_params * std::log(static_cast<double>(n));
}

inline Eigen::MatrixXd ar_design(const Eigen::VectorXd& y, int first_target, int order,
                                 bool intercept) {
    const int n = static_cast<int>(y.size()) - first_target;
    Eigen::MatrixXd x(n, order + (intercept ? 1 : 0));
    for (int r = 0; r < n; ++r) {
        int col = 0;
        if (intercept) x(r, col++) = 1.0;
        for (int j = 1; j <= order; ++j) x(r, col++) = y[first_target + r - j];
    }
    return x;
}

inline double ar_companion_radius(const Eigen::VectorXd& phi) {
    const int q = static_cast<int>(phi.size());
    if (q == 0) return 0.0;
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(q, q);
    comp.row(0) = phi.transpose();
    if (q > 1) comp.block(1, 0, q - 1, q - 1).setIdentity();
    return comp.eigenvalues().cwiseAbs().maxCoeff();
}

/// Iterates an AR recursion h steps past the end of `history`.
inline double ar_iterate(const Eigen::VectorXd& coef, bool intercept, int order,
                         const Eigen::VectorXd& history, int h) {
    const double c = intercept ? coef[0] : 0.0;
    const int base = intercept ? 1 : 0;
    std::vector<double> buf(order);
    const int hist_len = static_cast<int>(history.size());
    for (int j = 0; j < order; ++j) buf[j] = history[hist_len - 1 - j];  // buf[0] most recent
    double value = hist_len > 0 ? history[hist_len - 1] : c;
    for (int step = 0; step < h; ++step) {
        value = c;
        for (int j = 0; j < order; ++j) value += coef[base + j] * buf[j];
        for (int j = order - 1; j > 0; --j) buf[j] = buf[j - 1];
        if (order > 0) buf[0] = value;
    }
    return value;
}

}  // namespace detail

/// Fits a univariate forecaster. AR order is chosen by corrected AIC over
/// 0..max_order on a common effective sample, then the winner is refitted
/// on its maximal sample. Mean and Naive only record state.
inline FittedForecaster fit_univariate(const Eigen::VectorXd& series, const UnivariateSpec& spec) {
    const int T = static_cast<int>(series.size());
    FittedForecaster f;
    f.family = spec.family;
    f.with_intercept = spec.with_intercept;
    f.period = spec.period;
    f.training_length = T;
    f.series = series;

    switch (spec.family) {
        case Family::Mean: {
            if (T < 1) throw InsufficientDataError("fit_univariate: empty series");
            f.coef = Eigen::VectorXd::Constant(1, series.mean());
            return f;
        }
        case Family::Naive: {
            if (T < 1) throw InsufficientDataError("fit_univariate: empty series");
            return f;
        }
        case Family::SeasonalNaive: {
            if (spec.period < 1) throw ConfigError("seasonal naive needs period >= 1");
            if (T < spec.period)
                throw InsufficientDataError("fit_univariate: series shorter than period");
            return f;
        }
        case Family::AR: break;
        default:
            throw ConfigError("fit_univariate handles Mean/Naive/SNaive/AR only");
    }

    const int max_order = spec.fixed_order >= 0 ? spec.fixed_order : spec.max_order;
    if (T < max_order + 10)
        throw InsufficientDataError("fit_univariate: need T >= max_order + 10, got T=" +
                                    std::to_string(T));

    int chosen = spec.fixed_order;
    if (spec.fixed_order < 0) {
        // Common effective sample across candidate orders.
        const int first_target = spec.max_order;
        const int n = T - first_target;
        double best = std::numeric_limits<double>::infinity();
        for (int q = 0; q <= spec.max_order; ++q) {
            Eigen::MatrixXd x = detail::ar_design(series, first_target, q, spec.with_intercept);
            if (x.cols() == 0) x = Eigen::MatrixXd::Zero(n, 0);
            double rss;
            bool deficient = false;
            if (x.cols() == 0) {
                rss = series.tail(n).squaredNorm();
            } else {
                rss = detail::ols_rss(x, series.tail(n), nullptr, &deficient);
            }
            if (deficient) continue;  // collinear lag matrix; smaller orders stay available
            const double ic = spec.ic == InfoCriterion::AICc
                                  ? detail::aicc(rss, n, static_cast<int>(x.cols()))
                                  : detail::bic(rss, n, static_cast<int>(x.cols()) + 1);
            f.selection.push_back({q, ic, rss});
            if (ic < best) {
                best = ic;
                chosen = q;
            }
        }
        if (chosen < 0) {
            chosen = 0;
            f.fallback = true;
        }
        if (static_cast<int>(f.selection.size()) != spec.max_order + 1) f.fallback = true;
    }

    // Refit the chosen order on its maximal sample.
    f.order = chosen;
    const int cols = chosen + (spec.with_intercept ? 1 : 0);
    if (cols == 0) {
        f.coef = Eigen::VectorXd::Zero(0);
    } else {
        Eigen::MatrixXd x = detail::ar_design(series, chosen, chosen, spec.with_intercept);
        bool deficient = false;
        detail::ols_rss(x, series.tail(T - chosen), &f.coef, &deficient);
        while (deficient && f.order > 0) {
            f.fallback = true;
            --f.order;
            x = detail::ar_design(series, f.order, f.order, spec.with_intercept);
            detail::ols_rss(x, series.tail(T - f.order), &f.coef, &deficient);
        }
    }
    const int base = spec.with_intercept ? 1 : 0;
    f.companion_radius =
        detail::ar_companion_radius(f.order > 0 ? f.coef.segment(base, f.order) : Eigen::VectorXd());
    f.radius_flagged = f.companion_radius >= 1.0;
    return f;
}

/// Equation-by-equation least squares VAR(order); a ridge of 1e-8 * trace
/// is added to the regressor cross-product if it is singular.
inline FittedForecaster fit_var(const Panel& panel, int order, bool with_intercept = true) {
    const int T = static_cast<int>(panel.rows());
    const int m = static_cast<int>(panel.cols());
    if (order < 0) throw ConfigError("fit_var: negative order");
    if (T < m * order + 10)
        throw InsufficientDataError("fit_var: need T >= m*order + 10, got T=" + std::to_string(T));

    FittedForecaster f;
    f.family = Family::VAR;
    f.with_intercept = with_intercept;
    f.order = order;
    f.training_length = T;
    f.series_count = m;
    f.train_panel = panel.values;

    const int n = T - order;
    const int cols = (with_intercept ? 1 : 0) + m * order;
    Eigen::MatrixXd x(n, std::max(cols, 1));
    Eigen::MatrixXd y(n, m);
    for (int r = 0; r < n; ++r) {
        const int t = order + r;
        int col = 0;
        if (with_intercept) x(r, col++) = 1.0;
        for (int lag = 1; lag <= order; ++lag)
            for (int j = 0; j < m; ++j) x(r, col++) = panel.values(t - lag, j);
        y.row(r) = panel.values.row(t);
    }
    Eigen::MatrixXd beta;  // cols x m
    if (cols == 0) {
        beta = Eigen::MatrixXd::Zero(0, m);
    } else {
        const Eigen::MatrixXd gram = x.leftCols(cols).transpose() * x.leftCols(cols);
        Eigen::LLT<Eigen::MatrixXd> llt(gram);
        if (llt.info() == Eigen::Success) {
            beta = llt.solve(x.leftCols(cols).transpose() * y);
        } else {
            f.fallback = true;
            const Eigen::MatrixXd ridged =
                gram + 1e-8 * gram.trace() * Eigen::MatrixXd::Identity(cols, cols);
            beta = Eigen::LLT<Eigen::MatrixXd>(ridged).solve(x.leftCols(cols).transpose() * y);
        }
    }

    f.var_intercept = with_intercept && cols > 0 ? Eigen::VectorXd(beta.row(0).transpose())
                                                 : Eigen::VectorXd::Zero(m);
    const int base = with_intercept ? 1 : 0;
    for (int lag = 0; lag < order; ++lag)
        f.var_coef.push_back(beta.middleRows(base + lag * m, m).transpose());

    if (order > 0) {
        Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(m * order, m * order);
        for (int lag = 0; lag < order; ++lag)
            comp.block(0, lag * m, m, m) = f.var_coef[static_cast<std::size_t>(lag)];
        if (order > 1) comp.block(m, 0, m * (order - 1), m * (order - 1)).setIdentity();
        f.companion_radius = comp.eigenvalues().cwiseAbs().maxCoeff();
    }
    f.radius_flagged = f.companion_radius >= 1.0;
    return f;
}

namespace detail {

/// Iterates a fitted VAR h steps beyond row `origin` (inclusive history).
inline Eigen::VectorXd var_iterate(const FittedForecaster& f, const Eigen::MatrixXd& panel,
                                   int origin, int h) {
    const int m = f.series_count;
    const int q = f.order;
    std::vector<Eigen::VectorXd> buf(static_cast<std::size_t>(std::max(q, 1)));
    for (int j = 0; j < q; ++j) buf[static_cast<std::size_t>(j)] = panel.row(origin - j).transpose();
    Eigen::VectorXd value = q > 0 ? buf[0] : f.var_intercept;
    for (int step = 0; step < h; ++step) {
        value = f.var_intercept;
        for (int j = 0; j < q; ++j) value += f.var_coef[static_cast<std::size_t>(j)] * buf[static_cast<std::size_t>(j)];
        for (int j = q - 1; j > 0; --j) buf[static_cast<std::size_t>(j)] = buf[static_cast<std::size_t>(j - 1)];
        if (q > 0) buf[0] = value;
    }
    return value;
}

/// Factor scores: PCA on the demeaned, variance-scaled panel.
inline Eigen::MatrixXd dfm_factors(const Eigen::MatrixXd& values, int kmax) {
    const Eigen::Index T = values.rows();
    const Eigen::Index m = values.cols();
    if (kmax == 0) return Eigen::MatrixXd(T, 0);
    Eigen::MatrixXd x = values;
    for (Eigen::Index j = 0; j < m; ++j) {
        const double mean = x.col(j).mean();
        x.col(j).array() -= mean;
        const double sd = std::sqrt(x.col(j).squaredNorm() / static_cast<double>(T - 1));
        if (sd <= 0.0)
            throw DegenerateSeriesError("dfm factors: column " + std::to_string(j) +
                                        " has zero variance");
        x.col(j) /= sd;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x.transpose() * x /
                                                      static_cast<double>(T - 1));
    Eigen::MatrixXd loadings(m, kmax);
    for (int i = 0; i < kmax; ++i) loadings.col(i) = es.eigenvectors().col(m - 1 - i);
    return x * loadings;
}

inline Eigen::RowVectorXd dfm_regressors(const Eigen::MatrixXd& factors,
                                         const Eigen::VectorXd& target, int t, int k, int n,
                                         int s) {
    Eigen::RowVectorXd row(1 + k * n + s);
    int col = 0;
    row[col++] = 1.0;
    for (int j = 1; j <= n; ++j)
        for (int kk = 0; kk < k; ++kk) row[col++] = factors(t - j + 1, kk);
    for (int j = 1; j <= s; ++j) row[col++] = target[t - j + 1];
    return row;
}

inline DfmState fit_dfm_state(const Eigen::MatrixXd& factors, const Eigen::VectorXd& target,
                              int target_index, int h, const DfmSpec& spec) {
    const int T = static_cast<int>(target.size());
    if (spec.kmax < 0 || (spec.kmax > 0 && spec.nmax < 1) || spec.smin < 0 ||
        spec.smax < spec.smin)
        throw ConfigError("fit_dfm: empty or invalid meta-parameter grid");
    // kmax = 0 is the factor-free edge case: a direct regression on target
    // lags only.
    const int align_n = spec.kmax == 0 ? 0 : spec.nmax;
    const int t_min_common = std::max({align_n, spec.smax, 1}) - 1;
    const int n_eff = T - h - t_min_common;
    if (n_eff < 10) throw InsufficientDataError("fit_dfm: not enough rows for the grid");

    DfmState st;
    st.horizon = h;
    st.target = target_index;
    st.factors = factors;

    double best = std::numeric_limits<double>::infinity();
    bool selected = false;
    const int k_lo = spec.kmax == 0 ? 0 : 1;
    for (int k = k_lo; k <= spec.kmax; ++k) {
        const int n_lo = k == 0 ? 0 : 1;
        const int n_hi = k == 0 ? 0 : spec.nmax;
        for (int n = n_lo; n <= n_hi; ++n) {
            for (int s = spec.smin; s <= spec.smax; ++s) {
                const int cols = 1 + k * n + s;
                Eigen::MatrixXd x(n_eff, cols);
                Eigen::VectorXd y(n_eff);
                for (int r = 0; r < n_eff; ++r) {
                    const int t = t_min_common + r;
                    x.row(r) = dfm_regressors(factors, target, t, k, n, s);
                    y[r] = target[t + h];
                }
                DfmGridPoint gp;
                gp.k = k;
                gp.n = n;
                gp.s = s;
                gp.n_eff = n_eff;
                gp.k_params = cols;
                gp.rss = ols_rss(x, y, nullptr, &gp.rank_deficient);
                gp.bic = bic(gp.rss, n_eff, cols);
                st.grid.push_back(gp);
                if (!gp.rank_deficient && gp.bic < best) {
                    best = gp.bic;
                    st.k = k;
                    st.n = n;
                    st.s = s;
                    selected = true;
                }
            }
        }
    }
    if (!selected) {
        // Every candidate was rank-deficient; fall back to intercept-only.
        st.k = 0;
        st.n = 0;
        st.s = 0;
    }

    // Refit the winner on its maximal sample.
    const int t_min = std::max(st.n, std::max(st.s, 1)) - 1;
    const int rows = T - h - t_min;
    const int cols = 1 + st.k * st.n + st.s;
    Eigen::MatrixXd x(rows, cols);
    Eigen::VectorXd y(rows);
    for (int r = 0; r < rows; ++r) {
        const int t = t_min + r;
        x.row(r) = dfm_regressors(factors, target, t, st.k, st.n, st.s);
        y[r] = target[t + h];
    }
    bool deficient = false;
    ols_rss(x, y, &st.coef, &deficient);
    return st;
}

}  // namespace detail

/// Direct-forecast DFM for one target series at one horizon; (k, n, s) are
/// picked by BIC over the grid on a common effective sample.
inline FittedForecaster fit_dfm(const Panel& panel, int target, int h, const DfmSpec& spec) {
    const int T = static_cast<int>(panel.rows());
    if (T < 30) throw InsufficientDataError("fit_dfm: need T >= 30");
    if (target < 0 || target >= panel.cols()) throw DimensionError("fit_dfm: target out of range");
    const int kmax = std::min<int>(spec.kmax, static_cast<int>(panel.cols()));
    DfmSpec eff = spec;
    eff.kmax = kmax;
    const Eigen::MatrixXd factors = detail::dfm_factors(panel.values, kmax);
    FittedForecaster f;
    f.family = Family::DFM;
    f.training_length = T;
    f.series = panel.values.col(target);
    f.dfm = detail::fit_dfm_state(factors, f.series, target, h, eff);
    f.fallback = false;
    return f;
}

/// Rows a model cannot predict in-sample: the first valid h-step target is
/// index warmup(h) + h (0-based).
inline int forecaster_warmup(const FittedForecaster& f, int h) {
    switch (f.family) {
        case Family::Mean:
        case Family::Naive: return 0;
        case Family::SeasonalNaive: {
            const int k = (h + f.period - 1) / f.period;
            return f.period * k - h;
        }
        case Family::AR:
        case Family::VAR: return f.order;
        case Family::DFM: return std::max(f.dfm.n, std::max(f.dfm.s, 1));
    }
    return 0;
}

/// Point forecast h steps past the training sample.
inline double forecast_value(const FittedForecaster& f, int h) {
    if (h < 1) throw ConfigError("forecast horizon must be >= 1");
    const int T = f.training_length;
    switch (f.family) {
        case Family::Mean: return f.coef[0];
        case Family::Naive: return f.series[T - 1];
        case Family::SeasonalNaive: {
            const int k = (h - 1) / f.period + 1;
            return f.series[T + h - 1 - f.period * k];
        }
        case Family::AR:
            return detail::ar_iterate(f.coef, f.with_intercept, f.order, f.series, h);
        case Family::DFM: {
            if (h != f.dfm.horizon)
                throw ConfigError("DFM model was fitted for horizon " +
                                  std::to_string(f.dfm.horizon));
            const Eigen::RowVectorXd x =
                detail::dfm_regressors(f.dfm.factors, f.series, T - 1, f.dfm.k, f.dfm.n, f.dfm.s);
            return x.dot(f.dfm.coef);
        }
        case Family::VAR: throw ConfigError("use forecast_vector for VAR models");
    }
    return 0.0;
}

/// Joint point forecast of all series for a VAR model.
inline Eigen::VectorXd forecast_vector(const FittedForecaster& f, int h) {
    if (f.family != Family::VAR) throw ConfigError("forecast_vector expects a VAR model");
    return detail::var_iterate(f, f.train_panel, f.training_length - 1, h);
}

/// In-sample prediction of observation `t` (0-based) using information
/// through t - h only.
inline double insample_prediction(const FittedForecaster& f, int t, int h) {
    if (t - h < 0) throw DimensionError("insample_prediction: origin before sample start");
    switch (f.family) {
        case Family::Mean: return f.coef[0];  // fixed full-sample mean
        case Family::Naive: return f.series[t - h];
        case Family::SeasonalNaive: {
            const int k = (h + f.period - 1) / f.period;
            return f.series[t - f.period * k];
        }
        case Family::AR:
            return detail::ar_iterate(f.coef, f.with_intercept, f.order, f.series.head(t - h + 1),
                                      h);
        case Family::DFM: {
            if (h != f.dfm.horizon)
                throw ConfigError("DFM model was fitted for horizon " +
                                  std::to_string(f.dfm.horizon));
            const Eigen::RowVectorXd x =
                detail::dfm_regressors(f.dfm.factors, f.series, t - h, f.dfm.k, f.dfm.n, f.dfm.s);
            return x.dot(f.dfm.coef);
        }
        case Family::VAR: throw ConfigError("use insample_prediction_vector for VAR models");
    }
    return 0.0;
}

inline Eigen::VectorXd insample_prediction_vector(const FittedForecaster& f, int t, int h) {
    if (f.family != Family::VAR) throw ConfigError("insample_prediction_vector expects a VAR model");
    if (t - h < 0) throw DimensionError("insample_prediction: origin before sample start");
    return detail::var_iterate(f, f.train_panel, t - h, h);
}

/// In-sample h-step residuals z_t - z_{t|t-h} for one model over a panel.
/// VAR models cover the whole panel; univariate models require one column.
inline ResidualMatrix hstep_residuals(const FittedForecaster& f, const Panel& panel, int h) {
    const int T = static_cast<int>(panel.rows());
    const int warmup = forecaster_warmup(f, h);
    const int rows = T - h - warmup;
    if (rows < 2) throw InsufficientDataError("hstep_residuals: fewer than 2 residual rows");
    if (f.family == Family::VAR) {
        if (panel.cols() != f.series_count)
            throw DimensionError("hstep_residuals: panel width does not match VAR model");
        Eigen::MatrixXd e(rows, panel.cols());
        for (int r = 0; r < rows; ++r) {
            const int t = warmup + h + r;
            e.row(r) =
                panel.values.row(t) - insample_prediction_vector(f, t, h).transpose();
        }
        return make_residual_matrix(std::move(e), h);
    }
    if (panel.cols() != 1)
        throw DimensionError("hstep_residuals: univariate model needs a single-column panel");
    Eigen::MatrixXd e(rows, 1);
    for (int r = 0; r < rows; ++r) {
        const int t = warmup + h + r;
        e(r, 0) = panel.values(t, 0) - insample_prediction(f, t, h);
    }
    return make_residual_matrix(std::move(e), h);
}

/// Per-column residuals for a set of univariate models, aligned on the
/// largest warmup so rows share the same target times.
inline ResidualMatrix hstep_residuals(const std::vector<FittedForecaster>& models,
                                      const Panel& panel, int h) {
    if (static_cast<Eigen::Index>(models.size()) != panel.cols())
        throw DimensionError("hstep_residuals: one model per panel column required");
    const int T = static_cast<int>(panel.rows());
    int warmup = 0;
    for (const auto& f : models) warmup = std::max(warmup, forecaster_warmup(f, h));
    const int rows = T - h - warmup;
    if (rows < 2) throw InsufficientDataError("hstep_residuals: fewer than 2 residual rows");
    Eigen::MatrixXd e(rows, panel.cols());
    for (Eigen::Index j = 0; j < panel.cols(); ++j)
        for (int r = 0; r < rows; ++r) {
            const int t = warmup + h + r;
            e(r, j) = panel.values(t, j) - insample_prediction(models[static_cast<std::size_t>(j)], t, h);
        }
    return make_residual_matrix(std::move(e), h);
}

/// h-step-ahead point forecasts from one origin, one row per horizon.
struct ForecastMatrix {
    Eigen::MatrixXd values;  // H x n_series
    int origin = 0;          // training length T

    int horizons() const { return static_cast<int>(values.rows()); }
};

/// How the augmented panel is forecast: one spec for the original series,
/// one univariate spec for the components.
struct ForecasterSpec {
    UnivariateSpec original;
    UnivariateSpec component;  // Mean/Naive/SNaive/AR only
    DfmSpec dfm;               // used when original.family == DFM
    int var_order = 1;         // used when original.family == VAR
};

struct AugmentedForecastSet {
    ForecastMatrix zhat;                     // H x (m+p)
    std::map<int, ResidualMatrix> residuals; // per requested horizon
    std::vector<std::string> series_names;   // originals then C1..Cp
    std::vector<int> warmups;                // common warmup per horizon 1..H
};

/// Step 2 of the method: form components, forecast every series of the
/// augmented vector to horizons 1..H, and collect in-sample h-step
/// residuals for covariance estimation. Components are always forecast by
/// univariate models applied to the component series.
inline AugmentedForecastSet forecast_augmented(const Panel& panel_y, const WeightMatrix& w,
                                               const ForecasterSpec& spec, int H,
                                               const std::vector<int>& residual_horizons,
                                               int threads = 1) {
    if (panel_y.cols() != w.m())
        throw DimensionError("forecast_augmented: weights expect " + std::to_string(w.m()) +
                             " series");
    if (spec.component.family == Family::VAR || spec.component.family == Family::DFM)
        throw ConfigError("components are forecast by univariate models");
    const int T = static_cast<int>(panel_y.rows());
    const int m = static_cast<int>(panel_y.cols());
    const int p = static_cast<int>(w.p());

    Eigen::MatrixXd z(T, m + p);
    z.leftCols(m) = panel_y.values;
    std::vector<std::string> names = panel_y.series_names;
    if (p > 0) {
        const Panel comps = form_components(panel_y, w);
        z.rightCols(p) = comps.values;
        for (const auto& n : comps.series_names) names.push_back(n);
    }

    // Fit models. Originals may be multivariate; components are univariate.
    std::vector<FittedForecaster> uni(static_cast<std::size_t>(m + p));
    std::vector<std::vector<FittedForecaster>> dfm_per_h;  // [series][h-1]
    FittedForecaster var_model;
    const bool use_var = spec.original.family == Family::VAR;
    const bool use_dfm = spec.original.family == Family::DFM;

    Panel y_only = panel_y;
    if (use_var) {
        var_model = fit_var(y_only, spec.var_order, spec.original.with_intercept);
    } else if (use_dfm) {
        const int kmax = std::min<int>(spec.dfm.kmax, m);
        DfmSpec eff = spec.dfm;
        eff.kmax = kmax;
        const Eigen::MatrixXd factors = detail::dfm_factors(panel_y.values, kmax);
        dfm_per_h.resize(static_cast<std::size_t>(m));
        parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t j) {
            for (int h = 1; h <= H; ++h) {
                FittedForecaster f;
                f.family = Family::DFM;
                f.training_length = T;
                f.series = panel_y.values.col(static_cast<Eigen::Index>(j));
                f.dfm = detail::fit_dfm_state(factors, f.series, static_cast<int>(j), h, eff);
                dfm_per_h[j].push_back(std::move(f));
            }
        });
    } else {
        parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t j) {
            uni[j] = fit_univariate(panel_y.values.col(static_cast<Eigen::Index>(j)), spec.original);
        });
    }
    parallel_for(static_cast<std::size_t>(p), threads, [&](std::size_t i) {
        uni[static_cast<std::size_t>(m) + i] =
            fit_univariate(z.col(m + static_cast<Eigen::Index>(i)), spec.component);
    });

    AugmentedForecastSet out;
    out.series_names = names;
    out.zhat.origin = T;
    out.zhat.values.resize(H, m + p);
    for (int h = 1; h <= H; ++h) {
        if (use_var) {
            out.zhat.values.row(h - 1).head(m) = forecast_vector(var_model, h).transpose();
        } else if (use_dfm) {
            for (int j = 0; j < m; ++j)
                out.zhat.values(h - 1, j) =
                    forecast_value(dfm_per_h[static_cast<std::size_t>(j)][static_cast<std::size_t>(h - 1)], h);
        } else {
            for (int j = 0; j < m; ++j)
                out.zhat.values(h - 1, j) = forecast_value(uni[static_cast<std::size_t>(j)], h);
        }
        for (int i = 0; i < p; ++i)
            out.zhat.values(h - 1, m + i) =
                forecast_value(uni[static_cast<std::size_t>(m + i)], h);
    }
    if (!out.zhat.values.allFinite())
        throw NumericalError("forecast_augmented: non-finite base forecast");

    for (int h = 1; h <= H; ++h) out.warmups.push_back(0);
    for (int h : residual_horizons) {
        if (h < 1 || h > H) throw ConfigError("residual horizon outside 1..H");
        int warmup = 0;
        for (int j = 0; j < m; ++j) {
            if (use_var)
                warmup = std::max(warmup, forecaster_warmup(var_model, h));
            else if (use_dfm)
                warmup = std::max(warmup, forecaster_warmup(
                                              dfm_per_h[static_cast<std::size_t>(j)][static_cast<std::size_t>(h - 1)], h));
            else
                warmup = std::max(warmup, forecaster_warmup(uni[static_cast<std::size_t>(j)], h));
        }
        for (int i = 0; i < p; ++i)
            warmup = std::max(warmup, forecaster_warmup(uni[static_cast<std::size_t>(m + i)], h));
        const int rows = T - h - warmup;
        if (rows < 3)
            throw InsufficientDataError("forecast_augmented: too few residual rows at h=" +
                                        std::to_string(h));
        Eigen::MatrixXd e(rows, m + p);
        parallel_for(static_cast<std::size_t>(rows), threads, [&](std::size_t r) {
            const int t = warmup + h + static_cast<int>(r);
            if (use_var) {
                e.row(static_cast<Eigen::Index>(r)).head(m) =
                    z.row(t).head(m) - insample_prediction_vector(var_model, t, h).transpose();
            } else if (use_dfm) {
                for (int j = 0; j < m; ++j)
                    e(static_cast<Eigen::Index>(r), j) =
                        z(t, j) - insample_prediction(
                                      dfm_per_h[static_cast<std::size_t>(j)][static_cast<std::size_t>(h - 1)], t, h);
            } else {
                for (int j = 0; j < m; ++j)
                    e(static_cast<Eigen::Index>(r), j) =
                        z(t, j) - insample_prediction(uni[static_cast<std::size_t>(j)], t, h);
            }
            for (int i = 0; i < p; ++i)
                e(static_cast<Eigen::Index>(r), m + i) =
                    z(t, m + i) - insample_prediction(uni[static_cast<std::size_t>(m + i)], t, h);
        });
        out.residuals.emplace(h, make_residual_matrix(std::move(e), h));
        out.warmups[static_cast<std::size_t>(h - 1)] = warmup;
    }
    return out;
}

}  // namespace flap
