#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flap/covariance.hpp"
#include "flap/errors.hpp"
#include "flap/forecasting.hpp"
#include "flap/panel.hpp"
#include "flap/parallel.hpp"
#include "flap/projection.hpp"
#include "flap/weights.hpp"

namespace flap {

/// Expanding-window cross-validation plan: training windows of length
/// initial_train, initial_train + step, ... while an H-step test window
/// still fits inside the sample.
struct CvPlan {
    int initial_train = 0;
    int step = 1;
    int H = 1;

    std::vector<int> origins(int T) const {
        if (initial_train < 1 || step < 1 || H < 1)
            throw ConfigError("cv plan: initial_train, step and H must be positive");
        if (initial_train + H > T)
            throw ConfigError("cv plan: initial_train + H exceeds sample length");
        std::vector<int> out;
        for (int t0 = initial_train; t0 + H <= T; t0 += step) out.push_back(t0);
        return out;
    }
};

enum class CovMode { Empirical, Shrunk, Identity, Known };

/// One competing pipeline in the evaluation: a base forecaster plus,
/// unless it is a benchmark, a component scheme, a component count and a
/// covariance mode.
struct MethodSpec {
    std::string model_label = "AR";
    ForecasterSpec forecaster;
    bool benchmark = false;  // score the base forecasts themselves
    WeightScheme scheme = WeightScheme::PCA;
    int p = 0;
    CovMode cov = CovMode::Shrunk;
    bool proportional = true;  // reuse the h=1 covariance at every horizon
    bool pca_standardize = false;
    std::uint64_t seed = 1;
    bool oracle = false;  // perfect foresight; test harness only
    std::optional<Eigen::MatrixXd> known_w;  // CovMode::Known

    std::string label() const {
        if (oracle) return model_label + " - Oracle";
        if (benchmark) return model_label + " - Benchmark";
        return model_label + " - " + scheme_name(scheme) + " - " + std::to_string(p);
    }
};

/// Squared errors indexed by (origin, horizon, series, method). Failed
/// cells hold NaN and carry a recorded cause.
struct ScoreTable {
    std::vector<int> origins;
    std::vector<std::string> series;
    int H = 0;
    std::vector<std::string> methods;
    std::vector<double> se;
    std::vector<std::string> failures;  // "method | origin | cause"
    std::vector<std::string> audit;     // training/test windows per origin
    std::vector<std::pair<int, std::size_t>> base_hashes;  // (origin index, group hash)

    double& at(int o, int h, int s, int k) {
        return se[static_cast<std::size_t>(((o * H + (h - 1)) * static_cast<int>(series.size()) + s) *
                                               static_cast<int>(methods.size()) +
                                           k)];
    }
    double at(int o, int h, int s, int k) const {
        return se[static_cast<std::size_t>(((o * H + (h - 1)) * static_cast<int>(series.size()) + s) *
                                               static_cast<int>(methods.size()) +
                                           k)];
    }
};

namespace detail {

inline std::size_t hash_bytes(const double* data, std::size_t count) {
    // FNV-1a over the raw representation; used only to assert pairing.
    std::size_t h = 1469598103934665603ULL;
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < count * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

/// Builds weights for a scheme at the requested p. Leading rows are nested
/// in p for every scheme, so a p-sweep can slice one matrix.
inline WeightMatrix scheme_weights(WeightScheme scheme, const Panel& train, int p,
                                   std::uint64_t seed, bool pca_standardize) {
    const Eigen::Index m = train.cols();
    if (p == 0) {
        WeightMatrix w;
        w.weights = Eigen::MatrixXd::Zero(0, m);
        w.centering = Eigen::VectorXd::Zero(m);
        w.scaling = Eigen::VectorXd::Ones(m);
        w.scheme = WeightScheme::Custom;
        return w;
    }
    switch (scheme) {
        case WeightScheme::PCA:
            return pca_weights(train, p, pca_standardize);
        case WeightScheme::RandomNormal:
            return random_weights(m, p, RandomDist::Normal, derive_seed(seed, 1));
        case WeightScheme::RandomUniform:
            return random_weights(m, p, RandomDist::Uniform, derive_seed(seed, 2));
        case WeightScheme::RandomOrthonormal:
            return orthonormal_weights(m, p, derive_seed(seed, 3));
        case WeightScheme::PCAPlusNormal: {
            if (p <= m) return pca_weights(train, p, pca_standardize);
            return concat_weights(pca_weights(train, m, pca_standardize),
                                  random_weights(m, p - m, RandomDist::Normal, derive_seed(seed, 1)));
        }
        case WeightScheme::PCAPlusUniform: {
            if (p <= m) return pca_weights(train, p, pca_standardize);
            return concat_weights(pca_weights(train, m, pca_standardize),
                                  random_weights(m, p - m, RandomDist::Uniform, derive_seed(seed, 2)));
        }
        case WeightScheme::OrthonormalPlusNormal: {
            if (p <= m) return orthonormal_weights(m, p, derive_seed(seed, 3));
            return concat_weights(orthonormal_weights(m, m, derive_seed(seed, 3)),
                                  random_weights(m, p - m, RandomDist::Normal, derive_seed(seed, 1)));
        }
        case WeightScheme::Custom: break;
    }
    throw ConfigError("scheme_weights: unsupported scheme");
}

inline WeightMatrix head_weights(const WeightMatrix& w, int p) {
    WeightMatrix out = w;
    out.weights = w.weights.topRows(p);
    return out;
}

struct MethodGroupKey {
    std::string forecaster_key;
    WeightScheme scheme;
    std::uint64_t seed;
    bool pca_standardize;
    bool oracle;
    auto operator<=>(const MethodGroupKey&) const = default;
};

inline std::string forecaster_key(const ForecasterSpec& s) {
    return family_name(s.original.family) + "/" + std::to_string(s.original.max_order) + "/" +
           std::to_string(s.original.fixed_order) + "/" + std::to_string(s.original.with_intercept) +
           "/" + std::to_string(s.original.period) + "/" + std::to_string(s.var_order) + "/" +
           std::to_string(s.dfm.kmax) + "," + std::to_string(s.dfm.nmax) + "," +
           std::to_string(s.dfm.smin) + "," + std::to_string(s.dfm.smax) + "|" +
           family_name(s.component.family) + "/" + std::to_string(s.component.max_order) + "/" +
           std::to_string(s.component.fixed_order) + "/" +
           std::to_string(s.component.with_intercept) + "/" + std::to_string(s.component.period);
}

}  // namespace detail

/// Runs the expanding-window evaluation. Within an origin, every method of
/// the same base-forecaster group consumes the identical base forecasts
/// (verified by hash), and FLAP variants differ only in their projection.
inline ScoreTable run_cv(const Panel& panel, const CvPlan& plan,
                         const std::vector<MethodSpec>& methods, int threads = 1) {
    const int T = static_cast<int>(panel.rows());
    const int m = static_cast<int>(panel.cols());
    const auto origins = plan.origins(T);

    ScoreTable table;
    table.origins = origins;
    table.series = panel.series_names;
    table.H = plan.H;
    for (const auto& ms : methods) table.methods.push_back(ms.label());
    {
        std::set<std::string> unique(table.methods.begin(), table.methods.end());
        if (unique.size() != table.methods.size())
            throw ConfigError("run_cv: duplicate method labels");
    }
    table.se.assign(static_cast<std::size_t>(origins.size()) * plan.H * m * methods.size(),
                    std::numeric_limits<double>::quiet_NaN());

    // Group methods that share base forecasts and component machinery.
    std::map<detail::MethodGroupKey, std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < methods.size(); ++k)
        groups[{detail::forecaster_key(methods[k].forecaster), methods[k].scheme, methods[k].seed,
                methods[k].pca_standardize, methods[k].oracle}]
            .push_back(k);

    std::vector<std::vector<std::string>> fail_per_origin(origins.size());
    std::vector<std::vector<std::pair<int, std::size_t>>> hash_per_origin(origins.size());
    std::vector<std::vector<std::string>> audit_per_origin(origins.size());

    parallel_for(origins.size(), threads, [&](std::size_t oi) {
        const int t0 = origins[oi];
        const Panel train = head_rows(panel, t0);
        const Eigen::MatrixXd actual = panel.values.middleRows(t0, plan.H);
        audit_per_origin[oi].push_back("origin=" + std::to_string(t0) + " train=[0," +
                                       std::to_string(t0) + ") test=[" + std::to_string(t0) + "," +
                                       std::to_string(t0 + plan.H) + ")");

        for (const auto& [key, member_ids] : groups) {
            int pmax = 0;
            for (auto k : member_ids) pmax = std::max(pmax, methods[k].p);
            const MethodSpec& proto = methods[member_ids.front()];
            try {
                if (proto.oracle) {
                    // Perfect foresight: the forecast IS the realized value.
                    for (auto k : member_ids)
                        for (int h = 1; h <= plan.H; ++h)
                            for (int s = 0; s < m; ++s) {
                                const double err = actual(h - 1, s) - actual(h - 1, s);
                                table.at(static_cast<int>(oi), h, s, static_cast<int>(k)) =
                                    err * err;
                            }
                    audit_per_origin[oi].push_back("origin=" + std::to_string(t0) +
                                                   " group=oracle (bypasses training window)");
                    continue;
                }
                const WeightMatrix weights = detail::scheme_weights(
                    proto.scheme, train, pmax, proto.seed, proto.pca_standardize);
                bool need_all_h = false;
                for (auto k : member_ids)
                    if (!methods[k].proportional &&
                        (methods[k].cov == CovMode::Empirical || methods[k].cov == CovMode::Shrunk))
                        need_all_h = true;
                std::vector<int> res_h;
                bool need_res = false;
                for (auto k : member_ids)
                    if (!methods[k].benchmark &&
                        (methods[k].cov == CovMode::Empirical || methods[k].cov == CovMode::Shrunk))
                        need_res = true;
                if (need_res) {
                    if (need_all_h)
                        for (int h = 1; h <= plan.H; ++h) res_h.push_back(h);
                    else
                        res_h.push_back(1);
                }
                const AugmentedForecastSet aug =
                    forecast_augmented(train, weights, proto.forecaster, plan.H, res_h, 1);

                const Eigen::MatrixXd base_block = aug.zhat.values.leftCols(m);
                const std::size_t base_hash = detail::hash_bytes(
                    base_block.data(), static_cast<std::size_t>(base_block.size()));
                hash_per_origin[oi].emplace_back(static_cast<int>(oi), base_hash);

                for (auto k : member_ids) {
                    const MethodSpec& ms = methods[k];
                    try {
                        Eigen::MatrixXd ytilde;  // H x m
                        if (ms.benchmark || ms.p == 0) {
                            if (ms.benchmark) {
                                ytilde = aug.zhat.values.leftCols(m);
                            } else {
                                // p = 0 projection is the identity map.
                                const ConstraintMatrix c =
                                    build_constraint(detail::head_weights(weights, 0));
                                const ProjectionOperator op =
                                    build_projection(c, identity_cov(m, 1));
                                ytilde = project_to_originals(op, aug.zhat.values.leftCols(m));
                            }
                        } else {
                            const WeightMatrix wp = detail::head_weights(weights, ms.p);
                            const ConstraintMatrix c = build_constraint(wp);
                            Eigen::MatrixXd zsub(plan.H, m + ms.p);
                            zsub.leftCols(m) = aug.zhat.values.leftCols(m);
                            zsub.rightCols(ms.p) = aug.zhat.values.middleCols(m, ms.p);
                            ytilde.resize(plan.H, m);
                            auto estimate_w = [&](int h) -> CovarianceEstimate {
                                switch (ms.cov) {
                                    case CovMode::Identity: return identity_cov(m + ms.p, h);
                                    case CovMode::Known: {
                                        if (!ms.known_w) throw ConfigError("known covariance missing");
                                        return known_cov(
                                            ms.known_w->topLeftCorner(m + ms.p, m + ms.p), h);
                                    }
                                    case CovMode::Empirical:
                                    case CovMode::Shrunk: {
                                        const ResidualMatrix& full = aug.residuals.at(h);
                                        Eigen::MatrixXd sub(full.n(), m + ms.p);
                                        sub.leftCols(m) = full.residuals.leftCols(m);
                                        sub.rightCols(ms.p) = full.residuals.middleCols(m, ms.p);
                                        const ResidualMatrix rsub =
                                            make_residual_matrix(std::move(sub), h);
                                        return ms.cov == CovMode::Empirical ? empirical_cov(rsub)
                                                                            : shrink_cov(rsub);
                                    }
                                }
                                throw ConfigError("unknown covariance mode");
                            };
                            if (ms.proportional || ms.cov == CovMode::Identity ||
                                ms.cov == CovMode::Known) {
                                const ProjectionOperator op = build_projection(c, estimate_w(1));
                                ytilde = project_to_originals(op, zsub);
                            } else {
                                for (int h = 1; h <= plan.H; ++h) {
                                    const ProjectionOperator op = build_projection(c, estimate_w(h));
                                    ytilde.row(h - 1) =
                                        project_to_originals(op, zsub.row(h - 1));
                                }
                            }
                        }
                        for (int h = 1; h <= plan.H; ++h)
                            for (int s = 0; s < m; ++s) {
                                const double err = actual(h - 1, s) - ytilde(h - 1, s);
                                table.at(static_cast<int>(oi), h, s, static_cast<int>(k)) = err * err;
                            }
                    } catch (const std::exception& e) {
                        fail_per_origin[oi].push_back(ms.label() + " | origin " + std::to_string(t0) +
                                                      " | " + e.what());
                    }
                }
            } catch (const std::exception& e) {
                for (auto k : member_ids)
                    fail_per_origin[oi].push_back(methods[k].label() + " | origin " +
                                                  std::to_string(t0) + " | " + e.what());
            }
        }
    });

    for (auto& v : fail_per_origin)
        for (auto& s : v) table.failures.push_back(std::move(s));
    for (auto& v : hash_per_origin)
        for (const auto& h : v) table.base_hashes.push_back(h);
    for (auto& v : audit_per_origin)
        for (auto& s : v) table.audit.push_back(std::move(s));

    // A method failing more than 1% of its cells aborts the run.
    const double cells_per_method =
        static_cast<double>(origins.size()) * plan.H * m;
    for (std::size_t k = 0; k < methods.size(); ++k) {
        std::size_t bad = 0;
        for (std::size_t oi = 0; oi < origins.size(); ++oi)
            for (int h = 1; h <= plan.H; ++h)
                for (int s = 0; s < m; ++s)
                    if (std::isnan(table.at(static_cast<int>(oi), h, s, static_cast<int>(k)))) ++bad;
        if (static_cast<double>(bad) > 0.01 * cells_per_method) {
            std::string msg = "run_cv: method '" + table.methods[k] + "' failed " +
                              std::to_string(bad) + " of " +
                              std::to_string(static_cast<std::size_t>(cells_per_method)) + " cells";
            for (const auto& f : table.failures) msg += "\n  " + f;
            throw NumericalError(msg);
        }
    }
    return table;
}

/// Per-series MSE at one horizon, averaged over origins: the observation
/// matrix for the rank tests (rows = series, columns = methods).
/// (origin, series) cells where any method failed are excluded pairwise;
/// the count of exclusions is reported through `excluded`.
inline Eigen::MatrixXd mean_scores_by_series(const ScoreTable& table, int h,
                                             std::size_t* excluded = nullptr) {
    const int S = static_cast<int>(table.series.size());
    const int K = static_cast<int>(table.methods.size());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(S, K);
    std::size_t skipped = 0;
    for (int s = 0; s < S; ++s) {
        int used = 0;
        for (std::size_t oi = 0; oi < table.origins.size(); ++oi) {
            bool complete = true;
            for (int k = 0; k < K; ++k)
                if (std::isnan(table.at(static_cast<int>(oi), h, s, k))) complete = false;
            if (!complete) {
                ++skipped;
                continue;
            }
            for (int k = 0; k < K; ++k) out(s, k) += table.at(static_cast<int>(oi), h, s, k);
            ++used;
        }
        if (used == 0) throw NumericalError("mean_scores_by_series: no complete origins for series " +
                                            table.series[static_cast<std::size_t>(s)]);
        out.row(s) /= static_cast<double>(used);
    }
    if (excluded) *excluded = skipped;
    return out;
}

namespace detail {

/// Upper studentized range quantiles q_{alpha,k} at infinite degrees of
/// freedom, k = 2..20. Values from the standard tables.
inline double studentized_range_quantile(double alpha, int k) {
    static const double q05[] = {2.772, 3.314, 3.633, 3.858, 4.030, 4.170, 4.286,
                                 4.387, 4.474, 4.552, 4.622, 4.685, 4.743, 4.796,
                                 4.845, 4.891, 4.934, 4.974, 5.012};
    static const double q01[] = {3.643, 4.120, 4.403, 4.603, 4.757, 4.882, 4.987,
                                 5.078, 5.157, 5.227, 5.290, 5.348, 5.400, 5.448,
                                 5.493, 5.535, 5.574, 5.611, 5.645};
    static const double q10[] = {2.326, 2.902, 3.240, 3.478, 3.661, 3.808, 3.931,
                                 4.037, 4.129, 4.211, 4.285, 4.351, 4.412, 4.468,
                                 4.519, 4.568, 4.612, 4.654, 4.694};
    if (k < 2 || k > 20)
        throw ConfigError("studentized range table covers 2 <= k <= 20");
    if (std::abs(alpha - 0.05) < 1e-12) return q05[k - 2];
    if (std::abs(alpha - 0.01) < 1e-12) return q01[k - 2];
    if (std::abs(alpha - 0.10) < 1e-12) return q10[k - 2];
    throw ConfigError("studentized range table covers alpha in {0.01, 0.05, 0.10}");
}

/// Regularized upper incomplete gamma Q(a, x), for the chi-square survival
/// function.
inline double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw NumericalError("gamma_q: invalid arguments");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) {
        // Lower series, then complement.
        double term = 1.0 / a;
        double sum = term;
        for (int n = 1; n < 500; ++n) {
            term *= x / (a + n);
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-15) break;
        }
        const double lower = sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
        return 1.0 - lower;
    }
    // Continued fraction for the upper tail.
    double b = x + 1.0 - a;
    double c = 1e308;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-15) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double chi_square_survival(double stat, int df) {
    return gamma_q(df / 2.0, stat / 2.0);
}

/// Ranks one observation's scores (smaller is better) with average ranks
/// on ties.
inline Eigen::VectorXd rank_row(const Eigen::VectorXd& scores) {
    const int k = static_cast<int>(scores.size());
    std::vector<int> idx(static_cast<std::size_t>(k));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] < scores[b]; });
    Eigen::VectorXd ranks(k);
    int i = 0;
    while (i < k) {
        int j = i;
        while (j + 1 < k && scores[idx[static_cast<std::size_t>(j + 1)]] ==
                                scores[idx[static_cast<std::size_t>(i)]])
            ++j;
        const double avg = (i + j) / 2.0 + 1.0;
        for (int t = i; t <= j; ++t) ranks[idx[static_cast<std::size_t>(t)]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

/// Friedman test with post-hoc Nemenyi critical distance and the
/// multiple-comparisons-with-the-best intervals.
struct RankReport {
    std::vector<std::string> methods;
    Eigen::VectorXd mean_ranks;
    double friedman_statistic = 0.0;
    double p_value = 1.0;
    double critical_distance = 0.0;
    int n_observations = 0;
    double alpha = 0.05;
    std::vector<std::pair<double, double>> intervals;  // mean rank +- CD/2
    std::vector<bool> significantly_worse;             // interval disjoint from the best's
};

/// scores: rows = observations (series), columns = methods; smaller is
/// better. Ties get average ranks. CD = q_{alpha,k} sqrt(k(k+1)/(12N)).
inline RankReport friedman_nemenyi(const Eigen::MatrixXd& scores,
                                   const std::vector<std::string>& method_labels,
                                   double alpha = 0.05) {
    const int N = static_cast<int>(scores.rows());
    const int k = static_cast<int>(scores.cols());
    if (k < 2) throw ConfigError("friedman_nemenyi: need at least 2 methods");
    if (N < 2) throw ConfigError("friedman_nemenyi: need at least 2 observations");
    if (static_cast<int>(method_labels.size()) != k)
        throw DimensionError("friedman_nemenyi: label count mismatch");

    Eigen::VectorXd mean_ranks = Eigen::VectorXd::Zero(k);
    bool any_distinction = false;
    for (int i = 0; i < N; ++i) {
        const Eigen::VectorXd r = detail::rank_row(scores.row(i).transpose());
        if ((r.array() != r[0]).any()) any_distinction = true;
        mean_ranks += r;
    }
    if (!any_distinction)
        throw DegenerateRanksError("friedman_nemenyi: scores are constant across methods");
    mean_ranks /= static_cast<double>(N);

    RankReport rep;
    rep.methods = method_labels;
    rep.mean_ranks = mean_ranks;
    rep.n_observations = N;
    rep.alpha = alpha;
    const double center = (k + 1) / 2.0;
    double ssq = 0.0;
    for (int j = 0; j < k; ++j) ssq += (mean_ranks[j] - center) * (mean_ranks[j] - center);
    rep.friedman_statistic = 12.0 * N / (k * (k + 1.0)) * ssq;
    rep.p_value = detail::chi_square_survival(rep.friedman_statistic, k - 1);
    rep.critical_distance = detail::studentized_range_quantile(alpha, k) *
                            std::sqrt(k * (k + 1.0) / (12.0 * N));

    int best = 0;
    for (int j = 1; j < k; ++j)
        if (mean_ranks[j] < mean_ranks[best]) best = j;
    const double half = rep.critical_distance / 2.0;
    for (int j = 0; j < k; ++j)
        rep.intervals.emplace_back(mean_ranks[j] - half, mean_ranks[j] + half);
    for (int j = 0; j < k; ++j)
        rep.significantly_worse.push_back(rep.intervals[static_cast<std::size_t>(j)].first >
                                          rep.intervals[static_cast<std::size_t>(best)].second);
    return rep;
}

/// One point of the MSE-versus-p curve.
struct CurvePoint {
    std::string model;
    std::string weights;  // scheme name or "Benchmark"
    int p = 0;
    int h = 0;
    double mse = 0.0;
};

/// Mean MSE per (model, scheme, p, horizon) for the requested sweep, plus
/// the benchmark reference rows of each model.
inline std::vector<CurvePoint> mse_curves(const ScoreTable& table,
                                          const std::vector<MethodSpec>& methods,
                                          const std::vector<int>& sweep) {
    std::map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < table.methods.size(); ++k) index[table.methods[k]] = k;

    auto mean_mse = [&](std::size_t k, int h) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t oi = 0; oi < table.origins.size(); ++oi)
            for (std::size_t s = 0; s < table.series.size(); ++s) {
                const double v =
                    table.at(static_cast<int>(oi), h, static_cast<int>(s), static_cast<int>(k));
                if (!std::isnan(v)) {
                    sum += v;
                    ++count;
                }
            }
        if (count == 0) throw NumericalError("mse_curves: no scores for " + table.methods[k]);
        return sum / static_cast<double>(count);
    };

    std::vector<CurvePoint> out;
    std::set<std::pair<std::string, WeightScheme>> families;
    for (const auto& ms : methods) {
        if (ms.benchmark) {
            const auto it = index.find(ms.label());
            if (it == index.end()) throw ConfigError("mse_curves: method missing: " + ms.label());
            for (int h = 1; h <= table.H; ++h)
                out.push_back({ms.model_label, "Benchmark", 0, h, mean_mse(it->second, h)});
        } else {
            families.insert({ms.model_label, ms.scheme});
        }
    }
    for (const auto& [model, scheme] : families) {
        for (int p : sweep) {
            MethodSpec probe;
            probe.model_label = model;
            probe.scheme = scheme;
            probe.p = p;
            const auto it = index.find(probe.label());
            if (it == index.end())
                throw ConfigError("mse_curves: sweep cell missing from score table: " +
                                  probe.label());
            for (int h = 1; h <= table.H; ++h)
                out.push_back({model, scheme_name(scheme), p, h, mean_mse(it->second, h)});
        }
    }
    return out;
}

/// Long-format scores: origin,series,h,method,se with stable ordering.
inline void write_scores_csv(const std::filesystem::path& path, const ScoreTable& table) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path.string());
    out << "origin,series,h,method,se\n";
    for (std::size_t oi = 0; oi < table.origins.size(); ++oi)
        for (std::size_t s = 0; s < table.series.size(); ++s)
            for (int h = 1; h <= table.H; ++h)
                for (std::size_t k = 0; k < table.methods.size(); ++k) {
                    const double v =
                        table.at(static_cast<int>(oi), h, static_cast<int>(s), static_cast<int>(k));
                    out << table.origins[oi] << ',' << table.series[s] << ',' << h << ','
                        << table.methods[k] << ',' << (std::isnan(v) ? "" : format_double(v))
                        << '\n';
                }
}

inline void write_curves_csv(const std::filesystem::path& path,
                             const std::vector<CurvePoint>& curves) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path.string());
    out << "model,weights,p,h,mse\n";
    for (const auto& c : curves)
        out << c.model << ',' << c.weights << ',' << c.p << ',' << c.h << ','
            << format_double(c.mse) << '\n';
}

inline void write_ranks_json(const std::filesystem::path& path,
                             const std::map<int, RankReport>& reports) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path.string());
    out << "{\n";
    bool first_h = true;
    for (const auto& [h, rep] : reports) {
        if (!first_h) out << ",\n";
        first_h = false;
        out << "  \"" << h << "\": {\n"
            << "    \"alpha\": " << format_double(rep.alpha) << ",\n"
            << "    \"n_observations\": " << rep.n_observations << ",\n"
            << "    \"friedman_statistic\": " << format_double(rep.friedman_statistic) << ",\n"
            << "    \"p_value\": " << format_double(rep.p_value) << ",\n"
            << "    \"critical_distance\": " << format_double(rep.critical_distance) << ",\n"
            << "    \"methods\": [\n";
        for (std::size_t j = 0; j < rep.methods.size(); ++j) {
            out << "      {\"name\": \"" << rep.methods[j]
                << "\", \"mean_rank\": " << format_double(rep.mean_ranks[static_cast<Eigen::Index>(j)])
                << ", \"lower\": " << format_double(rep.intervals[j].first)
                << ", \"upper\": " << format_double(rep.intervals[j].second)
                << ", \"significantly_worse\": " << (rep.significantly_worse[j] ? "true" : "false")
                << "}" << (j + 1 < rep.methods.size() ? "," : "") << "\n";
        }
        out << "    ]\n  }";
    }
    out << "\n}\n";
}

}  // namespace flap
