#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flap/covariance.hpp"
#include "flap/errors.hpp"
#include "flap/evaluation.hpp"
#include "flap/forecasting.hpp"
#include "flap/panel.hpp"
#include "flap/projection.hpp"
#include "flap/simulation.hpp"
#include "flap/weights.hpp"

namespace flap::cli {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

/// Output directory, seed and structured logging for one invocation.
/// Every run directory receives the resolved config, a run_info.json and a
/// line-delimited JSON event log; none of them carry wall-clock state, so
/// a rerun writes bit-identical files.
struct RunContext {
    std::filesystem::path out_dir;
    std::uint64_t seed = 1;
    int threads = 1;
    json config;
    bool quiet = false;

    void log_event(const std::string& event, const json& detail = json::object()) {
        json line;
        line["event"] = event;
        if (!detail.empty()) line["detail"] = detail;
        const std::string s = line.dump();
        if (!quiet) std::cerr << s << '\n';
        std::ofstream log(out_dir / "log.jsonl", std::ios::app);
        log << s << '\n';
    }
};

namespace detail {

inline WeightScheme parse_scheme(const std::string& s) {
    if (s == "PCA") return WeightScheme::PCA;
    if (s == "Norm") return WeightScheme::RandomNormal;
    if (s == "Unif") return WeightScheme::RandomUniform;
    if (s == "Ortho") return WeightScheme::RandomOrthonormal;
    if (s == "PCA+Norm") return WeightScheme::PCAPlusNormal;
    if (s == "PCA+Unif") return WeightScheme::PCAPlusUniform;
    if (s == "Ortho+Norm") return WeightScheme::OrthonormalPlusNormal;
    throw ConfigError("unknown component scheme '" + s +
                      "' (expected PCA, Norm, Unif, Ortho, PCA+Norm, PCA+Unif, Ortho+Norm)");
}

inline Family parse_family(const std::string& s) {
    if (s == "mean") return Family::Mean;
    if (s == "naive") return Family::Naive;
    if (s == "snaive") return Family::SeasonalNaive;
    if (s == "ar") return Family::AR;
    if (s == "var") return Family::VAR;
    if (s == "dfm") return Family::DFM;
    throw ConfigError("unknown forecaster family '" + s + "'");
}

inline CovMode parse_cov_mode(const std::string& s) {
    if (s == "empirical") return CovMode::Empirical;
    if (s == "shrunk") return CovMode::Shrunk;
    if (s == "identity") return CovMode::Identity;
    if (s == "known") return CovMode::Known;
    throw ConfigError("unknown covariance mode '" + s +
                      "' (expected empirical, shrunk, identity, known)");
}

inline InfoCriterion parse_ic(const std::string& s) {
    if (s == "bic") return InfoCriterion::BIC;
    if (s == "aicc") return InfoCriterion::AICc;
    throw ConfigError("unknown information criterion '" + s + "' (expected bic or aicc)");
}

inline ForecasterSpec parse_forecaster(const json& j) {
    ForecasterSpec spec;
    spec.original.family = parse_family(j.value("family", "ar"));
    spec.original.max_order = j.value("max_order", 8);
    spec.original.fixed_order = j.value("order", -1);
    spec.original.with_intercept = j.value("with_intercept", true);
    spec.original.period = j.value("period", 1);
    spec.original.ic = parse_ic(j.value("ic", "bic"));
    spec.component.ic = parse_ic(j.value("component_ic", j.value("ic", "bic")));
    spec.component.family = parse_family(j.value("component_family", "ar"));
    spec.component.max_order = j.value("component_max_order", spec.original.max_order);
    spec.component.fixed_order = j.value("component_order", -1);
    spec.component.period = j.value("component_period", spec.original.period);
    spec.var_order = j.value("var_order", 1);
    if (j.contains("dfm")) {
        const auto& d = j.at("dfm");
        spec.dfm.kmax = d.value("kmax", 6);
        spec.dfm.nmax = d.value("nmax", 3);
        spec.dfm.smin = d.value("smin", 1);
        spec.dfm.smax = d.value("smax", 3);
    }
    if (spec.original.max_order < 0 || spec.component.max_order < 0)
        throw ConfigError("forecaster: max_order must be non-negative");
    if (spec.original.family == Family::SeasonalNaive && spec.original.period < 1)
        throw ConfigError("forecaster: snaive needs period >= 1");
    return spec;
}

inline Panel load_input_panel(const json& input, const RunContext& ctx) {
    if (!input.contains("path")) throw ConfigError("input.path is required");
    const std::string path = input.at("path").get<std::string>();
    const std::string layout = input.value("layout", "wide");
    if (layout != "wide" && layout != "long")
        throw ConfigError("input.layout must be 'wide' or 'long'");
    Panel p = read_panel(path, layout == "wide" ? PanelLayout::Wide : PanelLayout::Long);
    if (input.value("standardize", false)) p = standardize(p);
    (void)ctx;
    return p;
}

inline void write_run_files(RunContext& ctx, const std::string& command) {
    std::filesystem::create_directories(ctx.out_dir);
    std::ofstream cfg(ctx.out_dir / "config.json");
    cfg << ctx.config.dump(2) << '\n';
    json info;
    info["command"] = command;
    info["seed"] = ctx.seed;
    info["flap_version"] = FLAP_VERSION;
    info["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                            std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION);
    std::ofstream ri(ctx.out_dir / "run_info.json");
    ri << info.dump(2) << '\n';
    std::error_code ec;
    std::filesystem::remove(ctx.out_dir / "log.jsonl", ec);  // fresh log per run
}

inline Panel forecasts_as_panel(const Eigen::MatrixXd& values, int origin,
                                const std::vector<std::string>& names) {
    std::vector<std::string> times;
    for (Eigen::Index h = 1; h <= values.rows(); ++h)
        times.push_back(std::to_string(origin + static_cast<int>(h)));
    return make_panel(values, names, times);
}

}  // namespace detail

/// `simulate`: write N replicate panels from a VAR DGP with derived seeds.
inline void cmd_simulate(RunContext& ctx) {
    detail::write_run_files(ctx, "simulate");
    const json cfg = ctx.config.value("simulate", json::object());
    const int T = cfg.value("T", 300);
    const int replicates = cfg.value("replicates", 1);
    const int burn_in = cfg.value("burn_in", 200);
    if (T < 1 || replicates < 1) throw ConfigError("simulate: T and replicates must be positive");

    VarProcess proc;
    if (cfg.contains("process_file") && !cfg.at("process_file").get<std::string>().empty()) {
        proc = load_process(cfg.at("process_file").get<std::string>());
    } else {
        const int m = cfg.value("m", 10);
        const int order = cfg.value("order", 2);
        const double radius = cfg.value("radius", 0.9);
        proc = make_surrogate_dgp(m, order, ctx.seed, radius);
    }
    const double rho = companion_radius(proc);
    if (rho >= 1.0)
        throw StabilityError("simulate: StabilityError: companion spectral radius " +
                             std::to_string(rho) + " >= 1");
    save_process(ctx.out_dir / "process.json", proc);
    ctx.log_event("simulate_start", {{"T", T}, {"replicates", replicates}, {"radius", rho}});

    for (int i = 0; i < replicates; ++i) {
        VarProcess rep = proc;
        rep.seed = replicate_seed(ctx.seed, static_cast<std::uint64_t>(i));
        const Panel panel = simulate(rep, T, burn_in);
        char name[32];
        std::snprintf(name, sizeof(name), "panel_%03d.csv", i);
        write_panel(ctx.out_dir / name, panel);
    }
    ctx.log_event("simulate_done", {{"files", replicates}});
}

/// `flap`: one-origin pipeline. Form components, forecast the augmented
/// vector, estimate the error covariance, project, and write forecasts
/// plus the variance-reduction report.
inline void cmd_flap(RunContext& ctx) {
    detail::write_run_files(ctx, "flap");
    const json cfg = ctx.config.value("flap", json::object());
    const Panel panel = detail::load_input_panel(ctx.config.value("input", json::object()), ctx);
    const int m = static_cast<int>(panel.cols());
    const int H = cfg.value("horizon", 12);
    const int p = cfg.value("p", m);
    if (H < 1) throw ConfigError("flap: horizon must be >= 1");
    if (p < 0) throw ConfigError("flap: p must be >= 0");
    const WeightScheme scheme = detail::parse_scheme(cfg.value("scheme", "PCA"));
    const CovMode cov_mode = detail::parse_cov_mode(cfg.value("covariance", "shrunk"));
    const bool proportional = cfg.value("proportional", true);
    const bool pca_standardize = cfg.value("pca_standardize", false);
    const ForecasterSpec fspec = detail::parse_forecaster(cfg.value("forecaster", json::object()));

    const WeightMatrix weights =
        flap::detail::scheme_weights(scheme, panel, p, ctx.seed, pca_standardize);
    save_weights(ctx.out_dir / "weights.csv", weights, panel.series_names);

    std::vector<int> res_h;
    if (cov_mode == CovMode::Empirical || cov_mode == CovMode::Shrunk) {
        if (proportional)
            res_h.push_back(1);
        else
            for (int h = 1; h <= H; ++h) res_h.push_back(h);
    }
    ctx.log_event("forecast_start", {{"m", m}, {"p", p}, {"H", H}});
    const AugmentedForecastSet aug =
        forecast_augmented(panel, weights, fspec, H, res_h, ctx.threads);

    const ConstraintMatrix c = build_constraint(weights);
    auto estimate_w = [&](int h) -> CovarianceEstimate {
        switch (cov_mode) {
            case CovMode::Identity: return identity_cov(m + p, h);
            case CovMode::Known: {
                if (!cfg.contains("cov_file"))
                    throw ConfigError("flap: covariance 'known' needs cov_file");
                Eigen::MatrixXd w = read_matrix_csv(cfg.at("cov_file").get<std::string>());
                if (w.rows() != m + p)
                    throw DimensionError("flap: cov_file has wrong dimension");
                return known_cov(std::move(w), h);
            }
            case CovMode::Empirical: return empirical_cov(aug.residuals.at(h));
            case CovMode::Shrunk: return shrink_cov(aug.residuals.at(h));
        }
        throw ConfigError("unknown covariance mode");
    };

    Eigen::MatrixXd ytilde(H, m);
    Eigen::MatrixXd ztilde(H, m + p);
    CovarianceEstimate w1 = estimate_w(res_h.empty() ? 1 : res_h.front());
    save_covariance(ctx.out_dir / "covariance.csv", w1);
    if (proportional || cov_mode == CovMode::Identity || cov_mode == CovMode::Known) {
        const CovarianceEstimate wp = proportional && cov_mode != CovMode::Identity &&
                                              cov_mode != CovMode::Known && H > 1
                                          ? proportional_w(w1, H)
                                          : w1;
        const ProjectionOperator op = build_projection(c, wp);
        for (int h = 1; h <= H; ++h) {
            const Projected pr = project(op, aug.zhat.values.row(h - 1).transpose());
            ytilde.row(h - 1) = pr.ytilde.transpose();
            ztilde.row(h - 1) = pr.ztilde.transpose();
        }
        write_operator_bundle(ctx.out_dir / "operator", op, c);
        write_reduction_json(ctx.out_dir / "variance_reduction.json",
                             variance_reduction(c, wp, p <= 128));
        if (op.condition_report.ill_conditioned)
            ctx.log_event("ill_conditioned_warning",
                          {{"condition", op.condition_report.condition}});
    } else {
        for (int h = 1; h <= H; ++h) {
            const CovarianceEstimate wh = estimate_w(h);
            const ProjectionOperator op = build_projection(c, wh);
            const Projected pr = project(op, aug.zhat.values.row(h - 1).transpose());
            ytilde.row(h - 1) = pr.ytilde.transpose();
            ztilde.row(h - 1) = pr.ztilde.transpose();
            if (h == 1) {
                write_operator_bundle(ctx.out_dir / "operator", op, c);
                write_reduction_json(ctx.out_dir / "variance_reduction.json",
                                     variance_reduction(c, wh, p <= 128));
            }
        }
    }

    const int origin = static_cast<int>(panel.rows());
    write_panel(ctx.out_dir / "base_forecasts.csv",
                detail::forecasts_as_panel(aug.zhat.values.leftCols(m), origin,
                                           panel.series_names));
    write_panel(ctx.out_dir / "base_augmented.csv",
                detail::forecasts_as_panel(aug.zhat.values, origin, aug.series_names));
    write_panel(ctx.out_dir / "projected_forecasts.csv",
                detail::forecasts_as_panel(p == 0 ? aug.zhat.values.leftCols(m) : ytilde, origin,
                                           panel.series_names));
    write_panel(ctx.out_dir / "projected_augmented.csv",
                detail::forecasts_as_panel(p == 0 ? aug.zhat.values : ztilde, origin,
                                           aug.series_names));
    ctx.log_event("flap_done", {{"output", ctx.out_dir.string()}});
}

/// `evaluate`: expanding-window CV over the method grid, then rank tests
/// and MSE curves.
inline void cmd_evaluate(RunContext& ctx) {
    detail::write_run_files(ctx, "evaluate");
    const json cfg = ctx.config.value("evaluate", json::object());
    const Panel panel = detail::load_input_panel(ctx.config.value("input", json::object()), ctx);

    CvPlan plan;
    plan.initial_train = cfg.value("initial_train", static_cast<int>(panel.rows()) / 2);
    plan.H = cfg.value("H", 12);
    plan.step = cfg.value("step", 1);
    const double alpha = cfg.value("alpha", 0.05);
    const bool proportional = cfg.value("proportional", true);
    const bool pca_standardize = cfg.value("pca_standardize", false);
    const CovMode cov_mode = detail::parse_cov_mode(cfg.value("covariance", "shrunk"));
    const ForecasterSpec fspec = detail::parse_forecaster(cfg.value("forecaster", json::object()));
    const std::string model_label = cfg.value("model_label", family_name(fspec.original.family));

    std::vector<int> p_values = cfg.value("p_values", std::vector<int>{0});
    std::vector<std::string> scheme_names = cfg.value("schemes", std::vector<std::string>{"PCA"});
    std::vector<int> rank_horizons = cfg.value("rank_horizons", std::vector<int>{1});

    std::vector<MethodSpec> methods;
    MethodSpec bench;
    bench.model_label = model_label;
    bench.forecaster = fspec;
    bench.benchmark = true;
    bench.seed = ctx.seed;
    methods.push_back(bench);
    for (const auto& sname : scheme_names) {
        const WeightScheme scheme = detail::parse_scheme(sname);
        for (int p : p_values) {
            MethodSpec ms;
            ms.model_label = model_label;
            ms.forecaster = fspec;
            ms.scheme = scheme;
            ms.p = p;
            ms.cov = cov_mode;
            ms.proportional = proportional;
            ms.pca_standardize = pca_standardize;
            ms.seed = ctx.seed;
            methods.push_back(ms);
        }
    }

    ctx.log_event("cv_start", {{"origins", plan.origins(static_cast<int>(panel.rows())).size()},
                               {"methods", methods.size()}});
    const ScoreTable table = run_cv(panel, plan, methods, ctx.threads);
    write_scores_csv(ctx.out_dir / "scores.csv", table);
    if (!table.failures.empty())
        ctx.log_event("cell_failures", {{"count", table.failures.size()}});

    std::map<int, RankReport> reports;
    for (int h : rank_horizons) {
        if (h < 1 || h > plan.H) throw ConfigError("rank horizon outside 1..H");
        std::size_t excluded = 0;
        const Eigen::MatrixXd obs = mean_scores_by_series(table, h, &excluded);
        if (excluded > 0)
            ctx.log_event("excluded_cells", {{"h", h}, {"count", excluded}});
        try {
            reports.emplace(h, friedman_nemenyi(obs, table.methods, alpha));
        } catch (const DegenerateRanksError& e) {
            ctx.log_event("degenerate_ranks_warning", {{"h", h}, {"message", e.what()}});
        }
    }
    write_ranks_json(ctx.out_dir / "ranks.json", reports);
    write_curves_csv(ctx.out_dir / "mse_curves.csv", mse_curves(table, methods, p_values));
    ctx.log_event("evaluate_done", {{"output", ctx.out_dir.string()}});
}

namespace detail {

/// Rebuilds a ScoreTable from a scores.csv written by cmd_evaluate.
inline ScoreTable read_scores_csv(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty() || split_csv_line(lines[0]) !=
                             std::vector<std::string>{"origin", "series", "h", "method", "se"})
        throw MissingDataError("not a scores.csv file: " + path.string());
    struct Row {
        int origin, h;
        std::string series, method, se;
    };
    std::vector<Row> rows;
    std::map<int, int> origin_ids;
    std::map<std::string, int> series_ids, method_ids;
    std::vector<std::string> series_order, method_order;
    int H = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = split_csv_line(lines[i]);
        if (f.size() != 5)
            throw MissingDataError("bad scores row at line " + std::to_string(i + 1));
        Row r{static_cast<int>(parse_double(f[0], "origin")), static_cast<int>(parse_double(f[2], "h")),
              f[1], f[3], f[4]};
        H = std::max(H, r.h);
        origin_ids.emplace(r.origin, 0);
        if (series_ids.emplace(r.series, 0).second) series_order.push_back(r.series);
        if (method_ids.emplace(r.method, 0).second) method_order.push_back(r.method);
        rows.push_back(std::move(r));
    }
    ScoreTable t;
    for (auto& [o, id] : origin_ids) {
        id = static_cast<int>(t.origins.size());
        t.origins.push_back(o);
    }
    for (std::size_t j = 0; j < series_order.size(); ++j) series_ids[series_order[j]] = static_cast<int>(j);
    for (std::size_t j = 0; j < method_order.size(); ++j) method_ids[method_order[j]] = static_cast<int>(j);
    t.series = series_order;
    t.methods = method_order;
    t.H = H;
    t.se.assign(t.origins.size() * static_cast<std::size_t>(H) * t.series.size() * t.methods.size(),
                std::numeric_limits<double>::quiet_NaN());
    for (const auto& r : rows)
        if (!r.se.empty())
            t.at(origin_ids[r.origin], r.h, series_ids[r.series], method_ids[r.method]) =
                parse_double(r.se, "se");
    return t;
}

}  // namespace detail

/// `report`: recompute rank tests and MSE curves from an existing
/// scores.csv and print a summary.
inline void cmd_report(RunContext& ctx) {
    detail::write_run_files(ctx, "report");
    const json cfg = ctx.config.value("report", json::object());
    std::filesystem::path scores_path;
    if (cfg.contains("scores"))
        scores_path = cfg.at("scores").get<std::string>();
    else
        throw ConfigError("report: 'scores' path is required");
    const ScoreTable table = detail::read_scores_csv(scores_path);
    const double alpha = cfg.value("alpha", 0.05);
    std::vector<int> rank_horizons = cfg.value("rank_horizons", std::vector<int>{1});

    std::map<int, RankReport> reports;
    for (int h : rank_horizons) {
        try {
            reports.emplace(h, friedman_nemenyi(mean_scores_by_series(table, h), table.methods, alpha));
        } catch (const DegenerateRanksError& e) {
            ctx.log_event("degenerate_ranks_warning", {{"h", h}, {"message", e.what()}});
        }
    }
    write_ranks_json(ctx.out_dir / "ranks.json", reports);

    std::cout << "scores: " << scores_path.string() << "\n"
              << "origins: " << table.origins.size() << ", series: " << table.series.size()
              << ", horizons: " << table.H << ", methods: " << table.methods.size() << "\n";
    for (const auto& [h, rep] : reports) {
        std::cout << "h=" << h << "  Friedman chi2=" << rep.friedman_statistic
                  << " (p=" << rep.p_value << "), CD=" << rep.critical_distance << "\n";
        for (std::size_t j = 0; j < rep.methods.size(); ++j)
            std::cout << "  " << rep.methods[j] << ": mean rank "
                      << rep.mean_ranks[static_cast<Eigen::Index>(j)]
                      << (rep.significantly_worse[j] ? "  (worse than best)" : "") << "\n";
    }
    ctx.log_event("report_done", {{"output", ctx.out_dir.string()}});
}

/// Maps library exceptions to the documented exit codes.
inline int run_guarded(RunContext& ctx, const std::string& command, void (*fn)(RunContext&)) {
    try {
        fn(ctx);
        return kExitOk;
    } catch (const ConfigError& e) {
        ctx.log_event("error", {{"kind", "config"}, {"message", e.what()}});
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const StabilityError& e) {
        ctx.log_event("error", {{"kind", "stability"}, {"message", e.what()}});
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const MissingDataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const DuplicateCellError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const DegenerateSeriesError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const InsufficientDataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const DegenerateResidualsError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << command << " failed: " << e.what() << '\n';
        return kExitNumerical;
    }
}

}  // namespace flap::cli
