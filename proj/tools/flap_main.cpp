#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "flap/cli.hpp"

namespace {

using flap::cli::RunContext;
using nlohmann::json;

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw flap::ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw flap::ConfigError("invalid config JSON in " + path + ": " + e.what());
    }
    return j;
}

std::filesystem::path resolve_output(const std::string& dir) {
    std::filesystem::path out = dir.empty() ? "flap_out" : dir;
    const char* root = std::getenv("FLAP_OUTPUT_ROOT");
    if (root != nullptr && out.is_relative()) out = std::filesystem::path(root) / out;
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FLAP: forecast linear augmented projection"};
    app.require_subcommand(1);

    std::string config_path;
    std::string output_dir;
    std::uint64_t seed = 1;
    int threads = 0;
    bool quiet = false;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--output", output_dir, "output directory");
    app.add_option("--seed", seed, "base random seed");
    app.add_option("--threads", threads, "worker threads (0 = logical cores)");
    app.add_flag("--quiet", quiet, "suppress log events on stderr");

    auto* sim = app.add_subcommand("simulate", "generate replicate panels from a VAR DGP");
    sim->fallthrough();
    int sim_m = -1, sim_order = -1, sim_T = -1, sim_reps = -1, sim_burn = -1;
    double sim_radius = -1.0;
    std::string sim_process;
    sim->add_option("--m", sim_m, "number of series");
    sim->add_option("--order", sim_order, "VAR order of the surrogate DGP");
    sim->add_option("--T", sim_T, "observations per panel");
    sim->add_option("--replicates", sim_reps, "number of replicate panels");
    sim->add_option("--burn-in", sim_burn, "burn-in draws to discard");
    sim->add_option("--radius", sim_radius, "companion spectral radius of the surrogate");
    sim->add_option("--process-file", sim_process, "JSON VAR process definition");

    auto* fl = app.add_subcommand("flap", "project base forecasts for one origin");
    fl->fallthrough();
    std::string fl_input, fl_layout, fl_scheme, fl_cov, fl_cov_file;
    int fl_p = -1, fl_H = -1;
    bool fl_std = false, fl_per_h = false;
    fl->add_option("--input", fl_input, "panel CSV");
    fl->add_option("--layout", fl_layout, "wide or long");
    fl->add_flag("--standardize", fl_std, "standardize the panel first");
    fl->add_option("--scheme", fl_scheme, "component scheme (PCA, Norm, ...)");
    fl->add_option("--p", fl_p, "number of components");
    fl->add_option("--horizon", fl_H, "forecast horizon H");
    fl->add_option("--cov", fl_cov, "covariance mode (shrunk, empirical, identity, known)");
    fl->add_option("--cov-file", fl_cov_file, "known covariance CSV");
    fl->add_flag("--per-h", fl_per_h, "estimate the covariance at every horizon");

    auto* ev = app.add_subcommand("evaluate", "expanding-window cross-validation study");
    ev->fallthrough();
    std::string ev_input, ev_layout, ev_cov, ev_schemes, ev_ps, ev_rank_hs;
    int ev_train = -1, ev_H = -1, ev_step = -1;
    double ev_alpha = -1.0;
    bool ev_std = false, ev_per_h = false;
    ev->add_option("--input", ev_input, "panel CSV");
    ev->add_option("--layout", ev_layout, "wide or long");
    ev->add_flag("--standardize", ev_std, "standardize the panel first");
    ev->add_option("--initial-train", ev_train, "first training window length");
    ev->add_option("--horizon", ev_H, "test horizon H");
    ev->add_option("--step", ev_step, "origin step");
    ev->add_option("--alpha", ev_alpha, "rank test level");
    ev->add_option("--schemes", ev_schemes, "comma-separated component schemes");
    ev->add_option("--p-list", ev_ps, "comma-separated component counts");
    ev->add_option("--rank-horizons", ev_rank_hs, "comma-separated horizons for rank tests");
    ev->add_option("--cov", ev_cov, "covariance mode");
    ev->add_flag("--per-h", ev_per_h, "estimate the covariance at every horizon");

    auto* rp = app.add_subcommand("report", "recompute reports from a scores.csv");
    rp->fallthrough();
    std::string rp_scores, rp_rank_hs;
    double rp_alpha = -1.0;
    rp->add_option("--scores", rp_scores, "scores.csv from an evaluate run");
    rp->add_option("--alpha", rp_alpha, "rank test level");
    rp->add_option("--rank-horizons", rp_rank_hs, "comma-separated horizons");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return flap::cli::kExitConfig;
    }

    RunContext ctx;
    try {
        ctx.config = load_config_file(config_path);
        if (ctx.config.contains("seed") && !app.count("--seed"))
            seed = ctx.config.at("seed").get<std::uint64_t>();
        if (ctx.config.contains("threads") && !app.count("--threads"))
            threads = ctx.config.at("threads").get<int>();
        if (output_dir.empty() && ctx.config.contains("output_dir"))
            output_dir = ctx.config.at("output_dir").get<std::string>();
        ctx.seed = seed;
        ctx.threads = flap::resolve_threads(threads);
        ctx.out_dir = resolve_output(output_dir);
        ctx.quiet = quiet;
        ctx.config["seed"] = seed;
        ctx.config["output_dir"] = ctx.out_dir.string();

        auto parse_int_list = [](const std::string& s) {
            std::vector<int> out;
            std::string item;
            std::stringstream ss(s);
            while (std::getline(ss, item, ','))
                if (!item.empty()) out.push_back(std::stoi(item));
            return out;
        };
        auto parse_str_list = [](const std::string& s) {
            std::vector<std::string> out;
            std::string item;
            std::stringstream ss(s);
            while (std::getline(ss, item, ','))
                if (!item.empty()) out.push_back(item);
            return out;
        };

        if (sim->parsed()) {
            auto& j = ctx.config["simulate"];
            if (sim_m > 0) j["m"] = sim_m;
            if (sim_order >= 0) j["order"] = sim_order;
            if (sim_T > 0) j["T"] = sim_T;
            if (sim_reps > 0) j["replicates"] = sim_reps;
            if (sim_burn >= 0) j["burn_in"] = sim_burn;
            if (sim_radius > 0) j["radius"] = sim_radius;
            if (!sim_process.empty()) j["process_file"] = sim_process;
            return flap::cli::run_guarded(ctx, "simulate", flap::cli::cmd_simulate);
        }
        if (fl->parsed()) {
            auto& in = ctx.config["input"];
            if (!fl_input.empty()) in["path"] = fl_input;
            if (!fl_layout.empty()) in["layout"] = fl_layout;
            if (fl_std) in["standardize"] = true;
            auto& j = ctx.config["flap"];
            if (!fl_scheme.empty()) j["scheme"] = fl_scheme;
            if (fl_p >= 0) j["p"] = fl_p;
            if (fl_H > 0) j["horizon"] = fl_H;
            if (!fl_cov.empty()) j["covariance"] = fl_cov;
            if (!fl_cov_file.empty()) j["cov_file"] = fl_cov_file;
            if (fl_per_h) j["proportional"] = false;
            return flap::cli::run_guarded(ctx, "flap", flap::cli::cmd_flap);
        }
        if (ev->parsed()) {
            auto& in = ctx.config["input"];
            if (!ev_input.empty()) in["path"] = ev_input;
            if (!ev_layout.empty()) in["layout"] = ev_layout;
            if (ev_std) in["standardize"] = true;
            auto& j = ctx.config["evaluate"];
            if (ev_train > 0) j["initial_train"] = ev_train;
            if (ev_H > 0) j["H"] = ev_H;
            if (ev_step > 0) j["step"] = ev_step;
            if (ev_alpha > 0) j["alpha"] = ev_alpha;
            if (!ev_cov.empty()) j["covariance"] = ev_cov;
            if (!ev_schemes.empty()) j["schemes"] = parse_str_list(ev_schemes);
            if (!ev_ps.empty()) j["p_values"] = parse_int_list(ev_ps);
            if (!ev_rank_hs.empty()) j["rank_horizons"] = parse_int_list(ev_rank_hs);
            if (ev_per_h) j["proportional"] = false;
            return flap::cli::run_guarded(ctx, "evaluate", flap::cli::cmd_evaluate);
        }
        if (rp->parsed()) {
            auto& j = ctx.config["report"];
            if (!rp_scores.empty()) j["scores"] = rp_scores;
            if (rp_alpha > 0) j["alpha"] = rp_alpha;
            if (!rp_rank_hs.empty()) j["rank_horizons"] = parse_int_list(rp_rank_hs);
            return flap::cli::run_guarded(ctx, "report", flap::cli::cmd_report);
        }
    } catch (const flap::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return flap::cli::kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return flap::cli::kExitNumerical;
    }
    return flap::cli::kExitConfig;
}
