#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flap/cli.hpp"
#include "flap/simulation.hpp"

using namespace flap;
using flap::cli::RunContext;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "flap_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunContext make_ctx(const fs::path& out, nlohmann::json config, std::uint64_t seed = 1) {
    RunContext ctx;
    ctx.out_dir = out;
    ctx.seed = seed;
    ctx.threads = 1;
    ctx.config = std::move(config);
    ctx.quiet = true;
    return ctx;
}

void write_fixture_panel(const fs::path& path, int T, int m, std::uint64_t seed) {
    write_panel(path, simulate(make_surrogate_dgp(m, 1, seed, 0.7), T, 100));
}

}  // namespace

TEST_CASE("simulate writes deterministic replicate panels") {
    nlohmann::json cfg;
    cfg["simulate"] = {{"m", 10}, {"order", 2}, {"T", 300}, {"replicates", 20}};
    const fs::path dir1 = fresh_dir("sim1");
    const fs::path dir2 = fresh_dir("sim2");
    RunContext a = make_ctx(dir1, cfg);
    RunContext b = make_ctx(dir2, cfg);
    flap::cli::cmd_simulate(a);
    flap::cli::cmd_simulate(b);
    for (int i = 0; i < 20; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "panel_%03d.csv", i);
        REQUIRE(fs::exists(dir1 / name));
        REQUIRE(slurp(dir1 / name) == slurp(dir2 / name));
    }
    REQUIRE(fs::exists(dir1 / "process.json"));
    REQUIRE(fs::exists(dir1 / "config.json"));
    REQUIRE(fs::exists(dir1 / "run_info.json"));
}

TEST_CASE("unstable process file exits with the config code") {
    const fs::path dir = fresh_dir("unstable");
    VarProcess bad;
    bad.coefficients.push_back(Eigen::MatrixXd::Constant(1, 1, 1.05));
    bad.intercept = Eigen::VectorXd::Zero(1);
    bad.innovation_cov = Eigen::MatrixXd::Identity(1, 1);
    save_process(dir / "bad_process.json", bad);

    nlohmann::json cfg;
    cfg["simulate"] = {{"process_file", (dir / "bad_process.json").string()}};
    RunContext ctx = make_ctx(dir / "out", cfg);
    fs::create_directories(dir / "out");
    const int code = flap::cli::run_guarded(ctx, "simulate", flap::cli::cmd_simulate);
    REQUIRE(code == flap::cli::kExitConfig);

    // End-to-end through the real binary.
    const std::string cmd = std::string(FLAP_CLI_PATH) + " simulate --process-file " +
                            (dir / "bad_process.json").string() + " --output " +
                            (dir / "out2").string() + " --quiet 2>" + (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    REQUIRE(WEXITSTATUS(status) == flap::cli::kExitConfig);
    REQUIRE(slurp(dir / "stderr.txt").find("StabilityError") != std::string::npos);
}

TEST_CASE("flap with p=0 writes identical base and projected forecasts") {
    const fs::path dir = fresh_dir("flap_p0");
    write_fixture_panel(dir / "panel.csv", 80, 3, 7);
    nlohmann::json cfg;
    cfg["input"] = {{"path", (dir / "panel.csv").string()}};
    cfg["flap"] = {{"p", 0}, {"horizon", 6}, {"covariance", "identity"}, {"scheme", "PCA"}};
    RunContext ctx = make_ctx(dir / "out", cfg);
    flap::cli::cmd_flap(ctx);
    REQUIRE(slurp(dir / "out" / "base_forecasts.csv") ==
            slurp(dir / "out" / "projected_forecasts.csv"));
}

TEST_CASE("identity covariance with a full PCA basis reports m/2") {
    const fs::path dir = fresh_dir("flap_m2");
    const int m = 4;
    write_fixture_panel(dir / "panel.csv", 90, m, 11);
    nlohmann::json cfg;
    cfg["input"] = {{"path", (dir / "panel.csv").string()}};
    cfg["flap"] = {{"p", m}, {"horizon", 4}, {"covariance", "identity"}, {"scheme", "PCA"}};
    RunContext ctx = make_ctx(dir / "out", cfg);
    flap::cli::cmd_flap(ctx);

    std::ifstream in(dir / "out" / "variance_reduction.json");
    nlohmann::json rep;
    in >> rep;
    REQUIRE(std::abs(rep.at("total_reduction").get<double>() - m / 2.0) < 1e-10);
    const auto per = rep.at("per_series_reduction").get<std::vector<double>>();
    for (double v : per) REQUIRE(std::abs(v - 0.5) < 1e-10);
}

TEST_CASE("full flap pipeline on a 10-series fixture is fast") {
    const fs::path dir = fresh_dir("flap_full");
    write_fixture_panel(dir / "panel.csv", 150, 10, 13);
    nlohmann::json cfg;
    cfg["input"] = {{"path", (dir / "panel.csv").string()}};
    cfg["flap"] = {{"p", 10}, {"horizon", 12}, {"covariance", "shrunk"}, {"scheme", "PCA"}};
    RunContext ctx = make_ctx(dir / "out", cfg);
    const auto start = std::chrono::steady_clock::now();
    flap::cli::cmd_flap(ctx);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    REQUIRE(elapsed < 10.0);
    REQUIRE(fs::exists(dir / "out" / "projected_forecasts.csv"));
    REQUIRE(fs::exists(dir / "out" / "covariance.csv"));
    REQUIRE(fs::exists(dir / "out" / "operator" / "M.csv"));
    REQUIRE(fs::exists(dir / "out" / "weights.csv"));

    // Rerunning into the same directory reproduces every file bit-for-bit.
    const std::string before = slurp(dir / "out" / "projected_forecasts.csv") +
                               slurp(dir / "out" / "covariance.csv") +
                               slurp(dir / "out" / "log.jsonl");
    RunContext ctx2 = make_ctx(dir / "out", ctx.config);
    flap::cli::cmd_flap(ctx2);
    const std::string after = slurp(dir / "out" / "projected_forecasts.csv") +
                              slurp(dir / "out" / "covariance.csv") +
                              slurp(dir / "out" / "log.jsonl");
    REQUIRE(before == after);
}

TEST_CASE("degenerate evaluate run warns instead of failing") {
    const fs::path dir = fresh_dir("eval_degenerate");
    write_fixture_panel(dir / "panel.csv", 70, 3, 17);
    nlohmann::json cfg;
    cfg["input"] = {{"path", (dir / "panel.csv").string()}};
    cfg["evaluate"] = {{"initial_train", 60},
                       {"H", 4},
                       {"schemes", {"PCA"}},
                       {"p_values", {0}},
                       {"covariance", "identity"},
                       {"rank_horizons", {1}},
                       {"forecaster", {{"family", "ar"}, {"max_order", 2}}}};
    RunContext ctx = make_ctx(dir / "out", cfg);
    flap::cli::cmd_evaluate(ctx);  // must not throw
    REQUIRE(fs::exists(dir / "out" / "scores.csv"));
    REQUIRE(slurp(dir / "out" / "log.jsonl").find("degenerate_ranks_warning") != std::string::npos);
}

TEST_CASE("evaluate emits scores, ranks and curves; report recomputes them") {
    const fs::path dir = fresh_dir("eval_full");
    write_fixture_panel(dir / "panel.csv", 90, 4, 19);
    nlohmann::json cfg;
    cfg["input"] = {{"path", (dir / "panel.csv").string()}};
    cfg["evaluate"] = {{"initial_train", 78},
                       {"H", 4},
                       {"schemes", {"PCA", "Norm"}},
                       {"p_values", {0, 2, 4}},
                       {"covariance", "shrunk"},
                       {"rank_horizons", {1, 4}},
                       {"forecaster", {{"family", "ar"}, {"max_order", 2}}}};
    RunContext ctx = make_ctx(dir / "out", cfg);
    flap::cli::cmd_evaluate(ctx);
    REQUIRE(fs::exists(dir / "out" / "scores.csv"));
    REQUIRE(fs::exists(dir / "out" / "ranks.json"));
    REQUIRE(fs::exists(dir / "out" / "mse_curves.csv"));

    {
        std::ifstream in(dir / "out" / "ranks.json");
        nlohmann::json ranks;
        in >> ranks;
        REQUIRE(ranks.contains("1"));
        REQUIRE(ranks.at("1").at("methods").size() == 7);  // benchmark + 2 schemes x 3 p
        const auto first = ranks.at("1").at("methods").at(0);
        REQUIRE(first.at("name").get<std::string>() == "AR - Benchmark");
    }
    {
        const auto lines = read_lines(dir / "out" / "mse_curves.csv");
        REQUIRE(lines[0] == "model,weights,p,h,mse");
        // benchmark rows (H) + 2 schemes x 3 p x H horizons
        REQUIRE(lines.size() == 1 + 4 + 2 * 3 * 4);
    }

    nlohmann::json rcfg;
    rcfg["report"] = {{"scores", (dir / "out" / "scores.csv").string()}, {"rank_horizons", {1}}};
    RunContext rctx = make_ctx(dir / "report_out", rcfg);
    flap::cli::cmd_report(rctx);
    REQUIRE(fs::exists(dir / "report_out" / "ranks.json"));
}
