#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "flap/covariance.hpp"
#include "flap/projection.hpp"
#include "flap/rng.hpp"
#include "oracles.hpp"

using namespace flap;

namespace {

Eigen::MatrixXd random_residuals(int n, int d, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd e(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) e(i, j) = rng.normal() * (1.0 + 0.3 * j);
    return e;
}

}  // namespace

TEST_CASE("empirical covariance matches hand arithmetic on the 3x2 fixture") {
    Eigen::MatrixXd e(3, 2);
    e << 1, 0, -1, 1, 0, -1;
    const CovarianceEstimate est = empirical_cov(make_residual_matrix(e, 1));
    // Columns are already mean zero; divisor n-1 = 2.
    REQUIRE(std::abs(est.w(0, 0) - 1.0) < 1e-14);
    REQUIRE(std::abs(est.w(1, 1) - 1.0) < 1e-14);
    REQUIRE(std::abs(est.w(0, 1) + 0.5) < 1e-14);
    REQUIRE(est.kind == CovKind::Empirical);
}

TEST_CASE("identical residual columns give a rank-deficient covariance") {
    Eigen::MatrixXd e(10, 2);
    Rng rng(3);
    for (int i = 0; i < 10; ++i) {
        e(i, 0) = rng.normal();
        e(i, 1) = e(i, 0);
    }
    const CovarianceEstimate est = empirical_cov(make_residual_matrix(e, 1));
    REQUIRE(std::abs(est.w(0, 1) - est.w(0, 0)) < 1e-14);
    REQUIRE(std::abs(est.w(1, 1) - est.w(0, 0)) < 1e-14);
}

TEST_CASE("empirical covariance is singular when rows cannot span the columns") {
    const Eigen::MatrixXd e = random_residuals(4, 5, 9);  // n = d - 1
    const CovarianceEstimate est = empirical_cov(make_residual_matrix(e, 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(est.w);
    REQUIRE(es.eigenvalues().minCoeff() <= 1e-12 * est.w.trace());
}

TEST_CASE("shrinkage matches the independent reference implementation") {
    SECTION("fixed 10x4 fixture") {
        const Eigen::MatrixXd e = random_residuals(10, 4, 42);
        const CovarianceEstimate est = shrink_cov(make_residual_matrix(e, 1));
        const oracle::ShrinkReference ref = oracle::shrink_reference(e);
        REQUIRE(std::abs(est.lambdas->lambda_cor - ref.lambda_cor) < 1e-10);
        REQUIRE(std::abs(est.lambdas->lambda_var - ref.lambda_var) < 1e-10);
        REQUIRE((est.w - ref.w).lpNorm<Eigen::Infinity>() < 1e-10);
    }
    SECTION("20 random fixtures of varied shape") {
        for (int rep = 0; rep < 20; ++rep) {
            const int n = 5 + rep;
            const int d = 2 + rep % 6;
            const Eigen::MatrixXd e = random_residuals(n, d, 100 + static_cast<std::uint64_t>(rep));
            const CovarianceEstimate est = shrink_cov(make_residual_matrix(e, 1));
            const oracle::ShrinkReference ref = oracle::shrink_reference(e);
            REQUIRE(std::abs(est.lambdas->lambda_cor - ref.lambda_cor) < 1e-10);
            REQUIRE(std::abs(est.lambdas->lambda_var - ref.lambda_var) < 1e-10);
            REQUIRE((est.w - ref.w).lpNorm<Eigen::Infinity>() < 1e-10);
            REQUIRE(est.lambdas->lambda_cor >= 0.0);
            REQUIRE(est.lambdas->lambda_cor <= 1.0);
            REQUIRE(est.lambdas->lambda_var >= 0.0);
            REQUIRE(est.lambdas->lambda_var <= 1.0);
        }
    }
}

TEST_CASE("shrinkage is PD when the empirical estimate is singular") {
    const Eigen::MatrixXd e = random_residuals(20, 40, 7);  // d = 2n
    const CovarianceEstimate est = shrink_cov(make_residual_matrix(e, 1));
    Eigen::LLT<Eigen::MatrixXd> llt(est.w);
    REQUIRE(llt.info() == Eigen::Success);

    const CovarianceEstimate emp = empirical_cov(make_residual_matrix(e, 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(emp.w);
    REQUIRE(es.eigenvalues().minCoeff() <= 1e-10 * emp.w.trace());
}

TEST_CASE("independent columns shrink correlations toward zero") {
    Rng rng(11);
    const int n = 400, d = 4;
    Eigen::MatrixXd e(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) e(i, j) = rng.normal();
    const CovarianceEstimate shr = shrink_cov(make_residual_matrix(e, 1));
    const CovarianceEstimate emp = empirical_cov(make_residual_matrix(e, 1));
    REQUIRE(shr.lambdas->lambda_cor > 0.5);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (i != j) REQUIRE(std::abs(shr.w(i, j)) < std::abs(emp.w(i, j)));
}

TEST_CASE("forced intensities recover the limiting cases") {
    const Eigen::MatrixXd e = random_residuals(12, 3, 5);
    const ResidualMatrix r = make_residual_matrix(e, 1);
    const CovarianceEstimate emp = empirical_cov(r);

    const CovarianceEstimate none = shrink_cov_with(r, 0.0, 0.0);
    REQUIRE((none.w - emp.w).lpNorm<Eigen::Infinity>() < 1e-12);  // lambda = 0 is empirical

    const CovarianceEstimate full = shrink_cov_with(r, 1.0, 0.0);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j) REQUIRE(full.w(i, j) == 0.0);  // lambda_cor = 1 kills off-diagonals
    REQUIRE(std::abs(full.w(1, 1) - emp.w(1, 1)) < 1e-12);
}

TEST_CASE("degenerate residuals are rejected or fully shrunk") {
    Eigen::MatrixXd constant = Eigen::MatrixXd::Ones(6, 3);
    REQUIRE_THROWS_AS(shrink_cov(make_residual_matrix(constant, 1)), DegenerateResidualsError);

    // Equal variances make the lambda_var denominator zero: full shrinkage
    // plus a warning, not an error.
    Eigen::MatrixXd e(4, 2);
    e << 1, 1, -1, -1, 1, -1, -1, 1;  // both columns have variance 4/3, correlation 0
    const CovarianceEstimate est = shrink_cov(make_residual_matrix(e, 1));
    REQUIRE(est.lambdas->lambda_var == 1.0);
    REQUIRE_FALSE(est.warnings.empty());
}

TEST_CASE("all outputs are symmetric") {
    for (int rep = 0; rep < 5; ++rep) {
        const Eigen::MatrixXd e = random_residuals(15, 6, 300 + static_cast<std::uint64_t>(rep));
        const CovarianceEstimate emp = empirical_cov(make_residual_matrix(e, 1));
        const CovarianceEstimate shr = shrink_cov(make_residual_matrix(e, 1));
        REQUIRE((emp.w - emp.w.transpose()).lpNorm<Eigen::Infinity>() < 1e-12);
        REQUIRE((shr.w - shr.w.transpose()).lpNorm<Eigen::Infinity>() < 1e-12);
    }
}

TEST_CASE("proportional covariance leaves the projection unchanged") {
    const WeightMatrix wm = random_weights(3, 2, RandomDist::Normal, 21);
    const ConstraintMatrix c = build_constraint(wm);
    const Eigen::MatrixXd e = random_residuals(30, 5, 13);
    const CovarianceEstimate w1 = shrink_cov(make_residual_matrix(e, 1));

    SECTION("retagged estimate gives a bit-identical operator") {
        const CovarianceEstimate w6 = proportional_w(w1, 6);
        REQUIRE(w6.kind == CovKind::ProportionalToH1);
        REQUIRE(w6.horizon == 6);
        REQUIRE(w6.w == w1.w);
        const ProjectionOperator a = build_projection(c, w1);
        const ProjectionOperator b = build_projection(c, w6);
        REQUIRE(a.mmat == b.mmat);
        REQUIRE(a.gmat == b.gmat);
    }
    SECTION("h = 1 is the identity operation") {
        const CovarianceEstimate same = proportional_w(w1, 1);
        REQUIRE(same.kind == w1.kind);
        REQUIRE(same.w == w1.w);
    }
    SECTION("manual scaling changes nothing up to round-off") {
        CovarianceEstimate scaled = w1;
        scaled.w *= 7.3;
        const ProjectionOperator a = build_projection(c, w1);
        const ProjectionOperator b = build_projection(c, scaled);
        REQUIRE((a.mmat - b.mmat).lpNorm<Eigen::Infinity>() < 1e-10);
    }
    SECTION("requires a horizon-1 base") {
        CovarianceEstimate w2 = w1;
        w2.horizon = 2;
        REQUIRE_THROWS_AS(proportional_w(w2, 5), ConfigError);
    }
}

TEST_CASE("covariance serialization carries the sidecar") {
    const Eigen::MatrixXd e = random_residuals(12, 3, 77);
    const CovarianceEstimate est = shrink_cov(make_residual_matrix(e, 4));
    const auto path = std::filesystem::temp_directory_path() / "flap_cov.csv";
    save_covariance(path, est);
    const Eigen::MatrixXd back = read_matrix_csv(path);
    REQUIRE(back == est.w);
    const auto lines = read_lines(path.string() + ".json");
    std::string all;
    for (const auto& l : lines) all += l;
    REQUIRE(all.find("\"kind\": \"shrunk\"") != std::string::npos);
    REQUIRE(all.find("\"horizon\": 4") != std::string::npos);
    REQUIRE(all.find("lambda_cor") != std::string::npos);
}
