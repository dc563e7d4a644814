#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "flap/covariance.hpp"
#include "flap/errors.hpp"
#include "flap/io.hpp"
#include "flap/weights.hpp"

namespace flap {

/// C = [-Phi | I_p]; coherent augmented vectors satisfy C z = 0.
struct ConstraintMatrix {
    Eigen::MatrixXd c;  // p x (m+p)
    Eigen::Index m = 0;
    Eigen::Index p = 0;
};

/// Exact block assembly; the weights are copied, never transformed.
inline ConstraintMatrix build_constraint(const WeightMatrix& w) {
    ConstraintMatrix out;
    out.m = w.m();
    out.p = w.p();
    out.c.resize(out.p, out.m + out.p);
    out.c.leftCols(out.m) = -w.weights;
    out.c.rightCols(out.p) = Eigen::MatrixXd::Identity(out.p, out.p);
    return out;
}

struct ConditionReport {
    double condition = 1.0;       // estimate for C W C'
    bool ill_conditioned = false; // condition > 1e12; computation proceeded
    bool symmetrized = false;     // input W asymmetric beyond tolerance
    bool rank_deficient = false;  // C W C' singular; pseudo-inverse solve used
};

namespace detail {

inline constexpr double kIllConditionThreshold = 1e12;

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& w, ConditionReport* report) {
    const double asym = (w - w.transpose()).norm();
    if (report && asym > 1e-8 * w.norm()) report->symmetrized = true;
    return (w + w.transpose()) / 2.0;
}

/// Solves A X = B for symmetric PSD A. Cholesky when A is PD; a
/// rank-revealing fallback otherwise, which yields the correct reduction
/// and projection whenever B lies in the range of A (always true for the
/// systems built here).
inline Eigen::MatrixXd solve_psd(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                 ConditionReport* report) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
        const double rcond = llt.rcond();
        if (report) {
            report->condition = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
            if (report->condition > kIllConditionThreshold) report->ill_conditioned = true;
        }
        return llt.solve(b);
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    if (report) {
        report->rank_deficient = cod.rank() < a.rows();
        report->condition = std::numeric_limits<double>::infinity();
        report->ill_conditioned = true;
    }
    return cod.solve(b);
}

/// W C' (C W C')^{-1} C W, the error-variance reduction for the augmented
/// vector.
inline Eigen::MatrixXd reduction_matrix(const ConstraintMatrix& c, const Eigen::MatrixXd& w,
                                        ConditionReport* report) {
    if (c.p == 0) return Eigen::MatrixXd::Zero(w.rows(), w.cols());
    const Eigen::MatrixXd cw = c.c * w;                 // p x (m+p)
    const Eigen::MatrixXd a = cw * c.c.transpose();     // p x p
    const Eigen::MatrixXd x = solve_psd(a, cw, report); // (CWC')^{-1} C W
    Eigen::MatrixXd r = cw.transpose() * x;
    return ((r + r.transpose()) / 2.0).eval();
}

}  // namespace detail

/// The FLAP map, in both of its algebraically equivalent forms:
///   mmat = I - W C'(C W C')^{-1} C        (acts on the augmented vector)
///   gmat = (S' W^{-1} S)^{-1} S' W^{-1}   (maps straight to the originals)
/// with smat = [I_m; Phi], so that mmat = smat * gmat.
struct ProjectionOperator {
    Eigen::MatrixXd mmat;  // (m+p) x (m+p)
    Eigen::MatrixXd gmat;  // m x (m+p)
    Eigen::MatrixXd smat;  // (m+p) x m
    CovarianceEstimate w;
    ConditionReport condition_report;
    Eigen::Index m = 0;
    Eigen::Index p = 0;
};

struct BuildOptions {
    double ridge = 0.0;  // optional epsilon*I added to W before factorization
};

/// Builds the projection operator from the constraint and the base-forecast
/// error covariance. All linear systems go through Cholesky solves;
/// no matrix is explicitly inverted.
inline ProjectionOperator build_projection(const ConstraintMatrix& c, const CovarianceEstimate& west,
                                           const BuildOptions& opts = {}) {
    const Eigen::Index n = c.m + c.p;
    if (west.dim() != n)
        throw DimensionError("build_projection: covariance is " + std::to_string(west.dim()) +
                             "-dimensional, constraint expects " + std::to_string(n));
    ProjectionOperator op;
    op.m = c.m;
    op.p = c.p;
    op.w = west;

    Eigen::MatrixXd w = detail::symmetrized(west.w, &op.condition_report);
    if (opts.ridge > 0.0) w += opts.ridge * Eigen::MatrixXd::Identity(n, n);

    Eigen::LLT<Eigen::MatrixXd> llt_w(w);
    if (llt_w.info() != Eigen::Success)
        throw CovarianceNotPDError("build_projection: covariance is not positive definite");

    op.smat.resize(n, c.m);
    op.smat.topRows(c.m) = Eigen::MatrixXd::Identity(c.m, c.m);
    if (c.p > 0) op.smat.bottomRows(c.p) = -c.c.leftCols(c.m);  // Phi

    if (c.p == 0) {
        op.mmat = Eigen::MatrixXd::Identity(n, n);
        op.gmat = Eigen::MatrixXd::Identity(c.m, c.m);
        return op;
    }

    const Eigen::MatrixXd cw = c.c * w;
    const Eigen::MatrixXd a = cw * c.c.transpose();
    const Eigen::MatrixXd y = detail::solve_psd(a, Eigen::MatrixXd(c.c), &op.condition_report);
    op.mmat = Eigen::MatrixXd::Identity(n, n) - cw.transpose() * y;

    const Eigen::MatrixXd v = llt_w.solve(op.smat);              // W^{-1} S
    const Eigen::MatrixXd h = op.smat.transpose() * v;           // S' W^{-1} S
    Eigen::LLT<Eigen::MatrixXd> llt_h(((h + h.transpose()) / 2.0).eval());
    if (llt_h.info() != Eigen::Success)
        throw CovarianceNotPDError("build_projection: S' W^{-1} S is not positive definite");
    op.gmat = llt_h.solve(v.transpose());
    return op;
}

struct Projected {
    Eigen::VectorXd ztilde;  // coherent augmented forecast
    Eigen::VectorXd ytilde;  // first m entries, also gmat * zhat
};

/// Applies the FLAP map to one base forecast vector. ztilde comes from the
/// M route, ytilde from the cheaper G route; the two agree on the first m
/// entries up to solver round-off.
inline Projected project(const ProjectionOperator& op, const Eigen::VectorXd& zhat) {
    if (zhat.size() != op.m + op.p)
        throw DimensionError("project: forecast vector has wrong length");
    Projected out;
    out.ztilde = op.mmat * zhat;
    out.ytilde = op.gmat * zhat;
    return out;
}

/// Row-wise G route for an H x (m+p) forecast matrix; returns H x m
/// projected forecasts of the original series.
inline Eigen::MatrixXd project_to_originals(const ProjectionOperator& op,
                                            const Eigen::MatrixXd& zhat) {
    if (zhat.cols() != op.m + op.p)
        throw DimensionError("project_to_originals: forecast matrix has wrong width");
    return (op.gmat * zhat.transpose()).transpose();
}

struct PositivityResult {
    bool positive = false;
    double residual_norm = 0.0;
};

/// Whether the component at `index` (0-based) adds a strictly positive
/// variance reduction on top of the components before it. The discrepancy
/// vector is psi_i M+ W J' from the incremental-reduction expansion; the
/// component is beneficial exactly when it is nonzero. Zero means the
/// component's error is a linear image of information already used.
inline PositivityResult positivity_condition(const ConstraintMatrix& c, const CovarianceEstimate& west,
                                             Eigen::Index index) {
    if (index < 0 || index >= c.p)
        throw DimensionError("positivity_condition: component index out of range");
    if (west.dim() != c.m + c.p)
        throw DimensionError("positivity_condition: covariance dimension mismatch");
    const Eigen::MatrixXd w = detail::symmetrized(west.w, nullptr);
    const Eigen::Index d = c.m + index + 1;  // originals plus components 0..index
    const Eigen::MatrixXd wi = w.topLeftCorner(d, d);

    Eigen::RowVectorXd psi = Eigen::RowVectorXd::Zero(d);
    psi.head(c.m) = c.c.row(index).head(c.m);  // -phi_i
    psi[d - 1] = 1.0;

    Eigen::RowVectorXd discrepancy(c.m);
    if (index == 0) {
        discrepancy = (psi * wi).head(c.m);
    } else {
        Eigen::MatrixXd cbar(index, d);
        cbar.leftCols(c.m + index) = c.c.topLeftCorner(index, c.m + index);
        cbar.col(d - 1).setZero();
        const Eigen::MatrixXd cw = cbar * wi;
        const Eigen::MatrixXd a = cw * cbar.transpose();
        const Eigen::MatrixXd x = detail::solve_psd(a, cw, nullptr);
        const Eigen::MatrixXd mw = wi - cw.transpose() * x;  // M+ W
        discrepancy = (psi * mw).head(c.m);
    }
    PositivityResult res;
    res.residual_norm = discrepancy.norm();
    res.positive = res.residual_norm > 1e-8 * w.norm();
    return res;
}

/// Diagnostics for the variance-reduction guarantees: the per-series
/// reduction diagonal, its trace, the projected error covariance
/// J M W J', and the per-component positivity condition.
struct VarianceReductionReport {
    Eigen::VectorXd per_series_reduction;  // m
    double total_reduction = 0.0;
    Eigen::MatrixXd projected_variance;  // m x m
    std::vector<bool> positivity_flags;  // p entries
    ConditionReport condition_report;
};

inline VarianceReductionReport variance_reduction(const ConstraintMatrix& c,
                                                  const CovarianceEstimate& west,
                                                  bool with_positivity = true) {
    if (west.dim() != c.m + c.p)
        throw DimensionError("variance_reduction: covariance dimension mismatch");
    VarianceReductionReport rep;
    const Eigen::MatrixXd w = detail::symmetrized(west.w, &rep.condition_report);
    const Eigen::MatrixXd red = detail::reduction_matrix(c, w, &rep.condition_report);
    rep.per_series_reduction = red.topLeftCorner(c.m, c.m).diagonal();
    rep.total_reduction = rep.per_series_reduction.sum();
    rep.projected_variance =
        w.topLeftCorner(c.m, c.m) - red.topLeftCorner(c.m, c.m);
    if (with_positivity)
        for (Eigen::Index i = 0; i < c.p; ++i)
            rep.positivity_flags.push_back(positivity_condition(c, west, i).positive);
    return rep;
}

/// Per-step per-series reductions for a nested sequence of components with
/// consistently nested covariances, plus the deltas between consecutive
/// steps. Any delta entry below -tolerance is flagged.
struct MonotonicityReport {
    std::vector<Eigen::VectorXd> per_series;  // one m-vector per step
    std::vector<Eigen::VectorXd> deltas;      // steps-1 m-vectors
    bool violation = false;
    double worst_delta = 0.0;
};

inline MonotonicityReport monotonicity_check(
    const std::vector<std::pair<ConstraintMatrix, CovarianceEstimate>>& steps,
    double tolerance = 1e-8) {
    if (steps.empty()) throw DimensionError("monotonicity_check: no steps given");
    const Eigen::Index m = steps.front().first.m;
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const auto& [c, w] = steps[k];
        if (c.m != m) throw NestingError("monotonicity_check: series count changes at step " +
                                         std::to_string(k));
        if (w.dim() != c.m + c.p)
            throw DimensionError("monotonicity_check: covariance dimension mismatch at step " +
                                 std::to_string(k));
        if (k > 0) {
            const auto& [cp, wp] = steps[k - 1];
            if (c.p < cp.p)
                throw NestingError("monotonicity_check: component count shrinks at step " +
                                   std::to_string(k));
            const Eigen::MatrixXd prev_phi = -cp.c.leftCols(m);
            const Eigen::MatrixXd head_phi = -c.c.topLeftCorner(cp.p, m);
            if ((prev_phi - head_phi).lpNorm<Eigen::Infinity>() > 1e-10)
                throw NestingError("monotonicity_check: weights are not nested at step " +
                                   std::to_string(k));
            const Eigen::MatrixXd sub = w.w.topLeftCorner(wp.dim(), wp.dim());
            if ((sub - wp.w).lpNorm<Eigen::Infinity>() > 1e-10)
                throw NestingError("monotonicity_check: covariances are not nested at step " +
                                   std::to_string(k));
        }
    }

    MonotonicityReport rep;
    for (const auto& [c, w] : steps) {
        const Eigen::MatrixXd wsym = detail::symmetrized(w.w, nullptr);
        const Eigen::MatrixXd red = detail::reduction_matrix(c, wsym, nullptr);
        rep.per_series.push_back(red.topLeftCorner(m, m).diagonal());
    }
    for (std::size_t k = 1; k < rep.per_series.size(); ++k) {
        Eigen::VectorXd d = rep.per_series[k] - rep.per_series[k - 1];
        rep.worst_delta = std::min(rep.worst_delta, d.minCoeff());
        if (d.minCoeff() < -tolerance) rep.violation = true;
        rep.deltas.push_back(std::move(d));
    }
    return rep;
}

/// Audit dump: M, G and C as plain CSV in a directory.
inline void write_operator_bundle(const std::filesystem::path& dir, const ProjectionOperator& op,
                                  const ConstraintMatrix& c) {
    std::filesystem::create_directories(dir);
    write_matrix_csv(dir / "M.csv", op.mmat);
    write_matrix_csv(dir / "G.csv", op.gmat);
    write_matrix_csv(dir / "C.csv", c.c);
}

inline void write_reduction_json(const std::filesystem::path& path,
                                 const VarianceReductionReport& rep) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path.string());
    out << "{\n  \"total_reduction\": " << format_double(rep.total_reduction)
        << ",\n  \"per_series_reduction\": [";
    for (Eigen::Index i = 0; i < rep.per_series_reduction.size(); ++i)
        out << (i ? "," : "") << format_double(rep.per_series_reduction[i]);
    out << "],\n  \"condition\": " << format_double(rep.condition_report.condition)
        << ",\n  \"ill_conditioned\": " << (rep.condition_report.ill_conditioned ? "true" : "false")
        << ",\n  \"positivity\": [";
    for (std::size_t i = 0; i < rep.positivity_flags.size(); ++i)
        out << (i ? "," : "") << (rep.positivity_flags[i] ? "true" : "false");
    out << "]\n}\n";
}

}  // namespace flap
