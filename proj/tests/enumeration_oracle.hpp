#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "ppd/qp.hpp"

namespace ppd::testing {

/// Exhaustive reference solver: tries every subset of inequalities as the
/// active set, solves the equality-constrained KKT system for that subset and
/// keeps the best feasible candidate with nonnegative multipliers.  Exponential
/// in the inequality count, so only usable for tiny problems, which is exactly
/// what makes it an independent check.
struct EnumerationResult {
    bool found = false;
    double objective = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x;
};

inline EnumerationResult enumerate_active_sets(const QpProblem& problem) {
    const int n = problem.n();
    const int p = problem.p();
    const int q = problem.q();
    EnumerationResult best;
    for (unsigned mask = 0; mask < (1u << q); ++mask) {
        std::vector<int> active;
        for (int i = 0; i < q; ++i) {
            if (mask & (1u << i)) active.push_back(i);
        }
        const int m = static_cast<int>(active.size());
        const int dim = n + p + m;
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::VectorXd rhs(dim);
        kkt.topLeftCorner(n, n) = problem.H;
        rhs.head(n) = -problem.g;
        if (p > 0) {
            kkt.block(n, 0, p, n) = problem.A;
            kkt.block(0, n, n, p) = problem.A.transpose();
            rhs.segment(n, p) = problem.b;
        }
        for (int j = 0; j < m; ++j) {
            kkt.block(n + p + j, 0, 1, n) = problem.C.row(active[j]);
            kkt.block(0, n + p + j, n, 1) = problem.C.row(active[j]).transpose();
            rhs(n + p + j) = problem.d(active[j]);
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
        if (!lu.isInvertible()) continue;
        Eigen::VectorXd sol = lu.solve(rhs);
        if ((kkt * sol - rhs).cwiseAbs().maxCoeff() > 1e-9) continue;
        Eigen::VectorXd x = sol.head(n);
        bool ok = true;
        for (int j = 0; j < m; ++j) {
            if (sol(n + p + j) < -1e-9) ok = false;  // multiplier sign
        }
        if (q > 0 && ok) {
            Eigen::VectorXd slack = problem.C * x - problem.d;
            if (slack.maxCoeff() > 1e-9) ok = false;  // primal feasibility
        }
        if (p > 0 && ok) {
            if ((problem.A * x - problem.b).cwiseAbs().maxCoeff() > 1e-9) ok = false;
        }
        if (!ok) continue;
        const double obj = problem.objective(x);
        if (obj < best.objective) {
            best.found = true;
            best.objective = obj;
            best.x = x;
        }
    }
    return best;
}

}  // namespace ppd::testing
