#pragma once

#include <Eigen/Dense>
#include <string>

namespace ppd {

/// minimize ½ xᵀHx + gᵀx  subject to  Ax = b,  Cx ≤ d.
/// H must be symmetric positive-semidefinite; the solver regularizes
/// internally when its Cholesky factorization fails.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd A;  // p x n, may have zero rows
  Eigen::VectorXd b;
  Eigen::MatrixXd C;  // q x n, may have zero rows
  Eigen::VectorXd d;

  int n() const { return static_cast<int>(g.size()); }
  int p() const { return static_cast<int>(b.size()); }
  int q() const { return static_cast<int>(d.size()); }

  /// Throws on inconsistent dimensions or asymmetric H (tolerance 1e-12).
  void validate() const;

  double objective(const Eigen::VectorXd& x) const {
    return 0.5 * x.dot(H * x) + g.dot(x);
  }
};

enum class QpStatus { optimal, infeasible, max_iterations };

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd eq_multipliers;    // free sign
  Eigen::VectorXd ineq_multipliers;  // >= 0 at optimality
  QpStatus status = QpStatus::infeasible;
  int iterations = 0;
};

/// First-order optimality residuals of a candidate solution. All five are
/// near zero at an optimum.
struct KktResiduals {
  double stationarity = 0.0;      // ‖Hx + g + Aᵀλ + Cᵀμ‖∞
  double eq_feasibility = 0.0;    // ‖Ax − b‖∞
  double ineq_feasibility = 0.0;  // max(Cx − d, 0)
  double dual_feasibility = 0.0;  // max(−μ, 0)
  double complementarity = 0.0;   // max |μᵢ (Cx − d)ᵢ|
  double max() const;
};

KktResiduals kkt_residuals(const QpProblem& problem, const QpSolution& solution);

/// Dense dual active-set solver. Instances are single-threaded but reusable;
/// problems and solutions are plain values. A warm start from an earlier
/// solution of a similar problem first tries that solution's active set as a
/// direct KKT solve and falls back to a cold solve when it does not verify.
class QpSolver {
 public:
  double tolerance = 1e-8;
  int max_iterations = 200;

  QpSolution solve(const QpProblem& problem, const QpSolution* warm_start = nullptr) const;
};

/// Text dump of one problem for offline inspection; loadable back.
void dump_qp(const QpProblem& problem, const std::string& path);
QpProblem load_qp(const std::string& path);

}  // namespace ppd
