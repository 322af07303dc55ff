#include "ppd/qp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ppd {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Cholesky of H, regularized with 1e-9·I when H is only semidefinite.
Eigen::LLT<Eigen::MatrixXd> factor_hessian(const Eigen::MatrixXd& H) {
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  const double scale = std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
  bool healthy = llt.info() == Eigen::Success;
  if (healthy) {
    const Eigen::VectorXd pivots = llt.matrixLLT().diagonal();
    healthy = pivots.minCoeff() > 1e-10 * std::sqrt(scale);
  }
  if (!healthy) {
    Eigen::MatrixXd reg = H;
    reg.diagonal().array() += 1e-9 * scale;
    llt.compute(reg);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("qp: Hessian is not positive semidefinite");
  }
  return llt;
}

/// One member of the working set. The solver-internal constraint form is
/// normalᵀx ≥ offset; inequality rows Cx ≤ d enter negated, equality rows
/// with whichever sign made them violated-from-below when added.
struct ActiveEntry {
  int index = 0;  // row in A (equality) or C (inequality)
  bool equality = false;
  double sign = 1.0;  // equality rows only
};

struct Workspace {
  const QpProblem* problem = nullptr;
  const Eigen::LLT<Eigen::MatrixXd>* llt = nullptr;

  Eigen::VectorXd x;
  std::vector<ActiveEntry> active;
  std::vector<double> u;  // multipliers aligned with `active`

  Eigen::VectorXd normal_of(const ActiveEntry& entry) const {
    if (entry.equality) return entry.sign * problem->A.row(entry.index).transpose();
    return -problem->C.row(entry.index).transpose();
  }
};

/// Inner loop of the dual active-set method: drive one violated constraint
/// (already expressed as normalᵀx ≥ offset with normalᵀx − offset = s < 0)
/// into the working set, dropping blocking members as needed. Returns false
/// when the problem is infeasible, and counts every add/drop against
/// `iterations`.
bool drive_in(Workspace& ws, const Eigen::VectorXd& normal, double offset, bool equality,
              double sign, int index, double tol, int max_iterations, int& iterations) {
  double u_plus = 0.0;
  while (true) {
    if (iterations >= max_iterations) return true;  // caller checks the budget
    ++iterations;

    const int m = static_cast<int>(ws.active.size());
    const Eigen::VectorXd hn = ws.llt->solve(normal);

    Eigen::VectorXd r(m), z;
    if (m > 0) {
      Eigen::MatrixXd N(ws.x.size(), m);
      for (int j = 0; j < m; ++j) N.col(j) = ws.normal_of(ws.active[j]);
      const Eigen::MatrixXd B = ws.llt->solve(N);
      r = (N.transpose() * B).ldlt().solve(B.transpose() * normal);
      z = hn - B * r;
    } else {
      z = hn;
    }

    const double s = normal.dot(ws.x) - offset;
    const double zn = z.dot(normal);

    double t2 = kInfinity;
    if (zn > tol) t2 = -s / zn;

    double t1 = kInfinity;
    int blocking = -1;
    for (int j = 0; j < m; ++j) {
      if (ws.active[j].equality || r[j] <= tol) continue;
      const double ratio = ws.u[j] / r[j];
      if (ratio < t1 - tol) {  // strict improvement keeps ties at lowest index
        t1 = ratio;
        blocking = j;
      }
    }

    const double t = std::min(t1, t2);
    if (t == kInfinity) return false;  // dual unbounded: no feasible point

    if (t > 0.0) {
      ws.x += t * z;
      for (int j = 0; j < m; ++j) ws.u[j] -= t * r[j];
      u_plus += t;
    }

    if (t == t2 && t2 <= t1) {
      ws.active.push_back({index, equality, sign});
      ws.u.push_back(u_plus);
      return true;
    }
    // dual-only step: evict the blocker and keep driving the same constraint
    ws.active.erase(ws.active.begin() + blocking);
    ws.u.erase(ws.u.begin() + blocking);
  }
}

QpSolution extract(const Workspace& ws, const QpProblem& problem, QpStatus status,
                   int iterations) {
  QpSolution solution;
  solution.x = ws.x;
  solution.eq_multipliers = Eigen::VectorXd::Zero(problem.p());
  solution.ineq_multipliers = Eigen::VectorXd::Zero(problem.q());
  for (std::size_t j = 0; j < ws.active.size(); ++j) {
    const ActiveEntry& entry = ws.active[j];
    if (entry.equality)
      solution.eq_multipliers[entry.index] = -entry.sign * ws.u[j];
    else
      solution.ineq_multipliers[entry.index] = ws.u[j];
  }
  solution.status = status;
  solution.iterations = iterations;
  return solution;
}

/// Try the warm start's active set as a direct KKT solve; empty on failure.
std::optional<QpSolution> try_warm_start(const QpProblem& problem, const QpSolution& warm,
                                         double tol) {
  if (warm.ineq_multipliers.size() != problem.q()) return std::nullopt;

  std::vector<int> working;
  for (int i = 0; i < problem.q(); ++i)
    if (warm.ineq_multipliers[i] > tol) working.push_back(i);

  const int n = problem.n();
  const int p = problem.p();
  const int w = static_cast<int>(working.size());
  const int dim = n + p + w;

  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs(dim);
  K.topLeftCorner(n, n) = problem.H;
  rhs.head(n) = -problem.g;
  if (p > 0) {
    K.block(0, n, n, p) = problem.A.transpose();
    K.block(n, 0, p, n) = problem.A;
    rhs.segment(n, p) = problem.b;
  }
  for (int j = 0; j < w; ++j) {
    K.block(0, n + p + j, n, 1) = problem.C.row(working[j]).transpose();
    K.block(n + p + j, 0, 1, n) = problem.C.row(working[j]);
    rhs[n + p + j] = problem.d[working[j]];
  }

  const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  if (!lu.isInvertible()) return std::nullopt;
  const Eigen::VectorXd y = lu.solve(rhs);

  QpSolution solution;
  solution.x = y.head(n);
  solution.eq_multipliers = y.segment(n, p);
  solution.ineq_multipliers = Eigen::VectorXd::Zero(problem.q());
  for (int j = 0; j < w; ++j) solution.ineq_multipliers[working[j]] = y[n + p + j];
  solution.status = QpStatus::optimal;
  solution.iterations = 1;

  if (kkt_residuals(problem, solution).max() > tol) return std::nullopt;
  return solution;
}

}  // namespace

void QpProblem::validate() const {
  const int vars = n();
  if (H.rows() != vars || H.cols() != vars)
    throw std::invalid_argument("qp: H dimensions do not match g");
  if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("qp: H must be symmetric");
  if (A.rows() != p() || (p() > 0 && A.cols() != vars))
    throw std::invalid_argument("qp: A/b dimensions inconsistent");
  if (C.rows() != q() || (q() > 0 && C.cols() != vars))
    throw std::invalid_argument("qp: C/d dimensions inconsistent");
}

double KktResiduals::max() const {
  return std::max({stationarity, eq_feasibility, ineq_feasibility, dual_feasibility,
                   complementarity});
}

KktResiduals kkt_residuals(const QpProblem& problem, const QpSolution& solution) {
  KktResiduals res;
  Eigen::VectorXd grad = problem.H * solution.x + problem.g;
  if (problem.p() > 0) grad += problem.A.transpose() * solution.eq_multipliers;
  if (problem.q() > 0) grad += problem.C.transpose() * solution.ineq_multipliers;
  res.stationarity = grad.cwiseAbs().maxCoeff();

  if (problem.p() > 0)
    res.eq_feasibility = (problem.A * solution.x - problem.b).cwiseAbs().maxCoeff();
  if (problem.q() > 0) {
    const Eigen::VectorXd slack = problem.C * solution.x - problem.d;
    res.ineq_feasibility = std::max(0.0, slack.maxCoeff());
    res.dual_feasibility = std::max(0.0, -solution.ineq_multipliers.minCoeff());
    res.complementarity =
        (solution.ineq_multipliers.array() * slack.array()).abs().maxCoeff();
  }
  return res;
}

QpSolution QpSolver::solve(const QpProblem& problem, const QpSolution* warm_start) const {
  problem.validate();

  if (warm_start && warm_start->status == QpStatus::optimal) {
    if (auto fast = try_warm_start(problem, *warm_start, tolerance)) return *fast;
  }

  const Eigen::LLT<Eigen::MatrixXd> llt = factor_hessian(problem.H);

  Workspace ws;
  ws.problem = &problem;
  ws.llt = &llt;
  ws.x = llt.solve(-problem.g);

  int iterations = 0;

  // Equalities enter the working set first and are never dropped. Each is
  // oriented so it is violated from below, matching the inequality machinery.
  for (int i = 0; i < problem.p(); ++i) {
    const double s0 = problem.A.row(i).dot(ws.x) - problem.b[i];
    const double sign = s0 > 0.0 ? -1.0 : 1.0;
    const Eigen::VectorXd normal = sign * problem.A.row(i).transpose();
    const double offset = sign * problem.b[i];

    if (std::abs(s0) <= tolerance) {
      // satisfied already; a dependent row adds nothing the working set needs
      const int m = static_cast<int>(ws.active.size());
      bool dependent = false;
      if (m > 0) {
        Eigen::MatrixXd N(ws.x.size(), m);
        for (int j = 0; j < m; ++j) N.col(j) = ws.normal_of(ws.active[j]);
        const Eigen::VectorXd res =
            normal - N * N.colPivHouseholderQr().solve(normal);
        dependent = res.cwiseAbs().maxCoeff() < 1e-10;
      }
      if (!dependent) {
        ws.active.push_back({i, true, sign});
        ws.u.push_back(0.0);
      }
      continue;
    }
    if (!drive_in(ws, normal, offset, true, sign, i, tolerance, max_iterations, iterations))
      return extract(ws, problem, QpStatus::infeasible, iterations);
    if (iterations >= max_iterations)
      return extract(ws, problem, QpStatus::max_iterations, iterations);
  }

  while (true) {
    // most violated inequality; ties resolve to the lowest row index
    int worst = -1;
    double worst_violation = tolerance;
    for (int i = 0; i < problem.q(); ++i) {
      const double violation = problem.C.row(i).dot(ws.x) - problem.d[i];
      if (violation > worst_violation) {
        worst_violation = violation;
        worst = i;
      }
    }
    if (worst < 0) return extract(ws, problem, QpStatus::optimal, iterations);
    if (iterations >= max_iterations)
      return extract(ws, problem, QpStatus::max_iterations, iterations);

    const Eigen::VectorXd normal = -problem.C.row(worst).transpose();
    const double offset = -problem.d[worst];
    if (!drive_in(ws, normal, offset, false, 1.0, worst, tolerance, max_iterations,
                  iterations))
      return extract(ws, problem, QpStatus::infeasible, iterations);
  }
}

void dump_qp(const QpProblem& problem, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write qp dump: " + path);
  out.precision(17);
  out << "qp 1\n";
  out << "dims " << problem.n() << " " << problem.p() << " " << problem.q() << "\n";
  const auto matrix = [&out](const char* name, const Eigen::MatrixXd& m) {
    out << name << "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
      out << "\n";
    }
  };
  matrix("H", problem.H);
  matrix("g", problem.g.transpose());
  matrix("A", problem.A);
  matrix("b", problem.b.transpose());
  matrix("C", problem.C);
  matrix("d", problem.d.transpose());
  if (!out) throw std::runtime_error("short write on qp dump: " + path);
}

QpProblem load_qp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open qp dump: " + path);
  std::string tag;
  int version = 0;
  in >> tag >> version;
  if (tag != "qp" || version != 1) throw std::runtime_error("bad qp dump header: " + path);
  int n = 0, p = 0, q = 0;
  in >> tag >> n >> p >> q;
  if (tag != "dims" || n < 0 || p < 0 || q < 0)
    throw std::runtime_error("bad qp dump dims: " + path);

  const auto matrix = [&in, &path](const char* name, Eigen::Index rows, Eigen::Index cols) {
    std::string label;
    in >> label;
    if (label != name) throw std::runtime_error("bad qp dump section in " + path);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) in >> m(i, j);
    if (!in) throw std::runtime_error("truncated qp dump in " + path);
    return m;
  };

  QpProblem problem;
  problem.H = matrix("H", n, n);
  problem.g = matrix("g", 1, n).transpose();
  problem.A = matrix("A", p, n);
  problem.b = matrix("b", 1, p).transpose();
  problem.C = matrix("C", q, n);
  problem.d = matrix("d", 1, q).transpose();
  problem.validate();
  return problem;
}

}  // namespace ppd
