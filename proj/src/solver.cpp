#include "fde/solver.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fde/error.hpp"

namespace fde {

namespace {

// Dual in splitting form: x = y, A = [I; D2'], box rows then equality rows.
BoxQp dual_problem(const QpProblem& qp) {
  const Eigen::VectorXd s_inv = qp.s.cwiseInverse();
  Eigen::SparseMatrix<double> scaled = qp.D1;  // D1 S^-1
  for (int k = 0; k < scaled.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(scaled, k); it; ++it) {
      it.valueRef() *= s_inv[it.col()];
    }
  }
  BoxQp dual;
  dual.P = (scaled * qp.D1.transpose()).pruned();
  dual.q = scaled * qp.w;

  const auto rows = static_cast<Eigen::Index>(qp.row_count());
  const auto nodes = qp.D2.cols();
  const Eigen::SparseMatrix<double> d2t = qp.D2.transpose();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(rows + d2t.nonZeros()));
  for (Eigen::Index i = 0; i < rows; ++i) {
    t.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
  }
  for (int k = 0; k < d2t.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(d2t, k); it; ++it) {
      t.emplace_back(static_cast<int>(rows + it.row()), static_cast<int>(it.col()), it.value());
    }
  }
  dual.A.resize(rows + nodes, rows);
  dual.A.setFromTriplets(t.begin(), t.end());
  dual.lower.resize(rows + nodes);
  dual.upper.resize(rows + nodes);
  dual.lower.head(rows).setConstant(-1.0);
  dual.upper.head(rows).setConstant(1.0);
  dual.lower.tail(nodes) = -qp.u;
  dual.upper.tail(nodes) = -qp.u;
  return dual;
}

// Row r of [D1 D2] as (variable, coefficient); nodes follow the segments.
std::vector<std::vector<std::pair<Eigen::Index, double>>> penalty_rows(const QpProblem& qp) {
  std::vector<std::vector<std::pair<Eigen::Index, double>>> rows(qp.row_count());
  const auto segments = static_cast<Eigen::Index>(qp.segment_count());
  for (int k = 0; k < qp.D1.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.D1, k); it; ++it) {
      rows[static_cast<std::size_t>(it.row())].emplace_back(it.col(), it.value());
    }
  }
  for (int k = 0; k < qp.D2.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.D2, k); it; ++it) {
      rows[static_cast<std::size_t>(it.row())].emplace_back(segments + it.col(), it.value());
    }
  }
  return rows;
}

Eigen::Index find_root(std::vector<Eigen::Index>& parent, Eigen::Index a) {
  while (parent[static_cast<std::size_t>(a)] != a) {
    a = parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
  }
  return a;
}

// ADMM leaves noise of the order of the tolerance inside fused regions. Read
// the fused partition and jump signs off the iterate, solve the primal
// exactly on that structure (one value per region, closed form), and keep the
// result only if the jump signs still hold and the objective did not get
// worse.
bool refine_structure(const QpProblem& qp, const Eigen::VectorXd& y, Eigen::VectorXd& z, Eigen::VectorXd& h) {
  const auto segments = static_cast<Eigen::Index>(qp.segment_count());
  const auto nodes = static_cast<Eigen::Index>(qp.network.node_count());
  const auto rows = penalty_rows(qp);
  Eigen::VectorXd value(segments + nodes);
  value << z, h;
  const double scale = 1.0 + value.lpNorm<Eigen::Infinity>();
  constexpr double kBoundTol = 1e-6;
  constexpr double kFuseTol = 1e-7;

  std::vector<Eigen::Index> parent(static_cast<std::size_t>(segments + nodes));
  for (Eigen::Index i = 0; i < segments + nodes; ++i) parent[static_cast<std::size_t>(i)] = i;
  std::vector<bool> jump(rows.size(), false);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double delta = 0.0, weight = 0.0;
    for (const auto& [var, coef] : rows[r]) {
      delta += coef * value[var];
      weight = std::max(weight, std::abs(coef));
    }
    const auto ri = static_cast<Eigen::Index>(r);
    jump[r] = std::abs(y[ri]) >= 1.0 - kBoundTol && std::abs(delta) > kFuseTol * scale * weight;
    if (jump[r]) continue;
    for (const auto& entry : rows[r]) {
      parent[static_cast<std::size_t>(find_root(parent, entry.first))] = find_root(parent, rows[r].front().first);
    }
  }

  // Region R minimizes 1/2 S_R v^2 + L_R v.
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(segments + nodes);
  Eigen::VectorXd linear = Eigen::VectorXd::Zero(segments + nodes);
  for (Eigen::Index i = 0; i < segments; ++i) {
    const Eigen::Index root = find_root(parent, i);
    mass[root] += qp.s[i];
    linear[root] += qp.w[i];
  }
  for (Eigen::Index v = 0; v < nodes; ++v) linear[find_root(parent, segments + v)] += qp.u[v];
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!jump[r]) continue;
    const double sign = y[static_cast<Eigen::Index>(r)] > 0.0 ? 1.0 : -1.0;
    for (const auto& [var, coef] : rows[r]) linear[find_root(parent, var)] += sign * coef;
  }

  Eigen::VectorXd z_new(segments);
  for (Eigen::Index i = 0; i < segments; ++i) {
    const Eigen::Index root = find_root(parent, i);
    z_new[i] = -linear[root] / mass[root];
  }
  Eigen::VectorXd h_new(nodes);
  std::vector<double> adjacent;
  for (Eigen::Index v = 0; v < nodes; ++v) {
    const Eigen::Index root = find_root(parent, segments + v);
    if (mass[root] > 0.0) {
      h_new[v] = -linear[root] / mass[root];
      continue;
    }
    // A node cut off by jumps on every side: its best value given z.
    adjacent.clear();
    for (const auto& end : qp.network.incident(static_cast<NodeIndex>(v))) {
      adjacent.push_back(z_new[static_cast<Eigen::Index>(qp.segment_at(end))]);
    }
    h_new[v] = node_median(adjacent, qp.u[v], qp.lambda);
  }

  Eigen::VectorXd refined(segments + nodes);
  refined << z_new, h_new;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!jump[r]) continue;
    double delta = 0.0;
    for (const auto& [var, coef] : rows[r]) delta += coef * refined[var];
    if (y[static_cast<Eigen::Index>(r)] * delta < -1e-12 * scale) return false;
  }
  if (!refined.allFinite()) return false;
  const double before = qp.primal_objective(z, h);
  const double after = qp.primal_objective(z_new, h_new);
  if (after > before + 1e-13 * (1.0 + std::abs(before))) return false;
  z = std::move(z_new);
  h = std::move(h_new);
  return true;
}

}  // namespace

double node_median(std::span<const double> adjacent, double u, double lambda) {
  std::vector<double> a(adjacent.begin(), adjacent.end());
  std::sort(a.begin(), a.end());
  const double d = static_cast<double>(a.size());
  // Right slope at a[j] (0-based) is u + lambda (2 (j + 1) - d).
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (u + lambda * (2.0 * static_cast<double>(j + 1) - d) >= 0.0) return a[j];
  }
  return a.empty() ? 0.0 : a.back();
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> recover_primal(const QpProblem& qp,
                                                           const Eigen::VectorXd& y) {
  if (static_cast<std::size_t>(y.size()) != qp.row_count()) {
    throw Error(ErrorCode::InvalidInput, "dual vector has the wrong length");
  }
  Eigen::VectorXd z = -(qp.D1.transpose() * y + qp.w).cwiseQuotient(qp.s);
  const auto& net = qp.network;
  Eigen::VectorXd h(static_cast<Eigen::Index>(net.node_count()));
  std::vector<double> adjacent;
  for (NodeIndex v = 0; v < net.node_count(); ++v) {
    adjacent.clear();
    for (const auto& end : net.incident(v)) {
      adjacent.push_back(z[static_cast<Eigen::Index>(qp.segment_at(end))]);
    }
    h[static_cast<Eigen::Index>(v)] = node_median(adjacent, qp.u[static_cast<Eigen::Index>(v)], qp.lambda);
  }
  return {std::move(z), std::move(h)};
}

double dual_objective(const QpProblem& qp, const Eigen::VectorXd& y) {
  const Eigen::VectorXd r = qp.w + qp.D1.transpose() * y;
  return -0.5 * r.dot(r.cwiseQuotient(qp.s));
}

Certificate certify(const QpProblem& qp, const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                    const Eigen::VectorXd& h) {
  Certificate c;
  c.primal_objective = qp.primal_objective(z, h);
  c.dual_objective = dual_objective(qp, y);
  c.duality_gap = c.primal_objective - c.dual_objective;
  c.relative_gap = c.duality_gap / (1.0 + std::abs(c.primal_objective));
  c.box_violation = y.size() == 0 ? 0.0 : std::max(0.0, y.lpNorm<Eigen::Infinity>() - 1.0);
  const Eigen::VectorXd eq = qp.D2.transpose() * y + qp.u;
  c.equality_violation = eq.size() == 0 ? 0.0 : eq.lpNorm<Eigen::Infinity>();
  c.mass = qp.s.dot(z);
  c.min_value = z.minCoeff();
  c.nonpositive = c.min_value <= 0.0;
  c.fused_regions = fused_partition(qp.to_function(z, h)).region_count;
  return c;
}

Certificate certify(const QpProblem& qp, const FdeSolution& solution) {
  return certify(qp, solution.y, solution.z, solution.h);
}

FdeSolution solve_dual(const QpProblem& qp, const SolverSettings& settings) {
  const BoxQp dual = dual_problem(qp);
  const AdmmResult admm = solve_box_qp(dual, settings);

  FdeSolution out;
  // The box is a plain projection; it only tightens feasibility.
  out.y = admm.x.cwiseMax(-1.0).cwiseMin(1.0);
  auto [z, h] = recover_primal(qp, out.y);
  out.status = admm.converged ? SolveStatus::Converged : SolveStatus::MaxIterations;
  if (out.converged()) out.refined = refine_structure(qp, out.y, z, h);
  out.z = std::move(z);
  out.h = std::move(h);
  out.iterations = admm.iterations;
  out.polished = admm.polished;

  const Certificate c = certify(qp, out);
  out.primal_objective = c.primal_objective;
  out.dual_objective = c.dual_objective;
  out.duality_gap = c.duality_gap;
  out.relative_gap = c.relative_gap;
  out.box_violation = c.box_violation;
  out.equality_violation = c.equality_violation;
  out.mass = c.mass;
  out.min_value = c.min_value;
  out.nonpositive = c.nonpositive;
  out.fused_regions = c.fused_regions;
  return out;
}

FitResult fit(const GeometricNetwork& network, const ObservationSet& obs, double lambda,
              const SolverSettings& settings) {
  QpProblem qp = build_qp(network, obs, lambda);
  FdeSolution solution = solve_dual(qp, settings);
  PiecewiseConstantFn estimate = qp.to_function(solution.z, solution.h);
  if (solution.converged() && !solution.nonpositive) {
    try {
      estimate = estimate.as_density(1e-6);
    } catch (const Error&) {
      // left unflagged; the mass is in the solution diagnostics
    }
  }
  return {std::move(qp), std::move(solution), std::move(estimate)};
}

FitResult fit(const GeometricNetwork& network, std::span<const NetworkPoint> points,
              double lambda, const SolverSettings& settings) {
  return fit(network, build_observations(network, points), lambda, settings);
}

}  // namespace fde
