#pragma once

#include <Eigen/Sparse>

#include <cstddef>

namespace fde {

/// Operator-splitting settings. Tolerances apply to the unscaled residuals.
struct SolverSettings {
  double rho = 1.0;
  bool adaptive_rho = true;
  std::size_t adaptive_rho_interval = 25;  // minimum iterations between refactorizations
  double eps_abs = 1e-8;
  double eps_rel = 1e-8;
  std::size_t max_iterations = 200000;
  double alpha = 1.6;
  double sigma = 1e-6;
  std::size_t check_interval = 10;
  std::size_t scaling_iterations = 10;
  bool polish = true;
  std::size_t polish_refinement = 10;
  std::size_t polish_steps = 25;  // active set updates per polish attempt
  double polish_delta = 1e-9;
  std::size_t polish_stable_checks = 5;  // 0 polishes only after the loop

  /// Throws InvalidInput when a field is out of range.
  void validate() const;
};

/// min 1/2 x'Px + q'x  s.t.  lower <= A x <= upper.
/// P holds the full symmetric matrix. Rows with lower == upper are equalities.
struct BoxQp {
  Eigen::SparseMatrix<double> P;
  Eigen::VectorXd q;
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct AdmmResult {
  Eigen::VectorXd x;  // primal iterate
  Eigen::VectorXd y;  // constraint multipliers
  Eigen::VectorXd z;  // projected constraint values
  std::size_t iterations = 0;
  std::size_t refactorizations = 0;
  bool converged = false;
  bool polished = false;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double final_rho = 0.0;
};

/// ADMM with Ruiz equilibration, over-relaxation, residual-balancing rho
/// updates on a cached LDL' factorization of the quasi-definite KKT matrix,
/// and an optional active-set polishing step. Deterministic.
AdmmResult solve_box_qp(const BoxQp& problem, const SolverSettings& settings);

}  // namespace fde
