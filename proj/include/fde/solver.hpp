#pragma once

#include <Eigen/Core>

#include <span>
#include <utility>

#include "fde/admm.hpp"
#include "fde/assemble.hpp"
#include "fde/density.hpp"

namespace fde {

enum class SolveStatus { Converged, MaxIterations };

struct FdeSolution {
  Eigen::VectorXd y;  // one per penalty row
  Eigen::VectorXd z;  // segment values
  Eigen::VectorXd h;  // node values
  SolveStatus status = SolveStatus::Converged;
  std::size_t iterations = 0;
  bool polished = false;
  bool refined = false;  // primal re-solved on the detected fused structure

  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double duality_gap = 0.0;
  double relative_gap = 0.0;     // gap / (1 + |primal|)
  double box_violation = 0.0;    // max(0, ||y||_inf - 1)
  double equality_violation = 0.0;  // ||D2'y + u||_inf
  double mass = 0.0;             // sum s z
  double min_value = 0.0;        // min z
  bool nonpositive = false;      // some z <= 0
  std::size_t fused_regions = 0;

  bool converged() const noexcept { return status == SolveStatus::Converged; }
};

/// Solves the dual QP and recovers the primal. Never throws on
/// non-convergence; the status carries it instead.
FdeSolution solve_dual(const QpProblem& qp, const SolverSettings& settings = {});

/// z = -S^-1 (D1'y + w). Each h_v is the lower weighted median of its
/// adjacent segment values.
std::pair<Eigen::VectorXd, Eigen::VectorXd> recover_primal(const QpProblem& qp,
                                                           const Eigen::VectorXd& y);

/// Smallest minimizer of u h + lambda sum |h - a_j|.
double node_median(std::span<const double> adjacent, double u, double lambda);

struct Certificate {
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double duality_gap = 0.0;
  double relative_gap = 0.0;
  double box_violation = 0.0;
  double equality_violation = 0.0;
  double mass = 0.0;
  double min_value = 0.0;
  bool nonpositive = false;
  std::size_t fused_regions = 0;
};

/// Diagnostics for an arbitrary (y, z, h); does not trust the stored fields.
Certificate certify(const QpProblem& qp, const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                    const Eigen::VectorXd& h);
Certificate certify(const QpProblem& qp, const FdeSolution& solution);

/// -1/2 (w + D1'y)' S^-1 (w + D1'y); the dual objective for feasible y.
double dual_objective(const QpProblem& qp, const Eigen::VectorXd& y);

struct FitResult {
  QpProblem qp;
  FdeSolution solution;
  PiecewiseConstantFn estimate;  // flagged as a density when converged and positive
};

/// Assemble, solve and recover. Throws LambdaTooSmall and input errors.
FitResult fit(const GeometricNetwork& network, const ObservationSet& obs, double lambda,
              const SolverSettings& settings = {});
FitResult fit(const GeometricNetwork& network, std::span<const NetworkPoint> points,
              double lambda, const SolverSettings& settings = {});

}  // namespace fde
