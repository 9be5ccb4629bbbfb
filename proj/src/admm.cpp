#include "fde/admm.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fde/error.hpp"

namespace fde {

void SolverSettings::validate() const {
  auto fail = [](const char* what) { throw Error(ErrorCode::InvalidInput, what); };
  if (!(rho > 0.0)) fail("rho must be positive");
  if (!(eps_abs > 0.0) || !(eps_rel > 0.0)) fail("tolerances must be positive");
  if (!(alpha >= 1.0 && alpha < 2.0)) fail("over-relaxation must lie in [1, 2)");
  if (max_iterations < 1) fail("max iterations must be at least 1");
  if (!(sigma > 0.0)) fail("sigma must be positive");
  if (check_interval < 1 || adaptive_rho_interval < 1) fail("intervals must be positive");
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;
using Ldlt = Eigen::SimplicialLDLT<SpMat, Eigen::Upper, Eigen::AMDOrdering<int>>;

constexpr double kMinScaling = 1e-4;
constexpr double kMaxScaling = 1e4;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kEqualityRhoFactor = 1e3;

Vec col_inf_norms(const SpMat& m) {
  Vec out = Vec::Zero(m.cols());
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      out[it.col()] = std::max(out[it.col()], std::abs(it.value()));
    }
  }
  return out;
}

Vec row_inf_norms(const SpMat& m) {
  Vec out = Vec::Zero(m.rows());
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      out[it.row()] = std::max(out[it.row()], std::abs(it.value()));
    }
  }
  return out;
}

void scale_in_place(SpMat& m, const Vec& left, const Vec& right) {
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      it.valueRef() *= left[it.row()] * right[it.col()];
    }
  }
}

double clamp_norm(double v) {
  if (v < kMinScaling) return 1.0;
  return std::min(v, kMaxScaling);
}

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

struct Residuals {
  double primal = 0.0;
  double dual = 0.0;
  double primal_scale = 0.0;
  double dual_scale = 0.0;
};

class Workspace {
 public:
  Workspace(const BoxQp& problem, const SolverSettings& settings)
      : settings_(settings),
        n_(problem.P.rows()),
        m_(problem.A.rows()),
        P_(problem.P),
        A_(problem.A),
        q_(problem.q),
        lower_(problem.lower),
        upper_(problem.upper) {
    if (problem.P.cols() != n_ || problem.A.cols() != n_ || q_.size() != n_ ||
        lower_.size() != m_ || upper_.size() != m_) {
      throw Error(ErrorCode::InvalidInput, "inconsistent QP dimensions");
    }
    P_.makeCompressed();
    A_.makeCompressed();
    equality_.resize(static_cast<std::size_t>(m_));
    for (Eigen::Index i = 0; i < m_; ++i) {
      equality_[static_cast<std::size_t>(i)] = lower_[i] == upper_[i];
    }
    equilibrate();
    set_rho(settings_.rho);
    assemble_kkt();
    ldlt_.analyzePattern(kkt_);
    factorize();
  }

  AdmmResult run() {
    Vec x = Vec::Zero(n_);
    Vec z = Vec::Zero(m_);
    Vec y = Vec::Zero(m_);
    Vec rhs(n_ + m_);
    Vec x_tilde(n_);
    Vec z_tilde(m_);
    Vec z_relaxed(m_);

    AdmmResult result;
    const double alpha = settings_.alpha;
    std::size_t last_update = 0;
    Residuals res;
    bool have_residuals = false;
    std::vector<signed char> guess, tried;
    std::size_t stable_checks = 0;

    for (std::size_t k = 1; k <= settings_.max_iterations; ++k) {
      rhs.head(n_) = settings_.sigma * x - q_;
      rhs.tail(m_) = z - rho_inv_.cwiseProduct(y);
      const Vec sol = ldlt_.solve(rhs);
      x_tilde = sol.head(n_);
      z_tilde = z + rho_inv_.cwiseProduct(sol.tail(m_) - y);

      x = alpha * x_tilde + (1.0 - alpha) * x;
      z_relaxed = alpha * z_tilde + (1.0 - alpha) * z;
      z = (z_relaxed + rho_inv_.cwiseProduct(y)).cwiseMax(lower_).cwiseMin(upper_);
      y += rho_.cwiseProduct(z_relaxed - z);

      result.iterations = k;
      const bool check = k % settings_.check_interval == 0 || k == settings_.max_iterations;
      const bool adapt = settings_.adaptive_rho && k - last_update >= settings_.adaptive_rho_interval;
      if (!check && !adapt) continue;

      res = residuals(x, z, y);
      have_residuals = true;
      if (res.primal <= settings_.eps_abs + settings_.eps_rel * res.primal_scale &&
          res.dual <= settings_.eps_abs + settings_.eps_rel * res.dual_scale) {
        result.converged = true;
        break;
      }
      // Early polishing: once the active set guess stops moving, try solving
      // on it directly and stop if that already meets the tolerances.
      if (settings_.polish && settings_.polish_stable_checks > 0 && check) {
        auto current = active_guess(z, y);
        stable_checks = current == guess ? stable_checks + 1 : 0;
        guess = std::move(current);
        if (stable_checks >= settings_.polish_stable_checks && guess != tried) {
          tried = guess;
          result.primal_residual = res.primal;
          result.dual_residual = res.dual;
          if (polish(x, z, y, result, true)) break;
        }
      }
      if (adapt) {
        last_update = k;
        const double primal_ratio = res.primal / (res.primal_scale + 1e-30);
        const double dual_ratio = res.dual / (res.dual_scale + 1e-30);
        double candidate = rho_bar_ * std::sqrt(primal_ratio / (dual_ratio + 1e-30));
        candidate = std::clamp(candidate, kRhoMin, kRhoMax);
        if (candidate > 5.0 * rho_bar_ || candidate < 0.2 * rho_bar_) {
          set_rho(candidate);
          update_kkt_rho();
          factorize();
          ++result.refactorizations;
        }
      }
    }
    if (!have_residuals) res = residuals(x, z, y);

    if (!result.polished) {
      result.primal_residual = res.primal;
      result.dual_residual = res.dual;
    }
    if (settings_.polish && !result.polished) polish(x, z, y, result, false);

    result.final_rho = rho_bar_;
    result.x = D_.cwiseProduct(x);
    result.y = E_.cwiseProduct(y) / cost_;
    result.z = E_inv_.cwiseProduct(z);
    return result;
  }

 private:
  void equilibrate() {
    D_ = Vec::Ones(n_);
    E_ = Vec::Ones(m_);
    cost_ = 1.0;
    for (std::size_t it = 0; it < settings_.scaling_iterations; ++it) {
      const Vec p_norms = col_inf_norms(P_);
      const Vec a_norms = col_inf_norms(A_);
      const Vec r_norms = row_inf_norms(A_);
      Vec d(n_);
      for (Eigen::Index j = 0; j < n_; ++j) {
        d[j] = 1.0 / std::sqrt(clamp_norm(std::max(p_norms[j], a_norms[j])));
      }
      Vec e(m_);
      for (Eigen::Index i = 0; i < m_; ++i) e[i] = 1.0 / std::sqrt(clamp_norm(r_norms[i]));
      scale_in_place(P_, d, d);
      scale_in_place(A_, e, d);
      q_ = q_.cwiseProduct(d);
      D_ = D_.cwiseProduct(d);
      E_ = E_.cwiseProduct(e);

      const Vec p_cols = col_inf_norms(P_);
      double c = n_ > 0 ? p_cols.mean() : 1.0;
      c = clamp_norm(std::max(c, inf_norm(q_)));
      c = 1.0 / c;
      P_ *= c;
      q_ *= c;
      cost_ *= c;
    }
    D_inv_ = D_.cwiseInverse();
    E_inv_ = E_.cwiseInverse();
    const double inf = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m_; ++i) {
      lower_[i] = lower_[i] == -inf ? -inf : E_[i] * lower_[i];
      upper_[i] = upper_[i] == inf ? inf : E_[i] * upper_[i];
    }
  }

  void set_rho(double rho_bar) {
    rho_bar_ = rho_bar;
    rho_.resize(m_);
    for (Eigen::Index i = 0; i < m_; ++i) {
      rho_[i] = equality_[static_cast<std::size_t>(i)] ? kEqualityRhoFactor * rho_bar : rho_bar;
    }
    rho_inv_ = rho_.cwiseInverse();
  }

  void assemble_kkt() {
    using Triplet = Eigen::Triplet<double>;
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(P_.nonZeros() + A_.nonZeros() + n_ + m_));
    for (int k = 0; k < P_.outerSize(); ++k) {
      for (SpMat::InnerIterator it(P_, k); it; ++it) {
        if (it.row() <= it.col()) t.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (Eigen::Index j = 0; j < n_; ++j) {
      t.emplace_back(static_cast<int>(j), static_cast<int>(j), settings_.sigma);
    }
    for (int k = 0; k < A_.outerSize(); ++k) {
      for (SpMat::InnerIterator it(A_, k); it; ++it) {
        t.emplace_back(it.col(), static_cast<int>(n_ + it.row()), it.value());
      }
    }
    for (Eigen::Index i = 0; i < m_; ++i) {
      t.emplace_back(static_cast<int>(n_ + i), static_cast<int>(n_ + i), -rho_inv_[i]);
    }
    kkt_.resize(n_ + m_, n_ + m_);
    kkt_.setFromTriplets(t.begin(), t.end());
    kkt_.makeCompressed();
  }

  // The diagonal is the last stored entry of each column of an upper-triangular
  // compressed matrix.
  void update_kkt_rho() {
    double* values = kkt_.valuePtr();
    const int* outer = kkt_.outerIndexPtr();
    for (Eigen::Index i = 0; i < m_; ++i) {
      values[outer[n_ + i + 1] - 1] = -rho_inv_[i];
    }
  }

  void factorize() {
    ldlt_.factorize(kkt_);
    if (ldlt_.info() != Eigen::Success) {
      throw std::runtime_error("KKT factorization failed");
    }
  }

  Residuals residuals(const Vec& x, const Vec& z, const Vec& y) const {
    const Vec Ax = A_ * x;
    const Vec Px = P_ * x;
    const Vec Aty = A_.transpose() * y;
    Residuals r;
    r.primal = inf_norm(E_inv_.cwiseProduct(Ax - z));
    r.primal_scale = std::max(inf_norm(E_inv_.cwiseProduct(Ax)), inf_norm(E_inv_.cwiseProduct(z)));
    r.dual = inf_norm(D_inv_.cwiseProduct(Px + q_ + Aty)) / cost_;
    r.dual_scale = std::max({inf_norm(D_inv_.cwiseProduct(Px)), inf_norm(D_inv_.cwiseProduct(Aty)),
                             inf_norm(D_inv_.cwiseProduct(q_))}) /
                   cost_;
    return r;
  }

  // -1 lower, +1 upper, 0 inactive, 2 equality.
  std::vector<signed char> active_guess(const Vec& z, const Vec& y) const {
    std::vector<signed char> out(static_cast<std::size_t>(m_), 0);
    for (Eigen::Index i = 0; i < m_; ++i) {
      auto& o = out[static_cast<std::size_t>(i)];
      if (equality_[static_cast<std::size_t>(i)]) {
        o = 2;
      } else if (z[i] - lower_[i] < -y[i]) {
        o = -1;
      } else if (upper_[i] - z[i] < y[i]) {
        o = 1;
      }
    }
    return out;
  }

  // Equality-constrained QP with the rows marked in guess held at their
  // bounds. Returns the stationary point and its multipliers.
  bool solve_on(const std::vector<signed char>& guess, Vec& xp, Vec& yp) const {
    std::vector<Eigen::Index> active;
    std::vector<double> bound;
    for (Eigen::Index i = 0; i < m_; ++i) {
      const int g = guess[static_cast<std::size_t>(i)];
      if (g == 0) continue;
      active.push_back(i);
      bound.push_back(g == 1 ? upper_[i] : lower_[i]);
    }
    const auto na = static_cast<Eigen::Index>(active.size());
    std::vector<Eigen::Index> position(static_cast<std::size_t>(m_), -1);
    for (Eigen::Index k = 0; k < na; ++k) position[static_cast<std::size_t>(active[k])] = k;

    using Triplet = Eigen::Triplet<double>;
    std::vector<Triplet> exact;
    for (int k = 0; k < P_.outerSize(); ++k) {
      for (SpMat::InnerIterator it(P_, k); it; ++it) {
        if (it.row() <= it.col()) exact.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (int k = 0; k < A_.outerSize(); ++k) {
      for (SpMat::InnerIterator it(A_, k); it; ++it) {
        const Eigen::Index p = position[static_cast<std::size_t>(it.row())];
        if (p >= 0) exact.emplace_back(it.col(), static_cast<int>(n_ + p), it.value());
      }
    }
    std::vector<Triplet> perturbed = exact;
    const double delta = settings_.polish_delta;
    for (Eigen::Index j = 0; j < n_; ++j) perturbed.emplace_back(static_cast<int>(j), static_cast<int>(j), delta);
    for (Eigen::Index k = 0; k < na; ++k) {
      perturbed.emplace_back(static_cast<int>(n_ + k), static_cast<int>(n_ + k), -delta);
    }
    SpMat K(n_ + na, n_ + na);
    K.setFromTriplets(exact.begin(), exact.end());
    SpMat Kd(n_ + na, n_ + na);
    Kd.setFromTriplets(perturbed.begin(), perturbed.end());

    Ldlt solver;
    solver.compute(Kd);
    if (solver.info() != Eigen::Success) return false;

    Vec rhs(n_ + na);
    rhs.head(n_) = -q_;
    for (Eigen::Index k = 0; k < na; ++k) rhs[n_ + k] = bound[static_cast<std::size_t>(k)];
    Vec t = Vec::Zero(n_ + na);
    for (std::size_t it = 0; it < std::max<std::size_t>(1, settings_.polish_refinement); ++it) {
      const Vec r = rhs - K.selfadjointView<Eigen::Upper>() * t;
      t += solver.solve(r);
    }
    if (!t.allFinite()) return false;

    xp = t.head(n_);
    yp = Vec::Zero(m_);
    for (Eigen::Index k = 0; k < na; ++k) yp[active[static_cast<std::size_t>(k)]] = t[n_ + k];
    return true;
  }

  // Primal-dual active set steps started from the ADMM guess: solve on the
  // current set, then activate violated bounds and release rows whose
  // multiplier has the wrong sign. Every candidate with consistent signs is
  // scored; the first one meeting the tolerances ends the search. Without
  // require_converged the most accurate candidate is kept if it beats the
  // iterate.
  bool polish(Vec& x, Vec& z, Vec& y, AdmmResult& result, bool require_converged) {
    auto guess = active_guess(z, y);
    Vec xp, yp;
    bool found = false, meets = false;
    Vec bx, by;
    Residuals best;
    best.primal = result.primal_residual;
    best.dual = result.dual_residual;
    std::vector<std::vector<signed char>> seen;
    for (std::size_t step = 0; step < std::max<std::size_t>(1, settings_.polish_steps); ++step) {
      if (!solve_on(guess, xp, yp)) break;
      const Vec ax = A_ * xp;
      const double sign_tol = 1e-9 * std::max(1.0, inf_norm(yp));
      bool signs = true;
      for (Eigen::Index i = 0; i < m_ && signs; ++i) {
        const int g = guess[static_cast<std::size_t>(i)];
        signs = !((g == -1 && yp[i] > sign_tol) || (g == 1 && yp[i] < -sign_tol));
      }
      if (signs) {
        const Residuals r = residuals(xp, ax.cwiseMax(lower_).cwiseMin(upper_), yp);
        meets = r.primal <= settings_.eps_abs + settings_.eps_rel * r.primal_scale &&
                r.dual <= settings_.eps_abs + settings_.eps_rel * r.dual_scale;
        const double floor = 1e-10;
        const bool better = (r.primal <= best.primal || r.primal < floor) && (r.dual <= best.dual || r.dual < floor);
        if (meets || better) {
          found = true;
          best = r;
          bx = xp;
          by = yp;
        }
        if (meets) break;
      }
      seen.push_back(guess);
      auto next = guess;
      for (Eigen::Index i = 0; i < m_; ++i) {
        auto& g = next[static_cast<std::size_t>(i)];
        if (g == 2) continue;
        if (yp[i] + (ax[i] - upper_[i]) > 0.0) {
          g = 1;
        } else if (yp[i] + (ax[i] - lower_[i]) < 0.0) {
          g = -1;
        } else {
          g = 0;
        }
      }
      if (std::find(seen.begin(), seen.end(), next) != seen.end()) break;  // cycle
      guess = std::move(next);
    }
    if (!found || (require_converged && !meets)) return false;
    z = (A_ * bx).cwiseMax(lower_).cwiseMin(upper_);
    x = std::move(bx);
    y = std::move(by);
    result.polished = true;
    result.primal_residual = best.primal;
    result.dual_residual = best.dual;
    if (meets) result.converged = true;
    return meets;
  }

  const SolverSettings& settings_;
  Eigen::Index n_;
  Eigen::Index m_;
  SpMat P_;
  SpMat A_;
  Vec q_;
  Vec lower_;
  Vec upper_;
  std::vector<bool> equality_;
  Vec D_, E_, D_inv_, E_inv_;
  double cost_ = 1.0;
  double rho_bar_ = 1.0;
  Vec rho_, rho_inv_;
  SpMat kkt_;
  Ldlt ldlt_;
};

}  // namespace

AdmmResult solve_box_qp(const BoxQp& problem, const SolverSettings& settings) {
  settings.validate();
  Workspace workspace(problem, settings);
  return workspace.run();
}

}  // namespace fde
