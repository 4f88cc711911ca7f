#pragma once

// L1-regularized least squares (feature-sign search) and norm-ball constrained
// dictionary fitting (Lagrange dual). Both solvers are shared by the plain
// sparse-coding problem and the extended [features; labels] problem.

#include "sssc/common.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <vector>

namespace sssc {

struct SolverOptions {
  double alpha = 0.0;  // L1 weight
  int max_iterations = 1000;
  double tol_optimality = 1e-6;
  double tol_constraint = 1e-8;
  unsigned threads = 1;  // 0 = machine parallelism

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
      throw UsageError("solver: alpha must be a finite nonnegative number");
    if (max_iterations < 1) throw UsageError("solver: max_iterations must be positive");
    if (!(tol_optimality > 0.0) || !(tol_constraint > 0.0))
      throw UsageError("solver: tolerances must be strictly positive");
  }
};

// Column-stored codebook with a squared-norm bound per column.
struct Dictionary {
  Matrix columns;  // p x m
  double radius = 1.0;

  Index dim() const { return columns.rows(); }
  Index size() const { return columns.cols(); }

  double max_violation() const {
    if (columns.cols() == 0) return 0.0;
    return std::max(0.0, columns.colwise().squaredNorm().maxCoeff() - radius);
  }

  void validate(double tol_constraint = 1e-8) const {
    if (columns.rows() < 1 || columns.cols() < 1)
      throw UsageError("dictionary: need at least one column of dimension >= 1");
    if (!(radius > 0.0)) throw UsageError("dictionary: radius must be positive");
    if (!columns.allFinite()) throw DataError("dictionary: non-finite entries");
    if (max_violation() > tol_constraint)
      throw NumericalError("dictionary: column exceeds the norm bound");
  }
};

struct SparseCode {
  Vector coefficients;
  bool converged = true;
  int iterations = 0;

  std::vector<Index> support() const {
    std::vector<Index> idx;
    for (Index j = 0; j < coefficients.size(); ++j)
      if (coefficients[j] != 0.0) idx.push_back(j);
    return idx;
  }
};

// Called with the objective value of every accepted iterate.
using IterateObserver = std::function<void(double)>;

inline constexpr double kZeroSnap = 1e-12;

// ||target - dict*s||^2 + alpha*||s||_1
inline double lasso_objective(const Eigen::Ref<const Matrix>& dict,
                              const Eigen::Ref<const Vector>& target,
                              const Eigen::Ref<const Vector>& s, double alpha) {
  return (target - dict * s).squaredNorm() + alpha * s.lpNorm<1>();
}

// Largest violation of the lasso subgradient conditions at s.
inline double lasso_optimality_violation(const Eigen::Ref<const Matrix>& dict,
                                         const Eigen::Ref<const Vector>& target,
                                         const Eigen::Ref<const Vector>& s, double alpha) {
  Vector grad = 2.0 * dict.transpose() * (dict * s - target);
  double worst = 0.0;
  for (Index j = 0; j < s.size(); ++j) {
    if (s[j] != 0.0) {
      worst = std::max(worst, std::abs(grad[j] + alpha * (s[j] > 0 ? 1.0 : -1.0)));
    } else {
      worst = std::max(worst, std::abs(grad[j]) - alpha);
    }
  }
  return worst;
}

namespace detail {

inline int sign_of(double v) { return (v > 0) - (v < 0); }

// Target of a feature-sign step when the active Gram matrix is singular. If
// the sign vector has a component in the null space the sign-restricted
// quadratic is unbounded along it, so move along that descent direction until
// the first active coefficient reaches zero; otherwise take the minimum-norm
// solution of the consistent system.
inline Vector singular_step(const Eigen::SelfAdjointEigenSolver<Matrix>& es, const Vector& rhs,
                            const Vector& x_old, double alpha, const std::vector<int>& theta,
                            const std::vector<Index>& idx) {
  const Index a = rhs.size();
  const double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  Vector signs(a);
  for (Index r = 0; r < a; ++r) signs[r] = theta[idx[r]];
  Vector direction = Vector::Zero(a);
  for (Index e = 0; e < a; ++e)
    if (es.eigenvalues()[e] <= 1e-12 * top) {
      const auto v = es.eigenvectors().col(e);
      direction -= v.dot(signs) * v;
    }
  if (alpha > 0.0 && direction.norm() > 1e-10) {
    double reach = std::numeric_limits<double>::infinity();
    for (Index r = 0; r < a; ++r)
      if (x_old[r] != 0.0 && x_old[r] * direction[r] < 0.0) reach = std::min(reach, -x_old[r] / direction[r]);
    if (std::isfinite(reach)) return x_old + reach * direction;
  }
  // Minimum-norm solution through the retained part of the spectrum.
  Vector proj = es.eigenvectors().transpose() * rhs;
  for (Index e = 0; e < a; ++e) proj[e] = es.eigenvalues()[e] > 1e-12 * top ? proj[e] / es.eigenvalues()[e] : 0.0;
  return es.eigenvectors() * proj;
}

// Cyclic coordinate descent from s; last resort when feature-sign stalls.
inline void coordinate_polish(const Matrix& gram, const Vector& corr, double alpha, Vector& s, int sweeps,
                              double tol) {
  const Index m = gram.rows();
  Vector gs = gram * s;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double change = 0.0;
    for (Index j = 0; j < m; ++j) {
      const double gjj = gram(j, j);
      if (gjj <= 0.0) continue;
      const double rho = corr[j] - gs[j] + gjj * s[j];
      double next = 0.0;
      if (rho > 0.5 * alpha) next = (rho - 0.5 * alpha) / gjj;
      else if (rho < -0.5 * alpha) next = (rho + 0.5 * alpha) / gjj;
      const double delta = next - s[j];
      if (delta != 0.0) {
        gs += delta * gram.col(j);
        s[j] = next;
        change = std::max(change, std::abs(delta));
      }
    }
    if (change < tol) break;
  }
}

// Feature-sign search on the Gram form: gram = D'D, corr = D't, target_sq = t't.
inline SparseCode feature_sign_gram(const Matrix& gram, const Vector& corr, double target_sq,
                                    const SolverOptions& opt, const Vector* warm,
                                    const IterateObserver& observe) {
  const Index m = gram.rows();
  const double alpha = opt.alpha;
  Vector s = warm ? *warm : Vector::Zero(m);
  for (Index j = 0; j < m; ++j)
    if (std::abs(s[j]) < kZeroSnap) s[j] = 0.0;

  std::vector<int> theta(m);
  std::vector<char> active(m);
  for (Index j = 0; j < m; ++j) {
    theta[j] = sign_of(s[j]);
    active[j] = s[j] != 0.0;
  }

  auto objective = [&](const Vector& v) {
    return target_sq - 2.0 * corr.dot(v) + v.dot(gram * v) + alpha * v.lpNorm<1>();
  };

  double f = objective(s);
  if (observe) observe(f);

  const double inner_tol = 1e-2 * opt.tol_optimality;
  int iter = 0;
  int stalls = 0;
  while (iter < opt.max_iterations) {
    ++iter;
    Vector grad = 2.0 * (gram * s - corr);

    double active_violation = 0.0;
    for (Index j = 0; j < m; ++j)
      if (active[j]) active_violation = std::max(active_violation, std::abs(grad[j] + alpha * theta[j]));

    if (active_violation <= inner_tol) {
      // Current sign pattern is optimal; look for the most violating zero.
      Index pick = -1;
      double best = alpha;
      for (Index j = 0; j < m; ++j) {
        if (active[j]) continue;
        if (std::abs(grad[j]) > best) {
          best = std::abs(grad[j]);
          pick = j;
        }
      }
      if (pick < 0 || best <= alpha + inner_tol) break;
      theta[pick] = grad[pick] > alpha ? -1 : 1;
      active[pick] = 1;
    }

    std::vector<Index> idx;
    for (Index j = 0; j < m; ++j)
      if (active[j]) idx.push_back(j);
    const Index a = static_cast<Index>(idx.size());
    if (a == 0) break;

    Matrix g_aa(a, a);
    Vector rhs(a), x_old(a);
    for (Index r = 0; r < a; ++r) {
      for (Index c = 0; c < a; ++c) g_aa(r, c) = gram(idx[r], idx[c]);
      rhs[r] = corr[idx[r]] - 0.5 * alpha * theta[idx[r]];
      x_old[r] = s[idx[r]];
    }

    // The LDLT condition estimate misses exact rank deficiency (more active
    // columns than dimensions), so decide from the spectrum.
    Vector x_new;
    Eigen::SelfAdjointEigenSolver<Matrix> es(g_aa);
    const Vector& ev = es.eigenvalues();
    if (ev[0] > 1e-12 * std::max(ev[a - 1], 1e-300)) {
      x_new = g_aa.ldlt().solve(rhs);
    } else {
      x_new = singular_step(es, rhs, x_old, alpha, theta, idx);
    }

    // Discrete line search over sign-change points and the segment end.
    std::vector<std::pair<double, Index>> breaks;
    for (Index r = 0; r < a; ++r) {
      if (x_old[r] != 0.0 && sign_of(x_new[r]) != sign_of(x_old[r])) {
        double t = x_old[r] / (x_old[r] - x_new[r]);
        if (t > 0.0 && t <= 1.0) breaks.emplace_back(t, r);
      }
    }
    std::sort(breaks.begin(), breaks.end());

    Vector trial = s;
    Vector best_s = s;
    double best_f = f;
    bool moved = false;
    auto evaluate = [&](double t, Index zero_at) {
      for (Index r = 0; r < a; ++r) trial[idx[r]] = x_old[r] + t * (x_new[r] - x_old[r]);
      if (zero_at >= 0) trial[idx[zero_at]] = 0.0;
      return objective(trial);
    };
    bool increasing = false;
    for (const auto& [t, r] : breaks) {
      if (t >= 1.0) break;
      double ft = evaluate(t, r);
      if (ft < best_f) {
        best_f = ft;
        best_s = trial;
        moved = true;
      } else if (ft > best_f) {
        increasing = true;
        break;
      }
    }
    if (!increasing) {
      double ft = evaluate(1.0, -1);
      if (ft < best_f) {
        best_f = ft;
        best_s = trial;
        moved = true;
      }
    }

    if (moved) {
      s = best_s;
      f = best_f;
      stalls = 0;
      if (observe) observe(f);
    } else if (++stalls >= 2) {
      break;
    }
    for (Index j = 0; j < m; ++j) {
      if (std::abs(s[j]) < kZeroSnap) s[j] = 0.0;
      theta[j] = sign_of(s[j]);
      active[j] = s[j] != 0.0;
    }
  }

  auto violation = [&](const Vector& v) {
    Vector grad = 2.0 * (gram * v - corr);
    double worst = 0.0;
    for (Index j = 0; j < m; ++j)
      worst = std::max(worst, v[j] != 0.0 ? std::abs(grad[j] + alpha * sign_of(v[j])) : std::abs(grad[j]) - alpha);
    return worst;
  };
  if (iter < opt.max_iterations && violation(s) > opt.tol_optimality) {
    Vector polished = s;
    coordinate_polish(gram, corr, alpha, polished, 100000, 1e-15);
    for (Index j = 0; j < m; ++j)
      if (std::abs(polished[j]) < kZeroSnap) polished[j] = 0.0;
    const double fp = objective(polished);
    if (fp <= f) {
      s = std::move(polished);
      f = fp;
      if (observe) observe(f);
    }
  }
  for (Index j = 0; j < m; ++j)
    if (std::abs(s[j]) < kZeroSnap) s[j] = 0.0;

  SparseCode out;
  out.coefficients = std::move(s);
  out.iterations = iter;
  out.converged = violation(out.coefficients) <= opt.tol_optimality;
  return out;
}

}  // namespace detail

/// Solves min_s ||target - dict*s||^2 + alpha*||s||_1 by feature-sign search.
/// A warm start seeds the active set with its nonzero pattern. Exceeding
/// max_iterations returns the best iterate with converged == false.
inline SparseCode feature_sign_search(const Dictionary& dict, const Eigen::Ref<const Vector>& target,
                                      const SolverOptions& options,
                                      const Vector* warm_start = nullptr,
                                      const IterateObserver& observe = {}) {
  options.validate();
  if (dict.dim() != target.size())
    throw UsageError("feature_sign_search: dictionary has dimension " + std::to_string(dict.dim()) +
                     " but target has " + std::to_string(target.size()));
  if (!dict.columns.allFinite() || !target.allFinite())
    throw DataError("feature_sign_search: non-finite input");
  if (warm_start && (warm_start->size() != dict.size() || !warm_start->allFinite()))
    throw UsageError("feature_sign_search: warm start has wrong size or non-finite entries");
  Matrix gram = dict.columns.transpose() * dict.columns;
  Vector corr = dict.columns.transpose() * target;
  return detail::feature_sign_gram(gram, corr, target.squaredNorm(), options, warm_start, observe);
}

struct EncodeStats {
  Index unconverged = 0;
};

/// Encodes every column of targets independently. Columns run in parallel
/// when options.threads != 1; output does not depend on the thread count.
inline Matrix batch_encode(const Dictionary& dict, const Eigen::Ref<const Matrix>& targets,
                           const SolverOptions& options, const Matrix* warm_starts = nullptr,
                           EncodeStats* stats = nullptr) {
  options.validate();
  const Index n = targets.cols();
  const Index m = dict.size();
  if (n > 0 && targets.rows() != dict.dim())
    throw UsageError("batch_encode: targets have dimension " + std::to_string(targets.rows()) +
                     ", dictionary expects " + std::to_string(dict.dim()));
  if (warm_starts && (warm_starts->rows() != m || warm_starts->cols() != n))
    throw UsageError("batch_encode: warm start matrix has wrong shape");
  Matrix codes = Matrix::Zero(m, n);
  if (n == 0) return codes;
  if (!dict.columns.allFinite()) throw DataError("batch_encode: non-finite dictionary");

  const Matrix gram = dict.columns.transpose() * dict.columns;
  std::vector<char> converged(n, 1);
  parallel_for(n, options.threads, [&](Index i) {
    if (!targets.col(i).allFinite())
      throw DataError("batch_encode: column " + std::to_string(i) + ": non-finite target");
    Vector corr = dict.columns.transpose() * targets.col(i);
    Vector warm;
    if (warm_starts) warm = warm_starts->col(i);
    try {
      SparseCode code = detail::feature_sign_gram(gram, corr, targets.col(i).squaredNorm(), options,
                                                  warm_starts ? &warm : nullptr, {});
      codes.col(i) = code.coefficients;
      converged[i] = code.converged;
    } catch (const Error& e) {
      throw NumericalError("batch_encode: column " + std::to_string(i) + ": " + e.what());
    }
  });
  if (stats) stats->unconverged = std::count(converged.begin(), converged.end(), 0);
  return codes;
}

/// sum_i ||x_i - B s_i||^2 + alpha*||s_i||_1
inline double sc_objective(const Eigen::Ref<const Matrix>& targets, const Dictionary& dict,
                           const Eigen::Ref<const Matrix>& codes, double alpha) {
  if (targets.cols() != codes.cols() || dict.size() != codes.rows() ||
      (targets.cols() > 0 && dict.dim() != targets.rows()))
    throw UsageError("sc_objective: dimension mismatch");
  return (targets - dict.columns * codes).squaredNorm() + alpha * codes.cwiseAbs().sum();
}

// KKT residual of min ||X - BS||_F^2 s.t. ||b_k||^2 <= radius. Multipliers are
// estimated from B alone, so the check is independent of any solver state.
inline double dictionary_kkt_residual(const Eigen::Ref<const Matrix>& targets,
                                      const Eigen::Ref<const Matrix>& codes,
                                      const Eigen::Ref<const Matrix>& dict, double radius) {
  Matrix half_grad = (dict * codes - targets) * codes.transpose();
  double worst = 0.0;
  for (Index k = 0; k < dict.cols(); ++k) {
    double nb = dict.col(k).squaredNorm();
    double lambda = 0.0;
    if (nb > 0.0 && nb >= radius * (1.0 - 1e-6)) lambda = std::max(0.0, -dict.col(k).dot(half_grad.col(k)) / nb);
    worst = std::max(worst, (half_grad.col(k) + lambda * dict.col(k)).cwiseAbs().maxCoeff());
    worst = std::max(worst, nb - radius);
  }
  return worst;
}

struct DualDiagnostics {
  Vector multipliers;  // one per codeword; zero for dead codewords
  int iterations = 0;
  bool used_fallback = false;
  bool ridge_applied = false;
  std::vector<Index> dead_columns;
  double kkt_residual = 0.0;
};

namespace detail {

inline void project_to_ball(Matrix& b, double radius) {
  for (Index k = 0; k < b.cols(); ++k) {
    double nb = b.col(k).squaredNorm();
    if (nb > radius) b.col(k) *= std::sqrt(radius / nb);
  }
}

// Accelerated projected gradient on the primal; used when Newton stalls.
inline void projected_gradient_dictionary(Matrix& b, const Matrix& sst, const Matrix& cross,
                                          double radius, int max_iterations) {
  double lip = 2.0 * Eigen::SelfAdjointEigenSolver<Matrix>(sst, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  if (!(lip > 0.0)) return;
  project_to_ball(b, radius);
  Matrix y = b, prev = b;
  double t = 1.0;
  for (int it = 0; it < max_iterations; ++it) {
    Matrix next = y - (2.0 / lip) * (y * sst - cross);
    project_to_ball(next, radius);
    double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = next + ((t - 1.0) / t_next) * (next - prev);
    double change = (next - prev).cwiseAbs().maxCoeff();
    prev = std::move(next);
    t = t_next;
    if (change < 1e-15 * std::max(1.0, prev.cwiseAbs().maxCoeff())) break;
  }
  b = prev;
}

}  // namespace detail

/// Minimizes ||targets - B*codes||_F^2 subject to ||b_k||^2 <= radius by
/// projected Newton ascent on the Lagrange dual over the per-column
/// multipliers. Codewords with an all-zero code row are returned as zero
/// columns and listed in diagnostics->dead_columns.
inline Dictionary lagrange_dual_dictionary(const Eigen::Ref<const Matrix>& targets,
                                           const Eigen::Ref<const Matrix>& codes, double radius,
                                           const SolverOptions& options,
                                           DualDiagnostics* diagnostics = nullptr) {
  options.validate();
  if (!(radius > 0.0) || !std::isfinite(radius))
    throw UsageError("lagrange_dual_dictionary: radius must be positive");
  if (targets.cols() != codes.cols())
    throw UsageError("lagrange_dual_dictionary: targets and codes disagree on sample count");
  if (codes.rows() < 1) throw UsageError("lagrange_dual_dictionary: need at least one codeword");
  if (!targets.allFinite() || !codes.allFinite())
    throw DataError("lagrange_dual_dictionary: non-finite input");

  const Index p = targets.rows();
  const Index m = codes.rows();
  DualDiagnostics diag;
  diag.multipliers = Vector::Zero(m);

  std::vector<Index> live;
  for (Index k = 0; k < m; ++k) {
    if (codes.row(k).cwiseAbs().maxCoeff() > 0.0)
      live.push_back(k);
    else
      diag.dead_columns.push_back(k);
  }

  Dictionary out;
  out.radius = radius;
  out.columns = Matrix::Zero(p, m);
  if (live.empty() || p == 0) {
    if (diagnostics) *diagnostics = std::move(diag);
    return out;
  }

  const Index ml = static_cast<Index>(live.size());
  Matrix s_live(ml, codes.cols());
  for (Index r = 0; r < ml; ++r) s_live.row(r) = codes.row(live[r]);
  Matrix sst = s_live * s_live.transpose();
  const Matrix cross = targets * s_live.transpose();  // p x ml
  const double target_sq = targets.squaredNorm();

  {
    Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(sst, Eigen::EigenvaluesOnly).eigenvalues();
    if (ev.minCoeff() <= 1e-12 * ev.maxCoeff()) {
      sst.diagonal().array() += 1e-8;
      diag.ridge_applied = true;
    }
  }

  Eigen::LLT<Matrix> llt;
  Matrix b(p, ml);
  auto primal = [&](const Vector& lambda) {
    Matrix mm = sst;
    mm.diagonal() += lambda;
    llt.compute(mm);
    if (llt.info() != Eigen::Success) return false;
    b = llt.solve(cross.transpose()).transpose();
    return b.allFinite();
  };
  auto dual_value = [&](const Vector& lambda) {
    return target_sq - cross.cwiseProduct(b).sum() - radius * lambda.sum();
  };

  Vector lambda = Vector::Zero(ml);
  const double stop = 1e-3 * options.tol_constraint * std::max(1.0, radius);
  bool newton_ok = primal(lambda);
  int iter = 0;
  while (newton_ok && iter < options.max_iterations) {
    Vector grad = b.colwise().squaredNorm().transpose().array() - radius;
    double residual = 0.0;
    std::vector<Index> free;
    for (Index k = 0; k < ml; ++k) {
      residual = std::max(residual, lambda[k] > 0.0 ? std::abs(grad[k]) : std::max(grad[k], 0.0));
      if (!(lambda[k] <= 0.0 && grad[k] < 0.0)) free.push_back(k);
    }
    if (residual <= stop || free.empty()) break;
    ++iter;

    Matrix minv = llt.solve(Matrix::Identity(ml, ml));
    Matrix neg_hess = 2.0 * (b.transpose() * b).cwiseProduct(minv);
    const Index nf = static_cast<Index>(free.size());
    Matrix h(nf, nf);
    Vector g(nf);
    for (Index r = 0; r < nf; ++r) {
      g[r] = grad[free[r]];
      for (Index c = 0; c < nf; ++c) h(r, c) = neg_hess(free[r], free[c]);
    }
    h.diagonal().array() += 1e-12 * std::max(1.0, h.diagonal().maxCoeff());
    Eigen::LDLT<Matrix> ldlt(h);
    Vector step = (ldlt.info() == Eigen::Success && ldlt.isPositive()) ? Vector(ldlt.solve(g)) : g;
    if (!step.allFinite() || step.dot(g) <= 0.0) step = g;
    Vector direction = Vector::Zero(ml);
    for (Index r = 0; r < nf; ++r) direction[free[r]] = step[r];

    const double d0 = dual_value(lambda);
    const Matrix b0 = b;
    bool accepted = false;
    double t = 1.0;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      Vector trial = (lambda + t * direction).cwiseMax(0.0);
      if (!primal(trial)) continue;
      double d1 = dual_value(trial);
      if (d1 >= d0 + 1e-4 * grad.dot(trial - lambda)) {
        lambda = std::move(trial);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      b = b0;
      if (residual > options.tol_constraint) diag.used_fallback = true;
      break;
    }
  }
  if (!newton_ok) {
    diag.used_fallback = true;
    b = Matrix::Zero(p, ml);
  }
  if (iter >= options.max_iterations) diag.used_fallback = true;

  if (diag.used_fallback) {
    detail::projected_gradient_dictionary(b, s_live * s_live.transpose(), cross, radius,
                                          std::max(20000, 20 * options.max_iterations));
  }
  detail::project_to_ball(b, radius);

  for (Index r = 0; r < ml; ++r) {
    out.columns.col(live[r]) = b.col(r);
    diag.multipliers[live[r]] = lambda[r];
  }
  diag.iterations = iter;
  diag.kkt_residual = dictionary_kkt_residual(targets, codes, out.columns, radius);
  if (diagnostics) *diagnostics = std::move(diag);
  return out;
}

/// Re-seeds codewords that no sample uses with the worst-reconstructed
/// target columns, scaled onto the norm bound. Objective is unchanged since
/// those codewords carry no weight. Returns the number re-seeded.
inline Index reinitialize_dead_codewords(Dictionary& dict, const Eigen::Ref<const Matrix>& targets,
                                         const Eigen::Ref<const Matrix>& codes) {
  std::vector<Index> dead;
  for (Index k = 0; k < codes.rows(); ++k)
    if (codes.cols() == 0 || codes.row(k).cwiseAbs().maxCoeff() == 0.0) dead.push_back(k);
  if (dead.empty() || targets.cols() == 0) return 0;

  Vector err = (targets - dict.columns * codes).colwise().squaredNorm().transpose();
  std::vector<Index> order(static_cast<std::size_t>(targets.cols()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return err[a] > err[b]; });

  Index used = 0;
  std::size_t next = 0;
  for (Index k : dead) {
    while (next < order.size() && targets.col(order[next]).squaredNorm() == 0.0) ++next;
    if (next >= order.size() || err[order[next]] <= 0.0) break;
    const auto col = targets.col(order[next++]);
    dict.columns.col(k) = col * std::sqrt(dict.radius) / col.norm();
    ++used;
  }
  return used;
}

}  // namespace sssc
