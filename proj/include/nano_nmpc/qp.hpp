#pragma once

// Dense convex QP with box constraints,
//
//   min 1/2 z'Hz + g'z   s.t.  lb <= z <= ub,
//
// solved by a primal-dual interior point method with Mehrotra
// predictor-corrector steps. Infinite bounds are allowed; variables with
// lb == ub are eliminated before the interior-point phase. After the
// interior-point phase the active set it identifies is polished with one
// equality-constrained solve, which is kept only if it improves the KKT
// residual.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace nano_nmpc {

enum class QpStatus { optimal, max_iter, infeasible_input };

inline std::string_view to_string(QpStatus s) {
  switch (s) {
  case QpStatus::optimal: return "optimal";
  case QpStatus::max_iter: return "max_iter";
  case QpStatus::infeasible_input: return "infeasible_input";
  }
  return "unknown";
}

template <typename Scalar> struct DenseQp {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> H;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> g;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lb;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ub;

  int size() const { return static_cast<int>(g.size()); }

  Scalar objective(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& z) const {
    return Scalar(0.5) * z.dot(H * z) + g.dot(z);
  }
};

template <typename Scalar> struct QpSolution {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> z;
  QpStatus status = QpStatus::infeasible_input;
  Scalar kkt_residual = std::numeric_limits<Scalar>::infinity();
  int iterations = 0;
  bool polished = false;
  std::vector<Scalar> residual_history; // one entry per interior-point iterate
};

struct QpSettings {
  int max_iter = 100;
  double tolerance = 1e-8;
  double fraction_to_boundary = 0.995;
  bool polish = true;
};

/// Plain-text dump: dimension line, then H row by row, then g, lb, ub.
template <typename Scalar> void write_qp(std::ostream& os, const DenseQp<Scalar>& qp) {
  const Eigen::IOFormat fmt(Eigen::FullPrecision, Eigen::DontAlignCols, " ", "\n");
  os << "# box qp n=" << qp.size() << "\n" << qp.size() << "\n";
  os << qp.H.format(fmt) << "\n";
  os << qp.g.transpose().format(fmt) << "\n";
  os << qp.lb.transpose().format(fmt) << "\n";
  os << qp.ub.transpose().format(fmt) << "\n";
}

template <typename ScalarT> class BoxQpSolver {
public:
  using Scalar = ScalarT;
  using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  BoxQpSolver() = default;
  explicit BoxQpSolver(QpSettings settings) : settings_(settings) {}

  const QpSettings& settings() const { return settings_; }
  QpSettings& settings() { return settings_; }

  /// Every subsequent problem is written to `os` (nullptr disables).
  void set_dump(std::ostream* os) { dump_ = os; }

  QpSolution<Scalar> solve(const DenseQp<Scalar>& qp, const std::optional<VectorX>& warm_start = std::nullopt);

private:
  struct Reduced {
    std::vector<int> free;
    MatrixX H;
    VectorX g, lb, ub;
  };

  QpSolution<Scalar> interior_point(const Reduced& r, const std::optional<VectorX>& warm) ;
  void factorize(const MatrixX& H, const VectorX& diag);
  Scalar polish(const MatrixX& H, const VectorX& g, const VectorX& lb, const VectorX& ub, const VectorX& sl,
                const VectorX& su, const VectorX& yl, const VectorX& yu, VectorX& z) const;

  QpSettings settings_;
  std::ostream* dump_ = nullptr;
  Eigen::LLT<MatrixX> llt_;
  MatrixX kkt_;
};

/// One-shot convenience wrapper around BoxQpSolver.
template <typename Scalar>
QpSolution<Scalar> solve_box_qp(const DenseQp<Scalar>& qp,
                                const std::optional<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& warm_start = std::nullopt,
                                const QpSettings& settings = {}) {
  BoxQpSolver<Scalar> solver(settings);
  return solver.solve(qp, warm_start);
}

// ---------------------------------------------------------------------------

namespace detail {

template <typename Scalar> bool is_finite_bound(Scalar b) { return std::isfinite(static_cast<double>(b)); }

/// Largest alpha in (0, 1] with v + alpha * dv >= 0 (v > 0 assumed).
template <typename Vec> typename Vec::Scalar max_step(const Vec& v, const Vec& dv) {
  using Scalar = typename Vec::Scalar;
  Scalar alpha(1);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < Scalar(0)) alpha = std::min(alpha, -v[i] / dv[i]);
  }
  return alpha;
}

} // namespace detail

template <typename Scalar>
QpSolution<Scalar> BoxQpSolver<Scalar>::solve(const DenseQp<Scalar>& qp, const std::optional<VectorX>& warm_start) {
  if (dump_ != nullptr) write_qp(*dump_, qp);

  const int n = qp.size();
  QpSolution<Scalar> sol;
  sol.z = VectorX::Zero(n);
  const bool dims_ok = qp.H.rows() == n && qp.H.cols() == n && qp.lb.size() == n && qp.ub.size() == n &&
                       (!warm_start || warm_start->size() == n);
  if (!dims_ok || !qp.H.allFinite() || !qp.g.allFinite() || qp.lb.hasNaN() || qp.ub.hasNaN() ||
      (qp.lb.array() > qp.ub.array()).any() || (qp.lb.array() == std::numeric_limits<Scalar>::infinity()).any() ||
      (qp.ub.array() == -std::numeric_limits<Scalar>::infinity()).any()) {
    sol.status = QpStatus::infeasible_input;
    return sol;
  }

  // Eliminate fixed variables.
  Reduced r;
  VectorX z_full = VectorX::Zero(n);
  std::vector<int> fixed;
  for (int i = 0; i < n; ++i) {
    if (qp.lb[i] == qp.ub[i]) {
      fixed.push_back(i);
      z_full[i] = qp.lb[i];
    } else {
      r.free.push_back(i);
    }
  }
  const int nf = static_cast<int>(r.free.size());
  r.H.resize(nf, nf);
  r.g.resize(nf);
  r.lb.resize(nf);
  r.ub.resize(nf);
  std::optional<VectorX> warm_reduced;
  if (warm_start) warm_reduced = VectorX(nf);
  for (int a = 0; a < nf; ++a) {
    const int i = r.free[a];
    r.g[a] = qp.g[i];
    for (int j : fixed) r.g[a] += qp.H(i, j) * z_full[j];
    r.lb[a] = qp.lb[i];
    r.ub[a] = qp.ub[i];
    for (int b = 0; b < nf; ++b) r.H(a, b) = qp.H(i, r.free[b]);
    if (warm_start) (*warm_reduced)[a] = (*warm_start)[i];
  }
  r.H = Scalar(0.5) * (r.H + r.H.transpose()).eval();

  if (nf == 0) {
    sol.z = z_full;
    sol.status = QpStatus::optimal;
    sol.kkt_residual = Scalar(0);
    return sol;
  }

  QpSolution<Scalar> inner = interior_point(r, warm_reduced);
  for (int a = 0; a < nf; ++a) z_full[r.free[a]] = inner.z[a];
  inner.z = z_full.cwiseMax(qp.lb).cwiseMin(qp.ub);
  return inner;
}

template <typename Scalar> void BoxQpSolver<Scalar>::factorize(const MatrixX& H, const VectorX& diag) {
  const Eigen::Index n = H.rows();
  kkt_ = H;
  kkt_.diagonal() += diag;
  llt_.compute(kkt_);
  if (llt_.info() == Eigen::Success) return;
  Scalar eps = Scalar(1e-8) * (Scalar(1) + H.trace() / Scalar(n));
  for (int attempt = 0; attempt < 12; ++attempt, eps *= Scalar(10)) {
    kkt_ = H;
    kkt_.diagonal() += diag + VectorX::Constant(n, eps);
    llt_.compute(kkt_);
    if (llt_.info() == Eigen::Success) return;
  }
}

template <typename Scalar>
QpSolution<Scalar> BoxQpSolver<Scalar>::interior_point(const Reduced& r, const std::optional<VectorX>& warm) {
  const MatrixX& H = r.H;
  const VectorX& g = r.g;
  const Eigen::Index n = g.size();
  const Scalar tol(settings_.tolerance);
  const Scalar tau(settings_.fraction_to_boundary);

  // Bound masks (1 where finite). Slacks and duals of infinite bounds stay
  // at 1 and 0 and drop out through the masks.
  VectorX has_l(n), has_u(n);
  int m = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    has_l[i] = detail::is_finite_bound(r.lb[i]) ? Scalar(1) : Scalar(0);
    has_u[i] = detail::is_finite_bound(r.ub[i]) ? Scalar(1) : Scalar(0);
    m += static_cast<int>(has_l[i] + has_u[i]);
  }

  QpSolution<Scalar> sol;
  sol.status = QpStatus::max_iter;

  if (m == 0) {
    factorize(H, VectorX::Zero(n));
    sol.z = llt_.solve(-g);
    sol.iterations = 1;
    sol.kkt_residual = (H * sol.z + g).template lpNorm<Eigen::Infinity>();
    sol.residual_history.push_back(sol.kkt_residual);
    sol.status = sol.kkt_residual <= tol ? QpStatus::optimal : QpStatus::max_iter;
    return sol;
  }

  // Starting point.
  VectorX z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool fl = has_l[i] > 0, fu = has_u[i] > 0;
    Scalar zi;
    if (warm) {
      zi = (*warm)[i];
      if (!std::isfinite(static_cast<double>(zi))) zi = Scalar(0);
      Scalar margin(1e-3);
      if (fl && fu) margin = std::min(margin, Scalar(1e-3) * (r.ub[i] - r.lb[i]));
      if (fl) zi = std::max(zi, r.lb[i] + margin);
      if (fu) zi = std::min(zi, r.ub[i] - margin);
    } else if (fl && fu) {
      zi = Scalar(0.5) * (r.lb[i] + r.ub[i]);
    } else if (fl) {
      zi = std::max(Scalar(0), r.lb[i] + Scalar(1));
    } else if (fu) {
      zi = std::min(Scalar(0), r.ub[i] - Scalar(1));
    } else {
      zi = Scalar(0);
    }
    z[i] = zi;
  }
  VectorX sl = (z - r.lb).cwiseProduct(has_l) + (VectorX::Ones(n) - has_l);
  VectorX su = (r.ub - z).cwiseProduct(has_u) + (VectorX::Ones(n) - has_u);
  VectorX yl(n), yu(n);
  if (warm) {
    // Duals that make the starting point stationary, shifted into the interior.
    const VectorX grad = H * z + g;
    const Scalar kappa(1e-3);
    yl = (grad.cwiseMax(Scalar(0)).array() + kappa).matrix().cwiseProduct(has_l);
    yu = ((-grad).cwiseMax(Scalar(0)).array() + kappa).matrix().cwiseProduct(has_u);
  } else {
    yl = has_l;
    yu = has_u;
  }

  VectorX best_z = z, best_sl = sl, best_su = su, best_yl = yl, best_yu = yu;
  Scalar best_res = std::numeric_limits<Scalar>::infinity();

  VectorX rd(n), rcl(n), rcu(n), rhs(n), dz(n), dyl(n), dyu(n), dsl(n), dsu(n);
  VectorX dz_aff(n), dyl_aff(n), dyu_aff(n);

  auto direction = [&](const VectorX& cl, const VectorX& cu) {
    rhs = -rd + cl.cwiseQuotient(sl).cwiseProduct(has_l) - cu.cwiseQuotient(su).cwiseProduct(has_u);
    dz = llt_.solve(rhs);
    dyl = (cl - yl.cwiseProduct(dz)).cwiseQuotient(sl).cwiseProduct(has_l);
    dyu = (cu + yu.cwiseProduct(dz)).cwiseQuotient(su).cwiseProduct(has_u);
    dsl = dz.cwiseProduct(has_l);
    dsu = (-dz).cwiseProduct(has_u);
  };

  int it = 0;
  for (;; ++it) {
    rd = H * z + g - yl + yu;
    const VectorX comp_l = sl.cwiseProduct(yl).cwiseProduct(has_l);
    const VectorX comp_u = su.cwiseProduct(yu).cwiseProduct(has_u);
    const Scalar mu = (comp_l.sum() + comp_u.sum()) / Scalar(m);
    const Scalar res = std::max({rd.template lpNorm<Eigen::Infinity>(), comp_l.maxCoeff(), comp_u.maxCoeff()});
    sol.residual_history.push_back(res);
    if (res < best_res) {
      best_res = res;
      best_z = z;
      best_sl = sl;
      best_su = su;
      best_yl = yl;
      best_yu = yu;
    }
    if (res <= tol) {
      sol.status = QpStatus::optimal;
      break;
    }
    if (it >= settings_.max_iter || !std::isfinite(static_cast<double>(res))) break;

    const VectorX d = yl.cwiseQuotient(sl).cwiseProduct(has_l) + yu.cwiseQuotient(su).cwiseProduct(has_u);
    factorize(H, d);

    // Predictor.
    rcl = -comp_l;
    rcu = -comp_u;
    direction(rcl, rcu);
    const Scalar ap_aff = std::min(detail::max_step(sl, dsl), detail::max_step(su, dsu));
    const Scalar ad_aff = std::min(detail::max_step(yl, dyl), detail::max_step(yu, dyu));
    const Scalar mu_aff = (((sl + ap_aff * dsl).cwiseProduct(yl + ad_aff * dyl)).cwiseProduct(has_l).sum() +
                           ((su + ap_aff * dsu).cwiseProduct(yu + ad_aff * dyu)).cwiseProduct(has_u).sum()) /
                          Scalar(m);
    const Scalar sigma = std::pow(std::clamp(mu_aff / mu, Scalar(0), Scalar(1)), 3);

    // Corrector.
    rcl = (VectorX::Constant(n, sigma * mu) - comp_l - dsl.cwiseProduct(dyl)).cwiseProduct(has_l);
    rcu = (VectorX::Constant(n, sigma * mu) - comp_u - dsu.cwiseProduct(dyu)).cwiseProduct(has_u);
    direction(rcl, rcu);
    // One step length for primal and dual variables: the stationarity
    // residual then shrinks by exactly (1 - alpha) per iteration.
    const Scalar alpha = std::min(Scalar(1), tau * std::min({detail::max_step(sl, dsl), detail::max_step(su, dsu),
                                                             detail::max_step(yl, dyl), detail::max_step(yu, dyu)}));

    z += alpha * dz;
    sl += alpha * dsl;
    su += alpha * dsu;
    yl += alpha * dyl;
    yu += alpha * dyu;
  }
  sol.iterations = it;

  if (sol.status != QpStatus::optimal) {
    z = best_z;
    sl = best_sl;
    su = best_su;
    yl = best_yl;
    yu = best_yu;
  }
  sol.z = z;
  sol.kkt_residual = best_res;

  if (settings_.polish) {
    VectorX zp = z;
    const Scalar polished_res = polish(H, g, r.lb, r.ub, sl, su, yl, yu, zp);
    if (polished_res <= sol.kkt_residual) {
      sol.z = zp;
      sol.kkt_residual = polished_res;
      sol.polished = true;
      if (polished_res <= tol) sol.status = QpStatus::optimal;
    }
  }
  return sol;
}

template <typename Scalar>
Scalar BoxQpSolver<Scalar>::polish(const MatrixX& H, const VectorX& g, const VectorX& lb, const VectorX& ub,
                                   const VectorX& sl, const VectorX& su, const VectorX& yl, const VectorX& yu,
                                   VectorX& z) const {
  const Eigen::Index n = g.size();
  // -1 lower active, +1 upper active, 0 free
  std::vector<int> state(n, 0);
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (detail::is_finite_bound(lb[i]) && sl[i] < yl[i]) {
      state[i] = -1;
      z[i] = lb[i];
    } else if (detail::is_finite_bound(ub[i]) && su[i] < yu[i]) {
      state[i] = 1;
      z[i] = ub[i];
    } else {
      free.push_back(i);
    }
  }
  const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
  if (nf > 0) {
    MatrixX Hff(nf, nf);
    VectorX rhs(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      rhs[a] = -g[free[a]];
      for (Eigen::Index j = 0; j < n; ++j) {
        if (state[j] != 0) rhs[a] -= H(free[a], j) * z[j];
      }
      for (Eigen::Index b = 0; b < nf; ++b) Hff(a, b) = H(free[a], free[b]);
    }
    Eigen::LDLT<MatrixX> ldlt(Hff);
    if (ldlt.info() != Eigen::Success) return std::numeric_limits<Scalar>::infinity();
    const VectorX zf = ldlt.solve(rhs);
    if (!zf.allFinite()) return std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index a = 0; a < nf; ++a) z[free[a]] = zf[a];
  }

  const VectorX grad = H * z + g;
  Scalar res(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (state[i] == 0) {
      res = std::max(res, std::abs(grad[i]));
      if (detail::is_finite_bound(lb[i])) res = std::max(res, lb[i] - z[i]);
      if (detail::is_finite_bound(ub[i])) res = std::max(res, z[i] - ub[i]);
    } else if (state[i] < 0) {
      res = std::max(res, -grad[i]); // multiplier grad[i] must be >= 0
    } else {
      res = std::max(res, grad[i]);
    }
  }
  return res;
}

} // namespace nano_nmpc
