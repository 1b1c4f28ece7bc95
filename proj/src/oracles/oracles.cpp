#include "nano_nmpc/oracles/oracles.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace nano_nmpc::oracles {

void double_integrator_discrete(double dt, Mat& Ad, Mat& Bd) {
  Ad = Eigen::Matrix2d{{1.0, dt}, {0.0, 1.0}};
  Bd = Eigen::Vector2d(0.5 * dt * dt, dt);
}

FdJacobians fd_jacobians_reduced(const StateReduced<double>& x, const ControlInput<double>& u,
                                 const VehicleParams<double>& params, double h) {
  FdJacobians out{Mat(kStateDim, kStateDim), Mat(kStateDim, kInputDim)};
  for (int j = 0; j < kStateDim; ++j) {
    StateReduced<double> xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    out.A.col(j) = (dynamics_reduced(xp, u, params) - dynamics_reduced(xm, u, params)) / (2 * h);
  }
  for (int j = 0; j < kInputDim; ++j) {
    ControlInput<double> up = u, um = u;
    up[j] += h;
    um[j] -= h;
    out.B.col(j) = (dynamics_reduced(x, up, params) - dynamics_reduced(x, um, params)) / (2 * h);
  }
  return out;
}

double max_mixed_relative_error(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / std::max(1.0, std::abs(b(i, j))));
  return worst;
}

Vec enumerate_box_qp(const DenseQp<double>& qp) {
  const int n = qp.size();
  if (n > 12) throw std::invalid_argument("enumerate_box_qp: n too large");
  if (!qp.lb.allFinite() || !qp.ub.allFinite()) throw std::invalid_argument("enumerate_box_qp: bounds must be finite");
  long patterns = 1;
  for (int i = 0; i < n; ++i) patterns *= 3;

  Vec best = Vec::Zero(n);
  double best_obj = std::numeric_limits<double>::infinity();
  std::vector<int> code(n);
  for (long p = 0; p < patterns; ++p) {
    long rem = p;
    std::vector<int> free_idx;
    Vec z = Vec::Zero(n);
    for (int i = 0; i < n; ++i) {
      code[i] = static_cast<int>(rem % 3);
      rem /= 3;
      if (code[i] == 0) z[i] = qp.lb[i];
      else if (code[i] == 1) z[i] = qp.ub[i];
      else free_idx.push_back(i);
    }
    const int nf = static_cast<int>(free_idx.size());
    if (nf > 0) {
      Mat Hff(nf, nf);
      Vec rhs(nf);
      for (int a = 0; a < nf; ++a) {
        rhs[a] = -qp.g[free_idx[a]];
        for (int j = 0; j < n; ++j)
          if (code[j] != 2) rhs[a] -= qp.H(free_idx[a], j) * z[j];
        for (int b = 0; b < nf; ++b) Hff(a, b) = qp.H(free_idx[a], free_idx[b]);
      }
      const Vec zf = Hff.fullPivLu().solve(rhs);
      bool feasible = zf.allFinite();
      for (int a = 0; a < nf && feasible; ++a) {
        const int i = free_idx[a];
        const double slack = 1e-12 * (1.0 + std::abs(qp.lb[i]) + std::abs(qp.ub[i]));
        feasible = zf[a] >= qp.lb[i] - slack && zf[a] <= qp.ub[i] + slack;
        z[i] = zf[a];
      }
      if (!feasible) continue;
    }
    const double obj = 0.5 * z.dot(qp.H * z) + qp.g.dot(z);
    if (obj < best_obj) {
      best_obj = obj;
      best = z;
    }
  }
  return best;
}

namespace {

/// Dense KKT of the uncondensed QP with some inputs pinned to given values.
/// pinned[i] is NaN for free inputs.
SparseKktSolution solve_pinned(const LinearizedOcp<double>& lin, const Vec& dx0, const Vec& pinned) {
  const int n = lin.horizon();
  const int nx = static_cast<int>(lin.terminal_weight.size());
  const int nu = static_cast<int>(lin.u_lb.size());
  const int n_dx = (n + 1) * nx;
  const int n_var = n_dx + n * nu;
  int n_pin = 0;
  for (int i = 0; i < pinned.size(); ++i)
    if (!std::isnan(pinned[i])) ++n_pin;
  const int n_eq = (n + 1) * nx + n_pin;

  Mat K = Mat::Zero(n_var + n_eq, n_var + n_eq);
  Vec rhs = Vec::Zero(n_var + n_eq);
  auto xcol = [&](int k) { return k * nx; };
  auto ucol = [&](int k) { return n_dx + k * nu; };

  // Hessian and gradient of 1/2 sum ||r + d||^2_W.
  for (int k = 0; k <= n; ++k) {
    const Vec w = k < n ? Vec(lin.stage_weight.head(nx)) : lin.terminal_weight;
    for (int i = 0; i < nx; ++i) {
      K(xcol(k) + i, xcol(k) + i) = w[i];
      rhs[xcol(k) + i] = -w[i] * lin.x_residual[k][i];
    }
  }
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < nu; ++i) {
      const double w = lin.stage_weight[nx + i];
      K(ucol(k) + i, ucol(k) + i) = w;
      rhs[ucol(k) + i] = -w * lin.u_residual[k][i];
    }
  }
  // Equalities C w = b.
  int row = n_var;
  for (int i = 0; i < nx; ++i, ++row) {
    K(row, xcol(0) + i) = 1.0;
    rhs[row] = dx0[i];
  }
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < nx; ++i, ++row) {
      K(row, xcol(k + 1) + i) = 1.0;
      for (int j = 0; j < nx; ++j) K(row, xcol(k) + j) = -lin.A[k](i, j);
      for (int j = 0; j < nu; ++j) K(row, ucol(k) + j) = -lin.B[k](i, j);
      rhs[row] = lin.defect[k][i];
    }
  }
  for (int i = 0; i < pinned.size(); ++i) {
    if (std::isnan(pinned[i])) continue;
    K(row, n_dx + i) = 1.0;
    rhs[row] = pinned[i];
    ++row;
  }
  K.topRightCorner(n_var, n_eq) = K.bottomLeftCorner(n_eq, n_var).transpose();

  const Vec sol = K.fullPivLu().solve(rhs);
  SparseKktSolution out;
  out.dx.resize(n + 1);
  out.du.resize(n);
  for (int k = 0; k <= n; ++k) out.dx[k] = sol.segment(xcol(k), nx);
  for (int k = 0; k < n; ++k) out.du[k] = sol.segment(ucol(k), nu);
  double obj = 0.0;
  for (int k = 0; k <= n; ++k) {
    const Vec w = k < n ? Vec(lin.stage_weight.head(nx)) : lin.terminal_weight;
    obj += 0.5 * (w.array() * (lin.x_residual[k] + out.dx[k]).array().square()).sum();
  }
  for (int k = 0; k < n; ++k)
    obj += 0.5 * (lin.stage_weight.tail(nu).array() * (lin.u_residual[k] + out.du[k]).array().square()).sum();
  out.objective = obj;
  return out;
}

} // namespace

SparseKktSolution sparse_kkt_solve(const LinearizedOcp<double>& lin, const Vec& dx0) {
  const int nz = lin.horizon() * static_cast<int>(lin.u_lb.size());
  return solve_pinned(lin, dx0, Vec::Constant(nz, std::numeric_limits<double>::quiet_NaN()));
}

SparseKktSolution sparse_kkt_enumerate(const LinearizedOcp<double>& lin, const std::vector<Vec>& us,
                                       const Vec& dx0) {
  const int n = lin.horizon();
  const int nu = static_cast<int>(lin.u_lb.size());
  const int nz = n * nu;
  if (nz > 10) throw std::invalid_argument("sparse_kkt_enumerate: too many inputs to enumerate");
  Vec lo(nz), hi(nz);
  for (int k = 0; k < n; ++k) {
    lo.segment(k * nu, nu) = lin.u_lb - us[k];
    hi.segment(k * nu, nu) = lin.u_ub - us[k];
  }
  long patterns = 1;
  for (int i = 0; i < nz; ++i) patterns *= 3;

  SparseKktSolution best;
  best.objective = std::numeric_limits<double>::infinity();
  Vec pinned(nz);
  for (long p = 0; p < patterns; ++p) {
    long rem = p;
    for (int i = 0; i < nz; ++i) {
      const int c = static_cast<int>(rem % 3);
      rem /= 3;
      pinned[i] = c == 0 ? lo[i] : c == 1 ? hi[i] : std::numeric_limits<double>::quiet_NaN();
    }
    SparseKktSolution cand = solve_pinned(lin, dx0, pinned);
    bool feasible = true;
    for (int k = 0; k < n && feasible; ++k) {
      for (int i = 0; i < nu; ++i) {
        const double v = cand.du[k][i];
        const double slack = 1e-10 * (1.0 + std::abs(lo[k * nu + i]) + std::abs(hi[k * nu + i]));
        if (!std::isfinite(v) || v < lo[k * nu + i] - slack || v > hi[k * nu + i] + slack) {
          feasible = false;
          break;
        }
      }
    }
    if (feasible && cand.objective < best.objective) best = std::move(cand);
  }
  return best;
}

LinearFixture make_linear_fixture(int horizon, unsigned seed, bool tight_bounds) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> weight(0.5, 5.0);

  LinearFixture fx;
  fx.spec.horizon = horizon;
  fx.spec.dt = 0.2;
  fx.spec.integrator.n_steps = 1 + static_cast<int>(seed % 3);
  fx.spec.stage_weight = Vec(3);
  fx.spec.stage_weight << weight(rng), weight(rng), weight(rng) * 0.1;
  fx.spec.terminal_weight = Vec(2);
  fx.spec.terminal_weight << weight(rng) * 4, weight(rng);
  const double bound = tight_bounds ? 0.8 : 1e3;
  fx.spec.u_lb = Vec::Constant(1, -bound);
  fx.spec.u_ub = Vec::Constant(1, bound);
  fx.x0 = Vec(2);
  fx.x0 << 2.0 * unit(rng), unit(rng);
  for (int k = 0; k <= horizon; ++k) fx.ref.states.push_back(Vec(Eigen::Vector2d(unit(rng), unit(rng))));
  for (int k = 0; k < horizon; ++k) fx.ref.inputs.push_back(Vec::Constant(1, 0.2 * unit(rng)));
  return fx;
}

SparseKktSolution linear_fixture_optimum(const LinearFixture& fx) {
  // Linearization about the zero trajectory, built from the closed-form
  // discretization rather than the integrator.
  const int n = fx.spec.horizon;
  LinearizedOcp<double> lin;
  Mat Ad, Bd;
  double_integrator_discrete(fx.spec.dt, Ad, Bd);
  for (int k = 0; k < n; ++k) {
    lin.A.push_back(Ad);
    lin.B.push_back(Bd);
    lin.defect.push_back(Vec::Zero(2));
    lin.u_residual.push_back(-fx.ref.inputs[k]);
  }
  for (int k = 0; k <= n; ++k) lin.x_residual.push_back(-fx.ref.states[k]);
  lin.stage_weight = fx.spec.stage_weight;
  lin.terminal_weight = fx.spec.terminal_weight;
  lin.u_lb = fx.spec.u_lb;
  lin.u_ub = fx.spec.u_ub;
  const std::vector<Vec> zeros(n, Vec::Zero(1));
  return sparse_kkt_enumerate(lin, zeros, fx.x0);
}

} // namespace nano_nmpc::oracles
