#pragma once

// Independent reference computations used to check the solver stack:
// finite differences, brute-force active-set enumeration and a dense
// solve of the uncondensed (sparse) KKT system. None of these share code
// paths with the routines they check.

#include <vector>

#include <Eigen/Dense>

#include "nano_nmpc/model.hpp"
#include "nano_nmpc/qp.hpp"
#include "nano_nmpc/solver.hpp"

namespace nano_nmpc::oracles {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// x' = v, v' = u. Linear, so RK4 reproduces its discretization exactly.
class DoubleIntegrator {
public:
  using Scalar = double;
  using VectorX = Eigen::VectorXd;
  using MatrixX = Eigen::MatrixXd;

  int state_dim() const { return 2; }
  int input_dim() const { return 1; }
  VectorX derivative(const VectorX& x, const VectorX& u) const { return Eigen::Vector2d(x[1], u[0]); }
  void jacobians(const VectorX&, const VectorX&, MatrixX& A, MatrixX& B) const {
    A = Eigen::Matrix2d{{0.0, 1.0}, {0.0, 0.0}};
    B = Eigen::Vector2d(0.0, 1.0);
  }
};

/// Closed-form zero-order-hold discretization of the double integrator.
void double_integrator_discrete(double dt, Mat& Ad, Mat& Bd);

struct FdJacobians {
  Mat A;
  Mat B;
};

/// Central differences of dynamics_reduced.
FdJacobians fd_jacobians_reduced(const StateReduced<double>& x, const ControlInput<double>& u,
                                 const VehicleParams<double>& params, double h = 1e-6);

/// Central differences of the discrete map integrate(x, u).
template <PredictionModel Model>
FdJacobians fd_sensitivities(const Model& model, const Vec& x, const Vec& u, double dt, const IntegratorConfig& cfg,
                             double h = 1e-6) {
  const int nx = model.state_dim(), nu = model.input_dim();
  FdJacobians out{Mat(nx, nx), Mat(nx, nu)};
  for (int j = 0; j < nx; ++j) {
    Vec xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    out.A.col(j) = (integrate(model, xp, u, dt, cfg) - integrate(model, xm, u, dt, cfg)) / (2 * h);
  }
  for (int j = 0; j < nu; ++j) {
    Vec up = u, um = u;
    up[j] += h;
    um[j] -= h;
    out.B.col(j) = (integrate(model, x, up, dt, cfg) - integrate(model, x, um, dt, cfg)) / (2 * h);
  }
  return out;
}

/// max |a - b| / max(1, |b|) over all entries.
double max_mixed_relative_error(const Mat& a, const Mat& b);

/// Global minimizer of a box QP by enumerating all 3^n lower/upper/free
/// patterns. Requires finite bounds and n <= 12.
Vec enumerate_box_qp(const DenseQp<double>& qp);

/// Solution of the uncondensed Gauss-Newton QP of a linearized shooting
/// problem, built over all (dx_0..dx_N, du_0..du_{N-1}) with the dynamics as
/// equality constraints, dx_0 fixed to `dx0`. Input bounds are ignored.
struct SparseKktSolution {
  std::vector<Vec> dx;
  std::vector<Vec> du;
  double objective = 0.0;
};
SparseKktSolution sparse_kkt_solve(const LinearizedOcp<double>& lin, const Vec& dx0);

/// As sparse_kkt_solve, but with the input bounds lin.u_lb - us[k] <= du_k <=
/// lin.u_ub - us[k] enforced by enumerating every bound-activity pattern of
/// the inputs (3^(N*nu) patterns, keep N*nu small).
SparseKktSolution sparse_kkt_enumerate(const LinearizedOcp<double>& lin, const std::vector<Vec>& us,
                                       const Vec& dx0);

/// Linear-quadratic tracking problem on the double integrator whose exact
/// optimum is the reference the RTI step is checked against.
struct LinearFixture {
  DoubleIntegrator model;
  OcpSpec<double> spec;
  ReferenceWindow<double> ref;
  Vec x0;
};
LinearFixture make_linear_fixture(int horizon, unsigned seed, bool tight_bounds);

/// Exact optimum of a linear fixture (by enumeration over the sparse KKT
/// system, linearized about an all-zero trajectory).
SparseKktSolution linear_fixture_optimum(const LinearFixture& fx);

} // namespace nano_nmpc::oracles
