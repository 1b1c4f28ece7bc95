#pragma once

// Gauss-Newton SQP with real-time iterations over the multiple-shooting OCP.
//
// One iteration linearizes the shooting trajectory (discrete sensitivities of
// the RK4 map), condenses the state increments out of the QP, solves the
// dense box QP in the input increments and expands the step back to the
// states. The work is split into a preparation phase, which does not need
// the measured state, and a feedback phase that anchors the affine state
// propagation at the measurement and solves the QP.

#include <chrono>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "nano_nmpc/integrator.hpp"
#include "nano_nmpc/ocp.hpp"
#include "nano_nmpc/qp.hpp"

namespace nano_nmpc {

template <typename Scalar> struct ShootingTrajectory {
  std::vector<VectorX<Scalar>> xs; // horizon + 1
  std::vector<VectorX<Scalar>> us; // horizon

  int horizon() const { return static_cast<int>(us.size()); }

  bool valid() const {
    if (xs.size() != us.size() + 1 || us.empty()) return false;
    for (const auto& x : xs)
      if (!x.allFinite()) return false;
    for (const auto& u : us)
      if (!u.allFinite()) return false;
    return true;
  }
};

/// Per-stage linearization of the shooting problem. `x_residual[k]` is
/// xs[k] minus the (hemisphere-aligned) reference, `u_residual[k]` likewise.
template <typename Scalar> struct LinearizedOcp {
  std::vector<MatrixX<Scalar>> A;
  std::vector<MatrixX<Scalar>> B;
  std::vector<VectorX<Scalar>> defect;     // F(xs[k], us[k]) - xs[k+1]
  std::vector<VectorX<Scalar>> x_residual; // horizon + 1
  std::vector<VectorX<Scalar>> u_residual; // horizon
  VectorX<Scalar> stage_weight;
  VectorX<Scalar> terminal_weight;
  VectorX<Scalar> u_lb; // bounds on the input increments
  VectorX<Scalar> u_ub;

  int horizon() const { return static_cast<int>(A.size()); }
};

/// Dense QP in the stacked input increments. The gradient is affine in the
/// initial-state increment dx0: g(dx0) = qp.g + gradient_x0 * dx0.
template <typename Scalar> struct CondensedQp {
  DenseQp<Scalar> qp;
  MatrixX<Scalar> gradient_x0;

  DenseQp<Scalar> anchored(const VectorX<Scalar>& dx0) const {
    DenseQp<Scalar> out = qp;
    out.g.noalias() += gradient_x0 * dx0;
    return out;
  }
};

struct RtiTimings {
  double prepare_s = 0.0;
  double feedback_s = 0.0;
  double total_s = 0.0;
};

template <typename Scalar> struct RtiSolution {
  VectorX<Scalar> u0;
  ShootingTrajectory<Scalar> trajectory;
  QpStatus qp_status = QpStatus::optimal;
  int qp_iterations = 0;
  Scalar kkt_residual = Scalar(0); // of the iterate the step was computed at
  Scalar step_norm = Scalar(0);    // inf-norm of the (dx, du) step
  RtiTimings timings;
};

template <PredictionModel Model>
LinearizedOcp<typename Model::Scalar> linearize(const Model& model,
                                                const ShootingTrajectory<typename Model::Scalar>& traj,
                                                const ReferenceWindow<typename Model::Scalar>& ref,
                                                const OcpSpec<typename Model::Scalar>& spec) {
  using Scalar = typename Model::Scalar;
  const int n = spec.horizon;
  if (traj.horizon() != n || static_cast<int>(ref.states.size()) != n + 1 || ref.horizon() != n) {
    throw InvalidInput("linearize: trajectory/reference length does not match the horizon");
  }
  LinearizedOcp<Scalar> lin;
  lin.A.resize(n);
  lin.B.resize(n);
  lin.defect.resize(n);
  lin.x_residual.resize(n + 1);
  lin.u_residual.resize(n);
  lin.stage_weight = spec.stage_weight;
  lin.terminal_weight = spec.terminal_weight;
  lin.u_lb = spec.u_lb;
  lin.u_ub = spec.u_ub;
  for (int k = 0; k <= n; ++k) {
    VectorX<Scalar> xr = ref.states[k];
    if constexpr (requires { model.align_reference(xr, traj.xs[k]); }) {
      model.align_reference(xr, traj.xs[k]);
    }
    lin.x_residual[k] = traj.xs[k] - xr;
    if (k == n) break;
    auto sens = integrate_with_sensitivities(model, traj.xs[k], traj.us[k], spec.dt, spec.integrator);
    lin.A[k] = std::move(sens.S_x);
    lin.B[k] = std::move(sens.S_u);
    lin.defect[k] = sens.x_next - traj.xs[k + 1];
    lin.u_residual[k] = traj.us[k] - ref.inputs[k];
  }
  return lin;
}

/// Eliminates the state increments: dx_k = E_k dx0 + M_k dU + d_k.
template <typename Scalar>
CondensedQp<Scalar> condense(const LinearizedOcp<Scalar>& lin, const ShootingTrajectory<Scalar>& traj) {
  const int n = lin.horizon();
  const Eigen::Index nx = lin.terminal_weight.size();
  const Eigen::Index nu = lin.u_lb.size();
  const Eigen::Index nz = n * nu;

  CondensedQp<Scalar> out;
  DenseQp<Scalar>& qp = out.qp;
  qp.H = MatrixX<Scalar>::Zero(nz, nz);
  qp.g = VectorX<Scalar>::Zero(nz);
  qp.lb.resize(nz);
  qp.ub.resize(nz);
  out.gradient_x0 = MatrixX<Scalar>::Zero(nz, nx);

  MatrixX<Scalar> E = MatrixX<Scalar>::Identity(nx, nx);
  MatrixX<Scalar> M = MatrixX<Scalar>::Zero(nx, nz);
  VectorX<Scalar> d = VectorX<Scalar>::Zero(nx);
  const auto wu = lin.stage_weight.tail(nu);

  for (int k = 0; k < n; ++k) {
    // input terms of stage k
    qp.H.block(k * nu, k * nu, nu, nu).diagonal() += wu;
    qp.g.segment(k * nu, nu) += wu.cwiseProduct(lin.u_residual[k]);
    qp.lb.segment(k * nu, nu) = lin.u_lb - traj.us[k];
    qp.ub.segment(k * nu, nu) = lin.u_ub - traj.us[k];

    // propagate to state k+1; only the first (k+1)*nu columns of M are nonzero
    const Eigen::Index cols = (k + 1) * nu;
    MatrixX<Scalar> M_next(nx, nz);
    M_next.setZero();
    M_next.leftCols(k * nu).noalias() = lin.A[k] * M.leftCols(k * nu);
    M_next.block(0, k * nu, nx, nu) = lin.B[k];
    M = std::move(M_next);
    E = lin.A[k] * E;
    d = lin.A[k] * d + lin.defect[k];

    const auto w = (k + 1 < n) ? lin.stage_weight.head(nx) : lin.terminal_weight.head(nx);
    const MatrixX<Scalar> WM = w.asDiagonal() * M.leftCols(cols);
    qp.H.topLeftCorner(cols, cols).noalias() += M.leftCols(cols).transpose() * WM;
    qp.g.head(cols).noalias() += WM.transpose() * (lin.x_residual[k + 1] + d);
    out.gradient_x0.topRows(cols).noalias() += WM.transpose() * E;
  }
  qp.H = Scalar(0.5) * (qp.H + qp.H.transpose()).eval();
  return out;
}

/// Condensed QP anchored at the measured state x0.
template <typename Scalar>
DenseQp<Scalar> condense(const LinearizedOcp<Scalar>& lin, const ShootingTrajectory<Scalar>& traj,
                         const VectorX<Scalar>& x0) {
  return condense(lin, traj).anchored(x0 - traj.xs.front());
}

/// Applies the input increments and the matching state increments from the
/// linearized dynamics.
template <typename Scalar>
ShootingTrajectory<Scalar> expand(const LinearizedOcp<Scalar>& lin, const ShootingTrajectory<Scalar>& traj,
                                  const VectorX<Scalar>& dx0, const VectorX<Scalar>& du, Scalar* step_norm = nullptr) {
  const int n = lin.horizon();
  const Eigen::Index nu = lin.u_lb.size();
  ShootingTrajectory<Scalar> out = traj;
  VectorX<Scalar> dx = dx0;
  Scalar norm = std::max(dx0.template lpNorm<Eigen::Infinity>(), du.template lpNorm<Eigen::Infinity>());
  out.xs[0] += dx;
  for (int k = 0; k < n; ++k) {
    const auto duk = du.segment(k * nu, nu);
    out.us[k] += duk;
    dx = lin.A[k] * dx + lin.B[k] * duk + lin.defect[k];
    norm = std::max(norm, dx.template lpNorm<Eigen::Infinity>());
    out.xs[k + 1] += dx;
  }
  if (step_norm != nullptr) *step_norm = norm;
  return out;
}

/// First-order optimality of the shooting NLP at the linearization point:
/// max of the initial-value and defect residuals and the projected reduced
/// gradient with respect to the inputs.
template <typename Scalar>
Scalar nlp_kkt_residual(const LinearizedOcp<Scalar>& lin, const ShootingTrajectory<Scalar>& traj,
                        const VectorX<Scalar>& x0, const VectorX<Scalar>& u_lb, const VectorX<Scalar>& u_ub) {
  const int n = lin.horizon();
  const Eigen::Index nx = lin.terminal_weight.size();
  const Eigen::Index nu = u_lb.size();
  Scalar res = (x0 - traj.xs.front()).template lpNorm<Eigen::Infinity>();
  for (const auto& c : lin.defect) res = std::max(res, c.template lpNorm<Eigen::Infinity>());

  VectorX<Scalar> lambda = lin.terminal_weight.cwiseProduct(lin.x_residual[n]);
  for (int k = n - 1; k >= 0; --k) {
    const VectorX<Scalar> grad_u =
        lin.stage_weight.tail(nu).cwiseProduct(lin.u_residual[k]) + lin.B[k].transpose() * lambda;
    const VectorX<Scalar> projected = (traj.us[k] - grad_u).cwiseMax(u_lb).cwiseMin(u_ub);
    res = std::max(res, (traj.us[k] - projected).template lpNorm<Eigen::Infinity>());
    lambda = lin.stage_weight.head(nx).cwiseProduct(lin.x_residual[k]) + lin.A[k].transpose() * lambda;
  }
  return res;
}

/// Moves the trajectory one interval forward; the new terminal state is the
/// old terminal state propagated with the repeated last input.
template <PredictionModel Model>
ShootingTrajectory<typename Model::Scalar> shift(const Model& model,
                                                 const ShootingTrajectory<typename Model::Scalar>& traj,
                                                 typename Model::Scalar dt, const IntegratorConfig& config) {
  const int n = traj.horizon();
  ShootingTrajectory<typename Model::Scalar> out;
  out.xs.reserve(n + 1);
  out.us.reserve(n);
  for (int k = 1; k <= n; ++k) out.xs.push_back(traj.xs[k]);
  for (int k = 1; k < n; ++k) out.us.push_back(traj.us[k]);
  out.us.push_back(traj.us[n - 1]);
  out.xs.push_back(integrate(model, traj.xs[n], traj.us[n - 1], dt, config));
  return out;
}

template <typename Scalar> struct ConvergenceReport {
  int iterations = 0;
  Scalar kkt_residual = Scalar(0);
  bool converged = false;
};

template <PredictionModel Model> class RtiSolver {
public:
  using Scalar = typename Model::Scalar;
  using Vector = VectorX<Scalar>;
  using Clock = std::chrono::steady_clock;

  RtiSolver(Model model, OcpSpec<Scalar> spec, QpSettings qp_settings = {})
      : model_(std::move(model)), spec_(std::move(spec)), qp_(qp_settings) {
    spec_.validate();
    if (spec_.state_dim() != model_.state_dim() || spec_.input_dim() != model_.input_dim()) {
      throw InvalidInput("RtiSolver: OCP dimensions do not match the model");
    }
  }

  const Model& model() const { return model_; }
  const OcpSpec<Scalar>& spec() const { return spec_; }
  BoxQpSolver<Scalar>& qp_solver() { return qp_; }
  const ShootingTrajectory<Scalar>& trajectory() const { return traj_; }

  void set_trajectory(ShootingTrajectory<Scalar> traj) {
    if (traj.horizon() != spec_.horizon || !traj.valid()) {
      throw InvalidInput("RtiSolver: trajectory does not match the horizon or is not finite");
    }
    traj_ = std::move(traj);
    prepared_.reset();
  }

  /// Cold start: every node at x0, every input at u_guess (clamped).
  void initialize(const Vector& x0, const Vector& u_guess) {
    ShootingTrajectory<Scalar> t;
    t.xs.assign(spec_.horizon + 1, x0);
    t.us.assign(spec_.horizon, u_guess.cwiseMax(spec_.u_lb).cwiseMin(spec_.u_ub));
    set_trajectory(std::move(t));
  }

  /// Linearization and condensing; independent of the measured state.
  void prepare(const ReferenceWindow<Scalar>& ref) {
    require_initialized();
    const auto t0 = Clock::now();
    Prepared p;
    p.lin = linearize(model_, traj_, ref, spec_);
    p.condensed = condense(p.lin, traj_);
    p.seconds = seconds_since(t0);
    prepared_ = std::move(p);
  }

  /// Anchors at the measured state, solves the QP, updates the trajectory.
  RtiSolution<Scalar> feedback(const Vector& x0) {
    if (!prepared_) throw std::logic_error("RtiSolver::feedback called without prepare");
    if (x0.size() != model_.state_dim() || !x0.allFinite()) {
      throw InvalidInput("RtiSolver::feedback: invalid initial state");
    }
    const auto t0 = Clock::now();
    const Prepared& p = *prepared_;
    const Vector dx0 = x0 - traj_.xs.front();

    RtiSolution<Scalar> out;
    out.kkt_residual = nlp_kkt_residual(p.lin, traj_, x0, spec_.u_lb, spec_.u_ub);
    const DenseQp<Scalar> qp = p.condensed.anchored(dx0);
    const QpSolution<Scalar> qs = qp_.solve(qp);
    out.qp_status = qs.status;
    out.qp_iterations = qs.iterations;
    if (qs.status == QpStatus::infeasible_input || !qs.z.allFinite()) {
      out.qp_status = QpStatus::infeasible_input;
      out.trajectory = traj_;
      out.u0 = traj_.us.front().cwiseMax(spec_.u_lb).cwiseMin(spec_.u_ub);
    } else {
      traj_ = expand(p.lin, traj_, dx0, qs.z, &out.step_norm);
      for (auto& u : traj_.us) u = u.cwiseMax(spec_.u_lb).cwiseMin(spec_.u_ub);
      out.trajectory = traj_;
      out.u0 = traj_.us.front();
    }
    out.timings.prepare_s = p.seconds;
    out.timings.feedback_s = seconds_since(t0);
    out.timings.total_s = out.timings.prepare_s + out.timings.feedback_s;
    prepared_.reset();
    return out;
  }

  /// Exactly one SQP iteration.
  RtiSolution<Scalar> rti_step(const Vector& x0, const ReferenceWindow<Scalar>& ref) {
    prepare(ref);
    return feedback(x0);
  }

  void shift() {
    require_initialized();
    traj_ = nano_nmpc::shift(model_, traj_, spec_.dt, spec_.integrator);
    prepared_.reset();
  }

  /// Repeated SQP iterations at a frozen state and reference. Offline use
  /// only; the closed loop runs one iteration per control period.
  ConvergenceReport<Scalar> iterate(const Vector& x0, const ReferenceWindow<Scalar>& ref, int max_iter = 200,
                                    Scalar tol = Scalar(1e-4)) {
    ConvergenceReport<Scalar> report;
    for (int i = 0; i < max_iter; ++i) {
      const auto sol = rti_step(x0, ref);
      report.iterations = i + 1;
      report.kkt_residual = sol.kkt_residual;
      if (sol.kkt_residual <= tol) {
        report.converged = true;
        report.iterations = i;
        break;
      }
    }
    if (!report.converged) {
      // residual of the final iterate
      prepare(ref);
      report.kkt_residual = nlp_kkt_residual(prepared_->lin, traj_, x0, spec_.u_lb, spec_.u_ub);
      prepared_.reset();
      report.converged = report.kkt_residual <= tol;
      report.iterations = max_iter;
    }
    return report;
  }

private:
  struct Prepared {
    LinearizedOcp<Scalar> lin;
    CondensedQp<Scalar> condensed;
    double seconds = 0.0;
  };

  void require_initialized() const {
    if (traj_.horizon() != spec_.horizon) throw std::logic_error("RtiSolver: trajectory not initialized");
  }

  static double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
  }

  Model model_;
  OcpSpec<Scalar> spec_;
  BoxQpSolver<Scalar> qp_;
  ShootingTrajectory<Scalar> traj_;
  std::optional<Prepared> prepared_;
};

} // namespace nano_nmpc
