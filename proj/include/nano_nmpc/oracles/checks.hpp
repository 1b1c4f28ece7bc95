#pragma once

// Randomized oracle suites shared by the unit tests, the acceptance binary
// and `nano-nmpc check`.

#include <string>
#include <vector>

namespace nano_nmpc::oracles {

struct CheckResult {
  std::string name;
  bool passed = false;
  int cases = 0;
  double worst = 0.0;     // worst observed error
  double threshold = 0.0; // pass iff worst <= threshold (and no other failure)
  std::string detail;
};

/// Analytic prediction-model Jacobians vs central differences (h = 1e-6).
CheckResult check_jacobians(int cases = 100, unsigned seed = 1);

/// Box QP solver vs 3^n active-set enumeration on random SPD instances.
CheckResult check_qp_enumeration(int cases = 200, unsigned seed = 2);

/// Condensed QP solution, expanded to states, vs the dense solve of the
/// uncondensed KKT system, on random quadrotor linearizations (N <= 5) with
/// inactive bounds.
CheckResult check_condensing(int cases = 50, unsigned seed = 3);

/// One RTI step on the linear-quadratic double-integrator fixture from a
/// random initial guess vs the exact constrained horizon optimum.
CheckResult check_rti_linear(int cases = 50, unsigned seed = 4);

std::vector<CheckResult> run_all_checks();

std::string format_check(const CheckResult& r);

} // namespace nano_nmpc::oracles
