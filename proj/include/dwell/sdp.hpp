#pragma once

// Small dense semidefinite feasibility solver.
//
// The built-in backend solves the phase-I problem
//
//   minimize t  subject to  F_j(x) + d_j I <= t I  for every constraint j,
//
// with d_j = delta for strict constraints and 0 otherwise, by a log-det
// barrier path-following method with damped Newton steps. A Feasible verdict
// is only returned for a witness that passes an independent re-evaluation of
// every constraint. The search is confined to a large ball around the
// origin so that the barrier always has a minimizer.

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "dwell/lmi.hpp"
#include "dwell/matrix_core.hpp"

namespace dwell {

enum class SolveStatus { Feasible, Infeasible, Inconclusive };

const char* to_string(SolveStatus s);

struct SolveOptions {
  int max_newton_iters = 200;
  double barrier_mu_factor = 5.0;
  /// Phase-I value below which a point is tested as a witness; -delta/2 if unset.
  std::optional<double> feas_target;
  double witness_check_tol = 1e-9;
  std::optional<long> time_limit_ms;
  /// Use the OpenMP Newton assembly. Off by default: one solve is meant to be
  /// single-threaded so that independent solves can run side by side.
  bool parallel_assembly = false;
  /// Iteration log: "iter t s decrement |x|" per Newton step.
  std::ostream* log = nullptr;
  std::optional<Vec> initial_point;
  /// Phase-I search is confined to |x| <= ball_scale * max(1, |x0|), so an
  /// Infeasible verdict means no witness exists inside that ball.
  double ball_scale = 1e6;

  /// Throws InvalidInput for non-positive fields.
  void validate() const;
};

struct SolveOutcome {
  SolveStatus status = SolveStatus::Inconclusive;
  std::optional<Vec> witness;
  /// max_j lambda_max(F_j(x) + d_j I) at the returned (or best) point.
  double achieved_margin = 0.0;
  int iterations = 0;
  std::string reason;
  /// Most violated constraint at the best point reached.
  std::string worst_label;
  double worst_value = 0.0;
};

/// Per-constraint re-evaluation of a candidate point.
struct WitnessCheck {
  bool passed = false;
  std::string worst_label;
  /// lambda_max(F_j(x)) minus the allowance of constraint j, maximized over j.
  double worst_excess = 0.0;
};

/// Strict constraints must satisfy lambda_max(F_j(x)) <= -delta/2, the others
/// lambda_max(F_j(x)) <= tol. Eigenvalues come from matrix_core.
WitnessCheck check_witness(const LmiProblem& p, const Vec& x, double tol);

class SdpBackend {
 public:
  virtual ~SdpBackend() = default;
  virtual std::string name() const = 0;
  /// Raw backend answer; solve() re-verifies any witness it returns.
  virtual SolveOutcome run(const LmiProblem& p, const SolveOptions& opts) const = 0;
};

class BarrierBackend final : public SdpBackend {
 public:
  std::string name() const override { return "phase1-barrier"; }
  SolveOutcome run(const LmiProblem& p, const SolveOptions& opts) const override;
};

SolveOutcome solve(const LmiProblem& p, const SolveOptions& opts = {});
SolveOutcome solve(const SdpBackend& backend, const LmiProblem& p, const SolveOptions& opts = {});

}  // namespace dwell
