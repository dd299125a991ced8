#pragma once

// Independent checks of certificates and solver verdicts: direct evaluation
// of the non-lifted conditions with matrix powers, instability witnesses from
// spectral radii of mode products, and simulation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dwell/analysis.hpp"
#include "dwell/lmi.hpp"
#include "dwell/synthesis.hpp"
#include "dwell/system_model.hpp"

namespace dwell {

struct Margin {
  std::string label;
  double value = 0.0;  // largest eigenvalue of the tested expression
};

struct MarginReport {
  std::vector<Margin> margins;
  double threshold = 0.0;
  bool passed = false;

  const Margin& worst() const;
  void add(std::string label, double value);
  /// Sets `passed` from the margins and the threshold.
  void close(double threshold_value);
};

/// A_i' P_i A_i - P_i and A_i^tau' P_j A_i^tau - P_i (forward) or
/// A_i^tau' P_i A_i^tau - P_j (backward), i != j. Passes when every largest
/// eigenvalue is <= threshold (default -delta/2).
MarginReport check_flat(const SwitchedSystem& sys, int tau, const std::vector<SymMat>& P, GeromelVariant variant,
                        std::optional<double> threshold = std::nullopt);

/// Lyapunov matrices of the non-lifted conditions implied by a certificate:
/// R_i(tau) (primal), or S_i(tau)^{-1} scaled so that min_i lambda_min = 1
/// (dual). Throws NotPositiveDefinite if an S_i(tau) cannot be inverted.
std::vector<SymMat> flat_lyapunov(const LiftedCertificate& cert);

struct LiftedCheck {
  MarginReport lmis;         // every constraint of the rebuilt problem
  MarginReport positivity;   // -lambda_min of every sequence element
  MarginReport telescoping;  // A^tau' R(tau) A^tau - R(0), or its dual
  bool passed() const { return lmis.passed && positivity.passed && telescoping.passed; }
};

/// Rebuilds the LMI problem a certificate belongs to (lifted, l2 or
/// synthesis, following its fields) and its decision vector.
LmiProblem problem_for(const SwitchedSystem& sys, const LiftedCertificate& cert);
Vec point_for(const LmiProblem& p, const LiftedCertificate& cert);

/// Throws DimensionMismatch for structurally malformed certificates.
LiftedCheck check_lifted(const SwitchedSystem& sys, const LiftedCertificate& cert, double tol = 1e-8);

/// Closed-loop conditions with P_i from `P`: (A_i + B_i K_i(tau))' P_i (.) - P_i
/// and Psi_i' P_i Psi_i - P_j, Psi_i = Abar_i(tau-1) ... Abar_i(0). P is
/// rescaled so that min_i lambda_min(P_i) = 1 before evaluation.
MarginReport check_closed_loop(const SwitchedSystem& sys, const ControllerGains& gains, const std::vector<SymMat>& P,
                               std::optional<double> threshold = std::nullopt);

/// One factor of a product pattern: the mode matrix (or the convex
/// combination of its vertices with `weights`) raised to `power`.
struct PatternFactor {
  int mode = 0;  // 0-based
  int power = 1;
  std::vector<double> weights;
};

/// Parses whitespace-separated "mode^power" tokens with 1-based modes and an
/// optional "@w1,w2,..." vertex-weight suffix, e.g. "1^5 2^5" or
/// "1@0.9,0.1 1@0,1 2^2@1,0". Throws ParseError.
std::vector<PatternFactor> parse_pattern(const std::string& text);

struct InstabilityWitness {
  std::string description;
  Mat product;
  double rho = 0.0;
  bool unstable() const { return rho > 1.0; }
};

/// Product of the factors left to right as written, and its spectral radius.
InstabilityWitness instability_witness(const SwitchedSystem& sys, const std::vector<PatternFactor>& pattern);

/// Samples products over the cycles i^tau j^tau (i < j), each factor drawn
/// from the polytope of its mode, and returns the largest spectral radius
/// found. A falsification tool only.
InstabilityWitness random_product(const SwitchedSystem& sys, int tau, int samples, std::uint64_t seed);

struct SimulationInputs {
  std::vector<Vec> w;                     // w(t), t = 0..horizon-1, sized by the active mode
  std::optional<ControllerGains> gains;   // u(t) = K x(t)
  std::optional<std::vector<SymMat>> P;   // Lyapunov traces
};

struct Trajectory {
  SwitchingSignal signal;
  std::vector<Vec> states;   // x(0..horizon)
  std::vector<Vec> inputs;   // u(0..horizon-1) when gains are given
  std::vector<Vec> disturbances;
  std::vector<Vec> outputs;  // z(0..horizon-1) when the modes have C
  std::vector<double> lyapunov_f;  // x(t)' P_sigma(t) x(t)
  std::vector<double> lyapunov_b;  // x(t)' P_sigma(t-1) x(t), with sigma(-1) = sigma(0)

  /// "t,mode,x_1..x_n[,u_..][,w_..][,z_..][,Vf,Vb]". Modes are 1-based.
  /// Rows t = 0..horizon; the last one carries only x and the Lyapunov
  /// values. A zero horizon gives the header alone.
  std::string to_csv() const;
};

/// Nominal modes. Throws DimensionMismatch on inconsistent inputs.
Trajectory simulate(const SwitchedSystem& sys, const SwitchingSignal& signal, const Vec& x0,
                    const SimulationInputs& in = {});

/// sqrt(sum |z|^2 / sum |w|^2) of a zero-initial-state simulation.
double empirical_gain(const SwitchedSystem& sys, const SwitchingSignal& signal, const std::vector<Vec>& w,
                      const std::optional<ControllerGains>& gains = std::nullopt);

/// Unit-energy Gaussian disturbance sequence matching the signal's modes.
std::vector<Vec> random_disturbance(const SwitchedSystem& sys, const SwitchingSignal& signal, std::uint64_t seed);

struct L2StatementA {
  MarginReport per_mode;  // the one-step bounded-real blocks
  MarginReport per_pair;  // the tau-step blocks for i != j
  bool passed() const { return per_mode.passed && per_pair.passed; }
};

/// Lifted input/output maps of mode i over tau steps.
struct ToeplitzMaps {
  Mat C;  // (tau q) x n, rows C A^k
  Mat E;  // n x (tau p), blocks A^{tau-1-k} E
  Mat F;  // (tau q) x (tau p), lower block Toeplitz of F, C E, C A E, ...
};
ToeplitzMaps toeplitz_maps(const Mode& mode, int tau);

/// Evaluates the non-lifted l2 conditions with the given P_i and gamma;
/// passes when every largest eigenvalue is <= 0.
L2StatementA check_l2_statement_a(const SwitchedSystem& sys, int tau, const std::vector<SymMat>& P, double gamma);

}  // namespace dwell
