#pragma once

// Mode-dependent, dwell-clock-dependent state feedback
//   u(phi_q + k) = K_i(min(k, tau)) x(phi_q + k),  i the active mode,
// recovered from the lifted dual certificate as K_i(k) = U_i(k) S_i(k)^{-1}.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dwell/analysis.hpp"
#include "dwell/matrix_core.hpp"
#include "dwell/system_model.hpp"

namespace dwell {

struct ControllerGains {
  int tau = 0;
  std::vector<std::vector<Mat>> K;  // [mode][k], k = 0..tau, each m_i x n

  /// Throws DimensionMismatch if the gains do not fit `sys`.
  void validate(const SwitchedSystem& sys) const;
};

/// K_mode(min(k_since_switch, tau)).
const Mat& gain_at(const ControllerGains& gains, int mode, int k_since_switch);

std::string dump_gains(const ControllerGains& g);
ControllerGains parse_gains(const std::string& json_text);
void save_gains(const ControllerGains& g, const std::filesystem::path& path);
ControllerGains load_gains(const std::filesystem::path& path);

/// Closed-loop matrices A_i + B_i K_i(k), indexed [mode][k]. Nominal modes.
std::vector<std::vector<Mat>> closed_loop_matrices(const SwitchedSystem& sys, const ControllerGains& gains);

struct SynthesisResult {
  ControllerGains gains;
  LiftedCertificate certificate;
  std::vector<std::vector<Mat>> closed_loop;
  std::optional<double> gamma;
  /// Worst closed-loop margin (negative is good) with P_i = S_i(tau)^{-1}.
  double closed_loop_margin = 0.0;
  std::string closed_loop_worst;
  int solver_iterations = 0;
};

/// Stabilizing gains under minimum dwell-time tau. Throws MissingMatrix,
/// NoControllerFound, CertificateDegenerate.
SynthesisResult synthesize(const SwitchedSystem& sys, int tau, const SolveOptions& opts = {});

/// l2 state feedback: fixed gamma if given, otherwise gamma is minimized by
/// bisection. In the minimizing mode, reaching the gamma cap without a
/// certificate raises NoControllerFound.
SynthesisResult synthesize_l2(const SwitchedSystem& sys, int tau, std::optional<double> gamma,
                              double tol_rel = kDefaultGammaTol, const SolveOptions& opts = {});

/// Closed-loop gamma-tau curve of synthesize_l2 in minimizing mode.
GainCurve synthesis_gain_sweep(const SwitchedSystem& sys, const std::vector<int>& taus,
                               double tol_rel = kDefaultGammaTol, const SolveOptions& opts = {});

}  // namespace dwell
