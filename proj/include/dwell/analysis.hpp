#pragma once

// Drivers on top of the LMI builders and the solver: minimum dwell-time
// scans, l2-gain bisection and gamma-tau sweeps.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dwell/lmi.hpp"
#include "dwell/sdp.hpp"
#include "dwell/system_model.hpp"

namespace dwell {

/// Matrix sequences of a lifted certificate, indexed [mode][k], k = 0..tau.
struct LiftedCertificate {
  LiftedForm form = LiftedForm::PrimalR;
  int tau = 0;
  double epsilon = kCouplingEpsilon;
  std::optional<double> gamma;
  std::vector<std::vector<SymMat>> sequences;
  /// U_i(k) for state-feedback certificates, empty otherwise.
  std::vector<std::vector<Mat>> inputs;

  bool has_inputs() const { return !inputs.empty(); }
  /// Throws DimensionMismatch on wrong sequence lengths or block sizes.
  void validate(const SwitchedSystem& sys) const;
};

/// Reads the certificate stored in the decision vector of `p`.
LiftedCertificate extract_certificate(const LmiProblem& p, const Vec& x, std::optional<double> gamma = std::nullopt);

const char* form_name(LiftedForm f);
LiftedForm parse_form(const std::string& s);

std::string dump_certificate(const LiftedCertificate& c);
LiftedCertificate parse_certificate(const std::string& json_text);
void save_certificate(const LiftedCertificate& c, const std::filesystem::path& path);
LiftedCertificate load_certificate(const std::filesystem::path& path);

struct TauVerdict {
  int tau = 0;
  SolveStatus status = SolveStatus::Inconclusive;
  int iterations = 0;
  double margin = 0.0;
  double seconds = 0.0;
  std::string note;
};

struct DwellResult {
  std::optional<int> tau_star;
  std::vector<TauVerdict> per_tau;
  std::optional<LiftedCertificate> certificate;
};

/// Linear scan tau = 1..tau_max on the lifted conditions; stops at the first
/// certificate that also passes the independent checks of the verify module.
/// Nominal modes only.
DwellResult min_dwell(const SwitchedSystem& sys, int tau_max, LiftedForm form = LiftedForm::PrimalR,
                      const SolveOptions& opts = {});

/// Same scan with the constraints repeated for every polytope vertex.
DwellResult min_dwell_robust(const SwitchedSystem& sys, int tau_max, LiftedForm form = LiftedForm::PrimalR,
                             const SolveOptions& opts = {});

inline constexpr double kDefaultGammaTol = 1e-3;
inline constexpr double kGammaCap = 1048576.0;  // 2^20

struct BisectionResult {
  double gamma_lo = 0.0;
  double gamma_hi = 0.0;
  int evaluations = 0;
};

/// Generic gamma bisection. gamma_hi is doubled from 1 until `feasible_at`
/// accepts it (GainUnboundedOrUnstable past kGammaCap), then the bracket is
/// shrunk until (hi - lo) / hi <= tol_rel. The last accepted call is always
/// the one at the returned gamma_hi.
BisectionResult bisect_gamma(const std::function<bool(double)>& feasible_at, double tol_rel = kDefaultGammaTol);

struct GainResult {
  double gamma_upper = 0.0;
  LiftedCertificate certificate;
  int evaluations = 0;
};

GainResult l2_gain(const SwitchedSystem& sys, int tau, double tol_rel = kDefaultGammaTol,
                   LiftedForm form = LiftedForm::PrimalR, const SolveOptions& opts = {});

struct GainPoint {
  int tau = 0;
  std::optional<double> gamma_upper;
  std::string status;  // "ok", "unbounded", "no_controller" or "error: ..."
};

struct GainCurve {
  std::vector<GainPoint> points;
  double tolerance = kDefaultGammaTol;

  /// Header "tau,gamma_upper,status", 9 significant digits.
  std::string to_csv() const;
};

/// Copy of `opts` usable from several threads at once: the shared log stream
/// is dropped when more than one OpenMP thread may run.
SolveOptions concurrent_safe(const SolveOptions& opts);

/// Evaluates `gain_at_tau` for every tau (concurrently when OpenMP is
/// available) and merges by index. Exceptions become per-point statuses.
GainCurve sweep_gain(const std::vector<int>& taus, double tol_rel, const std::function<double(int)>& gain_at_tau);

GainCurve gamma_tau_sweep(const SwitchedSystem& sys, const std::vector<int>& taus, double tol_rel = kDefaultGammaTol,
                          LiftedForm form = LiftedForm::PrimalR, const SolveOptions& opts = {});

}  // namespace dwell
