#include "dwell/synthesis.hpp"

#include <fstream>
#include <sstream>

#include "dwell/errors.hpp"
#include "dwell/json_io.hpp"
#include "dwell/lmi.hpp"
#include "dwell/verify.hpp"

namespace dwell {

using json_io::json;

void ControllerGains::validate(const SwitchedSystem& sys) const {
  if (tau < 1) throw DimensionMismatch("gains: tau must be >= 1");
  if (static_cast<int>(K.size()) != sys.num_modes()) {
    throw DimensionMismatch("gains: expected " + std::to_string(sys.num_modes()) + " modes");
  }
  for (std::size_t i = 0; i < K.size(); ++i) {
    if (static_cast<int>(K[i].size()) != tau + 1) {
      throw DimensionMismatch("gains: mode " + std::to_string(i + 1) + " must have tau+1 = " + std::to_string(tau + 1) + " gains");
    }
    const int m = sys.modes[i].input_dim();
    for (const Mat& k : K[i]) {
      if (k.rows() != m || k.cols() != sys.n) {
        throw DimensionMismatch("gains: K of mode " + std::to_string(i + 1) + " must be " + std::to_string(m) + "x" +
                                std::to_string(sys.n));
      }
      if (!all_finite(k)) throw DimensionMismatch("gains: non-finite entry");
    }
  }
}

const Mat& gain_at(const ControllerGains& gains, int mode, int k_since_switch) {
  if (mode < 0 || mode >= static_cast<int>(gains.K.size())) throw InvalidInput("gain_at: mode out of range");
  if (k_since_switch < 0) throw InvalidInput("gain_at: negative time since switch");
  return gains.K[mode][std::min(k_since_switch, gains.tau)];
}

std::string dump_gains(const ControllerGains& g) {
  json doc;
  doc["tau"] = g.tau;
  doc["modes"] = json::array();
  for (const auto& seq : g.K) {
    json ks = json::array();
    for (const Mat& k : seq) ks.push_back(json_io::from_mat(k));
    doc["modes"].push_back(json{{"K", std::move(ks)}});
  }
  return doc.dump(2);
}

ControllerGains parse_gains(const std::string& json_text) {
  const json doc = json_io::parse_text(json_text, "gains");
  json_io::require_keys(doc, {"tau", "modes"}, "gains");
  if (!doc.contains("tau") || !doc["tau"].is_number_integer()) throw ParseError("gains.tau: expected an integer");
  if (!doc.contains("modes") || !doc["modes"].is_array()) throw ParseError("gains.modes: expected an array");
  ControllerGains g;
  g.tau = doc["tau"].get<int>();
  for (std::size_t i = 0; i < doc["modes"].size(); ++i) {
    const json& mj = doc["modes"][i];
    const std::string where = "gains.modes[" + std::to_string(i) + "]";
    json_io::require_keys(mj, {"K"}, where);
    if (!mj.contains("K") || !mj["K"].is_array()) throw ParseError(where + ".K: expected an array");
    std::vector<Mat> seq;
    for (std::size_t k = 0; k < mj["K"].size(); ++k) seq.push_back(json_io::to_mat(mj["K"][k], where + ".K[" + std::to_string(k) + "]"));
    g.K.push_back(std::move(seq));
  }
  return g;
}

void save_gains(const ControllerGains& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput(path.string() + ": cannot write");
  out << dump_gains(g) << "\n";
}

ControllerGains load_gains(const std::filesystem::path& path) {
  try {
    return parse_gains(json_io::read_file(path.string()));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<std::vector<Mat>> closed_loop_matrices(const SwitchedSystem& sys, const ControllerGains& gains) {
  gains.validate(sys);
  std::vector<std::vector<Mat>> out(sys.modes.size());
  for (int i = 0; i < sys.num_modes(); ++i) {
    const Mode& m = sys.modes[i];
    if (!m.B) throw MissingMatrix("closed loop: mode " + std::to_string(i + 1) + " has no B");
    for (const Mat& k : gains.K[i]) out[i].push_back(m.A() + *m.B * k);
  }
  return out;
}

namespace {

[[noreturn]] void no_controller(int tau, const SolveOutcome& o, const std::string& extra = {}) {
  std::ostringstream msg;
  msg << "no controller certified at tau=" << tau << extra << ": solver " << to_string(o.status) << " (" << o.reason
      << "); most violated: " << o.worst_label << " (" << o.worst_value << ")";
  throw NoControllerFound(msg.str());
}

SynthesisResult finish(const SwitchedSystem& sys, LiftedCertificate cert, int iterations) {
  SynthesisResult r;
  r.gains.tau = cert.tau;
  for (std::size_t i = 0; i < cert.sequences.size(); ++i) {
    std::vector<Mat> seq;
    for (int k = 0; k <= cert.tau; ++k) {
      const SymMat& s = cert.sequences[i][k];
      if (!(min_eig(s) > 0.0)) {
        throw CertificateDegenerate("S_" + std::to_string(i + 1) + "(" + std::to_string(k) + ") is not positive definite");
      }
      seq.push_back(solve_spd(s, cert.inputs[i][k].transpose()).transpose());
    }
    r.gains.K.push_back(std::move(seq));
  }
  r.closed_loop = closed_loop_matrices(sys, r.gains);
  std::vector<SymMat> P;
  for (const auto& seq : cert.sequences) P.push_back(SymMat(solve_spd(seq.back(), Mat::Identity(sys.n, sys.n))));
  const MarginReport chk = check_closed_loop(sys, r.gains, P);
  r.closed_loop_margin = chk.worst().value;
  r.closed_loop_worst = chk.worst().label;
  if (!chk.passed) {
    throw CertificateDegenerate("recovered gains fail the closed-loop check at " + chk.worst().label);
  }
  r.gamma = cert.gamma;
  r.certificate = std::move(cert);
  r.solver_iterations = iterations;
  return r;
}

}  // namespace

SynthesisResult synthesize(const SwitchedSystem& sys, int tau, const SolveOptions& opts) {
  if (!sys.is_nominal()) throw InvalidInput("synthesize: nominal modes required");
  const LmiProblem p = build_synthesis(sys, DwellSpec{tau});
  const SolveOutcome o = solve(p, opts);
  if (o.status != SolveStatus::Feasible) no_controller(tau, o);
  return finish(sys, extract_certificate(p, *o.witness), o.iterations);
}

SynthesisResult synthesize_l2(const SwitchedSystem& sys, int tau, std::optional<double> gamma, double tol_rel,
                              const SolveOptions& opts) {
  if (!sys.is_nominal()) throw InvalidInput("synthesize_l2: nominal modes required");
  if (gamma) {
    if (!(*gamma > 0.0)) throw InvalidInput("synthesize_l2: gamma must be positive");
    const LmiProblem p = build_l2_synthesis(sys, DwellSpec{tau}, *gamma);
    const SolveOutcome o = solve(p, opts);
    if (o.status != SolveStatus::Feasible) {
      std::ostringstream g;
      g << ", gamma=" << *gamma;
      no_controller(tau, o, g.str());
    }
    return finish(sys, extract_certificate(p, *o.witness, *gamma), o.iterations);
  }
  std::optional<LiftedCertificate> last;
  int iterations = 0;
  try {
    bisect_gamma(
        [&](double g) {
          const LmiProblem p = build_l2_synthesis(sys, DwellSpec{tau}, g);
          const SolveOutcome o = solve(p, opts);
          iterations += o.iterations;
          if (o.status != SolveStatus::Feasible) return false;
          last = extract_certificate(p, *o.witness, g);
          return true;
        },
        tol_rel);
  } catch (const GainUnboundedOrUnstable&) {
    throw NoControllerFound("no controller certified at tau=" + std::to_string(tau) + " for any gamma <= 2^20");
  }
  return finish(sys, std::move(*last), iterations);
}

GainCurve synthesis_gain_sweep(const SwitchedSystem& sys, const std::vector<int>& taus, double tol_rel,
                               const SolveOptions& opts) {
  const SolveOptions local = concurrent_safe(opts);
  return sweep_gain(taus, tol_rel, [&](int tau) { return *synthesize_l2(sys, tau, std::nullopt, tol_rel, local).gamma; });
}

}  // namespace dwell
