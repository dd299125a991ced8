#include "dwell/analysis.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dwell/errors.hpp"
#include "dwell/json_io.hpp"
#include "dwell/verify.hpp"

namespace dwell {

using json_io::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string format_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Certificates

void LiftedCertificate::validate(const SwitchedSystem& sys) const {
  if (tau < 1) throw DimensionMismatch("certificate: tau must be >= 1");
  if (static_cast<int>(sequences.size()) != sys.num_modes()) {
    throw DimensionMismatch("certificate: expected " + std::to_string(sys.num_modes()) + " sequences");
  }
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (static_cast<int>(sequences[i].size()) != tau + 1) {
      throw DimensionMismatch("certificate: sequence " + std::to_string(i + 1) + " must have tau+1 = " +
                              std::to_string(tau + 1) + " elements");
    }
    for (const SymMat& s : sequences[i]) {
      if (s.dim() != sys.n) throw DimensionMismatch("certificate: sequence element is not n x n");
    }
  }
  if (has_inputs()) {
    if (form != LiftedForm::DualS) throw DimensionMismatch("certificate: inputs require the dual form");
    if (static_cast<int>(inputs.size()) != sys.num_modes()) throw DimensionMismatch("certificate: inputs per mode");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (static_cast<int>(inputs[i].size()) != tau + 1) {
        throw DimensionMismatch("certificate: input sequence " + std::to_string(i + 1) + " must have tau+1 elements");
      }
      for (const Mat& u : inputs[i]) {
        if (u.rows() != sys.modes[i].input_dim() || u.cols() != sys.n) {
          throw DimensionMismatch("certificate: U block of mode " + std::to_string(i + 1) + " must be m_i x n");
        }
      }
    }
  }
}

LiftedCertificate extract_certificate(const LmiProblem& p, const Vec& x, std::optional<double> gamma) {
  if (p.layout.flat) throw InvalidInput("extract_certificate: problem has no lifted sequences");
  if (x.size() != p.vars.total_dim()) throw DimensionMismatch("extract_certificate: wrong decision vector size");
  LiftedCertificate c;
  c.form = p.layout.form;
  c.tau = p.layout.tau;
  c.epsilon = p.epsilon;
  c.gamma = gamma;
  for (const auto& blocks : p.layout.sym) {
    std::vector<SymMat> seq;
    for (int b : blocks) seq.push_back(p.vars.sym_value(b, x));
    c.sequences.push_back(std::move(seq));
  }
  for (const auto& blocks : p.layout.rect) {
    std::vector<Mat> seq;
    for (int b : blocks) seq.push_back(p.vars.rect_value(b, x));
    c.inputs.push_back(std::move(seq));
  }
  return c;
}

const char* form_name(LiftedForm f) { return f == LiftedForm::PrimalR ? "primal_R" : "dual_S"; }

LiftedForm parse_form(const std::string& s) {
  if (s == "primal_R" || s == "primal" || s == "R") return LiftedForm::PrimalR;
  if (s == "dual_S" || s == "dual" || s == "S") return LiftedForm::DualS;
  throw InvalidInput("unknown form \"" + s + "\" (expected primal_R or dual_S)");
}

std::string dump_certificate(const LiftedCertificate& c) {
  json doc;
  doc["form"] = form_name(c.form);
  doc["tau"] = c.tau;
  doc["epsilon"] = c.epsilon;
  if (c.gamma) doc["gamma"] = *c.gamma;
  doc["sequences"] = json::array();
  for (const auto& seq : c.sequences) {
    json js = json::array();
    for (const SymMat& s : seq) js.push_back(json_io::from_mat(s.matrix()));
    doc["sequences"].push_back(std::move(js));
  }
  if (c.has_inputs()) {
    doc["inputs"] = json::array();
    for (const auto& seq : c.inputs) {
      json js = json::array();
      for (const Mat& u : seq) js.push_back(json_io::from_mat(u));
      doc["inputs"].push_back(std::move(js));
    }
  }
  return doc.dump(2);
}

LiftedCertificate parse_certificate(const std::string& json_text) {
  const json doc = json_io::parse_text(json_text, "certificate");
  json_io::require_keys(doc, {"form", "tau", "epsilon", "gamma", "sequences", "inputs"}, "certificate");
  LiftedCertificate c;
  if (!doc.contains("form") || !doc["form"].is_string()) throw ParseError("certificate.form: expected a string");
  try {
    c.form = parse_form(doc["form"].get<std::string>());
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("certificate.form: ") + e.what());
  }
  if (!doc.contains("tau") || !doc["tau"].is_number_integer()) throw ParseError("certificate.tau: expected an integer");
  c.tau = doc["tau"].get<int>();
  if (doc.contains("epsilon")) {
    if (!doc["epsilon"].is_number()) throw ParseError("certificate.epsilon: expected a number");
    c.epsilon = doc["epsilon"].get<double>();
  }
  if (doc.contains("gamma")) {
    if (!doc["gamma"].is_number()) throw ParseError("certificate.gamma: expected a number");
    c.gamma = doc["gamma"].get<double>();
  }
  if (!doc.contains("sequences") || !doc["sequences"].is_array()) throw ParseError("certificate.sequences: expected an array");
  for (std::size_t i = 0; i < doc["sequences"].size(); ++i) {
    const json& js = doc["sequences"][i];
    const std::string where = "certificate.sequences[" + std::to_string(i) + "]";
    if (!js.is_array()) throw ParseError(where + ": expected an array");
    std::vector<SymMat> seq;
    for (std::size_t k = 0; k < js.size(); ++k) {
      const Mat m = json_io::to_mat(js[k], where + "[" + std::to_string(k) + "]");
      if (m.rows() != m.cols()) throw ParseError(where + "[" + std::to_string(k) + "]: not square");
      seq.emplace_back(m);
    }
    c.sequences.push_back(std::move(seq));
  }
  if (doc.contains("inputs")) {
    if (!doc["inputs"].is_array()) throw ParseError("certificate.inputs: expected an array");
    for (std::size_t i = 0; i < doc["inputs"].size(); ++i) {
      const json& js = doc["inputs"][i];
      const std::string where = "certificate.inputs[" + std::to_string(i) + "]";
      if (!js.is_array()) throw ParseError(where + ": expected an array");
      std::vector<Mat> seq;
      for (std::size_t k = 0; k < js.size(); ++k) seq.push_back(json_io::to_mat(js[k], where + "[" + std::to_string(k) + "]"));
      c.inputs.push_back(std::move(seq));
    }
  }
  return c;
}

void save_certificate(const LiftedCertificate& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput(path.string() + ": cannot write");
  out << dump_certificate(c) << "\n";
}

LiftedCertificate load_certificate(const std::filesystem::path& path) {
  try {
    return parse_certificate(json_io::read_file(path.string()));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Minimum dwell-time

namespace {

// Re-verification of a fresh certificate; returns an empty string on success.
std::string reverify(const SwitchedSystem& sys, const LiftedCertificate& cert) {
  const LiftedCheck chk = check_lifted(sys, cert);
  if (!chk.lmis.passed) return "lifted LMI check failed at " + chk.lmis.worst().label;
  if (!chk.positivity.passed) return "positivity chain failed at " + chk.positivity.worst().label;
  if (!chk.telescoping.passed) return "telescoping check failed at " + chk.telescoping.worst().label;
  if (sys.is_nominal()) {
    const double thr = cert.form == LiftedForm::PrimalR ? -0.5 * strict_margin_for(sys) : 0.0;
    const MarginReport flat = check_flat(sys, cert.tau, flat_lyapunov(cert), GeromelVariant::Backward, thr);
    if (!flat.passed) return "flat check failed at " + flat.worst().label;
  }
  return {};
}

DwellResult scan(const SwitchedSystem& sys, int tau_max, LiftedForm form, const SolveOptions& opts) {
  if (tau_max < 1) throw InvalidInput("tau_max must be >= 1");
  DwellResult out;
  for (int tau = 1; tau <= tau_max; ++tau) {
    const auto t0 = std::chrono::steady_clock::now();
    const LmiProblem p = build_lifted(sys, DwellSpec{tau}, form);
    const SolveOutcome o = solve(p, opts);
    TauVerdict v{tau, o.status, o.iterations, o.achieved_margin, 0.0, o.reason};
    if (o.status == SolveStatus::Feasible) {
      LiftedCertificate cert = extract_certificate(p, *o.witness);
      const std::string problem = reverify(sys, cert);
      if (problem.empty()) {
        v.seconds = seconds_since(t0);
        out.per_tau.push_back(v);
        out.tau_star = tau;
        out.certificate = std::move(cert);
        return out;
      }
      v.status = SolveStatus::Inconclusive;
      v.note = "certificate rejected: " + problem;
    }
    v.seconds = seconds_since(t0);
    out.per_tau.push_back(v);
  }
  return out;
}

}  // namespace

DwellResult min_dwell(const SwitchedSystem& sys, int tau_max, LiftedForm form, const SolveOptions& opts) {
  if (!sys.is_nominal()) throw InvalidInput("min_dwell: polytopic modes; use min_dwell_robust");
  return scan(sys, tau_max, form, opts);
}

DwellResult min_dwell_robust(const SwitchedSystem& sys, int tau_max, LiftedForm form, const SolveOptions& opts) {
  return scan(sys, tau_max, form, opts);
}

// ---------------------------------------------------------------------------
// l2 gain

SolveOptions concurrent_safe(const SolveOptions& opts) {
  SolveOptions out = opts;
#ifdef _OPENMP
  if (omp_get_max_threads() > 1) out.log = nullptr;
#endif
  return out;
}

BisectionResult bisect_gamma(const std::function<bool(double)>& feasible_at, double tol_rel) {
  if (!(tol_rel > 0.0 && tol_rel < 1.0)) throw InvalidInput("tol_rel must be in (0, 1)");
  BisectionResult r;
  r.gamma_hi = 1.0;
  while (true) {
    ++r.evaluations;
    if (feasible_at(r.gamma_hi)) break;
    r.gamma_lo = r.gamma_hi;
    r.gamma_hi *= 2.0;
    if (r.gamma_hi > kGammaCap) {
      throw GainUnboundedOrUnstable("no certified gamma up to 2^20");
    }
  }
  while ((r.gamma_hi - r.gamma_lo) / r.gamma_hi > tol_rel) {
    const double mid = 0.5 * (r.gamma_lo + r.gamma_hi);
    ++r.evaluations;
    if (feasible_at(mid)) {
      r.gamma_hi = mid;
    } else {
      r.gamma_lo = mid;
    }
  }
  return r;
}

GainResult l2_gain(const SwitchedSystem& sys, int tau, double tol_rel, LiftedForm form, const SolveOptions& opts) {
  GainResult out;
  std::optional<LiftedCertificate> last;
  const BisectionResult b = bisect_gamma(
      [&](double g) {
        const LmiProblem p = build_l2(sys, DwellSpec{tau}, g, form);
        const SolveOutcome o = solve(p, opts);
        if (o.status != SolveStatus::Feasible) return false;
        last = extract_certificate(p, *o.witness, g);
        return true;
      },
      tol_rel);
  out.gamma_upper = b.gamma_hi;
  out.certificate = std::move(*last);
  out.evaluations = b.evaluations;
  return out;
}

std::string GainCurve::to_csv() const {
  std::ostringstream out;
  out << "tau,gamma_upper,status\n";
  for (const GainPoint& pt : points) {
    std::string status = pt.status;
    for (char& ch : status)
      if (ch == ',' || ch == '\n' || ch == '\r') ch = ch == ',' ? ';' : ' ';
    out << pt.tau << ',' << (pt.gamma_upper ? format_g9(*pt.gamma_upper) : std::string()) << ',' << status << '\n';
  }
  return out.str();
}

GainCurve sweep_gain(const std::vector<int>& taus, double tol_rel, const std::function<double(int)>& gain_at_tau) {
  if (taus.empty()) throw InvalidInput("sweep: empty tau range");
  for (std::size_t q = 0; q < taus.size(); ++q) {
    if (taus[q] < 1) throw InvalidInput("sweep: tau must be >= 1");
    if (q > 0 && taus[q] <= taus[q - 1]) throw InvalidInput("sweep: tau values must increase strictly");
  }
  GainCurve curve;
  curve.tolerance = tol_rel;
  curve.points.resize(taus.size());
  const int count = static_cast<int>(taus.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int q = 0; q < count; ++q) {
    GainPoint& pt = curve.points[q];
    pt.tau = taus[q];
    try {
      pt.gamma_upper = gain_at_tau(taus[q]);
      pt.status = "ok";
    } catch (const GainUnboundedOrUnstable&) {
      pt.status = "unbounded";
    } catch (const NoControllerFound&) {
      pt.status = "no_controller";
    } catch (const std::exception& e) {
      pt.status = std::string("error: ") + e.what();
    }
  }
  return curve;
}

GainCurve gamma_tau_sweep(const SwitchedSystem& sys, const std::vector<int>& taus, double tol_rel, LiftedForm form,
                          const SolveOptions& opts) {
  const SolveOptions local = concurrent_safe(opts);
  return sweep_gain(taus, tol_rel, [&](int tau) { return l2_gain(sys, tau, tol_rel, form, local).gamma_upper; });
}

}  // namespace dwell
