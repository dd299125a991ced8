#include "dwell/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <regex>
#include <sstream>

#include "dwell/errors.hpp"

namespace dwell {

// ---------------------------------------------------------------------------
// MarginReport

const Margin& MarginReport::worst() const {
  static const Margin none{"<none>", -std::numeric_limits<double>::infinity()};
  if (margins.empty()) return none;
  return *std::max_element(margins.begin(), margins.end(),
                           [](const Margin& a, const Margin& b) { return a.value < b.value; });
}

void MarginReport::add(std::string label, double value) { margins.push_back({std::move(label), value}); }

void MarginReport::close(double threshold_value) {
  threshold = threshold_value;
  passed = std::all_of(margins.begin(), margins.end(), [&](const Margin& m) { return m.value <= threshold; });
}

namespace {

std::string one_based(int i) { return std::to_string(i + 1); }

void require_nominal(const SwitchedSystem& sys, const char* what) {
  if (!sys.is_nominal()) throw InvalidInput(std::string(what) + ": nominal modes required");
}

void require_lyapunov(const SwitchedSystem& sys, const std::vector<SymMat>& P) {
  if (static_cast<int>(P.size()) != sys.num_modes()) throw DimensionMismatch("one Lyapunov matrix per mode expected");
  for (const SymMat& p : P)
    if (p.dim() != sys.n) throw DimensionMismatch("Lyapunov matrix must be n x n");
}

// Common positive factor making min_i lambda_min(P_i) equal to one.
std::vector<SymMat> unit_scaled(const std::vector<SymMat>& P) {
  double lo = std::numeric_limits<double>::infinity();
  for (const SymMat& p : P) lo = std::min(lo, min_eig(p));
  if (!(lo > 0.0)) throw NotPositiveDefinite("Lyapunov matrices are not positive definite");
  std::vector<SymMat> out;
  for (const SymMat& p : P) out.push_back(p * (1.0 / lo));
  return out;
}

SymMat inverse_spd(const SymMat& s) { return SymMat(solve_spd(s, Mat::Identity(s.dim(), s.dim()))); }

}  // namespace

// ---------------------------------------------------------------------------
// Flat conditions

MarginReport check_flat(const SwitchedSystem& sys, int tau, const std::vector<SymMat>& P, GeromelVariant variant,
                        std::optional<double> threshold) {
  require_nominal(sys, "check_flat");
  require_lyapunov(sys, P);
  if (tau < 1) throw InvalidInput("check_flat: tau must be >= 1");
  MarginReport r;
  const int N = sys.num_modes();
  for (int i = 0; i < N; ++i) {
    const Mat& a = sys.modes[i].A();
    r.add("flat[i=" + one_based(i) + "]: A_i' P_i A_i - P_i", max_eig(congruence(a, P[i]) - P[i]));
  }
  for (int i = 0; i < N; ++i) {
    const Mat at = mat_pow(sys.modes[i].A(), tau);
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      const std::string ij = "[i=" + one_based(i) + ",j=" + one_based(j) + "]";
      if (variant == GeromelVariant::Forward) {
        r.add("flat" + ij + ": A_i^tau' P_j A_i^tau - P_i", max_eig(congruence(at, P[j]) - P[i]));
      } else {
        r.add("flat" + ij + ": A_i^tau' P_i A_i^tau - P_j", max_eig(congruence(at, P[i]) - P[j]));
      }
    }
  }
  r.close(threshold.value_or(-0.5 * strict_margin_for(sys)));
  return r;
}

std::vector<SymMat> flat_lyapunov(const LiftedCertificate& cert) {
  std::vector<SymMat> P;
  for (const auto& seq : cert.sequences) {
    if (seq.empty()) throw DimensionMismatch("certificate: empty sequence");
    P.push_back(cert.form == LiftedForm::PrimalR ? seq.back() : inverse_spd(seq.back()));
  }
  return cert.form == LiftedForm::PrimalR ? P : unit_scaled(P);
}

// ---------------------------------------------------------------------------
// Lifted certificates

LmiProblem problem_for(const SwitchedSystem& sys, const LiftedCertificate& cert) {
  cert.validate(sys);
  if (std::abs(cert.epsilon - kCouplingEpsilon) > 1e-15) {
    throw InvalidInput("certificate epsilon differs from the fixed coupling margin");
  }
  const DwellSpec spec{cert.tau};
  if (cert.has_inputs()) return cert.gamma ? build_l2_synthesis(sys, spec, *cert.gamma) : build_synthesis(sys, spec);
  if (cert.gamma) return build_l2(sys, spec, *cert.gamma, cert.form);
  return build_lifted(sys, spec, cert.form);
}

Vec point_for(const LmiProblem& p, const LiftedCertificate& cert) {
  Vec x = Vec::Zero(p.vars.total_dim());
  if (p.layout.sym.size() != cert.sequences.size()) throw DimensionMismatch("certificate does not match problem layout");
  for (std::size_t i = 0; i < cert.sequences.size(); ++i) {
    if (p.layout.sym[i].size() != cert.sequences[i].size()) throw DimensionMismatch("certificate sequence length");
    for (std::size_t k = 0; k < cert.sequences[i].size(); ++k) p.vars.set_sym(p.layout.sym[i][k], cert.sequences[i][k], x);
  }
  if (p.layout.rect.size() != cert.inputs.size()) throw DimensionMismatch("certificate inputs do not match problem layout");
  for (std::size_t i = 0; i < cert.inputs.size(); ++i) {
    if (p.layout.rect[i].size() != cert.inputs[i].size()) throw DimensionMismatch("certificate input sequence length");
    for (std::size_t k = 0; k < cert.inputs[i].size(); ++k) p.vars.set_rect(p.layout.rect[i][k], cert.inputs[i][k], x);
  }
  return x;
}

LiftedCheck check_lifted(const SwitchedSystem& sys, const LiftedCertificate& cert, double tol) {
  const LmiProblem p = problem_for(sys, cert);
  const Vec x = point_for(p, cert);
  LiftedCheck out;

  // (i) Each constraint, reported as largest eigenvalue minus its allowance.
  for (const AffineLmi& c : p.constraints) {
    const double allowance = c.strict ? -0.5 * p.strict_margin : tol;
    out.lmis.add(c.label, max_eig(c.evaluate(x)) - allowance);
  }
  out.lmis.close(0.0);

  // (ii) Every sequence element positive definite.
  const char* name = cert.form == LiftedForm::PrimalR ? "R" : "S";
  for (std::size_t i = 0; i < cert.sequences.size(); ++i)
    for (std::size_t k = 0; k < cert.sequences[i].size(); ++k) {
      out.positivity.add(std::string(name) + "_" + one_based(static_cast<int>(i)) + "(" + std::to_string(k) + ") > 0",
                         -min_eig(cert.sequences[i][k]));
    }
  out.positivity.close(-std::numeric_limits<double>::min());

  // (iii) Telescoped chain over the dwell window, one product per vertex.
  const int tau = cert.tau;
  for (int i = 0; i < sys.num_modes(); ++i) {
    const Mode& m = sys.modes[i];
    const auto& seq = cert.sequences[i];
    const double scale = std::max(1.0, std::max(max_abs(seq.front().matrix()), max_abs(seq.back().matrix())));
    for (int v = 0; v < m.num_vertices(); ++v) {
      const std::string where = "telescoping[i=" + one_based(i) + (m.num_vertices() > 1 ? ",v=" + one_based(v) : "") + "]";
      Mat psi = Mat::Identity(sys.n, sys.n);
      for (int k = 0; k < tau; ++k) {
        Mat step = m.vertices[v];
        if (cert.has_inputs()) {
          const Mat gain = solve_spd(seq[k], cert.inputs[i][k].transpose()).transpose();
          step += *m.B * gain;
        }
        psi = step * psi;
      }
      double value;
      if (cert.form == LiftedForm::PrimalR) {
        value = max_eig(congruence(psi, seq.back()) - seq.front());
      } else {
        value = max_eig(SymMat(psi * seq.front().matrix() * psi.transpose()) - seq.back());
      }
      out.telescoping.add(where, value / scale);
    }
  }
  out.telescoping.close(tol);
  return out;
}

MarginReport check_closed_loop(const SwitchedSystem& sys, const ControllerGains& gains, const std::vector<SymMat>& P,
                               std::optional<double> threshold) {
  require_nominal(sys, "check_closed_loop");
  require_lyapunov(sys, P);
  gains.validate(sys);
  const std::vector<SymMat> Q = unit_scaled(P);
  const auto abar = closed_loop_matrices(sys, gains);
  const int N = sys.num_modes();
  const int tau = gains.tau;
  MarginReport r;
  std::vector<Mat> psi(N);
  for (int i = 0; i < N; ++i) {
    r.add("closed-loop[i=" + one_based(i) + "]: Abar_i(tau)' P_i Abar_i(tau) - P_i", max_eig(congruence(abar[i][tau], Q[i]) - Q[i]));
    psi[i] = Mat::Identity(sys.n, sys.n);
    for (int k = 0; k < tau; ++k) psi[i] = abar[i][k] * psi[i];
  }
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      r.add("closed-loop[i=" + one_based(i) + ",j=" + one_based(j) + "]: Psi_i' P_i Psi_i - P_j",
            max_eig(congruence(psi[i], Q[i]) - Q[j]));
    }
  r.close(threshold.value_or(-0.1 * strict_margin_for(sys)));
  return r;
}

// ---------------------------------------------------------------------------
// Instability witnesses

std::vector<PatternFactor> parse_pattern(const std::string& text) {
  static const std::regex token(R"(^(\d+)(?:\^(\d+))?(?:@([-+0-9.eE,]+))?$)");
  std::istringstream in(text);
  std::vector<PatternFactor> out;
  std::string tok;
  while (in >> tok) {
    std::smatch m;
    if (!std::regex_match(tok, m, token)) throw ParseError("pattern: bad token \"" + tok + "\" (expected mode^power[@w1,w2,..])");
    PatternFactor f;
    f.mode = std::stoi(m[1].str()) - 1;
    if (f.mode < 0) throw ParseError("pattern: modes are numbered from 1");
    f.power = m[2].matched ? std::stoi(m[2].str()) : 1;
    if (f.power < 1) throw ParseError("pattern: power must be >= 1 in \"" + tok + "\"");
    if (m[3].matched) {
      std::istringstream ws(m[3].str());
      std::string item;
      double sum = 0.0;
      while (std::getline(ws, item, ',')) {
        std::size_t used = 0;
        double w = 0.0;
        try {
          w = std::stod(item, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != item.size() || item.empty()) throw ParseError("pattern: bad weight \"" + item + "\"");
        if (w < -1e-12 || w > 1.0 + 1e-12) throw ParseError("pattern: weights must lie in [0, 1]");
        f.weights.push_back(w);
        sum += w;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw ParseError("pattern: weights of \"" + tok + "\" must sum to 1");
    }
    out.push_back(std::move(f));
  }
  if (out.empty()) throw ParseError("pattern: empty");
  return out;
}

namespace {

Mat factor_matrix(const SwitchedSystem& sys, const PatternFactor& f) {
  if (f.mode < 0 || f.mode >= sys.num_modes()) throw InvalidInput("pattern: mode " + one_based(f.mode) + " out of range");
  const Mode& m = sys.modes[f.mode];
  if (f.weights.empty()) {
    if (m.num_vertices() != 1) throw InvalidInput("pattern: mode " + one_based(f.mode) + " is polytopic; give vertex weights");
    return m.vertices.front();
  }
  if (static_cast<int>(f.weights.size()) != m.num_vertices()) {
    throw InvalidInput("pattern: mode " + one_based(f.mode) + " needs " + std::to_string(m.num_vertices()) + " weights");
  }
  Mat a = Mat::Zero(sys.n, sys.n);
  for (std::size_t v = 0; v < f.weights.size(); ++v) a += f.weights[v] * m.vertices[v];
  return a;
}

std::string describe(const std::vector<PatternFactor>& pattern) {
  std::ostringstream out;
  for (std::size_t q = 0; q < pattern.size(); ++q) {
    const PatternFactor& f = pattern[q];
    if (q) out << ' ';
    out << f.mode + 1;
    if (f.power != 1) out << '^' << f.power;
    if (!f.weights.empty()) {
      out << '@';
      for (std::size_t v = 0; v < f.weights.size(); ++v) out << (v ? "," : "") << f.weights[v];
    }
  }
  return out.str();
}

}  // namespace

InstabilityWitness instability_witness(const SwitchedSystem& sys, const std::vector<PatternFactor>& pattern) {
  if (pattern.empty()) throw InvalidInput("instability_witness: empty pattern");
  InstabilityWitness w;
  w.product = Mat::Identity(sys.n, sys.n);
  for (const PatternFactor& f : pattern) w.product = w.product * mat_pow(factor_matrix(sys, f), f.power);
  w.rho = spectral_radius(w.product);
  w.description = describe(pattern);
  return w;
}

InstabilityWitness random_product(const SwitchedSystem& sys, int tau, int samples, std::uint64_t seed) {
  if (samples < 1) throw InvalidInput("random_product: samples must be >= 1");
  if (tau < 1) throw InvalidInput("random_product: tau must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);

  auto draw = [&](int mode) {
    PatternFactor f;
    f.mode = mode;
    const int nv = sys.modes[mode].num_vertices();
    if (nv == 1) return f;
    f.weights.assign(nv, 0.0);
    if (unit(rng) < 0.5) {
      f.weights[std::uniform_int_distribution<int>(0, nv - 1)(rng)] = 1.0;
    } else {
      double sum = 0.0;
      for (double& w : f.weights) sum += (w = expo(rng));
      for (double& w : f.weights) w /= sum;
    }
    return f;
  };

  InstabilityWitness best;
  best.rho = -1.0;
  for (int s = 0; s < samples; ++s)
    for (int i = 0; i < sys.num_modes(); ++i)
      for (int j = i + 1; j < sys.num_modes(); ++j) {
        std::vector<PatternFactor> pattern;
        for (int k = 0; k < tau; ++k) pattern.push_back(draw(i));
        for (int k = 0; k < tau; ++k) pattern.push_back(draw(j));
        InstabilityWitness w = instability_witness(sys, pattern);
        if (w.rho > best.rho) best = std::move(w);
      }
  return best;
}

// ---------------------------------------------------------------------------
// Simulation

Trajectory simulate(const SwitchedSystem& sys, const SwitchingSignal& signal, const Vec& x0, const SimulationInputs& in) {
  require_nominal(sys, "simulate");
  signal.validate(sys.num_modes());
  if (signal.instants.empty()) throw InvalidInput("simulate: empty switching signal");
  if (x0.size() != sys.n) throw DimensionMismatch("simulate: x0 must have n entries");
  const int H = signal.horizon;
  if (H < 0) throw InvalidInput("simulate: negative horizon");
  if (!in.w.empty() && static_cast<int>(in.w.size()) != H) throw DimensionMismatch("simulate: w must have horizon entries");
  if (in.gains) in.gains->validate(sys);
  if (in.P) require_lyapunov(sys, *in.P);
  const bool all_c = std::all_of(sys.modes.begin(), sys.modes.end(), [](const Mode& m) { return m.C.has_value(); });

  Trajectory tr;
  tr.signal = signal;
  tr.states.reserve(static_cast<std::size_t>(H) + 1);
  tr.states.push_back(x0);
  for (int t = 0; t < H; ++t) {
    const int i = signal.mode_at(t);
    const Mode& m = sys.modes[i];
    const Vec& x = tr.states.back();
    Vec next = m.A() * x;
    Vec u;
    if (in.gains) {
      if (!m.B) throw MissingMatrix("simulate: gains given but mode " + one_based(i) + " has no B");
      u = gain_at(*in.gains, i, signal.steps_since_switch(t)) * x;
      next += *m.B * u;
      tr.inputs.push_back(u);
    }
    if (!in.w.empty()) {
      const Vec& w = in.w[t];
      if (w.size() > 0 || m.E) {
        if (!m.E) throw MissingMatrix("simulate: w given but mode " + one_based(i) + " has no E");
        if (w.size() != m.disturbance_dim()) throw DimensionMismatch("simulate: w(" + std::to_string(t) + ") size");
        next += *m.E * w;
      }
      tr.disturbances.push_back(w);
    }
    if (all_c) {
      Vec z = *m.C * x;
      if (in.gains && m.D) z += *m.D * u;
      if (!in.w.empty() && m.F) z += *m.F * in.w[t];
      tr.outputs.push_back(z);
    }
    tr.states.push_back(std::move(next));
  }
  if (in.P) {
    const auto& P = *in.P;
    for (int t = 0; t <= H; ++t) {
      const Vec& x = tr.states[t];
      const int now = signal.mode_at(t);
      const int before = t == 0 ? now : signal.mode_at(t - 1);
      tr.lyapunov_f.push_back(x.dot(P[now].matrix() * x));
      tr.lyapunov_b.push_back(x.dot(P[before].matrix() * x));
    }
  }
  return tr;
}

std::string Trajectory::to_csv() const {
  auto width = [](const std::vector<Vec>& v) {
    Eigen::Index w = 0;
    for (const Vec& e : v) w = std::max(w, e.size());
    return static_cast<int>(w);
  };
  const int n = states.empty() ? 0 : static_cast<int>(states.front().size());
  const int mu = width(inputs), mw = width(disturbances), mz = width(outputs);
  const bool lyap = !lyapunov_f.empty();
  std::ostringstream out;
  out.precision(17);
  out << "t,mode";
  for (int a = 0; a < n; ++a) out << ",x_" << a + 1;
  if (!inputs.empty())
    for (int a = 0; a < mu; ++a) out << ",u_" << a + 1;
  if (!disturbances.empty())
    for (int a = 0; a < mw; ++a) out << ",w_" << a + 1;
  if (!outputs.empty())
    for (int a = 0; a < mz; ++a) out << ",z_" << a + 1;
  if (lyap) out << ",Vf,Vb";
  out << '\n';
  auto cells = [&](const std::vector<Vec>& v, int cols, int t) {
    for (int a = 0; a < cols; ++a) {
      out << ',';
      if (t < static_cast<int>(v.size()) && a < v[t].size()) out << v[t](a);
    }
  };
  const int H = static_cast<int>(states.size()) - 1;
  for (int t = 0; t <= H && H > 0; ++t) {
    out << t << ',' << signal.mode_at(t) + 1;
    for (int a = 0; a < n; ++a) out << ',' << states[t](a);
    if (!inputs.empty()) cells(inputs, mu, t);
    if (!disturbances.empty()) cells(disturbances, mw, t);
    if (!outputs.empty()) cells(outputs, mz, t);
    if (lyap) out << ',' << lyapunov_f[t] << ',' << lyapunov_b[t];
    out << '\n';
  }
  return out.str();
}

double empirical_gain(const SwitchedSystem& sys, const SwitchingSignal& signal, const std::vector<Vec>& w,
                      const std::optional<ControllerGains>& gains) {
  SimulationInputs in;
  in.w = w;
  in.gains = gains;
  const Trajectory tr = simulate(sys, signal, Vec::Zero(sys.n), in);
  double zz = 0.0, ww = 0.0;
  for (const Vec& z : tr.outputs) zz += z.squaredNorm();
  for (const Vec& v : w) ww += v.squaredNorm();
  if (tr.outputs.empty()) throw MissingMatrix("empirical_gain: every mode needs C");
  return ww > 0.0 ? std::sqrt(zz / ww) : 0.0;
}

std::vector<Vec> random_disturbance(const SwitchedSystem& sys, const SwitchingSignal& signal, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Vec> w;
  double energy = 0.0;
  for (int t = 0; t < signal.horizon; ++t) {
    Vec v(sys.modes[signal.mode_at(t)].disturbance_dim());
    for (Eigen::Index a = 0; a < v.size(); ++a) v(a) = gauss(rng);
    energy += v.squaredNorm();
    w.push_back(std::move(v));
  }
  if (energy > 0.0)
    for (Vec& v : w) v /= std::sqrt(energy);
  return w;
}

// ---------------------------------------------------------------------------
// Non-lifted l2 conditions

ToeplitzMaps toeplitz_maps(const Mode& mode, int tau) {
  if (tau < 1) throw InvalidInput("toeplitz_maps: tau must be >= 1");
  if (!mode.E || !mode.C) throw MissingMatrix("toeplitz_maps: mode needs E and C");
  const Mat& a = mode.A();
  const Mat& e = *mode.E;
  const Mat& c = *mode.C;
  const Mat f = mode.F_or_zero();
  const int n = static_cast<int>(a.rows());
  const int p = static_cast<int>(e.cols());
  const int q = static_cast<int>(c.rows());
  std::vector<Mat> pw(tau + 1);
  pw[0] = Mat::Identity(n, n);
  for (int k = 1; k <= tau; ++k) pw[k] = a * pw[k - 1];

  ToeplitzMaps out;
  out.C.resize(tau * q, n);
  out.E.resize(n, tau * p);
  out.F = Mat::Zero(tau * q, tau * p);
  for (int k = 0; k < tau; ++k) {
    out.C.middleRows(k * q, q) = c * pw[k];
    out.E.middleCols(k * p, p) = pw[tau - 1 - k] * e;
  }
  for (int r = 0; r < tau; ++r)
    for (int col = 0; col <= r; ++col) {
      out.F.block(r * q, col * p, q, p) = r == col ? f : Mat(c * pw[r - col - 1] * e);
    }
  return out;
}

L2StatementA check_l2_statement_a(const SwitchedSystem& sys, int tau, const std::vector<SymMat>& P, double gamma) {
  require_nominal(sys, "check_l2_statement_a");
  require_lyapunov(sys, P);
  if (!(gamma > 0.0)) throw InvalidInput("check_l2_statement_a: gamma must be positive");
  L2StatementA out;
  const int N = sys.num_modes();
  const double g2 = gamma * gamma;
  for (int i = 0; i < N; ++i) {
    const Mode& m = sys.modes[i];
    if (!m.E || !m.C) throw MissingMatrix("check_l2_statement_a: mode " + one_based(i) + " needs E and C");
    const Mat& a = m.A();
    const Mat& e = *m.E;
    const Mat& c = *m.C;
    const Mat f = m.F_or_zero();
    const Mat& p = P[i].matrix();
    const int n = sys.n;
    const int pd = static_cast<int>(e.cols());
    Mat blk(n + pd, n + pd);
    blk.topLeftCorner(n, n) = a.transpose() * p * a - p + c.transpose() * c;
    blk.topRightCorner(n, pd) = a.transpose() * p * e + c.transpose() * f;
    blk.bottomLeftCorner(pd, n) = blk.topRightCorner(n, pd).transpose();
    blk.bottomRightCorner(pd, pd) = e.transpose() * p * e + f.transpose() * f - g2 * Mat::Identity(pd, pd);
    out.per_mode.add("l2-a[i=" + one_based(i) + "]: one-step bounded-real block", max_eig(SymMat(blk)));

    const ToeplitzMaps tm = toeplitz_maps(m, tau);
    const Mat at = mat_pow(a, tau);
    const int tp = static_cast<int>(tm.E.cols());
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      Mat b(n + tp, n + tp);
      b.topLeftCorner(n, n) = at.transpose() * p * at + tm.C.transpose() * tm.C - P[j].matrix();
      b.topRightCorner(n, tp) = at.transpose() * p * tm.E + tm.C.transpose() * tm.F;
      b.bottomLeftCorner(tp, n) = b.topRightCorner(n, tp).transpose();
      b.bottomRightCorner(tp, tp) = tm.E.transpose() * p * tm.E + tm.F.transpose() * tm.F - g2 * Mat::Identity(tp, tp);
      out.per_pair.add("l2-a[i=" + one_based(i) + ",j=" + one_based(j) + "]: tau-step block", max_eig(SymMat(b)));
    }
  }
  out.per_mode.close(0.0);
  out.per_pair.close(0.0);
  return out;
}

}  // namespace dwell
