#include "dwell/lmi.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "dwell/errors.hpp"

namespace dwell {

double strict_margin_for(const SwitchedSystem& sys) { return 1e-7 * (1.0 + sys.max_a_norm()); }

// ---------------------------------------------------------------------------
// VarSpace

void VarSpace::claim_name(const std::string& name) {
  if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
    throw InvalidInput("VarSpace: duplicate variable name " + name);
  }
  names_.push_back(name);
}

int VarSpace::add_sym(std::string name, int dim) {
  if (dim < 1) throw InvalidInput("VarSpace: symmetric block dimension must be >= 1");
  claim_name(name);
  sym_.push_back({std::move(name), dim, total_});
  total_ += dim * (dim + 1) / 2;
  return static_cast<int>(sym_.size()) - 1;
}

int VarSpace::add_rect(std::string name, int rows, int cols) {
  if (rows < 1 || cols < 1) throw InvalidInput("VarSpace: rectangular block must be non-empty");
  claim_name(name);
  rect_.push_back({std::move(name), rows, cols, total_});
  total_ += rows * cols;
  return static_cast<int>(rect_.size()) - 1;
}

int VarSpace::add_scalar(std::string name) {
  claim_name(name);
  scalars_.push_back({std::move(name), total_});
  total_ += 1;
  return static_cast<int>(scalars_.size()) - 1;
}

int VarSpace::sym_index(int block, int a, int b) const {
  const SymBlock& blk = sym_.at(static_cast<std::size_t>(block));
  if (a > b) std::swap(a, b);
  // Row-major upper triangle: rows 0..a-1 contribute dim, dim-1, ... entries.
  return blk.offset + a * blk.dim - a * (a - 1) / 2 + (b - a);
}

SymMat VarSpace::sym_value(int block, const Vec& x) const {
  const SymBlock& blk = sym_.at(static_cast<std::size_t>(block));
  Mat m(blk.dim, blk.dim);
  for (int a = 0; a < blk.dim; ++a)
    for (int b = a; b < blk.dim; ++b) m(a, b) = m(b, a) = x(sym_index(block, a, b));
  return SymMat(m);
}

Mat VarSpace::rect_value(int block, const Vec& x) const {
  const RectBlock& blk = rect_.at(static_cast<std::size_t>(block));
  Mat m(blk.rows, blk.cols);
  for (int r = 0; r < blk.rows; ++r)
    for (int c = 0; c < blk.cols; ++c) m(r, c) = x(blk.offset + r * blk.cols + c);
  return m;
}

void VarSpace::set_sym(int block, const SymMat& value, Vec& x) const {
  const SymBlock& blk = sym_.at(static_cast<std::size_t>(block));
  if (value.dim() != blk.dim) throw DimensionMismatch("set_sym: wrong block size for " + blk.name);
  for (int a = 0; a < blk.dim; ++a)
    for (int b = a; b < blk.dim; ++b) x(sym_index(block, a, b)) = value(a, b);
}

void VarSpace::set_rect(int block, const Mat& value, Vec& x) const {
  const RectBlock& blk = rect_.at(static_cast<std::size_t>(block));
  if (value.rows() != blk.rows || value.cols() != blk.cols) {
    throw DimensionMismatch("set_rect: wrong block size for " + blk.name);
  }
  for (int r = 0; r < blk.rows; ++r)
    for (int c = 0; c < blk.cols; ++c) x(blk.offset + r * blk.cols + c) = value(r, c);
}

Vec VarSpace::initial_point() const {
  Vec x = Vec::Zero(total_);
  for (std::size_t b = 0; b < sym_.size(); ++b)
    for (int a = 0; a < sym_[b].dim; ++a) x(sym_index(static_cast<int>(b), a, a)) = 1.0;
  return x;
}

// ---------------------------------------------------------------------------
// AffineLmi / LmiProblem

SymMat AffineLmi::evaluate(const Vec& x) const {
  Mat m = f0;
  for (const auto& [k, fk] : coeffs) m += x(k) * fk;
  return SymMat(m);
}

void LmiProblem::check_well_formed() const {
  const int m = vars.total_dim();
  for (const AffineLmi& c : constraints) {
    if (c.dim < 1 || c.f0.rows() != c.dim || c.f0.cols() != c.dim) {
      throw InvalidInput("constraint " + c.label + ": bad F0 size");
    }
    for (const auto& [k, fk] : c.coeffs) {
      if (k < 0 || k >= m) throw InvalidInput("constraint " + c.label + ": variable index out of range");
      if (fk.rows() != c.dim || fk.cols() != c.dim) throw InvalidInput("constraint " + c.label + ": bad F_k size");
    }
  }
}

// ---------------------------------------------------------------------------
// LmiBuilder

LmiBuilder::LmiBuilder(const VarSpace& vars, int dim) : vars_(vars), dim_(dim), f0_(Mat::Zero(dim, dim)) {}

void LmiBuilder::place(Mat& target, int r0, int c0, const Mat& m) const {
  if (r0 + m.rows() > dim_ || c0 + m.cols() > dim_) throw DimensionMismatch("LmiBuilder: term exceeds block");
  if (r0 == c0) {
    if (m.rows() != m.cols()) throw DimensionMismatch("LmiBuilder: diagonal term must be square");
    target.block(r0, c0, m.rows(), m.cols()) += 0.5 * (m + m.transpose());
  } else {
    target.block(r0, c0, m.rows(), m.cols()) += m;
    target.block(c0, r0, m.cols(), m.rows()) += m.transpose();
  }
}

Mat& LmiBuilder::coeff(int var) {
  for (auto& [k, m] : coeffs_)
    if (k == var) return m;
  coeffs_.emplace_back(var, Mat::Zero(dim_, dim_));
  return coeffs_.back().second;
}

LmiBuilder& LmiBuilder::sym(int r0, int c0, int block, const Mat& left, const Mat& right, double scale) {
  const auto& blk = vars_.sym_blocks().at(static_cast<std::size_t>(block));
  if (left.cols() != blk.dim || right.rows() != blk.dim) throw DimensionMismatch("LmiBuilder: " + blk.name);
  for (int a = 0; a < blk.dim; ++a) {
    for (int b = a; b < blk.dim; ++b) {
      Mat term = left.col(a) * right.row(b);
      if (a != b) term += left.col(b) * right.row(a);
      if (term.cwiseAbs().maxCoeff() == 0.0) continue;
      place(coeff(vars_.sym_index(block, a, b)), r0, c0, scale * term);
    }
  }
  return *this;
}

LmiBuilder& LmiBuilder::rect(int r0, int c0, int block, const Mat& left, const Mat& right, double scale) {
  const auto& blk = vars_.rect_blocks().at(static_cast<std::size_t>(block));
  if (left.cols() != blk.rows || right.rows() != blk.cols) throw DimensionMismatch("LmiBuilder: " + blk.name);
  for (int r = 0; r < blk.rows; ++r) {
    for (int c = 0; c < blk.cols; ++c) {
      const Mat term = left.col(r) * right.row(c);
      if (term.cwiseAbs().maxCoeff() == 0.0) continue;
      place(coeff(blk.offset + r * blk.cols + c), r0, c0, scale * term);
    }
  }
  return *this;
}

LmiBuilder& LmiBuilder::constant(int r0, int c0, const Mat& m) {
  place(f0_, r0, c0, m);
  return *this;
}

AffineLmi LmiBuilder::finish(std::string label, bool strict) {
  std::sort(coeffs_.begin(), coeffs_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  AffineLmi out;
  out.label = std::move(label);
  out.dim = dim_;
  out.f0 = f0_;
  out.coeffs = std::move(coeffs_);
  out.strict = strict;
  coeffs_.clear();
  f0_.setZero();
  return out;
}

// ---------------------------------------------------------------------------
// Builders

namespace {

std::string idx(int i) { return std::to_string(i + 1); }

std::string vtx(const Mode& m, int kappa) {
  return m.num_vertices() > 1 ? ",v=" + idx(kappa) : std::string();
}

LmiProblem base_problem(const SwitchedSystem& sys) {
  sys.validate();
  LmiProblem p;
  p.strict_margin = strict_margin_for(sys);
  p.epsilon = kCouplingEpsilon;
  return p;
}

void require_tau(DwellSpec spec) {
  if (spec.tau < 1) throw InvalidInput("dwell time tau must be >= 1");
}

// Adds the sequence blocks X_i(k), k = 0..tau, for every mode.
std::vector<std::vector<int>> add_sequences(LmiProblem& p, const SwitchedSystem& sys, int tau, const char* name) {
  std::vector<std::vector<int>> seq(sys.modes.size());
  for (int i = 0; i < sys.num_modes(); ++i)
    for (int k = 0; k <= tau; ++k) {
      seq[i].push_back(p.vars.add_sym(std::string(name) + "_" + idx(i) + "(" + std::to_string(k) + ")", sys.n));
    }
  return seq;
}

// I - X <= 0.
void add_normalization(LmiProblem& p, int block, int n, const std::string& what) {
  LmiBuilder b(p.vars, n);
  const Mat id = Mat::Identity(n, n);
  b.constant(0, 0, id).sym(0, 0, block, id, id, -1.0);
  p.constraints.push_back(b.finish("normalization: " + what + " >= I", false));
}

// -X < 0.
void add_positivity(LmiProblem& p, int block, int n, const std::string& what) {
  LmiBuilder b(p.vars, n);
  const Mat id = Mat::Identity(n, n);
  b.sym(0, 0, block, id, id, -1.0);
  p.constraints.push_back(b.finish("positivity: " + what + " > 0", true));
}

// lhs - rhs + eps I <= 0 with lhs, rhs symmetric blocks.
void add_coupling(LmiProblem& p, int lhs, int rhs, int n, const std::string& label) {
  LmiBuilder b(p.vars, n);
  const Mat id = Mat::Identity(n, n);
  b.sym(0, 0, lhs, id, id, 1.0).sym(0, 0, rhs, id, id, -1.0).constant(0, 0, p.epsilon * id);
  p.constraints.push_back(b.finish(label, false));
}

std::vector<int> add_flat_vars(LmiProblem& p, const SwitchedSystem& sys) {
  std::vector<int> blocks;
  for (int i = 0; i < sys.num_modes(); ++i) blocks.push_back(p.vars.add_sym("P_" + idx(i), sys.n));
  p.layout.flat = true;
  p.layout.sym.clear();
  for (int b : blocks) p.layout.sym.push_back({b});
  return blocks;
}

}  // namespace

LmiProblem build_arbitrary(const SwitchedSystem& sys) {
  LmiProblem p = base_problem(sys);
  const int n = sys.n;
  const Mat id = Mat::Identity(n, n);
  const auto P = add_flat_vars(p, sys);
  p.layout.tau = 1;
  for (int i = 0; i < sys.num_modes(); ++i) {
    const Mode& mode = sys.modes[i];
    for (int kappa = 0; kappa < mode.num_vertices(); ++kappa) {
      const Mat& a = mode.vertices[kappa];
      for (int j = 0; j < sys.num_modes(); ++j) {
        LmiBuilder b(p.vars, n);
        b.sym(0, 0, P[j], a.transpose(), a).sym(0, 0, P[i], id, id, -1.0);
        p.constraints.push_back(
            b.finish("arbitrary[i=" + idx(i) + ",j=" + idx(j) + vtx(mode, kappa) + "]: A_i' P_j A_i - P_i < 0", true));
      }
    }
  }
  for (int i = 0; i < sys.num_modes(); ++i) add_normalization(p, P[i], n, "P_" + idx(i));
  p.normalization = "P_i >= I for every mode (scale fixing of a homogeneous system)";
  return p;
}

LmiProblem build_geromel(const SwitchedSystem& sys, DwellSpec spec, GeromelVariant variant) {
  require_tau(spec);
  LmiProblem p = base_problem(sys);
  if (!sys.is_nominal()) throw InvalidInput("build_geromel: modes must be nominal");
  const int n = sys.n;
  const int N = sys.num_modes();
  const Mat id = Mat::Identity(n, n);
  const auto P = add_flat_vars(p, sys);
  p.layout.tau = spec.tau;
  for (int i = 0; i < N; ++i) {
    const Mat& a = sys.modes[i].A();
    LmiBuilder b(p.vars, n);
    b.sym(0, 0, P[i], a.transpose(), a).sym(0, 0, P[i], id, id, -1.0);
    p.constraints.push_back(b.finish("flat[i=" + idx(i) + "]: A_i' P_i A_i - P_i < 0", true));
  }
  for (int i = 0; i < N; ++i) {
    const Mat pw = mat_pow(sys.modes[i].A(), spec.tau);
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      LmiBuilder b(p.vars, n);
      if (variant == GeromelVariant::Forward) {
        b.sym(0, 0, P[j], pw.transpose(), pw).sym(0, 0, P[i], id, id, -1.0);
        p.constraints.push_back(
            b.finish("flat-forward[i=" + idx(i) + ",j=" + idx(j) + "]: A_i^tau' P_j A_i^tau - P_i < 0", true));
      } else {
        b.sym(0, 0, P[i], pw.transpose(), pw).sym(0, 0, P[j], id, id, -1.0);
        p.constraints.push_back(
            b.finish("flat-backward[i=" + idx(i) + ",j=" + idx(j) + "]: A_i^tau' P_i A_i^tau - P_j < 0", true));
      }
    }
  }
  for (int i = 0; i < N; ++i) add_normalization(p, P[i], n, "P_" + idx(i));
  p.normalization = "P_i >= I for every mode (scale fixing of a homogeneous system)";
  return p;
}

LmiProblem build_lifted(const SwitchedSystem& sys, DwellSpec spec, LiftedForm form) {
  require_tau(spec);
  LmiProblem p = base_problem(sys);
  const int n = sys.n;
  const int N = sys.num_modes();
  const int tau = spec.tau;
  const Mat id = Mat::Identity(n, n);
  const bool primal = form == LiftedForm::PrimalR;
  const auto X = add_sequences(p, sys, tau, primal ? "R" : "S");
  p.layout = {form, tau, X, {}, false};
  p.counts_margin_scalar = true;

  for (int i = 0; i < N; ++i) {
    const Mode& mode = sys.modes[i];
    for (int kappa = 0; kappa < mode.num_vertices(); ++kappa) {
      const Mat& a = mode.vertices[kappa];
      const std::string tag = "i=" + idx(i) + vtx(mode, kappa);
      LmiBuilder b(p.vars, n);
      if (primal) {
        b.sym(0, 0, X[i][tau], a.transpose(), a).sym(0, 0, X[i][tau], id, id, -1.0);
        p.constraints.push_back(b.finish("lifted-R[" + tag + "]: A' R(tau) A - R(tau) < 0", true));
      } else {
        b.sym(0, 0, X[i][tau], a, a.transpose()).sym(0, 0, X[i][tau], id, id, -1.0);
        p.constraints.push_back(b.finish("lifted-S[" + tag + "]: A S(tau) A' - S(tau) < 0", true));
      }
      for (int k = 0; k < tau; ++k) {
        LmiBuilder c(p.vars, n);
        const std::string kt = tag + ",k=" + std::to_string(k);
        if (primal) {
          c.sym(0, 0, X[i][k + 1], a.transpose(), a).sym(0, 0, X[i][k], id, id, -1.0);
          p.constraints.push_back(c.finish("lifted-R[" + kt + "]: A' R(k+1) A - R(k) <= 0", false));
        } else {
          c.sym(0, 0, X[i][k], a, a.transpose()).sym(0, 0, X[i][k + 1], id, id, -1.0);
          p.constraints.push_back(c.finish("lifted-S[" + kt + "]: A S(k) A' - S(k+1) <= 0", false));
        }
      }
    }
  }
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      const std::string tag = "[i=" + idx(i) + ",j=" + idx(j) + "]";
      if (primal) {
        add_coupling(p, X[i][0], X[j][tau], n, "coupling-R" + tag + ": R_i(0) - R_j(tau) + eps I <= 0");
      } else {
        add_coupling(p, X[j][tau], X[i][0], n, "coupling-S" + tag + ": S_j(tau) - S_i(0) + eps I <= 0");
      }
    }
  }
  for (int i = 0; i < N; ++i) {
    if (primal) {
      add_normalization(p, X[i][0], n, "R_" + idx(i) + "(0)");
    } else {
      add_normalization(p, X[i][tau], n, "S_" + idx(i) + "(tau)");
    }
  }
  p.normalization = primal ? "R_i(0) >= I for every mode; epsilon fixed" : "S_i(tau) >= I for every mode; epsilon fixed";
  return p;
}

LmiProblem build_synthesis(const SwitchedSystem& sys, DwellSpec spec) {
  require_tau(spec);
  for (int i = 0; i < sys.num_modes(); ++i) {
    if (!sys.modes[i].B) throw MissingMatrix("build_synthesis: mode " + idx(i) + " has no B");
  }
  LmiProblem p = base_problem(sys);
  const int n = sys.n;
  const int N = sys.num_modes();
  const int tau = spec.tau;
  const Mat id = Mat::Identity(n, n);
  const auto S = add_sequences(p, sys, tau, "S");
  std::vector<std::vector<int>> U(N);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k <= tau; ++k) {
      U[i].push_back(
          p.vars.add_rect("U_" + idx(i) + "(" + std::to_string(k) + ")", sys.modes[i].input_dim(), n));
    }
  p.layout = {LiftedForm::DualS, tau, S, U, false};
  p.counts_margin_scalar = true;

  for (int i = 0; i < N; ++i) {
    const Mode& mode = sys.modes[i];
    const Mat& bm = *mode.B;
    for (int kappa = 0; kappa < mode.num_vertices(); ++kappa) {
      const Mat& a = mode.vertices[kappa];
      const std::string tag = "i=" + idx(i) + vtx(mode, kappa);
      {
        LmiBuilder b(p.vars, 2 * n);
        b.sym(0, 0, S[i][tau], id, id, -1.0)
            .sym(0, n, S[i][tau], a, id)
            .rect(0, n, U[i][tau], bm, id)
            .sym(n, n, S[i][tau], id, id, -1.0);
        p.constraints.push_back(b.finish("synthesis[" + tag + "]: [-S(tau), A S(tau) + B U(tau); *, -S(tau)] < 0", true));
      }
      for (int k = 0; k < tau; ++k) {
        LmiBuilder b(p.vars, 2 * n);
        b.sym(0, 0, S[i][k + 1], id, id, -1.0)
            .sym(0, n, S[i][k], a, id)
            .rect(0, n, U[i][k], bm, id)
            .sym(n, n, S[i][k], id, id, -1.0);
        p.constraints.push_back(b.finish("synthesis[" + tag + ",k=" + std::to_string(k) +
                                             "]: [-S(k+1), A S(k) + B U(k); *, -S(k)] <= 0",
                                         false));
      }
    }
  }
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      add_coupling(p, S[j][tau], S[i][0], n,
                   "coupling-S[i=" + idx(i) + ",j=" + idx(j) + "]: S_j(tau) - S_i(0) + eps I <= 0");
    }
  for (int i = 0; i < N; ++i) add_normalization(p, S[i][tau], n, "S_" + idx(i) + "(tau)");
  p.normalization = "S_i(tau) >= I for every mode; epsilon fixed";
  return p;
}

LmiProblem build_l2(const SwitchedSystem& sys, DwellSpec spec, double gamma, LiftedForm form) {
  require_tau(spec);
  if (!(gamma > 0.0)) throw InvalidInput("build_l2: gamma must be positive");
  for (int i = 0; i < sys.num_modes(); ++i) {
    if (!sys.modes[i].E) throw MissingMatrix("build_l2: mode " + idx(i) + " has no E");
    if (!sys.modes[i].C) throw MissingMatrix("build_l2: mode " + idx(i) + " has no C");
  }
  LmiProblem p = base_problem(sys);
  const int n = sys.n;
  const int N = sys.num_modes();
  const int tau = spec.tau;
  const Mat id = Mat::Identity(n, n);
  const bool primal = form == LiftedForm::PrimalR;
  const auto X = add_sequences(p, sys, tau, primal ? "R" : "S");
  p.layout = {form, tau, X, {}, false};
  p.counts_margin_scalar = true;
  const double g2 = gamma * gamma;

  for (int i = 0; i < N; ++i) {
    const Mode& mode = sys.modes[i];
    const Mat& e = *mode.E;
    const Mat& c = *mode.C;
    const Mat f = mode.F_or_zero();
    const int pd = mode.disturbance_dim();
    const int qd = mode.output_dim();
    const Mat idp = Mat::Identity(pd, pd);
    const Mat idq = Mat::Identity(qd, qd);
    for (int kappa = 0; kappa < mode.num_vertices(); ++kappa) {
      const Mat& a = mode.vertices[kappa];
      const std::string tag = "i=" + idx(i) + vtx(mode, kappa);
      // theta = tau gives the strict block, theta = k the chain blocks.
      for (int k = tau; k >= 0; --k) {
        const bool last = k == tau;
        const int next = last ? tau : k + 1;
        const int cur = k;
        if (primal) {
          LmiBuilder b(p.vars, n + pd);
          b.sym(0, 0, X[i][next], a.transpose(), a)
              .sym(0, 0, X[i][cur], id, id, -1.0)
              .constant(0, 0, c.transpose() * c)
              .sym(0, n, X[i][next], a.transpose(), e)
              .constant(0, n, c.transpose() * f)
              .sym(n, n, X[i][next], e.transpose(), e)
              .constant(n, n, f.transpose() * f - g2 * idp);
          p.constraints.push_back(last ? b.finish("l2-R[" + tag + "]: Xi(tau) < 0", true)
                                       : b.finish("l2-R[" + tag + ",k=" + std::to_string(k) + "]: Xi(k+1,k) <= 0", false));
        } else {
          LmiBuilder b(p.vars, n + pd + qd);
          b.sym(0, 0, X[i][cur], a, a.transpose())
              .sym(0, 0, X[i][next], id, id, -1.0)
              .constant(0, n, e)
              .sym(0, n + pd, X[i][cur], a, c.transpose())
              .constant(n, n, -g2 * idp)
              .constant(n, n + pd, f.transpose())
              .constant(n + pd, n + pd, -idq)
              .sym(n + pd, n + pd, X[i][cur], c, c.transpose());
          p.constraints.push_back(last ? b.finish("l2-S[" + tag + "]: Gamma(tau) block < 0", true)
                                       : b.finish("l2-S[" + tag + ",k=" + std::to_string(k) + "]: Gamma(k,k+1) block <= 0",
                                                  false));
        }
      }
    }
  }
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      const std::string tag = "[i=" + idx(i) + ",j=" + idx(j) + "]";
      if (primal) {
        add_coupling(p, X[i][0], X[j][tau], n, "coupling-R" + tag + ": R_i(0) - R_j(tau) + eps I <= 0");
      } else {
        add_coupling(p, X[j][tau], X[i][0], n, "coupling-S" + tag + ": S_j(tau) - S_i(0) + eps I <= 0");
      }
    }
  for (int i = 0; i < N; ++i) {
    if (primal) {
      add_positivity(p, X[i][0], n, "R_" + idx(i) + "(0)");
    } else {
      add_positivity(p, X[i][tau], n, "S_" + idx(i) + "(tau)");
    }
  }
  p.normalization = "none: gamma fixes the scale; epsilon fixed";
  return p;
}

LmiProblem build_l2_synthesis(const SwitchedSystem& sys, DwellSpec spec, double gamma) {
  require_tau(spec);
  if (!(gamma > 0.0)) throw InvalidInput("build_l2_synthesis: gamma must be positive");
  for (int i = 0; i < sys.num_modes(); ++i) {
    const Mode& m = sys.modes[i];
    if (!m.B) throw MissingMatrix("build_l2_synthesis: mode " + idx(i) + " has no B");
    if (!m.E) throw MissingMatrix("build_l2_synthesis: mode " + idx(i) + " has no E");
    if (!m.C) throw MissingMatrix("build_l2_synthesis: mode " + idx(i) + " has no C");
  }
  LmiProblem p = base_problem(sys);
  const int n = sys.n;
  const int N = sys.num_modes();
  const int tau = spec.tau;
  const Mat id = Mat::Identity(n, n);
  const auto S = add_sequences(p, sys, tau, "S");
  std::vector<std::vector<int>> U(N);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k <= tau; ++k) {
      U[i].push_back(
          p.vars.add_rect("U_" + idx(i) + "(" + std::to_string(k) + ")", sys.modes[i].input_dim(), n));
    }
  p.layout = {LiftedForm::DualS, tau, S, U, false};
  p.counts_margin_scalar = true;
  const double g2 = gamma * gamma;

  for (int i = 0; i < N; ++i) {
    const Mode& mode = sys.modes[i];
    const Mat& bm = *mode.B;
    const Mat& e = *mode.E;
    const Mat& c = *mode.C;
    const Mat d = mode.D_or_zero();
    const Mat f = mode.F_or_zero();
    const int pd = mode.disturbance_dim();
    const int qd = mode.output_dim();
    const int rw = 2 * n;       // disturbance rows
    const int rz = 2 * n + pd;  // output rows
    const Mat idq = Mat::Identity(qd, qd);
    for (int kappa = 0; kappa < mode.num_vertices(); ++kappa) {
      const Mat& a = mode.vertices[kappa];
      const std::string tag = "i=" + idx(i) + vtx(mode, kappa);
      for (int k = tau; k >= 0; --k) {
        const bool last = k == tau;
        const int next = last ? tau : k + 1;
        LmiBuilder b(p.vars, 2 * n + pd + qd);
        b.sym(0, 0, S[i][next], id, id, -1.0)
            .sym(0, n, S[i][k], a, id)
            .rect(0, n, U[i][k], bm, id)
            .constant(0, rw, e)
            .sym(n, n, S[i][k], id, id, -1.0)
            .sym(rz, n, S[i][k], c, id)
            .rect(rz, n, U[i][k], d, id)
            .constant(rw, rw, -g2 * Mat::Identity(pd, pd))
            .constant(rw, rz, f.transpose())
            .constant(rz, rz, -idq);
        p.constraints.push_back(last ? b.finish("l2-synthesis[" + tag + "]: closed-loop block at tau < 0", true)
                                     : b.finish("l2-synthesis[" + tag + ",k=" + std::to_string(k) +
                                                    "]: closed-loop block at k <= 0",
                                                false));
      }
    }
  }
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      add_coupling(p, S[j][tau], S[i][0], n,
                   "coupling-S[i=" + idx(i) + ",j=" + idx(j) + "]: S_j(tau) - S_i(0) + eps I <= 0");
    }
  p.normalization = "none: gamma fixes the scale; epsilon fixed";
  return p;
}

ProblemSize problem_size(const LmiProblem& p) {
  ProblemSize s;
  s.num_scalar_vars = p.vars.total_dim() + (p.counts_margin_scalar ? 1 : 0);
  for (const AffineLmi& c : p.constraints) s.total_lmi_dim += c.dim;
  if (p.counts_margin_scalar) s.total_lmi_dim += 1;
  return s;
}

std::string dump_sdpa(const LmiProblem& p) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "\"dwell LMI feasibility problem, sparse SDPA format.\n";
  out << "* Own convention: each constraint reads F0 + sum_k x_k F_k <= -d I (d = delta if strict, else 0).\n";
  out << "* Written in SDPA form sum_k x_k G_k - G_0 >= 0 with G_k = -F_k and G_0 = F0 + d I; objective c = 0.\n";
  out << "* Field order: mDIM, nBLOCK, bLOCKsTRUCT, c, then lines <matno> <blkno> <i> <j> <value>\n";
  out << "* (matno 0 is G_0, indices 1-based, upper triangle only).\n";
  out << "* delta = " << p.strict_margin << ", epsilon = " << p.epsilon << "\n";
  for (std::size_t b = 0; b < p.constraints.size(); ++b) {
    out << "* block " << b + 1 << (p.constraints[b].strict ? " strict: " : " non-strict: ") << p.constraints[b].label
        << "\n";
  }
  const int m = p.vars.total_dim();
  out << m << " = mDIM\n";
  out << p.constraints.size() << " = nBLOCK\n";
  for (std::size_t b = 0; b < p.constraints.size(); ++b) out << (b ? " " : "") << p.constraints[b].dim;
  out << " = bLOCKsTRUCT\n";
  for (int k = 0; k < m; ++k) out << (k ? " " : "") << 0;
  out << "\n";
  auto emit = [&](int matno, int blk, const Mat& g) {
    for (int i = 0; i < g.rows(); ++i)
      for (int j = i; j < g.cols(); ++j)
        if (g(i, j) != 0.0) out << matno << " " << blk << " " << i + 1 << " " << j + 1 << " " << g(i, j) << "\n";
  };
  for (std::size_t b = 0; b < p.constraints.size(); ++b) {
    const AffineLmi& c = p.constraints[b];
    const int blk = static_cast<int>(b) + 1;
    Mat g0 = c.f0;
    if (c.strict) g0 += p.strict_margin * Mat::Identity(c.dim, c.dim);
    emit(0, blk, g0);
    for (const auto& [k, fk] : c.coeffs) emit(k + 1, blk, -fk);
  }
  return out.str();
}

}  // namespace dwell
