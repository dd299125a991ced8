#pragma once

// Assembly of the dwell-time conditions into standard-form affine LMI
// feasibility problems over one flattened decision vector x.
//
// Every constraint reads F0 + sum_k x_k F_k <= 0 (non-strict) or
// <= -delta I (strict). Symmetric matrix variables are flattened by their
// upper triangle (row-major), with basis E_ab + E_ba for a != b, so the
// coordinate of an entry equals the entry itself.

#include <string>
#include <utility>
#include <vector>

#include "dwell/matrix_core.hpp"
#include "dwell/system_model.hpp"

namespace dwell {

/// Fixed positive margin used in place of the existential scalar epsilon in
/// the switching coupling constraints.
inline constexpr double kCouplingEpsilon = 1e-6;

/// Scale-aware margin realizing strict inequalities: 1e-7 (1 + max|A|).
double strict_margin_for(const SwitchedSystem& sys);

class VarSpace {
 public:
  struct SymBlock {
    std::string name;
    int dim;
    int offset;
  };
  struct RectBlock {
    std::string name;
    int rows;
    int cols;
    int offset;
  };
  struct Scalar {
    std::string name;
    int offset;
  };

  int add_sym(std::string name, int dim);
  int add_rect(std::string name, int rows, int cols);
  int add_scalar(std::string name);

  int total_dim() const { return total_; }
  const std::vector<SymBlock>& sym_blocks() const { return sym_; }
  const std::vector<RectBlock>& rect_blocks() const { return rect_; }
  const std::vector<Scalar>& scalars() const { return scalars_; }

  /// Flat index of entry (a, b) of symmetric block `block`.
  int sym_index(int block, int a, int b) const;
  SymMat sym_value(int block, const Vec& x) const;
  Mat rect_value(int block, const Vec& x) const;
  /// Writes a symmetric matrix into the coordinates of `block`.
  void set_sym(int block, const SymMat& value, Vec& x) const;
  void set_rect(int block, const Mat& value, Vec& x) const;

  /// Identity for every symmetric block, zero elsewhere.
  Vec initial_point() const;

 private:
  void claim_name(const std::string& name);

  std::vector<SymBlock> sym_;
  std::vector<RectBlock> rect_;
  std::vector<Scalar> scalars_;
  std::vector<std::string> names_;
  int total_ = 0;
};

struct AffineLmi {
  std::string label;
  int dim = 0;
  Mat f0;
  std::vector<std::pair<int, Mat>> coeffs;  // sorted by variable index
  bool strict = false;

  SymMat evaluate(const Vec& x) const;
};

enum class LiftedForm { PrimalR, DualS };
enum class GeromelVariant { Forward, Backward };

/// Where the certificate lives inside the decision vector.
struct CertificateLayout {
  LiftedForm form = LiftedForm::PrimalR;
  int tau = 0;
  std::vector<std::vector<int>> sym;   // per mode: P_i (flat) or R_i(k)/S_i(k), k = 0..tau
  std::vector<std::vector<int>> rect;  // per mode: U_i(k) for synthesis problems
  bool flat = false;
};

struct LmiProblem {
  VarSpace vars;
  std::vector<AffineLmi> constraints;
  std::string normalization;
  double strict_margin = 0.0;
  double epsilon = 0.0;
  /// Size counts treat epsilon as one decision scalar and one LMI row.
  bool counts_margin_scalar = false;
  CertificateLayout layout;

  /// Throws InvalidInput if a constraint references an unknown variable or
  /// has inconsistent block sizes.
  void check_well_formed() const;
};

/// Incremental assembly of one symmetric affine matrix expression. Terms
/// placed at an off-diagonal block (r0 != c0) are mirrored to (c0, r0).
class LmiBuilder {
 public:
  LmiBuilder(const VarSpace& vars, int dim);

  /// scale * left * X * right, X the symmetric block `block`.
  LmiBuilder& sym(int r0, int c0, int block, const Mat& left, const Mat& right, double scale = 1.0);
  /// scale * left * U * right, U the rectangular block `block`.
  LmiBuilder& rect(int r0, int c0, int block, const Mat& left, const Mat& right, double scale = 1.0);
  LmiBuilder& constant(int r0, int c0, const Mat& m);

  AffineLmi finish(std::string label, bool strict);

 private:
  void place(Mat& target, int r0, int c0, const Mat& m) const;
  Mat& coeff(int var);

  const VarSpace& vars_;
  int dim_;
  Mat f0_;
  std::vector<std::pair<int, Mat>> coeffs_;
};

/// Common-switching conditions A_i' P_j A_i - P_i < 0 for all i, j.
LmiProblem build_arbitrary(const SwitchedSystem& sys);

/// Flat conditions with numerically computed powers A_i^tau (nominal modes).
/// Forward: A_i^tau' P_j A_i^tau - P_i < 0; backward swaps P_i and P_j.
LmiProblem build_geromel(const SwitchedSystem& sys, DwellSpec spec, GeromelVariant variant);

/// Lifted conditions on sequences R_i(k) (primal) or S_i(k) (dual), one
/// constraint per polytope vertex.
LmiProblem build_lifted(const SwitchedSystem& sys, DwellSpec spec, LiftedForm form);

/// State-feedback conditions on S_i(k), U_i(k) = K_i(k) S_i(k).
LmiProblem build_synthesis(const SwitchedSystem& sys, DwellSpec spec);

/// Fixed-gamma l2-gain conditions (primal blocks Xi or dual three-block form).
LmiProblem build_l2(const SwitchedSystem& sys, DwellSpec spec, double gamma, LiftedForm form = LiftedForm::PrimalR);

/// Fixed-gamma l2 state-feedback conditions. The dual l2 blocks with the
/// closed-loop substitution A + B K, C + D K are kept in their un-reduced
/// four-block form so that U = K S enters linearly:
///
///   [ -S(k+1)  A S(k) + B U(k)   E    0               ]
///   [   *      -S(k)             0    (C S(k) + D U(k))' ]  <= 0
///   [   *        *             -g^2 I F'              ]
///   [   *        *               *   -I               ]
///
/// With B = D = 0 it is Schur-equivalent to the dual build_l2 form.
LmiProblem build_l2_synthesis(const SwitchedSystem& sys, DwellSpec spec, double gamma);

struct ProblemSize {
  int num_scalar_vars = 0;
  int total_lmi_dim = 0;
  friend bool operator==(const ProblemSize&, const ProblemSize&) = default;
};

ProblemSize problem_size(const LmiProblem& p);

/// Sparse SDPA listing of the feasibility problem; see the header lines of
/// the output for the field order.
std::string dump_sdpa(const LmiProblem& p);

}  // namespace dwell
