#pragma once

// Dense real matrix kernel. Storage and products come from Eigen; the
// symmetric eigensolver, general spectral radius and matrix exponential are
// implemented here so the accuracy contracts below are owned by this code.

#include <Eigen/Dense>

namespace dwell {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Symmetric matrix. Construction symmetrizes its argument, so
/// max|S - S'| is exactly zero for every instance.
class SymMat {
 public:
  SymMat() = default;
  /// Throws InvalidInput if `m` is not square or has non-finite entries.
  explicit SymMat(const Mat& m);

  static SymMat identity(int n);
  static SymMat zeros(int n);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Mat& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

  SymMat operator+(const SymMat& o) const;
  SymMat operator-(const SymMat& o) const;
  SymMat operator*(double s) const;

 private:
  Mat m_;
};

struct SymEig {
  Vec values;  // ascending
  Mat basis;   // orthonormal columns, S = basis * diag(values) * basis'
};

/// Cyclic Jacobi eigendecomposition.
SymEig sym_eig(const SymMat& s);
double min_eig(const SymMat& s);
double max_eig(const SymMat& s);

/// Largest eigenvalue modulus over the complex spectrum. Hessenberg
/// reduction followed by Francis double-shift QR. Throws NumericalFailure if
/// an eigenvalue does not deflate within the iteration cap.
double spectral_radius(const Mat& a);

/// A^k by repeated squaring, A^0 = I.
Mat mat_pow(const Mat& a, int k);

/// Scaling and squaring with the [6/6] Pade approximant, scaled so that
/// ||A / 2^s||_1 <= 0.5.
Mat expm(const Mat& a);

/// Solves S X = B by Cholesky. Throws NotPositiveDefinite on breakdown.
Mat solve_spd(const SymMat& s, const Mat& b);

double max_abs(const Mat& m);
bool all_finite(const Mat& m);

/// Congruence L' S L as a symmetric matrix.
SymMat congruence(const Mat& l, const SymMat& s);

}  // namespace dwell
