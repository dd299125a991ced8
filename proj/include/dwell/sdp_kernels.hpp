#pragma once

// Newton-system kernels of the phase-I barrier method.
//
// The decision vector is y = (x, t). Constraint j contributes the slack
// Z_j(y) = t I - F0_j - d_j I - sum_k x_k F_jk, which must stay positive
// definite, and the barrier term -log det Z_j. Two implementations of the
// assembly are kept: a serial reference and an OpenMP version that computes
// per-constraint contributions concurrently and scatters them in constraint
// order, so both produce bit-identical results.

#include <optional>
#include <vector>

#include "dwell/lmi.hpp"
#include "dwell/matrix_core.hpp"

namespace dwell::kernels {

struct CompiledLmi {
  int dim = 0;
  Mat f0;  // F0 + d I, d = delta for strict constraints
  std::vector<int> vars;
  std::vector<Mat> mats;
};

struct CompiledProblem {
  int num_x = 0;
  int barrier_degree = 0;  // sum of block dimensions, plus one for the ball
  std::vector<CompiledLmi> blocks;
  /// Adds -log(M^2 - |x|^2) to the barrier when positive. Removes recession
  /// directions of the semidefinite cone so every centering step has a center.
  double ball_radius = 0.0;
};

CompiledProblem compile(const LmiProblem& p, double ball_radius = 0.0);

struct NewtonSystem {
  Mat hessian;   // (num_x + 1) square
  Vec gradient;  // of s t - sum_j log det Z_j
  double value = 0.0;
};

/// Barrier value s t - sum_j log det Z_j (- log of the ball slack), or nullopt if some Z_j is not
/// positive definite.
std::optional<double> barrier_value(const CompiledProblem& cp, const Vec& y, double s);

/// Largest eigenvalue of F0_j + d_j I + sum_k x_k F_jk over all j.
double max_shifted_eig(const CompiledProblem& cp, const Vec& x);

/// Returns nullopt if y is not strictly interior.
std::optional<NewtonSystem> assemble_newton_serial(const CompiledProblem& cp, const Vec& y, double s);
std::optional<NewtonSystem> assemble_newton_parallel(const CompiledProblem& cp, const Vec& y, double s);

}  // namespace dwell::kernels
