#include "dwell/sdp_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dwell::kernels {

namespace {

struct LocalBlock {
  bool interior = false;
  double log_det = 0.0;
  Mat h;  // (L+1) square, last index is t
  Vec g;
};

Mat slack(const CompiledLmi& b, const Vec& y, int num_x) {
  Mat z = y(num_x) * Mat::Identity(b.dim, b.dim) - b.f0;
  for (std::size_t a = 0; a < b.vars.size(); ++a) z -= y(b.vars[a]) * b.mats[a];
  return z;
}

LocalBlock local_contribution(const CompiledLmi& b, const Vec& y, int num_x) {
  LocalBlock out;
  const Mat z = slack(b, y, num_x);
  Eigen::LLT<Mat> llt(z);
  if (llt.info() != Eigen::Success) return out;
  const Mat l = llt.matrixL();
  for (int i = 0; i < b.dim; ++i) {
    if (!(l(i, i) > 0.0)) return out;
    out.log_det += 2.0 * std::log(l(i, i));
  }
  const Mat linv = l.triangularView<Eigen::Lower>().solve(Mat::Identity(b.dim, b.dim));
  const int nv = static_cast<int>(b.vars.size());
  std::vector<Mat> w(nv + 1);
  for (int a = 0; a < nv; ++a) w[a] = -(linv * b.mats[a] * linv.transpose());
  w[nv] = linv * linv.transpose();
  out.h.resize(nv + 1, nv + 1);
  out.g.resize(nv + 1);
  for (int a = 0; a <= nv; ++a) {
    out.g(a) = -w[a].trace();
    for (int c = 0; c <= a; ++c) {
      const double v = w[a].cwiseProduct(w[c]).sum();
      out.h(a, c) = v;
      out.h(c, a) = v;
    }
  }
  out.interior = true;
  return out;
}

void scatter(const CompiledLmi& b, const LocalBlock& lb, int num_x, NewtonSystem& ns) {
  const int nv = static_cast<int>(b.vars.size());
  auto global = [&](int a) { return a == nv ? num_x : b.vars[a]; };
  for (int a = 0; a <= nv; ++a) {
    const int ga = global(a);
    ns.gradient(ga) += lb.g(a);
    for (int c = 0; c <= nv; ++c) ns.hessian(ga, global(c)) += lb.h(a, c);
  }
  ns.value -= lb.log_det;
}

NewtonSystem empty_system(const CompiledProblem& cp, const Vec& y, double s) {
  NewtonSystem ns;
  ns.hessian = Mat::Zero(cp.num_x + 1, cp.num_x + 1);
  ns.gradient = Vec::Zero(cp.num_x + 1);
  ns.value = s * y(cp.num_x);
  return ns;
}

double ball_slack(const CompiledProblem& cp, const Vec& y) {
  const double r = cp.ball_radius;
  return r * r - y.head(cp.num_x).squaredNorm();
}

// Adds the ball term; false if y is outside the ball.
bool add_ball(const CompiledProblem& cp, const Vec& y, NewtonSystem& ns) {
  if (cp.ball_radius <= 0.0) return true;
  const double g = ball_slack(cp, y);
  if (!(g > 0.0)) return false;
  const auto x = y.head(cp.num_x);
  ns.value -= std::log(g);
  ns.gradient.head(cp.num_x) += (2.0 / g) * x;
  ns.hessian.topLeftCorner(cp.num_x, cp.num_x).diagonal().array() += 2.0 / g;
  ns.hessian.topLeftCorner(cp.num_x, cp.num_x) += (4.0 / (g * g)) * x * x.transpose();
  return true;
}

}  // namespace

CompiledProblem compile(const LmiProblem& p, double ball_radius) {
  p.check_well_formed();
  CompiledProblem cp;
  cp.num_x = p.vars.total_dim();
  cp.ball_radius = ball_radius;
  if (ball_radius > 0.0) cp.barrier_degree = 1;
  for (const AffineLmi& c : p.constraints) {
    CompiledLmi b;
    b.dim = c.dim;
    b.f0 = c.f0;
    if (c.strict) b.f0 += p.strict_margin * Mat::Identity(c.dim, c.dim);
    for (const auto& [k, fk] : c.coeffs) {
      b.vars.push_back(k);
      b.mats.push_back(fk);
    }
    cp.barrier_degree += c.dim;
    cp.blocks.push_back(std::move(b));
  }
  return cp;
}

std::optional<double> barrier_value(const CompiledProblem& cp, const Vec& y, double s) {
  double value = s * y(cp.num_x);
  if (cp.ball_radius > 0.0) {
    const double g = ball_slack(cp, y);
    if (!(g > 0.0)) return std::nullopt;
    value -= std::log(g);
  }
  for (const CompiledLmi& b : cp.blocks) {
    Eigen::LLT<Mat> llt(slack(b, y, cp.num_x));
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Mat l = llt.matrixL();
    for (int i = 0; i < b.dim; ++i) {
      if (!(l(i, i) > 0.0)) return std::nullopt;
      value -= 2.0 * std::log(l(i, i));
    }
  }
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

double max_shifted_eig(const CompiledProblem& cp, const Vec& x) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const CompiledLmi& b : cp.blocks) {
    Mat f = b.f0;
    for (std::size_t a = 0; a < b.vars.size(); ++a) f += x(b.vars[a]) * b.mats[a];
    worst = std::max(worst, max_eig(SymMat(f)));
  }
  return worst;
}

std::optional<NewtonSystem> assemble_newton_serial(const CompiledProblem& cp, const Vec& y, double s) {
  NewtonSystem ns = empty_system(cp, y, s);
  for (const CompiledLmi& b : cp.blocks) {
    const LocalBlock lb = local_contribution(b, y, cp.num_x);
    if (!lb.interior) return std::nullopt;
    scatter(b, lb, cp.num_x, ns);
  }
  if (!add_ball(cp, y, ns)) return std::nullopt;
  ns.gradient(cp.num_x) += s;
  return ns;
}

std::optional<NewtonSystem> assemble_newton_parallel(const CompiledProblem& cp, const Vec& y, double s) {
  const int nb = static_cast<int>(cp.blocks.size());
  std::vector<LocalBlock> locals(static_cast<std::size_t>(nb));
#pragma omp parallel for schedule(dynamic, 4)
  for (int j = 0; j < nb; ++j) locals[j] = local_contribution(cp.blocks[j], y, cp.num_x);

  NewtonSystem ns = empty_system(cp, y, s);
  for (int j = 0; j < nb; ++j) {
    if (!locals[j].interior) return std::nullopt;
    scatter(cp.blocks[j], locals[j], cp.num_x, ns);
  }
  if (!add_ball(cp, y, ns)) return std::nullopt;
  ns.gradient(cp.num_x) += s;
  return ns;
}

}  // namespace dwell::kernels
