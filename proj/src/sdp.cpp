#include "dwell/sdp.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "dwell/errors.hpp"
#include "dwell/sdp_kernels.hpp"

namespace dwell {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Feasible: return "Feasible";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Inconclusive: return "Inconclusive";
  }
  return "?";
}

void SolveOptions::validate() const {
  if (max_newton_iters <= 0) throw InvalidInput("SolveOptions: max_newton_iters must be positive");
  if (!(barrier_mu_factor > 1.0)) throw InvalidInput("SolveOptions: barrier_mu_factor must exceed 1");
  if (!(witness_check_tol > 0.0)) throw InvalidInput("SolveOptions: witness_check_tol must be positive");
  if (!(ball_scale > 1.0)) throw InvalidInput("SolveOptions: ball_scale must exceed 1");
  if (time_limit_ms && *time_limit_ms <= 0) throw InvalidInput("SolveOptions: time_limit_ms must be positive");
}

WitnessCheck check_witness(const LmiProblem& p, const Vec& x, double tol) {
  WitnessCheck out;
  out.worst_excess = -std::numeric_limits<double>::infinity();
  if (x.size() != p.vars.total_dim() || !all_finite(x)) {
    out.worst_label = "<witness>";
    out.worst_excess = std::numeric_limits<double>::infinity();
    return out;
  }
  for (const AffineLmi& c : p.constraints) {
    const double top = -min_eig(c.evaluate(x) * -1.0);
    const double allowance = c.strict ? -0.5 * p.strict_margin : tol;
    const double excess = top - allowance;
    if (excess > out.worst_excess) {
      out.worst_excess = excess;
      out.worst_label = c.label;
    }
  }
  out.passed = out.worst_excess <= 0.0;
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

// A stage ends once the Newton decrement drops below this value.
constexpr double kCenteredDecrement = 0.1;

struct Worst {
  std::string label;
  double value = 0.0;
};

Worst worst_constraint(const LmiProblem& p, const Vec& x) {
  Worst w;
  w.value = -std::numeric_limits<double>::infinity();
  for (const AffineLmi& c : p.constraints) {
    double v = max_eig(c.evaluate(x));
    if (c.strict) v += p.strict_margin;
    if (v > w.value) {
      w.value = v;
      w.label = c.label;
    }
  }
  return w;
}

// Newton direction for H dy = -g. The system is equilibrated by its diagonal
// and a growing shift is added if it is numerically singular.
std::optional<Vec> newton_direction(const kernels::NewtonSystem& ns) {
  const int n = static_cast<int>(ns.gradient.size());
  Vec d = ns.hessian.diagonal().cwiseAbs().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  const Mat h = d.asDiagonal() * ns.hessian * d.asDiagonal();
  const Vec g = d.cwiseProduct(ns.gradient);
  double shift = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::LLT<Mat> llt(h + shift * Mat::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      Vec dy = d.cwiseProduct(llt.solve(-g));
      if (all_finite(dy)) return dy;
    }
    shift = shift == 0.0 ? 1e-14 : shift * 100.0;
  }
  return std::nullopt;
}

// Upper bound on t - t* at a point with Newton decrement lam < 1 for a
// barrier of parameter nu, weighted by s.
double gap_bound(double nu, double s, double lam) {
  return (nu + (lam + std::sqrt(nu)) * lam / (1.0 - lam)) / s;
}

}  // namespace

SolveOutcome BarrierBackend::run(const LmiProblem& p, const SolveOptions& opts) const {
  const auto start = Clock::now();
  Vec x0 = opts.initial_point ? *opts.initial_point : p.vars.initial_point();
  if (x0.size() != p.vars.total_dim()) throw InvalidInput("solve: initial point has the wrong size");
  const kernels::CompiledProblem cp = kernels::compile(p, opts.ball_scale * std::max(1.0, x0.norm()));
  const int nx = cp.num_x;
  const double delta = p.strict_margin;
  const double feas_target = opts.feas_target.value_or(-0.5 * delta);
  const double deep_target = std::min(feas_target, -std::max(1e-3, 1e4 * delta));
  const double nu = std::max(1, cp.barrier_degree);

  auto assemble = [&](const Vec& y, double s) {
    return opts.parallel_assembly ? kernels::assemble_newton_parallel(cp, y, s)
                                  : kernels::assemble_newton_serial(cp, y, s);
  };

  if (opts.log) *opts.log << "# " << p.constraints.size() << " blocks, " << nx << " variables\n# iter t s decrement |x|\n";
  SolveOutcome out;
  Vec y(nx + 1);
  y.head(nx) = x0;
  y(nx) = cp.blocks.empty() ? -1.0 : kernels::max_shifted_eig(cp, x0) + 1.0;

  auto finish = [&](SolveStatus status, std::string reason) {
    out.status = status;
    out.reason = std::move(reason);
    const Vec at = out.witness ? *out.witness : Vec(y.head(nx));
    out.achieved_margin = cp.blocks.empty() ? -1.0 : kernels::max_shifted_eig(cp, at);
    const Worst w = worst_constraint(p, at);
    out.worst_label = w.label;
    out.worst_value = w.value;
    return out;
  };

  if (cp.blocks.empty()) {
    out.witness = x0;
    return finish(SolveStatus::Feasible, "no constraints");
  }

  double s = nu / std::max(1.0, std::abs(y(nx)));
  int consecutive_above = 0;
  int stages_after_witness = 0;
  double last_decrement = 0.0;
  double best_witness_t = std::numeric_limits<double>::infinity();

  // Records y as the current witness if it passes the a-posteriori check.
  auto try_witness = [&]() {
    if (!(y(nx) < feas_target) || !(y(nx) < best_witness_t)) return;
    const Vec x = y.head(nx);
    if (check_witness(p, x, opts.witness_check_tol).passed) {
      out.witness = x;
      best_witness_t = y(nx);
    }
  };

  while (true) {
    // Centering at the current s.
    bool centered = false;
    while (!centered) {
      if (out.iterations >= opts.max_newton_iters) {
        if (out.witness) return finish(SolveStatus::Feasible, "iteration cap after witness");
        return finish(SolveStatus::Inconclusive, "Newton iteration cap reached");
      }
      if (opts.time_limit_ms &&
          std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count() > *opts.time_limit_ms) {
        if (out.witness) return finish(SolveStatus::Feasible, "time limit after witness");
        return finish(SolveStatus::Inconclusive, "time limit reached");
      }
      const auto ns = assemble(y, s);
      if (!ns) return finish(SolveStatus::Inconclusive, "iterate left the interior");
      const auto dy = newton_direction(*ns);
      if (!dy) return finish(SolveStatus::Inconclusive, "singular Newton system");
      const double dec2 = -ns->gradient.dot(*dy);
      last_decrement = std::sqrt(std::max(0.0, dec2));
      ++out.iterations;
      if (opts.log) {
        *opts.log << out.iterations << ' ' << y(nx) << ' ' << s << ' ' << last_decrement << ' ' << y.head(nx).norm() << '\n';
      }
      if (last_decrement < kCenteredDecrement) {
        centered = true;
        break;
      }
      double alpha = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
        const Vec trial = y + alpha * *dy;
        const auto v = kernels::barrier_value(cp, trial, s);
        if (v && *v <= ns->value - 0.25 * alpha * dec2) {
          y = trial;
          moved = true;
          break;
        }
      }
      if (!moved) {
        // No descent left at machine precision: treat as centered.
        centered = true;
        break;
      }
      try_witness();
      if (out.witness && y(nx) <= deep_target) return finish(SolveStatus::Feasible, "deep witness");
    }

    try_witness();
    if (out.witness) {
      if (y(nx) <= deep_target || ++stages_after_witness > 2) return finish(SolveStatus::Feasible, "witness verified");
    }

    // The bound only holds for decrements below one.
    const double gap = last_decrement < 1.0 ? gap_bound(nu, s, last_decrement) : std::numeric_limits<double>::infinity();
    const double lower = y(nx) - gap;
    if (!out.witness) {
      if (lower > delta) {
        if (++consecutive_above >= 2) return finish(SolveStatus::Infeasible, "phase-I optimum bounded above +delta");
      } else {
        consecutive_above = 0;
      }
      if (gap < 1e-3 * delta && y(nx) >= feas_target) {
        return finish(SolveStatus::Inconclusive, "phase-I optimum within the decision band");
      }
    }
    if (!std::isfinite(s * opts.barrier_mu_factor)) return finish(SolveStatus::Inconclusive, "barrier parameter overflow");
    s *= opts.barrier_mu_factor;
  }
}

SolveOutcome solve(const SdpBackend& backend, const LmiProblem& p, const SolveOptions& opts) {
  opts.validate();
  p.check_well_formed();
  SolveOutcome out = backend.run(p, opts);
  if (out.status == SolveStatus::Feasible) {
    const WitnessCheck chk = out.witness ? check_witness(p, *out.witness, opts.witness_check_tol) : WitnessCheck{};
    if (!out.witness || !chk.passed) {
      out.status = SolveStatus::Inconclusive;
      out.reason = "backend witness failed verification";
      out.witness.reset();
    }
  }
  return out;
}

SolveOutcome solve(const LmiProblem& p, const SolveOptions& opts) {
  static const BarrierBackend backend;
  return solve(backend, p, opts);
}

}  // namespace dwell
