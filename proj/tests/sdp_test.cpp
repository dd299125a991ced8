#include "dwell/sdp.hpp"

#include <sstream>

#include <gtest/gtest.h>

#include "dwell/errors.hpp"
#include "dwell/sdp_kernels.hpp"
#include "test_support.hpp"

namespace dwell {
namespace {

constexpr double kDelta = 1e-7;

// x I_2 - 2 I_2 <= -delta I and x <= 3.
LmiProblem scalar_problem() {
  LmiProblem p;
  p.strict_margin = kDelta;
  const int x = p.vars.add_sym("x", 1);
  // Coefficient I_2 as a sum of two rank-one terms.
  LmiBuilder b(p.vars, 2);
  Mat e0 = Mat::Zero(2, 1), e1 = Mat::Zero(2, 1);
  e0(0) = 1.0;
  e1(1) = 1.0;
  b.sym(0, 0, x, e0, e0.transpose()).sym(0, 0, x, e1, e1.transpose()).constant(0, 0, -2.0 * Mat::Identity(2, 2));
  p.constraints.push_back(b.finish("x I - 2 I < 0", true));
  LmiBuilder c(p.vars, 1);
  c.sym(0, 0, x, Mat::Ones(1, 1), Mat::Ones(1, 1)).constant(0, 0, -3.0 * Mat::Ones(1, 1));
  p.constraints.push_back(c.finish("x <= 3", false));
  return p;
}

LmiProblem constant_pd_problem() {
  LmiProblem p;
  p.strict_margin = kDelta;
  const int x = p.vars.add_sym("x", 1);
  LmiBuilder b(p.vars, 2);
  b.sym(0, 0, x, Mat::Zero(2, 1), Mat::Zero(1, 2)).constant(0, 0, Mat::Identity(2, 2));
  p.constraints.push_back(b.finish("I + 0 x < 0", true));
  return p;
}

LmiProblem scaled(LmiProblem p, double s) {
  for (AffineLmi& c : p.constraints) {
    c.f0 *= s;
    for (auto& [k, f] : c.coeffs) f *= s;
  }
  return p;
}

TEST(SolveTest, ScalarLmiHasWitnessBelowTwo) {
  const SolveOutcome o = solve(scalar_problem());
  ASSERT_EQ(o.status, SolveStatus::Feasible) << o.reason;
  ASSERT_TRUE(o.witness);
  EXPECT_LT((*o.witness)(0), 2.0);
  EXPECT_TRUE(check_witness(scalar_problem(), *o.witness, 1e-9).passed);
  EXPECT_LE(o.achieved_margin, -kDelta / 2);
}

TEST(SolveTest, ConstantPositiveBlockIsInfeasible) {
  const SolveOutcome o = solve(constant_pd_problem());
  EXPECT_EQ(o.status, SolveStatus::Infeasible) << o.reason;
  EXPECT_FALSE(o.witness);
  EXPECT_EQ(o.worst_label, "I + 0 x < 0");
}

TEST(SolveTest, FirstExampleLiftedBoundary) {
  const SwitchedSystem sys = testing::load_example("ex1");
  EXPECT_EQ(solve(build_lifted(sys, DwellSpec{6}, LiftedForm::PrimalR)).status, SolveStatus::Feasible);
  EXPECT_EQ(solve(build_lifted(sys, DwellSpec{5}, LiftedForm::PrimalR)).status, SolveStatus::Infeasible);
}

TEST(SolveTest, BudgetExhaustionIsNeverInfeasible) {
  const SwitchedSystem sys = testing::load_example("ex3");
  SolveOptions opts;
  opts.max_newton_iters = 3;
  const SolveOutcome o = solve(build_lifted(sys, DwellSpec{15}, LiftedForm::PrimalR), opts);
  EXPECT_EQ(o.status, SolveStatus::Inconclusive);
  EXPECT_EQ(o.iterations, 3);
}

TEST(SolveTest, DeterministicAndLogged) {
  const LmiProblem p = build_lifted(testing::load_example("ex2"), DwellSpec{4}, LiftedForm::DualS);
  std::ostringstream log;
  SolveOptions opts;
  opts.log = &log;
  const SolveOutcome a = solve(p, opts);
  const SolveOutcome b = solve(p);
  ASSERT_EQ(a.status, SolveStatus::Feasible);
  EXPECT_EQ(a.status, b.status);
  EXPECT_EQ(*a.witness, *b.witness);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_NE(log.str().find("iter"), std::string::npos);
}

TEST(SolveTest, ParallelAssemblyGivesTheSameAnswer) {
  const LmiProblem p = build_lifted(testing::load_example("ex3"), DwellSpec{16}, LiftedForm::PrimalR);
  SolveOptions par;
  par.parallel_assembly = true;
  const SolveOutcome a = solve(p);
  const SolveOutcome b = solve(p, par);
  ASSERT_EQ(a.status, SolveStatus::Feasible);
  EXPECT_EQ(a.status, b.status);
  EXPECT_EQ(*a.witness, *b.witness);
}

TEST(SolveTest, ScaleRobustness) {
  std::mt19937_64 rng(99);
  const SwitchedSystem ex1 = testing::load_example("ex1");
  std::vector<LmiProblem> suite{scalar_problem(), constant_pd_problem(),
                                build_lifted(ex1, DwellSpec{5}, LiftedForm::PrimalR),
                                build_lifted(ex1, DwellSpec{6}, LiftedForm::PrimalR)};
  for (int q = 0; q < 6; ++q) suite.push_back(testing::random_lmi_problem(rng, q % 2 == 0));
  for (const LmiProblem& p : suite) {
    EXPECT_EQ(solve(p).status, solve(scaled(p, 10.0)).status);
  }
}

TEST(SolveTest, RandomProblemsAreClassifiedSoundly) {
  std::mt19937_64 rng(4242);
  int decisive = 0;
  const int total = 60;
  for (int q = 0; q < total; ++q) {
    const bool want = q % 2 == 0;
    const LmiProblem p = testing::random_lmi_problem(rng, want);
    const SolveOutcome o = solve(p);
    if (!want) EXPECT_NE(o.status, SolveStatus::Feasible) << "case " << q;
    if (o.status == SolveStatus::Feasible) {
      EXPECT_TRUE(check_witness(p, *o.witness, 1e-9).passed);
    }
    if (o.status == (want ? SolveStatus::Feasible : SolveStatus::Infeasible)) ++decisive;
  }
  EXPECT_GE(decisive, total * 95 / 100);
}

TEST(CheckWitnessTest, ReportsTheWorstConstraint) {
  const LmiProblem p = scalar_problem();
  const WitnessCheck bad = check_witness(p, Vec::Constant(1, 2.5), 1e-9);
  EXPECT_FALSE(bad.passed);
  EXPECT_EQ(bad.worst_label, "x I - 2 I < 0");
  EXPECT_NEAR(bad.worst_excess, 0.5 + kDelta / 2, 1e-12);
  EXPECT_TRUE(check_witness(p, Vec::Constant(1, 1.0), 1e-9).passed);
  // Within delta/2 of the boundary a strict constraint fails.
  EXPECT_FALSE(check_witness(p, Vec::Constant(1, 2.0 - kDelta / 4), 1e-9).passed);
}

TEST(SolveOptionsTest, Validation) {
  SolveOptions o;
  EXPECT_NO_THROW(o.validate());
  o.barrier_mu_factor = 1.0;
  EXPECT_THROW(o.validate(), InvalidInput);
  o = {};
  o.time_limit_ms = 0;
  EXPECT_THROW(o.validate(), InvalidInput);
  o = {};
  o.initial_point = Vec::Zero(5);
  EXPECT_THROW(solve(scalar_problem(), o), InvalidInput);
}

class RejectingBackend final : public SdpBackend {
 public:
  std::string name() const override { return "rejecting"; }
  SolveOutcome run(const LmiProblem& p, const SolveOptions&) const override {
    SolveOutcome o;
    o.status = SolveStatus::Feasible;
    o.witness = Vec::Constant(p.vars.total_dim(), 2.5);
    return o;
  }
};

TEST(SolveTest, BackendWitnessesAreReverified) {
  const SolveOutcome o = solve(RejectingBackend{}, scalar_problem());
  EXPECT_EQ(o.status, SolveStatus::Inconclusive);
  EXPECT_EQ(std::string(to_string(o.status)), "Inconclusive");
}

TEST(KernelTest, SerialAndParallelAssemblyAreBitIdentical) {
  const LmiProblem p = build_lifted(testing::load_example("ex3"), DwellSpec{8}, LiftedForm::DualS);
  const kernels::CompiledProblem cp = kernels::compile(p, 1e6);
  Vec y(p.vars.total_dim() + 1);
  y.head(p.vars.total_dim()) = p.vars.initial_point();
  y(y.size() - 1) = kernels::max_shifted_eig(cp, y.head(p.vars.total_dim())) + 1.0;
  const auto a = kernels::assemble_newton_serial(cp, y, 3.0);
  const auto b = kernels::assemble_newton_parallel(cp, y, 3.0);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->hessian, b->hessian);
  EXPECT_EQ(a->gradient, b->gradient);
  EXPECT_EQ(a->value, b->value);
  EXPECT_NEAR(*kernels::barrier_value(cp, y, 3.0), a->value, 1e-9 * (1.0 + std::abs(a->value)));
}

TEST(KernelTest, GradientMatchesFiniteDifferences) {
  const LmiProblem p = build_lifted(testing::load_example("ex1"), DwellSpec{2}, LiftedForm::PrimalR);
  const kernels::CompiledProblem cp = kernels::compile(p, 100.0);
  const int m = p.vars.total_dim();
  Vec y(m + 1);
  y.head(m) = p.vars.initial_point();
  y(m) = kernels::max_shifted_eig(cp, y.head(m)) + 2.0;
  const double s = 1.7;
  const auto sys = kernels::assemble_newton_serial(cp, y, s);
  ASSERT_TRUE(sys);
  const double h = 1e-6;
  for (int k = 0; k <= m; ++k) {
    Vec yp = y, ym = y;
    yp(k) += h;
    ym(k) -= h;
    const double fd = (*kernels::barrier_value(cp, yp, s) - *kernels::barrier_value(cp, ym, s)) / (2 * h);
    EXPECT_NEAR(sys->gradient(k), fd, 1e-5 * (1.0 + std::abs(fd))) << k;
  }
  Vec yp = y, ym = y;
  yp(0) += h;
  ym(0) -= h;
  const Vec col = (kernels::assemble_newton_serial(cp, yp, s)->gradient - kernels::assemble_newton_serial(cp, ym, s)->gradient) / (2 * h);
  EXPECT_LE((sys->hessian.col(0) - col).cwiseAbs().maxCoeff(), 1e-4 * (1.0 + col.cwiseAbs().maxCoeff()));
  Vec outside = y;
  outside(m) = -1e3;
  EXPECT_FALSE(kernels::barrier_value(cp, outside, s));
  EXPECT_FALSE(kernels::assemble_newton_serial(cp, outside, s));
}

}  // namespace
}  // namespace dwell
