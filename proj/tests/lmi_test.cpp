#include "dwell/lmi.hpp"

#include <algorithm>

#include <gtest/gtest.h>

#include "dwell/errors.hpp"
#include "dwell/sdp.hpp"
#include "test_support.hpp"

namespace dwell {
namespace {

using testing::load_example;

SwitchedSystem random_system(std::mt19937_64& rng, int N, int n) {
  SwitchedSystem sys;
  sys.n = n;
  for (int i = 0; i < N; ++i) {
    Mode m;
    m.vertices.push_back(testing::random_matrix(rng, n, n, 0.3));
    sys.modes.push_back(std::move(m));
  }
  return sys;
}

const AffineLmi& find(const LmiProblem& p, const std::string& prefix) {
  auto it = std::find_if(p.constraints.begin(), p.constraints.end(),
                         [&](const AffineLmi& c) { return c.label.rfind(prefix, 0) == 0; });
  if (it == p.constraints.end()) throw std::runtime_error("no constraint " + prefix);
  return *it;
}

bool feasible(const LmiProblem& p) { return solve(p).status == SolveStatus::Feasible; }
bool infeasible(const LmiProblem& p) { return solve(p).status == SolveStatus::Infeasible; }

TEST(VarSpaceTest, SymmetricBlocksRoundTrip) {
  VarSpace v;
  const int a = v.add_sym("P", 3);
  const int b = v.add_rect("U", 2, 3);
  const int c = v.add_scalar("g");
  EXPECT_EQ(v.total_dim(), 6 + 6 + 1);
  EXPECT_EQ(v.sym_index(a, 0, 2), v.sym_index(a, 2, 0));
  EXPECT_THROW(v.add_sym("P", 2), InvalidInput);
  std::mt19937_64 rng(1);
  const SymMat s = testing::random_sym(rng, 3);
  const Mat u = testing::random_matrix(rng, 2, 3);
  Vec x = Vec::Zero(v.total_dim());
  v.set_sym(a, s, x);
  v.set_rect(b, u, x);
  EXPECT_EQ(v.sym_value(a, x).matrix(), s.matrix());
  EXPECT_EQ(v.rect_value(b, x), u);
  EXPECT_EQ(x(v.sym_index(a, 1, 2)), s(1, 2));
  EXPECT_EQ(v.scalars()[0].offset, v.total_dim() - 1);
  (void)c;
  const Vec x0 = v.initial_point();
  EXPECT_EQ(v.sym_value(a, x0).matrix(), Mat::Identity(3, 3));
  EXPECT_EQ(v.rect_value(b, x0), Mat::Zero(2, 3));
}

TEST(LmiBuilderTest, OffDiagonalTermsAreMirrored) {
  VarSpace v;
  const int p = v.add_sym("P", 2);
  Mat l(2, 2), r(2, 2);
  l << 1, 2, 0, 1;
  r << 0, 1, 1, 0;
  LmiBuilder b(v, 4);
  b.sym(0, 2, p, l, r).constant(0, 0, -Mat::Identity(2, 2)).constant(2, 2, -Mat::Identity(2, 2));
  const AffineLmi lmi = b.finish("test", true);
  std::mt19937_64 rng(3);
  const SymMat pv = testing::random_sym(rng, 2);
  Vec x = Vec::Zero(v.total_dim());
  v.set_sym(p, pv, x);
  Mat want = -Mat::Identity(4, 4);
  want.block(0, 2, 2, 2) = l * pv.matrix() * r;
  want.block(2, 0, 2, 2) = (l * pv.matrix() * r).transpose();
  EXPECT_LE(max_abs(lmi.evaluate(x).matrix() - want), 1e-14);
  EXPECT_TRUE(lmi.strict);
}

TEST(BuildLiftedTest, ConstraintsMatchDirectFormulas) {
  const SwitchedSystem sys = load_example("ex2");
  const int tau = 3;
  std::mt19937_64 rng(7);
  for (LiftedForm form : {LiftedForm::PrimalR, LiftedForm::DualS}) {
    const LmiProblem p = build_lifted(sys, DwellSpec{tau}, form);
    EXPECT_NO_THROW(p.check_well_formed());
    Vec x = Vec::Zero(p.vars.total_dim());
    std::vector<std::vector<SymMat>> X(2);
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k <= tau; ++k) {
        X[i].push_back(testing::random_sym(rng, sys.n));
        p.vars.set_sym(p.layout.sym[i][k], X[i][k], x);
      }
    const Mat& a = sys.modes[1].A();
    const Mat id = Mat::Identity(sys.n, sys.n);
    if (form == LiftedForm::PrimalR) {
      const Mat want = a.transpose() * X[1][2].matrix() * a - X[1][1].matrix();
      EXPECT_LE(max_abs(find(p, "lifted-R[i=2,k=1]").evaluate(x).matrix() - want), 1e-12);
      const Mat last = a.transpose() * X[1][tau].matrix() * a - X[1][tau].matrix();
      EXPECT_LE(max_abs(find(p, "lifted-R[i=2]").evaluate(x).matrix() - last), 1e-12);
      const Mat cpl = X[0][0].matrix() - X[1][tau].matrix() + p.epsilon * id;
      EXPECT_LE(max_abs(find(p, "coupling-R[i=1,j=2]").evaluate(x).matrix() - cpl), 1e-12);
    } else {
      const Mat want = a * X[1][1].matrix() * a.transpose() - X[1][2].matrix();
      EXPECT_LE(max_abs(find(p, "lifted-S[i=2,k=1]").evaluate(x).matrix() - want), 1e-12);
      const Mat cpl = X[1][tau].matrix() - X[0][0].matrix() + p.epsilon * id;
      EXPECT_LE(max_abs(find(p, "coupling-S[i=1,j=2]").evaluate(x).matrix() - cpl), 1e-12);
    }
  }
}

TEST(BuildLiftedTest, PolytopicModesRepeatPerVertex) {
  const SwitchedSystem sys = load_example("robust");
  const LmiProblem p = build_lifted(sys, DwellSpec{2}, LiftedForm::PrimalR);
  const auto strict = std::count_if(p.constraints.begin(), p.constraints.end(),
                                    [](const AffineLmi& c) { return c.label.rfind("lifted-R", 0) == 0 && c.strict; });
  EXPECT_EQ(strict, 4);  // 2 modes x 2 vertices
  EXPECT_TRUE(infeasible(p));
  EXPECT_TRUE(feasible(build_lifted(sys, DwellSpec{3}, LiftedForm::PrimalR)));
  EXPECT_THROW(build_geromel(sys, DwellSpec{3}, GeromelVariant::Backward), InvalidInput);
}

TEST(ProblemSizeTest, FlatAndLiftedCountsOnGrid) {
  std::mt19937_64 rng(13);
  int points = 0;
  for (int N : {2, 3})
    for (int n : {2, 5}) {
      const SwitchedSystem sys = random_system(rng, N, n);
      const ProblemSize flat = problem_size(build_geromel(sys, DwellSpec{2}, GeromelVariant::Backward));
      EXPECT_EQ(flat.num_scalar_vars, N * n * (n + 1) / 2);
      EXPECT_EQ(flat.total_lmi_dim, N * (N + 1) * n);
      for (int tau : {1, 4, 16}) {
        const ProblemSize s = problem_size(build_lifted(sys, DwellSpec{tau}, LiftedForm::PrimalR));
        EXPECT_EQ(s.num_scalar_vars, N * (tau + 1) * n * (n + 1) / 2 + 1) << N << " " << n << " " << tau;
        EXPECT_EQ(s.total_lmi_dim, (N * N + N + N * tau) * n + 1) << N << " " << n << " " << tau;
        EXPECT_EQ(problem_size(build_lifted(sys, DwellSpec{tau}, LiftedForm::DualS)), s);
        ++points;
      }
    }
  EXPECT_EQ(points, 12);
}

TEST(ProblemSizeTest, PublishedRows) {
  const SwitchedSystem sys = load_example("ex1");
  EXPECT_EQ(problem_size(build_geromel(sys, DwellSpec{6}, GeromelVariant::Forward)), (ProblemSize{6, 12}));
  EXPECT_EQ(problem_size(build_lifted(sys, DwellSpec{6}, LiftedForm::PrimalR)), (ProblemSize{43, 37}));
  EXPECT_THROW(build_lifted(sys, DwellSpec{0}, LiftedForm::PrimalR), InvalidInput);
}

TEST(BuildArbitraryTest, NilpotentAndUnstabilizable) {
  SwitchedSystem zero;
  zero.n = 2;
  zero.modes.resize(2);
  for (Mode& m : zero.modes) m.vertices.push_back(Mat::Zero(2, 2));
  const LmiProblem p = build_arbitrary(zero);
  EXPECT_EQ(std::count_if(p.constraints.begin(), p.constraints.end(),
                          [](const AffineLmi& c) { return c.label.rfind("arbitrary", 0) == 0; }),
            4);
  EXPECT_TRUE(feasible(p));
  EXPECT_TRUE(infeasible(build_arbitrary(load_example("ex6"))));
}

TEST(BuildGeromelTest, FirstExampleBoundaryAndMonotonicity) {
  const SwitchedSystem sys = load_example("ex1");
  EXPECT_TRUE(infeasible(build_geromel(sys, DwellSpec{5}, GeromelVariant::Backward)));
  for (int tau = 6; tau <= 10; ++tau) {
    EXPECT_TRUE(feasible(build_geromel(sys, DwellSpec{tau}, GeromelVariant::Backward))) << tau;
  }
  EXPECT_TRUE(feasible(build_geromel(sys, DwellSpec{6}, GeromelVariant::Forward)));
}

TEST(BuildGeromelTest, TauOneMatchesArbitrarySwitching) {
  const SwitchedSystem sys = load_example("ex2");
  const bool a = feasible(build_arbitrary(sys));
  EXPECT_EQ(feasible(build_geromel(sys, DwellSpec{1}, GeromelVariant::Forward)), a);
  EXPECT_EQ(feasible(build_geromel(sys, DwellSpec{1}, GeromelVariant::Backward)), a);
}

TEST(BuildLiftedTest, StatementsAgreeAroundTheBoundary) {
  for (const auto& [stem, star] : std::vector<std::pair<std::string, int>>{{"ex1", 6}, {"ex2", 4}}) {
    const SwitchedSystem sys = load_example(stem);
    for (int tau : {star - 1, star}) {
      const bool want = tau == star;
      EXPECT_EQ(feasible(build_lifted(sys, DwellSpec{tau}, LiftedForm::PrimalR)), want) << stem << " " << tau;
      EXPECT_EQ(feasible(build_lifted(sys, DwellSpec{tau}, LiftedForm::DualS)), want) << stem << " " << tau;
      EXPECT_EQ(feasible(build_geromel(sys, DwellSpec{tau}, GeromelVariant::Backward)), want) << stem << " " << tau;
    }
  }
}

TEST(BuildSynthesisTest, DegenerateAndMissingInput) {
  SwitchedSystem sys;
  sys.n = 2;
  sys.modes.resize(2);
  for (Mode& m : sys.modes) {
    m.vertices.push_back(0.5 * Mat::Identity(2, 2));
    m.B = Mat::Zero(2, 1);
  }
  EXPECT_TRUE(feasible(build_synthesis(sys, DwellSpec{1})));
  sys.modes[1].B.reset();
  EXPECT_THROW(build_synthesis(sys, DwellSpec{1}), MissingMatrix);
  EXPECT_THROW(build_l2(load_example("ex1"), DwellSpec{2}, 1.0), MissingMatrix);
  EXPECT_THROW(build_l2(load_example("ex7"), DwellSpec{2}, 0.0), InvalidInput);
}

TEST(BuildL2Test, ZeroChannelsCollapseToStability) {
  for (const auto& [stem, tau] : std::vector<std::pair<std::string, int>>{{"ex1", 5}, {"ex1", 6}, {"ex2", 4}}) {
    SwitchedSystem sys = load_example(stem);
    for (Mode& m : sys.modes) {
      m.E = Mat::Zero(sys.n, 1);
      m.C = Mat::Zero(1, sys.n);
      m.F = Mat::Zero(1, 1);
    }
    const bool want = feasible(build_lifted(sys, DwellSpec{tau}, LiftedForm::PrimalR));
    EXPECT_EQ(feasible(build_l2(sys, DwellSpec{tau}, 1.0, LiftedForm::PrimalR)), want) << stem << " " << tau;
    EXPECT_EQ(feasible(build_l2(sys, DwellSpec{tau}, 1.0, LiftedForm::DualS)), want) << stem << " " << tau;
  }
}

TEST(BuildL2SynthesisTest, ZeroInputReducesToDualGain) {
  SwitchedSystem sys = load_example("ex7");
  for (Mode& m : sys.modes) m.B = Mat::Zero(sys.n, 1);
  for (double gamma : {2.0, 50.0}) {
    EXPECT_EQ(feasible(build_l2_synthesis(sys, DwellSpec{6}, gamma)),
              feasible(build_l2(sys, DwellSpec{6}, gamma, LiftedForm::DualS)))
        << gamma;
  }
  EXPECT_FALSE(feasible(build_l2_synthesis(sys, DwellSpec{4}, 1000.0)));
}

TEST(BuildL2Test, GainExampleBoundary) {
  const SwitchedSystem sys = load_example("ex7");
  for (double gamma : {1.0, 100.0, 1e5}) EXPECT_FALSE(feasible(build_l2(sys, DwellSpec{4}, gamma))) << gamma;
  EXPECT_TRUE(feasible(build_l2(sys, DwellSpec{5}, 1000.0)));
}

TEST(DumpSdpaTest, HeaderAndCounts) {
  const LmiProblem p = build_lifted(load_example("ex1"), DwellSpec{2}, LiftedForm::PrimalR);
  const std::string s = dump_sdpa(p);
  EXPECT_NE(s.find(std::to_string(p.vars.total_dim()) + " = mDIM"), std::string::npos);
  EXPECT_NE(s.find(std::to_string(p.constraints.size()) + " = nBLOCK"), std::string::npos);
  EXPECT_NE(s.find("lifted-R[i=1,k=0]"), std::string::npos);
}

}  // namespace
}  // namespace dwell
