#include "dwell/verify.hpp"

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "dwell/errors.hpp"
#include "test_support.hpp"

namespace dwell {
namespace {

using testing::load_example;

LiftedCertificate certificate_for(const std::string& stem, int tau_max, LiftedForm form = LiftedForm::PrimalR) {
  const DwellResult r = min_dwell(load_example(stem), tau_max, form);
  if (!r.certificate) throw std::runtime_error("no certificate for " + stem);
  return *r.certificate;
}

TEST(CheckFlatTest, CertificateMarginsAndUnstablePairs) {
  const SwitchedSystem sys = load_example("ex1");
  const LiftedCertificate c = certificate_for("ex1", 8);
  const MarginReport r = check_flat(sys, c.tau, flat_lyapunov(c), GeromelVariant::Backward);
  EXPECT_TRUE(r.passed);
  EXPECT_LE(r.worst().value, -0.5 * strict_margin_for(sys));
  EXPECT_EQ(r.margins.size(), 4u);

  SwitchedSystem unstable = sys;
  unstable.modes[0].vertices[0] *= 3.0;
  const std::vector<SymMat> eye(2, SymMat::identity(2));
  EXPECT_GT(check_flat(unstable, 6, eye, GeromelVariant::Backward).worst().value, 0.0);
}

TEST(CheckFlatTest, RandomLyapunovMatricesFailBelowTheBound) {
  const SwitchedSystem sys = load_example("ex2");
  std::mt19937_64 rng(8);
  for (int q = 0; q < 20; ++q) {
    const std::vector<SymMat> P{testing::random_spd(rng, 4, 0.1, 10.0), testing::random_spd(rng, 4, 0.1, 10.0)};
    EXPECT_FALSE(check_flat(sys, 3, P, GeromelVariant::Backward).passed);
  }
}

TEST(CheckFlatTest, DirectEvaluationOracle) {
  const SwitchedSystem sys = load_example("ex1");
  std::mt19937_64 rng(2);
  const std::vector<SymMat> P{testing::random_spd(rng, 2), testing::random_spd(rng, 2)};
  const MarginReport r = check_flat(sys, 3, P, GeromelVariant::Forward, 1e9);
  const Mat a3 = testing::naive_power(sys.modes[0].A(), 3);
  const double want = testing::eigen_max_eig(a3.transpose() * P[1].matrix() * a3 - P[0].matrix());
  bool found = false;
  for (const Margin& m : r.margins) found = found || std::abs(m.value - want) < 1e-10;
  EXPECT_TRUE(found);
  EXPECT_TRUE(r.passed);
}

TEST(CheckLiftedTest, PassesAndDetectsTampering) {
  const SwitchedSystem sys = load_example("ex1");
  for (LiftedForm f : {LiftedForm::PrimalR, LiftedForm::DualS}) {
    const LiftedCertificate c = certificate_for("ex1", 8, f);
    EXPECT_TRUE(check_lifted(sys, c).passed()) << form_name(f);
    LiftedCertificate neg = c;
    neg.sequences[0][0] = neg.sequences[0][0] * -1.0;
    const LiftedCheck bad = check_lifted(sys, neg);
    EXPECT_FALSE(bad.positivity.passed);
    EXPECT_FALSE(bad.passed());
    LiftedCertificate cut = c;
    cut.sequences[1].pop_back();
    EXPECT_THROW(check_lifted(sys, cut), DimensionMismatch);
    LiftedCertificate eps = c;
    eps.epsilon = 0.5;
    EXPECT_THROW(check_lifted(sys, eps), InvalidInput);
  }
}

TEST(CheckLiftedTest, TelescopingMatchesDirectPowers) {
  const SwitchedSystem sys = load_example("ex2");
  const LiftedCertificate c = certificate_for("ex2", 6);
  const LiftedCheck chk = check_lifted(sys, c);
  ASSERT_TRUE(chk.passed());
  for (int i = 0; i < 2; ++i) {
    const Mat at = testing::naive_power(sys.modes[i].A(), c.tau);
    const Mat d = at.transpose() * c.sequences[i][c.tau].matrix() * at - c.sequences[i][0].matrix();
    EXPECT_LE(testing::eigen_max_eig(d), 1e-8 * (1.0 + max_abs(c.sequences[i][0].matrix())));
  }
}

TEST(PatternTest, GrammarAndErrors) {
  const auto p = parse_pattern("1^5 2^5");
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].mode, 0);
  EXPECT_EQ(p[0].power, 5);
  const auto w = parse_pattern("  1@0.9,0.1 2^2@1,0 ");
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].power, 1);
  EXPECT_EQ(w[1].weights, (std::vector<double>{1.0, 0.0}));
  for (const char* bad : {"", "0^2", "1^", "a", "1@0.5,0.6", "1@-0.1,1.1", "1^2^3"}) {
    EXPECT_THROW(parse_pattern(bad), ParseError) << bad;
  }
  const SwitchedSystem poly = load_example("robust");
  EXPECT_THROW(instability_witness(poly, parse_pattern("1^2 2")), InvalidInput);
  EXPECT_THROW(instability_witness(poly, parse_pattern("3")), InvalidInput);
  EXPECT_THROW(instability_witness(poly, parse_pattern("1@1,0,0")), InvalidInput);
}

TEST(InstabilityWitnessTest, PublishedProducts) {
  struct Case {
    const char* stem;
    const char* pattern;
  };
  for (const Case& c : {Case{"ex1", "1^5 2^5"}, Case{"ex2", "1^3 2^3"}, Case{"ex3", "1^15 2^15"},
                        Case{"ex7", "2^4 3^4"}, Case{"robust", "1@0.9,0.1 1@0,1 2^2@1,0"}}) {
    const InstabilityWitness w = instability_witness(load_example(c.stem), parse_pattern(c.pattern));
    EXPECT_TRUE(w.unstable()) << c.stem << " " << c.pattern << " rho=" << w.rho;
    EXPECT_NEAR(w.rho, testing::eigen_spectral_radius(w.product), 1e-8);
  }
  const SwitchedSystem ex1 = load_example("ex1");
  const InstabilityWitness w = instability_witness(ex1, parse_pattern("1^5 2^5"));
  const Mat want = testing::naive_power(ex1.modes[0].A(), 5) * testing::naive_power(ex1.modes[1].A(), 5);
  EXPECT_LE(max_abs(w.product - want), 1e-12);
  EXPECT_FALSE(instability_witness(ex1, parse_pattern("1")).unstable());
}

TEST(RandomProductTest, FindsTheRobustWitness) {
  const SwitchedSystem poly = load_example("robust");
  const InstabilityWitness w = random_product(poly, 2, 2000, 1);
  EXPECT_GT(w.rho, 1.0);
  EXPECT_THROW(random_product(poly, 2, 0, 1), InvalidInput);
  const SwitchedSystem ex1 = load_example("ex1");
  const InstabilityWitness fixed = random_product(ex1, 5, 3, 9);
  EXPECT_NEAR(fixed.rho, instability_witness(ex1, parse_pattern("1^5 2^5")).rho, 1e-9);
}

TEST(SimulateTest, ZeroStateStaysZero) {
  const SwitchedSystem sys = load_example("ex7");
  const SwitchingSignal sig = random_signal(DwellSpec{5}, 40, 1, 3);
  SimulationInputs in;
  in.w.assign(40, Vec::Zero(1));
  const Trajectory tr = simulate(sys, sig, Vec::Zero(3), in);
  ASSERT_EQ(tr.states.size(), 41u);
  for (const Vec& x : tr.states) EXPECT_EQ(x.norm(), 0.0);
  for (const Vec& z : tr.outputs) EXPECT_EQ(z.norm(), 0.0);
}

TEST(SimulateTest, RecursionAndCsv) {
  const SwitchedSystem sys = load_example("ex1");
  const SwitchingSignal sig = periodic_signal({0, 1}, 3, 7);
  const Trajectory tr = simulate(sys, sig, Vec::Ones(2));
  Vec x = Vec::Ones(2);
  for (int t = 0; t < 7; ++t) {
    EXPECT_LE((tr.states[t] - x).norm(), 1e-14);
    x = sys.modes[sig.mode_at(t)].A() * x;
  }
  const std::string csv = tr.to_csv();
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,mode,x_1,x_2");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 8);
  EXPECT_EQ(simulate(sys, periodic_signal({0, 1}, 3, 0), Vec::Ones(2)).to_csv(), "t,mode,x_1,x_2\n");
  EXPECT_THROW(simulate(sys, sig, Vec::Ones(3)), DimensionMismatch);
  EXPECT_THROW(simulate(load_example("robust"), sig, Vec::Ones(2)), InvalidInput);
}

TEST(SimulateTest, LyapunovTracesOnFirstExample) {
  const SwitchedSystem sys = load_example("ex1");
  const LiftedCertificate c = certificate_for("ex1", 8);
  const std::vector<SymMat> P = flat_lyapunov(c);
  const double delta = strict_margin_for(sys);
  SimulationInputs in;
  in.P = P;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SwitchingSignal sig = random_signal(DwellSpec{c.tau}, 120, seed, 2);
    const Trajectory tr = simulate(sys, sig, Vec::Ones(2), in);
    ASSERT_EQ(tr.lyapunov_f.size(), 121u);
    for (int t = 0; t < 120; ++t) {
      const double vf = tr.states[t].dot(P[sig.mode_at(t)].matrix() * tr.states[t]);
      EXPECT_NEAR(tr.lyapunov_f[t], vf, 1e-12 * (1.0 + vf));
      // Within a segment both traces decrease at every step.
      if (sig.mode_at(t + 1) == sig.mode_at(t)) {
        EXPECT_LE(tr.lyapunov_f[t + 1], tr.lyapunov_f[t]);
        if (sig.steps_since_switch(t) > 0 || t == 0) EXPECT_LE(tr.lyapunov_b[t + 1], tr.lyapunov_b[t]);
      }
    }
    // Sampled at the switching instants, V_b drops by at least (delta/2)|x|^2.
    for (std::size_t q = 1; q + 1 < sig.instants.size(); ++q) {
      const int a = sig.instants[q], b = sig.instants[q + 1];
      const double drop = tr.lyapunov_b[a] - tr.lyapunov_b[b];
      EXPECT_GE(drop + 1e-9 * tr.lyapunov_b[a], 0.5 * delta * tr.states[a].squaredNorm()) << "seed " << seed << " q " << q;
    }
  }
}

TEST(ToeplitzTest, SmallCasesAndSimulationConsistency) {
  const SwitchedSystem sys = load_example("ex7");
  const Mode& m = sys.modes[2];
  const ToeplitzMaps one = toeplitz_maps(m, 1);
  EXPECT_EQ(one.C, *m.C);
  EXPECT_EQ(one.E, *m.E);
  EXPECT_EQ(one.F, m.F_or_zero());
  const int tau = 4;
  const ToeplitzMaps t = toeplitz_maps(m, tau);
  EXPECT_EQ(t.C.rows(), tau);
  EXPECT_EQ(t.E.cols(), tau);
  EXPECT_EQ(t.F(0, 0), m.F_or_zero()(0, 0));
  EXPECT_EQ(t.F(0, 1), 0.0);
  EXPECT_NEAR(t.F(2, 0), (*m.C * m.A() * *m.E)(0, 0), 1e-15);
  // x(tau) = A^tau x0 + E w and z = C x0 + F w over one segment.
  std::mt19937_64 rng(6);
  const Vec x0 = testing::random_matrix(rng, 3, 1);
  const Vec w = testing::random_matrix(rng, tau, 1);
  SwitchingSignal sig;
  sig.instants = {0};
  sig.modes = {2};
  sig.horizon = tau;
  SimulationInputs in;
  for (int k = 0; k < tau; ++k) in.w.push_back(w.segment(k, 1));
  const Trajectory tr = simulate(sys, sig, x0, in);
  EXPECT_LE((tr.states[tau] - (testing::naive_power(m.A(), tau) * x0 + t.E * w)).norm(), 1e-12);
  Vec z(tau);
  for (int k = 0; k < tau; ++k) z(k) = tr.outputs[k](0);
  EXPECT_LE((z - (t.C * x0 + t.F * w)).norm(), 1e-12);
}

TEST(L2StatementATest, CertificateAndDegenerateChannels) {
  const SwitchedSystem sys = load_example("ex7");
  const GainResult g = l2_gain(sys, 5);
  const L2StatementA a = check_l2_statement_a(sys, 5, flat_lyapunov(g.certificate), g.gamma_upper);
  EXPECT_TRUE(a.passed()) << a.per_mode.worst().label << " " << a.per_mode.worst().value << " / "
                          << a.per_pair.worst().label << " " << a.per_pair.worst().value;
  EXPECT_FALSE(check_l2_statement_a(sys, 5, flat_lyapunov(g.certificate), 0.5 * g.gamma_upper).passed());

  SwitchedSystem quiet = load_example("ex1");
  for (Mode& m : quiet.modes) {
    m.E = Mat::Zero(2, 1);
    m.C = Mat::Zero(1, 2);
  }
  const LiftedCertificate c = certificate_for("ex1", 8);
  const std::vector<SymMat> P = flat_lyapunov(c);
  const L2StatementA q = check_l2_statement_a(quiet, c.tau, P, 1.0);
  EXPECT_TRUE(q.passed());
  EXPECT_EQ(q.per_pair.passed, check_flat(quiet, c.tau, P, GeromelVariant::Backward, 0.0).passed);
}

TEST(EmpiricalGainTest, BelowCertifiedBound) {
  const SwitchedSystem sys = load_example("ex7");
  for (int tau : {5, 8}) {
    const double gamma = l2_gain(sys, tau).gamma_upper;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const SwitchingSignal sig = random_signal(DwellSpec{tau}, 200, seed, 3);
      const std::vector<Vec> w = random_disturbance(sys, sig, seed);
      double energy = 0.0;
      for (const Vec& v : w) energy += v.squaredNorm();
      EXPECT_NEAR(energy, 1.0, 1e-12);
      EXPECT_LE(empirical_gain(sys, sig, w), gamma * (1 + 1e-6)) << "tau " << tau << " seed " << seed;
    }
  }
}

}  // namespace
}  // namespace dwell
