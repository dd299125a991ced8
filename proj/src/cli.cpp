#include "dwell/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <regex>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dwell/analysis.hpp"
#include "dwell/errors.hpp"
#include "dwell/synthesis.hpp"
#include "dwell/verify.hpp"

namespace dwell {

namespace {

using nlohmann::json;

json margin_json(const MarginReport& r) {
  const Margin& w = r.worst();
  return {{"passed", r.passed}, {"threshold", r.threshold}, {"worst_label", w.label}, {"worst_value", w.value}};
}

json system_digest(const SwitchedSystem& sys) {
  json modes = json::array();
  for (const Mode& m : sys.modes) {
    modes.push_back({{"vertices", m.num_vertices()},
                     {"m", m.input_dim()},
                     {"p", m.disturbance_dim()},
                     {"q", m.output_dim()}});
  }
  return {{"N", sys.num_modes()}, {"n", sys.n}, {"modes", modes}};
}

std::vector<int> parse_sweep(const std::string& s) {
  static const std::regex range(R"(^\s*(\d+)\s*\.\.\s*(\d+)\s*$)");
  std::smatch m;
  if (!std::regex_match(s, m, range)) throw InvalidInput("--sweep expects a..b");
  const int a = std::stoi(m[1].str()), b = std::stoi(m[2].str());
  if (a < 1 || b < a) throw InvalidInput("--sweep expects 1 <= a <= b");
  std::vector<int> taus;
  for (int t = a; t <= b; ++t) taus.push_back(t);
  return taus;
}

std::string stem_of(const std::string& path) { return std::filesystem::path(path).stem().string(); }

struct Common {
  std::string system_file;
  SolveOptions opts;
  std::unique_ptr<std::ofstream> log;
};

void attach_log(Common& c) {
  if (const char* path = std::getenv("DWELL_SOLVER_LOG"); path && *path) {
    c.log = std::make_unique<std::ofstream>(path, std::ios::app);
    if (!*c.log) throw InvalidInput(std::string("DWELL_SOLVER_LOG: cannot open ") + path);
    c.opts.log = c.log.get();
  }
}

json verify_certificate(const SwitchedSystem& sys, const LiftedCertificate& cert, bool& all_passed) {
  json v;
  const LiftedCheck chk = check_lifted(sys, cert);
  v["lifted_lmis"] = margin_json(chk.lmis);
  v["positivity"] = margin_json(chk.positivity);
  v["telescoping"] = margin_json(chk.telescoping);
  all_passed = chk.passed();
  if (sys.is_nominal() && !cert.has_inputs()) {
    const double thr = cert.form == LiftedForm::PrimalR ? -0.5 * strict_margin_for(sys) : 0.0;
    const MarginReport flat = check_flat(sys, cert.tau, flat_lyapunov(cert), GeromelVariant::Backward, thr);
    v["flat"] = margin_json(flat);
    all_passed = all_passed && flat.passed;
    if (cert.gamma && cert.form == LiftedForm::PrimalR) {
      const L2StatementA a = check_l2_statement_a(sys, cert.tau, flat_lyapunov(cert), *cert.gamma);
      v["l2_statement_a_modes"] = margin_json(a.per_mode);
      v["l2_statement_a_pairs"] = margin_json(a.per_pair);
      all_passed = all_passed && a.passed();
    }
  }
  v["passed"] = all_passed;
  return v;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  CLI::App app{"Minimum dwell-time analysis and synthesis for discrete-time switched linear systems", "dwell"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  Common c;
  // analyze
  int tau_max = 30;
  std::string form = "primal_R";
  bool robust = false;
  std::string cert_out;
  auto* analyze = app.add_subcommand("analyze", "Smallest certified minimum dwell-time");
  analyze->add_option("system", c.system_file, "System JSON file")->required();
  analyze->add_option("--tau-max", tau_max, "Largest dwell-time tried")->check(CLI::PositiveNumber);
  analyze->add_option("--form", form, "primal_R or dual_S");
  analyze->add_flag("--robust", robust, "Polytopic modes, vertex-wise conditions");
  analyze->add_option("--cert-out", cert_out, "Write the certificate JSON here");

  // synthesize
  int tau = 1;
  bool l2 = false, minimize = false;
  std::optional<double> gamma;
  std::string gains_out;
  double tol = kDefaultGammaTol;
  auto* synth = app.add_subcommand("synthesize", "State-feedback gains under a minimum dwell-time");
  synth->add_option("system", c.system_file, "System JSON file")->required();
  synth->add_option("--tau", tau, "Minimum dwell-time")->required()->check(CLI::PositiveNumber);
  synth->add_flag("--l2", l2, "l2-gain state feedback");
  auto* gopt = synth->add_option("--gamma", gamma, "Fixed gain level");
  auto* mopt = synth->add_flag("--minimize", minimize, "Minimize gamma by bisection");
  gopt->excludes(mopt);
  synth->add_option("--gains-out", gains_out, "Gains JSON path (default <system>.gains.json)");
  synth->add_option("--tol", tol, "Relative bisection tolerance");
  synth->add_option("--cert-out", cert_out, "Write the certificate JSON here");

  // l2
  std::optional<int> l2_tau;
  std::string sweep, csv_out;
  auto* gain = app.add_subcommand("l2", "Upper bound on the l2-gain under a minimum dwell-time");
  gain->add_option("system", c.system_file, "System JSON file")->required();
  auto* t_opt = gain->add_option("--tau", l2_tau, "Minimum dwell-time")->check(CLI::PositiveNumber);
  auto* s_opt = gain->add_option("--sweep", sweep, "Range a..b of dwell-times");
  t_opt->excludes(s_opt);
  gain->add_option("--tol", tol, "Relative bisection tolerance");
  gain->add_option("--form", form, "primal_R or dual_S");
  gain->add_option("--csv", csv_out, "Write the gain curve CSV here");
  gain->add_option("--cert-out", cert_out, "Write the certificate JSON here (single tau)");

  // simulate
  int sim_tau = 1, horizon = 100;
  std::uint64_t seed = 0;
  std::string gains_file, cert_file, traj_out, x0_text;
  bool noise = false;
  auto* sim = app.add_subcommand("simulate", "Trajectory under a random dwell-admissible switching signal");
  sim->add_option("system", c.system_file, "System JSON file")->required();
  sim->add_option("--tau", sim_tau, "Minimum dwell-time of the signal")->check(CLI::PositiveNumber);
  sim->add_option("--seed", seed, "Random seed");
  sim->add_option("--horizon", horizon, "Number of steps")->check(CLI::NonNegativeNumber);
  sim->add_option("--gains", gains_file, "Gains JSON file");
  sim->add_option("--cert", cert_file, "Certificate JSON file (Lyapunov traces)");
  sim->add_option("--x0", x0_text, "Initial state, comma separated (default all ones)");
  sim->add_flag("--noise", noise, "Random unit-energy disturbance w");
  sim->add_option("--out", traj_out, "Write the CSV here instead of stdout");

  // verify
  std::string witness;
  auto* ver = app.add_subcommand("verify", "Check a certificate or an instability witness");
  ver->footer(
      "Witness grammar: whitespace-separated tokens mode^power, modes numbered from 1,\n"
      "optionally followed by @w1,w2,... convex vertex weights for polytopic modes.\n"
      "Factors are multiplied left to right, e.g. \"1^5 2^5\" or \"1@0.9,0.1 1@0,1 2^2@1,0\".");
  ver->add_option("system", c.system_file, "System JSON file")->required();
  auto* cert_opt = ver->add_option("--cert", cert_file, "Certificate JSON file");
  auto* wit_opt = ver->add_option("--witness", witness, "Product pattern");
  cert_opt->excludes(wit_opt);

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  json report;
  std::string echo;
  for (std::size_t q = 1; q < args.size(); ++q) echo += (q > 1 ? " " : "") + args[q];
  report["command"] = echo;
  report["tool"] = {{"name", "dwell"}, {"version", kToolVersion}};
  int code = kExitOk;
  std::ostringstream summary;

  try {
    attach_log(c);
    const SwitchedSystem sys = load_system(c.system_file);
    report["system"] = system_digest(sys);

    if (*analyze) {
      const LiftedForm f = parse_form(form);
      const DwellResult r = robust ? min_dwell_robust(sys, tau_max, f, c.opts) : min_dwell(sys, tau_max, f, c.opts);
      json per = json::array();
      for (const TauVerdict& v : r.per_tau) {
        per.push_back({{"tau", v.tau},
                       {"status", to_string(v.status)},
                       {"iterations", v.iterations},
                       {"margin", v.margin},
                       {"seconds", v.seconds},
                       {"note", v.note}});
      }
      report["results"] = {{"form", form_name(f)}, {"robust", robust}, {"tau_max", tau_max}, {"per_tau", per}};
      report["results"]["tau_star"] = r.tau_star ? json(*r.tau_star) : json(nullptr);
      if (r.certificate) {
        bool ok = false;
        report["verification"] = verify_certificate(sys, *r.certificate, ok);
        if (!cert_out.empty()) {
          save_certificate(*r.certificate, cert_out);
          report["results"]["certificate_file"] = cert_out;
        }
        summary << "tau* = " << *r.tau_star << " (" << form_name(f) << ")";
      } else {
        summary << "no certificate for tau <= " << tau_max;
        code = kExitNegative;
      }
    } else if (*synth) {
      if (gains_out.empty()) gains_out = stem_of(c.system_file) + ".gains.json";
      try {
        SynthesisResult r;
        if (l2) {
          if (!gamma && !minimize) throw InvalidInput("--l2 requires --gamma or --minimize");
          r = synthesize_l2(sys, tau, minimize ? std::nullopt : gamma, tol, c.opts);
        } else {
          if (gamma || minimize) throw InvalidInput("--gamma and --minimize require --l2");
          r = synthesize(sys, tau, c.opts);
        }
        save_gains(r.gains, gains_out);
        if (!cert_out.empty()) save_certificate(r.certificate, cert_out);
        report["results"] = {{"tau", tau}, {"gains_file", gains_out}, {"solver_iterations", r.solver_iterations}};
        report["results"]["gamma_upper"] = r.gamma ? json(*r.gamma) : json(nullptr);
        report["verification"] = {{"closed_loop_passed", true},
                                  {"closed_loop_margin", r.closed_loop_margin},
                                  {"closed_loop_worst", r.closed_loop_worst}};
        summary << "gains written to " << gains_out;
        if (r.gamma) summary << ", gamma <= " << *r.gamma;
      } catch (const NoControllerFound& e) {
        report["results"] = {{"tau", tau}, {"error", "NoControllerFound"}, {"message", e.what()}};
        summary << "NoControllerFound: " << e.what();
        code = kExitNegative;
      } catch (const CertificateDegenerate& e) {
        report["results"] = {{"tau", tau}, {"error", "CertificateDegenerate"}, {"message", e.what()}};
        summary << "CertificateDegenerate: " << e.what();
        code = kExitNegative;
      }
    } else if (*gain) {
      const LiftedForm f = parse_form(form);
      if (!l2_tau && sweep.empty()) throw InvalidInput("l2 requires --tau or --sweep");
      if (l2_tau) {
        try {
          const GainResult r = l2_gain(sys, *l2_tau, tol, f, c.opts);
          report["results"] = {{"tau", *l2_tau}, {"gamma_upper", r.gamma_upper}, {"tolerance", tol},
                               {"evaluations", r.evaluations}, {"form", form_name(f)}};
          bool ok = false;
          report["verification"] = verify_certificate(sys, r.certificate, ok);
          if (!cert_out.empty()) save_certificate(r.certificate, cert_out);
          summary << "gamma(" << *l2_tau << ") <= " << r.gamma_upper;
        } catch (const GainUnboundedOrUnstable& e) {
          report["results"] = {{"tau", *l2_tau}, {"error", "GainUnboundedOrUnstable"}, {"message", e.what()}};
          summary << "GainUnboundedOrUnstable at tau=" << *l2_tau;
          code = kExitNegative;
        }
      } else {
        const GainCurve curve = gamma_tau_sweep(sys, parse_sweep(sweep), tol, f, c.opts);
        json pts = json::array();
        bool all_ok = true;
        for (const GainPoint& p : curve.points) {
          pts.push_back({{"tau", p.tau}, {"gamma_upper", p.gamma_upper ? json(*p.gamma_upper) : json(nullptr)}, {"status", p.status}});
          all_ok = all_ok && p.status == "ok";
        }
        report["results"] = {{"curve", pts}, {"tolerance", tol}, {"form", form_name(f)}};
        if (!csv_out.empty()) {
          std::ofstream csv(csv_out);
          if (!csv) throw InvalidInput(csv_out + ": cannot write");
          csv << curve.to_csv();
          report["results"]["csv_file"] = csv_out;
        }
        summary << curve.points.size() << " sweep points" << (all_ok ? "" : " (some without a certified gamma)");
        if (!all_ok) code = kExitNegative;
      }
    } else if (*sim) {
      const SwitchingSignal sig = random_signal(DwellSpec{sim_tau}, horizon, seed, sys.num_modes());
      Vec x0 = Vec::Ones(sys.n);
      if (!x0_text.empty()) {
        std::vector<double> vals;
        std::istringstream in(x0_text);
        std::string item;
        while (std::getline(in, item, ',')) vals.push_back(std::stod(item));
        if (static_cast<int>(vals.size()) != sys.n) throw DimensionMismatch("--x0 must have n entries");
        x0 = Eigen::Map<Vec>(vals.data(), sys.n);
      }
      SimulationInputs in;
      if (!gains_file.empty()) {
        ControllerGains g = load_gains(gains_file);
        if (g.tau != sim_tau) {
          throw DimensionMismatch("gains were designed for tau=" + std::to_string(g.tau) + ", not " + std::to_string(sim_tau));
        }
        g.validate(sys);
        in.gains = std::move(g);
      }
      if (!cert_file.empty()) in.P = flat_lyapunov(load_certificate(cert_file));
      if (noise) in.w = random_disturbance(sys, sig, seed);
      const Trajectory tr = simulate(sys, sig, x0, in);
      if (traj_out.empty()) {
        out << tr.to_csv();
      } else {
        std::ofstream f(traj_out);
        if (!f) throw InvalidInput(traj_out + ": cannot write");
        f << tr.to_csv();
      }
      err << "simulated " << horizon << " steps, " << sig.instants.size() << " segments\n";
      return kExitOk;
    } else if (*ver) {
      if (!cert_file.empty()) {
        const LiftedCertificate cert = load_certificate(cert_file);
        bool ok = false;
        report["verification"] = verify_certificate(sys, cert, ok);
        report["results"] = {{"tau", cert.tau}, {"form", form_name(cert.form)}, {"passed", ok}};
        summary << "certificate " << (ok ? "passes" : "fails") << " all checks";
        if (!ok) code = kExitNegative;
      } else if (!witness.empty()) {
        const InstabilityWitness w = instability_witness(sys, parse_pattern(witness));
        report["results"] = {{"pattern", w.description}, {"rho", w.rho}, {"unstable", w.unstable()}};
        summary << "rho(" << w.description << ") = " << w.rho;
        if (!w.unstable()) code = kExitNegative;
      } else {
        throw InvalidInput("verify requires --cert or --witness");
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::invalid_argument& e) {
    err << "error: invalid number: " << e.what() << "\n";
    return kExitInputError;
  }

  report["timings"] = {{"total_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  out << report.dump(2) << "\n";
  err << summary.str() << "\n";
  return code;
}

}  // namespace dwell
