// Serial against OpenMP-parallel Newton assembly on the lifted conditions of
// the third example, and the full solve with either kernel.

#include <string>

#include <benchmark/benchmark.h>

#include "dwell/lmi.hpp"
#include "dwell/sdp.hpp"
#include "dwell/sdp_kernels.hpp"
#include "dwell/system_model.hpp"

namespace {

using namespace dwell;

const SwitchedSystem& example3() {
  static const SwitchedSystem sys = load_system(std::string(DWELL_DATA_DIR) + "/ex3.json");
  return sys;
}

struct Fixture {
  LmiProblem problem;
  kernels::CompiledProblem compiled;
  Vec y;

  explicit Fixture(int tau)
      : problem(build_lifted(example3(), DwellSpec{tau}, LiftedForm::PrimalR)), compiled(kernels::compile(problem, 1e6)) {
    const int m = problem.vars.total_dim();
    y.resize(m + 1);
    y.head(m) = problem.vars.initial_point();
    y(m) = kernels::max_shifted_eig(compiled, y.head(m)) + 1.0;
  }
};

template <bool Parallel>
void BM_Assembly(benchmark::State& state) {
  const Fixture f(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto sys = Parallel ? kernels::assemble_newton_parallel(f.compiled, f.y, 3.0)
                        : kernels::assemble_newton_serial(f.compiled, f.y, 3.0);
    benchmark::DoNotOptimize(sys);
  }
  state.counters["vars"] = f.problem.vars.total_dim();
}

template <bool Parallel>
void BM_Solve(benchmark::State& state) {
  const LmiProblem p = build_lifted(example3(), DwellSpec{static_cast<int>(state.range(0))}, LiftedForm::PrimalR);
  SolveOptions opts;
  opts.parallel_assembly = Parallel;
  for (auto _ : state) benchmark::DoNotOptimize(solve(p, opts));
}

BENCHMARK(BM_Assembly<false>)->Name("assembly/serial")->Arg(4)->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(BM_Assembly<true>)->Name("assembly/parallel")->Arg(4)->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(BM_Solve<false>)->Name("solve/serial")->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Solve<true>)->Name("solve/parallel")->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
