// One planning round for a random flock: single-threaded reference against
// the OpenMP version.

#include <benchmark/benchmark.h>

#include <random>

#include "flock/planner.hpp"

using namespace flock;

namespace {

RoundInput random_round(std::size_t n, PlanningMode mode) {
  std::mt19937_64 rng(7);
  const double side = std::sqrt(static_cast<double>(n)) * 0.6;
  std::uniform_real_distribution<double> pos(0, side), vel(-0.5, 0.5);
  RoundInput in;
  in.params.n_agents = n;
  in.params.R = 0.1;
  in.params.h = 0.7;
  in.params.D = 0.5;
  in.params.v_d = {0.7, 0.7};
  in.params.mode = mode;
  while (in.snapshot.states.size() < n) {
    const Vec2 c{pos(rng), pos(rng)};
    bool ok = true;
    for (const auto &s : in.snapshot.states) ok = ok && norm(s.p - c) > 0.3;
    if (ok) in.snapshot.states.push_back({c, {vel(rng), vel(rng)}});
  }
  return in;
}

template <class Plan>
void round(benchmark::State &state, Plan plan, PlanningMode mode) {
  const RoundInput in = random_round(static_cast<std::size_t>(state.range(0)), mode);
  for (auto _ : state) benchmark::DoNotOptimize(plan(in));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void serial_exchange(benchmark::State &s) { round(s, plan_round_serial, PlanningMode::exchange); }
void parallel_exchange(benchmark::State &s) { round(s, plan_round_parallel, PlanningMode::exchange); }
void serial_sensing(benchmark::State &s) { round(s, plan_round_serial, PlanningMode::sensing); }
void parallel_sensing(benchmark::State &s) { round(s, plan_round_parallel, PlanningMode::sensing); }

}  // namespace

BENCHMARK(serial_exchange)->RangeMultiplier(4)->Range(12, 192)->Unit(benchmark::kMillisecond);
BENCHMARK(parallel_exchange)->RangeMultiplier(4)->Range(12, 192)->Unit(benchmark::kMillisecond);
BENCHMARK(serial_sensing)->RangeMultiplier(4)->Range(12, 192)->Unit(benchmark::kMillisecond);
BENCHMARK(parallel_sensing)->RangeMultiplier(4)->Range(12, 192)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
