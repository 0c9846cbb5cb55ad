#include <random>

#include <benchmark/benchmark.h>

#include "mobisec/cdr.hpp"
#include "mobisec/classifier.hpp"
#include "mobisec/kernels.hpp"

using namespace mobisec;

namespace {

std::vector<UeProfile> population(std::size_t n) {
  std::vector<UeId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = make_ue_id(1, i);
  return homogeneous_population(UeProfile{}, ids);
}

std::vector<kernels::UserEntry> entries(std::size_t n) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  Salt salt{};
  std::vector<kernels::UserEntry> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].user = pseudonymize(make_ue_id(1, i), salt);
    if (i % 4 != 0) out[i].history = UserBaseline{u(rng), u(rng), u(rng), u(rng)};
    out[i].window = UserWindow{u(rng), u(rng)};
  }
  return out;
}

struct GradientCase {
  ClassifierModel model;
  std::vector<double> xs;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> rows;
};

GradientCase gradient_case(std::size_t n) {
  GradientCase c;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  auto& m = c.model;
  m.hidden = 32;
  m.feat_mean.assign(kFeatureDim, 0.0);
  m.feat_std.assign(kFeatureDim, 1.0);
  m.w1.resize(m.hidden * kFeatureDim);
  m.b1.resize(m.hidden);
  m.w2.resize(kNumWindowClasses * m.hidden);
  m.b2.resize(kNumWindowClasses);
  auto p = m.parameters();
  for (auto& v : p) v = 0.3 * g(rng);
  m.set_parameters(p);
  c.xs.resize(n * kFeatureDim);
  for (auto& v : c.xs) v = g(rng);
  for (std::size_t i = 0; i < n; ++i) {
    c.labels.push_back(i % kNumWindowClasses);
    c.rows.push_back(i);
  }
  return c;
}

void BM_Sessions(benchmark::State& state, bool parallel) {
  const auto profiles = population(static_cast<std::size_t>(state.range(0)));
  const DiurnalCurve curve;
  for (auto _ : state) {
    auto t = parallel ? kernels::generate_sessions_omp(profiles, 1, 24 * kHourMs, curve)
                      : kernels::generate_sessions_serial(profiles, 1, 24 * kHourMs, curve);
    benchmark::DoNotOptimize(t);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ScoreUsers(benchmark::State& state, bool parallel) {
  const auto e = entries(static_cast<std::size_t>(state.range(0)));
  const UserScoreParams params;
  for (auto _ : state) {
    auto s = parallel ? kernels::score_users_omp(e, params) : kernels::score_users_serial(e, params);
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Gradient(benchmark::State& state, bool parallel) {
  const auto c = gradient_case(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto r = parallel ? kernels::batch_gradient_omp(c.model, c.xs, c.labels, c.rows)
                      : kernels::batch_gradient_serial(c.model, c.xs, c.labels, c.rows);
    benchmark::DoNotOptimize(r);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK_CAPTURE(BM_Sessions, serial, false)->Arg(10'000)->Arg(100'000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Sessions, omp, true)->Arg(10'000)->Arg(100'000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_ScoreUsers, serial, false)->Arg(10'000)->Arg(100'000)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_ScoreUsers, omp, true)->Arg(10'000)->Arg(100'000)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_Gradient, serial, false)->Arg(1'024)->Arg(16'384)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_Gradient, omp, true)->Arg(1'024)->Arg(16'384)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
