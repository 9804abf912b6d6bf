#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "rsmc/filters.hpp"
#include "rsmc/kernels.hpp"
#include "rsmc/random.hpp"
#include "rsmc/simulators.hpp"

using namespace rsmc;

namespace {

struct Setup {
  StateSpaceModel model;
  Matrix particles;
  Vector y;
  Matrix ys;
};

const Setup& setup(std::size_t n) {
  static std::vector<std::pair<std::size_t, Setup>> cache;
  for (const auto& [k, s] : cache)
    if (k == n) return s;
  const auto sys = wiener_velocity_system(0.1);
  Vector x0 = (Vector(4) << 140.0, 140.0, 50.0, 0.0).finished();
  StateSpaceModel model{GaussianDensity(x0, Matrix::Identity(4, 4)), LinearGaussianTransition(sys.A, sys.Q),
                        LikelihoodFamily::gaussian(ObservationMap::linear(sys.H), Matrix::Identity(2, 2))};
  const auto sim = simulate_lgssm(sys.A, sys.Q, x0, model.likelihood, 200, 3);
  Matrix particles = x0.replicate(1, Eigen::Index(n)) + Matrix::Random(4, Eigen::Index(n));
  Setup s{model, particles, sim.clean_obs.row(0).transpose(), sim.clean_obs};
  cache.emplace_back(n, s);
  return cache.back().second;
}

std::vector<double> skewed_weights(std::size_t n) {
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += w[i] = std::exp(-double(i % 97) / 10.0);
  for (auto& v : w) v /= total;
  return w;
}

template <bool Parallel>
void BM_propagate(benchmark::State& state) {
  const auto& s = setup(std::size_t(state.range(0)));
  Matrix out(s.particles.rows(), s.particles.cols());
  std::uint64_t key = 0;
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::propagate(s.model.transition, s.particles, {}, ++key, out);
    else
      kernels::reference::propagate(s.model.transition, s.particles, {}, ++key, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_log_potentials(benchmark::State& state) {
  const auto& s = setup(std::size_t(state.range(0)));
  const auto gl = GeneralisedLikelihood::beta(s.model.likelihood, 0.1);
  std::vector<double> out(std::size_t(state.range(0)));
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::log_potentials(gl, s.particles, s.y, out);
    else
      kernels::reference::log_potentials(gl, s.particles, s.y, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_normalise(benchmark::State& state) {
  std::vector<double> lw = skewed_weights(std::size_t(state.range(0)));
  for (auto& v : lw) v = std::log(v);
  for (auto _ : state) {
    auto r = Parallel ? kernels::parallel::normalise(lw) : kernels::reference::normalise(lw);
    benchmark::DoNotOptimize(r.weights.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel, bool Systematic>
void BM_resample(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  const auto w = skewed_weights(n);
  std::uint64_t key = 0;
  for (auto _ : state) {
    std::vector<std::size_t> idx;
    if constexpr (Parallel)
      idx = Systematic ? kernels::parallel::systematic(w, n, ++key) : kernels::parallel::multinomial(w, n, ++key);
    else
      idx = Systematic ? kernels::reference::systematic(w, n, ++key) : kernels::reference::multinomial(w, n, ++key);
    benchmark::DoNotOptimize(idx.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <Backend B>
void BM_beta_bpf(benchmark::State& state) {
  const auto& s = setup(std::size_t(state.range(0)));
  const auto gl = GeneralisedLikelihood::beta(s.model.likelihood, 0.1);
  FilterSpec spec;
  spec.particles = std::size_t(state.range(0));
  spec.backend = B;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto out = run_bpf(s.model, gl, spec, s.ys, ++seed);
    benchmark::DoNotOptimize(out.means.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * s.ys.rows());
}

}  // namespace

BENCHMARK(BM_propagate<false>)->Name("propagate/reference")->Arg(1000)->Arg(100000);
BENCHMARK(BM_propagate<true>)->Name("propagate/parallel")->Arg(1000)->Arg(100000);
BENCHMARK(BM_log_potentials<false>)->Name("log_potentials/reference")->Arg(1000)->Arg(100000);
BENCHMARK(BM_log_potentials<true>)->Name("log_potentials/parallel")->Arg(1000)->Arg(100000);
BENCHMARK(BM_normalise<false>)->Name("normalise/reference")->Arg(1000)->Arg(100000);
BENCHMARK(BM_normalise<true>)->Name("normalise/parallel")->Arg(1000)->Arg(100000);
BENCHMARK(BM_resample<false, false>)->Name("multinomial/reference")->Arg(1000)->Arg(100000);
BENCHMARK(BM_resample<true, false>)->Name("multinomial/parallel")->Arg(1000)->Arg(100000);
BENCHMARK(BM_resample<false, true>)->Name("systematic/reference")->Arg(1000)->Arg(100000);
BENCHMARK(BM_resample<true, true>)->Name("systematic/parallel")->Arg(1000)->Arg(100000);
BENCHMARK(BM_beta_bpf<Backend::Reference>)->Name("beta_bpf/reference")->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_beta_bpf<Backend::Parallel>)->Name("beta_bpf/parallel")->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
