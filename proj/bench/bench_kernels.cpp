#include <benchmark/benchmark.h>

#include <vector>

#include "fea/dataset.hpp"
#include "fea/event_sim.hpp"
#include "fea/kernels.hpp"
#include "fea/pipeline.hpp"
#include "fea/rng.hpp"

namespace {

using namespace fea;

std::vector<float> random_floats(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  const auto a = random_floats(n * n, 1), b = random_floats(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0f);
    if constexpr (Parallel) {
      kernels::gemm_nn_omp(a.data(), b.data(), c.data(), n, n, n);
    } else {
      kernels::gemm_nn_serial(a.data(), b.data(), c.data(), n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/omp")->Arg(64)->Arg(256);

// One scene's 1 ms render sequence (2001 frames of 64x64).
const FrameSequence& dense_scene() {
  static const FrameSequence s = [] {
    GenConfig cfg;
    const SquareTrack tr = sample_track(3, 0, cfg);
    FrameSequence f;
    f.width = cfg.width;
    f.height = cfg.height;
    for (int64_t t = 0; t <= cfg.duration_us; t += cfg.render_step_us) f.frames.push_back(Frame{t, render(tr, cfg, t)});
    return f;
  }();
  return s;
}

template <bool Parallel>
void BM_Simulate(benchmark::State& state) {
  const FrameSequence& f = dense_scene();
  for (auto _ : state) {
    EventStream s = Parallel ? simulate_events(f, SimConfig{}) : simulate_events_serial(f, SimConfig{});
    benchmark::DoNotOptimize(s.events.data());
  }
}
BENCHMARK(BM_Simulate<false>)->Name("simulate/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Simulate<true>)->Name("simulate/omp")->Unit(benchmark::kMillisecond);

struct EncodeFixture {
  Model model{ModelConfig{}, AblationConfig{}};
  std::vector<Sample> samples = make_samples(gen_dataset(16, 5, GenConfig{}), ModelConfig{});
};

const EncodeFixture& encode_fixture() {
  static const EncodeFixture f;
  return f;
}

template <bool Parallel>
void BM_Encode(benchmark::State& state) {
  const EncodeFixture& f = encode_fixture();
  for (auto _ : state) {
    if constexpr (Parallel) {
      auto out = encode_all(f.model, f.samples);
      benchmark::DoNotOptimize(out.data());
    } else {
      std::vector<EncodedScene> out;
      for (const Sample& s : f.samples) out.push_back(encode_scene(f.model, s));
      benchmark::DoNotOptimize(out.data());
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(f.samples.size()));
}
BENCHMARK(BM_Encode<false>)->Name("encode16/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Encode<true>)->Name("encode16/omp")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
