#include <benchmark/benchmark.h>

#include <vector>

#include "memarray/beam_search.hpp"
#include "memarray/ctc.hpp"
#include "memarray/encoder.hpp"
#include "memarray/model.hpp"
#include "memarray/rng.hpp"

namespace {

using namespace mema;

Matrix noise(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& x : m.data()) x = rng.normal();
  return m;
}

// Default model sizes, 12 labels.
ModelDims dims() { return ModelDims{}; }

void BM_CtcForward(benchmark::State& state) {
  Rng rng(1);
  const auto T = static_cast<std::size_t>(state.range(0));
  const CtcLattice lat = make_lattice(noise(T, 13, rng));
  Transcript t;
  for (std::size_t i = 0; i < T / 4; ++i) t.labels.push_back(static_cast<int>(i % 12));
  for (auto _ : state) benchmark::DoNotOptimize(ctc_forward_loss(lat, t));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(T));
}
BENCHMARK(BM_CtcForward)->Arg(20)->Arg(40)->Arg(80);

void BM_Encoder(benchmark::State& state) {
  Rng rng(2);
  const Model m = Model::create(dims(), 1, rng);
  const auto T = static_cast<std::size_t>(state.range(0));
  const Matrix x = noise(T, dims().feat_dim, rng);
  for (auto _ : state) benchmark::DoNotOptimize(encode(m.encoder, x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(T));
}
BENCHMARK(BM_Encoder)->Arg(80)->Arg(160);

void BM_BeamSearch(benchmark::State& state) {
  Rng rng(3);
  const auto N = static_cast<std::size_t>(state.range(0));
  const Model m = Model::create(dims(), N, rng);
  std::vector<Matrix> ufe;
  for (std::size_t i = 0; i < N; ++i) ufe.push_back(noise(20, dims().ufe_dim, rng));
  DecodeConfig cfg;
  cfg.beam = static_cast<int>(state.range(1));
  cfg.max_output_len = 12;
  for (auto _ : state) benchmark::DoNotOptimize(beam_search(m, ufe, cfg));
}
BENCHMARK(BM_BeamSearch)->Args({1, 1})->Args({2, 4})->Args({2, 10})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
