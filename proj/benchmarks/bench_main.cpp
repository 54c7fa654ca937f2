#include <random>

#include <benchmark/benchmark.h>

#include "reland/losses.hpp"
#include "reland/metrics.hpp"
#include "reland/models.hpp"
#include "reland/nn.hpp"
#include "reland/spatial.hpp"

using namespace reland;

namespace {

Vec random_vec(std::mt19937_64& rng, std::size_t d) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  Vec v(d);
  for (double& x : v) x = u(rng);
  return v;
}

void bm_sparsemax(benchmark::State& state) {
  std::mt19937_64 rng(1);
  Vec z = random_vec(rng, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(sparsemax(z));
  }
}
BENCHMARK(bm_sparsemax)->Arg(8)->Arg(70)->Arg(512);

void bm_height_metrics(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = u(rng);
    labels[i] = (i % 8 == 0) ? 1 : 0;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(height_metrics(scores, labels));
  }
}
BENCHMARK(bm_height_metrics)->Arg(1000)->Arg(20000);

void bm_pnorm_push(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Vec pos(n / 8 + 1), neg(n);
  for (double& v : pos) v = u(rng);
  for (double& v : neg) v = u(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(pnorm_push(pos, neg, 4.0));
  }
}
BENCHMARK(bm_pnorm_push)->Arg(256)->Arg(2048);

void bm_reland_train_step(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 20;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RelandConfig rc;
  rc.dim = dim;
  Model model = Model::make(ModelKind::Reland, dim, 5, rc);
  Matrix x(batch, dim);
  for (double& v : x.data) v = u(rng);
  std::vector<int> y(batch);
  for (std::size_t i = 0; i < batch; ++i) y[i] = (i % 7 == 0) ? 1 : 0;
  for (auto _ : state) {
    auto [probs, logits] = model.forward(x, true);
    (void)logits;
    Vec d(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      d[i] = (probs[i] - y[i]) / static_cast<double>(batch);
    }
    model.zero_grad();
    model.backward(d);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(bm_reland_train_step)->Arg(256)->Arg(2048);

void bm_local_moran(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::vector<Cell> cells;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      Cell cell;
      cell.cell_id = "g" + std::to_string(r * n + c);
      cell.lon = -75.0 + 0.005 * static_cast<double>(c);
      cell.lat = 6.0 + 0.005 * static_cast<double>(r);
      cells.push_back(cell);
    }
  }
  SpatialWeights w = build_weights(cells, ContiguityScheme::Queen);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec scores(n * n);
  for (double& s : scores) s = u(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(local_moran(scores, w, 99, 1, 0.01));
  }
}
BENCHMARK(bm_local_moran)->Arg(20)->Arg(40);

}  // namespace

BENCHMARK_MAIN();
