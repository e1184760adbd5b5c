#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "shapdoor/attack.hpp"
#include "shapdoor/dataset.hpp"
#include "shapdoor/defend.hpp"
#include "shapdoor/explain.hpp"
#include "shapdoor/models.hpp"
#include "shapdoor/rng.hpp"

namespace sd = shapdoor;

namespace {

sd::Dataset synthetic(std::size_t n, std::size_t d) {
  sd::SynthConfig c;
  c.n_samples = n;
  c.n_features = d;
  c.n_informative = d * 2 / 3;
  return sd::generate_synthetic(c);
}

const sd::Dataset& train_set() {
  static const sd::Dataset ds = synthetic(4000, 30);
  return ds;
}

const sd::Model& gbdt() {
  static const sd::Model m =
      sd::train(train_set(), sd::TrainConfig::defaults(sd::ModelKind::gradient_boosted_trees));
  return m;
}

sd::ReducedSpace random_space(std::size_t n, std::size_t d) {
  sd::Rng rng(11);
  sd::ReducedSpace rs;
  rs.matrix = sd::Matrix(n, d);
  for (double& v : rs.matrix.data()) v = rng.uniform(-1.0, 1.0);
  rs.ids.resize(n);
  std::iota(rs.ids.begin(), rs.ids.end(), sd::RowId{0});
  rs.selected_features.resize(d);
  std::iota(rs.selected_features.begin(), rs.selected_features.end(), std::size_t{0});
  return rs;
}

}  // namespace

static void BM_KernelShap(benchmark::State& state) {
  const auto bg = sd::sample_background(train_set(), 16, 1);
  sd::ExplainerConfig cfg;
  cfg.n_coalition_samples = static_cast<std::size_t>(state.range(0));
  const auto x = train_set().row(0);
  const auto& m = gbdt();
  for (auto _ : state) benchmark::DoNotOptimize(sd::kernel_shap(m, x, bg, cfg));
}
BENCHMARK(BM_KernelShap)->Arg(256)->Arg(2048)->Unit(benchmark::kMillisecond);

static void BM_ExactShapley(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto ds = synthetic(1000, d);
  const auto m = sd::train(ds, sd::TrainConfig::defaults(sd::ModelKind::gradient_boosted_trees));
  const auto bg = sd::sample_background(ds, 16, 1);
  for (auto _ : state) benchmark::DoNotOptimize(sd::exact_shapley(m, ds.row(0), bg));
}
BENCHMARK(BM_ExactShapley)->Arg(8)->Arg(12)->Unit(benchmark::kMillisecond);

static void BM_TrainGbdt(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        sd::train(train_set(), sd::TrainConfig::defaults(sd::ModelKind::gradient_boosted_trees)));
  }
}
BENCHMARK(BM_TrainGbdt)->Unit(benchmark::kMillisecond);

static void BM_CountShapSelector(benchmark::State& state) {
  const auto bg = sd::sample_background(train_set(), 8, 1);
  sd::ExplainerConfig cfg;
  cfg.n_coalition_samples = 128;
  std::vector<std::size_t> rows(500);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto sub = train_set().subset(rows);
  const auto shap = sd::explain_dataset(gbdt(), sub, bg, cfg);
  const auto profile = sd::ConstraintProfile::from_specs(sub.specs());
  sd::SelectorConfig sel;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sd::build_trigger_independent(shap, sub, sel, profile));
  }
}
BENCHMARK(BM_CountShapSelector)->Unit(benchmark::kMillisecond);

static void BM_SpectralFilter(benchmark::State& state) {
  const auto rs = random_space(static_cast<std::size_t>(state.range(0)), 32);
  for (auto _ : state) benchmark::DoNotOptimize(sd::spectral_filter(rs));
}
BENCHMARK(BM_SpectralFilter)->Arg(4000)->Unit(benchmark::kMillisecond);

static void BM_IsolationForest(benchmark::State& state) {
  const auto rs = random_space(static_cast<std::size_t>(state.range(0)), 32);
  for (auto _ : state) benchmark::DoNotOptimize(sd::isolation_forest_filter(rs));
}
BENCHMARK(BM_IsolationForest)->Arg(4000)->Unit(benchmark::kMillisecond);

static void BM_Hdbscan(benchmark::State& state) {
  const auto rs = random_space(static_cast<std::size_t>(state.range(0)), 8);
  for (auto _ : state) benchmark::DoNotOptimize(sd::hdbscan_cluster(rs.matrix, 20, 10));
}
BENCHMARK(BM_Hdbscan)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
