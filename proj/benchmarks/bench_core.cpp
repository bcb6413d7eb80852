// Microbenchmarks for the hot paths: streaming statistics, the factorization
// machine forward/backward, annotation and top-k metrics.

#include <benchmark/benchmark.h>

#include <vector>

#include "dvr/binstats.hpp"
#include "dvr/features.hpp"
#include "dvr/metrics.hpp"
#include "dvr/model.hpp"
#include "dvr/rng.hpp"
#include "dvr/synth.hpp"
#include "dvr/wtg.hpp"

namespace {

const dvr::DurationBinner kBinner{5.0, 60.0, 1.0};

dvr::Dataset sample_dataset() {
  dvr::SynthConfig cfg;
  cfg.n_users = 50;
  cfg.n_videos = 500;
  cfg.n_producers = 20;
  cfg.interactions_per_user = 200;
  return dvr::generate(cfg).first;
}

void BM_StreamUpdate(benchmark::State& state) {
  dvr::Rng rng(1);
  std::vector<std::pair<double, double>> events;
  for (int i = 0; i < 4096; ++i) {
    const double d = 5.0 + rng.uniform() * 55.0;
    events.emplace_back(rng.uniform() * 1.5 * d, d);
  }
  dvr::BinStatistics stats(kBinner);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& [wt, d] = events[i++ & 4095];
    stats.stream_update(wt, d);
  }
  benchmark::DoNotOptimize(stats.mean.data());
}
BENCHMARK(BM_StreamUpdate);

void BM_FitBatch(benchmark::State& state) {
  const dvr::Dataset ds = sample_dataset();
  for (auto _ : state) {
    auto stats = dvr::fit_batch(kBinner, ds.records);
    benchmark::DoNotOptimize(stats.mean.data());
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(ds.size()));
}
BENCHMARK(BM_FitBatch);

void BM_AnnotateDataset(benchmark::State& state) {
  const dvr::Dataset ds = sample_dataset();
  const dvr::BinStatistics stats = dvr::fit_batch(kBinner, ds.records);
  for (auto _ : state) {
    auto ann = dvr::annotate_dataset(ds, stats);
    benchmark::DoNotOptimize(ann.labels.data());
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(ds.size()));
}
BENCHMARK(BM_AnnotateDataset);

void BM_FmForward(benchmark::State& state) {
  const dvr::Dataset ds = sample_dataset();
  const dvr::FeatureSpace space = dvr::FeatureSpace::build(ds, true);
  dvr::ModelConfig mc;
  mc.embed_dim = static_cast<int>(state.range(0));
  const dvr::Backbone fm(mc, space.total_indices(),
                         static_cast<int>(space.field_count()));
  std::vector<double> theta(fm.param_count());
  dvr::Rng rng(2);
  for (auto& p : theta) p = rng.normal(0.0, 0.1);

  std::vector<std::vector<int>> encoded;
  for (std::size_t i = 0; i < 1024; ++i)
    encoded.push_back(space.encode(ds.records[i]));
  std::size_t i = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(fm.forward(theta, encoded[i++ & 1023]));
}
BENCHMARK(BM_FmForward)->Arg(8)->Arg(16)->Arg(64);

void BM_FmBackward(benchmark::State& state) {
  const dvr::Dataset ds = sample_dataset();
  const dvr::FeatureSpace space = dvr::FeatureSpace::build(ds, true);
  dvr::ModelConfig mc;
  mc.embed_dim = 16;
  const dvr::Backbone fm(mc, space.total_indices(),
                         static_cast<int>(space.field_count()));
  std::vector<double> theta(fm.param_count());
  std::vector<double> grad(fm.param_count(), 0.0);
  dvr::Rng rng(3);
  for (auto& p : theta) p = rng.normal(0.0, 0.1);

  std::vector<std::vector<int>> encoded;
  for (std::size_t i = 0; i < 1024; ++i)
    encoded.push_back(space.encode(ds.records[i]));
  std::size_t i = 0;
  for (auto _ : state) {
    fm.backward(theta, encoded[i++ & 1023], 1.0, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}
BENCHMARK(BM_FmBackward);

void BM_DcwtgAtK(benchmark::State& state) {
  dvr::Rng rng(4);
  dvr::RankedList list;
  list.user_id = "u";
  for (int i = 0; i < 400; ++i) {
    dvr::RankedItem item;
    item.video_id = "v" + std::to_string(i);
    item.score = rng.normal();
    item.gt_wtg = rng.normal();
    list.items.push_back(item);
  }
  dvr::sort_ranked(list);
  for (auto _ : state)
    benchmark::DoNotOptimize(dvr::dcwtg_at_k(list, 10));
}
BENCHMARK(BM_DcwtgAtK);

}  // namespace

BENCHMARK_MAIN();
