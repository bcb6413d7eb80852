// Acceptance checks for the toolkit: one PASS/FAIL line per criterion.
// Exits nonzero if any criterion fails.

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dvr/binstats.hpp"
#include "dvr/ingest.hpp"
#include "dvr/metrics.hpp"
#include "dvr/model.hpp"
#include "dvr/pipeline.hpp"
#include "dvr/rng.hpp"
#include "dvr/synth.hpp"
#include "dvr/wtg.hpp"

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  fmt::print("criterion {}: {} - {}\n", criterion, pass ? "PASS" : "FAIL",
             detail);
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  return xs[xs.size() / 2];
}

bool close_rel(double a, double b, double tol) {
  return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

// ---------------------------------------------------------------------------
// 1. Streaming statistics equal the batch fit on random datasets.

void criterion_1() {
  const auto start = Clock::now();
  const dvr::DurationBinner binner{5.0, 60.0, 1.0};
  dvr::Rng rng(1001);
  bool ok = true;
  for (int trial = 0; trial < 100 && ok; ++trial) {
    // Random size and random bin occupancy: sometimes the full range,
    // sometimes a narrow duration band, always arbitrary insertion order.
    const auto n = rng.uniform_int(1, 3000);
    const double lo = 5.0 + rng.uniform() * 40.0;
    const double hi = lo + 0.5 + rng.uniform() * (60.0 - lo - 0.5);
    std::vector<dvr::InteractionRecord> records;
    for (std::int64_t i = 0; i < n; ++i) {
      dvr::InteractionRecord r;
      r.user_id = "u";
      r.video_id = "v";
      r.duration = lo + rng.uniform() * (hi - lo);
      r.watch_time = rng.uniform() * 1.5 * r.duration;
      records.push_back(r);
    }
    const dvr::BinStatistics batch = dvr::fit_batch(binner, records);
    rng.shuffle(records);
    dvr::BinStatistics stream(binner);
    for (const auto& r : records) stream.stream_update(r.watch_time, r.duration);
    for (int b = 0; b < binner.num_bins() && ok; ++b) {
      ok = stream.count[b] == batch.count[b] &&
           close_rel(stream.mean[b], batch.mean[b], 1e-9) &&
           close_rel(stream.sigma(b), batch.sigma(b), 1e-9);
    }
  }
  const double elapsed = seconds_since(start);
  report(1, ok && elapsed < 10.0,
         fmt::format("streaming matches batch on 100 random datasets "
                     "(1e-9 rel), {:.2f} s (budget 10 s)",
                     elapsed));
}

// ---------------------------------------------------------------------------
// 2. Annotating the fitting population standardizes every populated bin.

void criterion_2(const dvr::Dataset& ds) {
  const dvr::DurationBinner binner{5.0, 60.0, 1.0};
  const dvr::BinStatistics stats = dvr::fit_batch(binner, ds.records);
  const dvr::AnnotatedDataset ann = dvr::annotate_dataset(ds, stats);

  std::vector<double> sum(static_cast<std::size_t>(binner.num_bins()), 0.0);
  std::vector<double> sum2 = sum;
  std::vector<std::int64_t> n(sum.size(), 0);
  for (const auto& label : ann.labels) {
    sum[static_cast<std::size_t>(label.bin)] += label.value;
    sum2[static_cast<std::size_t>(label.bin)] += label.value * label.value;
    n[static_cast<std::size_t>(label.bin)] += 1;
  }
  bool ok = true;
  double worst_mean = 0.0, worst_std = 0.0;
  for (std::size_t b = 0; b < sum.size(); ++b) {
    if (n[b] < 2 || stats.sigma(static_cast<int>(b)) <= 1e-8) continue;
    const double mean = sum[b] / static_cast<double>(n[b]);
    const double var = sum2[b] / static_cast<double>(n[b]) - mean * mean;
    worst_mean = std::max(worst_mean, std::fabs(mean));
    worst_std = std::max(worst_std, std::fabs(std::sqrt(var) - 1.0));
    ok = ok && std::fabs(mean) < 1e-9 && std::fabs(std::sqrt(var) - 1.0) < 1e-9;
  }
  report(2, ok,
         fmt::format("per-bin wtg mean 0 and std 1 over the fitting "
                     "population (worst |mean| {:.2e}, worst |std-1| {:.2e})",
                     worst_mean, worst_std));
}

// ---------------------------------------------------------------------------
// 3. Analytic gradients match central finite differences.

dvr::Dataset gradient_dataset() {
  dvr::Dataset ds;
  const char* users[] = {"u1", "u2", "u3"};
  const char* videos[] = {"v1", "v2", "v3", "v4", "v5"};
  int t = 0;
  for (const char* u : users)
    for (const char* v : videos) {
      dvr::InteractionRecord r;
      r.user_id = u;
      r.video_id = v;
      r.producer_id = "p1";
      r.watch_time = 1.0 + t;
      r.duration = 10.0 + t;
      r.timestamp = t++;
      ds.records.push_back(r);
    }
  return ds;
}

void criterion_3() {
  const auto start = Clock::now();
  const dvr::Dataset data = gradient_dataset();
  bool ok = true;
  double worst = 0.0;
  for (int seed = 1; seed <= 50 && ok; ++seed) {
    for (const dvr::BackboneKind kind :
         {dvr::BackboneKind::fm, dvr::BackboneKind::mlp}) {
      dvr::ModelConfig mc;
      mc.kind = kind;
      mc.embed_dim = 2;
      mc.hidden = {4};
      dvr::TrainConfig tc;
      tc.alpha = 0.3;
      tc.seed = static_cast<std::uint64_t>(seed);
      dvr::DvrModel model(dvr::FeatureSpace::build(data, true), mc,
                          dvr::TargetKind::wtg, tc);

      dvr::Rng rng(static_cast<std::uint64_t>(seed) * 7919 + 3);
      for (auto& p : model.phi_params()) p = rng.normal(0.0, 0.5);
      const double pa = rng.normal(0.0, 0.5), pb = rng.normal(0.0, 0.5);
      model.set_psi(pa, pb);

      std::vector<dvr::Sample> batch;
      for (std::size_t i = 0; i < data.records.size(); i += 3) {
        dvr::Sample s;
        s.active = model.space().encode(data.records[i]);
        s.target = rng.normal(0.0, 1.0);
        s.duration = 0.1 + 0.8 * rng.uniform();
        batch.push_back(s);
      }

      const std::size_t P = model.backbone().param_count();
      std::vector<double> analytic(P + 2, 0.0);
      model.gradients(batch, analytic);

      std::vector<double> numeric(P + 2, 0.0);
      const double h = 1e-6;
      auto phi_objective = [&] {
        const auto [lw, ld] = model.losses(batch);
        return lw - tc.alpha * ld;
      };
      for (std::size_t i = 0; i < P; ++i) {
        const double keep = model.phi_params()[i];
        model.phi_params()[i] = keep + h;
        const double up = phi_objective();
        model.phi_params()[i] = keep - h;
        const double down = phi_objective();
        model.phi_params()[i] = keep;
        numeric[i] = (up - down) / (2.0 * h);
      }
      auto psi_objective = [&](double da, double db) {
        model.set_psi(pa + da, pb + db);
        const double ld = model.losses(batch).second;
        model.set_psi(pa, pb);
        return tc.alpha * ld;
      };
      numeric[P] = (psi_objective(h, 0) - psi_objective(-h, 0)) / (2.0 * h);
      numeric[P + 1] = (psi_objective(0, h) - psi_objective(0, -h)) / (2.0 * h);

      double diff2 = 0.0, norm2 = 0.0;
      for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double d = analytic[i] - numeric[i];
        diff2 += d * d;
        norm2 += analytic[i] * analytic[i] + numeric[i] * numeric[i];
      }
      const double rel = std::sqrt(diff2) / (std::sqrt(norm2) + 1e-12);
      worst = std::max(worst, rel);
      ok = ok && rel < 1e-5;
    }
  }
  const double elapsed = seconds_since(start);
  report(3, ok && elapsed < 30.0,
         fmt::format("fm and mlp gradients vs central differences over 50 "
                     "seeds (worst rel err {:.2e}), {:.2f} s (budget 30 s)",
                     worst, elapsed));
}

// ---------------------------------------------------------------------------
// 4. The generator reproduces the duration-bias shape.

void criterion_4(const dvr::Dataset& ds) {
  const dvr::DurationBinner binner{5.0, 60.0, 1.0};
  const std::vector<double> no_wtg(ds.size(), 0.0);
  const auto rows = dvr::bias_curves(ds, no_wtg, binner, {}, 10);

  std::vector<double> bin_low, mean_wt, mean_pct;
  for (const auto& row : rows) {
    if (row.n == 0) continue;
    bin_low.push_back(row.bin_low);
    mean_wt.push_back(row.mean_watch_time);
    mean_pct.push_back(row.mean_watch_pct);
  }
  const double rho_wt = dvr::spearman(bin_low, mean_wt);
  const double rho_pct = dvr::spearman(bin_low, mean_pct);
  report(4, rho_wt > 0.9 && rho_pct < -0.9,
         fmt::format("per-bin mean watch time rising (rho {:.3f} > 0.9), "
                     "watch percentage falling (rho {:.3f} < -0.9)",
                     rho_wt, rho_pct));
}

// ---------------------------------------------------------------------------
// 5-7. Strategy ladder at synthetic defaults, five seeds.

struct ArmResult {
  double wtg = 0.0, dcwtg = 0.0, long_traffic = 0.0, seconds = 0.0;
  std::int64_t bc = 0;
};

ArmResult run_arm(const std::string& strategy, std::uint64_t seed) {
  dvr::ExperimentConfig cfg;
  cfg.strategy = dvr::Strategy::parse(strategy);
  cfg.synth.seed = seed;
  cfg.train.seed = seed;
  const auto start = Clock::now();
  const dvr::PipelineResult result = dvr::run_pipeline(cfg);
  ArmResult arm;
  arm.wtg = result.report.wtg_at_k;
  arm.dcwtg = result.report.dcwtg_at_k;
  arm.bc = result.report.bc_at_k;
  arm.long_traffic = result.report.traffic.at("long");
  arm.seconds = seconds_since(start);
  return arm;
}

void criteria_5_6_7() {
  const std::vector<std::string> arms{"none", "dd", "dd+wtg", "dd+wtg+adv"};
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::map<std::string, std::vector<ArmResult>> results;
  for (const auto& arm : arms)
    for (const auto seed : seeds) results[arm].push_back(run_arm(arm, seed));

  auto med = [&](const std::string& arm, auto&& pick) {
    std::vector<double> values;
    for (const auto& r : results[arm]) values.push_back(pick(r));
    return median(values);
  };
  auto total_seconds = [&](const std::vector<std::string>& names) {
    double total = 0.0;
    for (const auto& name : names)
      for (const auto& r : results[name]) total += r.seconds;
    return total;
  };

  // 5. The raw watch-time model starves short producers.
  {
    const double share =
        med("none", [](const ArmResult& r) { return r.long_traffic; });
    const double elapsed = total_seconds({"none"});
    report(5, share > 0.65 && elapsed < 120.0,
           fmt::format("watch-time fm gives the long-producer group {:.1f}% "
                       "of top-10 traffic (> 65%), median of 5 seeds, "
                       "{:.0f} s (budget 120 s)",
                       share * 100.0, elapsed));
  }

  // 6. Full DVR versus the watch-time baseline.
  {
    const auto wtg = [](const ArmResult& r) { return r.wtg; };
    const auto bc = [](const ArmResult& r) { return double(r.bc); };
    const auto traffic = [](const ArmResult& r) { return r.long_traffic; };
    const double base_wtg = med("none", wtg);
    const double dvr_wtg = med("dd+wtg+adv", wtg);
    const double base_bc = med("none", bc);
    const double dvr_bc = med("dd+wtg+adv", bc);
    const double dvr_share = med("dd+wtg+adv", traffic);
    const double elapsed = total_seconds({"none", "dd+wtg+adv"});
    const bool ok = dvr_wtg >= 1.5 * base_wtg && dvr_bc <= base_bc &&
                    dvr_share >= 0.35 && dvr_share <= 0.65 && elapsed < 300.0;
    report(6, ok,
           fmt::format("dvr vs watch-time baseline, medians of 5 seeds: "
                       "wtg@10 {:.4f} vs {:.4f} (>= 1.5x), bc@10 {:.0f} vs "
                       "{:.0f} (no greater), long traffic {:.3f} (in "
                       "[0.35, 0.65]), {:.0f} s (budget 300 s)",
                       dvr_wtg, base_wtg, dvr_bc, base_bc, dvr_share, elapsed));
  }

  // 7. Median DCWTG@10 is non-decreasing along the strategy ladder.
  {
    std::vector<double> ladder;
    for (const auto& arm : arms)
      ladder.push_back(med(arm, [](const ArmResult& r) { return r.dcwtg; }));
    bool ok = true;
    for (std::size_t i = 1; i < ladder.size(); ++i)
      ok = ok && ladder[i] >= ladder[i - 1];
    report(7, ok,
           fmt::format("median dcwtg@10 along none -> +dd -> +wtg -> +adv: "
                       "{:.4f} -> {:.4f} -> {:.4f} -> {:.4f} (non-decreasing)",
                       ladder[0], ladder[1], ladder[2], ladder[3]));
  }
}

// ---------------------------------------------------------------------------
// 8. Metric spot checks.

void criterion_8(const dvr::Dataset& ds) {
  bool ok = true;

  // DCWTG@1 equals WTG@1 on random lists.
  dvr::Rng rng(8008);
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    dvr::RankedList list;
    list.user_id = "u";
    const auto n = rng.uniform_int(1, 12);
    for (std::int64_t i = 0; i < n; ++i) {
      dvr::RankedItem item;
      item.video_id = fmt::format("v{}", i);
      item.score = rng.normal();
      item.gt_wtg = rng.normal();
      list.items.push_back(item);
    }
    dvr::sort_ranked(list);
    ok = std::fabs(dvr::dcwtg_at_k(list, 1) - dvr::wtg_at_k(list, 1)) < 1e-12;
  }
  const bool dcwtg_ok = ok;

  // The 2.0 s boundary is not a bad case.
  dvr::RankedList boundary;
  boundary.user_id = "u";
  for (double wt : {1.9, 2.0, 0.5}) {
    dvr::RankedItem item;
    item.video_id = fmt::format("v{}", boundary.items.size());
    item.score = 1.0;
    item.gt_watch_time = wt;
    boundary.items.push_back(item);
  }
  const bool bc_ok =
      dvr::bad_cases_at_k(std::vector<dvr::RankedList>{boundary}, 3, 2.0) == 2;

  // LongRec beats RandomRec on watch time over biased data.
  std::map<std::string, std::vector<dvr::InteractionRecord>> by_user;
  for (const auto& r : ds.records) by_user[r.user_id].push_back(r);
  std::vector<dvr::RankedList> long_lists, random_lists;
  std::uint64_t user_seed = 0;
  for (const auto& [user, records] : by_user) {
    const std::vector<dvr::WtgLabel> labels(records.size());
    long_lists.push_back(dvr::baseline_long_rec(user, records, labels));
    random_lists.push_back(
        dvr::baseline_random_rec(user, records, labels, 9000 + user_seed++));
  }
  const double wt_long = dvr::watch_time_at_k(long_lists, 10);
  const double wt_random = dvr::watch_time_at_k(random_lists, 10);
  const bool baseline_ok = wt_long >= wt_random;

  report(8, dcwtg_ok && bc_ok && baseline_ok,
         fmt::format("dcwtg@1 == wtg@1 on 1000 lists, 2.0 s is not a bad "
                     "case, longrec watchtime@10 {:.1f} >= randomrec {:.1f}",
                     wt_long, wt_random));
}

// ---------------------------------------------------------------------------
// 9. Pipeline determinism modulo the timestamp header.

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string strip_timestamp(std::string text) {
  const auto start = text.find("generated_at: ");
  if (start == std::string::npos) return text;
  return text.erase(start, text.find('\n', start) - start);
}

void criterion_9() {
  dvr::ExperimentConfig cfg;
  cfg.synth.n_users = 60;
  cfg.synth.n_videos = 400;
  cfg.synth.n_producers = 20;
  cfg.synth.interactions_per_user = 80;
  cfg.train.max_epochs = 3;
  cfg.strategy = dvr::Strategy::parse("dd+wtg+adv");

  const fs::path base = fs::temp_directory_path() / "dvr_acceptance_det";
  fs::remove_all(base);
  cfg.out_dir = (base / "a").string();
  dvr::run_pipeline(cfg);
  cfg.out_dir = (base / "b").string();
  dvr::run_pipeline(cfg);

  const bool ok = strip_timestamp(slurp(base / "a" / "report.txt")) ==
                      strip_timestamp(slurp(base / "b" / "report.txt")) &&
                  slurp(base / "a" / "curves.csv") ==
                      slurp(base / "b" / "curves.csv") &&
                  slurp(base / "a" / "model.ckpt") ==
                      slurp(base / "b" / "model.ckpt");
  fs::remove_all(base);
  report(9, ok,
         "identical config and seed reproduce the report byte-for-byte "
         "(timestamp header aside)");
}

}  // namespace

int main() {
  criterion_1();

  // Criteria 2, 4 and 8 share one default-scale generated dataset.
  const dvr::Dataset defaults = dvr::generate(dvr::SynthConfig{}).first;
  criterion_2(defaults);
  criterion_3();
  criterion_4(defaults);
  criteria_5_6_7();
  criterion_8(defaults);
  criterion_9();

  if (g_failures > 0) {
    fmt::print("{} criterion(s) failed\n", g_failures);
    return 1;
  }
  fmt::print("all criteria passed\n");
  return 0;
}
