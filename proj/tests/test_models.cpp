#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <span>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dvr/errors.hpp"
#include "dvr/ingest.hpp"
#include "dvr/model.hpp"
#include "dvr/rng.hpp"
#include "dvr/synth.hpp"

using namespace dvr;

namespace {

InteractionRecord rec(const std::string& u, const std::string& v, double wt,
                      double dur, const std::string& producer = "p1") {
  InteractionRecord r;
  r.user_id = u;
  r.video_id = v;
  r.producer_id = producer;
  r.watch_time = wt;
  r.duration = dur;
  return r;
}

Dataset tiny_dataset() {
  Dataset ds;
  ds.records = {rec("u1", "v1", 3.0, 10.0), rec("u2", "v2", 5.0, 20.0),
                rec("u1", "v3", 7.0, 30.0), rec("u3", "v2", 2.0, 20.0),
                rec("u2", "v4", 9.0, 40.0)};
  return ds;
}

FeatureSpace tiny_space(bool include_duration = true) {
  return FeatureSpace::build(tiny_dataset(), include_duration);
}

// Explicit O(n^2) factorization machine forward, the independent oracle for
// the sum-of-squares identity.
double fm_pairwise(std::span<const double> theta, std::span<const int> active,
                   int n_indices, int embed_dim) {
  double y = theta[0];
  for (int a : active) y += theta[1 + a];
  const double* v = theta.data() + 1 + n_indices;
  for (std::size_t i = 0; i < active.size(); ++i)
    for (std::size_t j = i + 1; j < active.size(); ++j) {
      double dot = 0.0;
      for (int f = 0; f < embed_dim; ++f)
        dot += v[active[i] * embed_dim + f] * v[active[j] * embed_dim + f];
      y += dot;
    }
  return y;
}

// Small annotated splits derived from a generated log, shared by the
// training-loop tests.
struct SmallTask {
  BinStatistics stats{DurationBinner{5.0, 60.0, 1.0}, 5};
  AnnotatedDataset train, val, test;
  Dataset train_raw;
};

SmallTask small_task(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n_users = 40;
  cfg.n_videos = 200;
  cfg.n_producers = 10;
  cfg.interactions_per_user = 60;
  cfg.seed = seed;
  const Dataset ds = generate(cfg).first;
  auto splits = split_by_time(ds, 0.8, 0.1, 0.1);

  SmallTask task;
  task.stats = fit_batch(task.stats.binner, splits[0].records);
  task.stats.min_bin_count = 5;
  task.train = annotate_dataset(splits[0], task.stats);
  task.val = annotate_dataset(splits[1], task.stats);
  task.test = annotate_dataset(splits[2], task.stats);
  task.train_raw = splits[0];
  return task;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("fm forward equals the explicit pairwise sum") {
  const FeatureSpace space = tiny_space();
  ModelConfig mc;
  mc.embed_dim = 4;
  const Backbone fm(mc, space.total_indices(), static_cast<int>(space.field_count()));

  Rng rng(101);
  std::vector<double> theta(fm.param_count());
  for (int trial = 0; trial < 50; ++trial) {
    for (auto& p : theta) p = rng.normal(0.0, 1.0);
    for (const auto& r : tiny_dataset().records) {
      const auto active = space.encode(r);
      const double fast = fm.forward(theta, active);
      const double slow =
          fm_pairwise(theta, active, space.total_indices(), mc.embed_dim);
      CHECK(std::fabs(fast - slow) <=
            1e-10 * std::max(1.0, std::fabs(slow)));
    }
  }
}

TEST_CASE("fm degenerate forwards") {
  const FeatureSpace space = tiny_space();
  ModelConfig mc;
  mc.embed_dim = 3;
  const Backbone fm(mc, space.total_indices(), static_cast<int>(space.field_count()));
  std::vector<double> theta(fm.param_count(), 0.0);

  // All-zero parameters score zero everywhere.
  const auto active = space.encode(tiny_dataset().records[0]);
  CHECK(fm.forward(theta, active) == 0.0);

  // Single active feature: w0 + w_i, no pairwise term.
  theta[0] = 0.25;
  theta[1 + 2] = 1.5;
  const std::vector<int> solo{2};
  CHECK(fm.forward(theta, solo) == doctest::Approx(1.75));

  // Two active features with zero linear part: exactly <V_i, V_j>.
  std::fill(theta.begin(), theta.end(), 0.0);
  const std::size_t vbase = 1 + static_cast<std::size_t>(space.total_indices());
  double dot = 0.0;
  for (int f = 0; f < mc.embed_dim; ++f) {
    theta[vbase + 0 * mc.embed_dim + f] = 0.5 + f;
    theta[vbase + 3 * mc.embed_dim + f] = 2.0 - f;
    dot += (0.5 + f) * (2.0 - f);
  }
  const std::vector<int> pair{0, 3};
  CHECK(fm.forward(theta, pair) == doctest::Approx(dot));
}

TEST_CASE("psi is a plain affine head") {
  DvrModel model(tiny_space(), ModelConfig{}, TargetKind::wtg, TrainConfig{});
  model.set_psi(1.0, 0.0);
  CHECK(model.psi_forward(3.7) == doctest::Approx(3.7));
  model.set_psi(0.0, 4.0);
  CHECK(model.psi_forward(-100.0) == doctest::Approx(4.0));
  model.set_psi(2.0, 1.0);
  CHECK(model.psi_forward(3.0) == doctest::Approx(7.0));
}

TEST_CASE("losses are per-head mean squared errors") {
  ModelConfig mc;
  mc.embed_dim = 2;
  TrainConfig tc;
  tc.normalize_duration = false;
  DvrModel model(tiny_space(), mc, TargetKind::wtg, tc);
  for (auto& p : model.phi_params()) p = 0.0;
  model.set_psi(0.0, 0.0);

  const auto active = model.space().encode(tiny_dataset().records[0]);
  Sample s;
  s.active = active;
  s.target = 0.0;
  s.duration = 0.0;
  // Perfect predictions (everything zero).
  auto [lw, ld] = model.losses(std::vector<Sample>{s});
  CHECK(lw == doctest::Approx(0.0));
  CHECK(ld == doctest::Approx(0.0));

  // Single sample with prediction 1 via the bias and target 0.
  model.phi_params()[0] = 1.0;
  std::tie(lw, ld) = model.losses(std::vector<Sample>{s});
  CHECK(lw == doctest::Approx(1.0));

  // Errors {1, -1} average to MSE 1.
  Sample s2 = s;
  s2.target = 2.0;
  std::tie(lw, ld) = model.losses(std::vector<Sample>{s, s2});
  CHECK(lw == doctest::Approx(1.0));

  CHECK_THROWS_AS(model.losses({}), DataError);
}

TEST_CASE("analytic gradients match central finite differences") {
  const Dataset data = tiny_dataset();
  for (int seed = 1; seed <= 50; ++seed) {
    for (const BackboneKind kind : {BackboneKind::fm, BackboneKind::mlp}) {
      ModelConfig mc;
      mc.kind = kind;
      mc.embed_dim = 2;
      mc.hidden = {3};
      TrainConfig tc;
      tc.alpha = 0.3;
      tc.seed = static_cast<std::uint64_t>(seed);
      DvrModel model(tiny_space(), mc, TargetKind::wtg, tc);

      Rng rng(static_cast<std::uint64_t>(seed) * 977 + 13);
      for (auto& p : model.phi_params()) p = rng.normal(0.0, 0.5);
      const double pa = rng.normal(0.0, 0.5), pb = rng.normal(0.0, 0.5);
      model.set_psi(pa, pb);

      std::vector<Sample> batch;
      for (const auto& r : data.records) {
        Sample s;
        s.active = model.space().encode(r);
        s.target = rng.normal(0.0, 1.0);
        s.duration = 0.1 + 0.8 * rng.uniform();  // away from the clamp kinks
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
      // Psi follows alpha * L_D alone.
      for (int which = 0; which < 2; ++which) {
        auto at = [&](double da, double db) {
          model.set_psi(pa + da, pb + db);
          const double ld = model.losses(batch).second;
          model.set_psi(pa, pb);
          return tc.alpha * ld;
        };
        numeric[P + which] = which == 0 ? (at(h, 0) - at(-h, 0)) / (2.0 * h)
                                        : (at(0, h) - at(0, -h)) / (2.0 * h);
      }

      double diff2 = 0.0, norm2 = 0.0;
      for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double d = analytic[i] - numeric[i];
        diff2 += d * d;
        norm2 += analytic[i] * analytic[i] + numeric[i] * numeric[i];
      }
      CHECK(std::sqrt(diff2) <= 1e-5 * (std::sqrt(norm2) + 1e-12));
    }
  }
}

TEST_CASE("one optimizer step matches the hand-computed adaptive update") {
  ModelConfig mc;
  mc.embed_dim = 2;
  TrainConfig tc;
  tc.alpha = 0.0;
  tc.learning_rate = 0.01;
  DvrModel model(tiny_space(), mc, TargetKind::wtg, tc);
  for (auto& p : model.phi_params()) p = 0.0;
  model.set_psi(0.0, 0.0);

  Sample s;
  s.active = model.space().encode(tiny_dataset().records[0]);
  s.target = 1.5;
  s.duration = 10.0;
  const auto [lw, ld] = model.train_step(std::vector<Sample>{s});
  CHECK(lw == doctest::Approx(2.25));

  // With zero parameters the only nonzero gradients are the bias and the
  // active linear weights, each g = 2 * (0 - 1.5) = -3. The first adaptive
  // step is lr * g / (|g| + eps) after bias correction.
  const double g = -3.0;
  const double expected = -tc.learning_rate * g / (std::fabs(g) + 1e-8);
  CHECK(model.phi_params()[0] == doctest::Approx(expected).epsilon(1e-12));
  for (int a : s.active)
    CHECK(model.phi_params()[1 + a] == doctest::Approx(expected).epsilon(1e-12));

  // Parameters with zero gradient do not move; neither does the idle head.
  const std::size_t vbase = 1 + static_cast<std::size_t>(model.space().total_indices());
  CHECK(model.phi_params()[vbase] == 0.0);
  CHECK(model.psi_a() == 0.0);
  CHECK(model.psi_b() == 0.0);
  (void)ld;
}

TEST_CASE("alpha zero is bitwise plain regression") {
  ModelConfig mc;
  mc.embed_dim = 4;
  TrainConfig tc;
  tc.alpha = 0.0;
  tc.seed = 7;

  DvrModel a(tiny_space(), mc, TargetKind::wtg, tc);
  DvrModel b(tiny_space(), mc, TargetKind::wtg, tc);
  // Different Psi values must not leak into Phi when alpha is zero.
  b.set_psi(5.0, -3.0);

  Rng rng(55);
  std::vector<Sample> batch;
  for (const auto& r : tiny_dataset().records) {
    Sample s;
    s.active = a.space().encode(r);
    s.target = rng.normal();
    s.duration = r.duration;
    batch.push_back(s);
  }
  for (int step = 0; step < 25; ++step) {
    a.train_step(batch);
    b.train_step(batch);
  }
  const auto pa = a.phi_params();
  const auto pb = b.phi_params();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
  // And Psi itself never moved.
  CHECK(b.psi_a() == 5.0);
  CHECK(b.psi_b() == -3.0);
}

TEST_CASE("without the duration feature predictions ignore duration exactly") {
  DvrModel model(tiny_space(false), ModelConfig{}, TargetKind::wtg,
                 TrainConfig{});
  for (const auto& r : tiny_dataset().records) {
    InteractionRecord shifted = r;
    shifted.duration += 17.25;
    CHECK(model.predict(r) == model.predict(shifted));
  }
}

TEST_CASE("training is deterministic per seed") {
  const SmallTask task = small_task(3);
  ModelConfig mc;
  mc.embed_dim = 4;
  TrainConfig tc;
  tc.max_epochs = 3;

  DvrModel a(FeatureSpace::build(task.train_raw, false), mc, TargetKind::wtg, tc);
  DvrModel b(FeatureSpace::build(task.train_raw, false), mc, TargetKind::wtg, tc);
  const TrainHistory ha = a.train(task.train, task.val);
  const TrainHistory hb = b.train(task.train, task.val);
  CHECK(ha.best_epoch == hb.best_epoch);
  CHECK(ha.val_l_wtg == hb.val_l_wtg);
  const auto pa = a.phi_params();
  const auto pb = b.phi_params();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("validation loss improves from the first epoch to the best") {
  const SmallTask task = small_task(5);
  ModelConfig mc;
  mc.embed_dim = 8;
  TrainConfig tc;
  tc.max_epochs = 10;
  DvrModel model(FeatureSpace::build(task.train_raw, false), mc,
                 TargetKind::wtg, tc);
  const TrainHistory h = model.train(task.train, task.val);
  REQUIRE(h.best_epoch >= 0);
  CHECK(h.val_l_wtg[static_cast<std::size_t>(h.best_epoch)] <= h.val_l_wtg[0]);
}

TEST_CASE("patience zero stops after the first non-improving epoch") {
  const SmallTask task = small_task(5);
  TrainConfig tc;
  tc.max_epochs = 50;
  tc.patience = 0;
  DvrModel model(FeatureSpace::build(task.train_raw, false), ModelConfig{},
                 TargetKind::wtg, tc);
  const TrainHistory h = model.train(task.train, task.val);
  // Every completed epoch improved except, at most, the final one.
  const auto& val = h.val_l_wtg;
  for (std::size_t i = 1; i + 1 < val.size(); ++i) CHECK(val[i] < val[i - 1]);
  if (val.size() < static_cast<std::size_t>(tc.max_epochs))
    CHECK(val.back() >= val[val.size() - 2]);
}

TEST_CASE("watch-time models report predictions in seconds") {
  const SmallTask task = small_task(9);
  TrainConfig tc;
  tc.max_epochs = 3;
  DvrModel model(FeatureSpace::build(task.train_raw, true), ModelConfig{},
                 TargetKind::watch_time, tc);
  model.train(task.train, task.val);
  // The internal target standardization must stay an implementation detail:
  // predictions come back on the scale of the raw labels.
  CHECK(model.target_scale() > 0.0);
  double mean_pred = 0.0, mean_wt = 0.0;
  for (const auto& r : task.train_raw.records) {
    mean_pred += model.predict(r);
    mean_wt += r.watch_time;
  }
  mean_pred /= static_cast<double>(task.train_raw.size());
  mean_wt /= static_cast<double>(task.train_raw.size());
  CHECK(std::fabs(mean_pred - mean_wt) < 0.5 * mean_wt);
}

TEST_CASE("checkpoints round-trip the full model") {
  const SmallTask task = small_task(11);
  TrainConfig tc;
  tc.max_epochs = 2;
  DvrModel model(FeatureSpace::build(task.train_raw, true), ModelConfig{},
                 TargetKind::watch_time, tc);
  model.train(task.train, task.val);

  std::stringstream buf;
  model.save(buf);
  const DvrModel back = DvrModel::load(buf);
  CHECK(back.target() == model.target());
  CHECK(back.target_shift() == model.target_shift());
  CHECK(back.target_scale() == model.target_scale());
  CHECK(back.psi_a() == model.psi_a());
  CHECK(back.psi_b() == model.psi_b());
  for (const auto& r : task.test.data.records)
    CHECK(back.predict(r) == model.predict(r));
}

TEST_CASE("corrupt checkpoints are rejected") {
  std::istringstream junk("dvr_model v9\n");
  CHECK_THROWS_AS(DvrModel::load(junk), DataError);
}

TEST_CASE("ranking orders by score with video-id tie breaks") {
  DvrModel model(tiny_space(), ModelConfig{}, TargetKind::wtg, TrainConfig{});
  for (auto& p : model.phi_params()) p = 0.0;  // constant scorer

  const Dataset ds = tiny_dataset();
  const std::vector<WtgLabel> labels(ds.size());
  const RankedList list = rank_for_user(model, "u1", ds.records, labels);
  for (std::size_t i = 1; i < list.items.size(); ++i)
    CHECK(list.items[i - 1].video_id <= list.items[i].video_id);

  CHECK_THROWS_AS(rank_for_user(model, "u1", {}, {}), DataError);
}

TEST_CASE("dvr-minus converts predicted watch time before sorting") {
  const SmallTask task = small_task(13);
  TrainConfig tc;
  tc.max_epochs = 2;
  DvrModel model(FeatureSpace::build(task.train_raw, true), ModelConfig{},
                 TargetKind::watch_time, tc);
  model.train(task.train, task.val);

  // Distinct video ids so each ranked item maps back to one source record.
  std::vector<InteractionRecord> candidates;
  std::vector<WtgLabel> labels;
  for (std::size_t i = 0;
       i < task.test.data.records.size() && candidates.size() < 12; ++i) {
    const auto& r = task.test.data.records[i];
    if (std::any_of(candidates.begin(), candidates.end(),
                    [&](const auto& c) { return c.video_id == r.video_id; }))
      continue;
    candidates.push_back(r);
    labels.push_back(task.test.labels[i]);
  }
  REQUIRE(candidates.size() == 12);
  const RankedList converted =
      rank_for_user(model, "u", candidates, labels, &task.stats);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& item = converted.items[i];
    // Each score must be the standardized form of the raw prediction.
    const auto& source = *std::find_if(
        candidates.begin(), candidates.end(),
        [&](const InteractionRecord& r) { return r.video_id == item.video_id; });
    CHECK(item.score ==
          doctest::Approx(
              compute_wtg(model.predict(source), source.duration, task.stats)
                  .value));
  }
}

TEST_CASE("long_rec ranks by duration descending") {
  Dataset ds;
  ds.records = {rec("u", "va", 1.0, 10.0), rec("u", "vb", 1.0, 60.0),
                rec("u", "vc", 1.0, 30.0)};
  const std::vector<WtgLabel> labels(3);
  const RankedList list = baseline_long_rec("u", ds.records, labels);
  CHECK(list.items[0].video_id == "vb");
  CHECK(list.items[1].video_id == "vc");
  CHECK(list.items[2].video_id == "va");

  // Equal durations fall back to video-id order.
  for (auto& r : ds.records) r.duration = 15.0;
  const RankedList tied = baseline_long_rec("u", ds.records, labels);
  CHECK(tied.items[0].video_id == "va");
  CHECK(tied.items[2].video_id == "vc");
}

TEST_CASE("random_rec is a seeded uniform permutation") {
  Dataset ds;
  ds.records = {rec("u", "va", 1.0, 10.0), rec("u", "vb", 1.0, 20.0),
                rec("u", "vc", 1.0, 30.0)};
  const std::vector<WtgLabel> labels(3);

  const RankedList once = baseline_random_rec("u", ds.records, labels, 99);
  const RankedList again = baseline_random_rec("u", ds.records, labels, 99);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(once.items[i].video_id == again.items[i].video_id);

  Dataset single;
  single.records = {rec("u", "va", 1.0, 10.0)};
  const std::vector<WtgLabel> one_label(1);
  CHECK(baseline_random_rec("u", single.records, one_label, 1).items.size() == 1);

  // All six orderings of three items appear with frequency 1/6 +- 0.02.
  std::map<std::string, int> counts;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const RankedList list =
        baseline_random_rec("u", ds.records, labels, 1000 + t);
    std::string perm;
    for (const auto& item : list.items) perm += item.video_id[1];
    counts[perm] += 1;
  }
  CHECK(counts.size() == 6);
  for (const auto& [_, n] : counts)
    CHECK(std::fabs(n / static_cast<double>(trials) - 1.0 / 6.0) < 0.02);
}

}  // TEST_SUITE
