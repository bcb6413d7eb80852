#include "dvr/synth.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>

#include "dvr/errors.hpp"
#include "dvr/rng.hpp"
#include "dvr/wtg.hpp"

namespace dvr {

void SynthConfig::validate() const {
  if (n_users <= 0 || n_videos <= 0 || n_producers <= 0 ||
      interactions_per_user <= 0 || latent_dim <= 0)
    throw ConfigError("synth: counts must be positive");
  if (!(d_min > 0 && d_min < d_max))
    throw ConfigError("synth: need 0 < d_min < d_max");
  if (!(bias_exponent > 0.0 && bias_exponent < 1.0))
    throw ConfigError("synth: bias exponent must lie strictly in (0, 1)");
  if (base_fraction <= 0 || noise_std < 0)
    throw ConfigError("synth: base fraction must be > 0, noise std >= 0");
}

std::string synth_user_id(int u) { return fmt::format("u{:06d}", u); }
std::string synth_video_id(int v) { return fmt::format("v{:06d}", v); }
std::string synth_producer_id(int p) { return fmt::format("p{:04d}", p); }

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double affinity(const LatentGroundTruth& gt, int user, int video) {
  const double z = dot(gt.user_latent[static_cast<std::size_t>(user)],
                       gt.videos[static_cast<std::size_t>(video)].latent) /
                   std::sqrt(static_cast<double>(gt.config.latent_dim));
  return 1.0 / (1.0 + std::exp(-z));
}

double noise_free_fraction(const LatentGroundTruth& gt, int user, int video) {
  const auto& c = gt.config;
  const double d = gt.videos[static_cast<std::size_t>(video)].duration;
  const double p = affinity(gt, user, video) * c.base_fraction *
                   std::pow(d / c.d_min, -c.bias_exponent);
  return std::clamp(p, 0.0, 1.5);
}

}  // namespace

double LatentGroundTruth::expected_watch_time(int user, int video) const {
  return noise_free_fraction(*this, user, video) *
         videos[static_cast<std::size_t>(video)].duration;
}

std::pair<Dataset, LatentGroundTruth> generate(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);

  LatentGroundTruth gt;
  gt.config = config;

  // Producer mean durations in two overlapping clusters (short, long).
  const double span = config.d_max - config.d_min;
  const double mid = config.d_min + config.d_max;
  const double cluster_std = 0.1 * span;
  std::vector<double> producer_mean(static_cast<std::size_t>(config.n_producers));
  gt.producer_planted_group.resize(static_cast<std::size_t>(config.n_producers));
  for (int p = 0; p < config.n_producers; ++p) {
    const bool long_group = p >= config.n_producers / 2;
    gt.producer_planted_group[static_cast<std::size_t>(p)] = long_group ? 1 : 0;
    producer_mean[static_cast<std::size_t>(p)] =
        rng.normal(long_group ? 0.7 * mid : 0.3 * mid, cluster_std);
  }

  gt.user_latent.resize(static_cast<std::size_t>(config.n_users));
  for (auto& z : gt.user_latent) {
    z.resize(static_cast<std::size_t>(config.latent_dim));
    for (auto& x : z) x = rng.normal();
  }

  // Uniform integer-second durations; producer picked by proximity of the
  // video's duration to the producer's planted mean.
  gt.videos.resize(static_cast<std::size_t>(config.n_videos));
  std::vector<double> weights(static_cast<std::size_t>(config.n_producers));
  for (int v = 0; v < config.n_videos; ++v) {
    auto& video = gt.videos[static_cast<std::size_t>(v)];
    video.id = synth_video_id(v);
    video.duration = static_cast<double>(
        rng.uniform_int(static_cast<std::int64_t>(config.d_min),
                        static_cast<std::int64_t>(config.d_max)));
    for (int p = 0; p < config.n_producers; ++p) {
      const double delta = video.duration - producer_mean[static_cast<std::size_t>(p)];
      weights[static_cast<std::size_t>(p)] =
          std::exp(-delta * delta / (2.0 * cluster_std * cluster_std));
    }
    video.producer = static_cast<int>(rng.discrete(weights));
    video.latent.resize(static_cast<std::size_t>(config.latent_dim));
    for (auto& x : video.latent) x = rng.normal();
  }

  Dataset ds;
  ds.records.reserve(static_cast<std::size_t>(config.n_users) *
                     static_cast<std::size_t>(config.interactions_per_user));
  std::int64_t ts = 0;
  for (int round = 0; round < config.interactions_per_user; ++round) {
    for (int u = 0; u < config.n_users; ++u) {
      const int v = static_cast<int>(rng.uniform_int(0, config.n_videos - 1));
      const auto& video = gt.videos[static_cast<std::size_t>(v)];
      double p = noise_free_fraction(gt, u, v);
      if (config.noise_std > 0)
        p = std::clamp(p + rng.normal(0.0, config.noise_std), 0.0, 1.5);

      InteractionRecord rec;
      rec.user_id = synth_user_id(u);
      rec.video_id = video.id;
      rec.producer_id = synth_producer_id(video.producer);
      rec.duration = video.duration;
      rec.watch_time = p * video.duration;
      rec.timestamp = ts++;
      ds.records.push_back(std::move(rec));
    }
  }
  return {std::move(ds), std::move(gt)};
}

void LatentGroundTruth::save(std::ostream& out) const {
  out << fmt::format(
      "synth_ground_truth v1\nseed {}\nusers {}\nvideos {}\nproducers {}\n"
      "latent_dim {}\nbeta {}\nf0 {}\nnoise_std {}\n",
      config.seed, config.n_users, config.n_videos, config.n_producers,
      config.latent_dim, config.bias_exponent, config.base_fraction,
      config.noise_std);
  out << "video,duration,producer,planted_group\n";
  for (const auto& v : videos)
    out << fmt::format("{},{},{},{}\n", v.id, v.duration,
                       synth_producer_id(v.producer),
                       producer_planted_group[static_cast<std::size_t>(v.producer)] == 1
                           ? "long"
                           : "short");
}

RankedList oracle_best_ranking(int user,
                               std::span<const InteractionRecord> candidates,
                               std::span<const int> candidate_video_indices,
                               const LatentGroundTruth& gt,
                               const BinStatistics& stats) {
  if (candidates.size() != candidate_video_indices.size())
    throw DataError("oracle_best_ranking: candidate index mismatch");
  RankedList list;
  list.user_id = synth_user_id(user);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& rec = candidates[i];
    const double expected =
        gt.expected_watch_time(user, candidate_video_indices[i]);
    const double score = compute_wtg(expected, rec.duration, stats).value;
    const double gt_wtg = compute_wtg(rec.watch_time, rec.duration, stats).value;
    list.items.push_back(RankedItem{rec.video_id, score, rec.watch_time, gt_wtg,
                                    rec.duration, rec.producer_id});
  }
  sort_ranked(list);
  return list;
}

}  // namespace dvr
