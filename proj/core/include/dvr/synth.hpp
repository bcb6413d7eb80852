#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dvr/binstats.hpp"
#include "dvr/dataset.hpp"
#include "dvr/metrics.hpp"

namespace dvr {

/// Seeded generator for interaction logs with a planted duration bias: mean
/// watch time grows with duration while mean watch percentage falls, and
/// producers cluster into long/short uploaders.
struct SynthConfig {
  int n_users = 250;
  int n_videos = 2500;
  int n_producers = 100;
  int interactions_per_user = 400;
  double d_min = 5.0;
  double d_max = 60.0;
  int latent_dim = 8;
  double bias_exponent = 0.5;  // beta in (0,1)
  double base_fraction = 0.9;  // f0
  double noise_std = 0.1;
  std::uint64_t seed = 42;

  void validate() const;
};

struct SynthVideo {
  std::string id;
  double duration = 0.0;
  int producer = 0;
  std::vector<double> latent;
};

/// Everything needed to recompute noise-free expected watch times.
struct LatentGroundTruth {
  SynthConfig config;
  std::vector<std::vector<double>> user_latent;
  std::vector<SynthVideo> videos;
  std::vector<int> producer_planted_group;  // 0 short, 1 long

  /// Noise-free watch time of (user, video): clamp(a*f0*(d/d_min)^-beta, 0, 1.5)*d.
  double expected_watch_time(int user, int video) const;

  void save(std::ostream& out) const;
};

std::string synth_user_id(int u);
std::string synth_video_id(int v);
std::string synth_producer_id(int p);

/// Pure function of the config (seed included). Timestamps increase with
/// generation order; users are generated round-robin so a time split keeps
/// every user present on both sides.
std::pair<Dataset, LatentGroundTruth> generate(const SynthConfig& config);

/// Upper-bound reference: candidates ranked by the expected WTG implied by
/// the noise-free generative watch time and the fitted bin statistics.
RankedList oracle_best_ranking(int user,
                               std::span<const InteractionRecord> candidates,
                               std::span<const int> candidate_video_indices,
                               const LatentGroundTruth& gt,
                               const BinStatistics& stats);

}  // namespace dvr
