#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "dvr/binstats.hpp"
#include "dvr/dataset.hpp"

namespace dvr {

struct RankedItem {
  std::string video_id;
  double score = 0.0;
  double gt_watch_time = 0.0;
  double gt_wtg = 0.0;
  double duration = 0.0;
  std::string producer_id;
};

/// One user's recommendation list, scores non-increasing, score ties broken
/// by ascending video_id.
struct RankedList {
  std::string user_id;
  std::vector<RankedItem> items;
};

/// Enforces the documented order (descending score, ascending video_id).
void sort_ranked(RankedList& list);

/// Mean ground-truth WTG over the top k (Eq. "average of the groundtruth
/// WTG"). Fewer than k items: average over available, *truncated set.
double wtg_at_k(const RankedList& list, int k, bool* truncated = nullptr);

/// Position-discounted cumulative WTG with weight 1/log2(1+i).
double dcwtg_at_k(const RankedList& list, int k);

/// Count over all users of top-k items with ground-truth watch time strictly
/// below the threshold (default 2 s; 2.0 s exactly is not a bad case).
std::int64_t bad_cases_at_k(std::span<const RankedList> lists, int k,
                            double threshold = 2.0);

double mean_absolute_error(std::span<const double> predictions,
                           std::span<const double> targets);
double root_mean_squared_error(std::span<const double> predictions,
                               std::span<const double> targets);

/// Per-user sum of ground-truth watch time over top-k, averaged across users.
double watch_time_at_k(std::span<const RankedList> lists, int k);
/// The same quantity summed globally instead of averaged (the report emits
/// both aggregations).
double watch_time_at_k_total(std::span<const RankedList> lists, int k);

enum class ProducerGroup { short_group, long_group };
const char* to_string(ProducerGroup g);

/// Median split of producers by mean uploaded-video duration. Odd count: the
/// median producer goes to the short group. Group sizes differ by at most 1.
std::map<std::string, ProducerGroup> producer_groups(const Dataset& ds);

/// Fraction of top-k recommendation slots per producer group; sums to 1.
/// Keys: "long", "short". Throws DataError when producer ids are missing.
std::map<std::string, double> traffic_share(
    std::span<const RankedList> lists, int k,
    const std::map<std::string, ProducerGroup>& groups);

struct BiasCurveRow {
  int bin = 0;
  double bin_low = 0.0;  // duration at the bin's lower edge
  std::int64_t n = 0;
  double mean_watch_time = 0.0;
  double mean_watch_pct = 0.0;
  double mean_wtg = 0.0;
  std::int64_t top_k_count = 0;  // recommended items landing in this bin
};

/// Per-bin dataset curves plus the top-k duration histogram of the given
/// lists (pass an empty span to skip the histogram).
std::vector<BiasCurveRow> bias_curves(const Dataset& ds,
                                      std::span<const double> wtg_values,
                                      const DurationBinner& binner,
                                      std::span<const RankedList> lists,
                                      int k);

/// Rank correlation (ties get average ranks).
double spearman(std::span<const double> x, std::span<const double> y);
double pearson(std::span<const double> x, std::span<const double> y);

/// Per-model metric bundle for one evaluation run.
struct EvalReport {
  int k = 10;
  double bc_threshold = 2.0;
  std::string stats_scope;  // "train" or "all"
  std::size_t users_evaluated = 0;
  std::size_t users_truncated = 0;  // fewer than k candidates
  double wtg_at_k = 0.0;
  double dcwtg_at_k = 0.0;
  std::int64_t bc_at_k = 0;
  double mae = 0.0;
  double rmse = 0.0;
  std::string error_target_space;  // "watch_time" or "wtg"
  double watch_time_at_k = 0.0;        // per-user average
  double watch_time_at_k_total = 0.0;  // global sum
  std::map<std::string, double> traffic;  // may be empty (no producer ids)
};

/// Full per-user evaluation over candidate lists.
EvalReport evaluate(std::span<const RankedList> lists, int k,
                    double bc_threshold,
                    const std::map<std::string, ProducerGroup>& groups);

}  // namespace dvr
