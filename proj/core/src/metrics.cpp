#include "dvr/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dvr/errors.hpp"

namespace dvr {

void sort_ranked(RankedList& list) {
  std::sort(list.items.begin(), list.items.end(),
            [](const RankedItem& a, const RankedItem& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.video_id < b.video_id;
            });
}

double wtg_at_k(const RankedList& list, int k, bool* truncated) {
  if (list.items.empty()) throw DataError("wtg_at_k: empty list");
  if (k < 1) throw ConfigError("wtg_at_k: k must be >= 1");
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k),
                                          list.items.size());
  if (truncated) *truncated = take < static_cast<std::size_t>(k);
  double sum = 0.0;
  for (std::size_t i = 0; i < take; ++i) sum += list.items[i].gt_wtg;
  return sum / static_cast<double>(take);
}

double dcwtg_at_k(const RankedList& list, int k) {
  if (list.items.empty()) throw DataError("dcwtg_at_k: empty list");
  if (k < 1) throw ConfigError("dcwtg_at_k: k must be >= 1");
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k),
                                          list.items.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < take; ++i)
    sum += list.items[i].gt_wtg / std::log2(2.0 + static_cast<double>(i));
  return sum;
}

std::int64_t bad_cases_at_k(std::span<const RankedList> lists, int k,
                            double threshold) {
  if (threshold <= 0) throw ConfigError("bad_cases_at_k: threshold must be > 0");
  std::int64_t count = 0;
  for (const auto& list : lists) {
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k),
                                            list.items.size());
    for (std::size_t i = 0; i < take; ++i)
      if (list.items[i].gt_watch_time < threshold) ++count;
  }
  return count;
}

double mean_absolute_error(std::span<const double> predictions,
                           std::span<const double> targets) {
  if (predictions.size() != targets.size() || predictions.empty())
    throw DataError("mae: length mismatch or empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    sum += std::abs(predictions[i] - targets[i]);
  return sum / static_cast<double>(predictions.size());
}

double root_mean_squared_error(std::span<const double> predictions,
                               std::span<const double> targets) {
  if (predictions.size() != targets.size() || predictions.empty())
    throw DataError("rmse: length mismatch or empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(predictions.size()));
}

double watch_time_at_k(std::span<const RankedList> lists, int k) {
  if (lists.empty()) return 0.0;
  double total = 0.0;
  for (const auto& list : lists) {
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k),
                                            list.items.size());
    for (std::size_t i = 0; i < take; ++i) total += list.items[i].gt_watch_time;
  }
  return total / static_cast<double>(lists.size());
}

double watch_time_at_k_total(std::span<const RankedList> lists, int k) {
  return watch_time_at_k(lists, k) * static_cast<double>(lists.size());
}

const char* to_string(ProducerGroup g) {
  return g == ProducerGroup::long_group ? "long" : "short";
}

std::map<std::string, ProducerGroup> producer_groups(const Dataset& ds) {
  // Mean duration per producer over distinct uploaded videos.
  std::map<std::string, std::pair<double, std::int64_t>> acc;  // sum, n
  std::map<std::string, bool> seen_video;
  for (const auto& r : ds.records) {
    if (r.producer_id.empty())
      throw DataError("producer_groups: record without producer id");
    auto [it, inserted] = seen_video.emplace(r.video_id, true);
    (void)it;
    if (!inserted) continue;
    auto& [sum, n] = acc[r.producer_id];
    sum += r.duration;
    ++n;
  }
  std::vector<std::pair<double, std::string>> means;
  means.reserve(acc.size());
  for (const auto& [producer, sn] : acc)
    means.emplace_back(sn.first / static_cast<double>(sn.second), producer);
  std::sort(means.begin(), means.end());

  std::map<std::string, ProducerGroup> groups;
  const std::size_t n_short = (means.size() + 1) / 2;  // median lands short
  for (std::size_t i = 0; i < means.size(); ++i)
    groups[means[i].second] =
        i < n_short ? ProducerGroup::short_group : ProducerGroup::long_group;
  return groups;
}

std::map<std::string, double> traffic_share(
    std::span<const RankedList> lists, int k,
    const std::map<std::string, ProducerGroup>& groups) {
  std::int64_t slots = 0;
  std::map<std::string, std::int64_t> hits{{"long", 0}, {"short", 0}};
  for (const auto& list : lists) {
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k),
                                            list.items.size());
    for (std::size_t i = 0; i < take; ++i) {
      const auto& item = list.items[i];
      if (item.producer_id.empty())
        throw DataError("traffic_share: item without producer id");
      const auto it = groups.find(item.producer_id);
      if (it == groups.end())
        throw DataError(
            fmt::format("traffic_share: producer '{}' not in groups",
                        item.producer_id));
      ++hits[to_string(it->second)];
      ++slots;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [group, n] : hits)
    out[group] = slots == 0 ? 0.0
                            : static_cast<double>(n) / static_cast<double>(slots);
  return out;
}

std::vector<BiasCurveRow> bias_curves(const Dataset& ds,
                                      std::span<const double> wtg_values,
                                      const DurationBinner& binner,
                                      std::span<const RankedList> lists,
                                      int k) {
  const auto m = static_cast<std::size_t>(binner.num_bins());
  std::vector<BiasCurveRow> rows(m);
  for (std::size_t b = 0; b < m; ++b) {
    rows[b].bin = static_cast<int>(b);
    rows[b].bin_low =
        binner.min_duration + binner.bin_width * static_cast<double>(b);
  }
  const bool have_wtg = wtg_values.size() == ds.records.size();
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    if (!binner.in_range(r.duration)) continue;
    auto& row = rows[static_cast<std::size_t>(binner.bin_of(r.duration))];
    ++row.n;
    row.mean_watch_time += r.watch_time;
    row.mean_watch_pct += r.watch_time / r.duration;
    if (have_wtg) row.mean_wtg += wtg_values[i];
  }
  for (auto& row : rows) {
    if (row.n == 0) continue;
    const auto n = static_cast<double>(row.n);
    row.mean_watch_time /= n;
    row.mean_watch_pct /= n;
    row.mean_wtg /= n;
  }
  for (const auto& list : lists) {
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k),
                                            list.items.size());
    for (std::size_t i = 0; i < take; ++i) {
      const auto& item = list.items[i];
      if (binner.in_range(item.duration))
        ++rows[static_cast<std::size_t>(binner.bin_of(item.duration))]
              .top_k_count;
    }
  }
  return rows;
}

namespace {

std::vector<double> ranks_with_ties(std::span<const double> x) {
  const auto n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw DataError("pearson: need two equal-length series");
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = ranks_with_ties(x);
  const auto ry = ranks_with_ties(y);
  return pearson(rx, ry);
}

EvalReport evaluate(std::span<const RankedList> lists, int k,
                    double bc_threshold,
                    const std::map<std::string, ProducerGroup>& groups) {
  EvalReport report;
  report.k = k;
  report.bc_threshold = bc_threshold;
  report.users_evaluated = lists.size();

  double sum_wtg = 0.0, sum_dcwtg = 0.0;
  std::vector<double> preds, targets;
  for (const auto& list : lists) {
    bool truncated = false;
    sum_wtg += wtg_at_k(list, k, &truncated);
    sum_dcwtg += dcwtg_at_k(list, k);
    if (truncated) ++report.users_truncated;
    for (const auto& item : list.items) {
      preds.push_back(item.score);
      targets.push_back(item.gt_wtg);
    }
  }
  const auto n_users = static_cast<double>(lists.size());
  report.wtg_at_k = lists.empty() ? 0.0 : sum_wtg / n_users;
  report.dcwtg_at_k = lists.empty() ? 0.0 : sum_dcwtg / n_users;
  report.bc_at_k = bad_cases_at_k(lists, k, bc_threshold);
  report.watch_time_at_k = watch_time_at_k(lists, k);
  report.watch_time_at_k_total = watch_time_at_k_total(lists, k);
  if (!preds.empty()) {
    report.mae = mean_absolute_error(preds, targets);
    report.rmse = root_mean_squared_error(preds, targets);
    report.error_target_space = "wtg";
  }
  if (!groups.empty()) report.traffic = traffic_share(lists, k, groups);
  return report;
}

}  // namespace dvr
