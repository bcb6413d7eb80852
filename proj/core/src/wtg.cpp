#include "dvr/wtg.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>

#include "dvr/errors.hpp"

namespace dvr {

namespace {

WtgLabel label_for_bin(double watch_time, int bin, const BinStatistics& stats) {
  const auto b = static_cast<std::size_t>(bin);
  WtgLabel label;
  label.bin = bin;
  const double sigma = stats.sigma(bin);
  label.value = (watch_time - stats.mean[b]) / std::max(sigma, kSigmaFloor);
  label.valid = stats.count[b] >= stats.min_bin_count && sigma >= kSigmaFloor;
  return label;
}

}  // namespace

WtgLabel compute_wtg(double watch_time, double duration,
                     const BinStatistics& stats) {
  if (!stats.fitted())
    throw DataError("compute_wtg: statistics are unfitted (all bins empty)");
  return label_for_bin(watch_time, stats.binner.bin_of(duration), stats);
}

double wtg_to_watch_time(double g, double duration,
                         const BinStatistics& stats) {
  const int bin = stats.binner.bin_of(duration);
  if (stats.underpopulated(bin))
    throw DataError(fmt::format(
        "wtg_to_watch_time: bin {} under-populated ({} < {})", bin,
        stats.count[static_cast<std::size_t>(bin)], stats.min_bin_count));
  return stats.mean[static_cast<std::size_t>(bin)] + g * stats.sigma(bin);
}

AnnotatedDataset annotate_dataset(const Dataset& ds,
                                  const BinStatistics& stats) {
  AnnotatedDataset out;
  out.data = ds;
  out.labels.reserve(ds.records.size());
  if (!ds.records.empty() && !stats.fitted())
    throw DataError("annotate_dataset: statistics are unfitted");
  for (const auto& r : ds.records) {
    const auto label = compute_wtg(r.watch_time, r.duration, stats);
    if (!label.valid) ++out.invalid_count;
    out.labels.push_back(label);
  }
  return out;
}

void write_annotated(std::ostream& out, const AnnotatedDataset& ds,
                     char delimiter) {
  const char d = delimiter;
  out << "user" << d << "video" << d << "producer" << d << "watch_time" << d
      << "duration" << d << "timestamp";
  if (!ds.data.records.empty())
    for (const auto& [field, _] : ds.data.records.front().features)
      out << d << field;
  out << d << "wtg" << d << "wtg_valid" << '\n';
  for (std::size_t i = 0; i < ds.data.records.size(); ++i) {
    const auto& r = ds.data.records[i];
    const auto& label = ds.labels[i];
    out << r.user_id << d << r.video_id << d << r.producer_id << d
        << fmt::format("{}", r.watch_time) << d
        << fmt::format("{}", r.duration) << d << r.timestamp;
    for (const auto& [_, value] : r.features) out << d << value;
    out << d << fmt::format("{}", label.value) << d << (label.valid ? 1 : 0)
        << '\n';
  }
}

std::vector<WtgLabel> online_wtg_pipeline(
    std::span<const InteractionRecord> events, BinStatistics& stats) {
  std::vector<WtgLabel> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    WtgLabel label;  // invalid by default (out-of-range or cold bin)
    if (stats.binner.in_range(e.duration)) {
      const int bin = stats.binner.bin_of(e.duration);
      if (stats.count[static_cast<std::size_t>(bin)] > 0)
        label = label_for_bin(e.watch_time, bin, stats);
      else
        label.bin = bin;
    }
    out.push_back(label);
    stats.stream_update(e.watch_time, e.duration);
  }
  return out;
}

}  // namespace dvr
