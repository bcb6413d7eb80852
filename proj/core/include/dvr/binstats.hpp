#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dvr/dataset.hpp"

namespace dvr {

/// Equal-width duration bins over [min_duration, max_duration]. The closed
/// upper boundary folds into the last bin.
struct DurationBinner {
  double min_duration = 5.0;
  double max_duration = 60.0;
  double bin_width = 1.0;

  int num_bins() const;
  bool in_range(double d) const {
    return d >= min_duration && d <= max_duration;
  }
  /// Throws DataError when d is outside [min_duration, max_duration].
  int bin_of(double d) const;

  bool operator==(const DurationBinner&) const = default;
};

enum class OutOfRangePolicy { skip_and_count, error };

/// Per-bin watch-time moments (population variance convention) with both a
/// batch fit and the recursive streaming update. Single writer, many readers.
struct BinStatistics {
  DurationBinner binner;
  std::vector<std::int64_t> count;
  std::vector<double> mean;
  std::vector<double> variance;  // population (divisor n)
  std::int64_t min_bin_count = 30;
  std::int64_t skipped_out_of_range = 0;
  OutOfRangePolicy out_of_range = OutOfRangePolicy::skip_and_count;

  explicit BinStatistics(const DurationBinner& b, std::int64_t min_count = 30);

  double sigma(int bin) const;
  bool underpopulated(int bin) const { return count[static_cast<std::size_t>(bin)] < min_bin_count; }
  bool fitted() const;  // any bin populated
  std::int64_t total_count() const;

  /// One event through the recursive update: count first, variance with the
  /// old mean, mean last.
  void stream_update(double watch_time, double duration);
};

/// Batch moments per bin. Throws DataError if any record is out of range.
BinStatistics fit_batch(const DurationBinner& binner,
                        std::span<const InteractionRecord> records);

/// Pooled statistics of two fits with identical geometry.
BinStatistics merge(const BinStatistics& a, const BinStatistics& b);

/// Versioned text snapshot: header, one row per bin (count + hexfloat
/// moments, so restore is bit-exact), trailing checksum.
std::string snapshot(const BinStatistics& stats);
BinStatistics restore(const std::string& bytes);

}  // namespace dvr
