#pragma once

#include <array>
#include <iosfwd>
#include <string>

#include "dvr/dataset.hpp"

namespace dvr {

/// Column mapping for delimiter-separated logs with a header row. Columns not
/// mentioned here become categorical features, keyed by their header name.
struct ColumnMapping {
  std::string user = "user";
  std::string video = "video";
  std::string watch_time = "watch_time";
  std::string duration = "duration";
  std::string timestamp = "timestamp";  // optional; row order used when absent
  std::string producer = "producer";    // optional
  char delimiter = ',';
  bool strict = true;  // strict: bad rows raise; lax: bad rows counted + dropped
};

struct ParseReport {
  std::size_t rows_total = 0;
  std::size_t rows_kept = 0;
  std::size_t rows_rejected = 0;
};

/// Parse a delimiter-separated log into a Dataset.
/// Throws ConfigError when a mandatory column is missing from the header and
/// ParseError (naming the row) on invalid fields in strict mode.
Dataset parse_log(std::istream& source, const ColumnMapping& mapping,
                  ParseReport* report = nullptr);

/// Keep records with min_d <= duration <= max_d. Idempotent.
Dataset filter_duration_range(const Dataset& ds, double min_d, double max_d,
                              double* fraction_removed = nullptr);

/// Stable timestamp split into (train, validation, test). Ratios must sum to
/// one within 1e-9; fractional counts round toward train. Ties on timestamp
/// break by (user_id, video_id).
std::array<Dataset, 3> split_by_time(const Dataset& ds, double train_ratio,
                                     double val_ratio, double test_ratio);

/// Canonical on-disk layout: user, video, producer, watch_time, duration,
/// timestamp, then feature columns in the order of the first record.
void write_dataset(std::ostream& out, const Dataset& ds, char delimiter = ',');

/// Reads the canonical layout back (header-driven, so any parse_log output
/// with the default mapping also round-trips).
Dataset read_dataset(std::istream& in, char delimiter = ',');

}  // namespace dvr
