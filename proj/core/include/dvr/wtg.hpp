#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "dvr/binstats.hpp"
#include "dvr/dataset.hpp"

namespace dvr {

/// Guards the standardization against degenerate (constant) bins.
inline constexpr double kSigmaFloor = 1e-8;

/// Standardized watch time. `valid` is false when the bin is under-populated
/// or degenerate; such labels are excluded from WTG-based metrics by default.
struct WtgLabel {
  double value = 0.0;
  int bin = -1;
  bool valid = false;
};

/// (watch_time - mu_b) / max(sigma_b, floor) for the record's duration bin.
/// Throws DataError when stats are unfitted or duration is out of range.
WtgLabel compute_wtg(double watch_time, double duration,
                     const BinStatistics& stats);

/// Exact inverse of compute_wtg on populated bins: mu_b + g * sigma_b.
/// Throws DataError on under-populated bins.
double wtg_to_watch_time(double g, double duration, const BinStatistics& stats);

struct AnnotatedDataset {
  Dataset data;
  std::vector<WtgLabel> labels;  // aligned with data.records
  std::size_t invalid_count = 0;
};

/// Labels every record; order preserved.
AnnotatedDataset annotate_dataset(const Dataset& ds, const BinStatistics& stats);

/// Canonical dataset layout plus trailing `wtg` and `wtg_valid` columns.
void write_annotated(std::ostream& out, const AnnotatedDataset& ds,
                     char delimiter = ',');

/// Online path: each event is scored with the statistics as they stood
/// *before* the event's own stream_update, then folded in. A first event in a
/// cold bin therefore comes out valid=false.
std::vector<WtgLabel> online_wtg_pipeline(
    std::span<const InteractionRecord> events, BinStatistics& stats);

}  // namespace dvr
