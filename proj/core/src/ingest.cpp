#include "dvr/ingest.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "dvr/errors.hpp"

namespace dvr {

const char* to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::validation: return "validation";
    case SplitTag::test: return "test";
    case SplitTag::unsplit: return "unsplit";
  }
  return "unsplit";
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

bool parse_int64(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtoll(s.c_str(), &end, 10);
  return end == s.c_str() + s.size();
}

// Shortest round-trip formatting for numeric fields.
std::string num(double x) {
  if (x == std::floor(x) && std::abs(x) < 1e15)
    return fmt::format("{}", static_cast<std::int64_t>(x));
  return fmt::format("{}", x);
}

}  // namespace

Dataset parse_log(std::istream& source, const ColumnMapping& mapping,
                  ParseReport* report) {
  std::string line;
  if (!std::getline(source, line))
    throw ParseError("empty input: no header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_line(line, mapping.delimiter);
  std::unordered_map<std::string, int> col;
  for (std::size_t i = 0; i < header.size(); ++i)
    col[header[i]] = static_cast<int>(i);

  auto require = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end())
      throw ConfigError(fmt::format("missing mandatory column '{}'", name));
    return it->second;
  };
  auto optional = [&](const std::string& name) {
    auto it = col.find(name);
    return it == col.end() ? -1 : it->second;
  };

  const int c_user = require(mapping.user);
  const int c_video = require(mapping.video);
  const int c_wt = require(mapping.watch_time);
  const int c_dur = require(mapping.duration);
  const int c_ts = optional(mapping.timestamp);
  const int c_prod = optional(mapping.producer);

  std::vector<int> feature_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const int ci = static_cast<int>(i);
    if (ci != c_user && ci != c_video && ci != c_wt && ci != c_dur &&
        ci != c_ts && ci != c_prod)
      feature_cols.push_back(ci);
  }

  Dataset ds;
  ParseReport rep;
  std::size_t row_number = 1;  // header was row 1
  while (std::getline(source, line)) {
    ++row_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++rep.rows_total;

    const auto cells = split_line(line, mapping.delimiter);
    auto fail = [&](const std::string& what) {
      if (mapping.strict)
        throw ParseError(fmt::format("row {}: {}", row_number, what));
      ++rep.rows_rejected;
    };

    if (cells.size() != header.size()) {
      fail(fmt::format("expected {} columns, got {}", header.size(),
                       cells.size()));
      continue;
    }

    InteractionRecord rec;
    rec.user_id = cells[c_user];
    rec.video_id = cells[c_video];
    if (c_prod >= 0) rec.producer_id = cells[c_prod];

    if (!parse_double(cells[c_wt], rec.watch_time)) {
      fail(fmt::format("non-numeric watch_time '{}'", cells[c_wt]));
      continue;
    }
    if (!parse_double(cells[c_dur], rec.duration)) {
      fail(fmt::format("non-numeric duration '{}'", cells[c_dur]));
      continue;
    }
    if (c_ts >= 0) {
      if (!parse_int64(cells[c_ts], rec.timestamp)) {
        fail(fmt::format("non-numeric timestamp '{}'", cells[c_ts]));
        continue;
      }
    } else {
      rec.timestamp = static_cast<std::int64_t>(rep.rows_total) - 1;
    }
    if (rec.duration <= 0.0 || rec.watch_time < 0.0 || rec.timestamp < 0) {
      fail("invariant violation (duration > 0, watch_time >= 0, timestamp >= 0)");
      continue;
    }

    for (int fc : feature_cols)
      rec.features.emplace_back(header[static_cast<std::size_t>(fc)], cells[fc]);

    ds.records.push_back(std::move(rec));
    ++rep.rows_kept;
  }

  if (report) *report = rep;
  return ds;
}

Dataset filter_duration_range(const Dataset& ds, double min_d, double max_d,
                              double* fraction_removed) {
  if (!(min_d < max_d))
    throw ConfigError(
        fmt::format("invalid duration range [{}, {}]", min_d, max_d));
  Dataset out;
  out.split_tag = ds.split_tag;
  out.records.reserve(ds.records.size());
  for (const auto& r : ds.records)
    if (r.duration >= min_d && r.duration <= max_d) out.records.push_back(r);
  if (fraction_removed) {
    *fraction_removed =
        ds.records.empty()
            ? 0.0
            : 1.0 - static_cast<double>(out.records.size()) /
                        static_cast<double>(ds.records.size());
  }
  return out;
}

std::array<Dataset, 3> split_by_time(const Dataset& ds, double train_ratio,
                                     double val_ratio, double test_ratio) {
  if (ds.empty()) throw DataError("split_by_time: empty dataset");
  if (train_ratio <= 0 || val_ratio < 0 || test_ratio < 0)
    throw ConfigError("split ratios must be positive");
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
    throw ConfigError(fmt::format("split ratios sum to {}, expected 1",
                                  train_ratio + val_ratio + test_ratio));

  std::vector<std::size_t> order(ds.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = ds.records[a];
    const auto& rb = ds.records[b];
    if (ra.timestamp != rb.timestamp) return ra.timestamp < rb.timestamp;
    if (ra.user_id != rb.user_id) return ra.user_id < rb.user_id;
    return ra.video_id < rb.video_id;
  });

  const auto n = ds.records.size();
  const auto n_val = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * val_ratio));
  const auto n_test = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * test_ratio));
  const auto n_train = n - n_val - n_test;  // rounding toward train

  std::array<Dataset, 3> out;
  out[0].split_tag = SplitTag::train;
  out[1].split_tag = SplitTag::validation;
  out[2].split_tag = SplitTag::test;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = ds.records[order[i]];
    if (i < n_train)
      out[0].records.push_back(rec);
    else if (i < n_train + n_val)
      out[1].records.push_back(rec);
    else
      out[2].records.push_back(rec);
  }
  return out;
}

void write_dataset(std::ostream& out, const Dataset& ds, char delimiter) {
  const char d = delimiter;
  out << "user" << d << "video" << d << "producer" << d << "watch_time" << d
      << "duration" << d << "timestamp";
  if (!ds.records.empty())
    for (const auto& [field, _] : ds.records.front().features)
      out << d << field;
  out << '\n';
  for (const auto& r : ds.records) {
    out << r.user_id << d << r.video_id << d << r.producer_id << d
        << num(r.watch_time) << d << num(r.duration) << d << r.timestamp;
    for (const auto& [_, value] : r.features) out << d << value;
    out << '\n';
  }
}

Dataset read_dataset(std::istream& in, char delimiter) {
  ColumnMapping m;
  m.delimiter = delimiter;
  return parse_log(in, m);
}

}  // namespace dvr
