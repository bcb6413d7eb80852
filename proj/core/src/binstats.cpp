#include "dvr/binstats.hpp"

#include <fmt/format.h>

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "dvr/errors.hpp"

namespace dvr {

int DurationBinner::num_bins() const {
  if (!(min_duration < max_duration) || bin_width <= 0.0)
    throw ConfigError(fmt::format("invalid binner [{}, {}] width {}",
                                  min_duration, max_duration, bin_width));
  return static_cast<int>(
      std::ceil((max_duration - min_duration) / bin_width));
}

int DurationBinner::bin_of(double d) const {
  const int m = num_bins();
  if (!in_range(d))
    throw DataError(fmt::format("duration {} outside bin range [{}, {}]", d,
                                min_duration, max_duration));
  const int idx = static_cast<int>(std::floor((d - min_duration) / bin_width));
  return idx >= m ? m - 1 : idx;  // closed upper boundary
}

BinStatistics::BinStatistics(const DurationBinner& b, std::int64_t min_count)
    : binner(b),
      count(static_cast<std::size_t>(b.num_bins()), 0),
      mean(static_cast<std::size_t>(b.num_bins()), 0.0),
      variance(static_cast<std::size_t>(b.num_bins()), 0.0),
      min_bin_count(min_count) {}

double BinStatistics::sigma(int bin) const {
  return std::sqrt(variance[static_cast<std::size_t>(bin)]);
}

bool BinStatistics::fitted() const {
  for (auto n : count)
    if (n > 0) return true;
  return false;
}

std::int64_t BinStatistics::total_count() const {
  std::int64_t total = 0;
  for (auto n : count) total += n;
  return total;
}

void BinStatistics::stream_update(double watch_time, double duration) {
  if (!binner.in_range(duration)) {
    if (out_of_range == OutOfRangePolicy::error)
      throw DataError(fmt::format("stream event duration {} out of range", duration));
    ++skipped_out_of_range;
    return;
  }
  const auto b = static_cast<std::size_t>(binner.bin_of(duration));
  const auto n = static_cast<double>(++count[b]);
  const double delta = watch_time - mean[b];
  variance[b] = (n - 1.0) / (n * n) * delta * delta + (n - 1.0) / n * variance[b];
  mean[b] += delta / n;
}

BinStatistics fit_batch(const DurationBinner& binner,
                        std::span<const InteractionRecord> records) {
  BinStatistics stats(binner);
  const auto m = static_cast<std::size_t>(binner.num_bins());
  std::vector<double> sum(m, 0.0);
  for (const auto& r : records) {
    const auto b = static_cast<std::size_t>(binner.bin_of(r.duration));
    ++stats.count[b];
    sum[b] += r.watch_time;
  }
  for (std::size_t b = 0; b < m; ++b)
    if (stats.count[b] > 0) stats.mean[b] = sum[b] / static_cast<double>(stats.count[b]);
  std::vector<double> sq(m, 0.0);
  for (const auto& r : records) {
    const auto b = static_cast<std::size_t>(binner.bin_of(r.duration));
    const double delta = r.watch_time - stats.mean[b];
    sq[b] += delta * delta;
  }
  for (std::size_t b = 0; b < m; ++b)
    if (stats.count[b] > 0) stats.variance[b] = sq[b] / static_cast<double>(stats.count[b]);
  return stats;
}

BinStatistics merge(const BinStatistics& a, const BinStatistics& b) {
  if (!(a.binner == b.binner))
    throw ConfigError("merge: bin geometry mismatch");
  BinStatistics out(a.binner, a.min_bin_count);
  out.skipped_out_of_range = a.skipped_out_of_range + b.skipped_out_of_range;
  for (std::size_t i = 0; i < out.count.size(); ++i) {
    const auto na = a.count[i];
    const auto nb = b.count[i];
    const auto n = na + nb;
    out.count[i] = n;
    if (n == 0) continue;
    const double wa = static_cast<double>(na) / static_cast<double>(n);
    const double wb = static_cast<double>(nb) / static_cast<double>(n);
    const double mu = wa * a.mean[i] + wb * b.mean[i];
    const double da = a.mean[i] - mu;
    const double db = b.mean[i] - mu;
    out.mean[i] = mu;
    out.variance[i] =
        wa * (a.variance[i] + da * da) + wb * (b.variance[i] + db * db);
  }
  return out;
}

namespace {

std::uint64_t fnv1a(const std::string& payload) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : payload) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

double parse_hexfloat(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    throw DataError(fmt::format("snapshot: bad float field '{}'", s));
  return v;
}

}  // namespace

std::string snapshot(const BinStatistics& stats) {
  std::string payload = fmt::format(
      "binstats v1\nm={} min={:a} max={:a} width={:a} min_bin_count={} skipped={}\n",
      stats.count.size(), stats.binner.min_duration,
      stats.binner.max_duration, stats.binner.bin_width, stats.min_bin_count,
      stats.skipped_out_of_range);
  for (std::size_t i = 0; i < stats.count.size(); ++i)
    payload += fmt::format("{} {:a} {:a}\n", stats.count[i], stats.mean[i],
                           stats.variance[i]);
  return payload + fmt::format("checksum={:016x}\n", fnv1a(payload));
}

BinStatistics restore(const std::string& bytes) {
  const auto checksum_pos = bytes.rfind("checksum=");
  if (checksum_pos == std::string::npos)
    throw DataError("snapshot: checksum line missing (truncated?)");
  const std::string payload = bytes.substr(0, checksum_pos);
  const std::string expected = fmt::format("{:016x}", fnv1a(payload));
  const std::string actual = bytes.substr(checksum_pos + 9, 16);
  if (actual != expected)
    throw DataError("snapshot: checksum mismatch (corrupt or truncated)");

  std::istringstream in(payload);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "binstats" || version != "v1")
    throw DataError("snapshot: unknown format/version");

  std::size_t m = 0;
  std::string f_min, f_max, f_width;
  std::int64_t min_count = 0, skipped = 0;
  std::string token;
  auto value_of = [](const std::string& t) {
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw DataError("snapshot: malformed header");
    return t.substr(eq + 1);
  };
  in >> token; m = std::stoull(value_of(token));
  in >> token; f_min = value_of(token);
  in >> token; f_max = value_of(token);
  in >> token; f_width = value_of(token);
  in >> token; min_count = std::stoll(value_of(token));
  in >> token; skipped = std::stoll(value_of(token));

  DurationBinner binner;
  binner.min_duration = parse_hexfloat(f_min);
  binner.max_duration = parse_hexfloat(f_max);
  binner.bin_width = parse_hexfloat(f_width);

  BinStatistics stats(binner, min_count);
  if (stats.count.size() != m)
    throw DataError("snapshot: bin count mismatch");
  stats.skipped_out_of_range = skipped;
  for (std::size_t i = 0; i < m; ++i) {
    std::string f_mean, f_var;
    if (!(in >> stats.count[i] >> f_mean >> f_var))
      throw DataError("snapshot: truncated bin rows");
    stats.mean[i] = parse_hexfloat(f_mean);
    stats.variance[i] = parse_hexfloat(f_var);
  }
  return stats;
}

}  // namespace dvr
