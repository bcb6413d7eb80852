#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dvr {

/// One watch event from an interaction log. Watch time may exceed duration
/// (looped replays are preserved, not clipped).
struct InteractionRecord {
  std::string user_id;
  std::string video_id;
  std::string producer_id;  // optional, empty allowed
  double watch_time = 0.0;  // seconds, >= 0
  double duration = 0.0;    // seconds, > 0
  std::int64_t timestamp = 0;
  std::vector<std::pair<std::string, std::string>> features;  // (field, value)
};

enum class SplitTag { train, validation, test, unsplit };

const char* to_string(SplitTag tag);

struct Dataset {
  std::vector<InteractionRecord> records;
  SplitTag split_tag = SplitTag::unsplit;

  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }
};

}  // namespace dvr
