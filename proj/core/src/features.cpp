#include "dvr/features.hpp"

#include <fmt/format.h>

#include <cmath>
#include <istream>
#include <sstream>

#include "dvr/errors.hpp"

namespace dvr {

namespace {
constexpr const char* kDurationField = "__duration__";
}

std::string duration_bucket(double duration) {
  return fmt::format("{}", static_cast<std::int64_t>(std::floor(duration)));
}

void FeatureSpace::assign_offsets() {
  int offset = 0;
  for (auto& f : fields_) {
    f.offset = offset;
    offset += static_cast<int>(f.vocab.size()) + 1;  // +1 for OOV
  }
  total_indices_ = offset;
}

FeatureSpace FeatureSpace::build(const Dataset& ds, bool include_duration) {
  FeatureSpace space;
  space.include_duration_ = include_duration;

  std::vector<std::string> names{"user", "video"};
  bool have_producer = false;
  for (const auto& r : ds.records)
    if (!r.producer_id.empty()) {
      have_producer = true;
      break;
    }
  if (have_producer) names.push_back("producer");
  if (include_duration) names.push_back(kDurationField);
  if (!ds.records.empty())
    for (const auto& [field, _] : ds.records.front().features)
      names.push_back(field);

  for (const auto& n : names) space.fields_.push_back(Field{n, {}, 0});

  auto intern = [](Field& f, const std::string& value) {
    f.vocab.emplace(value, static_cast<int>(f.vocab.size()));
  };
  for (const auto& r : ds.records) {
    std::size_t fi = 0;
    intern(space.fields_[fi++], r.user_id);
    intern(space.fields_[fi++], r.video_id);
    if (have_producer) intern(space.fields_[fi++], r.producer_id);
    if (include_duration)
      intern(space.fields_[fi++], duration_bucket(r.duration));
    for (const auto& [field, value] : r.features) {
      if (fi >= space.fields_.size() || space.fields_[fi].name != field)
        throw DataError(fmt::format(
            "feature field layout mismatch: expected '{}' got '{}'",
            fi < space.fields_.size() ? space.fields_[fi].name : "<none>",
            field));
      intern(space.fields_[fi++], value);
    }
  }
  // Vocab insertion order is map order (lexicographic); renumber so indices
  // are contiguous in that order.
  for (auto& f : space.fields_) {
    int i = 0;
    for (auto& [_, idx] : f.vocab) idx = i++;
  }
  space.assign_offsets();
  return space;
}

std::vector<int> FeatureSpace::encode(const InteractionRecord& rec) const {
  std::vector<int> out;
  out.reserve(fields_.size());
  auto lookup = [](const Field& f, const std::string& value) {
    const auto it = f.vocab.find(value);
    return it == f.vocab.end() ? f.oov_index() : f.offset + it->second;
  };
  std::size_t fi = 0;
  out.push_back(lookup(fields_[fi++], rec.user_id));
  out.push_back(lookup(fields_[fi++], rec.video_id));
  if (fi < fields_.size() && fields_[fi].name == "producer")
    out.push_back(lookup(fields_[fi++], rec.producer_id));
  if (include_duration_)
    out.push_back(lookup(fields_[fi++], duration_bucket(rec.duration)));
  for (const auto& [field, value] : rec.features) {
    (void)field;
    if (fi >= fields_.size()) break;
    out.push_back(lookup(fields_[fi++], value));
  }
  return out;
}

void FeatureSpace::serialize(std::string& out) const {
  out += fmt::format("feature_space {} {}\n", include_duration_ ? 1 : 0,
                     fields_.size());
  for (const auto& f : fields_) {
    out += fmt::format("field {} {}\n", f.name, f.vocab.size());
    for (const auto& [value, idx] : f.vocab)
      out += fmt::format("{} {}\n", idx, value);  // value last, may hold spaces
  }
}

FeatureSpace FeatureSpace::deserialize(std::istream& in) {
  std::string tag;
  int incl = 0;
  std::size_t n_fields = 0;
  if (!(in >> tag >> incl >> n_fields) || tag != "feature_space")
    throw DataError("checkpoint: bad feature_space header");
  FeatureSpace space;
  space.include_duration_ = incl != 0;
  for (std::size_t i = 0; i < n_fields; ++i) {
    Field f;
    std::size_t n_values = 0;
    if (!(in >> tag >> f.name >> n_values) || tag != "field")
      throw DataError("checkpoint: bad field header");
    for (std::size_t v = 0; v < n_values; ++v) {
      int idx = 0;
      std::string value;
      if (!(in >> idx) || !std::getline(in, value))
        throw DataError("checkpoint: truncated vocabulary");
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      f.vocab.emplace(value, idx);
    }
    space.fields_.push_back(std::move(f));
  }
  space.assign_offsets();
  return space;
}

}  // namespace dvr
