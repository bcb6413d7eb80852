#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dvr/dataset.hpp"

namespace dvr {

/// Categorical feature space over an interaction log. One active index per
/// field; unknown values at encode time map to a per-field reserved OOV
/// index. When include_duration is false no duration-derived feature exists
/// in the space at all (the DD strategy).
class FeatureSpace {
 public:
  struct Field {
    std::string name;
    std::map<std::string, int> vocab;  // value -> local index
    int offset = 0;                    // start of this field's index range
    int oov_index() const { return offset + static_cast<int>(vocab.size()); }
  };

  static FeatureSpace build(const Dataset& ds, bool include_duration);

  /// One global index per field, in field order.
  std::vector<int> encode(const InteractionRecord& rec) const;

  int total_indices() const { return total_indices_; }
  std::size_t field_count() const { return fields_.size(); }
  bool include_duration() const { return include_duration_; }
  const std::vector<Field>& fields() const { return fields_; }

  /// Checkpoint support.
  void serialize(std::string& out) const;
  static FeatureSpace deserialize(std::istream& in);

 private:
  std::vector<Field> fields_;
  bool include_duration_ = false;
  int total_indices_ = 0;

  void assign_offsets();
};

/// Duration bucketed to whole seconds, the categorical form fed to models
/// when include_duration is on.
std::string duration_bucket(double duration);

}  // namespace dvr
