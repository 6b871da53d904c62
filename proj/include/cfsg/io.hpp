#pragma once

// JSON documents: hierarchy configs, datasets, train configs, checkpoints.

#include <nlohmann/json.hpp>

#include <string>

#include "cfsg/train.hpp"

namespace cfsg {

using json = nlohmann::json;

inline constexpr int kCheckpointSchema = 1;
inline constexpr int kConfigSchema = 1;

json hierarchy_to_json(const HierarchySpec& h);
HierarchySpec hierarchy_from_json(const json& j);

json dataset_to_json(const Dataset& d);
Dataset dataset_from_json(const json& j);

json partition_to_json(const PartitionSpec& p);
PartitionSpec partition_from_json(const json& j);

/// Shape + row-major data.
json tensor_to_json(const Matrix& m);
Matrix tensor_from_json(const json& j, const std::string& name);

json config_to_json(const TrainConfig& cfg);
/// Unknown keys, a wrong schema version, or invalid values raise ValidationError.
TrainConfig config_from_json(const json& j);

json checkpoint_to_json(const Checkpoint& ckpt);
/// Raises LoadError naming the offending field.
Checkpoint checkpoint_from_json(const json& j);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string read_file(const std::string& path);
/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::string& path, const std::string& contents);
json read_json(const std::string& path);
void write_json(const std::string& path, const json& j);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace cfsg
