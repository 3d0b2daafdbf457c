#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "aadam/model.hpp"

namespace aadam {

inline constexpr int kCheckpointVersion = 1;

/// In-memory form of a checkpoint file.
///
/// The file is a text manifest followed by a payload of little-endian
/// float32 values in manifest order:
///
///   AADAM-CHECKPOINT 1
///   kind model|language-adapter|task-adapter
///   config vocab_size=... d_model=... ... dropout=...
///   config_hash <hex or ->
///   adapters <language id or -> <task id or ->
///   lineage <n>
///   L stage<TAB>hash<TAB>parent<TAB>objective<TAB>language<TAB>provenance
///   tensors <n>
///   T name<TAB>trainable<TAB>shape<TAB>byte offset<TAB>count
///   payload <bytes>
///   <blank line, then the payload>
struct Checkpoint {
  std::string kind = "model";
  EncoderConfig config;
  std::string config_hash;
  AdapterStack adapters;
  std::vector<LineageEntry> lineage;
  std::vector<Parameter> tensors;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws DataError on a version mismatch, malformed manifest, or payload
/// whose size disagrees with the manifest offsets.
Checkpoint parse_checkpoint(std::string_view bytes);

/// Every parameter whose name starts with `prefix` (all when empty).
Checkpoint to_checkpoint(const ModelGraph& model, const std::string& prefix = "");
ModelGraph to_model(const Checkpoint& ckpt);

void save_checkpoint(const ModelGraph& model, const std::string& path);
ModelGraph load_checkpoint(const std::string& path);

/// Adapter-only bundle holding exactly the tensors under the kind's prefix.
void save_adapter(const ModelGraph& model, AdapterKind kind, const std::string& path);
AdapterBundle load_adapter(const std::string& path);

}  // namespace aadam
