#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "saliq/model.hpp"

namespace saliq {

/// Optional header payload written alongside the model: class names plus
/// flat key=value echo lines (training config, final metrics).
struct CheckpointMeta {
  std::vector<std::string> class_names;
  std::vector<std::pair<std::string, std::string>> extra;
};

/// Serialize a model. Layout: "SQCK" magic, u16 version, u32 header length,
/// UTF-8 key=value header, then tensor blobs in layer declaration order —
/// raw float32 little-endian, or (packed mode) a float32 scale followed by
/// k-bit codes for each weight tensor. Alphas travel in the header as
/// hexfloats so the round trip is bit-exact. Packed mode requires a quant
/// spec and grid-valued weights.
void save_checkpoint(const Model& model, const std::string& path, bool packed, const CheckpointMeta* meta = nullptr);

struct LoadedCheckpoint {
  Model model;
  bool packed = false;
  std::vector<std::string> class_names;
  std::map<std::string, std::string> header;
};

/// Parse and validate a checkpoint. Corrupt magic/version/truncation fail
/// with the file offset in the message; nothing is returned partially built.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace saliq
