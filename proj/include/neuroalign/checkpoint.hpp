#pragma once

#include <filesystem>
#include <optional>

#include "json.hpp"

#include "neuroalign/alignment_head.hpp"
#include "neuroalign/backbone.hpp"

namespace neuroalign {

// Checkpoint directory layout:
//   model.json                 {"format_version", "backbone": spec, "head": config|null, "extra": {...}}
//   params/<name>.f64 + .json  one float64 array per parameter and BN buffer
struct ModelBundle {
  Backbone backbone;
  std::optional<AlignmentHead> head;
  nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& dir, Backbone& backbone, AlignmentHead* head,
                     const nlohmann::json& extra = nlohmann::json::object());
ModelBundle load_checkpoint(const std::filesystem::path& dir);

}  // namespace neuroalign
