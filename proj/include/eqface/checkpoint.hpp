#pragma once

// Text checkpoint:
//
//   EQFACE-CKPT v1
//   dims d_in=<int> hidden=<int> d=<int> q=<int> n_classes=<int>
//   tensor <name> shape=<rows>x<cols> role=<role> frozen=<0|1>
//   <row 0 values, space separated, 17 significant digits>
//   ...
//   end
//
// Roles: backbone, quality, classifier, quality_state (BN running stats).

#include <filesystem>
#include <string>

#include "eqface/model.hpp"

namespace eqface {

inline constexpr const char* kCheckpointVersion = "EQFACE-CKPT v1";

std::string checkpoint_to_string(const Model& model);
Model checkpoint_from_string(const std::string& text);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace eqface
