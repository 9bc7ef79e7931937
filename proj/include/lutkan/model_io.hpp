#pragma once

#include <filesystem>
#include <string>

#include "lutkan/model.hpp"

namespace lutkan {

inline constexpr int kModelFormatVersion = 1;

/// Neutral JSON model document. Numbers round-trip bit-exactly.
std::string model_to_json(const ModelSpec& model, int indent = -1);
ModelSpec model_from_json(const std::string& text);

ModelSpec load_model(const std::filesystem::path& path);
void save_model(const ModelSpec& model, const std::filesystem::path& path);

}  // namespace lutkan
