#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "panelreg/models.hpp"

namespace panelreg {

inline constexpr int kModelFormatVersion = 1;

/// Versioned JSON document. Trees are nested objects; linear models store a
/// name -> coefficient map. Doubles are written with round-trip precision, so
/// a loaded model predicts bit-identically.
nlohmann::json model_to_json(const FittedModel& m);
FittedModel model_from_json(const nlohmann::json& j);

void save_model(const FittedModel& m, const std::filesystem::path& path);
FittedModel load_model(const std::filesystem::path& path);

}  // namespace panelreg
