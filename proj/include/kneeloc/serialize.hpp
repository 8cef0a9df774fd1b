#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "kneeloc/detection.hpp"
#include "kneeloc/loss.hpp"
#include "kneeloc/neural.hpp"
#include "kneeloc/preprocess.hpp"
#include "kneeloc/synth.hpp"

namespace kneeloc {

using nlohmann::json;

inline constexpr const char* kSchemaVersion = "1.0";
inline constexpr const char* kWeightsFormat = "kneeloc-locnet";
inline constexpr int kWeightsVersion = 1;

json pose_to_json(const PoseParams& p);
PoseParams pose_from_json(const json& j);

json stats_to_json(const DetectionStats& s);

using SideBox = std::array<PixelPoint, 4>;

// Detection JSON; boxes are the four original-image corners per side when
// known.
json detection_to_json(const Detection& d, const std::string& template_hash,
                       const std::optional<std::array<SideBox, 2>>& boxes = std::nullopt);
Detection detection_from_json(const json& j);

// FNV-1a over the patch shape, the float intensities and the sub-windows.
std::string template_hash(const Template& T);

// Bundle directory: patch.png (16-bit) + template.json with f and windows.
void save_template(const Template& T, const std::filesystem::path& dir);
Template load_template(const std::filesystem::path& dir);

json transform_to_json(const HalfTransform& t);
HalfTransform transform_from_json(const json& j);

json truth_to_json(const GroundTruth& g);
GroundTruth truth_from_json(const json& j);

json arch_to_json(const LocNetArch& a);
LocNetArch arch_from_json(const json& j);

json weights_to_json(const LocNetWeights& w);
LocNetWeights weights_from_json(const json& j);

json model_to_json(const TwoPhaseModel& m);
TwoPhaseModel model_from_json(const json& j);

json read_json(const std::filesystem::path& path);
void write_json(const json& j, const std::filesystem::path& path);

}  // namespace kneeloc
