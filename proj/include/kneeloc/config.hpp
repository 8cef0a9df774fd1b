#pragma once

#include <filesystem>

#include "kneeloc/baseline.hpp"
#include "kneeloc/neural.hpp"
#include "kneeloc/optimize.hpp"
#include "kneeloc/preprocess.hpp"
#include "kneeloc/serialize.hpp"
#include "kneeloc/synth.hpp"

namespace kneeloc {

// Every tunable default in one place. param.f is ignored: vertical factors
// come from the templates.
struct RunConfig {
  ParamConfig param;
  SplitConfig split;
  GridSearchConfig grid;
  BaselineConfig baseline;
  TwoPhaseConfig train;
  InferConfig infer;
  SynthConfig synth;

  void validate() const;
};

json config_to_json(const RunConfig& cfg);
// Overlays the keys present in j onto base. Unknown keys throw
// InvalidArgument so that typos do not pass silently.
RunConfig config_from_json(const json& j, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);

}  // namespace kneeloc
