#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kneeloc/detection.hpp"
#include "kneeloc/loss.hpp"
#include "kneeloc/optimize.hpp"
#include "kneeloc/parametrize.hpp"

namespace kneeloc {

struct ConvLayerSpec {
  int channels = 8;
  int kernel = 3;
  int stride = 2;

  bool operator==(const ConvLayerSpec&) const = default;
};

// Conv stack (ReLU after each) -> pointwise convs (ReLU between them) ->
// optional per-location channel L2 normalization -> fully connected layers
// (ReLU between them) -> 4 outputs mapped by x -> 6 (sigmoid(x) - 1/2).
struct LocNetArch {
  int input_height = 80;
  int input_width = 50;
  std::vector<ConvLayerSpec> conv{{8, 3, 2}, {16, 3, 2}, {32, 3, 2}, {32, 3, 2}};
  std::vector<int> pointwise{16, 8};
  bool channel_normalize = true;
  std::vector<int> hidden{128, 32};

  void validate() const;
  bool operator==(const LocNetArch&) const = default;
};

enum class ParamGroup { kBackbone, kHead };

struct ParamTensor {
  std::string name;
  ParamGroup group = ParamGroup::kHead;
  std::vector<int> shape;
  std::vector<double> values;
};

// One tensor of gradients per parameter tensor, same layout.
using ParamSet = std::vector<std::vector<double>>;

class LocNetWeights {
 public:
  explicit LocNetWeights(LocNetArch arch = {});  // all zeros

  // He-normal weights, zero biases, final layer shrunk so initial outputs sit
  // near the center of the pose box.
  static LocNetWeights initialize(const LocNetArch& arch, std::uint64_t seed);

  const LocNetArch& arch() const { return arch_; }
  const std::vector<ParamTensor>& tensors() const { return tensors_; }
  // Any mutable access invalidates caches produced by earlier forward passes.
  std::vector<ParamTensor>& mutable_tensors();
  std::uint64_t revision() const { return revision_; }
  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t seed) { seed_ = seed; }

  std::size_t parameter_count() const;
  ParamSet zeros_like() const;

 private:
  LocNetArch arch_;
  std::vector<ParamTensor> tensors_;
  std::uint64_t revision_ = 0;
  std::uint64_t seed_ = 0;
};

using NetOutput = std::array<double, 4>;

struct LocNetCache {
  const LocNetWeights* weights = nullptr;
  std::uint64_t revision = 0;
  std::vector<std::vector<double>> acts;  // acts[0] is the input
  std::vector<double> norms;              // per-location norms, if normalizing
  NetOutput logits{};
  NetOutput output{};
};

// Resize to the network resolution and standardize to zero mean, unit
// variance.
Image prepare_input(const Image& half, const LocNetArch& arch);

// Throws ShapeMismatch unless input has the architecture's input shape.
NetOutput locnet_forward(const LocNetWeights& w, const Image& input, LocNetCache* cache = nullptr);

// Gradient of upstream . output with respect to every parameter. Throws
// StaleCache if the weights changed after the forward pass.
ParamSet locnet_backward(const LocNetCache& cache, const NetOutput& upstream);

// forward(prepare_input(half))
NetOutput predict(const LocNetWeights& w, const Image& half);

struct TrainingPair {
  Image left;
  Image right;
};

struct TrainConfig {
  int outer_iterations = 3;
  int epochs_per_outer = 20;
  int batch = 8;
  double lr_backbone = 3e-3;
  double lr_head = 3e-3;
  double cu_floor = 1e-3;
  std::uint64_t seed = 0;
  AdamConfig sharpen{0.02, 0.9, 0.999, 1e-8, 300};
  // Adam moments for the network weights.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct AdamMoments {
  ParamSet m;
  ParamSet s;
  std::int64_t steps = 0;
};

struct TrainState {
  LocNetWeights weights;
  std::vector<double> cu;
  AdamMoments moments;
  int outer = 0;
  int epoch = 0;
};

struct EpochRecord {
  int outer = 0;
  int epoch = 0;                 // global epoch count, 0 = before training
  double mean_scaled_loss = 0.0;  // with the c_u in force for that epoch
  double mean_loss = 0.0;         // unscaled
};

struct TrainResult {
  TrainState state;
  std::vector<EpochRecord> curve;
  // Set when a non-finite loss stopped training; state holds the weights
  // from before the offending step.
  bool aborted = false;
  std::string abort_reason;
};

// Mean of c_u * pair_loss(u, G(u; w)) over the data.
double mean_scaled_loss(const LocNetWeights& w, const std::vector<TrainingPair>& data,
                        const Template& T, const ParamConfig& pcfg, const std::vector<double>& cu);

// c_u = 1 / max(min over the sharpening trace started at G(u; w), floor)
std::vector<double> refresh_scaling(const LocNetWeights& w, const std::vector<TrainingPair>& data,
                                    const Template& T, const ParamConfig& pcfg,
                                    const TrainConfig& cfg);

// One Adam step on the minibatch mean of c_u * f(u, G(u; w)). Returns the
// minibatch objective before the step.
double train_step(TrainState& state, const std::vector<TrainingPair>& data,
                  const std::vector<std::size_t>& batch, const Template& T,
                  const ParamConfig& pcfg, const TrainConfig& cfg);

// Gradient of the minibatch objective, without updating anything.
double batch_gradient(const LocNetWeights& w, const std::vector<TrainingPair>& data,
                      const std::vector<std::size_t>& batch, const std::vector<double>& cu,
                      const Template& T, const ParamConfig& pcfg, ParamSet& grad);

TrainResult train_phase(const std::vector<TrainingPair>& data, const Template& T,
                        const ParamConfig& pcfg, const TrainConfig& cfg, LocNetWeights init);

// scale <- min(factor * scale, box limit), translations re-clamped.
PoseParams enlarge_pose(const PoseParams& pose, const ParamConfig& pcfg, double factor);

// Pose of the product A(outer) A(inner), projected onto the pose family with
// vertical factor f_result.
PoseParams compose_poses(const PoseParams& outer, double f_outer, const PoseParams& inner,
                         double f_inner, double f_result);

struct TwoPhaseConfig {
  TrainConfig coarse;
  TrainConfig fine;
  LocNetArch coarse_arch;
  // The phase-two input is a square crop on the coarse template grid.
  LocNetArch fine_arch = [] {
    LocNetArch a;
    a.input_height = a.input_width;
    return a;
  }();
  double enlarge = 1.2;
};

struct TwoPhaseModel {
  LocNetWeights coarse;
  LocNetWeights fine;
  double enlarge = 1.2;
};

struct TwoPhaseResult {
  TwoPhaseModel model;
  TrainResult coarse;
  TrainResult fine;
};

// Box configs for the two phases and the composed result. base supplies
// alpha0, beta0 and rot_bound.
ParamConfig coarse_config(const ParamConfig& base, const Template& T_coarse);
ParamConfig fine_relative_config(const ParamConfig& base, const Template& T_coarse,
                                 const Template& T_fine);
ParamConfig fine_config(const ParamConfig& base, const Template& T_fine);

struct PhaseCrop {
  Image crop;          // T_coarse grid shape
  PoseParams coarse;   // phase-1 pose
  PoseParams enlarged;
};

PhaseCrop phase_one_crop(const LocNetWeights& coarse, const Image& half, const Template& T_coarse,
                         const ParamConfig& base, double enlarge);

TwoPhaseResult two_phase_train(const std::vector<TrainingPair>& data, const Template& T_coarse,
                               const Template& T_fine, const ParamConfig& base,
                               const TwoPhaseConfig& cfg);

struct InferConfig {
  bool sharpen = false;
  AdamConfig sharpen_cfg{0.02, 0.9, 0.999, 1e-8, 300};
};

// Detection against T_fine in half coordinates; method "neural" or
// "neural+sharpen".
Detection infer(const TwoPhaseModel& model, const Image& u_left, const Image& u_right,
                const Template& T_coarse, const Template& T_fine, const ParamConfig& base,
                const InferConfig& cfg = {});

}  // namespace kneeloc
