#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "invloc/fusion.hpp"
#include "invloc/generator.hpp"
#include "invloc/image.hpp"
#include "invloc/pose.hpp"

namespace invloc {

enum class ChannelPolicy { replicate3, single };

ChannelPolicy parse_channel_policy(const std::string& name);
std::string to_string(ChannelPolicy policy);

struct PoseTrainConfig {
  double beta = 250.0;  // orientation weight
  double lr = 1e-4;
  int batch_size = 75;
  std::int64_t max_iters = 15000;
  double init_std = 0.01;
  int input_size = 256;
  ChannelPolicy channel_policy = ChannelPolicy::replicate3;
  int width = 32;    // first conv block; later blocks double up to 8x
  int hidden = 256;  // fully connected layer before the heads
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-10;
  std::int64_t validate_every = 100;  // used only when a validation set is given
  std::uint64_t seed = 0;

  void validate() const;
  int in_channels() const { return channel_policy == ChannelPolicy::single ? 1 : 3; }
};

/// Five stride-2 conv blocks, global average pooling, a hidden fully connected
/// layer and two heads. Positions are de-standardised with the training-set
/// mean and spread held in buffers.
class PoseRegressorImpl : public torch::nn::Module {
 public:
  PoseRegressorImpl(int in_channels, int width, int hidden);

  /// Returns {N, 7}: x, y, z, then the raw (unnormalised) quaternion w, x, y, z.
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Sequential features{nullptr};
  torch::nn::Linear hidden{nullptr};
  torch::nn::Linear position_head{nullptr};
  torch::nn::Linear rotation_head{nullptr};
  torch::Tensor position_offset;
  torch::Tensor position_scale;
};
TORCH_MODULE(PoseRegressor);

struct PoseModel {
  PoseTrainConfig config;
  std::string input_kind = "fusion";  // "fusion" or "rgb"
  std::string feature_layer;          // empty for rgb
  std::string feature_checkpoint;     // hash of the frozen extractor; empty for rgb
  std::int64_t iterations = 0;
  PoseRegressor net{nullptr};
};

/// Untrained model: Gaussian weights, position buffers from the poses, and the
/// rotation bias set to their mean orientation.
PoseModel init_pose_model(const PoseTrainConfig& config, const std::vector<Pose>& poses,
                          const std::string& input_kind);

void save_pose_model(const PoseModel& model, const std::filesystem::path& path);
PoseModel load_pose_model(const std::filesystem::path& path);

/// Bilinear resize to input_size², per-map standardisation (variance floored
/// at 1e-6), channel replication per policy.
ImageTensor prepare_input(const FusionMap& map, const PoseTrainConfig& config);

/// Raw image path for the baselines: resize only, values stay in [-1, 1].
ImageTensor prepare_rgb(const ImageTensor& image, const PoseTrainConfig& config);

/// Mean over the batch of |x̂ - x| + beta |q̂ - s q/|q||, where s = ±1 puts the
/// ground-truth quaternion on the prediction's hemisphere.
/// Shapes: predicted {N,3} and {N,4}; ground truth {N,3} and {N,4} (w, x, y, z).
torch::Tensor pose_loss(const torch::Tensor& pred_position, const torch::Tensor& pred_rotation,
                        const torch::Tensor& gt_position, const torch::Tensor& gt_rotation, double beta);

/// Single-example form; q_hat is (w, x, y, z). Throws on a zero ground-truth quaternion.
double pose_loss(const Eigen::Vector3d& x_hat, const Eigen::Vector4d& q_hat, const Pose& gt, double beta);

struct PoseExample {
  ImageTensor input;  // already prepared
  Pose pose;
};

struct FeatureExample {
  FusionMap map;
  Pose pose;
};

/// Trains on prepared inputs. Writes `iter,loss` rows to `log_path` when given.
/// With a validation set, the weights with the lowest validation loss are
/// returned, including when a non-finite loss stops training early; without
/// one a non-finite loss aborts with Error.
PoseModel train_regressor(const PoseTrainConfig& config, const std::vector<PoseExample>& train,
                          const std::string& input_kind, const std::filesystem::path& log_path = {},
                          const std::vector<PoseExample>* validation = nullptr);

/// Trains on fusion maps, which must all come from one checkpoint and layer.
PoseModel train_pose(const PoseTrainConfig& config, const std::vector<FeatureExample>& features,
                     const std::filesystem::path& log_path = {},
                     const std::vector<FeatureExample>* validation = nullptr);

/// Regresses prepared inputs in batches; quaternions come back unit and w >= 0.
std::vector<Pose> regress(const PoseModel& model, const std::vector<ImageTensor>& inputs, int batch = 32);

/// Full path from an image: fusion extraction (when the model uses it), input
/// preparation and regression. The extractor hash must match the model.
Pose predict_pose(const PoseModel& model, const ImageTensor& image, Generator* g_ab = nullptr,
                  const std::string& checkpoint_hash = {});
std::vector<Pose> predict_pose_batch(const PoseModel& model, const std::vector<const ImageTensor*>& images,
                                     Generator* g_ab = nullptr, const std::string& checkpoint_hash = {});

/// Rotation between two orientations in degrees, in [0, 180]; q and -q agree.
double quaternion_angle(const Eigen::Quaterniond& q1, const Eigen::Quaterniond& q2);

struct FrameError {
  double translation = 0.0;
  double rotation = 0.0;
};

struct PoseEvaluation {
  double mean_translation = 0.0;
  double mean_rotation = 0.0;
  double median_translation = 0.0;
  double median_rotation = 0.0;
  std::vector<FrameError> per_frame;
};

PoseEvaluation eval_pose(const std::vector<Pose>& preds, const std::vector<Pose>& gts);

/// CSV `frame,px,py,pz,gx,gy,gz` and a top-down plot of both paths.
void export_trajectory(const std::vector<Pose>& preds, const std::vector<Pose>& gts,
                       const std::vector<FrameId>& frames, const std::filesystem::path& csv_path,
                       const std::filesystem::path& plot_path = {});

nlohmann::json to_json(const PoseTrainConfig& config);
PoseTrainConfig pose_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PoseEvaluation& evaluation, bool per_frame = true);

}  // namespace invloc
