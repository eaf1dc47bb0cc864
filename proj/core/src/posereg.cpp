#include "invloc/posereg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "invloc/adam.hpp"
#include "invloc/container.hpp"
#include "invloc/plot.hpp"

namespace invloc {
namespace fs = std::filesystem;
namespace nn = torch::nn;
using nlohmann::json;

ChannelPolicy parse_channel_policy(const std::string& name) {
  if (name == "replicate3") return ChannelPolicy::replicate3;
  if (name == "single") return ChannelPolicy::single;
  throw Error("unknown channel policy '" + name + "' (expected replicate3 or single)");
}

std::string to_string(ChannelPolicy policy) {
  return policy == ChannelPolicy::single ? "single" : "replicate3";
}

void PoseTrainConfig::validate() const {
  if (!(beta > 0.0)) throw Error("pose beta must be positive");
  if (!(lr > 0.0)) throw Error("pose learning rate must be positive");
  if (batch_size < 1) throw Error("pose batch size must be at least 1");
  if (max_iters < 0) throw Error("pose max_iters must be non-negative");
  if (!(init_std > 0.0)) throw Error("pose init std must be positive");
  if (input_size < 32) throw Error("pose input size must be at least 32");
  if (width < 1 || hidden < 1) throw Error("pose network width and hidden size must be positive");
  if (validate_every < 1) throw Error("pose validate_every must be positive");
}

PoseRegressorImpl::PoseRegressorImpl(int in_channels, int width, int hidden_size) {
  features = nn::Sequential();
  const int widths[5] = {width, 2 * width, 4 * width, 8 * width, 8 * width};
  int in = in_channels;
  for (int b = 0; b < 5; ++b) {
    features->push_back(nn::Conv2d(nn::Conv2dOptions(in, widths[b], 3).stride(2).padding(1)));
    if (b < 4) features->push_back(nn::InstanceNorm2d(nn::InstanceNorm2dOptions(widths[b]).affine(true)));
    features->push_back(nn::ReLU());
    in = widths[b];
  }
  features = register_module("features", features);
  hidden = register_module("hidden", nn::Linear(in, hidden_size));
  position_head = register_module("position_head", nn::Linear(hidden_size, 3));
  rotation_head = register_module("rotation_head", nn::Linear(hidden_size, 4));
  position_offset = register_buffer("position_offset", torch::zeros({3}));
  position_scale = register_buffer("position_scale", torch::ones({3}));
}

torch::Tensor PoseRegressorImpl::forward(torch::Tensor x) {
  x = features->forward(x).mean({2, 3});
  x = torch::relu(hidden->forward(x));
  auto position = position_offset + position_scale * position_head->forward(x);
  return torch::cat({position, rotation_head->forward(x)}, 1);
}

namespace {

PoseRegressor make_net(const PoseTrainConfig& c) { return PoseRegressor(c.in_channels(), c.width, c.hidden); }

NamedTensors module_state(PoseRegressorImpl& net) {
  NamedTensors out;
  for (const auto& p : net.named_parameters()) out.emplace_back(p.key(), p.value());
  for (const auto& b : net.named_buffers()) out.emplace_back(b.key(), b.value());
  return out;
}

torch::Tensor stack_inputs(const std::vector<const ImageTensor*>& images) {
  std::vector<torch::Tensor> ts;
  ts.reserve(images.size());
  for (const auto* img : images) ts.push_back(to_tensor(*img));
  return torch::cat(ts, 0);
}

Pose pose_from_row(const float* row) {
  Pose p;
  p.position = Eigen::Vector3d(row[0], row[1], row[2]);
  p.orientation = canonical_quaternion(Eigen::Quaterniond(row[3], row[4], row[5], row[6]));
  return p;
}

}  // namespace

PoseModel init_pose_model(const PoseTrainConfig& config, const std::vector<Pose>& poses, const std::string& input_kind) {
  config.validate();
  if (poses.empty()) throw Error("pose model needs at least one training pose");
  if (input_kind != "fusion" && input_kind != "rgb") throw Error("unknown pose input kind '" + input_kind + "'");
  PoseModel model;
  model.config = config;
  model.input_kind = input_kind;
  torch::manual_seed(substream_seed(config.seed, "pose.init"));
  model.net = make_net(config);
  init_gaussian(*model.net, config.init_std);

  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : poses) mean += p.position;
  mean /= static_cast<double>(poses.size());
  Eigen::Vector3d var = Eigen::Vector3d::Zero();
  for (const auto& p : poses) var += (p.position - mean).cwiseAbs2();
  var /= static_cast<double>(poses.size());
  Eigen::Vector4d qmean = Eigen::Vector4d::Zero();
  const Eigen::Quaterniond ref = canonical_quaternion(poses.front().orientation);
  for (const auto& p : poses) {
    Eigen::Quaterniond q = canonical_quaternion(p.orientation);
    const double s = q.dot(ref) < 0 ? -1.0 : 1.0;
    qmean += s * Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
  }
  if (qmean.norm() < 1e-9) qmean = Eigen::Vector4d(1, 0, 0, 0);
  qmean.normalize();

  torch::NoGradGuard no_grad;
  for (int k = 0; k < 3; ++k) {
    const double sd = std::sqrt(var[k]);
    model.net->position_offset[k] = mean[k];
    model.net->position_scale[k] = sd > 1e-6 ? sd : 1.0;
  }
  for (int k = 0; k < 4; ++k) model.net->rotation_head->bias[k] = qmean[k];
  return model;
}

void save_pose_model(const PoseModel& model, const fs::path& path) {
  Container c;
  c.kind = "pose_model";
  c.meta = {{"config", to_json(model.config)},
            {"input_kind", model.input_kind},
            {"feature_layer", model.feature_layer},
            {"feature_checkpoint", model.feature_checkpoint},
            {"iterations", model.iterations}};
  for (const auto& [name, t] : module_state(*model.net.ptr())) {
    Blob b;
    b.name = "net/" + name;
    const auto cpu = t.detach().to(torch::kFloat32).contiguous();
    b.shape.assign(cpu.sizes().begin(), cpu.sizes().end());
    b.values.assign(cpu.data_ptr<float>(), cpu.data_ptr<float>() + cpu.numel());
    c.blobs.push_back(std::move(b));
  }
  write_container(c, path);
}

PoseModel load_pose_model(const fs::path& path) {
  const Container c = read_container(path, "pose_model");
  PoseModel model;
  try {
    model.config = pose_config_from_json(c.meta.at("config"));
    model.input_kind = c.meta.at("input_kind").get<std::string>();
    model.feature_layer = c.meta.at("feature_layer").get<std::string>();
    model.feature_checkpoint = c.meta.at("feature_checkpoint").get<std::string>();
    model.iterations = c.meta.at("iterations").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw Error(path.string() + ": malformed pose model header: " + e.what());
  }
  model.net = make_net(model.config);
  torch::NoGradGuard no_grad;
  for (auto& [name, t] : module_state(*model.net.ptr())) {
    const Blob& b = c.blob("net/" + name);
    if (std::vector<std::int64_t>(t.sizes().begin(), t.sizes().end()) != b.shape)
      throw Error(path.string() + ": parameter '" + name + "' has the wrong shape");
    t.copy_(torch::from_blob(const_cast<float*>(b.values.data()), b.shape, torch::kFloat32));
  }
  return model;
}

ImageTensor prepare_input(const FusionMap& map, const PoseTrainConfig& config) {
  if (map.height < 1 || map.width < 1 || map.data.size() != static_cast<std::size_t>(map.height) * map.width)
    throw Error("prepare_input: malformed fusion map");
  ImageTensor single(map.height, map.width, 1);
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    if (!std::isfinite(map.data[i])) throw Error("prepare_input: non-finite fusion map value");
    single.data[i] = map.data[i];
  }
  const ImageTensor resized = resize_bilinear(single, config.input_size, config.input_size);
  double mean = 0.0;
  for (float v : resized.data) mean += v;
  mean /= static_cast<double>(resized.size());
  double var = 0.0;
  for (float v : resized.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(resized.size());
  const double inv = 1.0 / std::sqrt(std::max(var, 1e-6));
  const int channels = config.in_channels();
  ImageTensor out(config.input_size, config.input_size, channels);
  for (std::size_t i = 0; i < resized.size(); ++i) {
    const auto v = static_cast<float>((resized.data[i] - mean) * inv);
    for (int c = 0; c < channels; ++c) out.data[i * static_cast<std::size_t>(channels) + c] = v;
  }
  return out;
}

ImageTensor prepare_rgb(const ImageTensor& image, const PoseTrainConfig& config) {
  if (config.channel_policy == ChannelPolicy::single) throw Error("RGB inputs need the replicate3 channel policy");
  if (image.channels != 3) throw Error("prepare_rgb expects a 3-channel image");
  if (image.height == config.input_size && image.width == config.input_size) return image;
  return resize_bilinear(image, config.input_size, config.input_size);
}

torch::Tensor pose_loss(const torch::Tensor& pred_position, const torch::Tensor& pred_rotation,
                        const torch::Tensor& gt_position, const torch::Tensor& gt_rotation, double beta) {
  if (pred_position.dim() != 2 || pred_position.size(1) != 3 || pred_rotation.dim() != 2 ||
      pred_rotation.size(1) != 4 || gt_position.sizes() != pred_position.sizes() ||
      gt_rotation.sizes() != pred_rotation.sizes() || pred_position.size(0) != pred_rotation.size(0))
    throw Error("pose_loss: expected {N,3} positions and {N,4} quaternions of equal N");
  torch::Tensor q;
  {
    torch::NoGradGuard no_grad;
    const auto norm = gt_rotation.norm(2, 1, true);
    if ((norm <= 0).any().item<bool>()) throw Error("pose_loss: zero-norm ground-truth quaternion");
    q = gt_rotation / norm;
    const auto sign = torch::where((q * pred_rotation.detach()).sum(1, true) < 0, -1.0, 1.0).to(q.scalar_type());
    q = q * sign;
  }
  const auto position_term = (pred_position - gt_position).norm(2, 1);
  const auto rotation_term = (pred_rotation - q).norm(2, 1);
  return (position_term + beta * rotation_term).mean();
}

double pose_loss(const Eigen::Vector3d& x_hat, const Eigen::Vector4d& q_hat, const Pose& gt, double beta) {
  const Eigen::Quaterniond& g = gt.orientation;
  Eigen::Vector4d q(g.w(), g.x(), g.y(), g.z());
  const double n = q.norm();
  if (!(n > 0.0)) throw Error("pose_loss: zero-norm ground-truth quaternion");
  q /= n;
  if (q.dot(q_hat) < 0) q = -q;
  return (x_hat - gt.position).norm() + beta * (q_hat - q).norm();
}

PoseModel train_regressor(const PoseTrainConfig& config, const std::vector<PoseExample>& train,
                          const std::string& input_kind, const fs::path& log_path,
                          const std::vector<PoseExample>* validation) {
  config.validate();
  if (train.empty()) throw Error("pose training needs at least one example");
  const int channels = config.in_channels();
  auto check = [&](const PoseExample& e) {
    if (e.input.height != config.input_size || e.input.width != config.input_size || e.input.channels != channels)
      throw Error("pose training input does not match input_size/channel policy");
  };
  std::vector<Pose> poses;
  for (const auto& e : train) {
    check(e);
    poses.push_back(e.pose);
  }
  if (validation)
    for (const auto& e : *validation) check(e);

  PoseModel model = init_pose_model(config, poses, input_kind);
  auto to_targets = [](const std::vector<PoseExample>& set, torch::Tensor& inputs, torch::Tensor& pos,
                       torch::Tensor& rot) {
    std::vector<const ImageTensor*> imgs;
    pos = torch::empty({static_cast<std::int64_t>(set.size()), 3});
    rot = torch::empty({static_cast<std::int64_t>(set.size()), 4});
    for (std::size_t i = 0; i < set.size(); ++i) {
      imgs.push_back(&set[i].input);
      const Eigen::Quaterniond q = canonical_quaternion(set[i].pose.orientation);
      const auto n = static_cast<std::int64_t>(i);
      for (int k = 0; k < 3; ++k) pos[n][k] = set[i].pose.position[k];
      rot[n][0] = q.w();
      rot[n][1] = q.x();
      rot[n][2] = q.y();
      rot[n][3] = q.z();
    }
    inputs = stack_inputs(imgs);
  };
  torch::Tensor inputs, gt_pos, gt_rot, val_inputs, val_pos, val_rot;
  to_targets(train, inputs, gt_pos, gt_rot);
  const bool use_val = validation && !validation->empty();
  if (use_val) to_targets(*validation, val_inputs, val_pos, val_rot);

  std::ofstream log;
  if (!log_path.empty()) {
    ensure_parent_dir(log_path);
    log.open(log_path, std::ios::trunc);
    if (!log) throw Error("cannot write " + log_path.string());
    log << "iter,loss\n";
  }

  const auto n = static_cast<std::int64_t>(train.size());
  std::int64_t batch = config.batch_size;
  if (batch > n) {
    if (config.max_iters > 0)
      warn("pose batch size " + std::to_string(batch) + " clamped to the " + std::to_string(n) + " examples");
    batch = n;
  }
  Adam optimizer(named_parameters(*model.net, ""), {config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps});
  std::mt19937_64 rng(substream_seed(config.seed, "pose.batches"));
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::int64_t{0});
  std::size_t cursor = order.size();

  double best_val = std::numeric_limits<double>::infinity();
  NamedTensors best;
  auto validate_now = [&] {
    torch::NoGradGuard no_grad;
    const auto out = model.net->forward(val_inputs);
    const double v =
        pose_loss(out.slice(1, 0, 3), out.slice(1, 3, 7), val_pos, val_rot, config.beta).item<double>();
    if (std::isfinite(v) && v < best_val) {
      best_val = v;
      best.clear();
      for (auto& [name, t] : module_state(*model.net.ptr())) best.emplace_back(name, t.detach().clone());
    }
  };
  auto restore_best = [&] {
    torch::NoGradGuard no_grad;
    auto state = module_state(*model.net);
    for (std::size_t k = 0; k < state.size(); ++k) state[k].second.copy_(best[k].second);
  };

  model.net->train();
  char line[64];
  for (std::int64_t it = 0; it < config.max_iters; ++it) {
    std::vector<std::int64_t> idx;
    while (static_cast<std::int64_t>(idx.size()) < batch) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    const auto sel = torch::tensor(idx, torch::kInt64);
    const auto out = model.net->forward(inputs.index_select(0, sel));
    const auto loss = pose_loss(out.slice(1, 0, 3), out.slice(1, 3, 7), gt_pos.index_select(0, sel),
                                gt_rot.index_select(0, sel), config.beta);
    const double value = loss.item<double>();
    if (!std::isfinite(value)) {
      if (use_val && !best.empty()) {
        warn("non-finite pose loss at iteration " + std::to_string(it) + "; keeping the best validated model");
        restore_best();
        return model;
      }
      throw Error("non-finite pose loss at iteration " + std::to_string(it));
    }
    optimizer.zero_grad();
    loss.backward();
    optimizer.step();
    model.iterations = it + 1;
    if (log.is_open()) {
      std::snprintf(line, sizeof(line), "%lld,%.9g\n", static_cast<long long>(it), value);
      log << line;
    }
    if (use_val && ((it + 1) % config.validate_every == 0 || it + 1 == config.max_iters)) validate_now();
  }
  if (use_val && !best.empty()) restore_best();
  model.net->eval();
  return model;
}

PoseModel train_pose(const PoseTrainConfig& config, const std::vector<FeatureExample>& features,
                     const fs::path& log_path, const std::vector<FeatureExample>* validation) {
  if (features.empty()) throw Error("pose training needs at least one example");
  const std::string& layer = features.front().map.source_layer;
  const std::string& ckpt = features.front().map.source_checkpoint;
  auto convert = [&](const std::vector<FeatureExample>& set) {
    std::vector<PoseExample> out;
    for (const auto& f : set) {
      if (f.map.source_layer != layer || f.map.source_checkpoint != ckpt)
        throw Error("pose training features come from different checkpoints or layers (" + ckpt + "/" + layer +
                    " vs " + f.map.source_checkpoint + "/" + f.map.source_layer + ")");
      out.push_back({prepare_input(f.map, config), f.pose});
    }
    return out;
  };
  const auto train = convert(features);
  std::vector<PoseExample> val;
  if (validation) val = convert(*validation);
  PoseModel model = train_regressor(config, train, "fusion", log_path, validation ? &val : nullptr);
  model.feature_layer = layer;
  model.feature_checkpoint = ckpt;
  return model;
}

std::vector<Pose> regress(const PoseModel& model, const std::vector<ImageTensor>& inputs, int batch) {
  if (batch < 1) throw Error("regress: batch must be positive");
  std::vector<Pose> out;
  out.reserve(inputs.size());
  torch::NoGradGuard no_grad;
  for (std::size_t start = 0; start < inputs.size(); start += static_cast<std::size_t>(batch)) {
    std::vector<const ImageTensor*> chunk;
    for (std::size_t i = start; i < std::min(inputs.size(), start + static_cast<std::size_t>(batch)); ++i) {
      const auto& img = inputs[i];
      if (img.height != model.config.input_size || img.width != model.config.input_size ||
          img.channels != model.config.in_channels())
        throw Error("regress: input does not match the model's input size/channels");
      chunk.push_back(&img);
    }
    const auto result = model.net.ptr()->forward(stack_inputs(chunk)).to(torch::kFloat32).contiguous();
    for (std::int64_t r = 0; r < result.size(0); ++r) out.push_back(pose_from_row(result[r].data_ptr<float>()));
  }
  return out;
}

std::vector<Pose> predict_pose_batch(const PoseModel& model, const std::vector<const ImageTensor*>& images,
                                     Generator* g_ab, const std::string& checkpoint_hash) {
  std::vector<ImageTensor> inputs;
  inputs.reserve(images.size());
  if (model.input_kind == "rgb") {
    for (const auto* img : images) inputs.push_back(prepare_rgb(*img, model.config));
  } else {
    if (!g_ab) throw Error("fusion pose model needs the feature generator");
    if (checkpoint_hash != model.feature_checkpoint)
      throw Error("feature checkpoint " + checkpoint_hash + " does not match the pose model's " +
                  model.feature_checkpoint);
    for (const auto* img : images) inputs.push_back(prepare_input(extract(*g_ab, *img, model.feature_layer), model.config));
  }
  return regress(model, inputs);
}

Pose predict_pose(const PoseModel& model, const ImageTensor& image, Generator* g_ab, const std::string& checkpoint_hash) {
  return predict_pose_batch(model, {&image}, g_ab, checkpoint_hash).front();
}

double quaternion_angle(const Eigen::Quaterniond& q1, const Eigen::Quaterniond& q2) {
  auto unit = [](Eigen::Quaterniond q) {
    const double n = q.norm();
    if (!(n > 0.0)) throw Error("quaternion_angle: zero quaternion");
    if (std::abs(n - 1.0) > 1e-6) warn("quaternion_angle: renormalizing a non-unit quaternion");
    q.coeffs() /= n;
    return q;
  };
  const Eigen::Quaterniond rel = unit(q1).conjugate() * unit(q2);
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w())) * 180.0 / M_PI;
}

PoseEvaluation eval_pose(const std::vector<Pose>& preds, const std::vector<Pose>& gts) {
  if (preds.size() != gts.size()) throw Error("eval_pose: prediction and ground-truth counts differ");
  if (preds.empty()) throw Error("eval_pose: no poses");
  PoseEvaluation ev;
  std::vector<double> t, r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    FrameError e{(preds[i].position - gts[i].position).norm(),
                 quaternion_angle(preds[i].orientation, gts[i].orientation)};
    ev.mean_translation += e.translation;
    ev.mean_rotation += e.rotation;
    t.push_back(e.translation);
    r.push_back(e.rotation);
    ev.per_frame.push_back(e);
  }
  ev.mean_translation /= static_cast<double>(preds.size());
  ev.mean_rotation /= static_cast<double>(preds.size());
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  };
  ev.median_translation = median(t);
  ev.median_rotation = median(r);
  return ev;
}

void export_trajectory(const std::vector<Pose>& preds, const std::vector<Pose>& gts, const std::vector<FrameId>& frames,
                       const fs::path& csv_path, const fs::path& plot_path) {
  if (preds.empty()) throw Error("export_trajectory: no poses");
  if (preds.size() != gts.size() || preds.size() != frames.size())
    throw Error("export_trajectory: predictions, ground truth and frames differ in length");
  ensure_parent_dir(csv_path);
  std::ofstream out(csv_path);
  if (!out) throw Error("cannot write " + csv_path.string());
  out << "frame,px,py,pz,gx,gy,gz\n";
  char line[256];
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i].position;
    const auto& g = gts[i].position;
    std::snprintf(line, sizeof(line), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(frames[i]),
                  p.x(), p.y(), p.z(), g.x(), g.y(), g.z());
    out << line;
  }
  if (!out) throw Error("write failed for " + csv_path.string());
  if (plot_path.empty()) return;
  PlotSeries gt_series{"ground truth", {}, {}, palette(0), false};
  PlotSeries pred_series{"predicted", {}, {}, palette(1), true};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    gt_series.x.push_back(gts[i].position.x());
    gt_series.y.push_back(gts[i].position.y());
    pred_series.x.push_back(preds[i].position.x());
    pred_series.y.push_back(preds[i].position.y());
  }
  PlotOptions o;
  o.title = "trajectory (top view)";
  o.x_label = "x [m]";
  o.y_label = "y [m]";
  o.equal_aspect = true;
  plot_lines({gt_series, pred_series}, o, plot_path);
}

json to_json(const PoseTrainConfig& c) {
  return {{"beta", c.beta},
          {"lr", c.lr},
          {"batch_size", c.batch_size},
          {"max_iters", c.max_iters},
          {"init_std", c.init_std},
          {"input_size", c.input_size},
          {"channel_policy", to_string(c.channel_policy)},
          {"width", c.width},
          {"hidden", c.hidden},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"validate_every", c.validate_every},
          {"seed", c.seed}};
}

PoseTrainConfig pose_config_from_json(const json& j) {
  PoseTrainConfig c;
  c.beta = j.at("beta").get<double>();
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.max_iters = j.at("max_iters").get<std::int64_t>();
  c.init_std = j.at("init_std").get<double>();
  c.input_size = j.at("input_size").get<int>();
  c.channel_policy = parse_channel_policy(j.at("channel_policy").get<std::string>());
  c.width = j.at("width").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.validate_every = j.at("validate_every").get<std::int64_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json to_json(const PoseEvaluation& ev, bool per_frame) {
  json j = {{"mean_translation_m", ev.mean_translation},
            {"mean_rotation_deg", ev.mean_rotation},
            {"median_translation_m", ev.median_translation},
            {"median_rotation_deg", ev.median_rotation},
            {"frames", ev.per_frame.size()}};
  if (per_frame) {
    json rows = json::array();
    for (const auto& e : ev.per_frame) rows.push_back({{"translation_m", e.translation}, {"rotation_deg", e.rotation}});
    j["per_frame"] = std::move(rows);
  }
  return j;
}

}  // namespace invloc
