#include "invloc/generator.hpp"

#include <algorithm>

#include "invloc/common.hpp"

namespace invloc {
namespace nn = torch::nn;

namespace {

nn::Conv2d conv(int in, int out, int kernel, int stride = 1, int padding = 0) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding).bias(true));
}

nn::ConvTranspose2d upconv(int in, int out) {
  return nn::ConvTranspose2d(
      nn::ConvTranspose2dOptions(in, out, 3).stride(2).padding(1).output_padding(1).bias(true));
}

nn::InstanceNorm2d inorm(int channels) {
  return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(false).track_running_stats(false));
}

nn::ReflectionPad2d reflect(int pad) { return nn::ReflectionPad2d(nn::ReflectionPad2dOptions(pad)); }

}  // namespace

int generator_layer_index(std::string_view name) {
  const auto it = std::find(kGeneratorLayers.begin(), kGeneratorLayers.end(), name);
  return it == kGeneratorLayers.end() ? -1 : static_cast<int>(it - kGeneratorLayers.begin());
}

std::vector<std::string> generator_layer_names() {
  return {kGeneratorLayers.begin(), kGeneratorLayers.end()};
}

void GeneratorSpec::validate() const {
  if (image_size < 8 || image_size % 4 != 0)
    throw Error("generator image_size must be a multiple of 4 and at least 8");
  if (in_channels < 1 || out_channels < 1 || base_channels < 1)
    throw Error("generator channel counts must be positive");
  if (!(init_std > 0.0)) throw Error("generator init_std must be positive");
}

TapShape expected_tap_shape(const GeneratorSpec& spec, std::string_view layer) {
  const int index = generator_layer_index(layer);
  if (index < 0) throw Error("unknown generator layer '" + std::string(layer) + "'");
  const int s = spec.image_size, b = spec.base_channels;
  if (index == 0) return {s, s, b};
  if (index == 1) return {s / 2, s / 2, 2 * b};
  if (index <= 12) return {s / 4, s / 4, 4 * b};  // Conv3, Res1-9, Uconv1
  if (index == 13) return {s / 2, s / 2, 2 * b};
  return {s, s, spec.out_channels};
}

void DiscriminatorSpec::validate() const {
  if (in_channels < 1 || base_channels < 1 || layers < 1)
    throw Error("discriminator channel counts and depth must be positive");
  if (!(init_std > 0.0)) throw Error("discriminator init_std must be positive");
}

ResidualBlockImpl::ResidualBlockImpl(int channels) {
  body_ = register_module("body", nn::Sequential(reflect(1), conv(channels, channels, 3), inorm(channels),
                                                 nn::ReLU(), reflect(1), conv(channels, channels, 3),
                                                 inorm(channels)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + body_->forward(x); }

GeneratorImpl::GeneratorImpl(const GeneratorSpec& spec) : spec_(spec) {
  spec_.validate();
  const int b = spec_.base_channels;
  std::vector<nn::Sequential> stages;
  stages.emplace_back(nn::Sequential(reflect(3), conv(spec_.in_channels, b, 7), inorm(b), nn::ReLU()));
  stages.emplace_back(nn::Sequential(conv(b, 2 * b, 3, 2, 1), inorm(2 * b), nn::ReLU()));
  stages.emplace_back(nn::Sequential(conv(2 * b, 4 * b, 3, 2, 1), inorm(4 * b), nn::ReLU()));
  for (int i = 0; i < 9; ++i) stages.emplace_back(nn::Sequential(ResidualBlock(4 * b)));
  // Uconv1 keeps the bottleneck resolution; the two upsampling steps follow.
  stages.emplace_back(nn::Sequential(reflect(1), conv(4 * b, 4 * b, 3), inorm(4 * b), nn::ReLU()));
  stages.emplace_back(nn::Sequential(upconv(4 * b, 2 * b), inorm(2 * b), nn::ReLU()));
  stages.emplace_back(nn::Sequential(upconv(2 * b, b), inorm(b), nn::ReLU(), reflect(3),
                                     conv(b, spec_.out_channels, 7), nn::Tanh()));
  for (std::size_t i = 0; i < stages.size(); ++i) {
    register_module(std::string(kGeneratorLayers[i]), stages[i]);
    stages_.push_back(std::move(stages[i]));
  }
  init_gaussian(*this, spec_.init_std);
}

void GeneratorImpl::check_input(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != spec_.in_channels || x.size(2) != spec_.image_size ||
      x.size(3) != spec_.image_size)
    throw Error("generator expects input N×" + std::to_string(spec_.in_channels) + "×" +
                std::to_string(spec_.image_size) + "×" + std::to_string(spec_.image_size) + ", got " +
                c10::str(x.sizes()));
}

torch::Tensor GeneratorImpl::forward(torch::Tensor x) {
  check_input(x);
  for (auto& stage : stages_) x = stage->forward(x);
  return x;
}

std::map<std::string, torch::Tensor> GeneratorImpl::activations(torch::Tensor x,
                                                                const std::set<std::string>& taps) {
  check_input(x);
  int deepest = -1;
  for (const auto& name : taps) {
    const int idx = generator_layer_index(name);
    if (idx < 0) throw Error("unknown tap layer '" + name + "'");
    deepest = std::max(deepest, idx);
  }
  std::map<std::string, torch::Tensor> out;
  for (int i = 0; i <= deepest; ++i) {
    x = stages_[i]->forward(x);
    const std::string name(kGeneratorLayers[i]);
    if (taps.contains(name)) out.emplace(name, x);
  }
  return out;
}

torch::Tensor GeneratorImpl::forward_with_taps(torch::Tensor x, const std::set<std::string>& taps,
                                               std::map<std::string, torch::Tensor>& recorded) {
  for (const auto& name : taps)
    if (generator_layer_index(name) < 0) throw Error("unknown tap layer '" + name + "'");
  check_input(x);
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    x = stages_[i]->forward(x);
    const std::string name(kGeneratorLayers[i]);
    if (taps.contains(name)) recorded[name] = x;
  }
  return x;
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorSpec& spec) : spec_(spec) {
  spec_.validate();
  const int nd = spec_.base_channels;
  nn::Sequential model;
  model->push_back(nn::Conv2d(nn::Conv2dOptions(spec_.in_channels, nd, 4).stride(2).padding(1)));
  model->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  int mult = 1;
  for (int n = 1; n < spec_.layers; ++n) {
    const int prev = mult;
    mult = std::min(1 << n, 8);
    model->push_back(nn::Conv2d(nn::Conv2dOptions(nd * prev, nd * mult, 4).stride(2).padding(1)));
    model->push_back(inorm(nd * mult));
    model->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  }
  const int prev = mult;
  mult = std::min(1 << spec_.layers, 8);
  model->push_back(nn::Conv2d(nn::Conv2dOptions(nd * prev, nd * mult, 4).stride(1).padding(1)));
  model->push_back(inorm(nd * mult));
  model->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  model->push_back(nn::Conv2d(nn::Conv2dOptions(nd * mult, 1, 4).stride(1).padding(1)));
  model_ = register_module("model", model);
  init_gaussian(*this, spec_.init_std);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) { return model_->forward(x); }

void init_gaussian(torch::nn::Module& module, double std) {
  torch::NoGradGuard no_grad;
  auto init_one = [std](nn::Module& m) {
    const bool has_weights = m.as<nn::Conv2d>() || m.as<nn::ConvTranspose2d>() || m.as<nn::Linear>();
    if (!has_weights) return;
    for (auto& p : m.named_parameters(/*recurse=*/false)) {
      if (p.key() == "weight") p.value().normal_(0.0, std);
      else if (p.key() == "bias") p.value().zero_();
    }
  };
  // include_self would need the module to live in a shared_ptr, which is not
  // yet true inside constructors
  init_one(module);
  for (auto& child : module.modules(/*include_self=*/false)) init_one(*child);
}

torch::Tensor to_tensor(const ImageTensor& image) {
  auto t = torch::from_blob(const_cast<float*>(image.data.data()),
                            {image.height, image.width, image.channels}, torch::kFloat32);
  return t.permute({2, 0, 1}).unsqueeze(0).contiguous();
}

ImageTensor to_image(const torch::Tensor& tensor) {
  torch::Tensor t = tensor.detach();
  if (t.dim() == 4) {
    if (t.size(0) != 1) throw Error("to_image expects a single image");
    t = t.squeeze(0);
  }
  if (t.dim() != 3) throw Error("to_image expects a C×H×W tensor");
  t = t.permute({1, 2, 0}).to(torch::kFloat32).contiguous();
  ImageTensor out(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), static_cast<int>(t.size(2)));
  std::copy_n(t.data_ptr<float>(), out.data.size(), out.data.begin());
  return out;
}

GeneratorOutput generator_forward(Generator& generator, const ImageTensor& image,
                                  const std::set<std::string>& taps) {
  torch::NoGradGuard no_grad;
  const auto dtype = generator->parameters().front().scalar_type();
  std::map<std::string, torch::Tensor> recorded;
  torch::Tensor out = generator->forward_with_taps(to_tensor(image).to(dtype), taps, recorded);
  GeneratorOutput result;
  result.image = to_image(out);
  for (auto& [name, act] : recorded) result.taps.emplace(name, act.squeeze(0));
  return result;
}

}  // namespace invloc
