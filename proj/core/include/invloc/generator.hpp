#pragma once

#include <array>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "invloc/image.hpp"

namespace invloc {

/// The fifteen named stages of the translation generator, input to output.
inline constexpr std::array<std::string_view, 15> kGeneratorLayers = {
    "Conv1", "Conv2", "Conv3", "Res1", "Res2", "Res3", "Res4", "Res5",
    "Res6",  "Res7",  "Res8",  "Res9", "Uconv1", "Uconv2", "Uconv3"};

/// Position in kGeneratorLayers, or -1.
int generator_layer_index(std::string_view name);
std::vector<std::string> generator_layer_names();

struct GeneratorSpec {
  int image_size = 256;
  int in_channels = 3;
  int out_channels = 3;
  int base_channels = 64;  // Conv1 width; Conv2 is 2x, Conv3..Uconv1 4x
  double init_std = 0.02;

  void validate() const;
};

struct TapShape {
  int height = 0;
  int width = 0;
  int channels = 0;
  friend bool operator==(const TapShape&, const TapShape&) = default;
};

/// Activation shape of `layer` for a spec (throws on an unknown layer).
TapShape expected_tap_shape(const GeneratorSpec& spec, std::string_view layer);

/// 70x70 PatchGAN when layers == 3.
struct DiscriminatorSpec {
  int in_channels = 3;
  int base_channels = 64;
  int layers = 3;
  double init_std = 0.02;

  void validate() const;
};

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorSpec& spec);

  torch::Tensor forward(torch::Tensor x);

  /// Runs stages up to the deepest requested tap and returns those activations.
  std::map<std::string, torch::Tensor> activations(torch::Tensor x,
                                                   const std::set<std::string>& taps);

  /// Full forward pass that also records the requested taps.
  torch::Tensor forward_with_taps(torch::Tensor x, const std::set<std::string>& taps,
                                  std::map<std::string, torch::Tensor>& recorded);

  const GeneratorSpec& spec() const { return spec_; }

 private:
  void check_input(const torch::Tensor& x) const;

  GeneratorSpec spec_;
  std::vector<torch::nn::Sequential> stages_;
};
TORCH_MODULE(Generator);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorSpec& spec);
  torch::Tensor forward(const torch::Tensor& x);
  const DiscriminatorSpec& spec() const { return spec_; }

 private:
  DiscriminatorSpec spec_;
  torch::nn::Sequential model_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Zero-mean Gaussian weights, zero biases, for every (transposed) convolution and linear layer.
void init_gaussian(torch::nn::Module& module, double std);

/// {1, C, H, W} float32 tensor from an H×W×C image.
torch::Tensor to_tensor(const ImageTensor& image);
/// Accepts {C, H, W} or {1, C, H, W}.
ImageTensor to_image(const torch::Tensor& tensor);

struct GeneratorOutput {
  ImageTensor image;
  std::map<std::string, torch::Tensor> taps;  // each {C, H, W}
};

/// Inference pass on one image; throws on an unknown tap or a wrong input shape.
GeneratorOutput generator_forward(Generator& generator, const ImageTensor& image,
                                  const std::set<std::string>& taps = {});

}  // namespace invloc
