#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace invloc {

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-10;
};

/// Adam with bias correction and serialisable moment state.
class Adam {
 public:
  Adam(NamedTensors params, AdamOptions options);

  void zero_grad();
  void step();

  std::int64_t step_count() const { return steps_; }
  const AdamOptions& options() const { return options_; }

  /// First/second moments named `<param>/m` and `<param>/v`.
  NamedTensors state() const;
  void load_state(const std::function<torch::Tensor(const std::string&)>& lookup, std::int64_t steps);

 private:
  NamedTensors params_;
  std::vector<torch::Tensor> m_, v_;
  AdamOptions options_;
  std::int64_t steps_ = 0;
};

NamedTensors named_parameters(torch::nn::Module& module, const std::string& prefix);

}  // namespace invloc
