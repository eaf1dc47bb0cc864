#include "invloc/adam.hpp"

#include <cmath>

#include "invloc/common.hpp"

namespace invloc {

Adam::Adam(NamedTensors params, AdamOptions options) : params_(std::move(params)), options_(options) {
  if (!(options_.lr > 0.0)) throw Error("learning rate must be positive");
  for (const auto& [name, p] : params_) {
    m_.push_back(torch::zeros_like(p));
    v_.push_back(torch::zeros_like(p));
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_)
    if (p.grad().defined()) p.mutable_grad().zero_();
}

void Adam::step() {
  torch::NoGradGuard no_grad;
  ++steps_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    if (!p.grad().defined()) continue;
    const auto& g = p.grad();
    m_[i].mul_(options_.beta1).add_(g, 1.0 - options_.beta1);
    v_[i].mul_(options_.beta2).addcmul_(g, g, 1.0 - options_.beta2);
    const auto denom = (v_[i] / bc2).sqrt_().add_(options_.eps);
    p.addcdiv_(m_[i], denom, -options_.lr / bc1);
  }
}

NamedTensors Adam::state() const {
  NamedTensors out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back(params_[i].first + "/m", m_[i]);
    out.emplace_back(params_[i].first + "/v", v_[i]);
  }
  return out;
}

void Adam::load_state(const std::function<torch::Tensor(const std::string&)>& lookup, std::int64_t steps) {
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].copy_(lookup(params_[i].first + "/m"));
    v_[i].copy_(lookup(params_[i].first + "/v"));
  }
  steps_ = steps;
}

NamedTensors named_parameters(torch::nn::Module& module, const std::string& prefix) {
  NamedTensors out;
  for (auto& p : module.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
  return out;
}

}  // namespace invloc
