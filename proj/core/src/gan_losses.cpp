#include "invloc/gan_losses.hpp"

#include <atomic>

#include "invloc/common.hpp"

namespace invloc {
namespace {

constexpr double kLogFloor = 1e-12;
std::atomic<std::size_t> g_clamped{0};

// log(p) with p floored at 1e-12; counts the clamped entries.
torch::Tensor safe_log(const torch::Tensor& p) {
  const auto clamped = (p < kLogFloor).sum().item<std::int64_t>();
  if (clamped > 0) {
    if (g_clamped.fetch_add(static_cast<std::size_t>(clamped)) == 0)
      warn("adversarial loss: probability below 1e-12 clamped before log");
  }
  return torch::log(torch::clamp_min(p, kLogFloor));
}

}  // namespace

torch::Tensor cycle_loss(const TensorMap& g_ab, const TensorMap& g_ba, const torch::Tensor& batch_a,
                         const torch::Tensor& batch_b) {
  if (batch_a.numel() == 0 || batch_b.numel() == 0) throw Error("cycle_loss: empty batch");
  if (batch_a.dim() != 4 || batch_b.dim() != 4 ||
      batch_a.sizes().slice(2) != batch_b.sizes().slice(2))
    throw Error("cycle_loss: batches must be N×C×H×W with equal spatial size");
  const torch::Tensor rec_a = g_ba(g_ab(batch_a));
  const torch::Tensor rec_b = g_ab(g_ba(batch_b));
  if (rec_a.sizes() != batch_a.sizes() || rec_b.sizes() != batch_b.sizes())
    throw Error("cycle_loss: reconstruction shape differs from input");
  return (rec_a - batch_a).abs().mean() + (rec_b - batch_b).abs().mean();
}

LossForm parse_loss_form(const std::string& text) {
  if (text == "log") return LossForm::log;
  if (text == "least_squares") return LossForm::least_squares;
  throw Error("unknown loss form '" + text + "' (expected log or least_squares)");
}

std::string to_string(LossForm form) { return form == LossForm::log ? "log" : "least_squares"; }

torch::Tensor discriminator_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake, LossForm form) {
  if (form == LossForm::log) {
    const auto p_real = torch::sigmoid(d_real), p_fake = torch::sigmoid(d_fake);
    return -(safe_log(p_real).mean() + safe_log(1.0 - p_fake).mean());
  }
  return (d_real - 1.0).pow(2).mean() + d_fake.pow(2).mean();
}

torch::Tensor generator_adversarial_loss(const torch::Tensor& d_fake, LossForm form) {
  if (form == LossForm::log) return -safe_log(torch::sigmoid(d_fake)).mean();
  return (d_fake - 1.0).pow(2).mean();
}

AdversarialLosses adversarial_losses(const TensorMap& generator, const TensorMap& discriminator,
                                     const torch::Tensor& real_target, const torch::Tensor& source,
                                     LossForm form) {
  const torch::Tensor fake = generator(source);
  const torch::Tensor d_real = discriminator(real_target);
  const torch::Tensor d_fake = discriminator(fake);
  if (!torch::isfinite(d_real).all().item<bool>() || !torch::isfinite(d_fake).all().item<bool>())
    throw Error("adversarial_losses: discriminator produced non-finite scores");
  AdversarialLosses out;
  out.discriminator = discriminator_loss(d_real, d_fake, form);
  out.generator = generator_adversarial_loss(d_fake, form);
  out.objective = -out.discriminator;
  return out;
}

std::size_t log_clamp_count() { return g_clamped.load(); }

double total_objective(const ObjectiveTerms& terms, double omega) {
  return terms.gan_ab + terms.gan_ba + omega * terms.cycle;
}

}  // namespace invloc
