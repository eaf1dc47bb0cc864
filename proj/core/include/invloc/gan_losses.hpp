#pragma once

#include <cstddef>
#include <functional>

#include <torch/torch.h>

namespace invloc {

/// Any image-to-image mapping: a generator, a discriminator, or a test stand-in.
using TensorMap = std::function<torch::Tensor(const torch::Tensor&)>;

/// mean|G_BA(G_AB(a)) - a| + mean|G_AB(G_BA(b)) - b|
torch::Tensor cycle_loss(const TensorMap& g_ab, const TensorMap& g_ba, const torch::Tensor& batch_a,
                         const torch::Tensor& batch_b);

enum class LossForm { log, least_squares };

LossForm parse_loss_form(const std::string& text);
std::string to_string(LossForm form);

/// Discriminator outputs are raw scores; the log form squashes them with a sigmoid.
struct AdversarialLosses {
  torch::Tensor generator;      // what G minimises (non-saturating in log form)
  torch::Tensor discriminator;  // what D minimises
  /// Value of the minimax term: E[log D(real)] + E[log(1 - D(G(src)))] in log form,
  /// the negated discriminator loss in least-squares form.
  torch::Tensor objective;
};

/// `real_target` are samples of the generator's output domain, `source` its inputs.
AdversarialLosses adversarial_losses(const TensorMap& generator, const TensorMap& discriminator,
                                     const torch::Tensor& real_target, const torch::Tensor& source,
                                     LossForm form);

torch::Tensor discriminator_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake, LossForm form);
torch::Tensor generator_adversarial_loss(const torch::Tensor& d_fake, LossForm form);

/// Number of probabilities clamped to 1e-12 before a logarithm so far.
std::size_t log_clamp_count();

struct ObjectiveTerms {
  double gan_ab = 0.0;  // L_Gan(G_AB, D_B)
  double gan_ba = 0.0;  // L_Gan(G_BA, D_A)
  double cycle = 0.0;
};

/// gan_ab + gan_ba + omega * cycle
double total_objective(const ObjectiveTerms& terms, double omega);

}  // namespace invloc
