#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "invloc/adam.hpp"
#include "invloc/dataset.hpp"
#include "invloc/gan_losses.hpp"
#include "invloc/generator.hpp"

namespace invloc {

struct CycleGanSpec {
  GeneratorSpec generator;
  DiscriminatorSpec discriminator;
};

struct GanTrainConfig {
  double omega = 20.0;  // cycle-consistency weight
  double lr = 2e-4;     // fixed, no decay
  int batch_size = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-10;
  std::int64_t max_iters = 45000;
  std::int64_t checkpoint_every = 1000;
  int image_size = 256;
  LossForm loss_form = LossForm::log;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One row of the loss log. `total` is the minimax objective
/// gan_ab + gan_ba + omega * cycle evaluated before the iteration's updates.
struct LossRecord {
  std::int64_t iter = 0;
  double total = 0.0;
  double gan_ab = 0.0;
  double gan_ba = 0.0;
  double cycle = 0.0;
};

struct CycleGanModel {
  Generator g_ab{nullptr};
  Generator g_ba{nullptr};
  Discriminator d_a{nullptr};
  Discriminator d_b{nullptr};
};

struct Checkpoint {
  CycleGanSpec spec;
  GanTrainConfig config;
  std::int64_t iteration = 0;
  std::vector<LossRecord> history;
  CycleGanModel model;
  // Adam moments, keyed like the parameters; empty before the first step.
  NamedTensors generator_optimizer;
  NamedTensors discriminator_optimizer;

  /// Digest of the G_AB parameters, which is all that feature extraction reads.
  std::string feature_hash() const;
};

/// Fresh networks with Gaussian init drawn from the config seed.
Checkpoint init_checkpoint(const CycleGanSpec& spec, const GanTrainConfig& config);

using TrainObserver = std::function<void(const LossRecord&)>;

/// Trains from scratch for config.max_iters iterations. Writes `<out_dir>/loss.csv`,
/// `<out_dir>/checkpoint_latest.bin` every checkpoint_every iterations and the
/// final `<out_dir>/checkpoint.bin`. A non-finite loss aborts with Error; the
/// last periodic checkpoint on disk is left untouched.
Checkpoint train_cyclegan(const GanTrainConfig& config, const CycleGanSpec& spec,
                          const DomainSplit& split, const std::filesystem::path& out_dir,
                          const TrainObserver& observer = {});

/// Continues a checkpoint until `max_iters` total iterations, appending to the loss log.
Checkpoint resume_cyclegan(Checkpoint checkpoint, const DomainSplit& split,
                           const std::filesystem::path& out_dir, std::int64_t max_iters,
                           const TrainObserver& observer = {});

/// Objective terms of a checkpoint's networks, averaged over `samples`
/// (a, b) draws that depend only on `seed`, so two checkpoints can be compared
/// on identical data. No parameter is updated.
ObjectiveTerms evaluate_objective(const Checkpoint& checkpoint, const DomainSplit& split, int samples,
                                  std::uint64_t seed);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_loss_log_header(const std::filesystem::path& path);
void append_loss_log(const std::filesystem::path& path, const LossRecord& record);
std::vector<LossRecord> read_loss_log(const std::filesystem::path& path);

nlohmann::json to_json(const GeneratorSpec& spec);
nlohmann::json to_json(const DiscriminatorSpec& spec);
nlohmann::json to_json(const GanTrainConfig& config);

}  // namespace invloc
