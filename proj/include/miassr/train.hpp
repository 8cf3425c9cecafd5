#pragma once

#include <functional>
#include <string>
#include <vector>

#include "miassr/checkpoint.hpp"
#include "miassr/critic.hpp"
#include "miassr/features.hpp"
#include "miassr/generator.hpp"
#include "miassr/losses.hpp"
#include "miassr/patches.hpp"
#include "miassr/rng.hpp"
#include "miassr/volume.hpp"

namespace miassr::train {

struct TrainSchedule {
  int64_t warmup_steps = 100000;
  int64_t adv_steps = 100000;
  int64_t finetune_steps = 10000;
  int64_t batch_size = 16;
  int64_t patch = 96;  // HR patch budget H_p; actual HR size is floor(s*floor(H_p/s))
  double lr0 = 1e-4;
  int64_t lr_halving_period = 50000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double loss_guard = 1e8;  // updates whose loss exceeds this are skipped
  std::vector<double> scale_grid;  // empty = default_scale_grid()
  bool scale_continuous = false;   // sample uniformly between grid min/max instead
  int64_t n_critic = 1;            // critic updates per generator update
  double wgan_clip = 0.0;          // hard weight clip for plain wgan; 0 = off
  uint64_t seed = 1;
  int64_t log_every = 1;
  int64_t checkpoint_every = 0;  // periodic saves in steps; 0 = phase ends only

  void validate() const;
  std::vector<double> grid() const;  // scale_grid or the default
};

std::vector<double> default_scale_grid();  // 1.1, 1.2, ..., 4.0

// lr0 halved once per lr_halving_period: lr0 * 2^-floor(step / period).
double lr_at(int64_t step, const TrainSchedule& s);

double sample_scale(Rng& rng, const std::vector<double>& grid);

struct AdamState {
  std::vector<Tensor> m, v;  // aligned with the owning state's param order
  int64_t t = 0;
};

struct TrainState {
  model::GeneratorState gen;
  bool has_critic = false;
  model::CriticState critic;
  AdamState adam_gen, adam_critic;
  Rng rng{1};
  int64_t step = 0;        // global, monotone across phases
  int64_t phase_step = 0;  // within the current phase (drives the lr schedule)
  std::string phase = "init";
  int64_t skipped_guard = 0;
  int64_t skipped_nonfinite = 0;
};

struct StepLog {
  int64_t step = 0;
  std::string phase;
  double scale = 0, l1 = 0, adv = 0, perc = 0, total = 0, lr = 0;
  int skipped = 0;
};
using LogSink = std::function<void(const StepLog&)>;
std::string csv_header();
std::string csv_row(const StepLog& row);

struct LossOptions {
  loss::LossWeights weights;
  loss::AdvKind kind = loss::AdvKind::WganGp;
  const model::FeatureExtractor* perceptual = nullptr;  // required when eta > 0
};

// Test hook: replaces the loss value used for the guard decision (the real
// gradients are still the ones applied when the step is kept).
using GuardProbe = std::function<double(int64_t step, double total)>;

TrainState init_train_state(const model::GeneratorConfig& cfg, const TrainSchedule& sched,
                            const std::string& scheme = "kaiming-uniform");

// Critic gets its own seeded stream so attaching one never perturbs the
// generator's trajectory.
void attach_critic(TrainState& st, const model::CriticConfig& cfg, uint64_t seed,
                   const std::string& scheme = "kaiming-uniform");

// L1-only phase.
void warmup_train(TrainState& st, const std::vector<data::Volume>& vols, const TrainSchedule& sched,
                  int64_t steps, const LogSink& log = {}, const GuardProbe& probe = {});

// Combined-objective phase: per step, n_critic critic updates then one
// generator update.  gamma == 0 skips every critic interaction, collapsing to
// the warm-up trajectory.  gp_log, when given, records the mean critic input
// gradient norm of each step's penalty term (wgangp only).
void adversarial_train(TrainState& st, const std::vector<data::Volume>& vols, const TrainSchedule& sched,
                       const LossOptions& opts, int64_t steps, const LogSink& log = {},
                       const GuardProbe& probe = {}, std::vector<double>* gp_log = nullptr);

// Trunk-preserving channel transfer.  Depth/width/kernel/meta-hidden must
// match (no silent reshaping).  With equal channel counts everything is
// copied; otherwise the input conv and the meta output layer are freshly
// initialized and the rest is copied bit-exactly.
model::GeneratorState transfer_generator(const model::GeneratorState& src,
                                         const model::GeneratorConfig& dst_cfg, Rng& rng);

// Checkpointing: bit-exact round trip of parameters, optimizer moments, RNG
// stream and counters.
io::Archive state_archive(const TrainState& st, const std::string& config_dump);
TrainState state_from_archive(const io::Archive& a);
void save_checkpoint(const std::string& path, const TrainState& st, const std::string& config_dump = "");
TrainState load_checkpoint(const std::string& path);

}  // namespace miassr::train
