#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swa/model.hpp"
#include "swa/synth.hpp"

namespace swa {

struct TrainOptions {
  int steps = 500;
  double lr_hi = 1e-3;
  double lr_lo = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda = 100.0;  // distortion weight
  int rate_idx = 0;
  bool freeze_rate_gains = false;
};

struct StepLog {
  int64_t step = 0;
  double lr = 0.0;
  double rate_bits_per_latent = 0.0;
  double mse = 0.0;

  double loss(double lambda) const { return rate_bits_per_latent + lambda * mse; }
};

// Adam state plus the step counter driving the cosine schedule.
struct TrainState {
  EntropyModel model;
  std::vector<std::vector<double>> m1, m2;
  int64_t step = 0;

  explicit TrainState(EntropyModel m);
};

struct LossParts {
  Tensor total;  // scalar: rate_bits_per_latent + lambda * mse
  double rate_bits_per_latent = 0.0;
  double mse = 0.0;
};

// Differentiable objective on one clip of raw latents: Gaussian coding cost
// of the round-half-even committed symbols plus lambda times the refined
// reconstruction error. Conditioning uses the committed latents only; the
// LRP output never feeds back into the context.
LossParts clip_loss(const EntropyModel& m, const std::vector<double>& raw_latents,
                    const Dims3& dims, int rate_idx, double lambda);

double cosine_lr(int64_t step, int64_t total_steps, double lr_hi, double lr_lo);

// One optimizer step on one synthetic clip; returns the log row.
StepLog train_step(TrainState& state, const std::vector<double>& clip, const Dims3& dims,
                   const TrainOptions& opt);

struct TrainResult {
  EntropyModel model;
  std::vector<StepLog> log;  // CSV rows: step,lr,rate_bits_per_latent,mse
};

// Deterministic toy training: step t draws the clip with seed
// synth.seed + t so runs with one seed are bit-reproducible.
TrainResult train(const SynthConfig& synth, const ModelConfig& config, const TrainOptions& opt,
                  uint64_t init_seed);

std::string train_log_csv(const std::vector<StepLog>& log);

// Held-out rate under a restart context policy: frame l is predicted from
// at most k committed previous frames, recomputed from the restart point.
double eval_rate_bits_per_latent(const EntropyModel& m, const std::vector<double>& raw_latents,
                                 const Dims3& dims, int k, int rate_idx);

// Context-free reference coder: mu = 0, one global sigma fitted to the
// symbols by golden-section search on the coding cost.
struct ContextFreeBaseline {
  double sigma = 1.0;
  double bits_per_latent = 0.0;
};
ContextFreeBaseline fit_context_free_baseline(const std::vector<double>& raw_latents);
double context_free_bits_per_latent(const std::vector<double>& raw_latents, double sigma);

// ---- gradient verification ----

struct GradCheckGroup {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
  bool frozen = false;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_error = 0.0;
  bool passed(double tolerance) const { return max_rel_error <= tolerance; }
};

// Central finite differences (h = 1e-5) of the clip loss against the tape
// gradients for every parameter group of a tiny model. The relative error
// uses an absolute guard of 1e-7 for near-zero coordinates.
GradCheckReport grad_check(const ModelConfig& config, double lambda, uint64_t seed,
                           bool freeze_rate_gains = false);

}  // namespace swa
