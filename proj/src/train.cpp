#include "swa/train.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "swa/coder.hpp"
#include "swa/rng.hpp"

namespace swa {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp_symbol(double v) {
  return std::min(static_cast<double>(kSupportMax), std::max(static_cast<double>(kSupportMin), v));
}

std::vector<double> commit_symbols(const std::vector<double>& raw) {
  std::vector<double> out(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) out[i] = clamp_symbol(round_half_even(raw[i]));
  return out;
}

bool is_rate_gain(const std::string& name) { return name.rfind("rate.", 0) == 0; }

}  // namespace

TrainState::TrainState(EntropyModel m) : model(std::move(m)) {
  model.for_each_param([this](const std::string&, Tensor& t) {
    m1.emplace_back(static_cast<size_t>(t.numel()), 0.0);
    m2.emplace_back(static_cast<size_t>(t.numel()), 0.0);
  });
}

LossParts clip_loss(const EntropyModel& m, const std::vector<double>& raw_latents,
                    const Dims3& dims, int rate_idx, double lambda) {
  const int c = m.config.channels;
  const int64_t tokens = dims.tokens();
  const int64_t n = tokens * c;
  if (static_cast<int64_t>(raw_latents.size()) != n)
    throw ShapeError("clip_loss: latent size mismatch");
  if (lambda < 0.0) throw ContractError("clip_loss: lambda must be >= 0");

  const std::vector<double> committed = commit_symbols(raw_latents);
  Tensor committed_t({static_cast<int>(tokens), c}, committed);
  std::vector<FrameFields> fields = forward_teacher_forced(m, committed_t, dims, rate_idx);

  const int hw = dims.height * dims.width;
  Tensor rate_sum = Tensor::scalar(0.0);
  Tensor sq_sum = Tensor::scalar(0.0);
  for (int l = 0; l < dims.frames; ++l) {
    const size_t base = static_cast<size_t>(l) * hw * c;
    std::vector<double> frame_syms(committed.begin() + base, committed.begin() + base + static_cast<size_t>(hw) * c);
    rate_sum = add(rate_sum, sum(gaussian_bits(fields[l].mu, fields[l].sigma, frame_syms,
                                               kSupportMin, kSupportMax)));

    Tensor frame_committed({hw, c}, frame_syms);
    Tensor frame_raw({hw, c}, std::vector<double>(raw_latents.begin() + base,
                                                  raw_latents.begin() + base + static_cast<size_t>(hw) * c));
    Tensor diff = sub(frame_raw, apply_lrp(frame_committed, fields[l].lrp));
    sq_sum = add(sq_sum, sum(mul(diff, diff)));
  }

  LossParts parts;
  parts.rate_bits_per_latent = rate_sum.at(0) / static_cast<double>(n);
  parts.mse = sq_sum.at(0) / static_cast<double>(n);
  parts.total = add(affine(rate_sum, 1.0 / static_cast<double>(n), 0.0),
                    affine(sq_sum, lambda / static_cast<double>(n), 0.0));
  return parts;
}

double cosine_lr(int64_t step, int64_t total_steps, double lr_hi, double lr_lo) {
  if (total_steps <= 0) return lr_hi;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return lr_lo + 0.5 * (lr_hi - lr_lo) * (1.0 + std::cos(kPi * frac));
}

StepLog train_step(TrainState& state, const std::vector<double>& clip, const Dims3& dims,
                   const TrainOptions& opt) {
  auto tape = std::make_shared<Tape>();
  state.model.for_each_param([&](const std::string& name, Tensor& t) {
    if (opt.freeze_rate_gains && is_rate_gain(name)) return;
    tape->watch(t);
  });

  LossParts parts = clip_loss(state.model, clip, dims, opt.rate_idx, opt.lambda);
  const double loss = parts.total.at(0);
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "train: non-finite loss at step " << state.step
        << " (rate=" << parts.rate_bits_per_latent << ", mse=" << parts.mse << ")";
    throw ContractError(msg.str());
  }
  tape->backward(parts.total);

  const double lr = cosine_lr(state.step, opt.steps, opt.lr_hi, opt.lr_lo);
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(opt.beta1, t);
  const double bc2 = 1.0 - std::pow(opt.beta2, t);
  size_t idx = 0;
  state.model.for_each_param([&](const std::string& name, Tensor& p) {
    const size_t slot = idx++;
    if (opt.freeze_rate_gains && is_rate_gain(name)) return;
    const std::vector<double> g = tape->grad(p);
    auto& m1 = state.m1[slot];
    auto& m2 = state.m2[slot];
    for (size_t i = 0; i < g.size(); ++i) {
      m1[i] = opt.beta1 * m1[i] + (1.0 - opt.beta1) * g[i];
      m2[i] = opt.beta2 * m2[i] + (1.0 - opt.beta2) * g[i] * g[i];
      p.data()[i] -= lr * (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + opt.adam_eps);
    }
  });

  StepLog log;
  log.step = state.step;
  log.lr = lr;
  log.rate_bits_per_latent = parts.rate_bits_per_latent;
  log.mse = parts.mse;
  state.step++;
  return log;
}

TrainResult train(const SynthConfig& synth, const ModelConfig& config, const TrainOptions& opt,
                  uint64_t init_seed) {
  TrainState state(EntropyModel::init(config, init_seed));
  std::vector<StepLog> log;
  for (int t = 0; t < opt.steps; ++t) {
    SynthConfig step_cfg = synth;
    step_cfg.seed = synth.seed + 1 + static_cast<uint64_t>(t);
    const std::vector<double> clip = synth_clip(step_cfg);
    log.push_back(train_step(state, clip, synth.dims, opt));
  }
  return TrainResult{std::move(state.model), std::move(log)};
}

std::string train_log_csv(const std::vector<StepLog>& log) {
  std::ostringstream out;
  out << "step,lr,rate_bits_per_latent,mse\n";
  out.precision(10);
  for (const StepLog& row : log)
    out << row.step << "," << row.lr << "," << row.rate_bits_per_latent << "," << row.mse << "\n";
  return out.str();
}

double eval_rate_bits_per_latent(const EntropyModel& m, const std::vector<double>& raw_latents,
                                 const Dims3& dims, int k, int rate_idx) {
  if (k < 0) throw ContractError("eval: k must be >= 0");
  const int c = m.config.channels;
  const int hw = dims.height * dims.width;
  const std::vector<double> committed = commit_symbols(raw_latents);

  double bits = 0.0;
  for (int l = 0; l < dims.frames; ++l) {
    const int f0 = std::max(0, l - k);
    const Dims3 sub{l - f0 + 1, dims.height, dims.width};
    Tensor sub_lat({static_cast<int>(sub.tokens()), c},
                   std::vector<double>(committed.begin() + static_cast<size_t>(f0) * hw * c,
                                       committed.begin() + static_cast<size_t>(l + 1) * hw * c));
    std::vector<FrameFields> fields = forward_teacher_forced(m, sub_lat, sub, rate_idx);
    const FrameFields& last = fields.back();

    const size_t base = static_cast<size_t>(l) * hw * c;
    std::vector<int> syms(static_cast<size_t>(hw) * c);
    std::vector<double> mu(static_cast<size_t>(hw) * c), sigma(static_cast<size_t>(hw) * c);
    for (int64_t i = 0; i < static_cast<int64_t>(hw) * c; ++i) {
      syms[static_cast<size_t>(i)] = static_cast<int>(committed[base + static_cast<size_t>(i)]);
      mu[static_cast<size_t>(i)] = last.mu.data()[i];
      sigma[static_cast<size_t>(i)] = last.sigma.data()[i];
    }
    bits += estimate_rate_bits(syms, mu, sigma);
  }
  return bits / (static_cast<double>(dims.tokens()) * c);
}

double context_free_bits_per_latent(const std::vector<double>& raw_latents, double sigma) {
  const std::vector<double> committed = commit_symbols(raw_latents);
  std::vector<int> syms(committed.size());
  for (size_t i = 0; i < committed.size(); ++i) syms[i] = static_cast<int>(committed[i]);
  const std::vector<double> mu(committed.size(), 0.0);
  const std::vector<double> sg(committed.size(), sigma);
  return estimate_rate_bits(syms, mu, sg) / static_cast<double>(committed.size());
}

ContextFreeBaseline fit_context_free_baseline(const std::vector<double>& raw_latents) {
  // Golden-section search on log sigma.
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = std::log(1e-2), hi = std::log(1e3);
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = context_free_bits_per_latent(raw_latents, std::exp(x1));
  double f2 = context_free_bits_per_latent(raw_latents, std::exp(x2));
  for (int it = 0; it < 100; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = context_free_bits_per_latent(raw_latents, std::exp(x1));
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = context_free_bits_per_latent(raw_latents, std::exp(x2));
    }
  }
  ContextFreeBaseline out;
  out.sigma = std::exp(0.5 * (lo + hi));
  out.bits_per_latent = context_free_bits_per_latent(raw_latents, out.sigma);
  return out;
}

GradCheckReport grad_check(const ModelConfig& config, double lambda, uint64_t seed,
                           bool freeze_rate_gains) {
  config.validate();
  const Dims3 dims{1, 3, 3};
  SynthConfig synth;
  synth.seed = seed;
  synth.dims = dims;
  synth.channels = config.channels;
  // Unit-scale data keeps the coding cost off the far Gaussian tails, where
  // curvature would dominate the h^2 truncation error of the probe itself.
  synth.amplitude = 1.0;
  const std::vector<double> clip = synth_clip(synth);
  const int rate_idx = 0;

  EntropyModel model = EntropyModel::init(config, seed + 1);
  // Nudge gains off their all-ones init so their gradients are generic.
  {
    Rng rng(seed + 2);
    for (Tensor* g : {&model.gain_in, &model.gain_mu, &model.gain_sigma, &model.gain_lrp})
      for (int64_t i = 0; i < g->numel(); ++i) g->data()[i] = 1.0 + 0.05 * rng.normal();
  }

  auto tape = std::make_shared<Tape>();
  model.for_each_param([&](const std::string& name, Tensor& t) {
    if (freeze_rate_gains && is_rate_gain(name)) return;
    tape->watch(t);
  });
  tape->backward(clip_loss(model, clip, dims, rate_idx, lambda).total);

  std::map<std::string, std::vector<double>> analytic;
  model.for_each_param([&](const std::string& name, Tensor& t) {
    if (freeze_rate_gains && is_rate_gain(name))
      analytic[name] = std::vector<double>(static_cast<size_t>(t.numel()), 0.0);
    else
      analytic[name] = tape->grad(t);
  });
  tape = nullptr;  // drop the tape so the finite-difference sweeps run untracked

  GradCheckReport report;
  const double h = 1e-5;
  model.for_each_param([&](const std::string& name, Tensor& t) {
    GradCheckGroup group;
    group.name = name;
    group.frozen = freeze_rate_gains && is_rate_gain(name);
    const std::vector<double>& ga = analytic[name];
    for (int64_t i = 0; i < t.numel(); ++i) {
      group.max_abs_grad = std::max(group.max_abs_grad, std::fabs(ga[static_cast<size_t>(i)]));
      if (group.frozen) continue;
      const double keep = t.data()[i];
      t.data()[i] = keep + h;
      const double up = clip_loss(model, clip, dims, rate_idx, lambda).total.at(0);
      t.data()[i] = keep - h;
      const double dn = clip_loss(model, clip, dims, rate_idx, lambda).total.at(0);
      t.data()[i] = keep;
      const double gn = (up - dn) / (2.0 * h);
      const double rel = std::fabs(ga[static_cast<size_t>(i)] - gn) /
                         std::max({std::fabs(ga[static_cast<size_t>(i)]), std::fabs(gn), 1e-3});
      group.max_rel_error = std::max(group.max_rel_error, rel);
    }
    report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
    report.groups.push_back(std::move(group));
  });
  return report;
}

}  // namespace swa
