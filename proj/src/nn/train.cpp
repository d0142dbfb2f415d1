#include "dstrip/nn/train.hpp"

#include <cmath>
#include <limits>

#include "dstrip/errors.hpp"
#include "dstrip/maskops.hpp"
#include "dstrip/nn/fpenv.hpp"

namespace dstrip::nn {

namespace {

constexpr std::uint64_t kStreamSteps = 1;
constexpr std::uint64_t kStreamValidation = 2;

void check_head(const UNetConfig& cfg, const LossConfig& lc) {
  bool want_softmax = lc.kind == LossKind::dice;
  if (want_softmax != (cfg.head == HeadMode::softmax2)) {
    throw ParameterError(std::string("loss '") + to_string(lc.kind) + "' does not match head '" + to_string(cfg.head) + "'");
  }
}

void check_maps(const UNetConfig& cfg, const std::vector<LabelMap>& maps, const char* what) {
  for (const auto& m : maps) {
    const auto& d = m.grid.dims();
    if (d[0] != cfg.input_size || d[1] != cfg.input_size || d[2] != cfg.input_size) {
      throw ParameterError(std::string(what) + ": label maps must be conformed to the network input size");
    }
  }
}

} // namespace

const char* to_string(LossKind k) {
  switch (k) {
  case LossKind::dice:
    return "dice";
  case LossKind::usdt:
    return "usdt";
  case LossKind::wsdt:
    return "wsdt";
  }
  return "?";
}

LossKind loss_from_string(const std::string& s) {
  if (s == "dice") return LossKind::dice;
  if (s == "usdt") return LossKind::usdt;
  if (s == "wsdt") return LossKind::wsdt;
  throw ParameterError("unknown loss '" + s + "' (expected dice, usdt or wsdt)");
}

double LossConfig::effective_b() const {
  if (kind == LossKind::usdt) return usdt_zero_weight ? 0.0 : 1.0;
  return b;
}

void LossConfig::validate() const {
  if (!(b >= 0.0 && b <= 1.0)) throw ParameterError("loss.b must be in [0, 1]");
  if (!(h >= 0.0) || !std::isfinite(h)) throw ParameterError("loss.h must be finite and >= 0");
  if (!(cap > 0.0) || !std::isfinite(cap)) throw ParameterError("loss.cap must be positive");
  if (!(dice_eps >= 0.0)) throw ParameterError("loss.dice_eps must be >= 0");
}

void TrainConfig::validate() const {
  if (!(adam.lr > 0.0)) throw ParameterError("train.lr must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ParameterError("train.beta1 must be in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ParameterError("train.beta2 must be in [0, 1)");
  if (!(adam.eps > 0.0)) throw ParameterError("train.eps must be positive");
  if (eval_every < 1) throw ParameterError("train.eval_every must be >= 1");
  if (patience < 1) throw ParameterError("train.patience must be >= 1");
  if (!(min_delta >= 0.0)) throw ParameterError("train.min_delta must be >= 0");
  if (max_steps < 1) throw ParameterError("train.max_steps must be >= 1");
  if (closing_iters < 0) throw ParameterError("train.closing_iters must be >= 0");
}

template <typename T>
loss::LossResult<T> sample_loss(const FeatureGrid<T>& output, const BinaryMask& target, const LossConfig& lc) {
  if (lc.kind == LossKind::dice) {
    if (output.channels != 2) throw ParameterError("dice loss needs a two-channel output");
    return loss::dice_loss(loss::one_hot_target<T>(target), output, lc.dice_eps);
  }
  if (output.channels != 1) throw ParameterError("distance losses need a one-channel output");
  return loss::wsdt_loss(loss::sdt_target<T>(target, lc.cap), output, lc.effective_b(), lc.h);
}

template loss::LossResult<float> sample_loss(const FeatureGrid<float>&, const BinaryMask&, const LossConfig&);
template loss::LossResult<double> sample_loss(const FeatureGrid<double>&, const BinaryMask&, const LossConfig&);

double validation_loss(const ModelParams<float>& params, const UNetConfig& cfg, const std::vector<LabelMap>& maps,
                       const synth::SynthConfig& synth_cfg, const LossConfig& loss_cfg, std::uint64_t seed,
                       int closing_iters) {
  if (maps.empty()) return std::numeric_limits<double>::quiet_NaN();
  FlushDenormals ftz;
  const std::uint64_t base = derive_seed(seed, kStreamValidation);
  double total = 0.0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    auto s = synth::synthesize_sample(maps[i], synth_cfg, derive_seed(base, i));
    BinaryMask y = mask::derive_target_mask(s.warped_labels, closing_iters);
    auto fwd = unet_forward(params, cfg, to_feature_grid<float>(s.image));
    total += sample_loss(fwd.output, y, loss_cfg).value;
  }
  return total / maps.size();
}

TrainResult train(const UNetConfig& cfg, const std::vector<LabelMap>& train_maps, const synth::SynthConfig& synth_cfg,
                  const LossConfig& loss_cfg, const std::vector<LabelMap>& val_maps, std::uint64_t seed,
                  const TrainConfig& tc, const TrainProgress& progress) {
  cfg.validate();
  synth_cfg.validate();
  loss_cfg.validate();
  tc.validate();
  if (train_maps.empty()) throw ParameterError("train: at least one training label map is required");
  check_head(cfg, loss_cfg);
  check_maps(cfg, train_maps, "train");
  check_maps(cfg, val_maps, "train (validation)");
  FlushDenormals ftz;

  TrainResult res;
  ModelParams<float> params = init_params<float>(cfg, derive_seed(seed, 0));
  AdamState<float> adam = AdamState<float>::init(params, tc.adam);
  res.params = params;
  res.history.best_val = std::numeric_limits<double>::infinity();
  int stale = 0;
  const std::uint64_t step_base = derive_seed(seed, kStreamSteps);

  for (int step = 0; step < tc.max_steps; ++step) {
    Rng pick(derive_seed(step_base, static_cast<std::uint64_t>(step)));
    const LabelMap& s = train_maps[pick.below(train_maps.size())];
    auto sample = synth::synthesize_sample(s, synth_cfg, pick.next_u64());
    BinaryMask y = mask::derive_target_mask(sample.warped_labels, tc.closing_iters);

    auto fwd = unet_forward(params, cfg, to_feature_grid<float>(sample.image));
    auto l = sample_loss(fwd.output, y, loss_cfg);
    if (!std::isfinite(l.value)) {
      throw TrainingError("training diverged: non-finite loss at step " + std::to_string(step + 1));
    }
    auto grads = unet_backward(params, cfg, fwd.cache, l.grad);
    adam_step(params, grads, adam);
    res.history.train_loss.push_back(l.value);

    const int taken = step + 1;
    const bool eval_now = taken % tc.eval_every == 0 || taken == tc.max_steps;
    ValidationPoint vp;
    if (eval_now) {
      vp.step = taken;
      vp.loss = val_maps.empty() ? l.value
                                 : validation_loss(params, cfg, val_maps, synth_cfg, loss_cfg, seed, tc.closing_iters);
      if (!std::isfinite(vp.loss)) throw TrainingError("training diverged: non-finite validation loss at step " + std::to_string(taken));
      res.history.validation.push_back(vp);
      if (vp.loss < res.history.best_val - tc.min_delta) {
        res.history.best_val = vp.loss;
        res.history.best_step = taken;
        res.params = params;
        stale = 0;
      } else {
        ++stale;
      }
    }
    if (progress) progress(taken, l.value, eval_now ? &vp : nullptr);
    if (eval_now && stale >= tc.patience) {
      res.history.plateaued = true;
      break;
    }
  }
  return res;
}

} // namespace dstrip::nn
