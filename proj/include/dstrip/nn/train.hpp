#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dstrip/losses.hpp"
#include "dstrip/nn/adam.hpp"
#include "dstrip/nn/unet.hpp"
#include "dstrip/synthgen.hpp"

namespace dstrip::nn {

/// dice: two-channel soft Dice on the softmax2 head.
/// usdt / wsdt: (weighted) squared error on the sdt1 head.
enum class LossKind { dice, usdt, wsdt };

const char* to_string(LossKind k);
LossKind loss_from_string(const std::string& s);

struct LossConfig {
  LossKind kind = LossKind::dice;
  double b = 1e-3;       // weight outside the band, wsdt only
  double h = 4.0;        // band half-width in mm
  double cap = 20.0;     // SDT target clamp in mm
  double dice_eps = 0.0;
  bool usdt_zero_weight = false; // usdt with b = 0 instead of b = 1

  /// Weight outside the band actually used for the sdt losses.
  double effective_b() const;
  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

struct TrainConfig {
  AdamHyper adam;
  int eval_every = 100;
  int patience = 5;
  double min_delta = 1e-4; // absolute improvement needed to reset patience
  int max_steps = 5000;
  int closing_iters = 10;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct ValidationPoint {
  int step = 0; // optimizer steps taken when evaluated
  double loss = 0.0;
};

struct TrainHistory {
  std::vector<double> train_loss; // one entry per optimizer step
  std::vector<ValidationPoint> validation;
  int best_step = 0;
  double best_val = 0.0;
  bool plateaued = false;
};

struct TrainResult {
  ModelParams<float> params; // parameters at the best validation loss
  TrainHistory history;
};

using TrainProgress = std::function<void(int step, double train_loss, const ValidationPoint* val)>;

/// Loss value and gradient with respect to the network output for one sample.
/// Throws ParameterError when the loss does not fit the head.
template <typename T>
loss::LossResult<T> sample_loss(const FeatureGrid<T>& output, const BinaryMask& target, const LossConfig& lc);

/// Synthesis-driven training. Every step draws a training map uniformly,
/// synthesizes an image, derives the mask target and takes one Adam step.
/// Validation runs every eval_every steps on one fixed-seed sample per
/// validation map; training stops after `patience` evaluations without an
/// improvement larger than min_delta, or at max_steps. Label maps must already
/// be on the input_size^3 grid. Throws TrainingError if a loss turns non-finite.
TrainResult train(const UNetConfig& cfg, const std::vector<LabelMap>& train_maps, const synth::SynthConfig& synth_cfg,
                  const LossConfig& loss_cfg, const std::vector<LabelMap>& val_maps, std::uint64_t seed,
                  const TrainConfig& tc, const TrainProgress& progress = {});

/// Mean validation loss of `params` over fixed-seed samples of `maps`.
double validation_loss(const ModelParams<float>& params, const UNetConfig& cfg, const std::vector<LabelMap>& maps,
                       const synth::SynthConfig& synth_cfg, const LossConfig& loss_cfg, std::uint64_t seed,
                       int closing_iters = 10);

} // namespace dstrip::nn
