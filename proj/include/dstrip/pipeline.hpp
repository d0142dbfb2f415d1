#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dstrip/config.hpp"
#include "dstrip/evalmetrics.hpp"
#include "dstrip/nn/train.hpp"

namespace dstrip::cli {

struct PhantomCohort {
  std::vector<LabelMap> train, val, test;
};

/// Phantom label maps on the input_size^3 grid, each split drawn from its own
/// seed stream.
PhantomCohort make_phantom_cohort(const PipelineConfig& cfg);

struct TestCase {
  std::string subject;
  Volume image;
  BinaryMask truth;
};

/// One synthesized test image per map with its derived target mask.
std::vector<TestCase> make_test_cases(const std::vector<LabelMap>& maps, const PipelineConfig& cfg);

/// Predicted masks scored against the cases.
eval::CohortReport evaluate_model(const nn::ModelParams<float>& params, const nn::UNetConfig& net,
                                  const std::vector<TestCase>& cases);

struct PipelineResult {
  nn::TrainResult training;
  eval::CohortReport report;
};

/// phantom -> synth -> train -> strip -> eval from one config; every random
/// draw derives from cfg.seed. When `out_dir` is non-empty the phantoms,
/// manifest, model, test images, masks, report (CSV and JSON) and training
/// history are written there.
PipelineResult run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir,
                            const nn::TrainProgress& progress = {});

/// Training history as JSON.
void write_history_json(const nn::TrainHistory& h, const std::filesystem::path& path);

} // namespace dstrip::cli
