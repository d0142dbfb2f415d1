#include "dstrip/pipeline.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "dstrip/errors.hpp"
#include "dstrip/manifest.hpp"
#include "dstrip/nifti.hpp"
#include "dstrip/nn/model_io.hpp"

namespace dstrip::cli {

namespace {

constexpr std::uint64_t kStreamTrainMaps = 10;
constexpr std::uint64_t kStreamValMaps = 11;
constexpr std::uint64_t kStreamTestMaps = 12;
constexpr std::uint64_t kStreamTestImages = 13;
constexpr std::uint64_t kStreamTraining = 14;

std::vector<LabelMap> phantoms(std::uint64_t seed, std::uint64_t stream, int count, int size) {
  std::vector<LabelMap> out;
  const std::uint64_t base = derive_seed(seed, stream);
  for (int i = 0; i < count; ++i) out.push_back(synth::make_phantom_labelmap(derive_seed(base, i), {size, size, size}));
  return out;
}

std::string subject_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu", prefix, i);
  return buf;
}

} // namespace

PhantomCohort make_phantom_cohort(const PipelineConfig& cfg) {
  const int n = cfg.net.input_size;
  return {phantoms(cfg.seed, kStreamTrainMaps, cfg.data.n_train, n), phantoms(cfg.seed, kStreamValMaps, cfg.data.n_val, n),
          phantoms(cfg.seed, kStreamTestMaps, cfg.data.n_test, n)};
}

std::vector<TestCase> make_test_cases(const std::vector<LabelMap>& maps, const PipelineConfig& cfg) {
  std::vector<TestCase> out;
  const std::uint64_t base = derive_seed(cfg.seed, kStreamTestImages);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    auto s = synth::synthesize_sample(maps[i], cfg.synth, derive_seed(base, i));
    out.push_back({subject_id("test_", i), std::move(s.image), mask::derive_target_mask(s.warped_labels, cfg.train.closing_iters)});
  }
  return out;
}

eval::CohortReport evaluate_model(const nn::ModelParams<float>& params, const nn::UNetConfig& net,
                                  const std::vector<TestCase>& cases) {
  std::vector<eval::EvalPair> pairs;
  for (const auto& c : cases) pairs.push_back({c.subject, c.truth, nn::predict_mask(params, net, c.image)});
  return eval::evaluate_cohort(pairs);
}

void write_history_json(const nn::TrainHistory& h, const std::filesystem::path& path) {
  nlohmann::json val = nlohmann::json::array();
  for (const auto& v : h.validation) val.push_back({{"step", v.step}, {"loss", v.loss}});
  nlohmann::json doc = {{"train_loss", h.train_loss},
                        {"validation", val},
                        {"best_step", h.best_step},
                        {"best_val", h.best_val},
                        {"plateaued", h.plateaued},
                        {"steps", h.train_loss.size()}};
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << doc.dump(1) << '\n';
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir,
                            const nn::TrainProgress& progress) {
  cfg.validate();
  const bool write = !out_dir.empty();
  PhantomCohort cohort = make_phantom_cohort(cfg);

  if (write) {
    std::filesystem::create_directories(out_dir / "phantoms");
    DatasetManifest m;
    auto emit = [&](const std::vector<LabelMap>& maps, const char* prefix, Split split) {
      for (std::size_t i = 0; i < maps.size(); ++i) {
        auto id = subject_id(prefix, i);
        auto p = out_dir / "phantoms" / (id + ".nii.gz");
        write_nifti(maps[i], p);
        m.entries.push_back({id, p, {}, split});
      }
    };
    emit(cohort.train, "train_", Split::train);
    emit(cohort.val, "val_", Split::val);
    emit(cohort.test, "test_", Split::test);
    write_manifest(m, out_dir / "manifest.csv");
  }

  PipelineResult res;
  res.training = nn::train(cfg.net, cohort.train, cfg.synth, cfg.loss, cohort.val, derive_seed(cfg.seed, kStreamTraining),
                           cfg.train, progress);
  auto cases = make_test_cases(cohort.test, cfg);
  res.report = evaluate_model(res.training.params, cfg.net, cases);

  if (write) {
    nn::save_model(out_dir / "model.bin", cfg.net, res.training.params);
    write_history_json(res.training.history, out_dir / "history.json");
    std::filesystem::create_directories(out_dir / "test");
    for (const auto& c : cases) {
      BinaryMask pred = nn::predict_mask(res.training.params, cfg.net, c.image);
      write_nifti(c.image, out_dir / "test" / (c.subject + "_image.nii.gz"));
      mask::write_mask(c.truth, out_dir / "test" / (c.subject + "_gt.nii.gz"));
      mask::write_mask(pred, out_dir / "test" / (c.subject + "_pred.nii.gz"));
    }
    eval::write_report_csv(res.report, out_dir / "report.csv");
    eval::write_report_json(res.report, out_dir / "report.json");
    std::ofstream(out_dir / "config.toml") << dump_config(cfg);
  }
  return res;
}

} // namespace dstrip::cli
