#include "dstrip/commands.hpp"

#include <algorithm>
#include <functional>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"

#include "dstrip/config.hpp"
#include "dstrip/errors.hpp"
#include "dstrip/evalmetrics.hpp"
#include "dstrip/labelprep.hpp"
#include "dstrip/manifest.hpp"
#include "dstrip/nifti.hpp"
#include "dstrip/nn/model_io.hpp"
#include "dstrip/pipeline.hpp"

namespace dstrip::cli {

namespace fs = std::filesystem;

namespace {

bool is_nifti(const fs::path& p) {
  auto s = p.filename().string();
  auto ends = [&](const std::string& suf) { return s.size() > suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0; };
  return ends(".nii") || ends(".nii.gz");
}

std::string stem_of(const fs::path& p) {
  auto s = p.filename().string();
  for (const char* suf : {".nii.gz", ".nii"}) {
    std::string x(suf);
    if (s.size() > x.size() && s.compare(s.size() - x.size(), x.size(), x) == 0) return s.substr(0, s.size() - x.size());
  }
  return s;
}

std::vector<fs::path> nifti_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_nifti(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

LabelMap conform_labels(const LabelMap& s, int size) {
  Grid target = Grid::cube(size, 1.0, "LIA");
  if (s.grid == target) return s;
  return conform(s, target, Interp::nearest);
}

// Training and validation label maps from a directory (manifest.csv when
// present, every NIfTI file otherwise) or from a manifest file.
void load_training_maps(const fs::path& where, int size, std::vector<LabelMap>& train, std::vector<LabelMap>& val) {
  fs::path manifest = fs::is_directory(where) ? where / "manifest.csv" : where;
  if (fs::is_regular_file(manifest)) {
    auto m = read_manifest(manifest);
    for (const auto& e : m.entries) {
      if (e.split == Split::train) train.push_back(conform_labels(read_labelmap(e.labels), size));
      if (e.split == Split::val) val.push_back(conform_labels(read_labelmap(e.labels), size));
    }
  } else {
    for (const auto& p : nifti_files(where)) train.push_back(conform_labels(read_labelmap(p), size));
  }
  if (train.empty()) throw Error("no training label maps found under " + where.string());
}

void apply_loss_override(PipelineConfig& cfg, const std::string& loss) {
  if (loss.empty()) return;
  cfg.loss.kind = nn::loss_from_string(loss);
  cfg.net.head = cfg.loss.kind == nn::LossKind::dice ? nn::HeadMode::softmax2 : nn::HeadMode::sdt1;
}

std::vector<int> parse_dims(const std::vector<int>& d) {
  if (d.size() == 1) return {d[0], d[0], d[0]};
  if (d.size() == 3) return d;
  throw ParameterError("--dims takes one or three values");
}

} // namespace

int run_subcommand(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Skull-stripping toolkit trained on synthesized images"};
  app.name("dstrip");
  app.require_subcommand(1);
  app.fallthrough(false);
  std::function<void()> action;

  // phantom
  std::uint64_t ph_seed = 1;
  std::vector<int> ph_dims{32};
  int ph_count = 1, ph_val = 0, ph_test = 0;
  std::string ph_out;
  auto* ph = app.add_subcommand("phantom", "Generate procedural head label maps and a manifest");
  ph->add_option("--seed", ph_seed, "Random seed")->capture_default_str();
  ph->add_option("--dims", ph_dims, "Grid size: one value (cube) or three")->capture_default_str()->expected(1, 3);
  ph->add_option("--count", ph_count, "Number of label maps")->capture_default_str()->check(CLI::PositiveNumber);
  ph->add_option("--val", ph_val, "How many of the maps to mark as validation")->capture_default_str()->check(CLI::NonNegativeNumber);
  ph->add_option("--test", ph_test, "How many of the maps to mark as test")->capture_default_str()->check(CLI::NonNegativeNumber);
  ph->add_option("--out", ph_out, "Output directory")->required();
  ph->callback([&] {
    action = [&] {
      if (ph_val + ph_test > ph_count) throw ParameterError("--val + --test exceeds --count");
      auto d = parse_dims(ph_dims);
      fs::create_directories(ph_out);
      DatasetManifest m;
      for (int i = 0; i < ph_count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "phantom_%03d", i);
        auto s = synth::make_phantom_labelmap(derive_seed(ph_seed, i), {d[0], d[1], d[2]});
        fs::path p = fs::path(ph_out) / (std::string(name) + ".nii.gz");
        write_nifti(s, p);
        Split split = i < ph_count - ph_val - ph_test ? Split::train : i < ph_count - ph_test ? Split::val : Split::test;
        m.entries.push_back({name, p, {}, split});
      }
      write_manifest(m, fs::path(ph_out) / "manifest.csv");
      out << "wrote " << ph_count << " label maps to " << ph_out << "\n";
    };
  });

  // labelprep
  std::string lp_image, lp_manual, lp_out;
  int lp_k = 6, lp_degree = 3;
  std::uint64_t lp_seed = 1;
  auto* lp = app.add_subcommand("labelprep", "Fuse manual brain labels with GMM labels of the non-brain content");
  lp->add_option("--image", lp_image, "Intensity image")->required()->check(CLI::ExistingFile);
  lp->add_option("--brain-labels", lp_manual, "Manual label map (brain labels define the boundary)")->required()->check(CLI::ExistingFile);
  lp->add_option("--k", lp_k, "GMM components")->capture_default_str()->check(CLI::PositiveNumber);
  lp->add_option("--degree", lp_degree, "Polynomial degree of the bias correction")->capture_default_str()->check(CLI::NonNegativeNumber);
  lp->add_option("--seed", lp_seed, "Random seed")->capture_default_str();
  lp->add_option("--out", lp_out, "Fused label map")->required();
  lp->callback([&] {
    action = [&] {
      auto image = read_volume(lp_image);
      auto manual = read_labelmap(lp_manual, LabelCategory::brain);
      auto r = labelprep::prepare_labels(image, manual, lp_k, lp_degree, lp_seed);
      if (!r.correction.fitted) err << "warning: bias correction skipped (" << r.correction.status << ")\n";
      write_nifti(r.fused, lp_out);
      out << "GMM converged=" << (r.gmm.converged ? "yes" : "no") << " after " << r.gmm.iterations << " iterations\n";
    };
  });

  // synth
  std::string sy_labels, sy_config, sy_image, sy_out_labels, sy_mask;
  std::uint64_t sy_seed = 1;
  auto* sy = app.add_subcommand("synth", "Synthesize one training image from a label map");
  sy->add_option("--labels", sy_labels, "Input label map")->required()->check(CLI::ExistingFile);
  sy->add_option("--config", sy_config, "Config file with a [synth] section (defaults when omitted)")->check(CLI::ExistingFile);
  sy->add_option("--seed", sy_seed, "Random seed")->capture_default_str();
  sy->add_option("--out-image", sy_image, "Synthesized image")->required();
  sy->add_option("--out-labels", sy_out_labels, "Warped label map")->required();
  sy->add_option("--out-mask", sy_mask, "Target brain mask derived from the warped labels");
  sy->callback([&] {
    action = [&] {
      synth::SynthConfig sc = sy_config.empty() ? default_config().synth : load_synth_config(sy_config);
      auto s = synth::synthesize_sample(read_labelmap(sy_labels), sc, sy_seed);
      write_nifti(s.image, sy_image);
      write_nifti(s.warped_labels, sy_out_labels);
      if (!sy_mask.empty()) mask::write_mask(mask::derive_target_mask(s.warped_labels), sy_mask);
    };
  });

  // mask
  std::string mk_labels, mk_out;
  int mk_close = 10;
  auto* mk = app.add_subcommand("mask", "Derive the brain mask target from a label map");
  mk->add_option("--labels", mk_labels, "Input label map")->required()->check(CLI::ExistingFile);
  mk->add_option("--closing", mk_close, "Closing iterations")->capture_default_str()->check(CLI::NonNegativeNumber);
  mk->add_option("--out", mk_out, "Output mask")->required();
  mk->callback([&] {
    action = [&] { mask::write_mask(mask::derive_target_mask(read_labelmap(mk_labels), mk_close), mk_out); };
  });

  // sdt
  std::string sd_mask, sd_out;
  auto* sd = app.add_subcommand("sdt", "Signed distance transform of a mask (mm, negative inside)");
  sd->add_option("--mask", sd_mask, "Input mask (nonzero = inside)")->required()->check(CLI::ExistingFile);
  sd->add_option("--out", sd_out, "Output distance image")->required();
  sd->callback([&] {
    action = [&] { write_nifti(mask::sdt(mask::read_mask(sd_mask)), sd_out); };
  });

  // train
  std::string tr_labels, tr_config, tr_loss, tr_out, tr_history;
  std::uint64_t tr_seed = 0;
  auto* tr = app.add_subcommand("train", "Train a U-Net on images synthesized from label maps");
  tr->add_option("--labels", tr_labels, "Directory of label maps (uses manifest.csv when present) or a manifest file")
      ->required()
      ->check(CLI::ExistingPath);
  tr->add_option("--config", tr_config, "Pipeline config file (defaults when omitted)")->check(CLI::ExistingFile);
  tr->add_option("--loss", tr_loss, "Override the loss: dice, usdt or wsdt")->check(CLI::IsMember({"dice", "usdt", "wsdt"}));
  auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "Override the config seed");
  tr->add_option("--out", tr_out, "Model file")->required();
  tr->add_option("--history", tr_history, "Write the loss history as JSON");
  tr->callback([&] {
    action = [&] {
      PipelineConfig cfg = tr_config.empty() ? default_config() : load_config(tr_config);
      apply_loss_override(cfg, tr_loss);
      if (tr_seed_opt->count()) cfg.seed = tr_seed;
      cfg.validate();
      std::vector<LabelMap> train_maps, val_maps;
      load_training_maps(tr_labels, cfg.net.input_size, train_maps, val_maps);
      auto res = nn::train(cfg.net, train_maps, cfg.synth, cfg.loss, val_maps, cfg.seed, cfg.train,
                           [&](int step, double loss, const nn::ValidationPoint* v) {
                             if (v) err << "step " << step << " train " << loss << " val " << v->loss << "\n";
                           });
      nn::save_model(tr_out, cfg.net, res.params);
      if (!tr_history.empty()) write_history_json(res.history, tr_history);
      out << "trained " << res.history.train_loss.size() << " steps, best validation loss " << res.history.best_val
          << " at step " << res.history.best_step << "\n";
    };
  });

  // strip
  std::string st_model, st_image, st_mask, st_stripped;
  auto* st = app.add_subcommand("strip", "Predict the brain mask of an image");
  st->add_option("--model", st_model, "Model file")->required()->check(CLI::ExistingFile);
  st->add_option("--image", st_image, "Input image")->required()->check(CLI::ExistingFile);
  st->add_option("--out-mask", st_mask, "Predicted brain mask")->required();
  st->add_option("--out-stripped", st_stripped, "Image multiplied by the mask");
  st->callback([&] {
    action = [&] {
      auto model = nn::load_model(st_model);
      Volume x = read_volume(st_image);
      Grid cube = Grid::cube(model.config.input_size, 1.0, "LIA");
      Volume xc = x.grid == cube ? x : conform(x, cube, Interp::trilinear);
      BinaryMask mc = nn::predict_mask(model.params, model.config, synth::normalize_minmax(xc));
      BinaryMask m(x.grid);
      if (x.grid == cube) {
        m = mc;
      } else {
        LabelMap lm(cube, {{0, {"background", LabelCategory::background}}, {1, {"brain", LabelCategory::brain}}});
        for (std::size_t i = 0; i < lm.data.size(); ++i) lm.data[i] = mc.data[i];
        auto back = conform(lm, x.grid, Interp::nearest);
        for (std::size_t i = 0; i < back.data.size(); ++i) m.data[i] = back.data[i] != 0;
      }
      mask::write_mask(m, st_mask);
      if (!st_stripped.empty()) write_nifti(nn::apply_mask(x, m), st_stripped);
    };
  });

  // eval
  std::string ev_gt, ev_pred, ev_out;
  auto* ev = app.add_subcommand("eval", "Score predicted masks against ground truth (matched by file name)");
  ev->add_option("--gt", ev_gt, "Directory of ground-truth masks")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--pred", ev_pred, "Directory of predicted masks")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--out", ev_out, "CSV report; a JSON mirror is written next to it")->required();
  ev->callback([&] {
    action = [&] {
      std::map<std::string, fs::path> preds;
      for (const auto& p : nifti_files(ev_pred)) preds[stem_of(p)] = p;
      std::vector<eval::EvalPair> pairs;
      for (const auto& g : nifti_files(ev_gt)) {
        auto it = preds.find(stem_of(g));
        if (it == preds.end()) throw Error("no prediction for " + g.filename().string());
        pairs.push_back({stem_of(g), mask::read_mask(g), mask::read_mask(it->second)});
      }
      auto r = eval::evaluate_cohort(pairs, ev_out);
      out << "subjects " << r.summary.count << " dice " << r.summary.dice.mean << " hd_mm " << r.summary.hausdorff_mm.mean << "\n";
    };
  });

  // pipeline
  std::string pl_config, pl_out;
  std::uint64_t pl_seed = 0;
  auto* pl = app.add_subcommand("pipeline", "phantom -> synth -> train -> strip -> eval from one config");
  pl->add_option("--config", pl_config, "Pipeline config file")->required()->check(CLI::ExistingFile);
  pl->add_option("--out", pl_out, "Output directory")->capture_default_str();
  auto* pl_seed_opt = pl->add_option("--seed", pl_seed, "Override the config seed");
  pl_out = "pipeline_out";
  pl->callback([&] {
    action = [&] {
      PipelineConfig cfg = load_config(pl_config);
      if (pl_seed_opt->count()) cfg.seed = pl_seed;
      auto res = run_pipeline(cfg, pl_out, [&](int step, double loss, const nn::ValidationPoint* v) {
        if (v) err << "step " << step << " train " << loss << " val " << v->loss << "\n";
      });
      const auto& s = res.report.summary;
      out << "test dice mean " << s.dice.mean << " hd_mm mean " << s.hausdorff_mm.mean << " hd95_mm mean "
          << s.hausdorff95_mm.mean << "\n";
    };
  });

  // config
  bool cf_dump = false;
  std::string cf_check;
  auto* cf = app.add_subcommand("config", "Print the default config or check a config file");
  auto* dump_opt = cf->add_flag("--dump-defaults", cf_dump, "Print every config key with its default value");
  cf->add_option("--check", cf_check, "Parse and validate a config file")->check(CLI::ExistingFile)->excludes(dump_opt);
  cf->callback([&] {
    action = [&] {
      if (!cf_check.empty()) {
        load_config(cf_check);
        out << "ok\n";
      } else if (cf_dump) {
        out << dump_config(default_config());
      } else {
        throw CLI::CallForHelp();
      }
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    if (action) action();
  } catch (const CLI::CallForHelp&) {
    out << cf->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

} // namespace dstrip::cli
