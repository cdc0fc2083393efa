#include "lcz/commands.hpp"

#include <cstdio>
#include <iostream>
#include <string>

#include "lcz/checkpoint.hpp"
#include "lcz/gradcheck.hpp"
#include "lcz/mapper.hpp"
#include "lcz/metrics.hpp"

namespace lcz {

namespace {

constexpr const char* kUsage = R"(usage: lcz <subcommand> [--config PATH] [--key value ...]

subcommands:
  synth      generate a seeded synthetic patch container (synth_out, per_class, separation)
  train      train a model (train_set, val_set -> checkpoint_out, history_out)
  evaluate   score a checkpoint on a test container (metrics_out, confusion_out)
  map        sliding-window classification of a scene raster (labels_out, png_out)
  params     print trainable/total parameter counts for the configured model
  gradcheck  run the finite-difference verification suite

Any configuration key can be given as --key value; --config loads a key = value
file first. Exit codes: 0 ok, 2 configuration error, 3 data error,
4 verification failure.
)";

Palette palette_from_config(const RunConfig& config) {
  if (config.has("palette")) return read_palette_csv(config.get_input_path("palette"));
  return default_palette();
}

}  // namespace

int cmd_synth(const RunConfig& config) {
  const int per_class = static_cast<int>(config.get_int("per_class", 40, 1, 1 << 20));
  const double separation = config.get_double("separation", 6.0);
  const std::string out = config.get_string_or("synth_out", "synth.lczp");
  const std::uint64_t seed = config.get_seed();
  const std::uint64_t noise_seed =
      config.has("noise_seed")
          ? static_cast<std::uint64_t>(config.get_int("noise_seed", 0, 0, 1LL << 62))
          : seed;
  PatchDataset ds = synth_generate(seed, per_class, separation, noise_seed);
  write_container(ds, out);
  std::printf("wrote %zu patches (%d per class, separation %g) to %s\n", ds.count(),
              per_class, separation, out.c_str());
  return 0;
}

int cmd_train(const RunConfig& config) {
  const ModelConfig model_config = config.model_config();
  const TrainConfig train_config = config.train_config();
  const std::string train_path = config.get_input_path("train_set");
  const std::string val_path = config.get_input_path("val_set");
  const std::string checkpoint_out = config.get_string_or("checkpoint_out", "model.s2lz");
  const std::string history_out = config.get_string_or("history_out", "history.csv");

  PatchDataset train_raw = read_container(train_path);
  PatchDataset val_raw = read_container(val_path);
  const BandStats stats = fit_band_stats(train_raw);
  PatchDataset train_set = standardize(train_raw, stats);
  PatchDataset val_set = standardize(val_raw, stats);

  Rng init_rng(mix_seed(train_config.seed, 0xC0FFEE));
  Model<float> model = build<float>(model_config, &init_rng);
  const auto counts = count_parameters(model);
  std::printf("model f=%d n=%d depth=%d fusion=%s pooling=%s: %lld trainable parameters\n",
              model_config.f, model_config.n, model_config.depth(),
              model_config.fusion ? "on" : "off",
              model_config.pooling == PoolingMode::Double ? "double" : "max-only",
              counts.trainable);

  TrainResult result = train(model, train_set, val_set, train_config);
  restore_snapshot(model, result.best);
  save_checkpoint(checkpoint_out, model, stats);
  write_history_csv(result.history, history_out);
  if (config.has("band_stats_out")) {
    write_band_stats_csv(stats, config.get_string("band_stats_out"));
  }

  const char* reason = result.reason == StopReason::EarlyStop  ? "early stop"
                       : result.reason == StopReason::MaxEpochs ? "max epochs"
                                                                : "divergence";
  std::printf("trained %zu epochs (%s), best validation accuracy %.4f at epoch %d\n",
              result.history.size(), reason,
              result.history.best_epoch >= 0
                  ? result.history.val_acc[result.history.best_epoch]
                  : 0.0,
              result.history.best_epoch);
  std::printf("checkpoint: %s\nhistory: %s\n", checkpoint_out.c_str(), history_out.c_str());
  if (result.reason == StopReason::Diverged) {
    std::fprintf(stderr, "training diverged (non-finite loss); kept the last finite "
                         "checkpoint\n");
    return 4;
  }
  return 0;
}

int cmd_evaluate(const RunConfig& config) {
  const std::string checkpoint_path = config.get_input_path("checkpoint");
  const std::string test_path = config.get_input_path("test_set");
  const std::string metrics_out = config.get_string_or("metrics_out", "metrics.csv");
  const std::string confusion_out = config.get_string_or("confusion_out", "confusion.csv");

  LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  // Explicit architecture keys must agree with the checkpoint.
  if ((config.has("f") && config.get_int("f", 0, 1, 4096) != loaded.config.f) ||
      (config.has("n") && config.get_int("n", 0, 1, 64) != loaded.config.n) ||
      (config.has("fusion") && config.get_bool("fusion", true) != loaded.config.fusion) ||
      (config.has("pooling") &&
       config.model_config().pooling != loaded.config.pooling)) {
    throw config_error("configured architecture disagrees with the checkpoint (f/n/fusion/"
                       "pooling)");
  }

  PatchDataset test_set = standardize(read_container(test_path), loaded.stats);
  const int batch = static_cast<int>(config.get_int("batch_size", 32, 1, 1 << 20));
  EvalResult eval = evaluate_dataset(loaded.model, test_set, batch);

  std::vector<int> truth(test_set.count());
  for (std::size_t i = 0; i < test_set.count(); ++i) truth[i] = test_set.labels[i];
  const ConfusionMatrix cm = confusion(truth, eval.predictions);

  const WeightMatrix weights = config.has("weights_csv")
                                   ? read_weight_matrix_csv(config.get_input_path("weights_csv"))
                                   : WeightMatrix::identity();
  const MetricsReport report = compute_metrics(cm, weights);
  write_metrics_csv(report, metrics_out);
  write_confusion_csv(normalize_rows(cm), confusion_out);

  std::printf("samples %zu loss %.6f\n", test_set.count(), eval.loss);
  std::printf("kappa %.4f aa %.4f wa %.4f oa %.4f oa_b %.4f oa_nb %.4f\n", report.kappa,
              report.aa, report.wa, report.oa, report.oa_b, report.oa_nb);
  std::printf("metrics: %s\nconfusion: %s\n", metrics_out.c_str(), confusion_out.c_str());
  return 0;
}

int cmd_map(const RunConfig& config) {
  const std::string checkpoint_path = config.get_input_path("checkpoint");
  const std::string raster_path = config.get_input_path("raster");
  const std::string labels_out = config.get_string_or("labels_out", "labels.pgm");
  const std::string png_out = config.get_string_or("png_out", "map.png");
  const int step = static_cast<int>(config.get_int("step", 10, 1, 1 << 20));
  const int batch = static_cast<int>(config.get_int("map_batch", 256, 1, 1 << 20));
  const double gsd_m = config.get_double("gsd_m", 10.0);
  const Palette palette = palette_from_config(config);

  LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  SceneRaster scene = read_raster(raster_path);
  LabelRaster grid =
      slide_map(scene, loaded.model, loaded.stats, step, batch, config.workers());
  write_label_grid(grid, gsd_m, labels_out);
  render_png(grid, palette, png_out);
  std::printf("classified %dx%d cells (step %d px, output spacing %.6g m)\n", grid.rows,
              grid.cols, step, gsd_m * step);
  std::printf("labels: %s\nmap: %s\n", labels_out.c_str(), png_out.c_str());
  return 0;
}

int cmd_gradcheck(const RunConfig&) {
  const GradCheckReport report = run_gradcheck();
  for (const auto& line : report.lines) {
    std::printf("%-22s max_rel_err %.3e  tol %.0e  %s\n", line.kind.c_str(), line.max_rel_err,
                line.tolerance, line.pass() ? "PASS" : "FAIL");
  }
  if (!report.all_pass()) {
    std::fprintf(stderr, "gradient verification failed\n");
    return 4;
  }
  return 0;
}

int cmd_params(const RunConfig& config) {
  const ModelConfig model_config = config.model_config();
  Model<float> model = build<float>(model_config, nullptr);
  const auto counts = count_parameters(model);
  std::printf("trainable %lld\ntotal %lld\n", counts.trainable, counts.total);
  return 0;
}

int run_cli(int argc, char** argv) {
  try {
    if (argc < 2) {
      std::fputs(kUsage, stderr);
      return 2;
    }
    const std::string sub = argv[1];
    if (sub == "--help" || sub == "-h" || sub == "help") {
      std::fputs(kUsage, stdout);
      return 0;
    }

    RunConfig config;
    for (int i = 2; i < argc; ++i) {
      std::string key = argv[i];
      if (key.rfind("--", 0) != 0) {
        throw config_error("expected --key value, got '" + key + "'");
      }
      key = key.substr(2);
      if (i + 1 >= argc) throw config_error("missing value for --" + key);
      const std::string value = argv[++i];
      if (key == "config") {
        config.load_file(value);
      } else {
        config.set(key, value);
      }
    }

    if (sub == "train") return cmd_train(config);
    if (sub == "evaluate") return cmd_evaluate(config);
    if (sub == "map") return cmd_map(config);
    if (sub == "gradcheck") return cmd_gradcheck(config);
    if (sub == "params") return cmd_params(config);
    if (sub == "synth") return cmd_synth(config);
    throw config_error("unknown subcommand: " + sub);
  } catch (const config_error& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const verify_error& e) {
    std::fprintf(stderr, "verification failure: %s\n", e.what());
    return 4;
  } catch (const data_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const shape_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace lcz
