#include <CLI11.hpp>

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "saliq/checkpoint.hpp"
#include "saliq/dataset.hpp"
#include "saliq/image_io.hpp"
#include "saliq/quant.hpp"
#include "saliq/saliency.hpp"
#include "saliq/train.hpp"

namespace fs = std::filesystem;
using namespace saliq;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

// Timing lines carry a fixed prefix so deterministic-output comparisons can
// filter them.
void print_time(const char* label, double seconds) { std::printf("[time] %s: %.2f s\n", label, seconds); }

struct DataFlags {
  std::string data_dir;
  bool synthetic = false;
  int synthetic_per_class = 250;
  int resolution = 64;
  uint64_t seed = 0;
};

void add_data_flags(CLI::App* cmd, DataFlags& flags) {
  cmd->add_option("--data", flags.data_dir, "Corpus root: one subdirectory of .ppm images per class");
  cmd->add_flag("--synthetic", flags.synthetic, "Use the built-in synthetic 8-class corpus");
  cmd->add_option("--synthetic-per-class", flags.synthetic_per_class, "Synthetic samples per class")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--resolution", flags.resolution, "Training resolution (images are resized)")
      ->check(CLI::PositiveNumber);
}

Dataset load_data(const DataFlags& flags) {
  if (flags.synthetic) {
    return synthetic_dataset(flags.synthetic_per_class, 8, flags.resolution, flags.seed);
  }
  if (flags.data_dir.empty()) {
    throw CLI::ValidationError("--data", "either --data DIR or --synthetic is required");
  }
  Dataset ds = load_image_dataset(flags.data_dir, flags.resolution);
  split_dataset(ds, 0.8, 0.1, 0.1, flags.seed);
  return ds;
}

void print_metrics_table(const Metrics& m) {
  std::printf("Accuracy (%%) | Sensitivity (%%) | Specificity (%%)\n");
  std::printf("%12.2f | %15.2f | %15.2f\n", 100.0 * m.accuracy, 100.0 * m.macro_sensitivity,
              100.0 * m.macro_specificity);
}

void print_confusion(const Metrics& m, const std::vector<std::string>& class_names) {
  std::printf("confusion matrix (rows true, cols predicted):\n");
  for (int t = 0; t < m.num_classes; ++t) {
    const std::string name =
        t < static_cast<int>(class_names.size()) ? class_names[static_cast<size_t>(t)] : "class_" + std::to_string(t);
    std::printf("%16s", name.c_str());
    for (int p = 0; p < m.num_classes; ++p) std::printf(" %6" PRId64, m.at(t, p));
    std::printf("\n");
  }
}

void write_epoch_csv(const std::string& path, const std::vector<EpochLog>& log) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot open log file '" + path + "'");
  std::fprintf(fp, "epoch,train_loss,val_accuracy,val_sensitivity,val_specificity\n");
  for (const EpochLog& row : log) {
    std::fprintf(fp, "%d,%.9g,%.9g,%.9g,%.9g\n", row.epoch, row.train_loss, row.val_accuracy, row.val_sensitivity,
                 row.val_specificity);
  }
  std::fclose(fp);
}

CheckpointMeta make_meta(const TrainConfig& cfg, const Metrics& val, const Dataset& ds) {
  CheckpointMeta meta;
  meta.class_names = ds.class_names;
  auto add = [&meta](const std::string& k, const std::string& v) { meta.extra.emplace_back(k, v); };
  char buf[64];
  add("config_mode", train_mode_name(cfg.mode));
  add("config_epochs", std::to_string(cfg.epochs));
  add("config_batch", std::to_string(cfg.batch_size));
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(cfg.lr));
  add("config_lr", buf);
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(cfg.alpha_lr));
  add("config_alpha_lr", buf);
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(cfg.alpha_reg));
  add("config_eta", buf);
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(cfg.lambda1));
  add("config_lambda1", buf);
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(cfg.lambda2));
  add("config_lambda2", buf);
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(cfg.mask_ratio));
  add("config_mask_ratio", buf);
  add("config_bits", std::to_string(cfg.bits));
  add("config_seed", std::to_string(cfg.seed));
  std::snprintf(buf, sizeof(buf), "%.9g", val.accuracy);
  add("metric_val_accuracy", buf);
  std::snprintf(buf, sizeof(buf), "%.9g", val.macro_sensitivity);
  add("metric_val_sensitivity", buf);
  std::snprintf(buf, sizeof(buf), "%.9g", val.macro_specificity);
  add("metric_val_specificity", buf);
  return meta;
}

int cmd_train(const DataFlags& data_flags, const TrainConfig& cfg, const std::string& out_path) {
  Timer timer;
  Dataset ds = load_data(data_flags);
  std::printf("loaded %zu samples, %d classes, %dx%d\n", ds.samples.size(), ds.num_classes(), ds.resolution,
              ds.resolution);

  TrainResult result = train(cfg, ds);

  const CheckpointMeta meta = make_meta(cfg, result.val_metrics, ds);
  save_checkpoint(result.model, out_path, /*packed=*/false, &meta);
  write_epoch_csv(out_path + ".csv", result.log);

  std::printf("best epoch: %d\n", result.best_epoch);
  std::printf("validation metrics:\n");
  print_metrics_table(result.val_metrics);
  if (!ds.split_indices(Split::kTest).empty()) {
    const Metrics test = evaluate_metrics(result.model, ds, Split::kTest);
    std::printf("test metrics:\n");
    print_metrics_table(test);
  }
  std::printf("checkpoint: %s\n", out_path.c_str());
  print_time("train", timer.seconds());
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const DataFlags& data_flags) {
  LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  DataFlags flags = data_flags;
  flags.resolution = ckpt.model.resolution();
  Dataset ds = load_data(flags);
  if (ds.num_classes() != ckpt.model.num_classes()) {
    throw std::runtime_error("corpus has " + std::to_string(ds.num_classes()) + " classes but checkpoint expects " +
                             std::to_string(ckpt.model.num_classes()));
  }
  const Metrics m = evaluate_metrics(ckpt.model, ds, Split::kTest);
  print_metrics_table(m);
  print_confusion(m, ckpt.class_names.empty() ? ds.class_names : ckpt.class_names);
  return kExitOk;
}

int cmd_quantize(const std::string& in_path, int bits, const std::string& out_path) {
  LoadedCheckpoint ckpt = load_checkpoint(in_path);
  if (ckpt.packed) {
    const int in_bits = ckpt.model.quant_spec() ? ckpt.model.quant_spec()->bits : 0;
    if (in_bits != bits) {
      throw std::runtime_error("input is already packed at " + std::to_string(in_bits) +
                               " bits; re-quantizing at a different width is not supported");
    }
  }
  Model quantized = quantize_weights_ptq(ckpt.model, bits);
  CheckpointMeta meta;
  meta.class_names = ckpt.class_names;
  save_checkpoint(quantized, out_path, /*packed=*/true, &meta);

  const auto in_size = fs::file_size(in_path);
  const auto out_size = fs::file_size(out_path);
  std::printf("input:  %ju bytes\n", static_cast<uintmax_t>(in_size));
  std::printf("output: %ju bytes\n", static_cast<uintmax_t>(out_size));
  std::printf("ratio:  %.4f\n", static_cast<double>(out_size) / static_cast<double>(in_size));
  return kExitOk;
}

int cmd_saliency(const std::string& ckpt_path, const std::vector<std::string>& images, const DataFlags& data_flags,
                 const std::string& out_dir) {
  LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  const Model& model = ckpt.model;
  fs::create_directories(out_dir);

  std::vector<std::pair<std::string, Tensor>> inputs;  // (stem, image)
  for (const std::string& path : images) {
    Tensor img = resize_bilinear(read_ppm(path), model.resolution(), model.resolution());
    inputs.emplace_back(fs::path(path).stem().string(), std::move(img));
  }
  if (!data_flags.data_dir.empty() || data_flags.synthetic) {
    DataFlags flags = data_flags;
    flags.resolution = model.resolution();
    Dataset ds = load_data(flags);
    const std::vector<int> test = ds.split_indices(Split::kTest);
    for (size_t i = 0; i < test.size(); ++i) {
      inputs.emplace_back("test_" + std::to_string(i), ds.samples[static_cast<size_t>(test[i])].image);
    }
  }
  if (inputs.empty()) throw CLI::ValidationError("images", "no input images given (pass paths or --data/--synthetic)");

  for (const auto& [stem, image] : inputs) {
    std::vector<int> shape = {1};
    for (int d : image.shape()) shape.push_back(d);
    Tensor batch(shape, std::vector<float>(image.data(), image.data() + image.numel()));

    const Tensor logits = model.forward(batch, model.quant_spec().has_value());
    int predicted = 0;
    for (int c = 1; c < model.num_classes(); ++c) {
      if (logits[c] > logits[predicted]) predicted = c;
    }
    const Tensor grad = saliency_from_logit(model, batch, {predicted}, model.quant_spec().has_value());
    Tensor map(image.shape(), std::vector<float>(grad.data(), grad.data() + grad.numel()));

    const fs::path out_path = fs::path(out_dir) / (stem + ".saliency.pgm");
    export_saliency_map(map, out_path.string());
    const std::string name = predicted < static_cast<int>(ckpt.class_names.size())
                                 ? ckpt.class_names[static_cast<size_t>(predicted)]
                                 : "class_" + std::to_string(predicted);
    std::printf("%s: predicted %s -> %s\n", stem.c_str(), name.c_str(), out_path.string().c_str());
  }
  return kExitOk;
}

int cmd_synth(const std::string& out_dir, int per_class, int resolution, uint64_t seed) {
  Dataset ds = synthetic_dataset(per_class, 8, resolution, seed);
  write_dataset_ppm(ds, out_dir);
  std::printf("wrote %zu images (%d classes) under %s\n", ds.samples.size(), ds.num_classes(), out_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"saliency-guided quantization-aware training for small CNN classifiers"};
  app.require_subcommand(1);

  DataFlags data_flags;
  TrainConfig cfg;
  std::string mode_name = "sgt_pact";
  std::string out_path = "model.sqck";
  std::string ckpt_path;
  std::string quant_out;
  std::string saliency_out = ".";
  std::vector<std::string> image_paths;
  int quant_bits = 8;
  int synth_per_class = 250;

  CLI::App* train_cmd = app.add_subcommand("train", "Train a classifier");
  train_cmd->set_config("--config", "", "Flat key=value config file; command-line flags take precedence");
  train_cmd->allow_config_extras(false);
  add_data_flags(train_cmd, data_flags);
  train_cmd->add_option("--mode", mode_name, "Training mode")
      ->check(CLI::IsMember({"sgt_pact", "sgt_baseline", "float_baseline"}));
  train_cmd->add_option("--bits", cfg.bits, "Quantization bit-width k")->check(CLI::Range(2, 8));
  train_cmd->add_option("--mask-ratio", cfg.mask_ratio, "Fraction of lowest-saliency features masked")
      ->check(CLI::Range(0.0, 0.999999));
  train_cmd->add_option("--epochs", cfg.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--batch", cfg.batch_size, "Batch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", cfg.lr, "Adam learning rate");
  train_cmd->add_option("--alpha-lr", cfg.alpha_lr, "Clip parameter learning rate");
  train_cmd->add_option("--alpha-init", cfg.alpha_init, "Initial PACT clip value");
  train_cmd->add_option("--eta", cfg.alpha_reg, "Clip regularizer weight");
  train_cmd->add_option("--lambda1", cfg.lambda1, "KL consistency weight");
  train_cmd->add_option("--lambda2", cfg.lambda2, "Saliency L1 weight");
  train_cmd->add_option("--seed", cfg.seed, "Random seed");
  train_cmd->add_option("--out", out_path, "Checkpoint output path");
  train_cmd->add_option("--arch", cfg.arch, "Architecture string, e.g. conv:16|pact|pool|...|dense:8");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval_cmd->add_option("checkpoint", ckpt_path, "Checkpoint path")->required();
  add_data_flags(eval_cmd, data_flags);
  eval_cmd->add_option("--seed", data_flags.seed, "Split/synthetic seed");

  CLI::App* quant_cmd = app.add_subcommand("quantize", "Post-training quantize a float checkpoint");
  quant_cmd->add_option("checkpoint", ckpt_path, "Input checkpoint")->required();
  quant_cmd->add_option("--bits", quant_bits, "Target bit-width k")->check(CLI::Range(2, 8));
  quant_cmd->add_option("--out", quant_out, "Packed checkpoint output path")->required();

  CLI::App* sal_cmd = app.add_subcommand("saliency", "Export saliency maps as PGM images");
  sal_cmd->add_option("checkpoint", ckpt_path, "Checkpoint path")->required();
  sal_cmd->add_option("images", image_paths, "PPM image paths");
  add_data_flags(sal_cmd, data_flags);
  sal_cmd->add_option("--seed", data_flags.seed, "Split/synthetic seed");
  sal_cmd->add_option("--out", saliency_out, "Output directory");

  CLI::App* synth_cmd = app.add_subcommand("synth", "Write a synthetic PPM corpus to disk");
  synth_cmd->add_option("--out", out_path, "Corpus root directory")->required();
  synth_cmd->add_option("--n", synth_per_class, "Samples per class")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--resolution", data_flags.resolution, "Image resolution")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", data_flags.seed, "Generator seed");

  // --seed on train feeds both the config and the data pipeline.
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) {
      cfg.mode = parse_train_mode(mode_name);
      data_flags.seed = cfg.seed;
      return cmd_train(data_flags, cfg, out_path);
    }
    if (eval_cmd->parsed()) return cmd_eval(ckpt_path, data_flags);
    if (quant_cmd->parsed()) return cmd_quantize(ckpt_path, quant_bits, quant_out);
    if (sal_cmd->parsed()) return cmd_saliency(ckpt_path, image_paths, data_flags, saliency_out);
    if (synth_cmd->parsed()) return cmd_synth(out_path, synth_per_class, data_flags.resolution, data_flags.seed);
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  } catch (const CLI::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
