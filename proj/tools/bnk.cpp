// bnk: train / evaluate / predict / augment-preview / inspect-weights for the
// banknet engine.
//
// Exit codes: 0 success, 2 usage, 3 data errors, 4 dataset/class-count
// errors, 5 weight-file errors, 6 numerical failures, 1 anything else.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "banknet/augment.hpp"
#include "banknet/dataset.hpp"
#include "banknet/image_io.hpp"
#include "banknet/metrics.hpp"
#include "banknet/model.hpp"
#include "banknet/synth.hpp"
#include "banknet/train.hpp"
#include "banknet/weights.hpp"
#include "banknet/zoo.hpp"

namespace fs = std::filesystem;
using namespace bnk;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDataset = 4;
constexpr int kExitWeights = 5;
constexpr int kExitNumeric = 6;

struct CommonModelFlags {
  std::string model = "mobilenet";
  std::string scale = "tiny";
  int image_size = 224;
};

void add_model_flags(CLI::App* cmd, CommonModelFlags& flags) {
  cmd->add_option("--model", flags.model, "Backbone family: mobilenet, resnet or nasnet")
      ->check(CLI::IsMember({"mobilenet", "resnet", "nasnet"}));
  cmd->add_option("--scale", flags.scale, "Size preset: tiny, small or paper")
      ->check(CLI::IsMember({"tiny", "small", "paper"}));
  cmd->add_option("--image-size", flags.image_size, "Square input size images are resized to")
      ->check(CLI::PositiveNumber);
}

ModelSpec build_from_flags(const CommonModelFlags& flags, int num_classes) {
  return build_model(parse_model_family(flags.model), preset(flags.scale), num_classes);
}

std::string model_label(const CommonModelFlags& flags) {
  return flags.model + "-" + flags.scale;
}

std::string dataset_label(const std::string& dir) {
  fs::path p(dir);
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

void write_text_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
}

EvalReport evaluate_on_split(const ModelSpec& model, const ParamStore& params,
                             const Dataset& data, const std::vector<int>& indices,
                             const std::string& dataset_name, const std::string& model_name) {
  std::vector<int> truth, predicted;
  truth.reserve(indices.size());
  for (int idx : indices) {
    const LabeledImage& item = data.items[static_cast<std::size_t>(idx)];
    truth.push_back(item.label);
    predicted.push_back(argmax_class(forward(model, params, item.pixels)));
  }
  ConfusionMatrix cm = confusion(truth, predicted, data.manifest.num_classes());
  cm.class_names = data.manifest.class_names;
  return derive_metrics(cm, dataset_name, model_name);
}

struct TrainArgs {
  CommonModelFlags model_flags;
  std::string data_dir;
  std::string out_dir = ".";
  std::string weights_in;
  std::string weights_out;
  std::string history_out;
  std::string report_out;
  std::string manifest_out;
  double val_frac = 0.1;
  double test_frac = 0.1;
  bool freeze_backbone = false;
  bool augment = true;
  TrainConfig train;
};

int run_train(const TrainArgs& args) {
  Dataset data = load_dataset(args.data_dir, args.model_flags.image_size,
                              args.model_flags.image_size);
  if (data.manifest.num_classes() < 2) {
    std::cerr << "error: training needs at least 2 classes, found "
              << data.manifest.num_classes() << "\n";
    return kExitDataset;
  }
  const SplitRatios ratios{1.0 - args.val_frac - args.test_frac, args.val_frac, args.test_frac};
  data.manifest = stratified_split(data.manifest, ratios, args.train.seed);

  const ModelSpec model = build_from_flags(args.model_flags, data.manifest.num_classes());
  ParamStore params = args.weights_in.empty() ? init_params(model, args.train.seed)
                                              : load_weights(args.weights_in, model);

  TrainConfig cfg = args.train;
  cfg.freeze_backbone = args.freeze_backbone;
  cfg.augment_online = args.augment;
  const fs::path out_dir(args.out_dir);
  fs::create_directories(out_dir);
  cfg.checkpoint_path =
      args.weights_out.empty() ? (out_dir / "checkpoint.bnkw").string() : args.weights_out;

  std::cout << "training " << model_label(args.model_flags) << " on " << args.data_dir << " ("
            << data.manifest.items.size() << " images, " << data.manifest.num_classes()
            << " classes)\n";

  const AugmentConfig augment_cfg;  // shipped recipe defaults
  const FitResult result = fit(model, std::move(params), data, augment_cfg, cfg);

  const fs::path history_path =
      args.history_out.empty() ? out_dir / "history.tsv" : fs::path(args.history_out);
  write_text_file(history_path, history_table(result.state.history));
  const fs::path manifest_path =
      args.manifest_out.empty() ? out_dir / "manifest.tsv" : fs::path(args.manifest_out);
  write_text_file(manifest_path, manifest_table(data.manifest));

  std::cout << "best epoch " << result.state.best_epoch << " (val loss "
            << result.state.best_val_loss << "), checkpoint: " << cfg.checkpoint_path << "\n";

  const std::vector<int> test_idx = data.indices_of(Split::test);
  if (!test_idx.empty()) {
    const EvalReport report =
        evaluate_on_split(model, result.best_params, data, test_idx,
                          dataset_label(args.data_dir), model_label(args.model_flags));
    const fs::path report_path =
        args.report_out.empty() ? out_dir / "report.json" : fs::path(args.report_out);
    write_text_file(report_path, render_report({report}, ReportFormat::structured));
    std::cout << render_report({report}, ReportFormat::text_table);
  } else {
    std::cout << "test split is empty, skipping the test report\n";
  }
  return 0;
}

struct EvaluateArgs {
  CommonModelFlags model_flags;
  std::string data_dir;
  std::string weights;
  std::string split = "test";
  std::string report_out;
  std::string dataset_name;
  double val_frac = 0.1;
  double test_frac = 0.1;
  std::uint64_t seed = 0;
};

int run_evaluate(const EvaluateArgs& args) {
  Dataset data = load_dataset(args.data_dir, args.model_flags.image_size,
                              args.model_flags.image_size);
  if (data.manifest.num_classes() < 2) {
    std::cerr << "error: evaluation needs at least 2 classes\n";
    return kExitDataset;
  }
  const SplitRatios ratios{1.0 - args.val_frac - args.test_frac, args.val_frac, args.test_frac};
  data.manifest = stratified_split(data.manifest, ratios, args.seed);

  const ModelSpec model = build_from_flags(args.model_flags, data.manifest.num_classes());
  const ParamStore params = load_weights(args.weights, model);

  std::vector<int> indices;
  if (args.split == "all") {
    for (std::size_t i = 0; i < data.items.size(); ++i) indices.push_back(static_cast<int>(i));
  } else {
    Split split = Split::test;
    if (args.split == "train") split = Split::train;
    if (args.split == "val") split = Split::val;
    indices = data.indices_of(split);
  }
  if (indices.empty()) {
    std::cerr << "error: split '" << args.split << "' is empty\n";
    return kExitDataset;
  }

  const std::string name =
      args.dataset_name.empty() ? dataset_label(args.data_dir) : args.dataset_name;
  const EvalReport report = evaluate_on_split(model, params, data, indices, name,
                                              model_label(args.model_flags));
  std::cout << render_report({report}, ReportFormat::text_table);
  if (!args.report_out.empty()) {
    write_text_file(args.report_out, render_report({report}, ReportFormat::structured));
  }
  return 0;
}

struct PredictArgs {
  CommonModelFlags model_flags;
  std::string image;
  std::string weights;
  std::string data_dir;
  int num_classes = 0;
  int top_k = 5;
};

int run_predict(const PredictArgs& args) {
  std::vector<std::string> class_names;
  if (!args.data_dir.empty()) {
    for (const auto& entry : fs::directory_iterator(args.data_dir)) {
      if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
    }
    std::sort(class_names.begin(), class_names.end());
  } else if (args.num_classes > 0) {
    for (int i = 0; i < args.num_classes; ++i) class_names.push_back("class_" + std::to_string(i));
  } else {
    std::cerr << "error: predict needs --data or --classes to know the class set\n";
    return kExitUsage;
  }
  if (class_names.size() < 2) {
    std::cerr << "error: prediction needs at least 2 classes\n";
    return kExitDataset;
  }

  const ModelSpec model = build_from_flags(args.model_flags, static_cast<int>(class_names.size()));
  const ParamStore params = load_weights(args.weights, model);

  const Tensor pixels = resize_bilinear(decode_to_unit(read_ppm(args.image)),
                                        args.model_flags.image_size, args.model_flags.image_size);
  const Tensor probs = forward(model, params, pixels);

  std::vector<int> order(probs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
  });

  const int k = std::min<int>(args.top_k, static_cast<int>(order.size()));
  char line[160];
  for (int i = 0; i < k; ++i) {
    const int cls = order[static_cast<std::size_t>(i)];
    std::snprintf(line, sizeof(line), "%-20s %.6f\n", class_names[static_cast<std::size_t>(cls)].c_str(),
                  probs[static_cast<std::size_t>(cls)]);
    std::cout << line;
  }
  return 0;
}

struct PreviewArgs {
  std::string image;
  std::string out_dir;
  int count = 10;
  std::uint64_t seed = 0;
};

int run_augment_preview(const PreviewArgs& args) {
  const Tensor source = decode_to_unit(read_ppm(args.image));
  fs::create_directories(args.out_dir);
  const AugmentConfig cfg;  // the shipped recipe ranges
  char name[32];
  for (int i = 0; i < args.count; ++i) {
    SplitMix64 rng(derive_seed(args.seed, static_cast<std::uint64_t>(i), 0));
    const AffineParams params = sample_params(cfg, rng);
    const Tensor warped = apply_affine(source, params);
    std::snprintf(name, sizeof(name), "aug_%03d.ppm", i);
    write_ppm(fs::path(args.out_dir) / name, encode_from_unit(warped));
  }
  std::cout << "wrote " << args.count << " augmented variants to " << args.out_dir << "\n";
  return 0;
}

int run_inspect(const std::string& weights) {
  const std::vector<WeightEntry> entries = peek_weights(weights);
  std::size_t total = 0;
  for (const WeightEntry& e : entries) {
    std::size_t n = 1;
    for (int d : e.shape) n *= static_cast<std::size_t>(d);
    total += n;
    std::cout << e.name << "\t" << shape_str(e.shape) << "\t" << n << "\n";
  }
  std::cout << "tensors: " << entries.size() << ", values: " << total << ", checksum: ok\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"banknet: a small CNN transfer-learning engine for banknote-style image "
               "classification"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model on a class-per-directory tree");
  train_cmd->add_option("--data", train_args.data_dir, "Dataset root directory")->required();
  add_model_flags(train_cmd, train_args.model_flags);
  train_cmd->add_option("--lr", train_args.train.learning_rate, "Adam learning rate");
  train_cmd->add_option("--batch-size", train_args.train.batch_size, "Mini-batch size");
  train_cmd->add_option("--epochs", train_args.train.max_epochs, "Maximum training epochs");
  train_cmd->add_option("--plateau-patience", train_args.train.plateau_patience,
                        "Stagnant epochs before a learning-rate cut");
  train_cmd->add_option("--plateau-factor", train_args.train.plateau_factor,
                        "Learning-rate multiplier on plateau");
  train_cmd->add_option("--min-lr", train_args.train.min_lr, "Learning-rate floor");
  train_cmd->add_option("--early-stop-patience", train_args.train.early_stop_patience,
                        "Epochs without improvement before stopping");
  train_cmd->add_option("--min-delta", train_args.train.min_delta,
                        "Minimum improvement that resets the patience counters");
  train_cmd->add_option("--seed", train_args.train.seed, "Seed for init, splits and augmentation");
  train_cmd->add_flag("--freeze-backbone", train_args.freeze_backbone,
                      "Train only the classifier head");
  train_cmd->add_flag("!--no-augment", train_args.augment, "Disable online augmentation");
  train_cmd->add_option("--weights-in", train_args.weights_in, "Starting checkpoint (.bnkw)");
  train_cmd->add_option("--val-frac", train_args.val_frac, "Validation fraction per class");
  train_cmd->add_option("--test-frac", train_args.test_frac, "Test fraction per class");
  train_cmd->add_option("--out-dir", train_args.out_dir, "Directory for artifacts");
  train_cmd->add_option("--weights-out", train_args.weights_out, "Checkpoint path override");
  train_cmd->add_option("--history-out", train_args.history_out, "History table path override");
  train_cmd->add_option("--report-out", train_args.report_out, "Report path override");
  train_cmd->add_option("--manifest-out", train_args.manifest_out, "Manifest table path override");

  EvaluateArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--data", eval_args.data_dir, "Dataset root directory")->required();
  eval_cmd->add_option("--weights", eval_args.weights, "Checkpoint to evaluate")->required();
  add_model_flags(eval_cmd, eval_args.model_flags);
  eval_cmd->add_option("--split", eval_args.split, "Split to score: train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  eval_cmd->add_option("--seed", eval_args.seed, "Split seed (must match training)");
  eval_cmd->add_option("--val-frac", eval_args.val_frac, "Validation fraction per class");
  eval_cmd->add_option("--test-frac", eval_args.test_frac, "Test fraction per class");
  eval_cmd->add_option("--report-out", eval_args.report_out, "Write the structured report here");
  eval_cmd->add_option("--dataset-name", eval_args.dataset_name, "Dataset label for the report");

  PredictArgs predict_args;
  CLI::App* predict_cmd = app.add_subcommand("predict", "Classify one image");
  predict_cmd->add_option("--image", predict_args.image, "Image to classify (PPM)")->required();
  predict_cmd->add_option("--weights", predict_args.weights, "Checkpoint (.bnkw)")->required();
  add_model_flags(predict_cmd, predict_args.model_flags);
  predict_cmd->add_option("--data", predict_args.data_dir,
                          "Dataset root whose directory names label the classes");
  predict_cmd->add_option("--classes", predict_args.num_classes,
                          "Class count when no --data is given");
  predict_cmd->add_option("--top-k", predict_args.top_k, "How many classes to print");

  PreviewArgs preview_args;
  CLI::App* preview_cmd =
      app.add_subcommand("augment-preview", "Write augmented variants of one image");
  preview_cmd->add_option("--image", preview_args.image, "Source image (PPM)")->required();
  preview_cmd->add_option("--out-dir", preview_args.out_dir, "Output directory")->required();
  preview_cmd->add_option("--count", preview_args.count, "Number of variants");
  preview_cmd->add_option("--seed", preview_args.seed, "Sampling seed");

  std::string inspect_weights;
  CLI::App* inspect_cmd =
      app.add_subcommand("inspect-weights", "List the tensors inside a checkpoint");
  inspect_cmd->add_option("--weights", inspect_weights, "Checkpoint (.bnkw)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(train_args);
    if (*eval_cmd) return run_evaluate(eval_args);
    if (*predict_cmd) return run_predict(predict_args);
    if (*preview_cmd) return run_augment_preview(preview_args);
    if (*inspect_cmd) return run_inspect(inspect_weights);
  } catch (const WeightError& e) {
    std::cerr << "weight file error: " << e.what() << "\n";
    return kExitWeights;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
