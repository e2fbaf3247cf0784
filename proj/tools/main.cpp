#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ricenet/analysis.hpp"
#include "ricenet/config.hpp"
#include "ricenet/datacube.hpp"
#include "ricenet/error.hpp"
#include "ricenet/features.hpp"
#include "ricenet/metrics.hpp"
#include "ricenet/net.hpp"
#include "ricenet/rng.hpp"
#include "ricenet/svm.hpp"
#include "ricenet/synth.hpp"
#include "ricenet/train.hpp"

namespace fs = std::filesystem;
using namespace ricenet;

namespace {

constexpr std::uint64_t kCvStream = 0x6376ULL;     // "cv"
constexpr std::uint64_t kInitStream = 0x696e6974ULL; // "init"

struct Cli {
  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;

  // synth
  std::string kind;
  int per_class = -1;
  bool paper_size = false;

  // features / svm
  std::string mode;
  int cv_iterations = -1;
  double fixed_c = 0.0, fixed_gamma = 0.0;
  bool fixed_hyper = false;

  // cnn
  std::string family;
  std::string arch;
  int epochs = -1;
  int batch_size = -1;
  int augment_factor = -1;
  bool early_stopping = false;

  // eval
  std::string model_kind = "svm";
  int repetitions = -1;

  // ensemble / saliency
  std::vector<std::string> checkpoints;
  std::string checkpoint;
  std::vector<int> cube_indices;
  int target_class = -1;

  // report
  std::string summary_csv;
  std::string confusion_csv;
};

std::string kv(const std::string& key, const std::string& value) {
  return ' ' + key + '=' + value;
}

std::string kv(const std::string& key, double value) {
  std::ostringstream os;
  os << value;
  return kv(key, os.str());
}

std::string kv(const std::string& key, long value) {
  return kv(key, std::to_string(value));
}

void log_line(const std::string& stage, const std::string& message,
              const std::string& tail = "") {
  std::cout << '[' << stage << "] " << message << tail << '\n';
}

RunConfig effective_config(const Cli& cli) {
  RunConfig cfg;
  if (!cli.config_path.empty()) cfg = load_run_config(cli.config_path);
  if (!cli.out_dir.empty()) cfg.output_dir = cli.out_dir;
  if (!cli.data_dir.empty()) cfg.dataset.dir = cli.data_dir;
  if (cli.seed_set) cfg.seed = cli.seed;
  if (!cli.kind.empty()) cfg.dataset.kind = cli.kind;
  if (cli.per_class > 0) cfg.dataset.cubes_per_class = cli.per_class;
  if (cli.paper_size) cfg.dataset.paper_size = true;
  if (!cli.mode.empty()) cfg.features.mode = cli.mode;
  if (cli.cv_iterations > 0) cfg.svm.cv_iterations = cli.cv_iterations;
  if (!cli.family.empty()) cfg.cnn.family = cli.family;
  if (!cli.arch.empty()) cfg.cnn.arch = cli.arch;
  if (cli.epochs > 0) cfg.cnn.epochs = cli.epochs;
  if (cli.batch_size > 0) cfg.cnn.batch_size = cli.batch_size;
  if (cli.augment_factor > 0) cfg.cnn.augment_factor = cli.augment_factor;
  if (cli.early_stopping) cfg.cnn.early_stopping = true;
  if (cli.repetitions > 0) cfg.metrics.repetitions = cli.repetitions;
  return cfg;
}

fs::path prepare_output_dir(const RunConfig& cfg) {
  const fs::path dir = resolve_output_dir(cfg);
  fs::create_directories(dir);
  return dir;
}

struct LoadedDataset {
  Manifest manifest;
  std::vector<Datacube> cubes;
  std::vector<int> labels;
  std::vector<std::string> class_names;
};

LoadedDataset load_dataset(const RunConfig& cfg) {
  LoadedDataset data;
  data.manifest = load_manifest(fs::path(cfg.dataset.dir) / "manifest.tsv");
  data.cubes = load_cubes(data.manifest);
  data.labels = data.manifest.labels();
  data.class_names = data.manifest.class_names();
  return data;
}

struct ExtractedFeatures {
  Matrix rows;
  std::vector<int> labels;
  std::vector<std::string> schema;
  FeatureMode mode = FeatureMode::SpatioSpectral;
};

ExtractedFeatures extract_all(const LoadedDataset& data,
                              const std::string& mode_name) {
  ExtractedFeatures out;
  out.mode = parse_feature_mode(mode_name);
  std::vector<FeatureVector> vectors;
  vectors.reserve(data.cubes.size());
  for (const Datacube& cube : data.cubes)
    vectors.push_back(extract(cube, out.mode));
  out.rows = feature_matrix(vectors);
  out.labels = data.labels;
  out.schema = vectors.front().schema;
  return out;
}

void write_text(const fs::path& dest, const std::string& text) {
  std::ofstream os(dest);
  if (!os)
    throw_data("cannot open for writing: " + dest.string());
  os << text;
  if (!os)
    throw_data("write failed: " + dest.string());
}

// ----------------------------------------------------------------- synth ---

int cmd_synth(const Cli& cli) {
  RunConfig cfg = effective_config(cli);
  DatasetSpec spec = benchmark_spec(cfg.dataset.kind, cfg.dataset.paper_size);
  spec.cubes_per_class = cfg.dataset.cubes_per_class;
  const fs::path dir = cli.out_dir.empty() ? fs::path(cfg.dataset.dir)
                                           : fs::path(cli.out_dir);
  const Manifest manifest = generate_dataset(spec, cfg.seed, dir);
  log_line("synth", "dataset written",
           kv("kind", cfg.dataset.kind) +
               kv("cubes", static_cast<long>(manifest.entries.size())) +
               kv("classes", static_cast<long>(manifest.num_classes())) +
               kv("dir", dir.string()) + kv("seed", std::to_string(cfg.seed)));
  return 0;
}

// -------------------------------------------------------------- features ---

int cmd_features(const Cli& cli) {
  RunConfig cfg = effective_config(cli);
  const fs::path out_dir = prepare_output_dir(cfg);
  const LoadedDataset data = load_dataset(cfg);
  const ExtractedFeatures feats = extract_all(data, cfg.features.mode);
  const fs::path dest =
      out_dir / ("features_" + to_string(feats.mode) + ".csv");
  save_features_csv(feats.rows, feats.schema, feats.labels, dest);
  log_line("features", "feature table written",
           kv("mode", to_string(feats.mode)) +
               kv("rows", static_cast<long>(feats.rows.rows())) +
               kv("columns", static_cast<long>(feats.rows.cols())) +
               kv("file", dest.string()));
  return 0;
}

// ------------------------------------------------------------- train-svm ---

std::vector<SvmHyper> config_grid(const SvmConfig& svm, int feature_dim) {
  std::vector<SvmHyper> grid;
  for (double c : svm.grid_c)
    for (double g : svm.grid_gamma)
      grid.push_back({c, g / feature_dim});
  if (grid.empty())
    throw_config("svm: empty hyperparameter grid");
  return grid;
}

Matrix take_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) =
        x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<int> take_labels(const std::vector<int>& labels,
                             const std::vector<std::size_t>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t i : rows) out.push_back(labels[i]);
  return out;
}

struct SvmRun {
  SvmModel model;
  SvmHyper hyper;
  MetricsReport report;
};

SvmRun run_svm_experiment(const ExtractedFeatures& feats,
                          const std::vector<std::string>& class_names,
                          const SvmConfig& svm_cfg, std::uint64_t seed,
                          const SvmHyper* fixed_hyper) {
  SplitPlan plan = split_dataset(feats.labels, svm_cfg.train_frac, 0.0,
                                 svm_cfg.test_frac, seed);
  const Matrix train_x = take_rows(feats.rows, plan.train);
  const std::vector<int> train_labels = take_labels(feats.labels, plan.train);

  SvmRun run;
  if (fixed_hyper) {
    run.hyper = *fixed_hyper;
  } else {
    const CvResult cv = cross_validate(
        train_x, train_labels,
        config_grid(svm_cfg, static_cast<int>(feats.rows.cols())),
        svm_cfg.cv_iterations, Rng::mix(seed ^ kCvStream));
    run.hyper = cv.best;
  }
  run.model = train_multiclass(train_x, train_labels, run.hyper);
  run.model.class_names = class_names;
  run.model.mode = feats.mode;

  const Matrix scores =
      predict_scores(run.model, take_rows(feats.rows, plan.test));
  run.report = evaluate(scores, take_labels(feats.labels, plan.test),
                        run.model.num_classes);
  return run;
}

int cmd_train_svm(const Cli& cli) {
  RunConfig cfg = effective_config(cli);
  const fs::path out_dir = prepare_output_dir(cfg);
  const LoadedDataset data = load_dataset(cfg);
  const ExtractedFeatures feats = extract_all(data, cfg.features.mode);

  SvmHyper fixed;
  if (cli.fixed_hyper) fixed = {cli.fixed_c, cli.fixed_gamma};
  const SvmRun run =
      run_svm_experiment(feats, data.class_names, cfg.svm, cfg.seed,
                         cli.fixed_hyper ? &fixed : nullptr);

  const std::string tag = "svm_" + to_string(feats.mode);
  const fs::path model_path = out_dir / (tag + ".json");
  save_svm(run.model, model_path);
  write_text(out_dir / (tag + "_report.txt"),
             render_report(run.report, data.class_names));
  save_confusion_csv(run.report.confusion, data.class_names,
                     out_dir / (tag + "_confusion.csv"));

  log_line("train-svm", "model trained",
           kv("mode", to_string(feats.mode)) + kv("c", run.hyper.c) +
               kv("gamma", run.hyper.gamma) + kv("top1", run.report.top1) +
               kv("top2", run.report.top2) +
               kv("macro_f", run.report.macro_f) +
               kv("model", model_path.string()));
  return 0;
}

// ------------------------------------------------------------- train-cnn ---

ArchConfig arch_from_config(const CnnConfig& cnn, int num_classes, int bands,
                            int height, int width) {
  const Family family = parse_family(cnn.family);
  if (cnn.arch == "desk")
    return desk_config(family, num_classes, bands, height, width);
  if (cnn.arch == "reference")
    return reference_config(family, num_classes, bands, height, width);
  throw_config("unknown arch '" + cnn.arch +
               "' (expected desk or reference)");
}

TrainConfig train_config_from(const CnnConfig& cnn, std::uint64_t seed) {
  TrainConfig tc;
  tc.adam.lr0 = cnn.lr0;
  tc.adam.batch_size = cnn.batch_size;
  tc.adam.beta1 = cnn.beta1;
  tc.adam.beta2 = cnn.beta2;
  tc.adam.epsilon = cnn.epsilon;
  tc.adam.decay = cnn.decay;
  tc.adam.epochs = cnn.epochs;
  tc.augment.allow_hflip = cnn.allow_hflip;
  tc.augment.allow_vflip = cnn.allow_vflip;
  tc.augment.max_shift_fraction = cnn.max_shift_fraction;
  tc.augment_factor = cnn.augment_factor;
  tc.early_stopping.enabled = cnn.early_stopping;
  tc.early_stopping.patience = cnn.patience;
  tc.seed = seed;
  return tc;
}

struct CnnRun {
  MetricsReport report;
  TrainResult result;
};

CnnRun run_cnn_experiment(Network& net, const LoadedDataset& data,
                          const CnnConfig& cnn, std::uint64_t seed) {
  SplitPlan plan = split_dataset(data.labels, cnn.train_frac, cnn.val_frac,
                                 cnn.test_frac, seed);
  CnnRun run;
  run.result =
      train(net, data.cubes, data.labels, plan, train_config_from(cnn, seed));

  std::vector<Datacube> test_cubes;
  std::vector<int> test_labels;
  for (std::size_t idx : plan.test) {
    test_cubes.push_back(data.cubes[idx]);
    test_labels.push_back(data.labels[idx]);
  }
  const Matrix probabilities = predict_batch(net, test_cubes);
  run.report = evaluate(probabilities, test_labels,
                        static_cast<int>(data.class_names.size()));
  return run;
}

int cmd_train_cnn(const Cli& cli) {
  RunConfig cfg = effective_config(cli);
  const fs::path out_dir = prepare_output_dir(cfg);
  const LoadedDataset data = load_dataset(cfg);
  const Datacube& first = data.cubes.front();
  const ArchConfig arch =
      arch_from_config(cfg.cnn, static_cast<int>(data.class_names.size()),
                       first.bands, first.height, first.width);

  Network net = build_network(arch, Rng::mix(cfg.seed ^ kInitStream));
  log_line("train-cnn", "network built",
           kv("family", to_string(arch.family)) + kv("arch", cfg.cnn.arch) +
               kv("conv_layers", static_cast<long>(net.conv_layer_count())) +
               kv("parameters", net.parameter_count()));

  const CnnRun run = run_cnn_experiment(net, data, cfg.cnn, cfg.seed);

  const std::string tag = "cnn_" + to_string(arch.family);
  const fs::path ckpt = out_dir / (tag + ".ckpt");
  AdamState no_adam;
  save_checkpoint(net, no_adam, ckpt);
  save_history_csv(run.result.history, out_dir / (tag + "_history.csv"));
  write_text(out_dir / (tag + "_report.txt"),
             render_report(run.report, data.class_names));
  save_confusion_csv(run.report.confusion, data.class_names,
                     out_dir / (tag + "_confusion.csv"));

  log_line("train-cnn", "training finished",
           kv("epochs", static_cast<long>(run.result.history.size())) +
               kv("top1", run.report.top1) + kv("top2", run.report.top2) +
               kv("macro_f", run.report.macro_f) +
               kv("checkpoint", ckpt.string()));
  return 0;
}

// ------------------------------------------------------------------ eval ---

int cmd_eval(const Cli& cli) {
  RunConfig cfg = effective_config(cli);
  const fs::path out_dir = prepare_output_dir(cfg);
  const LoadedDataset data = load_dataset(cfg);

  std::function<MetricsReport(std::uint64_t)> run;
  std::string tag;
  if (cli.model_kind == "svm") {
    // Features extracted once; each repetition reuses them with a new split.
    auto feats = std::make_shared<ExtractedFeatures>(
        extract_all(data, cfg.features.mode));
    tag = "eval_svm_" + to_string(feats->mode);
    run = [feats, &data, &cfg](std::uint64_t seed) {
      return run_svm_experiment(*feats, data.class_names, cfg.svm, seed,
                                nullptr)
          .report;
    };
  } else if (cli.model_kind == "cnn") {
    tag = "eval_cnn_" + cfg.cnn.family;
    run = [&data, &cfg](std::uint64_t seed) {
      const Datacube& first = data.cubes.front();
      const ArchConfig arch = arch_from_config(
          cfg.cnn, static_cast<int>(data.class_names.size()), first.bands,
          first.height, first.width);
      Network net = build_network(arch, Rng::mix(seed ^ kInitStream));
      return run_cnn_experiment(net, data, cfg.cnn, seed).report;
    };
  } else {
    throw_config("eval: unknown model kind '" + cli.model_kind +
                 "' (expected svm or cnn)");
  }

  const RepetitionSummary summary = repeat_protocol(
      run, cfg.metrics.repetitions, cfg.seed, cfg.metrics.sample_std);
  const fs::path csv = out_dir / (tag + "_summary.csv");
  save_summary_csv(summary, csv);
  write_text(out_dir / (tag + "_summary.txt"), render_summary(summary));

  log_line("eval", "repetition protocol finished",
           kv("model", cli.model_kind) +
               kv("repetitions", static_cast<long>(cfg.metrics.repetitions)) +
               kv("top1_mean", summary.mean[0]) +
               kv("top1_std", summary.std_dev[0]) + kv("file", csv.string()));
  return 0;
}

// -------------------------------------------------------------- ensemble ---

int cmd_ensemble(const Cli& cli) {
  RunConfig cfg = effective_config(cli);
  const fs::path out_dir = prepare_output_dir(cfg);
  if (cli.checkpoints.empty())
    throw_config("ensemble: provide at least one --checkpoint");
  const LoadedDataset data = load_dataset(cfg);

  std::vector<Network> models;
  models.reserve(cli.checkpoints.size());
  for (const std::string& path : cli.checkpoints)
    models.push_back(load_checkpoint(path));

  SplitPlan plan = split_dataset(data.labels, cfg.cnn.train_frac,
                                 cfg.cnn.val_frac, cfg.cnn.test_frac,
                                 cfg.seed);
  std::vector<Datacube> test_cubes;
  std::vector<int> test_labels;
  for (std::size_t idx : plan.test) {
    test_cubes.push_back(data.cubes[idx]);
    test_labels.push_back(data.labels[idx]);
  }

  const Matrix probabilities = ensemble_predict(models, test_cubes);
  const MetricsReport report = evaluate(
      probabilities, test_labels, static_cast<int>(data.class_names.size()));
  write_text(out_dir / "ensemble_report.txt",
             render_report(report, data.class_names));
  save_confusion_csv(report.confusion, data.class_names,
                     out_dir / "ensemble_confusion.csv");

  log_line("ensemble", "ensemble evaluated",
           kv("members", static_cast<long>(models.size())) +
               kv("top1", report.top1) + kv("top2", report.top2) +
               kv("macro_f", report.macro_f));
  return 0;
}

// -------------------------------------------------------------- saliency ---

int cmd_saliency(const Cli& cli) {
  RunConfig cfg = effective_config(cli);
  const fs::path out_dir = prepare_output_dir(cfg);
  if (cli.checkpoint.empty())
    throw_config("saliency: --checkpoint is required");
  if (cli.cube_indices.empty())
    throw_config("saliency: provide at least one --cube index");

  Network net = load_checkpoint(cli.checkpoint);
  const LoadedDataset data = load_dataset(cfg);
  for (int idx : cli.cube_indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= data.cubes.size())
      throw_data("saliency: cube index " + std::to_string(idx) +
                 " out of range (dataset has " +
                 std::to_string(data.cubes.size()) + " cubes)");
    const SaliencyMap map =
        saliency_map(net, data.cubes[static_cast<std::size_t>(idx)],
                     cli.target_class);
    const fs::path pgm =
        out_dir / ("saliency_" + std::to_string(idx) + ".pgm");
    save_saliency_pgm(map, pgm);
    save_saliency_csv(map, out_dir /
                               ("saliency_" + std::to_string(idx) + ".csv"));
    log_line("saliency", "map written",
             kv("cube", static_cast<long>(idx)) +
                 kv("height", static_cast<long>(map.height)) +
                 kv("width", static_cast<long>(map.width)) +
                 kv("file", pgm.string()));
  }
  return 0;
}

// ---------------------------------------------------------------- report ---

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is)
    throw_data("cannot open: " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

int cmd_report(const Cli& cli) {
  if (cli.summary_csv.empty())
    throw_config("report: --summary is required");
  const auto rows = read_csv(cli.summary_csv);
  if (rows.size() < 3 || rows.front().size() != 6)
    throw_data("report: malformed summary CSV " + cli.summary_csv);

  RepetitionSummary summary;
  try {
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& cells = rows[r];
      if (cells.size() != 6)
        throw_data("report: malformed row in " + cli.summary_csv);
      std::array<double, 5> vals{};
      for (int k = 0; k < 5; ++k)
        vals[static_cast<std::size_t>(k)] =
            std::stod(cells[static_cast<std::size_t>(k) + 1]);
      if (cells[0] == "mean")
        summary.mean = vals;
      else if (cells[0] == "std")
        summary.std_dev = vals;
      else {
        MetricsReport rep;
        rep.top1 = vals[0];
        rep.top2 = vals[1];
        rep.macro_precision = vals[2];
        rep.macro_recall = vals[3];
        rep.macro_f = vals[4];
        summary.reports.push_back(rep);
      }
    }
  } catch (const std::invalid_argument&) {
    throw_data("report: non-numeric cell in " + cli.summary_csv);
  }
  std::cout << render_summary(summary);

  if (!cli.confusion_csv.empty()) {
    const auto conf_rows = read_csv(cli.confusion_csv);
    if (conf_rows.size() < 2)
      throw_data("report: malformed confusion CSV " + cli.confusion_csv);
    const std::size_t k = conf_rows.size() - 1;
    std::vector<std::string> names(conf_rows[0].begin() + 1,
                                   conf_rows[0].end());
    if (names.size() != k)
      throw_data("report: confusion CSV is not square");
    ConfusionMatrix m(static_cast<Eigen::Index>(k),
                      static_cast<Eigen::Index>(k));
    try {
      for (std::size_t i = 0; i < k; ++i) {
        if (conf_rows[i + 1].size() != k + 1)
          throw_data("report: confusion CSV is not square");
        for (std::size_t j = 0; j < k; ++j)
          m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
              std::stol(conf_rows[i + 1][j + 1]);
      }
    } catch (const std::invalid_argument&) {
      throw_data("report: non-numeric cell in " + cli.confusion_csv);
    }
    std::cout << "confusion matrix (rows = true, cols = predicted):\n"
              << render_confusion(m, names);
  }
  log_line("report", "rendered",
           kv("repetitions", static_cast<long>(summary.reports.size())));
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperspectral rice-variety classification pipeline"};
  app.require_subcommand(1);
  Cli cli;

  app.add_option("--config", cli.config_path,
                 "JSON run configuration (flags override file keys)");

  auto add_common = [&](CLI::App* cmd, bool with_data) {
    cmd->add_option("--out", cli.out_dir, "Output directory");
    cmd->add_option("--seed", cli.seed, "Master seed")
        ->each([&](const std::string&) { cli.seed_set = true; });
    if (with_data)
      cmd->add_option("--data", cli.data_dir,
                      "Dataset directory containing manifest.tsv");
  };

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--kind", cli.kind,
                    "Benchmark kind (spectral-only, spatial-only, "
                    "mixed-4class, easy-6class)");
  synth->add_option("--per-class", cli.per_class, "Cubes per class");
  synth->add_flag("--paper-size", cli.paper_size,
                  "Full-size 50x170x110 cubes");
  add_common(synth, false);

  CLI::App* features =
      app.add_subcommand("features", "Extract features to CSV");
  features->add_option("--mode", cli.mode,
                       "spatial | spectral | spatio-spectral");
  add_common(features, true);

  CLI::App* train_svm_cmd =
      app.add_subcommand("train-svm", "Train and evaluate an SVM");
  train_svm_cmd->add_option("--mode", cli.mode,
                            "spatial | spectral | spatio-spectral");
  train_svm_cmd->add_option("--cv-iterations", cli.cv_iterations,
                            "Stratified CV reshuffling iterations");
  auto* opt_c = train_svm_cmd->add_option("--c", cli.fixed_c,
                                          "Fixed penalty C (skips CV)");
  auto* opt_gamma = train_svm_cmd->add_option(
      "--gamma", cli.fixed_gamma, "Fixed RBF gamma (skips CV)");
  opt_c->needs(opt_gamma);
  opt_gamma->needs(opt_c);
  add_common(train_svm_cmd, true);

  CLI::App* train_cnn_cmd =
      app.add_subcommand("train-cnn", "Train and evaluate a network");
  train_cnn_cmd->add_option("--family", cli.family,
                            "vgg | resnet | resnet-b");
  train_cnn_cmd->add_option("--arch", cli.arch, "desk | reference");
  train_cnn_cmd->add_option("--epochs", cli.epochs, "Training epochs");
  train_cnn_cmd->add_option("--batch-size", cli.batch_size, "Batch size");
  train_cnn_cmd->add_option("--augment-factor", cli.augment_factor,
                            "Training-set expansion factor");
  train_cnn_cmd->add_flag("--early-stopping", cli.early_stopping,
                          "Stop on validation-loss plateau");
  add_common(train_cnn_cmd, true);

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Repeated train/test protocol");
  eval_cmd->add_option("--model", cli.model_kind, "svm | cnn")
      ->check(CLI::IsMember({"svm", "cnn"}));
  eval_cmd->add_option("--repetitions", cli.repetitions, "Repetition count");
  eval_cmd->add_option("--mode", cli.mode,
                       "Feature mode for --model svm");
  eval_cmd->add_option("--family", cli.family, "Family for --model cnn");
  eval_cmd->add_option("--epochs", cli.epochs, "Epochs for --model cnn");
  add_common(eval_cmd, true);

  CLI::App* ensemble_cmd =
      app.add_subcommand("ensemble", "Evaluate a softmax-mean ensemble");
  ensemble_cmd->add_option("--checkpoint", cli.checkpoints,
                           "Member checkpoint (repeatable)");
  add_common(ensemble_cmd, true);

  CLI::App* saliency_cmd =
      app.add_subcommand("saliency", "Write gradient saliency maps");
  saliency_cmd->add_option("--checkpoint", cli.checkpoint,
                           "Trained network checkpoint");
  saliency_cmd->add_option("--cube", cli.cube_indices,
                           "Dataset cube index (repeatable)");
  saliency_cmd->add_option("--target", cli.target_class,
                           "Target class (default: predicted)");
  add_common(saliency_cmd, true);

  CLI::App* report_cmd =
      app.add_subcommand("report", "Render summary/confusion CSVs as text");
  report_cmd->add_option("--summary", cli.summary_csv,
                         "Summary CSV from eval");
  report_cmd->add_option("--confusion", cli.confusion_csv,
                         "Confusion CSV (optional)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    cli.fixed_hyper = opt_c->count() > 0;
    if (app.got_subcommand(synth)) return cmd_synth(cli);
    if (app.got_subcommand(features)) return cmd_features(cli);
    if (app.got_subcommand(train_svm_cmd)) return cmd_train_svm(cli);
    if (app.got_subcommand(train_cnn_cmd)) return cmd_train_cnn(cli);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(cli);
    if (app.got_subcommand(ensemble_cmd)) return cmd_ensemble(cli);
    if (app.got_subcommand(saliency_cmd)) return cmd_saliency(cli);
    if (app.got_subcommand(report_cmd)) return cmd_report(cli);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 4;
  }
}
