#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ricenet {

struct DatasetConfig {
  std::string kind = "mixed-4class";
  int cubes_per_class = 60;
  bool paper_size = false;
  std::string dir = "data";
};

struct FeatureConfig {
  std::string mode = "spatio-spectral";
};

struct SvmConfig {
  int cv_iterations = 5;
  double train_frac = 0.85;
  double test_frac = 0.15;
  std::vector<double> grid_c = {0.1, 1.0, 10.0, 100.0};
  // Divided by the feature dimension at use time.
  std::vector<double> grid_gamma = {0.001, 0.01, 0.1, 1.0};
};

struct CnnConfig {
  std::string family = "resnet-b";
  std::string arch = "desk"; // desk | reference
  int epochs = 40;
  int batch_size = 8;
  double lr0 = 0.005;
  double decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double train_frac = 0.65;
  double val_frac = 0.20;
  double test_frac = 0.15;
  int augment_factor = 11;
  double max_shift_fraction = 0.04;
  bool allow_hflip = true;
  bool allow_vflip = true;
  bool early_stopping = false;
  int patience = 10;
};

struct MetricsOptions {
  int repetitions = 5;
  bool sample_std = false;
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::string output_dir; // empty -> $RICENET_OUT -> "."
  DatasetConfig dataset;
  FeatureConfig features;
  SvmConfig svm;
  CnnConfig cnn;
  MetricsOptions metrics;
};

// Strict: unknown keys and type mismatches are configuration errors.
RunConfig load_run_config(const std::filesystem::path& source);

// output_dir resolution with the $RICENET_OUT fallback applied.
std::filesystem::path resolve_output_dir(const RunConfig& config);

} // namespace ricenet
