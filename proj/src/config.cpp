#include "ricenet/config.hpp"

#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <string>

#include <json.hpp>

#include "ricenet/error.hpp"

namespace ricenet {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& context,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object())
    throw_config("config: '" + context + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* name : allowed)
      if (key == name) {
        known = true;
        break;
      }
    if (!known)
      throw_config("config: unknown key '" + key + "' in " + context);
  }
}

template <typename T>
void read_into(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void parse_dataset(const json& obj, DatasetConfig& cfg) {
  check_keys(obj, "dataset", {"kind", "cubes_per_class", "paper_size", "dir"});
  read_into(obj, "kind", cfg.kind);
  read_into(obj, "cubes_per_class", cfg.cubes_per_class);
  read_into(obj, "paper_size", cfg.paper_size);
  read_into(obj, "dir", cfg.dir);
}

void parse_features(const json& obj, FeatureConfig& cfg) {
  check_keys(obj, "features", {"mode"});
  read_into(obj, "mode", cfg.mode);
}

void parse_svm(const json& obj, SvmConfig& cfg) {
  check_keys(obj, "svm",
             {"cv_iterations", "train_frac", "test_frac", "grid_c",
              "grid_gamma"});
  read_into(obj, "cv_iterations", cfg.cv_iterations);
  read_into(obj, "train_frac", cfg.train_frac);
  read_into(obj, "test_frac", cfg.test_frac);
  read_into(obj, "grid_c", cfg.grid_c);
  read_into(obj, "grid_gamma", cfg.grid_gamma);
}

void parse_cnn(const json& obj, CnnConfig& cfg) {
  check_keys(obj, "cnn",
             {"family", "arch", "epochs", "batch_size", "lr0", "decay",
              "beta1", "beta2", "epsilon", "train_frac", "val_frac",
              "test_frac", "augment_factor", "max_shift_fraction",
              "allow_hflip", "allow_vflip", "early_stopping", "patience"});
  read_into(obj, "family", cfg.family);
  read_into(obj, "arch", cfg.arch);
  read_into(obj, "epochs", cfg.epochs);
  read_into(obj, "batch_size", cfg.batch_size);
  read_into(obj, "lr0", cfg.lr0);
  read_into(obj, "decay", cfg.decay);
  read_into(obj, "beta1", cfg.beta1);
  read_into(obj, "beta2", cfg.beta2);
  read_into(obj, "epsilon", cfg.epsilon);
  read_into(obj, "train_frac", cfg.train_frac);
  read_into(obj, "val_frac", cfg.val_frac);
  read_into(obj, "test_frac", cfg.test_frac);
  read_into(obj, "augment_factor", cfg.augment_factor);
  read_into(obj, "max_shift_fraction", cfg.max_shift_fraction);
  read_into(obj, "allow_hflip", cfg.allow_hflip);
  read_into(obj, "allow_vflip", cfg.allow_vflip);
  read_into(obj, "early_stopping", cfg.early_stopping);
  read_into(obj, "patience", cfg.patience);
}

void parse_metrics(const json& obj, MetricsOptions& cfg) {
  check_keys(obj, "metrics", {"repetitions", "sample_std"});
  read_into(obj, "repetitions", cfg.repetitions);
  read_into(obj, "sample_std", cfg.sample_std);
}

} // namespace

RunConfig load_run_config(const std::filesystem::path& source) {
  std::ifstream is(source);
  if (!is)
    throw_config("cannot open config file: " + source.string());
  json j;
  RunConfig cfg;
  try {
    is >> j;
    check_keys(j, "top level",
               {"seed", "output_dir", "dataset", "features", "svm", "cnn",
                "metrics"});
    read_into(j, "seed", cfg.seed);
    read_into(j, "output_dir", cfg.output_dir);
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), cfg.dataset);
    if (j.contains("features")) parse_features(j.at("features"), cfg.features);
    if (j.contains("svm")) parse_svm(j.at("svm"), cfg.svm);
    if (j.contains("cnn")) parse_cnn(j.at("cnn"), cfg.cnn);
    if (j.contains("metrics")) parse_metrics(j.at("metrics"), cfg.metrics);
  } catch (const json::exception& e) {
    throw_config("config parse error in " + source.string() + ": " + e.what());
  }
  return cfg;
}

std::filesystem::path resolve_output_dir(const RunConfig& config) {
  if (!config.output_dir.empty()) return config.output_dir;
  if (const char* env = std::getenv("RICENET_OUT"); env && *env)
    return env;
  return ".";
}

} // namespace ricenet
