#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ricenet/types.hpp"

namespace ricenet {

// Entry (i, j) counts samples of true class i predicted as class j.
using ConfusionMatrix = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>;

ConfusionMatrix confusion(const std::vector<int>& true_labels,
                          const std::vector<int>& predicted_labels,
                          int num_classes);

// Fraction of rows whose true label ranks among the k largest scores.
// Equal scores are ranked by ascending class index.
double topk_accuracy(const Matrix& probabilities,
                     const std::vector<int>& true_labels, int k);

struct MacroPrf {
  Vector precision; // per class
  Vector recall;
  Vector f_score;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f = 0.0;
};

MacroPrf macro_prf(const ConfusionMatrix& confusion);

struct MetricsReport {
  double top1 = 0.0;
  double top2 = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f = 0.0;
  ConfusionMatrix confusion;

  static constexpr std::array<const char*, 5> kMetricNames = {
      "top1", "top2", "macro_precision", "macro_recall", "macro_f"};
  std::array<double, 5> metric_values() const {
    return {top1, top2, macro_precision, macro_recall, macro_f};
  }
};

// Scores row per sample; top-2 falls back to top-1 when only one class exists.
MetricsReport evaluate(const Matrix& probabilities,
                       const std::vector<int>& true_labels, int num_classes);

struct RepetitionSummary {
  std::vector<MetricsReport> reports;
  std::array<double, 5> mean{};
  std::array<double, 5> std_dev{};
};

// Runs the experiment with seeds base_seed .. base_seed + repetitions - 1.
// std_dev uses the population formula unless sample_std is set.
RepetitionSummary repeat_protocol(
    const std::function<MetricsReport(std::uint64_t)>& run, int repetitions,
    std::uint64_t base_seed, bool sample_std = false);

std::string render_confusion(const ConfusionMatrix& confusion,
                             const std::vector<std::string>& class_names);
std::string render_report(const MetricsReport& report,
                          const std::vector<std::string>& class_names);
std::string render_summary(const RepetitionSummary& summary);

// One row per repetition plus mean/std rows; percentages with full precision.
void save_summary_csv(const RepetitionSummary& summary,
                      const std::filesystem::path& dest);
void save_confusion_csv(const ConfusionMatrix& confusion,
                        const std::vector<std::string>& class_names,
                        const std::filesystem::path& dest);

} // namespace ricenet
