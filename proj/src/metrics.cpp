#include "ricenet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ricenet/error.hpp"

namespace ricenet {

ConfusionMatrix confusion(const std::vector<int>& true_labels,
                          const std::vector<int>& predicted_labels,
                          int num_classes) {
  if (true_labels.size() != predicted_labels.size())
    throw_data("confusion: label vectors differ in length");
  if (num_classes < 1)
    throw_data("confusion: need at least one class");
  ConfusionMatrix m = ConfusionMatrix::Zero(num_classes, num_classes);
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    const int t = true_labels[i], p = predicted_labels[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
      throw_data("confusion: label out of range at sample " +
                 std::to_string(i));
    m(t, p) += 1;
  }
  return m;
}

double topk_accuracy(const Matrix& probabilities,
                     const std::vector<int>& true_labels, int k) {
  const Eigen::Index n = probabilities.rows();
  const Eigen::Index num_classes = probabilities.cols();
  if (static_cast<Eigen::Index>(true_labels.size()) != n)
    throw_data("topk_accuracy: row count does not match label count");
  if (k < 1 || k > num_classes)
    throw_data("topk_accuracy: k out of range");
  if (n == 0) return 0.0;

  long hits = 0;
  std::vector<int> order(static_cast<std::size_t>(num_classes));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int t = true_labels[static_cast<std::size_t>(i)];
    if (t < 0 || t >= num_classes)
      throw_data("topk_accuracy: label out of range");
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return probabilities(i, a) > probabilities(i, b);
    });
    for (int r = 0; r < k; ++r)
      if (order[static_cast<std::size_t>(r)] == t) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

MacroPrf macro_prf(const ConfusionMatrix& m) {
  if (m.rows() != m.cols() || m.rows() < 1)
    throw_data("macro_prf: confusion matrix must be square and non-empty");
  const Eigen::Index num_classes = m.rows();
  MacroPrf out;
  out.precision = Vector::Zero(num_classes);
  out.recall = Vector::Zero(num_classes);
  out.f_score = Vector::Zero(num_classes);
  for (Eigen::Index c = 0; c < num_classes; ++c) {
    const double tp = static_cast<double>(m(c, c));
    const double predicted = static_cast<double>(m.col(c).sum());
    const double actual = static_cast<double>(m.row(c).sum());
    const double p = predicted > 0.0 ? tp / predicted : 0.0;
    const double r = actual > 0.0 ? tp / actual : 0.0;
    out.precision(c) = p;
    out.recall(c) = r;
    out.f_score(c) = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  out.macro_precision = out.precision.mean();
  out.macro_recall = out.recall.mean();
  out.macro_f = out.f_score.mean();
  return out;
}

MetricsReport evaluate(const Matrix& probabilities,
                       const std::vector<int>& true_labels, int num_classes) {
  if (probabilities.cols() != num_classes)
    throw_data("evaluate: score column count does not match class count");
  std::vector<int> predicted(true_labels.size());
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    Eigen::Index best = 0;
    probabilities.row(i).maxCoeff(&best); // first max -> lowest class index
    predicted[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  MetricsReport report;
  report.confusion = confusion(true_labels, predicted, num_classes);
  report.top1 = topk_accuracy(probabilities, true_labels, 1);
  report.top2 =
      topk_accuracy(probabilities, true_labels, std::min(2, num_classes));
  const MacroPrf prf = macro_prf(report.confusion);
  report.macro_precision = prf.macro_precision;
  report.macro_recall = prf.macro_recall;
  report.macro_f = prf.macro_f;
  return report;
}

RepetitionSummary repeat_protocol(
    const std::function<MetricsReport(std::uint64_t)>& run, int repetitions,
    std::uint64_t base_seed, bool sample_std) {
  if (repetitions < 1)
    throw_config("repeat_protocol: repetitions must be >= 1");
  RepetitionSummary summary;
  summary.reports.reserve(static_cast<std::size_t>(repetitions));
  for (int r = 0; r < repetitions; ++r)
    summary.reports.push_back(run(base_seed + static_cast<std::uint64_t>(r)));

  const double n = static_cast<double>(repetitions);
  for (std::size_t metric = 0; metric < MetricsReport::kMetricNames.size();
       ++metric) {
    double mean = 0.0;
    for (const MetricsReport& rep : summary.reports)
      mean += rep.metric_values()[metric];
    mean /= n;
    double ss = 0.0;
    for (const MetricsReport& rep : summary.reports) {
      const double d = rep.metric_values()[metric] - mean;
      ss += d * d;
    }
    const double denom = sample_std && repetitions > 1 ? n - 1.0 : n;
    summary.mean[metric] = mean;
    summary.std_dev[metric] = std::sqrt(ss / denom);
  }
  return summary;
}

namespace {

std::string pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * fraction);
  return buf;
}

} // namespace

std::string render_confusion(const ConfusionMatrix& m,
                             const std::vector<std::string>& class_names) {
  if (static_cast<Eigen::Index>(class_names.size()) != m.rows())
    throw_data("render_confusion: name count does not match matrix");
  std::size_t name_width = 4;
  for (const std::string& n : class_names)
    name_width = std::max(name_width, n.size());
  std::size_t cell = 6;
  for (const std::string& n : class_names)
    cell = std::max(cell, n.size() + 1);

  std::ostringstream os;
  os << std::string(name_width, ' ');
  for (const std::string& n : class_names)
    os << std::string(cell - n.size(), ' ') << n;
  os << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const std::string& n = class_names[static_cast<std::size_t>(i)];
    os << n << std::string(name_width - n.size(), ' ');
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const std::string v = std::to_string(m(i, j));
      os << std::string(cell - v.size(), ' ') << v;
    }
    os << '\n';
  }
  return os.str();
}

std::string render_report(const MetricsReport& report,
                          const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os << "top-1 accuracy (%):      " << pct(report.top1) << '\n'
     << "top-2 accuracy (%):      " << pct(report.top2) << '\n'
     << "macro precision (%):     " << pct(report.macro_precision) << '\n'
     << "macro recall (%):        " << pct(report.macro_recall) << '\n'
     << "macro f-score (%):       " << pct(report.macro_f) << '\n'
     << "confusion matrix (rows = true, cols = predicted):\n"
     << render_confusion(report.confusion, class_names);
  return os.str();
}

std::string render_summary(const RepetitionSummary& summary) {
  std::ostringstream os;
  os << "repetitions: " << summary.reports.size() << '\n';
  for (std::size_t metric = 0; metric < MetricsReport::kMetricNames.size();
       ++metric) {
    os << MetricsReport::kMetricNames[metric] << " (%): mean "
       << pct(summary.mean[metric]) << " std " << pct(summary.std_dev[metric])
       << '\n';
  }
  return os.str();
}

void save_summary_csv(const RepetitionSummary& summary,
                      const std::filesystem::path& dest) {
  std::ofstream os(dest);
  if (!os)
    throw_data("cannot open for writing: " + dest.string());
  os << "row";
  for (const char* name : MetricsReport::kMetricNames) os << ',' << name;
  os << '\n';
  char buf[40];
  auto emit = [&](const std::string& tag, const std::array<double, 5>& vals) {
    os << tag;
    for (double v : vals) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      os << ',' << buf;
    }
    os << '\n';
  };
  for (std::size_t r = 0; r < summary.reports.size(); ++r)
    emit("rep_" + std::to_string(r), summary.reports[r].metric_values());
  emit("mean", summary.mean);
  emit("std", summary.std_dev);
  if (!os)
    throw_data("write failed: " + dest.string());
}

void save_confusion_csv(const ConfusionMatrix& confusion,
                        const std::vector<std::string>& class_names,
                        const std::filesystem::path& dest) {
  if (static_cast<Eigen::Index>(class_names.size()) != confusion.rows())
    throw_data("save_confusion_csv: name count does not match matrix");
  std::ofstream os(dest);
  if (!os)
    throw_data("cannot open for writing: " + dest.string());
  os << "true\\predicted";
  for (const std::string& n : class_names) os << ',' << n;
  os << '\n';
  for (Eigen::Index i = 0; i < confusion.rows(); ++i) {
    os << class_names[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < confusion.cols(); ++j)
      os << ',' << confusion(i, j);
    os << '\n';
  }
  if (!os)
    throw_data("write failed: " + dest.string());
}

} // namespace ricenet
