#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ricenet/features.hpp"
#include "ricenet/types.hpp"

namespace ricenet {

struct SvmHyper {
  double c = 1.0;
  double gamma = 1.0;
};

double rbf(const Vector& x, const Vector& y, double gamma);

// Gram matrix exp(-gamma * ||x_i - x_j||^2) between rows of a and rows of b.
Matrix rbf_kernel(const Matrix& a, const Matrix& b, double gamma);

struct BinarySvmModel {
  Matrix support_vectors; // one row per retained support vector
  Vector dual_coefs;      // alpha_i * y_i
  double bias = 0.0;
  SvmHyper hyper;

  double decision(const Vector& x) const;
};

// Labels in {-1, +1}; trains by SMO with maximal-violating-pair selection,
// KKT tolerance 1e-3, at most 1000 * n pair updates.
BinarySvmModel train_binary(const Matrix& x, const std::vector<int>& y,
                            const SvmHyper& hyper);

struct SvmModel {
  int num_classes = 0;
  std::vector<std::string> class_names;       // optional, for reporting
  FeatureMode mode = FeatureMode::SpatioSpectral;
  Standardizer standardizer;
  std::vector<std::pair<int, int>> pairs;     // (i, j), i < j
  std::vector<BinarySvmModel> binary;         // aligned with pairs

  // Positive decision values vote for the first class of the pair.
};

SvmModel train_multiclass(const Matrix& x, const std::vector<int>& labels,
                          const SvmHyper& hyper);

// Row per sample: votes plus a sigmoid-squashed decision-sum tie-breaker in
// (0, 1/(K+1)), so vote order is never overturned but ranking is total.
Matrix predict_scores(const SvmModel& model, const Matrix& x);
std::vector<int> predict(const SvmModel& model, const Matrix& x);

struct CvResult {
  SvmHyper best;
  std::vector<SvmHyper> grid;          // sorted by (C, gamma)
  std::vector<double> mean_accuracy;   // aligned with grid
};

// Mean validation accuracy over n_iter stratified shuffled 80/20 splits;
// ties resolved toward smaller C, then smaller gamma.
CvResult cross_validate(const Matrix& x, const std::vector<int>& labels,
                        const std::vector<SvmHyper>& grid, int n_iter,
                        std::uint64_t seed);

// C in {0.1, 1, 10, 100} x gamma in {0.001, 0.01, 0.1, 1}/feature_dim.
std::vector<SvmHyper> default_grid(int feature_dim);

void save_svm(const SvmModel& model, const std::filesystem::path& dest);
SvmModel load_svm(const std::filesystem::path& src);

} // namespace ricenet
