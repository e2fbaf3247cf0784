#include "ricenet/svm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "ricenet/error.hpp"
#include "ricenet/rng.hpp"

namespace ricenet {

double rbf(const Vector& x, const Vector& y, double gamma) {
  if (x.size() != y.size())
    throw_data("rbf: vector lengths differ");
  return std::exp(-gamma * (x - y).squaredNorm());
}

Matrix rbf_kernel(const Matrix& a, const Matrix& b, double gamma) {
  if (a.cols() != b.cols())
    throw_data("rbf_kernel: feature dimensions differ");
  const Vector a_sq = a.rowwise().squaredNorm();
  const Vector b_sq = b.rowwise().squaredNorm();
  Matrix d2 = ((-2.0 * a * b.transpose()).colwise() + a_sq).rowwise() +
              b_sq.transpose();
  return (-gamma * d2.cwiseMax(0.0)).array().exp();
}

double BinarySvmModel::decision(const Vector& x) const {
  if (x.size() != support_vectors.cols())
    throw_data("svm decision: feature dimension mismatch");
  double sum = bias;
  for (Eigen::Index i = 0; i < support_vectors.rows(); ++i) {
    const double d2 = (support_vectors.row(i).transpose() - x).squaredNorm();
    sum += dual_coefs(i) * std::exp(-hyper.gamma * d2);
  }
  return sum;
}

BinarySvmModel train_binary(const Matrix& x, const std::vector<int>& y,
                            const SvmHyper& hyper) {
  const Eigen::Index n = x.rows();
  if (static_cast<Eigen::Index>(y.size()) != n)
    throw_data("train_binary: label count does not match sample count");
  if (n < 2)
    throw_data("train_binary: need at least 2 samples");
  if (!(hyper.c > 0.0) || !(hyper.gamma > 0.0))
    throw_config("train_binary: C and gamma must be positive");
  bool has_pos = false, has_neg = false;
  for (int label : y) {
    if (label == 1) has_pos = true;
    else if (label == -1) has_neg = true;
    else throw_data("train_binary: labels must be -1 or +1");
  }
  if (!has_pos || !has_neg)
    throw_data("train_binary: both classes must be present");

  const Matrix kernel = rbf_kernel(x, x, hyper.gamma);
  const double c = hyper.c;
  const double tol = 1e-3;
  const long max_updates = 1000L * static_cast<long>(n);

  Vector alpha = Vector::Zero(n);
  Vector grad = Vector::Constant(n, -1.0); // gradient of the dual at alpha=0
  Vector ys(n);
  for (Eigen::Index i = 0; i < n; ++i) ys(i) = static_cast<double>(y[i]);

  double m_up = 0.0, m_low = 0.0;
  for (long update = 0; update < max_updates; ++update) {
    // Maximal violating pair over I_up / I_low of -y_i * grad_i.
    Eigen::Index i = -1, j = -1;
    m_up = -std::numeric_limits<double>::infinity();
    m_low = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) {
      const double v = -ys(k) * grad(k);
      const bool in_up = (ys(k) > 0 && alpha(k) < c) ||
                         (ys(k) < 0 && alpha(k) > 0);
      const bool in_low = (ys(k) < 0 && alpha(k) < c) ||
                          (ys(k) > 0 && alpha(k) > 0);
      if (in_up && v > m_up) {
        m_up = v;
        i = k;
      }
      if (in_low && v < m_low) {
        m_low = v;
        j = k;
      }
    }
    if (i < 0 || j < 0 || m_up - m_low < tol) break;

    // Move along alpha_i += y_i * t, alpha_j -= y_j * t (keeps y'alpha).
    const double quad =
        std::max(kernel(i, i) + kernel(j, j) - 2.0 * kernel(i, j), 1e-12);
    double t = (m_up - m_low) / quad;
    double t_lo = -std::numeric_limits<double>::infinity();
    double t_hi = std::numeric_limits<double>::infinity();
    if (ys(i) > 0) {
      t_lo = std::max(t_lo, -alpha(i));
      t_hi = std::min(t_hi, c - alpha(i));
    } else {
      t_lo = std::max(t_lo, alpha(i) - c);
      t_hi = std::min(t_hi, alpha(i));
    }
    if (ys(j) > 0) {
      t_lo = std::max(t_lo, alpha(j) - c);
      t_hi = std::min(t_hi, alpha(j));
    } else {
      t_lo = std::max(t_lo, -alpha(j));
      t_hi = std::min(t_hi, c - alpha(j));
    }
    t = std::clamp(t, t_lo, t_hi);
    if (t == 0.0) break;

    const double delta_i = ys(i) * t;
    const double delta_j = -ys(j) * t;
    alpha(i) += delta_i;
    alpha(j) += delta_j;
    grad += (ys.array() * kernel.col(i).array()).matrix() * (ys(i) * delta_i) +
            (ys.array() * kernel.col(j).array()).matrix() * (ys(j) * delta_j);
  }

  // Bias from free support vectors; midpoint of the violation gap otherwise.
  double bias_sum = 0.0;
  int free_count = 0;
  for (Eigen::Index k = 0; k < n; ++k)
    if (alpha(k) > 1e-9 && alpha(k) < c - 1e-9) {
      bias_sum += -ys(k) * grad(k);
      ++free_count;
    }
  const double bias =
      free_count > 0 ? bias_sum / free_count : 0.5 * (m_up + m_low);

  BinarySvmModel model;
  model.hyper = hyper;
  model.bias = bias;
  std::vector<Eigen::Index> sv;
  for (Eigen::Index k = 0; k < n; ++k)
    if (alpha(k) > 1e-12) sv.push_back(k);
  model.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
  model.dual_coefs.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t s = 0; s < sv.size(); ++s) {
    model.support_vectors.row(static_cast<Eigen::Index>(s)) = x.row(sv[s]);
    model.dual_coefs(static_cast<Eigen::Index>(s)) = alpha(sv[s]) * ys(sv[s]);
  }
  return model;
}

SvmModel train_multiclass(const Matrix& x, const std::vector<int>& labels,
                          const SvmHyper& hyper) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows())
    throw_data("train_multiclass: label count does not match sample count");
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2)
    throw_data("train_multiclass: need at least 2 classes");
  const int num_classes = static_cast<int>(distinct.size());
  if (*distinct.begin() != 0 || *distinct.rbegin() != num_classes - 1)
    throw_data("train_multiclass: labels must be contiguous from 0");

  SvmModel model;
  model.num_classes = num_classes;
  model.standardizer.fit(x);
  const Matrix xs = model.standardizer.transform(x);

  for (int i = 0; i < num_classes; ++i)
    for (int j = i + 1; j < num_classes; ++j) {
      std::vector<Eigen::Index> rows;
      std::vector<int> pair_labels;
      for (std::size_t s = 0; s < labels.size(); ++s)
        if (labels[s] == i || labels[s] == j) {
          rows.push_back(static_cast<Eigen::Index>(s));
          pair_labels.push_back(labels[s] == i ? 1 : -1);
        }
      Matrix pair_x(static_cast<Eigen::Index>(rows.size()), xs.cols());
      for (std::size_t s = 0; s < rows.size(); ++s)
        pair_x.row(static_cast<Eigen::Index>(s)) = xs.row(rows[s]);
      model.pairs.emplace_back(i, j);
      model.binary.push_back(train_binary(pair_x, pair_labels, hyper));
    }
  return model;
}

Matrix predict_scores(const SvmModel& model, const Matrix& x) {
  if (model.num_classes < 2 || model.binary.size() != model.pairs.size())
    throw_data("predict_scores: malformed model");
  const Matrix xs = model.standardizer.transform(x);
  const int num_classes = model.num_classes;
  Matrix scores = Matrix::Zero(xs.rows(), num_classes);
  for (Eigen::Index s = 0; s < xs.rows(); ++s) {
    const Vector row = xs.row(s).transpose();
    Vector votes = Vector::Zero(num_classes);
    Vector signed_sum = Vector::Zero(num_classes);
    for (std::size_t p = 0; p < model.pairs.size(); ++p) {
      const auto [i, j] = model.pairs[p];
      const double f = model.binary[p].decision(row);
      if (f > 0.0)
        votes(i) += 1.0;
      else
        votes(j) += 1.0;
      signed_sum(i) += f;
      signed_sum(j) -= f;
    }
    for (int k = 0; k < num_classes; ++k)
      scores(s, k) = votes(k) + 1.0 / (1.0 + std::exp(-signed_sum(k))) /
                                    (num_classes + 1);
  }
  return scores;
}

std::vector<int> predict(const SvmModel& model, const Matrix& x) {
  const Matrix scores = predict_scores(model, x);
  std::vector<int> labels(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index s = 0; s < scores.rows(); ++s) {
    Eigen::Index best = 0;
    scores.row(s).maxCoeff(&best); // first max -> lowest class index
    labels[static_cast<std::size_t>(s)] = static_cast<int>(best);
  }
  return labels;
}

namespace {

struct StratifiedSplit {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> validation;
};

StratifiedSplit stratified_80_20(const std::vector<int>& labels,
                                 int num_classes, Rng& rng) {
  StratifiedSplit split;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<Eigen::Index> members;
    for (std::size_t s = 0; s < labels.size(); ++s)
      if (labels[s] == c) members.push_back(static_cast<Eigen::Index>(s));
    if (members.size() < 2)
      throw_data("cross_validate: class " + std::to_string(c) +
                 " has fewer than 2 samples");
    rng.shuffle(members);
    std::size_t n_val = static_cast<std::size_t>(
        std::lround(0.2 * static_cast<double>(members.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, members.size() - 1);
    for (std::size_t s = 0; s < members.size(); ++s)
      (s < n_val ? split.validation : split.train).push_back(members[s]);
  }
  return split;
}

Matrix take_rows(const Matrix& x, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t s = 0; s < rows.size(); ++s)
    out.row(static_cast<Eigen::Index>(s)) = x.row(rows[s]);
  return out;
}

} // namespace

CvResult cross_validate(const Matrix& x, const std::vector<int>& labels,
                        const std::vector<SvmHyper>& grid, int n_iter,
                        std::uint64_t seed) {
  if (grid.empty())
    throw_config("cross_validate: empty hyperparameter grid");
  if (n_iter < 1)
    throw_config("cross_validate: n_iter must be >= 1");
  const int num_classes =
      labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;

  CvResult result;
  result.grid = grid;
  std::sort(result.grid.begin(), result.grid.end(),
            [](const SvmHyper& a, const SvmHyper& b) {
              return a.c != b.c ? a.c < b.c : a.gamma < b.gamma;
            });
  result.mean_accuracy.assign(result.grid.size(), 0.0);

  std::vector<StratifiedSplit> splits;
  for (int it = 0; it < n_iter; ++it) {
    Rng rng = Rng::derive(seed, 0x73706c6974ULL, // "split" stream tag
                          static_cast<std::uint64_t>(it));
    splits.push_back(stratified_80_20(labels, num_classes, rng));
  }

  double best_acc = -1.0;
  std::size_t best_idx = 0;
  for (std::size_t g = 0; g < result.grid.size(); ++g) {
    double acc_sum = 0.0;
    for (const StratifiedSplit& split : splits) {
      std::vector<int> train_labels, val_labels;
      for (Eigen::Index idx : split.train)
        train_labels.push_back(labels[static_cast<std::size_t>(idx)]);
      for (Eigen::Index idx : split.validation)
        val_labels.push_back(labels[static_cast<std::size_t>(idx)]);
      const SvmModel model = train_multiclass(take_rows(x, split.train),
                                              train_labels, result.grid[g]);
      const std::vector<int> pred = predict(model, take_rows(x, split.validation));
      long hits = 0;
      for (std::size_t s = 0; s < pred.size(); ++s)
        if (pred[s] == val_labels[s]) ++hits;
      acc_sum += static_cast<double>(hits) /
                 static_cast<double>(std::max<std::size_t>(pred.size(), 1));
    }
    result.mean_accuracy[g] = acc_sum / n_iter;
    if (result.mean_accuracy[g] > best_acc) { // ties keep the earlier
      best_acc = result.mean_accuracy[g];     // (smaller C, then gamma)
      best_idx = g;
    }
  }
  result.best = result.grid[best_idx];
  return result;
}

std::vector<SvmHyper> default_grid(int feature_dim) {
  if (feature_dim < 1)
    throw_config("default_grid: feature dimension must be positive");
  std::vector<SvmHyper> grid;
  for (double c : {0.1, 1.0, 10.0, 100.0})
    for (double g : {0.001, 0.01, 0.1, 1.0})
      grid.push_back({c, g / feature_dim});
  return grid;
}

namespace {

nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector vector_from_json(const nlohmann::json& arr) {
  Vector v(static_cast<Eigen::Index>(arr.size()));
  Eigen::Index i = 0;
  for (const auto& e : arr) v(i++) = e.get<double>();
  return v;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    rows.push_back(vector_to_json(m.row(r).transpose()));
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& rows, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), cols);
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw_data("svm model: ragged support-vector matrix");
    m.row(r++) = vector_from_json(row).transpose();
  }
  return m;
}

} // namespace

void save_svm(const SvmModel& model, const std::filesystem::path& dest) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "svm-ovo-rbf";
  j["num_classes"] = model.num_classes;
  j["class_names"] = model.class_names;
  j["feature_mode"] = to_string(model.mode);
  j["standardizer"] = {{"mean", vector_to_json(model.standardizer.mean)},
                       {"std", vector_to_json(model.standardizer.std_dev)}};
  nlohmann::json pairs = nlohmann::json::array();
  for (std::size_t p = 0; p < model.pairs.size(); ++p) {
    const BinarySvmModel& b = model.binary[p];
    pairs.push_back({{"first", model.pairs[p].first},
                     {"second", model.pairs[p].second},
                     {"c", b.hyper.c},
                     {"gamma", b.hyper.gamma},
                     {"bias", b.bias},
                     {"dual_coefs", vector_to_json(b.dual_coefs)},
                     {"support_vectors", matrix_to_json(b.support_vectors)}});
  }
  j["pairs"] = std::move(pairs);

  std::ofstream os(dest);
  if (!os)
    throw_data("cannot open for writing: " + dest.string());
  os << j.dump(1) << '\n';
  if (!os)
    throw_data("write failed: " + dest.string());
}

SvmModel load_svm(const std::filesystem::path& src) {
  std::ifstream is(src);
  if (!is)
    throw_data("cannot open: " + src.string());
  nlohmann::json j;
  try {
    is >> j;
    if (j.at("schema_version").get<int>() != 1)
      throw_data("svm model: unsupported schema version");
    if (j.at("kind").get<std::string>() != "svm-ovo-rbf")
      throw_data("svm model: unexpected kind");

    SvmModel model;
    model.num_classes = j.at("num_classes").get<int>();
    model.class_names = j.at("class_names").get<std::vector<std::string>>();
    model.mode = parse_feature_mode(j.at("feature_mode").get<std::string>());
    model.standardizer.mean = vector_from_json(j.at("standardizer").at("mean"));
    model.standardizer.std_dev =
        vector_from_json(j.at("standardizer").at("std"));
    model.standardizer.mode = model.mode;
    const Eigen::Index dim = model.standardizer.mean.size();
    for (const auto& p : j.at("pairs")) {
      BinarySvmModel b;
      b.hyper.c = p.at("c").get<double>();
      b.hyper.gamma = p.at("gamma").get<double>();
      b.bias = p.at("bias").get<double>();
      b.dual_coefs = vector_from_json(p.at("dual_coefs"));
      b.support_vectors = matrix_from_json(p.at("support_vectors"), dim);
      if (b.support_vectors.rows() != b.dual_coefs.size())
        throw_data("svm model: coefficient count mismatch");
      model.pairs.emplace_back(p.at("first").get<int>(),
                               p.at("second").get<int>());
      model.binary.push_back(std::move(b));
    }
    const std::size_t expected =
        static_cast<std::size_t>(model.num_classes) *
        static_cast<std::size_t>(model.num_classes - 1) / 2;
    if (model.pairs.size() != expected)
      throw_data("svm model: wrong number of pairwise models");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw_data("svm model parse error in " + src.string() + ": " + e.what());
  }
}

} // namespace ricenet
