#include "ricenet/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>

#include "ricenet/error.hpp"

namespace ricenet {

namespace {

int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  Vector kernel(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i)
    kernel(i + radius) = std::exp(-0.5 * (i * i) / (sigma * sigma));
  kernel /= kernel.sum();

  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  Image tmp(h, w), out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel(i + radius) * img(r, reflect_index(c + i, w));
      tmp(r, c) = acc;
    }
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel(i + radius) * tmp(reflect_index(r + i, h), c);
      out(r, c) = acc;
    }
  return out;
}

// Local means over a window clipped at the borders, via a summed-area table.
Image local_mean(const Image& img, int window) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  const int half = window / 2;
  Image sat(h + 1, w + 1);
  sat.setZero();
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      sat(r + 1, c + 1) = img(r, c) + sat(r, c + 1) + sat(r + 1, c) - sat(r, c);
  Image out(h, w);
  for (int r = 0; r < h; ++r) {
    const int r0 = std::max(0, r - half), r1 = std::min(h - 1, r + half);
    for (int c = 0; c < w; ++c) {
      const int c0 = std::max(0, c - half), c1 = std::min(w - 1, c + half);
      const double sum = sat(r1 + 1, c1 + 1) - sat(r0, c1 + 1) -
                         sat(r1 + 1, c0) + sat(r0, c0);
      out(r, c) = sum / ((r1 - r0 + 1) * (c1 - c0 + 1));
    }
  }
  return out;
}

// 3x3 square structuring element; out-of-bounds treated as background.
Mask erode3(const Mask& m) {
  const int h = static_cast<int>(m.rows()), w = static_cast<int>(m.cols());
  Mask out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      bool keep = true;
      for (int dr = -1; dr <= 1 && keep; ++dr)
        for (int dc = -1; dc <= 1 && keep; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w || !m(rr, cc))
            keep = false;
        }
      out(r, c) = keep;
    }
  return out;
}

Mask dilate3(const Mask& m) {
  const int h = static_cast<int>(m.rows()), w = static_cast<int>(m.cols());
  Mask out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      bool hit = false;
      for (int dr = -1; dr <= 1 && !hit; ++dr)
        for (int dc = -1; dc <= 1 && !hit; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < h && cc >= 0 && cc < w && m(rr, cc)) hit = true;
        }
      out(r, c) = hit;
    }
  return out;
}

Mask largest_component(const Mask& m) {
  const int h = static_cast<int>(m.rows()), w = static_cast<int>(m.cols());
  ImageT<int> label(h, w);
  label.setConstant(-1);
  int best_label = -1;
  int best_size = 0;
  int next = 0;
  std::deque<std::pair<int, int>> queue;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!m(r, c) || label(r, c) >= 0) continue;
      int size = 0;
      queue.emplace_back(r, c);
      label(r, c) = next;
      while (!queue.empty()) {
        auto [pr, pc] = queue.front();
        queue.pop_front();
        ++size;
        const int nrs[4] = {pr - 1, pr + 1, pr, pr};
        const int ncs[4] = {pc, pc, pc - 1, pc + 1};
        for (int k = 0; k < 4; ++k) {
          const int nr = nrs[k], nc = ncs[k];
          if (nr >= 0 && nr < h && nc >= 0 && nc < w && m(nr, nc) &&
              label(nr, nc) < 0) {
            label(nr, nc) = next;
            queue.emplace_back(nr, nc);
          }
        }
      }
      if (size > best_size) {
        best_size = size;
        best_label = next;
      }
      ++next;
    }
  Mask out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out(r, c) = label(r, c) == best_label;
  return out;
}

} // namespace

Mask compute_mask(const Image& ss, const MaskParams& params) {
  const int h = static_cast<int>(ss.rows()), w = static_cast<int>(ss.cols());
  if (h < 8 || w < 8)
    throw_data("compute_mask: image must be at least 8x8");

  const Image blurred = gaussian_blur(ss, params.blur_sigma);
  const Image means = local_mean(blurred, params.threshold_window);
  // A pixel must exceed its neighborhood mean by the offset; on a flat
  // background (value = local mean) nothing passes, so only genuinely bright
  // structure survives.
  const double offset =
      params.threshold_offset_frac * (blurred.maxCoeff() - blurred.minCoeff());
  Mask mask = blurred > (means + offset);
  mask = dilate3(erode3(mask));  // opening
  mask = erode3(dilate3(mask));  // closing
  mask = largest_component(mask);

  const double fill =
      static_cast<double>(mask.count()) / (static_cast<double>(h) * w);
  if (fill < params.min_fill || fill > params.max_fill)
    throw_data("compute_mask: foreground fraction " + std::to_string(fill) +
               " outside [" + std::to_string(params.min_fill) + ", " +
               std::to_string(params.max_fill) + "]");
  return mask;
}

namespace {

ImageT<int> quantize(const Image& img, int levels) {
  const double lo = img.minCoeff(), hi = img.maxCoeff();
  ImageT<int> q(img.rows(), img.cols());
  if (hi <= lo) {
    q.setZero();
    return q;
  }
  const double scale = levels / (hi - lo);
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c)
      q(r, c) = std::min(levels - 1,
                         static_cast<int>((img(r, c) - lo) * scale));
  return q;
}

} // namespace

Matrix glcm(const Image& ss, const GlcmParams& params) {
  if (params.levels < 2)
    throw_config("glcm: levels must be >= 2");
  if (ss.size() < 2)
    throw_data("glcm: image too small");
  const ImageT<int> q = quantize(ss, params.levels);
  const int h = static_cast<int>(ss.rows()), w = static_cast<int>(ss.cols());

  Matrix accum = Matrix::Zero(params.levels, params.levels);
  int used_offsets = 0;
  for (int d : params.distances) {
    for (double angle : params.angles_deg) {
      const double rad = angle * M_PI / 180.0;
      const int dr = -static_cast<int>(std::lround(d * std::sin(rad)));
      const int dc = static_cast<int>(std::lround(d * std::cos(rad)));
      Matrix counts = Matrix::Zero(params.levels, params.levels);
      double total = 0.0;
      for (int r = 0; r < h; ++r) {
        const int rr = r + dr;
        if (rr < 0 || rr >= h) continue;
        for (int c = 0; c < w; ++c) {
          const int cc = c + dc;
          if (cc < 0 || cc >= w) continue;
          counts(q(r, c), q(rr, cc)) += 1.0;
          counts(q(rr, cc), q(r, c)) += 1.0;
          total += 2.0;
        }
      }
      if (total == 0.0)
        throw_data("glcm: image has no pixel pairs along an offset");
      accum += counts / total;
      ++used_offsets;
    }
  }
  if (used_offsets == 0)
    throw_config("glcm: no offsets configured");
  return accum / used_offsets;
}

Eigen::Matrix<double, 6, 1> texture_features(const Image& ss,
                                             const GlcmParams& params) {
  const Matrix p = glcm(ss, params);
  const int L = static_cast<int>(p.rows());

  double contrast = 0.0, dissimilarity = 0.0, homogeneity = 0.0, asm_v = 0.0;
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      const double v = p(i, j);
      const double d = i - j;
      contrast += v * d * d;
      dissimilarity += v * std::abs(d);
      homogeneity += v / (1.0 + d * d);
      asm_v += v * v;
    }

  Vector row_marginal = p.rowwise().sum();
  Vector col_marginal = p.colwise().sum();
  double mu_i = 0.0, mu_j = 0.0;
  for (int i = 0; i < L; ++i) {
    mu_i += i * row_marginal(i);
    mu_j += i * col_marginal(i);
  }
  double var_i = 0.0, var_j = 0.0;
  for (int i = 0; i < L; ++i) {
    var_i += (i - mu_i) * (i - mu_i) * row_marginal(i);
    var_j += (i - mu_j) * (i - mu_j) * col_marginal(i);
  }
  const double sigma = std::sqrt(var_i) * std::sqrt(var_j);
  double correlation = 1.0; // a constant image is perfectly self-correlated
  if (sigma > 1e-12) {
    double cov = 0.0;
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) cov += p(i, j) * (i - mu_i) * (j - mu_j);
    correlation = cov / sigma;
  }

  Eigen::Matrix<double, 6, 1> out;
  out << contrast, dissimilarity, homogeneity, asm_v, std::sqrt(asm_v),
      correlation;
  return out;
}

Ellipse fit_ellipse(const std::vector<Eigen::Vector2d>& boundary_points) {
  const std::size_t n = boundary_points.size();
  if (n < 6)
    throw_numeric("fit_ellipse: need at least 6 points");

  // Center and isotropically scale for conditioning.
  double mx = 0.0, my = 0.0;
  for (const auto& p : boundary_points) {
    my += p.x(); // (row, col) -> y = row, x = col
    mx += p.y();
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double scale = 0.0;
  for (const auto& p : boundary_points) {
    const double dx = p.y() - mx, dy = p.x() - my;
    scale += dx * dx + dy * dy;
  }
  scale = std::sqrt(scale / static_cast<double>(n));
  if (!(scale > 0.0))
    throw_numeric("fit_ellipse: degenerate points");

  Matrix d1(n, 3), d2(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (boundary_points[i].y() - mx) / scale;
    const double y = (boundary_points[i].x() - my) / scale;
    d1(static_cast<Eigen::Index>(i), 0) = x * x;
    d1(static_cast<Eigen::Index>(i), 1) = x * y;
    d1(static_cast<Eigen::Index>(i), 2) = y * y;
    d2(static_cast<Eigen::Index>(i), 0) = x;
    d2(static_cast<Eigen::Index>(i), 1) = y;
    d2(static_cast<Eigen::Index>(i), 2) = 1.0;
  }

  const Eigen::Matrix3d s1 = d1.transpose() * d1;
  const Eigen::Matrix3d s2 = d1.transpose() * d2;
  const Eigen::Matrix3d s3 = d2.transpose() * d2;
  Eigen::FullPivLU<Eigen::Matrix3d> lu(s3);
  if (!lu.isInvertible())
    throw_numeric("fit_ellipse: collinear or degenerate points");
  const Eigen::Matrix3d t = -lu.solve(s2.transpose());
  const Eigen::Matrix3d m = s1 + s2 * t;
  Eigen::Matrix3d reduced;
  reduced.row(0) = m.row(2) / 2.0;
  reduced.row(1) = -m.row(1);
  reduced.row(2) = m.row(0) / 2.0;

  Eigen::EigenSolver<Eigen::Matrix3d> solver(reduced);
  Eigen::Vector3d conic_quad = Eigen::Vector3d::Zero();
  bool found = false;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(solver.eigenvalues()(k).imag()) > 1e-9) continue;
    const Eigen::Vector3d v = solver.eigenvectors().col(k).real();
    if (4.0 * v(0) * v(2) - v(1) * v(1) > 0.0) {
      conic_quad = v;
      found = true;
      break;
    }
  }
  if (!found)
    throw_numeric("fit_ellipse: no elliptical solution");
  const Eigen::Vector3d conic_lin = t * conic_quad;

  const double A = conic_quad(0), B = conic_quad(1), C = conic_quad(2);
  const double D = conic_lin(0), E = conic_lin(1), F = conic_lin(2);
  Eigen::Matrix2d quad;
  quad << A, B / 2.0, B / 2.0, C;
  const Eigen::Vector2d lin(D, E);
  const Eigen::Vector2d center = -0.5 * quad.inverse() * lin;
  const double rhs = center.dot(quad * center) - F;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> qes(quad);
  const Eigen::Vector2d evals = qes.eigenvalues();
  double semi[2];
  for (int k = 0; k < 2; ++k) {
    const double ratio = rhs / evals(k);
    if (!(ratio > 0.0))
      throw_numeric("fit_ellipse: conic is not a real ellipse");
    semi[k] = std::sqrt(ratio);
  }
  int major_idx = semi[0] >= semi[1] ? 0 : 1;
  const Eigen::Vector2d axis = qes.eigenvectors().col(major_idx);

  Ellipse e;
  e.center_col = mx + scale * center(0);
  e.center_row = my + scale * center(1);
  e.semi_major = scale * std::max(semi[0], semi[1]);
  e.semi_minor = scale * std::min(semi[0], semi[1]);
  double theta = std::atan2(axis(1), axis(0));
  while (theta >= M_PI / 2.0) theta -= M_PI;
  while (theta < -M_PI / 2.0) theta += M_PI;
  e.orientation = theta;
  if (!std::isfinite(e.semi_major) || !std::isfinite(e.semi_minor) ||
      !(e.semi_minor > 0.0))
    throw_numeric("fit_ellipse: non-finite fit");
  return e;
}

std::vector<Eigen::Vector2d> contour_points(const Mask& mask) {
  const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  std::vector<Eigen::Vector2d> points;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!mask(r, c)) continue;
      const bool border = r == 0 || r == h - 1 || c == 0 || c == w - 1;
      const bool exposed = border || !mask(r - 1, c) || !mask(r + 1, c) ||
                           !mask(r, c - 1) || !mask(r, c + 1);
      if (exposed) points.emplace_back(static_cast<double>(r),
                                       static_cast<double>(c));
    }
  return points;
}

Eigen::Matrix<double, 11, 1> morphological_features(const Mask& mask) {
  const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  const double area = static_cast<double>(mask.count());
  if (area == 0.0)
    throw_data("morphological_features: empty mask");

  double perimeter = 0.0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!mask(r, c)) continue;
      if (r == 0 || !mask(r - 1, c)) perimeter += 1.0;
      if (r == h - 1 || !mask(r + 1, c)) perimeter += 1.0;
      if (c == 0 || !mask(r, c - 1)) perimeter += 1.0;
      if (c == w - 1 || !mask(r, c + 1)) perimeter += 1.0;
    }

  const std::vector<Eigen::Vector2d> contour = contour_points(mask);
  const Ellipse e = fit_ellipse(contour);

  Vector radii(static_cast<Eigen::Index>(contour.size()));
  for (std::size_t i = 0; i < contour.size(); ++i) {
    const double dr = contour[i].x() - e.center_row;
    const double dc = contour[i].y() - e.center_col;
    radii(static_cast<Eigen::Index>(i)) = std::sqrt(dr * dr + dc * dc);
  }
  const double r_mean = radii.mean();
  const double r_std =
      std::sqrt((radii.array() - r_mean).square().mean());
  const double r_min = radii.minCoeff();
  const double r_max = radii.maxCoeff();

  Eigen::Matrix<double, 11, 1> out;
  out << area, perimeter, perimeter / area, 2.0 * e.semi_major,
      2.0 * e.semi_minor,
      std::sqrt(1.0 - (e.semi_minor * e.semi_minor) /
                          (e.semi_major * e.semi_major)),
      r_std, r_min, r_max, r_max / r_min, r_mean / std::max(r_std, 1e-9);
  return out;
}

Vector spectral_features(const Datacube& cube, const Mask& mask) {
  if (static_cast<int>(mask.rows()) != cube.height ||
      static_cast<int>(mask.cols()) != cube.width)
    throw_data("spectral_features: mask dims do not match cube");
  Vector sum = Vector::Zero(cube.bands);
  long count = 0;
  for (int r = 0; r < cube.height; ++r)
    for (int c = 0; c < cube.width; ++c)
      if (mask(r, c)) {
        sum += cube.values.row(r * cube.width + c).transpose();
        ++count;
      }
  if (count == 0)
    throw_data("spectral_features: empty mask");
  return sum / static_cast<double>(count);
}

FeatureMode parse_feature_mode(const std::string& s) {
  if (s == "spatial") return FeatureMode::Spatial;
  if (s == "spectral") return FeatureMode::Spectral;
  if (s == "spatio-spectral") return FeatureMode::SpatioSpectral;
  throw_config("unknown feature mode '" + s +
               "' (expected spatial, spectral or spatio-spectral)");
}

std::string to_string(FeatureMode mode) {
  switch (mode) {
  case FeatureMode::Spatial: return "spatial";
  case FeatureMode::Spectral: return "spectral";
  case FeatureMode::SpatioSpectral: return "spatio-spectral";
  }
  return "?";
}

std::vector<std::string> feature_schema(FeatureMode mode, int bands) {
  static const std::vector<std::string> spatial_names = {
      "glcm_contrast",  "glcm_dissimilarity",
      "glcm_homogeneity", "glcm_asm",
      "glcm_energy",    "glcm_correlation",
      "area",           "perimeter",
      "perimeter_area_ratio", "major_axis_length",
      "minor_axis_length", "eccentricity",
      "radius_std",     "radius_min",
      "radius_max",     "radius_max_min_ratio",
      "haralick_ratio"};
  std::vector<std::string> schema;
  if (mode != FeatureMode::Spectral)
    schema = spatial_names;
  if (mode != FeatureMode::Spatial)
    for (int b = 0; b < bands; ++b)
      schema.push_back("band_" + std::to_string(b));
  return schema;
}

FeatureVector extract(const Datacube& cube, FeatureMode mode,
                      const MaskParams& mask_params,
                      const GlcmParams& glcm_params) {
  cube.validate();
  const Image ss = ss_image(cube);

  FeatureVector fv;
  fv.mode = mode;
  fv.schema = feature_schema(mode, cube.bands);

  Vector spatial;
  if (mode != FeatureMode::Spectral) {
    const Eigen::Matrix<double, 6, 1> tex = texture_features(ss, glcm_params);
    const Eigen::Matrix<double, 11, 1> morph =
        morphological_features(compute_mask(ss, mask_params));
    spatial.resize(17);
    spatial << tex, morph;
  }
  Vector spectral;
  if (mode != FeatureMode::Spatial)
    spectral = spectral_features(cube, compute_mask(ss, mask_params));

  switch (mode) {
  case FeatureMode::Spatial:
    fv.values = spatial;
    break;
  case FeatureMode::Spectral:
    fv.values = spectral;
    break;
  case FeatureMode::SpatioSpectral:
    fv.values.resize(spatial.size() + spectral.size());
    fv.values << spatial, spectral;
    break;
  }
  if (!fv.values.allFinite())
    throw_numeric("extract: non-finite feature value");
  return fv;
}

void Standardizer::fit(const Matrix& rows) {
  if (rows.rows() < 2)
    throw_data("standardizer: need at least 2 training vectors");
  mean = rows.colwise().mean();
  std_dev.resize(rows.cols());
  for (Eigen::Index d = 0; d < rows.cols(); ++d) {
    const double var = (rows.col(d).array() - mean(d)).square().mean();
    std_dev(d) = std::max(std::sqrt(var), 1e-12);
  }
}

Matrix Standardizer::transform(const Matrix& rows) const {
  if (rows.cols() != mean.size())
    throw_data("standardizer: dimension mismatch");
  return (rows.rowwise() - mean.transpose()).array().rowwise() /
         std_dev.transpose().array();
}

Vector Standardizer::transform(const Vector& v) const {
  if (v.size() != mean.size())
    throw_data("standardizer: dimension mismatch");
  return (v - mean).cwiseQuotient(std_dev);
}

Standardizer fit_standardizer(const std::vector<FeatureVector>& train) {
  Standardizer std;
  std.mode = train.empty() ? FeatureMode::Spatial : train.front().mode;
  std.fit(feature_matrix(train));
  return std;
}

FeatureVector apply(const Standardizer& std, const FeatureVector& v) {
  if (v.mode != std.mode)
    throw_data("standardizer: feature mode mismatch");
  FeatureVector out = v;
  out.values = std.transform(v.values);
  return out;
}

Matrix feature_matrix(const std::vector<FeatureVector>& rows) {
  if (rows.empty())
    throw_data("feature_matrix: no rows");
  const Eigen::Index dim = rows.front().values.size();
  Matrix m(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].mode != rows.front().mode || rows[i].values.size() != dim)
      throw_data("feature_matrix: inconsistent feature vectors");
    m.row(static_cast<Eigen::Index>(i)) = rows[i].values.transpose();
  }
  return m;
}

void save_features_csv(const Matrix& rows,
                       const std::vector<std::string>& schema,
                       const std::vector<int>& labels,
                       const std::filesystem::path& dest) {
  if (static_cast<Eigen::Index>(schema.size()) != rows.cols() ||
      static_cast<Eigen::Index>(labels.size()) != rows.rows())
    throw_data("save_features_csv: shape mismatch");
  std::ofstream os(dest);
  if (!os)
    throw_data("cannot open for writing: " + dest.string());
  for (std::size_t i = 0; i < schema.size(); ++i)
    os << schema[i] << ',';
  os << "label\n";
  char buf[40];
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", rows(r, c));
      os << buf << ',';
    }
    os << labels[static_cast<std::size_t>(r)] << '\n';
  }
  if (!os)
    throw_data("write failed: " + dest.string());
}

} // namespace ricenet
