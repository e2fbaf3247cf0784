#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ricenet/datacube.hpp"
#include "ricenet/types.hpp"

namespace ricenet {

struct MaskParams {
  double blur_sigma = 0.8;        // Gaussian kernel, radius ceil(3*sigma)
  int threshold_window = 35;      // local-mean window, clipped at borders
  double threshold_offset_frac = 0.05; // offset = frac * (max - min)
  double min_fill = 0.005;        // accepted foreground fraction bounds
  double max_fill = 0.80;
};

struct GlcmParams {
  int levels = 32;
  std::vector<int> distances{1};
  std::vector<double> angles_deg{0.0, 90.0};
};

// Gaussian blur -> adaptive threshold -> opening, closing (3x3 square) ->
// largest 4-connected component. Errors when the foreground fraction leaves
// [min_fill, max_fill] (degenerate input such as a constant image).
Mask compute_mask(const Image& ss, const MaskParams& params = {});

// Min-max quantization to `levels` bins, symmetric pair counts per
// (distance, angle) offset, each normalized to sum 1, averaged over offsets.
Matrix glcm(const Image& ss, const GlcmParams& params = {});

// contrast, dissimilarity, homogeneity, angular second moment, energy,
// correlation of the co-occurrence distribution, in that order.
Eigen::Matrix<double, 6, 1> texture_features(const Image& ss,
                                             const GlcmParams& params = {});

struct Ellipse {
  double center_row = 0.0;
  double center_col = 0.0;
  double semi_major = 0.0; // a >= b > 0
  double semi_minor = 0.0;
  double orientation = 0.0; // radians in [-pi/2, pi/2), 0 = along columns
};

// Direct least-squares conic fit constrained to an ellipse. Needs >= 6
// non-collinear points given as (row, col).
Ellipse fit_ellipse(const std::vector<Eigen::Vector2d>& boundary_points);

// True pixels with at least one false 4-neighbor or on the image border.
std::vector<Eigen::Vector2d> contour_points(const Mask& mask);

// area, perimeter, perimeter/area, major axis, minor axis, eccentricity,
// radius std, radius min, radius max, radius max/min, Haralick ratio.
// Perimeter counts 4-adjacent (true, false) pixel-edge pairs including the
// image border; radii run from the fitted-ellipse center to contour pixels.
Eigen::Matrix<double, 11, 1> morphological_features(const Mask& mask);

// Mean spectrum over the masked pixels. Errors on an empty mask.
Vector spectral_features(const Datacube& cube, const Mask& mask);

enum class FeatureMode { Spatial, Spectral, SpatioSpectral };

FeatureMode parse_feature_mode(const std::string& s);
std::string to_string(FeatureMode mode);

struct FeatureVector {
  FeatureMode mode = FeatureMode::Spatial;
  Vector values;
  std::vector<std::string> schema;
};

// spatial  = texture(ss) ++ morphological(compute_mask(ss))        (17 dims)
// spectral = mean spectrum over compute_mask(ss)                   (B dims)
// spatio-spectral = spatial ++ spectral                            (17 + B)
FeatureVector extract(const Datacube& cube, FeatureMode mode,
                      const MaskParams& mask_params = {},
                      const GlcmParams& glcm_params = {});

std::vector<std::string> feature_schema(FeatureMode mode, int bands);

// Per-dimension (x - mean) / std with training statistics only; std floored
// at 1e-12 so constant dimensions map to zero.
struct Standardizer {
  Vector mean;
  Vector std_dev;
  FeatureMode mode = FeatureMode::Spatial;

  void fit(const Matrix& rows);
  Matrix transform(const Matrix& rows) const;
  Vector transform(const Vector& v) const;
};

Standardizer fit_standardizer(const std::vector<FeatureVector>& train);
FeatureVector apply(const Standardizer& std, const FeatureVector& v);

// Feature matrix with one row per vector; all vectors must share a mode.
Matrix feature_matrix(const std::vector<FeatureVector>& rows);

// CSV export: header = schema names plus "label", one row per cube.
void save_features_csv(const Matrix& rows,
                       const std::vector<std::string>& schema,
                       const std::vector<int>& labels,
                       const std::filesystem::path& dest);

} // namespace ricenet
