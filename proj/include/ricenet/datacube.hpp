#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ricenet/types.hpp"

namespace ricenet {

// One hyperspectral sample: two spatial axes and one spectral axis of
// non-negative reflectance values. Values are held in 64-bit for stable
// downstream arithmetic; the on-disk format stores 32-bit floats.
struct Datacube {
  int height = 0;
  int width = 0;
  int bands = 0;
  double wavelength_start_nm = 0.0;
  double wavelength_step_nm = 1.0;
  SpectraMatrix values; // (height*width) x bands, band-interleaved by pixel

  static Datacube zeros(int h, int w, int b, double wl_start_nm = 950.0,
                        double wl_step_nm = 5.49);

  double operator()(int r, int c, int b) const {
    return values(r * width + c, b);
  }
  double& operator()(int r, int c, int b) { return values(r * width + c, b); }

  Eigen::Index pixel_count() const {
    return static_cast<Eigen::Index>(height) * width;
  }

  Vector wavelengths() const;

  // Throws ErrorKind::Data if any invariant fails (dims >= 1, value count,
  // finiteness, non-negativity, positive wavelength step).
  void validate() const;
};

struct ManifestEntry {
  std::string cube_path; // relative to the manifest file
  int label = 0;
  std::string class_name;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir; // set on load; resolves cube paths

  int num_classes() const;
  std::vector<std::string> class_names() const;
  std::vector<int> labels() const;
  std::filesystem::path resolve(const ManifestEntry& e) const {
    return base_dir / e.cube_path;
  }
};

// HSDC binary container (little-endian):
//   magic "HSDC" | version u32 = 1 | H u32 | W u32 | B u32 |
//   wavelength_start_nm f64 | wavelength_step_nm f64 |
//   payload H*W*B f32, band-interleaved by pixel.
void save_datacube(const Datacube& cube, const std::filesystem::path& dest);
Datacube load_datacube(const std::filesystem::path& source);

inline constexpr std::size_t kHsdcHeaderBytes = 36;

// Divides every value by the cube's global maximum. Errors on an all-zero
// cube.
Datacube normalize_max(const Datacube& cube);

// Sum over bands of squared values at each pixel.
Image ss_image(const Datacube& cube);

/// Manifest text format: one record per line,
//   <relative cube path>\t<label int>\t<class name>
void save_manifest(const Manifest& manifest, const std::filesystem::path& dest);
Manifest load_manifest(const std::filesystem::path& source);

// Loads every cube referenced by the manifest, in entry order.
std::vector<Datacube> load_cubes(const Manifest& manifest);

} // namespace ricenet
