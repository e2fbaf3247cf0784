#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ricenet/datacube.hpp"
#include "ricenet/rng.hpp"
#include "ricenet/types.hpp"

namespace ricenet {

struct SpectralBump {
  double center_nm = 0.0;
  double width_nm = 1.0;
  double amplitude = 0.0;
};

// Per-class recipe: seed geometry distribution plus a spectral signature made
// of Gaussian bumps over a baseline level.
struct ClassSpec {
  std::string name;
  double semi_major_min = 0.0, semi_major_max = 0.0; // px, along width
  double semi_minor_min = 0.0, semi_minor_max = 0.0; // px, along height
  double boundary_roughness = 0.0; // radial jitter fraction
  double texture_amp = 0.0;        // multiplicative speckle amplitude
  double baseline = 0.0;           // signature baseline level in [0, 1]
  std::vector<SpectralBump> signature;

  double signature_at(double wavelength_nm) const;
};

struct DatasetSpec {
  std::vector<ClassSpec> classes;
  int cubes_per_class = 1;
  int height = 16, width = 48, bands = 24;
  double wavelength_start_nm = 950.0;
  double wavelength_step_nm = 5.49;
  double background_level = 0.05;
  double noise_std = 0.0;
  bool allow_rotation = false; // acquisition uses a fixed orientation

  void validate() const;
};

struct SceneParams {
  int height = 0, width = 0, bands = 0;
  double wavelength_start_nm = 0.0, wavelength_step_nm = 1.0;
  double background_level = 0.0;
  double noise_std = 0.0;
  bool allow_rotation = false;
};

SceneParams scene_of(const DatasetSpec& spec);

// A rendered cube together with the ground-truth interior region, kept so
// segmentation and saliency checks can compare against what was generated.
struct SeedSample {
  Datacube cube;
  Mask interior;
};

// Draws ellipse axes from the class ranges, jitters the center by up to 10%
// of each spatial dim, perturbs the boundary radially and fills the interior
// with signature * (1 + speckle) + noise; background gets
// background_level + noise. Values are clamped to >= 0.
SeedSample render_seed(const ClassSpec& cls, const SceneParams& scene,
                       Rng& rng);

// Writes cubes_per_class * |classes| HSDC files plus a manifest into out_dir.
// Byte-exact function of (spec, seed): every cube gets its own stream derived
// from (seed, class index, cube index).
Manifest generate_dataset(const DatasetSpec& spec, std::uint64_t seed,
                          const std::filesystem::path& out_dir);

// Canonical benchmark recipes. kind is one of "spectral-only",
// "spatial-only", "mixed-4class", "easy-6class". Desk-scale dims by default;
// paper_size switches to 50 x 170 x 110 cubes.
DatasetSpec benchmark_spec(const std::string& kind, bool paper_size = false);

} // namespace ricenet
