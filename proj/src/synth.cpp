#include "ricenet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ricenet/error.hpp"

namespace ricenet {

double ClassSpec::signature_at(double wavelength_nm) const {
  double v = baseline;
  for (const auto& bump : signature) {
    const double d = (wavelength_nm - bump.center_nm) / bump.width_nm;
    v += bump.amplitude * std::exp(-0.5 * d * d);
  }
  return v;
}

void DatasetSpec::validate() const {
  if (classes.empty())
    throw_config("dataset spec has no classes");
  if (cubes_per_class < 1)
    throw_config("cubes_per_class must be >= 1");
  if (height < 8 || width < 8 || bands < 4)
    throw_config("cube dims must be at least 8 x 8 x 4");
  if (!(wavelength_step_nm > 0.0))
    throw_config("wavelength step must be positive");
  if (background_level < 0.0 || noise_std < 0.0)
    throw_config("background level and noise std must be >= 0");
  for (const auto& cls : classes) {
    if (!(cls.semi_major_min > 0.0) || cls.semi_major_max < cls.semi_major_min)
      throw_config("class '" + cls.name + "': bad semi-major range");
    if (!(cls.semi_minor_min > 0.0) || cls.semi_minor_max < cls.semi_minor_min)
      throw_config("class '" + cls.name + "': bad semi-minor range");
    if (cls.semi_minor_max > cls.semi_major_min)
      throw_config("class '" + cls.name +
                   "': semi-minor range must sit below semi-major range");
    if (cls.boundary_roughness < 0.0 || cls.texture_amp < 0.0)
      throw_config("class '" + cls.name + "': negative jitter amplitude");
    for (int b = 0; b < bands; ++b) {
      const double v =
          cls.signature_at(wavelength_start_nm + b * wavelength_step_nm);
      if (v < 0.0 || v > 1.5)
        throw_config("class '" + cls.name +
                     "': signature leaves [0, 1.5] on the wavelength axis");
    }
  }
}

SceneParams scene_of(const DatasetSpec& spec) {
  return SceneParams{spec.height,  spec.width,
                     spec.bands,   spec.wavelength_start_nm,
                     spec.wavelength_step_nm, spec.background_level,
                     spec.noise_std, spec.allow_rotation};
}

namespace {

constexpr int kRoughnessKnots = 12;
constexpr double kCenterJitterFrac = 0.1;

// Smooth periodic interpolation of per-angle radial jitter.
double radial_jitter(const std::vector<double>& knots, double angle) {
  const int k = static_cast<int>(knots.size());
  double s = angle / (2.0 * M_PI) * k;
  s -= std::floor(s / k) * k;
  const int k0 = static_cast<int>(std::floor(s)) % k;
  const int k1 = (k0 + 1) % k;
  const double t = s - std::floor(s);
  const double smooth = 0.5 * (1.0 - std::cos(M_PI * t));
  return knots[static_cast<std::size_t>(k0)] * (1.0 - smooth) +
         knots[static_cast<std::size_t>(k1)] * smooth;
}

void check_fit(const ClassSpec& cls, const SceneParams& scene) {
  const double grow = 1.0 + cls.boundary_roughness;
  const double fit_w = (1.0 - 2.0 * kCenterJitterFrac) * scene.width;
  const double fit_h = (1.0 - 2.0 * kCenterJitterFrac) * scene.height;
  bool ok;
  if (scene.allow_rotation) {
    const double fit = std::min(fit_w, fit_h);
    ok = 2.0 * cls.semi_major_max * grow <= fit;
  } else {
    ok = 2.0 * cls.semi_major_max * grow <= fit_w &&
         2.0 * cls.semi_minor_max * grow <= fit_h;
  }
  if (!ok)
    throw_numeric("class '" + cls.name + "': ellipse does not fit a " +
                  std::to_string(scene.height) + "x" +
                  std::to_string(scene.width) + " grid");
}

} // namespace

SeedSample render_seed(const ClassSpec& cls, const SceneParams& scene,
                       Rng& rng) {
  check_fit(cls, scene);

  const double a = rng.uniform(cls.semi_major_min, cls.semi_major_max);
  double b = rng.uniform(cls.semi_minor_min, cls.semi_minor_max);
  b = std::min(b, a);
  const double cr =
      0.5 * (scene.height - 1) +
      rng.uniform(-kCenterJitterFrac, kCenterJitterFrac) * scene.height;
  const double cc =
      0.5 * (scene.width - 1) +
      rng.uniform(-kCenterJitterFrac, kCenterJitterFrac) * scene.width;
  const double theta =
      scene.allow_rotation ? rng.uniform(-M_PI / 2.0, M_PI / 2.0) : 0.0;
  const double ct = std::cos(theta), st = std::sin(theta);

  std::vector<double> knots(kRoughnessKnots, 0.0);
  for (double& g : knots)
    g = cls.boundary_roughness * rng.uniform(-1.0, 1.0);

  Datacube cube = Datacube::zeros(scene.height, scene.width, scene.bands,
                                  scene.wavelength_start_nm,
                                  scene.wavelength_step_nm);
  Mask interior = Mask::Constant(scene.height, scene.width, false);

  Vector sig(scene.bands);
  for (int band = 0; band < scene.bands; ++band)
    sig(band) = cls.signature_at(scene.wavelength_start_nm +
                                 band * scene.wavelength_step_nm);

  const bool noisy = scene.noise_std > 0.0;
  for (int r = 0; r < scene.height; ++r) {
    for (int c = 0; c < scene.width; ++c) {
      const double dr = r - cr, dc = c - cc;
      // Major axis runs along the width when rotation is off.
      const double u = (dc * ct + dr * st) / a;
      const double v = (-dc * st + dr * ct) / b;
      const double rho = std::sqrt(u * u + v * v);
      const bool inside =
          rho <= 1.0 + radial_jitter(knots, std::atan2(v, u));
      interior(r, c) = inside;
      double speckle = 0.0;
      if (inside && cls.texture_amp > 0.0)
        speckle = cls.texture_amp * rng.uniform(-1.0, 1.0);
      for (int band = 0; band < scene.bands; ++band) {
        double value = inside ? sig(band) * (1.0 + speckle)
                              : scene.background_level;
        if (noisy) value += scene.noise_std * rng.normal();
        cube(r, c, band) = std::max(value, 0.0);
      }
    }
  }
  return SeedSample{std::move(cube), std::move(interior)};
}

Manifest generate_dataset(const DatasetSpec& spec, std::uint64_t seed,
                          const std::filesystem::path& out_dir) {
  spec.validate();
  std::filesystem::create_directories(out_dir);
  const SceneParams scene = scene_of(spec);

  Manifest manifest;
  manifest.base_dir = out_dir;
  for (std::size_t k = 0; k < spec.classes.size(); ++k) {
    const ClassSpec& cls = spec.classes[k];
    for (int i = 0; i < spec.cubes_per_class; ++i) {
      Rng rng = Rng::derive(seed, k, static_cast<std::uint64_t>(i));
      SeedSample sample = render_seed(cls, scene, rng);
      char name[160];
      std::snprintf(name, sizeof(name), "%s_%04d.hsdc", cls.name.c_str(), i);
      save_datacube(sample.cube, out_dir / name);
      manifest.entries.push_back(
          ManifestEntry{name, static_cast<int>(k), cls.name});
    }
  }
  save_manifest(manifest, out_dir / "manifest.tsv");
  return manifest;
}

namespace {

struct Geometry {
  double a_lo, a_hi; // fraction of width
  double b_lo, b_hi; // fraction of height
};

ClassSpec make_class(const std::string& name, const Geometry& geo,
                     double baseline, std::vector<SpectralBump> bumps,
                     const DatasetSpec& spec) {
  ClassSpec cls;
  cls.name = name;
  cls.semi_major_min = geo.a_lo * spec.width;
  cls.semi_major_max = geo.a_hi * spec.width;
  cls.semi_minor_min = geo.b_lo * spec.height;
  cls.semi_minor_max = geo.b_hi * spec.height;
  cls.boundary_roughness = 0.08;
  cls.texture_amp = 0.05;
  cls.baseline = baseline;
  cls.signature = std::move(bumps);
  return cls;
}

} // namespace

DatasetSpec benchmark_spec(const std::string& kind, bool paper_size) {
  DatasetSpec spec;
  spec.cubes_per_class = 60;
  if (paper_size) {
    spec.height = 50;
    spec.width = 170;
    spec.bands = 110;
    spec.wavelength_start_nm = 950.0;
    spec.wavelength_step_nm = 5.49;
  } else {
    spec.height = 16;
    spec.width = 48;
    spec.bands = 24;
    spec.wavelength_start_nm = 950.0;
    spec.wavelength_step_nm = 25.0;
  }
  spec.background_level = 0.05;
  spec.noise_std = 0.02;

  const double wl0 = spec.wavelength_start_nm;
  const double range = (spec.bands - 1) * spec.wavelength_step_nm;
  const double bump_w = 0.08 * range;
  auto bump_at = [&](double frac, double amp) {
    return SpectralBump{wl0 + frac * range, bump_w, amp};
  };

  // Shared geometry for the spectrally separable set; equal-area shapes keep
  // spectral noise statistics identical across classes.
  const Geometry round{0.24, 0.30, 0.22, 0.28};

  if (kind == "spectral-only") {
    const double fracs[4] = {0.15, 0.40, 0.65, 0.90};
    const char* names[4] = {"sig-a", "sig-b", "sig-c", "sig-d"};
    for (int k = 0; k < 4; ++k)
      spec.classes.push_back(make_class(names[k], round, 0.35,
                                        {bump_at(fracs[k], 0.45)}, spec));
  } else if (kind == "spatial-only") {
    // One shared signature; aspect ratios progress while areas stay close so
    // the mean spectrum carries no class signal.
    const Geometry shapes[4] = {{0.198, 0.219, 0.300, 0.325},
                                {0.240, 0.260, 0.250, 0.272},
                                {0.281, 0.302, 0.216, 0.231},
                                {0.323, 0.344, 0.188, 0.203}};
    const char* names[4] = {"shape-a", "shape-b", "shape-c", "shape-d"};
    for (int k = 0; k < 4; ++k)
      spec.classes.push_back(make_class(names[k], shapes[k], 0.40,
                                        {bump_at(0.5, 0.35)}, spec));
  } else if (kind == "mixed-4class") {
    // Two shapes x two signatures; no single cue separates all four.
    const Geometry slim{0.300, 0.340, 0.181, 0.219};
    const Geometry plump{0.200, 0.240, 0.263, 0.313};
    spec.classes.push_back(
        make_class("plump-lo", plump, 0.35, {bump_at(0.25, 0.45)}, spec));
    spec.classes.push_back(
        make_class("plump-hi", plump, 0.35, {bump_at(0.75, 0.45)}, spec));
    spec.classes.push_back(
        make_class("slim-lo", slim, 0.35, {bump_at(0.25, 0.45)}, spec));
    spec.classes.push_back(
        make_class("slim-hi", slim, 0.35, {bump_at(0.75, 0.45)}, spec));
  } else if (kind == "easy-6class") {
    // Distinct on both cues, mimicking clearly distinguishable varieties.
    const Geometry shapes[6] = {{0.180, 0.200, 0.300, 0.325},
                                {0.210, 0.230, 0.275, 0.295},
                                {0.240, 0.260, 0.250, 0.270},
                                {0.270, 0.290, 0.225, 0.245},
                                {0.300, 0.320, 0.200, 0.220},
                                {0.330, 0.344, 0.175, 0.195}};
    for (int k = 0; k < 6; ++k) {
      const double frac = 0.1 + 0.16 * k;
      spec.classes.push_back(make_class("v" + std::to_string(k + 1), shapes[k],
                                        0.30 + 0.02 * k,
                                        {bump_at(frac, 0.40)}, spec));
    }
  } else {
    throw_config("unknown benchmark kind '" + kind +
                 "' (expected spectral-only, spatial-only, mixed-4class or "
                 "easy-6class)");
  }
  spec.validate();
  return spec;
}

} // namespace ricenet
