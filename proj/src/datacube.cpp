#include "ricenet/datacube.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "ricenet/error.hpp"

namespace ricenet {

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

} // namespace

Datacube Datacube::zeros(int h, int w, int b, double wl_start_nm,
                         double wl_step_nm) {
  Datacube cube;
  cube.height = h;
  cube.width = w;
  cube.bands = b;
  cube.wavelength_start_nm = wl_start_nm;
  cube.wavelength_step_nm = wl_step_nm;
  cube.values = SpectraMatrix::Zero(static_cast<Eigen::Index>(h) * w, b);
  return cube;
}

Vector Datacube::wavelengths() const {
  Vector wl(bands);
  for (int b = 0; b < bands; ++b)
    wl(b) = wavelength_start_nm + b * wavelength_step_nm;
  return wl;
}

void Datacube::validate() const {
  if (height < 1 || width < 1 || bands < 1)
    throw_data("datacube dims must be >= 1");
  if (values.rows() != pixel_count() || values.cols() != bands)
    throw_data("datacube value count does not match dims");
  if (!values.allFinite())
    throw_data("datacube holds non-finite values");
  if ((values.array() < 0.0).any())
    throw_data("datacube holds negative reflectance values");
  if (!(wavelength_step_nm > 0.0))
    throw_data("wavelength step must be positive");
}

void save_datacube(const Datacube& cube, const std::filesystem::path& dest) {
  cube.validate();
  std::ofstream os(dest, std::ios::binary);
  if (!os)
    throw_data("cannot open for writing: " + dest.string());
  os.write("HSDC", 4);
  write_u32(os, 1u);
  write_u32(os, static_cast<std::uint32_t>(cube.height));
  write_u32(os, static_cast<std::uint32_t>(cube.width));
  write_u32(os, static_cast<std::uint32_t>(cube.bands));
  write_f64(os, cube.wavelength_start_nm);
  write_f64(os, cube.wavelength_step_nm);
  // Payload is f32; values matrix is RowMajor so iterating coefficients in
  // storage order is already band-interleaved by pixel.
  std::vector<float> payload(static_cast<std::size_t>(cube.values.size()));
  const double* src = cube.values.data();
  for (std::size_t i = 0; i < payload.size(); ++i)
    payload[i] = static_cast<float>(src[i]);
  os.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!os)
    throw_data("write failed: " + dest.string());
}

Datacube load_datacube(const std::filesystem::path& source) {
  std::ifstream is(source, std::ios::binary);
  if (!is)
    throw_data("cannot open for reading: " + source.string());
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "HSDC", 4) != 0)
    throw_data("bad magic in " + source.string());
  const std::uint32_t version = read_u32(is);
  if (version != 1u)
    throw_data("unsupported HSDC version " + std::to_string(version));
  Datacube cube;
  cube.height = static_cast<int>(read_u32(is));
  cube.width = static_cast<int>(read_u32(is));
  cube.bands = static_cast<int>(read_u32(is));
  cube.wavelength_start_nm = read_f64(is);
  cube.wavelength_step_nm = read_f64(is);
  if (!is)
    throw_data("truncated HSDC header in " + source.string());
  if (cube.height < 1 || cube.width < 1 || cube.bands < 1)
    throw_data("invalid dims in " + source.string());

  const std::size_t count = static_cast<std::size_t>(cube.height) *
                            cube.width * cube.bands;
  std::vector<float> payload(count);
  is.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(is.gcount()) != count * sizeof(float))
    throw_data("truncated HSDC payload in " + source.string());
  is.peek();
  if (!is.eof())
    throw_data("trailing bytes after HSDC payload in " + source.string());

  cube.values.resize(cube.pixel_count(), cube.bands);
  double* dst = cube.values.data();
  for (std::size_t i = 0; i < count; ++i)
    dst[i] = static_cast<double>(payload[i]);
  cube.validate();
  return cube;
}

Datacube normalize_max(const Datacube& cube) {
  cube.validate();
  const double max = cube.values.maxCoeff();
  if (!(max > 0.0))
    throw_numeric("normalize_max: all-zero cube");
  Datacube out = cube;
  out.values /= max;
  return out;
}

Image ss_image(const Datacube& cube) {
  cube.validate();
  Image out(cube.height, cube.width);
  for (int r = 0; r < cube.height; ++r)
    for (int c = 0; c < cube.width; ++c)
      out(r, c) = cube.values.row(r * cube.width + c).squaredNorm();
  return out;
}

int Manifest::num_classes() const {
  int max_label = -1;
  for (const auto& e : entries) max_label = std::max(max_label, e.label);
  return max_label + 1;
}

std::vector<std::string> Manifest::class_names() const {
  std::vector<std::string> names(static_cast<std::size_t>(num_classes()));
  for (const auto& e : entries)
    names[static_cast<std::size_t>(e.label)] = e.class_name;
  return names;
}

std::vector<int> Manifest::labels() const {
  std::vector<int> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.label);
  return out;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& dest) {
  std::ofstream os(dest);
  if (!os)
    throw_data("cannot open for writing: " + dest.string());
  for (const auto& e : manifest.entries)
    os << e.cube_path << '\t' << e.label << '\t' << e.class_name << '\n';
  if (!os)
    throw_data("write failed: " + dest.string());
}

Manifest load_manifest(const std::filesystem::path& source) {
  std::ifstream is(source);
  if (!is)
    throw_data("cannot open for reading: " + source.string());
  Manifest m;
  m.base_dir = source.parent_path();
  std::string line;
  int line_no = 0;
  std::set<int> seen_labels;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string label_field;
    if (!std::getline(ss, e.cube_path, '\t') ||
        !std::getline(ss, label_field, '\t') ||
        !std::getline(ss, e.class_name))
      throw_data("malformed manifest line " + std::to_string(line_no));
    try {
      e.label = std::stoi(label_field);
    } catch (const std::exception&) {
      throw_data("bad label on manifest line " + std::to_string(line_no));
    }
    if (e.label < 0)
      throw_data("negative label on manifest line " + std::to_string(line_no));
    if (!std::filesystem::exists(m.resolve(e)))
      throw_data("manifest references missing cube: " + e.cube_path);
    seen_labels.insert(e.label);
    m.entries.push_back(std::move(e));
  }
  // Class indices must be contiguous from 0.
  int expect = 0;
  for (int label : seen_labels) {
    if (label != expect)
      throw_data("manifest labels are not contiguous from 0");
    ++expect;
  }
  return m;
}

std::vector<Datacube> load_cubes(const Manifest& manifest) {
  std::vector<Datacube> cubes;
  cubes.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries)
    cubes.push_back(load_datacube(manifest.resolve(e)));
  return cubes;
}

} // namespace ricenet
