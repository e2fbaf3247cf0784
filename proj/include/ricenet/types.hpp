#pragma once

#include <Eigen/Dense>

namespace ricenet {

template <class Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using ImageT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Matrix = MatrixT<double>;
using Vector = VectorT<double>;
using IntVector = VectorT<int>;

// H x W grayscale raster, (row, col) indexed.
using Image = ImageT<double>;

// Binary raster aligned with an Image.
using Mask = ImageT<bool>;

// Pixel-major spectra: row (r * W + c) holds the B-band spectrum of pixel
// (r, c). RowMajor so a spectrum is contiguous in memory.
using SpectraMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

} // namespace ricenet
