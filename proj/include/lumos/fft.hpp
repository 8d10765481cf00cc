#pragma once

#include "lumos/tensor.hpp"

namespace lumos::fft {

/// In-place, unnormalized 2-D DFT of one rows x cols complex plane.
/// Forward uses exp(-i...), inverse exp(+i...). Plans are cached per size.
void transform(Complex* plane, int rows, int cols, bool inverse);

/// Unnormalized 2-D DFT of a plane whose only nonzero rows (forward) or
/// only wanted output rows (inverse) are [row0, row0 + count). Forward runs
/// the row pass on the band first; inverse runs the column pass first and
/// leaves rows outside the band partially transformed.
void transform_band(Complex* plane, int rows, int cols, int row0, int count, bool inverse);

/// Half spectrum of a real plane: rows x (cols/2 + 1), unnormalized.
void forward_real(const double* in, Complex* out, int rows, int cols);
/// Inverse of forward_real without the 1/(rows*cols) factor; `in` is destroyed.
void inverse_real(Complex* in, double* out, int rows, int cols);

/// Smallest n' >= n whose only prime factors are 2, 3 and 5.
int good_size(int n);

/// Unitary, centered 2-D DFT over the last two axes:
/// fftshift(DFT(ifftshift(x))) / sqrt(rows * cols).
CTensor fft2c(const CTensor& x);
/// Inverse of fft2c, which is also its adjoint.
CTensor ifft2c(const CTensor& x);

/// Circular shift of the last two axes moving index 0 to index n/2
/// (fftshift); `inverse` undoes it (ifftshift).
CTensor shift_center(const CTensor& x, bool inverse);

}  // namespace lumos::fft
