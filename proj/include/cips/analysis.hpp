#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cips/encoding.hpp"
#include "cips/generator.hpp"
#include "cips/image.hpp"

namespace cips {

using Complex = std::complex<double>;

/// Row-major H x W complex array. `centered` marks DC at (H/2, W/2).
struct Spectrum {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Complex> data;
  bool centered = false;
  std::size_t count = 1;
};

/// Real-valued H x W map over frequencies (log magnitude or power).
struct SpectrumMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  bool centered = true;
  std::size_t count = 0;
};

bool is_power_of_two(std::size_t n);

/// In-place radix-2 transform scaled by 1/sqrt(n) in both directions.
/// Throws std::invalid_argument when n is not a power of two.
void fft1d(std::vector<Complex>& data, bool inverse);

Spectrum fft2d(const std::vector<double>& channel, std::size_t height, std::size_t width);
Spectrum fft2d(const Spectrum& input);
/// Inverse of fft2d; undoes centring first when needed.
Spectrum ifft2d(const Spectrum& spectrum);

/// Moves DC from (0, 0) to (H/2, W/2); ifftshift is its inverse.
Spectrum fftshift(const Spectrum& s);
Spectrum ifftshift(const Spectrum& s);

/// Unweighted channel mean.
std::vector<double> grayscale(const Image& image);

/// Mean over images of 20 log10(|F| + 1e-12), DC-centred.
SpectrumMap magnitude_spectrum_avg(const std::vector<Image>& images);
/// Mean over images of |F|^2, DC-centred.
SpectrumMap power_spectrum_avg(const std::vector<Image>& images);
SpectrumMap power_spectrum(const Spectrum& spectrum);

/// Bin r holds the mean power of coefficients whose floor distance to the
/// centre is r, for r < floor(min(H, W) / 2). Corner coefficients beyond the
/// last bin are tallied in `overflow_*` so the partition identity
/// sum_r mean[r] * population[r] + overflow_power == total power holds.
struct AIProfile {
  std::vector<double> mean_power;
  std::vector<std::size_t> population;
  double overflow_power = 0.0;
  std::size_t overflow_population = 0;

  double total_power() const;
};

AIProfile azimuthal_integration(const SpectrumMap& power);

/// "radius,power" rows; with a second profile, "radius,real,generated".
void write_profile_csv(std::ostream& out, const AIProfile& profile);
void write_profile_csv(std::ostream& out, const AIProfile& a, const AIProfile& b);

struct PcaResult {
  std::size_t dim = 0;
  /// k x d, row i is component i; rows past `rank` are zero.
  std::vector<double> components;
  /// Per-component variance (population normalisation), non-increasing.
  std::vector<double> explained_variance;
  double total_variance = 0.0;
  std::size_t rank = 0;
  /// n x k projections of the centred data.
  std::vector<double> projections;
  std::vector<std::string> warnings;

  std::size_t k() const { return explained_variance.size(); }
};

/// PCA of n rows of dimension d (row-major). Components are sign-fixed so
/// their largest-magnitude entry is positive. Throws std::invalid_argument
/// when k > d or n < 2.
PcaResult pca(const std::vector<double>& rows, std::size_t n, std::size_t d, std::size_t k);

/// PCA of the table rows; projections are laid out H x W x k.
PcaResult pca_embeddings(const CoordEmbeddingTable& table, std::size_t k = 3);

/// Projections min-max normalised per component to [0, 1].
std::vector<double> normalized_projections(const PcaResult& result);

/// First three normalised components as an RGB image (missing channels are zero).
Image pca_image(const PcaResult& result, std::size_t height, std::size_t width);

enum class LerpSpace { z, w };

/// `steps` images at alpha = i / (steps - 1). Endpoints reproduce the
/// endpoint images exactly. Throws std::invalid_argument when steps < 2.
std::vector<Image> latent_lerp(const Generator& gen, const Tensor& za, const Tensor& zb,
                               std::size_t steps, LerpSpace space = LerpSpace::w,
                               unsigned threads = 1);

}  // namespace cips
