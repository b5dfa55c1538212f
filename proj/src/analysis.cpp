#include "cips/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include <Eigen/Dense>

#include "cips/synthesis.hpp"

namespace cips {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft1d(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) {
    throw std::invalid_argument("fft: length " + std::to_string(n) + " is not a power of two");
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      // Twiddles are evaluated directly rather than by recurrence to keep
      // round-trip error near machine precision.
      const double ang = sign * 2.0 * std::numbers::pi * double(k) / double(len);
      const Complex w(std::cos(ang), std::sin(ang));
      for (std::size_t i = 0; i < n; i += len) {
        const Complex u = a[i + k];
        const Complex v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (auto& v : a) v *= norm;
}

namespace {

void transform_2d(Spectrum& s, bool inverse) {
  std::vector<Complex> line(s.width);
  for (std::size_t y = 0; y < s.height; ++y) {
    std::copy_n(s.data.begin() + static_cast<std::ptrdiff_t>(y * s.width), s.width, line.begin());
    fft1d(line, inverse);
    std::copy(line.begin(), line.end(), s.data.begin() + static_cast<std::ptrdiff_t>(y * s.width));
  }
  line.resize(s.height);
  for (std::size_t x = 0; x < s.width; ++x) {
    for (std::size_t y = 0; y < s.height; ++y) line[y] = s.data[y * s.width + x];
    fft1d(line, inverse);
    for (std::size_t y = 0; y < s.height; ++y) s.data[y * s.width + x] = line[y];
  }
}

void check_pow2(std::size_t h, std::size_t w) {
  if (!is_power_of_two(h) || !is_power_of_two(w)) {
    throw std::invalid_argument("fft2d: extent " + std::to_string(h) + "x" + std::to_string(w) +
                                " is not a power of two");
  }
}

Spectrum shift(const Spectrum& s, std::size_t dy, std::size_t dx, bool centered) {
  Spectrum out = s;
  for (std::size_t y = 0; y < s.height; ++y)
    for (std::size_t x = 0; x < s.width; ++x)
      out.data[((y + dy) % s.height) * s.width + (x + dx) % s.width] = s.data[y * s.width + x];
  out.centered = centered;
  return out;
}

template <typename F>
SpectrumMap average_over(const std::vector<Image>& images, F per_coefficient) {
  if (images.empty()) throw std::invalid_argument("spectrum: empty image set");
  SpectrumMap out;
  out.height = images.front().height;
  out.width = images.front().width;
  out.values.assign(out.height * out.width, 0.0);
  for (const auto& img : images) {
    if (img.height != out.height || img.width != out.width) {
      throw std::invalid_argument("spectrum: images differ in size");
    }
    const Spectrum s = fftshift(fft2d(grayscale(img), img.height, img.width));
    for (std::size_t i = 0; i < s.data.size(); ++i) out.values[i] += per_coefficient(s.data[i]);
  }
  out.count = images.size();
  for (auto& v : out.values) v /= static_cast<double>(images.size());
  return out;
}

}  // namespace

Spectrum fft2d(const std::vector<double>& channel, std::size_t height, std::size_t width) {
  check_pow2(height, width);
  if (channel.size() != height * width) {
    throw std::invalid_argument("fft2d: channel has " + std::to_string(channel.size()) +
                                " values for " + std::to_string(height) + "x" +
                                std::to_string(width));
  }
  Spectrum s{height, width, std::vector<Complex>(channel.begin(), channel.end()), false, 1};
  transform_2d(s, false);
  return s;
}

Spectrum fft2d(const Spectrum& input) {
  check_pow2(input.height, input.width);
  Spectrum s = input;
  transform_2d(s, false);
  s.centered = false;
  return s;
}

Spectrum ifft2d(const Spectrum& spectrum) {
  check_pow2(spectrum.height, spectrum.width);
  Spectrum s = spectrum.centered ? ifftshift(spectrum) : spectrum;
  transform_2d(s, true);
  s.centered = false;
  return s;
}

Spectrum fftshift(const Spectrum& s) { return shift(s, s.height / 2, s.width / 2, true); }

Spectrum ifftshift(const Spectrum& s) {
  return shift(s, s.height - s.height / 2, s.width - s.width / 2, false);
}

std::vector<double> grayscale(const Image& image) {
  std::vector<double> g(image.height * image.width);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = (image.pixels[i * 3] + image.pixels[i * 3 + 1] + image.pixels[i * 3 + 2]) / 3.0;
  }
  return g;
}

SpectrumMap magnitude_spectrum_avg(const std::vector<Image>& images) {
  return average_over(images, [](Complex c) { return 20.0 * std::log10(std::abs(c) + 1e-12); });
}

SpectrumMap power_spectrum_avg(const std::vector<Image>& images) {
  return average_over(images, [](Complex c) { return std::norm(c); });
}

SpectrumMap power_spectrum(const Spectrum& spectrum) {
  const Spectrum s = spectrum.centered ? spectrum : fftshift(spectrum);
  SpectrumMap out{s.height, s.width, std::vector<double>(s.data.size()), true, s.count};
  for (std::size_t i = 0; i < s.data.size(); ++i) out.values[i] = std::norm(s.data[i]);
  return out;
}

double AIProfile::total_power() const {
  double total = overflow_power;
  for (std::size_t r = 0; r < mean_power.size(); ++r) {
    total += mean_power[r] * static_cast<double>(population[r]);
  }
  return total;
}

AIProfile azimuthal_integration(const SpectrumMap& power) {
  if (!power.centered) throw std::invalid_argument("azimuthal_integration: spectrum not centred");
  const std::size_t bins = std::min(power.height, power.width) / 2;
  AIProfile p;
  p.mean_power.assign(bins, 0.0);
  p.population.assign(bins, 0);
  const double cy = static_cast<double>(power.height / 2);
  const double cx = static_cast<double>(power.width / 2);
  for (std::size_t y = 0; y < power.height; ++y) {
    for (std::size_t x = 0; x < power.width; ++x) {
      const double v = power.values[y * power.width + x];
      const auto r = static_cast<std::size_t>(std::floor(std::hypot(double(y) - cy, double(x) - cx)));
      if (r < bins) {
        p.mean_power[r] += v;
        ++p.population[r];
      } else {
        p.overflow_power += v;
        ++p.overflow_population;
      }
    }
  }
  for (std::size_t r = 0; r < bins; ++r) {
    if (p.population[r] > 0) p.mean_power[r] /= static_cast<double>(p.population[r]);
  }
  return p;
}

void write_profile_csv(std::ostream& out, const AIProfile& profile) {
  out << "radius,power\n";
  out.precision(17);
  for (std::size_t r = 0; r < profile.mean_power.size(); ++r) {
    out << r << ',' << profile.mean_power[r] << '\n';
  }
}

void write_profile_csv(std::ostream& out, const AIProfile& a, const AIProfile& b) {
  if (a.mean_power.size() != b.mean_power.size()) {
    throw std::invalid_argument("profile csv: bin counts differ");
  }
  out << "radius,real,generated\n";
  out.precision(17);
  for (std::size_t r = 0; r < a.mean_power.size(); ++r) {
    out << r << ',' << a.mean_power[r] << ',' << b.mean_power[r] << '\n';
  }
}

PcaResult pca(const std::vector<double>& rows, std::size_t n, std::size_t d, std::size_t k) {
  if (k == 0 || k > d) {
    throw std::invalid_argument("pca: k=" + std::to_string(k) + " must lie in [1, " +
                                std::to_string(d) + "]");
  }
  if (n < 2) throw std::invalid_argument("pca: need at least two rows");
  if (rows.size() != n * d) throw std::invalid_argument("pca: data size mismatch");

  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> x(rows.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Mat centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("pca: eigensolver failed");

  const Eigen::VectorXd& evals = solver.eigenvalues();
  const Eigen::MatrixXd& evecs = solver.eigenvectors();
  const double top = std::max(evals(static_cast<Eigen::Index>(d) - 1), 0.0);

  PcaResult res;
  res.dim = d;
  res.components.assign(k * d, 0.0);
  res.explained_variance.assign(k, 0.0);
  for (Eigen::Index i = 0; i < evals.size(); ++i) res.total_variance += std::max(evals(i), 0.0);
  for (Eigen::Index i = 0; i < evals.size(); ++i) {
    if (evals(i) > 1e-12 * top && top > 0.0) ++res.rank;
  }

  const std::size_t kept = std::min(k, res.rank);
  for (std::size_t c = 0; c < kept; ++c) {
    const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - c);
    Eigen::VectorXd v = evecs.col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    for (std::size_t j = 0; j < d; ++j) res.components[c * d + j] = v(static_cast<Eigen::Index>(j));
    res.explained_variance[c] = evals(col);
  }
  if (kept < k) {
    res.warnings.push_back("pca: requested " + std::to_string(k) + " components but data rank is " +
                           std::to_string(res.rank) + "; remaining components are zero");
  }

  Eigen::Map<const Mat> comp(res.components.data(), static_cast<Eigen::Index>(k),
                             static_cast<Eigen::Index>(d));
  const Mat proj = centered * comp.transpose();
  res.projections.assign(proj.data(), proj.data() + proj.size());
  return res;
}

PcaResult pca_embeddings(const CoordEmbeddingTable& table, std::size_t k) {
  const auto data = table.table.data();
  return pca(std::vector<double>(data.begin(), data.end()), table.table.dim(0), table.dim(), k);
}

std::vector<double> normalized_projections(const PcaResult& result) {
  const std::size_t k = result.k();
  std::vector<double> out(result.projections.size(), 0.0);
  if (k == 0) return out;
  const std::size_t n = result.projections.size() / k;
  for (std::size_t c = 0; c < k; ++c) {
    double lo = result.projections[c], hi = result.projections[c];
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, result.projections[i * k + c]);
      hi = std::max(hi, result.projections[i * k + c]);
    }
    const double span = hi - lo;
    for (std::size_t i = 0; i < n; ++i) {
      out[i * k + c] = span > 0.0 ? (result.projections[i * k + c] - lo) / span : 0.0;
    }
  }
  return out;
}

Image pca_image(const PcaResult& result, std::size_t height, std::size_t width) {
  const std::size_t k = result.k();
  if (result.projections.size() != height * width * k) {
    throw std::invalid_argument("pca_image: projections do not cover " + std::to_string(height) +
                                "x" + std::to_string(width));
  }
  const auto norm = normalized_projections(result);
  Image img(height, width, -1.0);
  for (std::size_t i = 0; i < height * width; ++i)
    for (std::size_t c = 0; c < std::min<std::size_t>(k, 3); ++c)
      img.pixels[i * 3 + c] = norm[i * k + c] * 2.0 - 1.0;
  return img;
}

std::vector<Image> latent_lerp(const Generator& gen, const Tensor& za, const Tensor& zb,
                               std::size_t steps, LerpSpace space, unsigned threads) {
  if (steps < 2) throw std::invalid_argument("latent_lerp: steps must be >= 2");
  NoGradGuard no_grad;
  const StyleVector wa = gen.map_latent(za);
  const StyleVector wb = gen.map_latent(zb);
  std::vector<Image> frames;
  frames.reserve(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    StyleVector w;
    if (i == 0) {
      w = wa;
    } else if (i + 1 == steps) {
      w = wb;
    } else {
      const double alpha = static_cast<double>(i) / static_cast<double>(steps - 1);
      w = space == LerpSpace::w
              ? lerp_style(wa, wb, alpha)
              : gen.map_latent(add(scale(za, 1.0 - alpha), scale(zb, alpha)));
    }
    frames.push_back(synthesize_image(gen, gen.repeat_style(w), threads));
  }
  return frames;
}

}  // namespace cips
