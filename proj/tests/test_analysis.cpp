#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "cips/analysis.hpp"
#include "cips/synthesis.hpp"
#include "test_util.hpp"

using namespace cips;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> random_channel(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Unitary 2D DFT by direct summation.
std::vector<Complex> naive_dft(const std::vector<double>& x, std::size_t h, std::size_t w) {
  std::vector<Complex> out(h * w);
  const double norm = 1.0 / std::sqrt(double(h * w));
  for (std::size_t k = 0; k < h; ++k)
    for (std::size_t l = 0; l < w; ++l) {
      Complex acc = 0.0;
      for (std::size_t m = 0; m < h; ++m)
        for (std::size_t n = 0; n < w; ++n) {
          const double ph = -2.0 * kPi * (double(k * m) / double(h) + double(l * n) / double(w));
          acc += x[m * w + n] * Complex(std::cos(ph), std::sin(ph));
        }
      out[k * w + l] = acc * norm;
    }
  return out;
}

Image gray_image(const std::vector<double>& v, std::size_t h, std::size_t w) {
  Image img(h, w);
  for (std::size_t p = 0; p < h * w; ++p)
    for (std::size_t c = 0; c < 3; ++c) img.pixels[p * 3 + c] = v[p];
  return img;
}

// Cyclic Jacobi eigenvalues of a symmetric d x d matrix.
std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t d) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a[k * d + p], akq = a[k * d + q];
          a[k * d + p] = c * akp - s * akq;
          a[k * d + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a[p * d + k], aqk = a[q * d + k];
          a[p * d + k] = c * apk - s * aqk;
          a[q * d + k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(d);
  for (std::size_t i = 0; i < d; ++i) ev[i] = a[i * d + i];
  std::sort(ev.begin(), ev.end(), std::greater<>());
  return ev;
}

}  // namespace

TEST(Fft, MatchesDirectSummation) {
  const std::size_t h = 8, w = 16;
  const auto x = random_channel(h * w, 1);
  const Spectrum s = fft2d(x, h, w);
  const auto want = naive_dft(x, h, w);
  for (std::size_t i = 0; i < h * w; ++i) EXPECT_LT(std::abs(s.data[i] - want[i]), 1e-12);
}

TEST(Fft, RoundTrip) {
  const auto x = random_channel(32 * 32, 2);
  const Spectrum back = ifft2d(fft2d(x, 32, 32));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LT(std::abs(back.data[i] - Complex(x[i], 0.0)), 1e-10);
  const Spectrum shifted_back = ifft2d(fftshift(fft2d(x, 32, 32)));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LT(std::abs(shifted_back.data[i].real() - x[i]), 1e-10);
}

TEST(Fft, ConstantGoesToDc) {
  const Spectrum s = fft2d(std::vector<double>(64, 0.25), 8, 8);
  EXPECT_NEAR(s.data[0].real(), 0.25 * 8, 1e-14);
  for (std::size_t i = 1; i < 64; ++i) EXPECT_LT(std::abs(s.data[i]), 1e-14);
}

TEST(Fft, HorizontalCosinePeaks) {
  const std::size_t h = 8, w = 16, k = 3;
  std::vector<double> x(h * w);
  for (std::size_t m = 0; m < h; ++m)
    for (std::size_t n = 0; n < w; ++n) x[m * w + n] = std::cos(2 * kPi * double(k * n) / double(w));
  const Spectrum s = fft2d(x, h, w);
  const double peak = std::sqrt(double(h * w)) / 2.0;
  for (std::size_t i = 0; i < h * w; ++i) {
    const bool at_peak = i == k || i == w - k;
    EXPECT_NEAR(std::abs(s.data[i]), at_peak ? peak : 0.0, 1e-12) << i;
  }
}

TEST(Fft, Parseval) {
  const auto x = random_channel(64 * 32, 3);
  const Spectrum s = fft2d(x, 64, 32);
  double ex = 0.0, es = 0.0;
  for (double v : x) ex += v * v;
  for (const auto& c : s.data) es += std::norm(c);
  EXPECT_LT(std::abs(ex - es) / ex, 1e-9);
}

TEST(Fft, NonPowerOfTwoThrows) {
  EXPECT_THROW(fft2d(std::vector<double>(12 * 8, 0.0), 12, 8), std::invalid_argument);
  std::vector<Complex> v(6);
  EXPECT_THROW(fft1d(v, false), std::invalid_argument);
  EXPECT_TRUE(is_power_of_two(1));
  EXPECT_FALSE(is_power_of_two(0));
}

TEST(Fft, ShiftRoundTrip) {
  const Spectrum s = fft2d(random_channel(16 * 8, 4), 16, 8);
  const Spectrum c = fftshift(s);
  EXPECT_TRUE(c.centered);
  EXPECT_EQ(c.data[8 * 8 + 4], s.data[0]);
  EXPECT_EQ(ifftshift(c).data, s.data);
}

TEST(SpectrumAvg, ConstantImageHasSingleBrightDc) {
  const SpectrumMap m = magnitude_spectrum_avg({Image(16, 16, 0.5)});
  const std::size_t dc = 8 * 16 + 8;
  EXPECT_NEAR(m.values[dc], 20 * std::log10(0.5 * 16 + 1e-12), 1e-9);
  for (std::size_t i = 0; i < m.values.size(); ++i)
    if (i != dc) EXPECT_LT(m.values[i], -200.0);
}

TEST(SpectrumAvg, CopiesAreIdempotent) {
  const Image img = gray_image(random_channel(16 * 16, 5), 16, 16);
  const SpectrumMap one = magnitude_spectrum_avg({img});
  const SpectrumMap four = magnitude_spectrum_avg({img, img, img, img});
  EXPECT_EQ(four.count, 4u);
  for (std::size_t i = 0; i < one.values.size(); ++i) EXPECT_NEAR(one.values[i], four.values[i], 1e-12);
}

TEST(SpectrumAvg, CheckerboardAtNyquistCorner) {
  std::vector<double> x(16 * 16);
  for (std::size_t m = 0; m < 16; ++m)
    for (std::size_t n = 0; n < 16; ++n) x[m * 16 + n] = (m + n) % 2 ? -1.0 : 1.0;
  const SpectrumMap p = power_spectrum_avg({gray_image(x, 16, 16)});
  // DC-centred: the (H/2, W/2) frequency lands in the (0, 0) corner.
  EXPECT_NEAR(p.values[0], 256.0, 1e-9);
  double rest = 0.0;
  for (std::size_t i = 1; i < p.values.size(); ++i) rest += p.values[i];
  EXPECT_LT(rest, 1e-20);
}

TEST(SpectrumAvg, EmptySetThrows) {
  EXPECT_THROW(magnitude_spectrum_avg({}), std::invalid_argument);
  EXPECT_THROW(power_spectrum_avg({}), std::invalid_argument);
}

TEST(Azimuthal, DcOnlyProfile) {
  SpectrumMap m{16, 16, std::vector<double>(256, 0.0), true, 1};
  m.values[8 * 16 + 8] = 3.5;
  const AIProfile ai = azimuthal_integration(m);
  ASSERT_EQ(ai.mean_power.size(), 8u);
  EXPECT_EQ(ai.mean_power[0], 3.5);
  EXPECT_EQ(ai.population[0], 1u);
  for (std::size_t r = 1; r < 8; ++r) EXPECT_EQ(ai.mean_power[r], 0.0);
}

TEST(Azimuthal, PartitionIdentity) {
  const auto v = random_channel(32 * 32, 6);
  SpectrumMap m{32, 32, {}, true, 1};
  for (double x : v) m.values.push_back(x * x);
  const AIProfile ai = azimuthal_integration(m);
  double total = 0.0, binned = ai.overflow_power;
  std::size_t pop = ai.overflow_population;
  for (double x : m.values) total += x;
  for (std::size_t r = 0; r < ai.mean_power.size(); ++r) {
    binned += ai.mean_power[r] * double(ai.population[r]);
    pop += ai.population[r];
  }
  EXPECT_NEAR(binned, total, 1e-9 * total);
  EXPECT_EQ(pop, 32u * 32u);
  EXPECT_NEAR(ai.total_power(), total, 1e-9 * total);
}

TEST(Azimuthal, CsvLayout) {
  AIProfile a{{1.5, 0.25}, {1, 8}, 0.0, 0};
  std::ostringstream os;
  write_profile_csv(os, a);
  EXPECT_EQ(os.str(), "radius,power\n0,1.5\n1,0.25\n");
  std::ostringstream pair;
  write_profile_csv(pair, a, a);
  EXPECT_EQ(pair.str(), "radius,real,generated\n0,1.5,1.5\n1,0.25,0.25\n");
  AIProfile b{{1.0}, {1}, 0.0, 0};
  EXPECT_THROW(write_profile_csv(pair, a, b), std::invalid_argument);
}

TEST(Pca, RecoversSingleAxis) {
  const std::size_t n = 50, d = 4;
  std::vector<double> rows(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) rows[i * d] = double(i) - 20.0;
  const PcaResult r = pca(rows, n, d, 1);
  EXPECT_NEAR(std::abs(r.components[0]), 1.0, 1e-12);
  for (std::size_t j = 1; j < d; ++j) EXPECT_NEAR(r.components[j], 0.0, 1e-12);
}

TEST(Pca, OrthonormalAndNonIncreasing) {
  const std::size_t n = 200, d = 6, k = 6;
  const auto rows = random_channel(n * d, 7);
  const PcaResult r = pca(rows, n, d, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += r.components[i * d + c] * r.components[j * d + c];
      EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-8);
    }
  for (std::size_t i = 1; i < k; ++i) EXPECT_LE(r.explained_variance[i], r.explained_variance[i - 1]);
}

TEST(Pca, RowOrderInvariantUpToSign) {
  const std::size_t n = 100, d = 5;
  const auto rows = random_channel(n * d, 8);
  std::vector<double> reversed(n * d);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(rows.begin() + std::ptrdiff_t(i * d), d, reversed.begin() + std::ptrdiff_t((n - 1 - i) * d));
  const PcaResult a = pca(rows, n, d, 2), b = pca(reversed, n, d, 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 2; ++c)
      EXPECT_NEAR(std::abs(a.projections[i * 2 + c]), std::abs(b.projections[(n - 1 - i) * 2 + c]), 1e-8);
}

TEST(Pca, ReconstructionErrorMatchesEigenOracle) {
  const std::size_t side = 64, d = 8, n = side * side, k = 3;
  const CoordEmbeddingTable table{test::randn({n, d}, 9), side, side, false};
  const PcaResult r = pca_embeddings(table, k);

  const auto x = table.table.data();
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) mean[c] += x[i * d + c] / double(n);
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) cov[a * d + b] += (x[i * d + a] - mean[a]) * (x[i * d + b] - mean[b]) / double(n);
  const auto ev = jacobi_eigenvalues(cov, d);
  double total = 0.0;
  for (double e : ev) total += e;
  const double oracle = 1.0 - (ev[0] + ev[1] + ev[2]) / total;

  double resid = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      const double centred = x[i * d + c] - mean[c];
      double rec = 0.0;
      for (std::size_t j = 0; j < k; ++j) rec += r.projections[i * k + j] * r.components[j * d + c];
      resid += (centred - rec) * (centred - rec);
      energy += centred * centred;
    }
  EXPECT_NEAR(resid / energy, oracle, 1e-8);
  for (std::size_t j = 0; j < k; ++j) EXPECT_NEAR(r.explained_variance[j], ev[j], 1e-10);
}

TEST(Pca, RankDeficientZeroPadsWithWarning) {
  const std::size_t n = 20, d = 4;
  std::vector<double> rows(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i * d] = double(i);
    rows[i * d + 1] = std::sin(double(i));
  }
  const PcaResult r = pca(rows, n, d, 3);
  EXPECT_EQ(r.rank, 2u);
  ASSERT_EQ(r.warnings.size(), 1u);
  for (std::size_t c = 0; c < d; ++c) EXPECT_EQ(r.components[2 * d + c], 0.0);
  EXPECT_EQ(r.explained_variance[2], 0.0);
  EXPECT_THROW(pca(rows, n, d, 5), std::invalid_argument);
}

TEST(Pca, NormalisedProjectionsInUnitRange) {
  const CoordEmbeddingTable table{test::randn({8 * 8, 4}, 10), 8, 8, false};
  const PcaResult r = pca_embeddings(table);
  const auto norm = normalized_projections(r);
  EXPECT_EQ(*std::min_element(norm.begin(), norm.end()), 0.0);
  EXPECT_EQ(*std::max_element(norm.begin(), norm.end()), 1.0);
  const Image img = pca_image(r, 8, 8);
  EXPECT_EQ(img.height, 8u);
}

TEST(LatentLerp, EndpointsAndSmoothness) {
  const Generator gen(GeneratorConfig::desk(), 1);
  const Tensor za = sample_latent(11, gen.config().latent_dim), zb = sample_latent(12, gen.config().latent_dim);
  for (LerpSpace space : {LerpSpace::w, LerpSpace::z}) {
    const auto frames = latent_lerp(gen, za, zb, 16, space);
    ASSERT_EQ(frames.size(), 16u);
    EXPECT_EQ(frames.front(), synthesize_image(gen, 11));
    EXPECT_EQ(frames.back(), synthesize_image(gen, 12));
    double lo = INFINITY, hi = 0.0;
    for (std::size_t i = 1; i < frames.size(); ++i) {
      double d2 = 0.0;
      for (std::size_t p = 0; p < frames[i].pixels.size(); ++p) {
        const double dv = frames[i].pixels[p] - frames[i - 1].pixels[p];
        d2 += dv * dv;
      }
      lo = std::min(lo, std::sqrt(d2));
      hi = std::max(hi, std::sqrt(d2));
    }
    EXPECT_LT(hi / lo, 10.0);
  }
  EXPECT_THROW(latent_lerp(gen, za, zb, 1), std::invalid_argument);
}
