#include "ionread/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace ionread::features {

const std::array<const char*, kFeatureCount>& FeatureVector::names() {
  static const std::array<const char*, kFeatureCount> n = {
      "max",      "min",      "range",    "mean",             "median",          "std",
      "variance", "skewness", "kurtosis", "fundamental_freq", "fundamental_power"};
  return n;
}

PixelVector flatten(const imaging::Frame& frame, const localization::AnchorBox& box) {
  if (box.width < 1 || box.height < 1) throw std::invalid_argument("flatten: empty box");
  if (box.x0 < 0 || box.y0 < 0 || box.x0 + box.width > frame.width ||
      box.y0 + box.height > frame.height)
    throw std::invalid_argument("flatten: box outside the frame");
  PixelVector v;
  v.reserve(static_cast<std::size_t>(box.width) * box.height);
  for (int y = box.y0; y < box.y0 + box.height; ++y)
    for (int x = box.x0; x < box.x0 + box.width; ++x)
      v.push_back(static_cast<double>(frame.at(x, y)));
  return v;
}

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 FFT, decimation in time. Forward transform, no scaling.
void fft_pow2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> t = a[i + j + len / 2] * w;
        a[i + j] = u + t;
        a[i + j + len / 2] = u - t;
        w *= wlen;
      }
    }
  }
}

}  // namespace

std::vector<double> power_spectrum(const std::vector<double>& v) {
  const std::size_t n = v.size();
  if (n < 2) throw std::invalid_argument("power_spectrum: need at least 2 samples");
  const std::size_t bins = n / 2;
  std::vector<double> power(bins);
  if (is_power_of_two(n)) {
    std::vector<std::complex<double>> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = v[i];
    fft_pow2(a);
    for (std::size_t k = 1; k <= bins; ++k) power[k - 1] = std::norm(a[k]);
  } else {
    for (std::size_t k = 1; k <= bins; ++k) {
      double re = 0.0, im = 0.0;
      const double w = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) {
        re += v[j] * std::cos(w * static_cast<double>(j));
        im += v[j] * std::sin(w * static_cast<double>(j));
      }
      power[k - 1] = re * re + im * im;
    }
  }
  return power;
}

FeatureVector extract_features(const PixelVector& v) {
  const std::size_t n = v.size();
  if (n < 2) throw std::invalid_argument("extract_features: need at least 2 samples");

  FeatureVector f;
  f.max = *std::max_element(v.begin(), v.end());
  f.min = *std::min_element(v.begin(), v.end());
  f.range = f.max - f.min;

  double sum = std::accumulate(v.begin(), v.end(), 0.0);
  f.mean = sum / static_cast<double>(n);

  std::vector<double> sorted(v);
  std::sort(sorted.begin(), sorted.end());
  f.median = sorted[(n - 1) / 2];  // lower-middle element for even n

  double m2 = 0, m3 = 0, m4 = 0;
  for (double x : v) {
    double d = x - f.mean;
    double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  f.variance = m2;
  f.std_dev = std::sqrt(m2);
  f.skewness = m2 > 0 ? m3 / (m2 * std::sqrt(m2)) : 0.0;
  f.kurtosis = m2 > 0 ? m4 / (m2 * m2) : 0.0;

  std::vector<double> power = power_spectrum(v);
  std::size_t best = 0;
  for (std::size_t k = 1; k < power.size(); ++k)
    if (power[k] > power[best]) best = k;  // strict: ties keep the lowest bin
  f.fundamental_freq = static_cast<double>(best + 1) / static_cast<double>(n);
  f.fundamental_power = power[best];
  return f;
}

FeatureScaler FeatureScaler::fit(const std::vector<FeatureVector>& dataset) {
  if (dataset.size() < 2)
    throw std::invalid_argument("FeatureScaler: need at least 2 samples to fit");
  FeatureScaler s;
  const double n = static_cast<double>(dataset.size());
  for (const auto& row : dataset) {
    auto a = row.as_array();
    for (std::size_t j = 0; j < kFeatureCount; ++j) s.mean[j] += a[j];
  }
  for (std::size_t j = 0; j < kFeatureCount; ++j) s.mean[j] /= n;
  for (const auto& row : dataset) {
    auto a = row.as_array();
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      double d = a[j] - s.mean[j];
      s.std_dev[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < kFeatureCount; ++j) s.std_dev[j] = std::sqrt(s.std_dev[j] / n);
  return s;
}

std::array<double, kFeatureCount> FeatureScaler::transform(const FeatureVector& v) const {
  auto a = v.as_array();
  std::array<double, kFeatureCount> out{};
  for (std::size_t j = 0; j < kFeatureCount; ++j)
    out[j] = std_dev[j] > 0 ? (a[j] - mean[j]) / std_dev[j] : 0.0;
  return out;
}

std::pair<std::vector<std::array<double, kFeatureCount>>, FeatureScaler> normalize_features(
    const std::vector<FeatureVector>& dataset) {
  FeatureScaler scaler = FeatureScaler::fit(dataset);
  std::vector<std::array<double, kFeatureCount>> rows;
  rows.reserve(dataset.size());
  for (const auto& v : dataset) rows.push_back(scaler.transform(v));
  return {std::move(rows), scaler};
}

void save_feature_table(const std::filesystem::path& path,
                        const std::vector<FeatureVector>& rows, const std::vector<int>& frame_ids,
                        const std::vector<int>& ion_indices,
                        const std::vector<std::optional<char>>& labels) {
  if (rows.size() != frame_ids.size() || rows.size() != ion_indices.size() ||
      rows.size() != labels.size())
    throw std::invalid_argument("save_feature_table: column length mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("features: cannot write '" + path.string() + "'");
  out << "frame,ion";
  for (const char* name : FeatureVector::names()) out << ',' << name;
  out << ",label\n";
  char buf[64];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << frame_ids[i] << ',' << ion_indices[i];
    for (double x : rows[i].as_array()) {
      std::snprintf(buf, sizeof buf, "%.9g", x);
      out << ',' << buf;
    }
    if (labels[i])
      out << ',' << *labels[i] << '\n';
    else
      out << ",\n";
  }
}

}  // namespace ionread::features
