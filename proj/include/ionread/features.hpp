#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ionread/frame.hpp"
#include "ionread/localization.hpp"

namespace ionread::features {

/// Row-major pixel intensities of one anchor box.
using PixelVector = std::vector<double>;

constexpr std::size_t kFeatureCount = 11;

/// The per-box statistic set used by every feature-based classifier.
/// Moments are population moments; skewness and kurtosis (non-excess) are 0
/// when the variance is 0. fundamental_freq is the normalized frequency
/// (bin / n) of the strongest non-DC DFT bin, in (0, 0.5]; ties go to the
/// lowest bin.
struct FeatureVector {
  double max = 0;
  double min = 0;
  double range = 0;
  double mean = 0;
  double median = 0;
  double std_dev = 0;
  double variance = 0;
  double skewness = 0;
  double kurtosis = 0;
  double fundamental_freq = 0;
  double fundamental_power = 0;

  std::array<double, kFeatureCount> as_array() const {
    return {max,      min,      range,    mean,             median,           std_dev,
            variance, skewness, kurtosis, fundamental_freq, fundamental_power};
  }
  static const std::array<const char*, kFeatureCount>& names();
};

/// Top-left to bottom-right traversal of the box pixels.
PixelVector flatten(const imaging::Frame& frame, const localization::AnchorBox& box);

FeatureVector extract_features(const PixelVector& v);

/// Squared magnitudes |X_k|^2 of the DFT of v for k = 1 .. floor(n/2)
/// (DC excluded).
std::vector<double> power_spectrum(const std::vector<double>& v);

/// Per-feature z-scoring statistics fitted on a dataset. Features with zero
/// spread map to 0.
struct FeatureScaler {
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> std_dev{};

  static FeatureScaler fit(const std::vector<FeatureVector>& dataset);
  std::array<double, kFeatureCount> transform(const FeatureVector& v) const;
};

/// Z-scores the dataset in place (as arrays) and returns the fitted scaler.
std::pair<std::vector<std::array<double, kFeatureCount>>, FeatureScaler> normalize_features(
    const std::vector<FeatureVector>& dataset);

/// Delimited feature table: one row per (frame, ion) with the 11 feature
/// columns plus frame id, ion index and the label bit when known.
void save_feature_table(const std::filesystem::path& path,
                        const std::vector<FeatureVector>& rows,
                        const std::vector<int>& frame_ids, const std::vector<int>& ion_indices,
                        const std::vector<std::optional<char>>& labels);

}  // namespace ionread::features
