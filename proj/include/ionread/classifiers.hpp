#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ionread/features.hpp"

namespace ionread::classifiers {

/// bright = |0> (fluorescing), dark = |1> (shelved).
enum class IonState : std::uint8_t { bright = 0, dark = 1 };

inline char to_bit(IonState s) { return s == IonState::bright ? '0' : '1'; }
inline IonState from_bit(char c) {
  if (c == '0') return IonState::bright;
  if (c == '1') return IonState::dark;
  throw std::invalid_argument("IonState: bit must be '0' or '1'");
}

/// Bright iff the box's maximum brightness reaches tau.
IonState threshold_classify(double max_brightness, double tau);

/// Best bright/dark separation threshold by F1 (bright = positive class).
/// Candidates are the midpoints between consecutive distinct brightness
/// values plus the smallest value itself; ties pick the smallest tau.
double calibrate_threshold(const std::vector<double>& max_brightness,
                           const std::vector<IonState>& truth);

/// Cosine dissimilarity 1 - (x . ref) / (|x| |ref|), in [0, 2].
double convolution_score(const features::PixelVector& x, const features::PixelVector& reference);

/// Which side of the score threshold is the bright class. A bright reference
/// makes similar boxes bright; a dark reference flips it, so the orientation
/// is calibrated rather than assumed.
enum class ConvOrientation : std::uint8_t { similar_is_bright, dissimilar_is_bright };

IonState convolution_classify(const features::PixelVector& x,
                              const features::PixelVector& reference, double theta,
                              ConvOrientation orientation);
IonState convolution_classify_score(double score, double theta, ConvOrientation orientation);

struct ConvCalibration {
  double theta = 0.0;
  ConvOrientation orientation = ConvOrientation::similar_is_bright;
  double f1 = 0.0;
};

/// Joint sweep of threshold and orientation maximizing F1 on labeled scores.
ConvCalibration calibrate_convolution(const std::vector<double>& scores,
                                      const std::vector<IonState>& truth);

/// Unsupervised 2-means on z-scored features; the cluster with the greater
/// mean raw max-brightness is bright.
std::vector<IonState> kmeans2_classify(const std::vector<features::FeatureVector>& dataset,
                                       std::uint64_t seed = 0);

struct KernelSpec {
  enum class Kind : std::uint8_t { linear, rbf };
  Kind kind = Kind::rbf;
  double gamma = 0.1;  // rbf only
};

double kernel_eval(const KernelSpec& spec, const std::vector<double>& x,
                   const std::vector<double>& y);

/// gamma = 1 / (dim * pooled feature variance), the usual scale heuristic.
double default_gamma(const std::vector<std::vector<double>>& xs);

struct SvmModel {
  KernelSpec kernel;
  double c = 10.0;
  double bias = 0.0;
  std::vector<double> alphas;  // support weights, alpha_i > 0
  std::vector<int> labels;     // y_i in {-1, +1}; -1 = bright, +1 = dark
  std::vector<std::vector<double>> support_vectors;
};

struct SvmTrainStats {
  int iterations = 0;
  double final_violation = 0.0;
  std::vector<double> dual_objective_trace;  // after each pairwise update
};

/// Soft-margin dual maximization by sequential pairwise optimization
/// (maximal-violating-pair working set), stopping when the KKT violation
/// falls below tol. The bias is averaged over free support vectors.
SvmModel svm_train(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys,
                   const KernelSpec& kernel, double c, double tol = 1e-4,
                   SvmTrainStats* stats = nullptr, long max_iter = 0);

double svm_decision(const SvmModel& model, const std::vector<double>& x);

/// sign(decision): negative -> bright |0>, otherwise dark |1>.
IonState svm_predict(const SvmModel& model, const std::vector<double>& x);

void save_svm_model(const SvmModel& model, const features::FeatureScaler& scaler,
                    const std::filesystem::path& path);
std::pair<SvmModel, features::FeatureScaler> load_svm_model(const std::filesystem::path& path);

}  // namespace ionread::classifiers
