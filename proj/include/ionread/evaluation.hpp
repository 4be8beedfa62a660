#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ionread/classifiers.hpp"
#include "ionread/imaging.hpp"
#include "ionread/quantum.hpp"

namespace ionread::evaluation {

struct ProbabilityDistribution {
  std::vector<std::string> outcomes;
  std::vector<double> p;
  void validate() const;  // p_i >= 0, sum within 1e-9 of 1
};

/// Bhattacharyya overlap sum_i sqrt(p_i q_i); requires identical outcome sets.
double classical_fidelity(const ProbabilityDistribution& p, const ProbabilityDistribution& q);

struct DensityMatrix {
  Eigen::MatrixXcd rho;
  void validate() const;  // Hermitian, PSD and unit trace within 1e-10
};

/// Tr sqrt(sqrt(rho0) rho1 sqrt(rho0)) via eigendecompositions; tiny negative
/// eigenvalues are clamped to zero.
double quantum_fidelity(const DensityMatrix& rho0, const DensityMatrix& rho1);

/// Class frequencies over {bright, dark}.
ProbabilityDistribution empirical_distribution(const std::vector<classifiers::IonState>& states);

/// Fidelity between the empirical per-frame bitstring distributions, over the
/// union of observed outcomes.
double bitstring_fidelity(const std::vector<std::string>& predicted,
                          const std::vector<std::string>& truth);

struct Confusion {
  long tp = 0, fp = 0, tn = 0, fn = 0;
};

struct Metrics {
  double f1 = 0;
  double accuracy = 0;
  Confusion confusion;
};

/// Bright is the positive class; F1 is 0 when precision + recall is 0.
Metrics f1_accuracy_confusion(const std::vector<classifiers::IonState>& predicted,
                              const std::vector<classifiers::IonState>& truth);

/// Deterministic sweep; ties keep the earliest grid point.
template <class T, class F>
std::pair<T, double> grid_search(const std::vector<T>& grid, F&& objective) {
  if (grid.empty()) throw std::invalid_argument("grid_search: empty grid");
  std::size_t best = 0;
  double best_value = objective(grid[0]);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    double v = objective(grid[i]);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  return {grid[best], best_value};
}

/// Seeded shuffle of 0..n-1, the shared split primitive.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

struct LabeledDataset {
  std::vector<imaging::Frame> frames;
  std::vector<std::string> labels;  // one bitstring per frame, '0' = bright
  int n_ions = 10;
};

/// Where benchmark truth comes from: the manifest's ground truth, or labels
/// regenerated by the max-brightness statistics rule (the auto-labeling
/// protocol used when no ground truth exists).
enum class LabelSource { ground_truth, statistics };

struct BenchmarkConfig {
  int box_width = 16;
  int box_height = 16;
  double background_percentile = 90.0;
  std::optional<double> tau = 153.0;      // stats threshold; nullopt = calibrate by F1
  std::optional<double> theta;            // convolution threshold; nullopt = calibrate
  std::optional<double> epsilon = 152.8;  // quant threshold; nullopt = calibrate
  double calibration_fraction = 0.10;     // labeled split used for calibration
  double svm_train_fraction = 0.10;
  double svm_c = 10.0;
  classifiers::KernelSpec::Kind kernel_kind = classifiers::KernelSpec::Kind::rbf;
  std::optional<double> svm_gamma;  // nullopt = 1 / (d * pooled variance)
  double qsvm_train_fraction = 0.05;
  int qsvm_max_train = 500;
  quantum::QsvmEncoding qsvm_encoding;
  qubo::SolverSpec quant_solver;  // exhaustive unless configured otherwise
  qubo::SolverSpec qsvm_solver;   // simulated annealing by default
  LabelSource label_source = LabelSource::ground_truth;
  bool report_bitstring_fidelity = false;
  int threads = 0;

  BenchmarkConfig() { qsvm_solver.kind = qubo::SolverSpec::Kind::sim_anneal; }
};

struct MethodReport {
  std::string method;
  double fidelity = 0;
  double f1 = 0;
  double accuracy = 0;
  Confusion confusion;
  double train_seconds = 0;     // calibration / fitting / QUBO solving
  double classify_seconds = 0;  // the prediction pass over the evaluated set
  std::size_t n_evaluated = 0;
  std::optional<double> bitstring_fid;
};

struct EvaluationReport {
  std::vector<MethodReport> rows;
  localization::IonChainLayout layout;
  double prep_seconds = 0;  // localization + feature extraction, shared
  /// Per-method predictions aligned with sample index frame * n_ions + ion;
  /// samples outside a supervised method's evaluation split stay empty.
  std::vector<std::pair<std::string, std::vector<std::optional<classifiers::IonState>>>>
      predictions;
};

/// Runs the requested methods (stats, conv, kmeans, svm, quant, qsvm) over a
/// labeled dataset: locates the chain, cuts anchor boxes, extracts features
/// once, then trains/calibrates and classifies per method, reporting fidelity
/// between predicted and label class distributions plus F1 / accuracy /
/// confusion counts and wall times.
EvaluationReport benchmark(const LabeledDataset& dataset,
                           const std::vector<std::string>& methods,
                           const BenchmarkConfig& config, std::uint64_t seed);

void write_report_csv(const EvaluationReport& report, const std::filesystem::path& path);
void write_report_json(const EvaluationReport& report, const std::filesystem::path& path);
void write_predictions_csv(const EvaluationReport& report, int n_ions,
                           const std::filesystem::path& path);

}  // namespace ionread::evaluation
