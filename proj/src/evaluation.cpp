#include "ionread/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "ionread/rng.hpp"
#include "json.hpp"
#include "parallel.hpp"

namespace ionread::evaluation {

using classifiers::IonState;

void ProbabilityDistribution::validate() const {
  if (outcomes.size() != p.size())
    throw std::invalid_argument("distribution: outcome/weight size mismatch");
  double sum = 0;
  for (double v : p) {
    if (v < 0) throw std::invalid_argument("distribution: negative weight");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("distribution: weights sum to " + std::to_string(sum));
}

double classical_fidelity(const ProbabilityDistribution& p, const ProbabilityDistribution& q) {
  p.validate();
  q.validate();
  if (p.outcomes != q.outcomes)
    throw std::invalid_argument("classical_fidelity: mismatched outcome sets");
  double f = 0;
  for (std::size_t i = 0; i < p.p.size(); ++i) f += std::sqrt(p.p[i] * q.p[i]);
  return f;
}

void DensityMatrix::validate() const {
  if (rho.rows() != rho.cols() || rho.rows() == 0)
    throw std::invalid_argument("density matrix: not square");
  double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  if (herm > 1e-10)
    throw std::invalid_argument("density matrix: not Hermitian (deviation " +
                                std::to_string(herm) + ")");
  if (std::abs(rho.trace().real() - 1.0) > 1e-10 || std::abs(rho.trace().imag()) > 1e-10)
    throw std::invalid_argument("density matrix: trace != 1");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10)
    throw std::invalid_argument("density matrix: negative eigenvalue " +
                                std::to_string(es.eigenvalues().minCoeff()));
}

double quantum_fidelity(const DensityMatrix& rho0, const DensityMatrix& rho1) {
  rho0.validate();
  rho1.validate();
  if (rho0.rho.rows() != rho1.rho.rows())
    throw std::invalid_argument("quantum_fidelity: dimension mismatch");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es0(rho0.rho);
  Eigen::VectorXd lam0 = es0.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXcd sqrt0 = es0.eigenvectors() * lam0.cwiseSqrt().asDiagonal() *
                           es0.eigenvectors().adjoint();
  Eigen::MatrixXcd inner = sqrt0 * rho1.rho * sqrt0;
  // inner is Hermitian PSD up to rounding; its eigenvalue square roots sum to F.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(inner, Eigen::EigenvaluesOnly);
  double f = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    f += std::sqrt(std::max(0.0, es.eigenvalues()(i)));
  return f;
}

ProbabilityDistribution empirical_distribution(const std::vector<IonState>& states) {
  if (states.empty()) throw std::invalid_argument("empirical_distribution: empty input");
  double bright = 0;
  for (IonState s : states)
    if (s == IonState::bright) bright += 1;
  ProbabilityDistribution d;
  d.outcomes = {"bright", "dark"};
  d.p = {bright / states.size(), 1.0 - bright / states.size()};
  return d;
}

double bitstring_fidelity(const std::vector<std::string>& predicted,
                          const std::vector<std::string>& truth) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw std::invalid_argument("bitstring_fidelity: bad input lengths");
  std::map<std::string, double> cp, cq;
  for (const auto& s : predicted) cp[s] += 1;
  for (const auto& s : truth) cq[s] += 1;
  double f = 0;
  const double n = static_cast<double>(predicted.size());
  for (const auto& [outcome, count] : cp) {
    auto it = cq.find(outcome);
    if (it != cq.end()) f += std::sqrt(count / n * it->second / n);
  }
  return f;
}

Metrics f1_accuracy_confusion(const std::vector<IonState>& predicted,
                              const std::vector<IonState>& truth) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw std::invalid_argument("f1_accuracy_confusion: length mismatch");
  Metrics m;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    bool pred_bright = predicted[i] == IonState::bright;
    bool true_bright = truth[i] == IonState::bright;
    if (pred_bright && true_bright)
      m.confusion.tp++;
    else if (pred_bright && !true_bright)
      m.confusion.fp++;
    else if (!pred_bright && true_bright)
      m.confusion.fn++;
    else
      m.confusion.tn++;
  }
  const auto& c = m.confusion;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(predicted.size());
  long denom = 2 * c.tp + c.fp + c.fn;
  m.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
  return m;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto gen = rng::engine(seed);
  std::shuffle(idx.begin(), idx.end(), gen);
  return idx;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct SampleTable {
  std::size_t n_samples = 0;
  std::vector<double> max_brightness;               // per sample
  std::vector<features::FeatureVector> features;    // per sample
  std::vector<IonState> truth;                      // per sample
  features::PixelVector conv_reference;             // first box of the dataset
  std::vector<localization::AnchorBox> boxes;
};

std::vector<double> to_vec(const std::array<double, features::kFeatureCount>& a) {
  return std::vector<double>(a.begin(), a.end());
}

Metrics subset_metrics(MethodReport& row, const std::vector<IonState>& pred,
                       const std::vector<IonState>& truth) {
  Metrics m = f1_accuracy_confusion(pred, truth);
  row.f1 = m.f1;
  row.accuracy = m.accuracy;
  row.confusion = m.confusion;
  row.fidelity = classical_fidelity(empirical_distribution(pred), empirical_distribution(truth));
  row.n_evaluated = pred.size();
  return m;
}

}  // namespace

EvaluationReport benchmark(const LabeledDataset& dataset, const std::vector<std::string>& methods,
                           const BenchmarkConfig& config, std::uint64_t seed) {
  static const std::vector<std::string> known = {"stats", "conv", "kmeans",
                                                 "svm",   "quant", "qsvm"};
  for (const auto& m : methods)
    if (std::find(known.begin(), known.end(), m) == known.end())
      throw std::invalid_argument("benchmark: unknown method '" + m + "'");
  if (dataset.frames.empty()) throw std::invalid_argument("benchmark: empty dataset");
  if (dataset.labels.size() != dataset.frames.size())
    throw std::invalid_argument("benchmark: dataset must carry a label per frame");
  for (const auto& l : dataset.labels)
    if (static_cast<int>(l.size()) != dataset.n_ions)
      throw std::invalid_argument("benchmark: label length != n_ions");

  EvaluationReport report;
  const auto prep_start = std::chrono::steady_clock::now();

  const int n_ions = dataset.n_ions;
  report.layout = localization::locate_ions(dataset.frames, n_ions,
                                            config.background_percentile,
                                            rng::substream(seed, 101));
  SampleTable table;
  table.boxes = localization::anchor_boxes(report.layout, config.box_width, config.box_height,
                                           dataset.frames[0].width, dataset.frames[0].height);
  table.n_samples = dataset.frames.size() * static_cast<std::size_t>(n_ions);
  table.max_brightness.resize(table.n_samples);
  table.features.resize(table.n_samples);
  table.truth.resize(table.n_samples);
  table.conv_reference = features::flatten(dataset.frames[0], table.boxes[0]);

  detail::parallel_for(dataset.frames.size(), config.threads,
                       [&](std::size_t begin, std::size_t end) {
                         for (std::size_t f = begin; f < end; ++f)
                           for (int i = 0; i < n_ions; ++i) {
                             auto v = features::flatten(dataset.frames[f], table.boxes[i]);
                             std::size_t s = f * n_ions + i;
                             table.features[s] = features::extract_features(v);
                             table.max_brightness[s] = table.features[s].max;
                           }
                       });

  if (config.label_source == LabelSource::ground_truth) {
    for (std::size_t f = 0; f < dataset.frames.size(); ++f)
      for (int i = 0; i < n_ions; ++i)
        table.truth[f * n_ions + i] = classifiers::from_bit(dataset.labels[f][i]);
  } else {
    double tau = config.tau.value_or(153.0);
    for (std::size_t s = 0; s < table.n_samples; ++s)
      table.truth[s] = classifiers::threshold_classify(table.max_brightness[s], tau);
  }
  report.prep_seconds = seconds_since(prep_start);

  // Shared calibration split (used by conv always, stats/quant when their
  // threshold is left free).
  const std::size_t n = table.n_samples;
  std::vector<std::size_t> calib_order = shuffled_indices(n, rng::substream(seed, 102));
  std::size_t n_calib = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.calibration_fraction * n)));
  n_calib = std::min(n_calib, n - 1);
  std::vector<std::size_t> calib_idx(calib_order.begin(), calib_order.begin() + n_calib);
  std::vector<std::size_t> holdout_idx(calib_order.begin() + n_calib, calib_order.end());
  std::sort(calib_idx.begin(), calib_idx.end());
  std::sort(holdout_idx.begin(), holdout_idx.end());

  auto gather_states = [&](const std::vector<std::size_t>& idx) {
    std::vector<IonState> out(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out[k] = table.truth[idx[k]];
    return out;
  };
  std::vector<std::size_t> all_idx(n);
  std::iota(all_idx.begin(), all_idx.end(), 0);

  auto finish_row = [&](MethodReport& row, const std::vector<std::size_t>& idx,
                        const std::vector<IonState>& pred) {
    subset_metrics(row, pred, gather_states(idx));
    std::vector<std::optional<IonState>> slots(n);
    for (std::size_t k = 0; k < idx.size(); ++k) slots[idx[k]] = pred[k];
    if (config.report_bitstring_fidelity && idx.size() == n) {
      std::vector<std::string> pred_strings(dataset.frames.size()),
          truth_strings(dataset.frames.size());
      for (std::size_t f = 0; f < dataset.frames.size(); ++f) {
        std::string ps(n_ions, '?'), ts(n_ions, '?');
        for (int i = 0; i < n_ions; ++i) {
          ps[i] = classifiers::to_bit(pred[f * n_ions + i]);
          ts[i] = classifiers::to_bit(table.truth[f * n_ions + i]);
        }
        pred_strings[f] = ps;
        truth_strings[f] = ts;
      }
      row.bitstring_fid = bitstring_fidelity(pred_strings, truth_strings);
    }
    report.predictions.emplace_back(row.method, std::move(slots));
  };

  for (const std::string& method : methods) {
    MethodReport row;
    row.method = method;

    if (method == "stats") {
      double tau;
      bool calibrated = !config.tau.has_value();
      auto t0 = std::chrono::steady_clock::now();
      if (calibrated) {
        std::vector<double> sig;
        std::vector<IonState> lab;
        for (std::size_t s : calib_idx) {
          sig.push_back(table.max_brightness[s]);
          lab.push_back(table.truth[s]);
        }
        tau = classifiers::calibrate_threshold(sig, lab);
      } else {
        tau = *config.tau;
      }
      row.train_seconds = seconds_since(t0);
      const auto& idx = calibrated ? holdout_idx : all_idx;
      std::vector<IonState> pred(idx.size());
      t0 = std::chrono::steady_clock::now();
      detail::parallel_for(idx.size(), config.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k)
          pred[k] = classifiers::threshold_classify(table.max_brightness[idx[k]], tau);
      });
      row.classify_seconds = seconds_since(t0);
      finish_row(row, idx, pred);

    } else if (method == "conv") {
      // The reference is the dataset's first box; calibration scores its own
      // split so the classify pass times scoring plus thresholding honestly.
      auto score_at = [&](std::size_t s) {
        auto v = features::flatten(dataset.frames[s / n_ions],
                                   table.boxes[s % n_ions]);
        return classifiers::convolution_score(v, table.conv_reference);
      };
      auto t0 = std::chrono::steady_clock::now();
      std::vector<double> cal_scores(calib_idx.size());
      std::vector<IonState> cal_truth(calib_idx.size());
      detail::parallel_for(calib_idx.size(), config.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) cal_scores[k] = score_at(calib_idx[k]);
      });
      for (std::size_t k = 0; k < calib_idx.size(); ++k) cal_truth[k] = table.truth[calib_idx[k]];
      classifiers::ConvCalibration cal;
      if (config.theta.has_value()) {
        // Fixed threshold; pick the orientation that scores better on the
        // calibration split.
        double best_f1 = -1;
        for (auto orient : {classifiers::ConvOrientation::similar_is_bright,
                            classifiers::ConvOrientation::dissimilar_is_bright}) {
          std::vector<IonState> p(cal_scores.size());
          for (std::size_t k = 0; k < cal_scores.size(); ++k)
            p[k] = classifiers::convolution_classify_score(cal_scores[k], *config.theta, orient);
          double f1 = f1_accuracy_confusion(p, cal_truth).f1;
          if (f1 > best_f1) {
            best_f1 = f1;
            cal.orientation = orient;
          }
        }
        cal.theta = *config.theta;
      } else {
        cal = classifiers::calibrate_convolution(cal_scores, cal_truth);
      }
      row.train_seconds = seconds_since(t0);

      std::vector<IonState> pred(holdout_idx.size());
      t0 = std::chrono::steady_clock::now();
      detail::parallel_for(holdout_idx.size(), config.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k)
          pred[k] = classifiers::convolution_classify_score(score_at(holdout_idx[k]), cal.theta,
                                                            cal.orientation);
      });
      row.classify_seconds = seconds_since(t0);
      finish_row(row, holdout_idx, pred);

    } else if (method == "kmeans") {
      auto t0 = std::chrono::steady_clock::now();
      std::vector<IonState> pred =
          classifiers::kmeans2_classify(table.features, rng::substream(seed, 103));
      row.classify_seconds = seconds_since(t0);
      finish_row(row, all_idx, pred);

    } else if (method == "svm") {
      auto order = shuffled_indices(n, rng::substream(seed, 104));
      std::size_t n_train = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround(config.svm_train_fraction * n)), 2, n - 1);
      std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
      std::vector<std::size_t> test_idx(order.begin() + n_train, order.end());
      std::sort(test_idx.begin(), test_idx.end());

      auto t0 = std::chrono::steady_clock::now();
      std::vector<features::FeatureVector> train_feats;
      std::vector<int> train_labels;
      for (std::size_t s : train_idx) {
        train_feats.push_back(table.features[s]);
        train_labels.push_back(table.truth[s] == IonState::bright ? -1 : +1);
      }
      auto scaler = features::FeatureScaler::fit(train_feats);
      std::vector<std::vector<double>> train_x;
      for (const auto& fv : train_feats) train_x.push_back(to_vec(scaler.transform(fv)));
      classifiers::KernelSpec kernel;
      kernel.kind = config.kernel_kind;
      kernel.gamma = config.svm_gamma.value_or(classifiers::default_gamma(train_x));
      classifiers::SvmModel model =
          classifiers::svm_train(train_x, train_labels, kernel, config.svm_c);
      row.train_seconds = seconds_since(t0);

      std::vector<IonState> pred(test_idx.size());
      t0 = std::chrono::steady_clock::now();
      detail::parallel_for(test_idx.size(), config.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k)
          pred[k] = classifiers::svm_predict(
              model, to_vec(scaler.transform(table.features[test_idx[k]])));
      });
      row.classify_seconds = seconds_since(t0);
      finish_row(row, test_idx, pred);

    } else if (method == "quant") {
      quantum::QuantConfig qc;
      qc.solver = config.quant_solver;
      bool calibrated = !config.epsilon.has_value();
      auto t0 = std::chrono::steady_clock::now();
      if (calibrated) {
        std::vector<double> sig;
        std::vector<IonState> lab;
        for (std::size_t s : calib_idx) {
          sig.push_back(table.max_brightness[s]);
          lab.push_back(table.truth[s]);
        }
        qc.epsilon = classifiers::calibrate_threshold(sig, lab);
      } else {
        qc.epsilon = *config.epsilon;
      }
      row.train_seconds = seconds_since(t0);
      const auto& idx = calibrated ? holdout_idx : all_idx;
      std::vector<IonState> pred(idx.size());
      t0 = std::chrono::steady_clock::now();
      detail::parallel_for(idx.size(), config.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k)
          pred[k] = quantum::quant_classify(table.max_brightness[idx[k]], qc);
      });
      row.classify_seconds = seconds_since(t0);
      finish_row(row, idx, pred);

    } else {  // qsvm
      auto order = shuffled_indices(n, rng::substream(seed, 105));
      std::size_t n_train = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround(config.qsvm_train_fraction * n)), 2, n - 1);
      if (config.qsvm_max_train > 0)
        n_train = std::min(n_train, static_cast<std::size_t>(config.qsvm_max_train));
      std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
      std::vector<std::size_t> test_idx(order.begin() + n_train, order.end());
      std::sort(test_idx.begin(), test_idx.end());

      auto t0 = std::chrono::steady_clock::now();
      std::vector<features::FeatureVector> train_feats;
      std::vector<int> train_labels;
      for (std::size_t s : train_idx) {
        train_feats.push_back(table.features[s]);
        train_labels.push_back(table.truth[s] == IonState::bright ? -1 : +1);
      }
      auto scaler = features::FeatureScaler::fit(train_feats);
      std::vector<std::vector<double>> train_x;
      for (const auto& fv : train_feats) train_x.push_back(to_vec(scaler.transform(fv)));
      quantum::QsvmEncoding enc = config.qsvm_encoding;
      enc.kernel.kind = config.kernel_kind;
      enc.kernel.gamma = config.svm_gamma.value_or(classifiers::default_gamma(train_x));
      qubo::SolverSpec solver = config.qsvm_solver;
      solver.seed = rng::substream(seed, 106);
      classifiers::SvmModel model = quantum::qsvm_train(train_x, train_labels, enc, solver);
      row.train_seconds = seconds_since(t0);

      std::vector<IonState> pred(test_idx.size());
      t0 = std::chrono::steady_clock::now();
      detail::parallel_for(test_idx.size(), config.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k)
          pred[k] = classifiers::svm_predict(
              model, to_vec(scaler.transform(table.features[test_idx[k]])));
      });
      row.classify_seconds = seconds_since(t0);
      finish_row(row, test_idx, pred);
    }

    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void write_report_csv(const EvaluationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("report: cannot write '" + path.string() + "'");
  out << "method,fidelity,f1,accuracy,tp,fp,tn,fn,n_evaluated,bitstring_fidelity,"
         "train_seconds,classify_seconds\n";
  for (const auto& r : report.rows) {
    out << r.method << ',' << fmt(r.fidelity) << ',' << fmt(r.f1) << ',' << fmt(r.accuracy)
        << ',' << r.confusion.tp << ',' << r.confusion.fp << ',' << r.confusion.tn << ','
        << r.confusion.fn << ',' << r.n_evaluated << ','
        << (r.bitstring_fid ? fmt(*r.bitstring_fid) : std::string{}) << ','
        << fmt(r.train_seconds) << ',' << fmt(r.classify_seconds) << '\n';
  }
}

void write_report_json(const EvaluationReport& report, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["prep_seconds"] = report.prep_seconds;
  doc["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row;
    row["method"] = r.method;
    row["fidelity"] = r.fidelity;
    row["f1"] = r.f1;
    row["accuracy"] = r.accuracy;
    row["confusion"] = {{"tp", r.confusion.tp},
                        {"fp", r.confusion.fp},
                        {"tn", r.confusion.tn},
                        {"fn", r.confusion.fn}};
    row["n_evaluated"] = r.n_evaluated;
    if (r.bitstring_fid) row["bitstring_fidelity"] = *r.bitstring_fid;
    row["train_seconds"] = r.train_seconds;
    row["classify_seconds"] = r.classify_seconds;
    doc["rows"].push_back(std::move(row));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("report: cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

void write_predictions_csv(const EvaluationReport& report, int n_ions,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("predictions: cannot write '" + path.string() + "'");
  out << "frame,ion,method,state\n";
  for (const auto& [method, slots] : report.predictions)
    for (std::size_t s = 0; s < slots.size(); ++s)
      if (slots[s])
        out << s / n_ions << ',' << s % n_ions << ',' << method << ','
            << classifiers::to_bit(*slots[s]) << '\n';
}

}  // namespace ionread::evaluation
