#include "ionread/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ionread/localization.hpp"
#include "json.hpp"

namespace ionread::classifiers {

IonState threshold_classify(double max_brightness, double tau) {
  return max_brightness >= tau ? IonState::bright : IonState::dark;
}

namespace {

double f1_of_counts(long tp, long fp, long fn) {
  long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

double calibrate_threshold(const std::vector<double>& max_brightness,
                           const std::vector<IonState>& truth) {
  if (max_brightness.size() != truth.size() || max_brightness.empty())
    throw std::invalid_argument("calibrate_threshold: bad input lengths");
  bool has_bright = false, has_dark = false;
  for (IonState s : truth) (s == IonState::bright ? has_bright : has_dark) = true;
  if (!has_bright || !has_dark)
    throw std::invalid_argument("calibrate_threshold: both classes must be present");

  // Sort samples by brightness; candidate taus are the midpoints between
  // consecutive distinct values, plus the smallest value (all-bright split).
  std::vector<std::size_t> order(max_brightness.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return max_brightness[a] < max_brightness[b]; });

  const long total_bright =
      std::count(truth.begin(), truth.end(), IonState::bright);

  double best_tau = 0.0, best_f1 = -1.0;
  auto consider = [&](double tau, long tp, long fp) {
    long fn = total_bright - tp;
    double f1 = f1_of_counts(tp, fp, fn);
    if (f1 > best_f1 || (f1 == best_f1 && tau < best_tau)) {
      best_f1 = f1;
      best_tau = tau;
    }
  };

  // Walking the sorted list from the top maintains the counts of samples at
  // or above the candidate threshold.
  long tp = 0, fp = 0;
  std::vector<double> cut_tau;
  std::vector<std::pair<long, long>> cut_counts;  // (tp, fp) for sigma >= tau
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    double v = max_brightness[*it];
    if (!std::isnan(prev) && v != prev) {
      cut_tau.push_back(0.5 * (v + prev));
      cut_counts.emplace_back(tp, fp);
    }
    (truth[*it] == IonState::bright ? tp : fp)++;
    prev = v;
  }
  cut_tau.push_back(max_brightness[order.front()]);  // everything classified bright
  cut_counts.emplace_back(tp, fp);

  for (std::size_t i = 0; i < cut_tau.size(); ++i)
    consider(cut_tau[i], cut_counts[i].first, cut_counts[i].second);
  return best_tau;
}

double convolution_score(const features::PixelVector& x,
                         const features::PixelVector& reference) {
  if (x.size() != reference.size())
    throw std::invalid_argument("convolution_score: length mismatch");
  if (x.empty()) throw std::invalid_argument("convolution_score: empty vectors");
  double dot = 0, nx = 0, nr = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * reference[i];
    nx += x[i] * x[i];
    nr += reference[i] * reference[i];
  }
  if (nx == 0 || nr == 0) throw std::invalid_argument("convolution_score: zero-norm vector");
  return 1.0 - dot / (std::sqrt(nx) * std::sqrt(nr));
}

IonState convolution_classify_score(double score, double theta, ConvOrientation orientation) {
  bool dissimilar = score >= theta;
  if (orientation == ConvOrientation::similar_is_bright)
    return dissimilar ? IonState::dark : IonState::bright;
  return dissimilar ? IonState::bright : IonState::dark;
}

IonState convolution_classify(const features::PixelVector& x,
                              const features::PixelVector& reference, double theta,
                              ConvOrientation orientation) {
  return convolution_classify_score(convolution_score(x, reference), theta, orientation);
}

ConvCalibration calibrate_convolution(const std::vector<double>& scores,
                                      const std::vector<IonState>& truth) {
  if (scores.size() != truth.size() || scores.empty())
    throw std::invalid_argument("calibrate_convolution: bad input lengths");
  bool has_bright = false, has_dark = false;
  for (IonState s : truth) (s == IonState::bright ? has_bright : has_dark) = true;
  if (!has_bright || !has_dark)
    throw std::invalid_argument("calibrate_convolution: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  const long total_bright = std::count(truth.begin(), truth.end(), IonState::bright);
  const long total_dark = static_cast<long>(truth.size()) - total_bright;

  // Counts of bright/dark truth among samples with score >= tau, per cut.
  std::vector<double> cut_theta;
  std::vector<std::pair<long, long>> cut_counts;
  long ge_bright = 0, ge_dark = 0;
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    double v = scores[*it];
    if (!std::isnan(prev) && v != prev) {
      cut_theta.push_back(0.5 * (v + prev));
      cut_counts.emplace_back(ge_bright, ge_dark);
    }
    (truth[*it] == IonState::bright ? ge_bright : ge_dark)++;
    prev = v;
  }
  cut_theta.push_back(scores[order.front()]);
  cut_counts.emplace_back(ge_bright, ge_dark);

  ConvCalibration best;
  best.f1 = -1.0;
  for (ConvOrientation orient :
       {ConvOrientation::similar_is_bright, ConvOrientation::dissimilar_is_bright}) {
    for (std::size_t i = 0; i < cut_theta.size(); ++i) {
      auto [gb, gd] = cut_counts[i];
      long tp, fp;
      if (orient == ConvOrientation::dissimilar_is_bright) {
        tp = gb;  // score >= theta predicted bright
        fp = gd;
      } else {
        tp = total_bright - gb;  // score < theta predicted bright
        fp = total_dark - gd;
      }
      double f1 = f1_of_counts(tp, fp, total_bright - tp);
      bool better = f1 > best.f1 ||
                    (f1 == best.f1 && orient == best.orientation && cut_theta[i] < best.theta);
      if (better) {
        best.f1 = f1;
        best.theta = cut_theta[i];
        best.orientation = orient;
      }
    }
  }
  return best;
}

std::vector<IonState> kmeans2_classify(const std::vector<features::FeatureVector>& dataset,
                                       std::uint64_t seed) {
  if (dataset.size() < 2) throw std::invalid_argument("kmeans2_classify: need >= 2 samples");
  auto [rows, scaler] = features::normalize_features(dataset);
  std::vector<std::vector<double>> points(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    points[i].assign(rows[i].begin(), rows[i].end());
  std::vector<double> weights(points.size(), 1.0);
  localization::KMeansResult km = localization::kmeans(points, weights, 2, seed);

  double mean_max[2] = {0, 0};
  long count[2] = {0, 0};
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    mean_max[km.assignments[i]] += dataset[i].max;
    count[km.assignments[i]]++;
  }
  if (count[0] == 0 || count[1] == 0)
    throw std::runtime_error("kmeans2_classify: degenerate clustering (empty cluster)");
  int bright_cluster = mean_max[0] / count[0] >= mean_max[1] / count[1] ? 0 : 1;

  std::vector<IonState> states(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i)
    states[i] = km.assignments[i] == bright_cluster ? IonState::bright : IonState::dark;
  return states;
}

double kernel_eval(const KernelSpec& spec, const std::vector<double>& x,
                   const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("kernel_eval: dimension mismatch");
  if (spec.kind == KernelSpec::Kind::linear) {
    double dot = 0;
    for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
    return dot;
  }
  if (!(spec.gamma > 0)) throw std::invalid_argument("kernel_eval: rbf gamma must be > 0");
  double d2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - y[i];
    d2 += d * d;
  }
  return std::exp(-spec.gamma * d2);
}

double default_gamma(const std::vector<std::vector<double>>& xs) {
  if (xs.empty() || xs[0].empty()) throw std::invalid_argument("default_gamma: empty dataset");
  double sum = 0, sum2 = 0;
  std::size_t count = 0;
  for (const auto& row : xs)
    for (double v : row) {
      sum += v;
      sum2 += v * v;
      ++count;
    }
  double mean = sum / count;
  double var = sum2 / count - mean * mean;
  if (var <= 0) var = 1.0;
  return 1.0 / (static_cast<double>(xs[0].size()) * var);
}

SvmModel svm_train(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys,
                   const KernelSpec& kernel, double c, double tol, SvmTrainStats* stats,
                   long max_iter) {
  const long l = static_cast<long>(xs.size());
  if (l < 2 || ys.size() != xs.size()) throw std::invalid_argument("svm_train: bad inputs");
  if (!(c > 0)) throw std::invalid_argument("svm_train: C must be > 0");
  bool has_pos = false, has_neg = false;
  for (int y : ys) {
    if (y == 1)
      has_pos = true;
    else if (y == -1)
      has_neg = true;
    else
      throw std::invalid_argument("svm_train: labels must be -1 or +1");
  }
  if (!has_pos || !has_neg)
    throw std::invalid_argument("svm_train: both classes must be present");
  if (max_iter <= 0) max_iter = std::max<long>(20000, 40 * l);

  std::vector<double> alpha(l, 0.0);
  std::vector<double> grad(l, -1.0);  // d/dalpha of (1/2 a'Qa - e'a) at alpha = 0
  std::vector<double> diag(l);
  for (long i = 0; i < l; ++i) diag[i] = kernel_eval(kernel, xs[i], xs[i]);

  std::vector<double> col_i(l), col_j(l);
  auto fill_column = [&](long k, std::vector<double>& col) {
    for (long m = 0; m < l; ++m) col[m] = kernel_eval(kernel, xs[k], xs[m]);
  };

  double dual = 0.0;  // value of W(alpha)
  long iter = 0;
  double violation = std::numeric_limits<double>::infinity();
  for (; iter < max_iter; ++iter) {
    // Maximal violating pair over the feasible ascent directions.
    long i = -1, j = -1;
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    for (long k = 0; k < l; ++k) {
      double v = -ys[k] * grad[k];
      bool in_up = (ys[k] == 1 && alpha[k] < c) || (ys[k] == -1 && alpha[k] > 0);
      bool in_low = (ys[k] == 1 && alpha[k] > 0) || (ys[k] == -1 && alpha[k] < c);
      if (in_up && v > gmax) {
        gmax = v;
        i = k;
      }
      if (in_low && v < gmin) {
        gmin = v;
        j = k;
      }
    }
    violation = gmax - gmin;
    if (i < 0 || j < 0 || violation < tol) break;

    fill_column(i, col_i);
    fill_column(j, col_j);

    // Two-variable subproblem along y_i alpha_i + y_j alpha_j = const.
    double eta = diag[i] + diag[j] - 2.0 * col_i[j];
    if (eta <= 0) eta = 1e-12;
    double L, H;
    if (ys[i] != ys[j]) {
      L = std::max(0.0, alpha[j] - alpha[i]);
      H = std::min(c, c + alpha[j] - alpha[i]);
    } else {
      L = std::max(0.0, alpha[i] + alpha[j] - c);
      H = std::min(c, alpha[i] + alpha[j]);
    }
    double ei = ys[i] * grad[i];  // f(x_i) - y_i without bias
    double ej = ys[j] * grad[j];
    double aj_new = std::clamp(alpha[j] + ys[j] * (ei - ej) / eta, L, H);
    double dj = aj_new - alpha[j];
    if (std::abs(dj) < 1e-14) {
      // Numerically stuck pair; counts as converged at this violation level.
      break;
    }
    double di = -ys[i] * ys[j] * dj;

    double dw = -(grad[i] * di + grad[j] * dj +
                  0.5 * (diag[i] * di * di + diag[j] * dj * dj) +
                  ys[i] * ys[j] * col_i[j] * di * dj);
    dual += dw;
    alpha[i] += di;
    alpha[j] += dj;
    for (long m = 0; m < l; ++m)
      grad[m] += ys[m] * (ys[i] * col_i[m] * di + ys[j] * col_j[m] * dj);
    if (stats) stats->dual_objective_trace.push_back(dual);
  }
  if (iter >= max_iter)
    throw std::runtime_error("svm_train: no convergence after " + std::to_string(max_iter) +
                             " iterations (KKT violation " + std::to_string(violation) + ")");

  // Bias from free support vectors; midpoint of the violation bracket if none.
  double bsum = 0;
  long bcount = 0;
  for (long k = 0; k < l; ++k)
    if (alpha[k] > 1e-12 && alpha[k] < c - 1e-12) {
      bsum += -ys[k] * grad[k];
      ++bcount;
    }
  double bias;
  if (bcount > 0) {
    bias = bsum / bcount;
  } else {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    for (long k = 0; k < l; ++k) {
      double v = -ys[k] * grad[k];
      bool in_up = (ys[k] == 1 && alpha[k] < c) || (ys[k] == -1 && alpha[k] > 0);
      bool in_low = (ys[k] == 1 && alpha[k] > 0) || (ys[k] == -1 && alpha[k] < c);
      if (in_up) gmax = std::max(gmax, v);
      if (in_low) gmin = std::min(gmin, v);
    }
    bias = 0.5 * (gmax + gmin);
  }

  SvmModel model;
  model.kernel = kernel;
  model.c = c;
  model.bias = bias;
  for (long k = 0; k < l; ++k)
    if (alpha[k] > 1e-12) {
      model.alphas.push_back(alpha[k]);
      model.labels.push_back(ys[k]);
      model.support_vectors.push_back(xs[k]);
    }
  if (stats) {
    stats->iterations = static_cast<int>(iter);
    stats->final_violation = violation;
  }
  return model;
}

double svm_decision(const SvmModel& model, const std::vector<double>& x) {
  double f = model.bias;
  for (std::size_t k = 0; k < model.alphas.size(); ++k)
    f += model.alphas[k] * model.labels[k] * kernel_eval(model.kernel, model.support_vectors[k], x);
  return f;
}

IonState svm_predict(const SvmModel& model, const std::vector<double>& x) {
  return svm_decision(model, x) < 0 ? IonState::bright : IonState::dark;
}

namespace {

nlohmann::json kernel_to_json(const KernelSpec& k) {
  nlohmann::json j;
  j["kind"] = k.kind == KernelSpec::Kind::linear ? "linear" : "rbf";
  j["gamma"] = k.gamma;
  return j;
}

KernelSpec kernel_from_json(const nlohmann::json& j) {
  KernelSpec k;
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "linear")
    k.kind = KernelSpec::Kind::linear;
  else if (kind == "rbf")
    k.kind = KernelSpec::Kind::rbf;
  else
    throw std::runtime_error("svm model: unknown kernel kind '" + kind + "'");
  k.gamma = j.at("gamma").get<double>();
  return k;
}

}  // namespace

void save_svm_model(const SvmModel& model, const features::FeatureScaler& scaler,
                    const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["kernel"] = kernel_to_json(model.kernel);
  doc["c"] = model.c;
  doc["bias"] = model.bias;
  doc["alphas"] = model.alphas;
  doc["labels"] = model.labels;
  doc["support_vectors"] = model.support_vectors;
  doc["scaler"]["mean"] = scaler.mean;
  doc["scaler"]["std"] = scaler.std_dev;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("svm model: cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

std::pair<SvmModel, features::FeatureScaler> load_svm_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("svm model: cannot open '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("svm model: parse error in '" + path.string() + "': " + e.what());
  }
  SvmModel model;
  model.kernel = kernel_from_json(doc.at("kernel"));
  model.c = doc.at("c").get<double>();
  model.bias = doc.at("bias").get<double>();
  model.alphas = doc.at("alphas").get<std::vector<double>>();
  model.labels = doc.at("labels").get<std::vector<int>>();
  model.support_vectors = doc.at("support_vectors").get<std::vector<std::vector<double>>>();
  if (model.alphas.size() != model.labels.size() ||
      model.alphas.size() != model.support_vectors.size())
    throw std::runtime_error("svm model: inconsistent support arrays");
  features::FeatureScaler scaler;
  auto mean = doc.at("scaler").at("mean").get<std::vector<double>>();
  auto stdv = doc.at("scaler").at("std").get<std::vector<double>>();
  if (mean.size() != features::kFeatureCount || stdv.size() != features::kFeatureCount)
    throw std::runtime_error("svm model: scaler has wrong width");
  std::copy(mean.begin(), mean.end(), scaler.mean.begin());
  std::copy(stdv.begin(), stdv.end(), scaler.std_dev.begin());
  return {std::move(model), scaler};
}

}  // namespace ionread::classifiers
