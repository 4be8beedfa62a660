#include "ionread/quantum.hpp"

#include <cmath>
#include <stdexcept>

namespace ionread::quantum {

using classifiers::IonState;

qubo::QuboProblem quant_qubo(double sigma, double epsilon) {
  qubo::QuboProblem q(2);
  q.q(0, 0) = sigma;
  q.q(1, 1) = -epsilon;
  q.q(1, 0) = 0.5 * (sigma + epsilon);
  q.offset = 0.0;
  return q;
}

IonState quant_classify(double sigma, const QuantConfig& config) {
  qubo::Solution sol = qubo::solve(quant_qubo(sigma, config.epsilon), config.solver);
  return (sol.x[0] == 1 && sol.x[1] == 1) ? IonState::bright : IonState::dark;
}

std::string quant_classify_chain(const std::vector<double>& sigmas, const QuantConfig& config) {
  if (sigmas.empty()) throw std::invalid_argument("quant_classify_chain: empty chain");
  std::string out;
  out.reserve(sigmas.size());
  for (double sigma : sigmas) out.push_back(classifiers::to_bit(quant_classify(sigma, config)));
  return out;
}

QuantDecomposition quant_decompose(double sigma, double epsilon) {
  return {0.5 * (sigma - epsilon), 0.5 * (sigma + epsilon)};
}

double QsvmEncoding::alpha_max() const {
  double s = 0.0;
  for (int k = 0; k < bits_per_alpha; ++k) s += std::pow(base, k);
  return s;
}

void QsvmEncoding::validate() const {
  if (bits_per_alpha < 1) throw std::invalid_argument("qsvm: bits_per_alpha must be >= 1");
  if (!(base > 0)) throw std::invalid_argument("qsvm: base must be > 0");
  if (equality_penalty < 0) throw std::invalid_argument("qsvm: penalty must be >= 0");
}

qubo::QuboProblem qsvm_build_qubo(const std::vector<std::vector<double>>& kernel_matrix,
                                  const std::vector<int>& labels, const QsvmEncoding& enc) {
  enc.validate();
  const int l = static_cast<int>(labels.size());
  if (l < 2 || kernel_matrix.size() != labels.size())
    throw std::invalid_argument("qsvm_build_qubo: bad inputs");
  for (const auto& row : kernel_matrix)
    if (row.size() != labels.size())
      throw std::invalid_argument("qsvm_build_qubo: kernel matrix is not l x l");
  bool has_pos = false, has_neg = false;
  for (int y : labels) {
    if (y == 1)
      has_pos = true;
    else if (y == -1)
      has_neg = true;
    else
      throw std::invalid_argument("qsvm_build_qubo: labels must be -1 or +1");
  }
  if (!has_pos || !has_neg)
    throw std::invalid_argument("qsvm_build_qubo: both classes must be present");

  const int bits = enc.bits_per_alpha;
  std::vector<double> weight(bits);
  for (int k = 0; k < bits; ++k) weight[k] = std::pow(enc.base, k);

  // value(a) = sum_i alpha_i
  //          - sum_{i,j} alpha_i alpha_j y_i y_j (K_ij / 2 + penalty)
  // expanded over alpha_i = sum_k weight[k] a_{i*bits+k}.
  qubo::QuboProblem q(l * bits);
  for (int i = 0; i < l; ++i)
    for (int k = 0; k < bits; ++k) {
      const int u = i * bits + k;
      double quad_ii = kernel_matrix[i][i] / 2.0 + enc.equality_penalty;
      q.q(u, u) = weight[k] - weight[k] * weight[k] * quad_ii;
      // pairs within the same alpha (k' < k) and across alphas
      for (int kk = 0; kk < k; ++kk)
        q.q(u, i * bits + kk) -= 2.0 * weight[k] * weight[kk] * quad_ii;
      for (int j = 0; j < i; ++j) {
        double quad_ij = labels[i] * labels[j] * (kernel_matrix[i][j] / 2.0 + enc.equality_penalty);
        if (quad_ij == 0.0) continue;
        for (int kk = 0; kk < bits; ++kk)
          q.q(u, j * bits + kk) -= 2.0 * weight[k] * weight[kk] * quad_ij;
      }
    }
  return q;
}

std::vector<double> qsvm_decode_alphas(const std::vector<std::uint8_t>& bits,
                                       const QsvmEncoding& enc, int n_samples) {
  enc.validate();
  if (static_cast<int>(bits.size()) != n_samples * enc.bits_per_alpha)
    throw std::invalid_argument("qsvm_decode_alphas: bit string length mismatch");
  std::vector<double> alphas(n_samples, 0.0);
  for (int i = 0; i < n_samples; ++i)
    for (int k = 0; k < enc.bits_per_alpha; ++k)
      if (bits[i * enc.bits_per_alpha + k]) alphas[i] += std::pow(enc.base, k);
  return alphas;
}

classifiers::SvmModel qsvm_train(const std::vector<std::vector<double>>& xs,
                                 const std::vector<int>& ys, const QsvmEncoding& enc,
                                 const qubo::SolverSpec& solver) {
  const int l = static_cast<int>(xs.size());
  if (l < 2 || ys.size() != xs.size()) throw std::invalid_argument("qsvm_train: bad inputs");

  std::vector<std::vector<double>> kmat(l, std::vector<double>(l));
  for (int i = 0; i < l; ++i)
    for (int j = 0; j <= i; ++j)
      kmat[i][j] = kmat[j][i] = classifiers::kernel_eval(enc.kernel, xs[i], xs[j]);

  qubo::QuboProblem q = qsvm_build_qubo(kmat, ys, enc);
  qubo::Solution sol = qubo::solve(q, solver);
  std::vector<double> alphas = qsvm_decode_alphas(sol.x, enc, l);

  double bsum = 0.0;
  long bcount = 0;
  for (int i = 0; i < l; ++i) {
    if (alphas[i] <= 0) continue;
    double f = 0.0;
    for (int j = 0; j < l; ++j) f += alphas[j] * ys[j] * kmat[i][j];
    bsum += ys[i] - f;
    ++bcount;
  }
  if (bcount == 0) throw std::runtime_error("qsvm_train: no support vectors (all alphas zero)");

  classifiers::SvmModel model;
  model.kernel = enc.kernel;
  model.c = enc.alpha_max();
  model.bias = bsum / static_cast<double>(bcount);
  for (int i = 0; i < l; ++i)
    if (alphas[i] > 0) {
      model.alphas.push_back(alphas[i]);
      model.labels.push_back(ys[i]);
      model.support_vectors.push_back(xs[i]);
    }
  return model;
}

}  // namespace ionread::quantum
