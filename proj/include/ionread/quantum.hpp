#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ionread/classifiers.hpp"
#include "ionread/qubo.hpp"

namespace ionread::quantum {

struct QuantConfig {
  double epsilon = 152.8;  // brightness threshold carried into the QUBO
  qubo::SolverSpec solver;
};

/// The 2-variable brightness QUBO for one ion: diagonal (sigma, -epsilon),
/// off-diagonal coupling (sigma + epsilon) / 2, no offset, maximized.
qubo::QuboProblem quant_qubo(double sigma, double epsilon);

/// Solves quant_qubo with the configured solver. The maximizer is (1,1)
/// exactly when sigma > epsilon, which reads out as bright; a sigma == epsilon
/// tie resolves to (1,0) and therefore dark.
classifiers::IonState quant_classify(double sigma, const QuantConfig& config);

/// Independent per-ion classification, concatenated in ion order
/// ('0' bright, '1' dark).
std::string quant_classify_chain(const std::vector<double>& sigmas, const QuantConfig& config);

/// Unit-gate split of the 2x2 matrix behind quant_qubo:
///   Q = identity_coeff * I + pauli_coeff * (sigma_z + sigma_x)
/// with identity_coeff = (sigma - epsilon) / 2 and
/// pauli_coeff = (sigma + epsilon) / 2. sigma_z + sigma_x is sqrt(2) times
/// the Hadamard gate, so this is an (I, H) decomposition up to scale.
struct QuantDecomposition {
  double identity_coeff = 0.0;
  double pauli_coeff = 0.0;
};
QuantDecomposition quant_decompose(double sigma, double epsilon);

/// Binary encoding of SVM dual variables: alpha_i = sum_k base^k a_{i,k}
/// with K bits per alpha, plus a quadratic penalty weight on the equality
/// constraint sum_i alpha_i y_i = 0.
struct QsvmEncoding {
  int bits_per_alpha = 3;
  double base = 2.0;
  double equality_penalty = 5.0;
  classifiers::KernelSpec kernel;

  double alpha_max() const;  // sum_k base^k, the implied box bound
  void validate() const;
};

/// QUBO over l * bits_per_alpha binary variables whose value is the negated
/// penalized dual loss: value(a) = W(alpha(a)) - penalty * (sum alpha_i y_i)^2.
/// Maximizing it minimizes the training loss.
qubo::QuboProblem qsvm_build_qubo(const std::vector<std::vector<double>>& kernel_matrix,
                                  const std::vector<int>& labels, const QsvmEncoding& enc);

std::vector<double> qsvm_decode_alphas(const std::vector<std::uint8_t>& bits,
                                       const QsvmEncoding& enc, int n_samples);

/// Trains an SVM by solving the encoded QUBO with the given solver and
/// decoding the alphas; the bias averages y_i - sum_j alpha_j y_j K_ij over
/// samples with alpha_i > 0. Throws if the solution has no support vectors.
classifiers::SvmModel qsvm_train(const std::vector<std::vector<double>>& xs,
                                 const std::vector<int>& ys, const QsvmEncoding& enc,
                                 const qubo::SolverSpec& solver);

}  // namespace ionread::quantum
