#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <array>
#include <cmath>
#include <complex>
#include <random>

#include "doctest.h"
#include "ionread/quantum.hpp"
#include "ionread/rng.hpp"

using namespace ionread;
using classifiers::IonState;
using quantum::QuantConfig;

namespace {

QuantConfig exhaustive_config(double epsilon) {
  QuantConfig c;
  c.epsilon = epsilon;
  c.solver.kind = qubo::SolverSpec::Kind::exhaustive;
  return c;
}

using Mat2 = std::array<std::array<double, 2>, 2>;

Mat2 quant_matrix(double sigma, double eps) {
  return {{{sigma, (sigma + eps) / 2}, {(sigma + eps) / 2, -eps}}};
}

// Dual objective minus the equality penalty, straight from the alphas: the
// quantity the QSVM QUBO is supposed to encode.
double penalized_dual(const std::vector<double>& alpha, const std::vector<int>& y,
                      const std::vector<std::vector<double>>& kmat, double penalty) {
  double w = 0, eq = 0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    w += alpha[i];
    eq += alpha[i] * y[i];
    for (std::size_t j = 0; j < alpha.size(); ++j)
      w -= 0.5 * alpha[i] * alpha[j] * y[i] * y[j] * kmat[i][j];
  }
  return w - penalty * eq * eq;
}

std::vector<std::uint8_t> bits_of(std::uint64_t code, int n) {
  std::vector<std::uint8_t> x(n);
  for (int i = 0; i < n; ++i) x[i] = (code >> i) & 1;
  return x;
}

}  // namespace

TEST_CASE("quant_qubo objective values enumerate as derived") {
  auto q = quantum::quant_qubo(200.0, 152.8);
  CHECK(qubo::qubo_value(q, {0, 0}) == doctest::Approx(0.0));
  CHECK(qubo::qubo_value(q, {0, 1}) == doctest::Approx(-152.8));
  CHECK(qubo::qubo_value(q, {1, 0}) == doctest::Approx(200.0));
  CHECK(qubo::qubo_value(q, {1, 1}) == doctest::Approx(223.6));

  auto zero = quantum::quant_qubo(0.0, 0.0);
  for (std::uint64_t c = 0; c < 4; ++c)
    CHECK(qubo::qubo_value(zero, bits_of(c, 2)) == doctest::Approx(0.0));

  auto tie = quantum::quant_qubo(100.0, 100.0);
  CHECK(qubo::qubo_value(tie, {0, 0}) == doctest::Approx(0.0));
  CHECK(qubo::qubo_value(tie, {0, 1}) == doctest::Approx(-100.0));
  CHECK(qubo::qubo_value(tie, {1, 0}) == doctest::Approx(100.0));
  CHECK(qubo::qubo_value(tie, {1, 1}) == doctest::Approx(100.0));
}

TEST_CASE("quant_classify brute-forced on the paper operating points") {
  CHECK(quantum::quant_classify(200.0, exhaustive_config(152.8)) == IonState::bright);
  CHECK(quantum::quant_classify(100.0, exhaustive_config(152.8)) == IonState::dark);
  CHECK(quantum::quant_classify(152.8, exhaustive_config(152.8)) == IonState::dark);  // tie
}

TEST_CASE("quant_classify_chain is the elementwise tensor product") {
  auto cfg = exhaustive_config(152.8);
  CHECK(quantum::quant_classify_chain({200.0, 100.0}, cfg) == "01");
  CHECK(quantum::quant_classify_chain(std::vector<double>(7, 255.0), cfg) == "0000000");

  auto gen = rng::engine(1);
  std::uniform_real_distribution<double> d(0, 255);
  std::vector<double> sigmas(12);
  for (auto& s : sigmas) s = d(gen);
  std::string chain = quantum::quant_classify_chain(sigmas, cfg);
  for (std::size_t i = 0; i < sigmas.size(); ++i)
    CHECK(chain[i] == classifiers::to_bit(quantum::quant_classify(sigmas[i], cfg)));
}

TEST_CASE("quant_decompose reconstructs the brightness matrix exactly") {
  auto check_reconstruction = [](double sigma, double eps) {
    auto d = quantum::quant_decompose(sigma, eps);
    // identity and sigma_z + sigma_x components
    Mat2 rebuilt = {{{d.identity_coeff + d.pauli_coeff, d.pauli_coeff},
                     {d.pauli_coeff, d.identity_coeff - d.pauli_coeff}}};
    Mat2 target = quant_matrix(sigma, eps);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) CHECK(std::abs(rebuilt[r][c] - target[r][c]) < 1e-12);
  };

  auto d = quantum::quant_decompose(200.0, 152.8);
  CHECK(d.identity_coeff == doctest::Approx(23.6));
  CHECK(d.pauli_coeff == doctest::Approx(176.4));
  check_reconstruction(200.0, 152.8);

  auto equal = quantum::quant_decompose(120.0, 120.0);
  CHECK(equal.identity_coeff == 0.0);
  check_reconstruction(120.0, 120.0);

  auto opposite = quantum::quant_decompose(80.0, -80.0);  // synthetic symmetry case
  CHECK(opposite.pauli_coeff == 0.0);
  check_reconstruction(80.0, -80.0);

  auto gen = rng::engine(2);
  std::uniform_real_distribution<double> u(0, 255);
  for (int t = 0; t < 100; ++t) check_reconstruction(u(gen), u(gen));
}

TEST_CASE("quant equals the strict threshold rule on a coarse grid") {
  // the acceptance suite runs the full 0.1-step grid; unit scope is 1.0
  for (double sigma = 0; sigma <= 255.0; sigma += 1.0)
    for (double eps = 0; eps <= 255.0; eps += 1.0) {
      bool bright =
          quantum::quant_classify(sigma, exhaustive_config(eps)) == IonState::bright;
      if (bright != (sigma > eps)) {
        REQUIRE(bright == (sigma > eps));  // stop at the first mismatch
      }
    }
}

TEST_CASE("quant via simulated annealing agrees with the exhaustive route") {
  QuantConfig sa;
  sa.solver.kind = qubo::SolverSpec::Kind::sim_anneal;
  sa.solver.metropolis.sweeps = 50;  // 2-variable landscape needs no more
  sa.solver.restarts = 2;
  sa.solver.seed = 77;

  auto gen = rng::engine(3);
  std::uniform_real_distribution<double> d(0, 255);
  for (int t = 0; t < 100000; ++t) {
    double sigma = d(gen), eps = d(gen);
    sa.epsilon = eps;
    IonState via_sa = quantum::quant_classify(sigma, sa);
    IonState via_ex = quantum::quant_classify(sigma, exhaustive_config(eps));
    if (via_sa != via_ex) {
      REQUIRE(via_sa == via_ex);
    }
  }
}

TEST_CASE("qsvm_build_qubo has l*K variables and encodes the penalized dual") {
  std::vector<std::vector<double>> kmat = {{1.0, 0.2}, {0.2, 1.0}};
  std::vector<int> y = {+1, -1};
  quantum::QsvmEncoding enc;
  enc.bits_per_alpha = 2;
  enc.base = 2.0;
  enc.equality_penalty = 1.5;
  auto q = quantum::qsvm_build_qubo(kmat, y, enc);
  CHECK(q.n == 4);

  // every bitstring's QUBO value equals the alpha-space objective
  for (std::uint64_t c = 0; c < 16; ++c) {
    auto bits = bits_of(c, 4);
    auto alpha = quantum::qsvm_decode_alphas(bits, enc, 2);
    CHECK(qubo::qubo_value(q, bits) ==
          doctest::Approx(penalized_dual(alpha, y, kmat, enc.equality_penalty)).epsilon(1e-12));
  }
}

TEST_CASE("qsvm_build_qubo: exhaustive solve maximizes over the encoded grid") {
  // 4 separable points, rbf kernel, 3 bits per alpha -> 4096 encodings
  std::vector<std::vector<double>> xs = {{0.0, 0.0}, {0.2, 0.1}, {3.0, 3.0}, {3.2, 2.9}};
  std::vector<int> y = {-1, -1, +1, +1};
  quantum::QsvmEncoding enc;
  enc.kernel.kind = classifiers::KernelSpec::Kind::rbf;
  enc.kernel.gamma = 0.5;
  const int l = 4;
  std::vector<std::vector<double>> kmat(l, std::vector<double>(l));
  for (int i = 0; i < l; ++i)
    for (int j = 0; j < l; ++j) kmat[i][j] = classifiers::kernel_eval(enc.kernel, xs[i], xs[j]);

  auto q = quantum::qsvm_build_qubo(kmat, y, enc);
  REQUIRE(q.n == l * enc.bits_per_alpha);
  auto sol = qubo::solve_exhaustive(q);

  double best = -1e300;
  for (std::uint64_t c = 0; c < (1ULL << q.n); ++c) {
    auto alpha = quantum::qsvm_decode_alphas(bits_of(c, q.n), enc, l);
    best = std::max(best, penalized_dual(alpha, y, kmat, enc.equality_penalty));
  }
  CHECK(sol.value == doctest::Approx(best).epsilon(1e-9));

  // decoded alphas stay inside the encoding box
  auto alpha = quantum::qsvm_decode_alphas(sol.x, enc, l);
  for (double a : alpha) {
    CHECK(a >= 0);
    CHECK(a <= enc.alpha_max());
  }
}

TEST_CASE("qsvm_train separates the toy set and matches exact svm signs") {
  std::vector<std::vector<double>> xs = {{0.0, 0.0}, {0.3, -0.1}, {3.0, 3.0}, {2.8, 3.2}};
  std::vector<int> y = {-1, -1, +1, +1};
  quantum::QsvmEncoding enc;
  enc.kernel.kind = classifiers::KernelSpec::Kind::rbf;
  enc.kernel.gamma = 0.5;
  qubo::SolverSpec solver;
  solver.kind = qubo::SolverSpec::Kind::exhaustive;

  auto model = quantum::qsvm_train(xs, y, enc, solver);
  CHECK(model.c == doctest::Approx(7.0));  // 1 + 2 + 4

  // held-out mirrored points classify correctly
  CHECK(classifiers::svm_predict(model, {-0.2, 0.2}) == IonState::bright);
  CHECK(classifiers::svm_predict(model, {3.1, 2.7}) == IonState::dark);

  // decision signs agree with the exact trainer on the training points
  auto exact = classifiers::svm_train(xs, y, enc.kernel, 10.0);
  for (const auto& x : xs)
    CHECK((classifiers::svm_decision(model, x) > 0) ==
          (classifiers::svm_decision(exact, x) > 0));
}

TEST_CASE("qsvm_train with annealing solver still classifies the toy set") {
  std::vector<std::vector<double>> xs = {{0.0, 0.0}, {0.3, -0.1}, {3.0, 3.0}, {2.8, 3.2},
                                         {-0.2, 0.3}, {3.3, 2.9}};
  std::vector<int> y = {-1, -1, +1, +1, -1, +1};
  quantum::QsvmEncoding enc;
  enc.kernel.kind = classifiers::KernelSpec::Kind::rbf;
  enc.kernel.gamma = 0.5;
  qubo::SolverSpec solver;
  solver.kind = qubo::SolverSpec::Kind::sim_anneal;
  solver.seed = 5;
  auto model = quantum::qsvm_train(xs, y, enc, solver);
  for (std::size_t i = 0; i < xs.size(); ++i)
    CHECK(classifiers::svm_predict(model, xs[i]) ==
          (y[i] < 0 ? IonState::bright : IonState::dark));
}

TEST_CASE("qsvm_train reports the no-support-vector failure") {
  // A kernel with a huge diagonal makes any nonzero alpha cost more than it
  // gains, so the optimal encoding is all-zero.
  std::vector<std::vector<double>> kmat = {{1000.0, 0.0}, {0.0, 1000.0}};
  std::vector<int> y = {+1, -1};
  quantum::QsvmEncoding enc;
  auto q = quantum::qsvm_build_qubo(kmat, y, enc);
  auto sol = qubo::solve_exhaustive(q);
  CHECK(sol.x == std::vector<std::uint8_t>(6, 0));

  // the same data drives qsvm_train into the documented error
  std::vector<std::vector<double>> xs = {{0.0}, {1.0}};
  quantum::QsvmEncoding linear_enc;
  linear_enc.kernel.kind = classifiers::KernelSpec::Kind::linear;
  // scale the inputs so the linear kernel diagonal dominates the dual gain
  std::vector<std::vector<double>> big = {{100.0}, {-100.0}};
  qubo::SolverSpec solver;
  solver.kind = qubo::SolverSpec::Kind::exhaustive;
  CHECK_THROWS_WITH_AS(quantum::qsvm_train(big, y, linear_enc, solver),
                       doctest::Contains("no support vectors"), std::runtime_error);
}

TEST_CASE("qsvm encoding validation") {
  quantum::QsvmEncoding enc;
  enc.bits_per_alpha = 0;
  std::vector<std::vector<double>> kmat = {{1, 0}, {0, 1}};
  CHECK_THROWS_AS(quantum::qsvm_build_qubo(kmat, {1, -1}, enc), std::invalid_argument);
  enc.bits_per_alpha = 2;
  CHECK_THROWS_AS(quantum::qsvm_build_qubo(kmat, {1, 1}, enc), std::invalid_argument);
  CHECK_THROWS_AS(quantum::qsvm_build_qubo(kmat, {1, 2}, enc), std::invalid_argument);
}
