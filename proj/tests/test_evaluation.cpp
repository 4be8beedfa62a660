#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <complex>
#include <random>

#include "doctest.h"
#include "ionread/evaluation.hpp"
#include "ionread/rng.hpp"

using namespace ionread;
using classifiers::IonState;
using evaluation::classical_fidelity;
using evaluation::DensityMatrix;
using evaluation::ProbabilityDistribution;
using evaluation::quantum_fidelity;

namespace {

ProbabilityDistribution dist(std::vector<double> p) {
  ProbabilityDistribution d;
  d.p = std::move(p);
  d.outcomes.resize(d.p.size());
  for (std::size_t i = 0; i < d.p.size(); ++i) d.outcomes[i] = "o" + std::to_string(i);
  return d;
}

DensityMatrix pure_state(const Eigen::VectorXcd& psi) {
  DensityMatrix rho;
  rho.rho = psi * psi.adjoint();
  return rho;
}

DensityMatrix random_density(int n, std::mt19937_64& gen) {
  std::normal_distribution<double> g(0, 1);
  Eigen::MatrixXcd a(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) a(r, c) = std::complex<double>(g(gen), g(gen));
  Eigen::MatrixXcd rho = a * a.adjoint();
  rho /= rho.trace().real();
  rho = 0.5 * (rho + Eigen::MatrixXcd(rho.adjoint()));  // strict hermitization
  DensityMatrix d;
  d.rho = rho;
  return d;
}

evaluation::LabeledDataset tiny_dataset(int n_frames, int seed) {
  imaging::SynthParams p;
  p.n_ions = 4;
  p.frame_width = 100;
  p.spacing = imaging::UniformSpacing{20.0, 18.0, 16.0};
  evaluation::LabeledDataset ds;
  ds.n_ions = 4;
  ds.labels = imaging::sample_states(4, n_frames, seed);
  ds.labels[0] = "0011";  // pin the conv reference bright and both classes present
  ds.frames = imaging::synth_frames(p, imaging::make_layout(p), ds.labels, seed + 1);
  return ds;
}

}  // namespace

TEST_CASE("classical_fidelity on fixed distributions") {
  CHECK(classical_fidelity(dist({0.3, 0.7}), dist({0.3, 0.7})) == doctest::Approx(1.0));
  CHECK(classical_fidelity(dist({1, 0}), dist({0, 1})) == doctest::Approx(0.0));
  CHECK(classical_fidelity(dist({0.5, 0.5}), dist({0.9, 0.1})) ==
        doctest::Approx(std::sqrt(0.45) + std::sqrt(0.05)));
}

TEST_CASE("classical_fidelity is symmetric, maximal only at equality, relabel-invariant") {
  auto gen = rng::engine(1);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int t = 0; t < 100; ++t) {
    double a = u(gen), b = u(gen), c = u(gen), d = u(gen);
    auto p = dist({a / (a + b), b / (a + b)});
    auto q = dist({c / (c + d), d / (c + d)});
    double f = classical_fidelity(p, q);
    CHECK(f == doctest::Approx(classical_fidelity(q, p)));
    CHECK(f <= 1.0 + 1e-12);
    if (std::abs(p.p[0] - q.p[0]) > 1e-6) CHECK(f < 1.0);

    auto pr = p, qr = q;  // simultaneous outcome relabeling
    std::swap(pr.p[0], pr.p[1]);
    std::swap(qr.p[0], qr.p[1]);
    CHECK(classical_fidelity(pr, qr) == doctest::Approx(f));
  }
}

TEST_CASE("classical_fidelity rejects mismatched outcome sets and bad weights") {
  auto p = dist({0.5, 0.5});
  auto q = dist({0.5, 0.5});
  q.outcomes[1] = "other";
  CHECK_THROWS_AS(classical_fidelity(p, q), std::invalid_argument);
  CHECK_THROWS_AS(classical_fidelity(dist({0.5, 0.6}), dist({0.5, 0.5})),
                  std::invalid_argument);
}

TEST_CASE("quantum_fidelity on pure states") {
  Eigen::VectorXcd zero(2), one(2), plus(2);
  zero << 1, 0;
  one << 0, 1;
  plus << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  CHECK(quantum_fidelity(pure_state(zero), pure_state(zero)) == doctest::Approx(1.0));
  CHECK(quantum_fidelity(pure_state(zero), pure_state(one)) ==
        doctest::Approx(0.0).scale(1.0));
  CHECK(quantum_fidelity(pure_state(zero), pure_state(plus)) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("quantum_fidelity is 1 on identical random states") {
  auto gen = rng::engine(2);
  for (int t = 0; t < 20; ++t) {
    auto rho = random_density(4, gen);
    CHECK(quantum_fidelity(rho, rho) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("quantum_fidelity bridges to classical_fidelity on diagonal states") {
  auto gen = rng::engine(3);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int t = 0; t < 100; ++t) {
    int n = 2 + (t % 4);
    std::vector<double> p(n), q(n);
    double sp = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
      p[i] = u(gen);
      q[i] = u(gen);
      sp += p[i];
      sq += q[i];
    }
    for (int i = 0; i < n; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    DensityMatrix rho0, rho1;
    rho0.rho = Eigen::MatrixXcd::Zero(n, n);
    rho1.rho = Eigen::MatrixXcd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      rho0.rho(i, i) = p[i];
      rho1.rho(i, i) = q[i];
    }
    CHECK(quantum_fidelity(rho0, rho1) ==
          doctest::Approx(classical_fidelity(dist(p), dist(q))).epsilon(1e-9));
  }
}

TEST_CASE("quantum_fidelity validates its inputs") {
  DensityMatrix bad;
  bad.rho = Eigen::MatrixXcd::Zero(2, 2);
  bad.rho(0, 1) = 0.5;  // not Hermitian
  bad.rho(0, 0) = 1.0;
  DensityMatrix ok;
  ok.rho = Eigen::MatrixXcd::Zero(2, 2);
  ok.rho(0, 0) = 1.0;
  CHECK_THROWS_AS(quantum_fidelity(bad, ok), std::invalid_argument);

  DensityMatrix trace2;
  trace2.rho = Eigen::MatrixXcd::Identity(2, 2);
  CHECK_THROWS_AS(quantum_fidelity(trace2, ok), std::invalid_argument);

  DensityMatrix negative;  // Hermitian, unit trace, one negative eigenvalue
  negative.rho = Eigen::MatrixXcd::Zero(2, 2);
  negative.rho(0, 0) = 1.1;
  negative.rho(1, 1) = -0.1;
  CHECK_THROWS_WITH_AS(quantum_fidelity(negative, ok), doctest::Contains("eigenvalue"),
                       std::invalid_argument);
}

TEST_CASE("f1_accuracy_confusion rejects mismatched lengths") {
  CHECK_THROWS_AS(
      evaluation::f1_accuracy_confusion({IonState::bright}, {IonState::bright, IonState::dark}),
      std::invalid_argument);
  CHECK_THROWS_AS(evaluation::f1_accuracy_confusion({}, {}), std::invalid_argument);
}

TEST_CASE("empirical_distribution counts classes") {
  using evaluation::empirical_distribution;
  auto d = empirical_distribution(
      {IonState::bright, IonState::bright, IonState::dark, IonState::dark});
  CHECK(d.p[0] == doctest::Approx(0.5));
  CHECK(d.p[1] == doctest::Approx(0.5));

  auto all_bright = empirical_distribution({IonState::bright, IonState::bright});
  CHECK(all_bright.p[0] == doctest::Approx(1.0));
  CHECK(all_bright.p[1] == doctest::Approx(0.0));

  CHECK_THROWS_AS(empirical_distribution({}), std::invalid_argument);

  auto states = imaging::sample_states(1, 10000, 4);
  std::vector<IonState> flat;
  for (const auto& s : states) flat.push_back(classifiers::from_bit(s[0]));
  auto mc = empirical_distribution(flat);
  CHECK(mc.p[0] == doctest::Approx(0.5).epsilon(0.04));  // +-0.02 absolute
}

TEST_CASE("f1_accuracy_confusion on fixed cases") {
  using evaluation::f1_accuracy_confusion;
  std::vector<IonState> truth = {IonState::bright, IonState::dark, IonState::bright,
                                 IonState::dark};
  auto perfect = f1_accuracy_confusion(truth, truth);
  CHECK(perfect.f1 == doctest::Approx(1.0));
  CHECK(perfect.accuracy == doctest::Approx(1.0));

  std::vector<IonState> flipped;
  for (auto s : truth)
    flipped.push_back(s == IonState::bright ? IonState::dark : IonState::bright);
  auto worst = f1_accuracy_confusion(flipped, truth);
  CHECK(worst.accuracy == doctest::Approx(0.0));
  CHECK(worst.f1 == doctest::Approx(0.0));

  // TP=8, FP=2, FN=1, TN=9
  std::vector<IonState> t2, p2;
  auto push = [&](int n, IonState pv, IonState tv) {
    for (int i = 0; i < n; ++i) {
      p2.push_back(pv);
      t2.push_back(tv);
    }
  };
  push(8, IonState::bright, IonState::bright);
  push(2, IonState::bright, IonState::dark);
  push(1, IonState::dark, IonState::bright);
  push(9, IonState::dark, IonState::dark);
  auto m = f1_accuracy_confusion(p2, t2);
  CHECK(m.confusion.tp == 8);
  CHECK(m.confusion.fp == 2);
  CHECK(m.confusion.fn == 1);
  CHECK(m.confusion.tn == 9);
  CHECK(m.f1 == doctest::Approx(2 * 0.8 * (8.0 / 9.0) / (0.8 + 8.0 / 9.0)));
  CHECK(m.accuracy == doctest::Approx(17.0 / 20.0));
}

TEST_CASE("distribution fidelity can be 1 while per-ion accuracy is 0.5") {
  // balanced errors: predictions swap which ions are bright but keep counts
  std::vector<IonState> truth = {IonState::bright, IonState::dark};
  std::vector<IonState> pred = {IonState::dark, IonState::bright};
  double fid = classical_fidelity(evaluation::empirical_distribution(pred),
                                  evaluation::empirical_distribution(truth));
  auto m = evaluation::f1_accuracy_confusion(pred, truth);
  CHECK(fid == doctest::Approx(1.0));
  CHECK(m.accuracy == doctest::Approx(0.0));
}

TEST_CASE("grid_search is a deterministic argmax with first-wins ties") {
  using evaluation::grid_search;
  std::vector<double> single = {42.0};
  CHECK(grid_search(single, [](double) { return 1.0; }).first == 42.0);

  std::vector<double> grid = {1, 2, 3, 4};
  CHECK(grid_search(grid, [](double g) { return g; }).first == 4.0);       // monotone up
  CHECK(grid_search(grid, [](double g) { return -g; }).first == 1.0);     // monotone down
  CHECK(grid_search(grid, [](double) { return 7.0; }).first == 1.0);      // tie -> first
  CHECK_THROWS_AS(grid_search(std::vector<double>{}, [](double) { return 0.0; }),
                  std::invalid_argument);
}

TEST_CASE("grid_search finds the only separating threshold candidate") {
  // dark maxima below 130, bright above 170: of {100, 153, 200} only 153
  // separates perfectly
  auto gen = rng::engine(5);
  std::uniform_real_distribution<double> dark(40, 129), bright(171, 255);
  std::vector<double> sigma;
  std::vector<IonState> truth;
  for (int i = 0; i < 100; ++i) {
    sigma.push_back(dark(gen));
    truth.push_back(IonState::dark);
    sigma.push_back(bright(gen));
    truth.push_back(IonState::bright);
  }
  std::vector<double> grid = {100.0, 153.0, 200.0};
  auto [best, f1] = evaluation::grid_search(grid, [&](double tau) {
    std::vector<IonState> pred;
    for (double s : sigma) pred.push_back(classifiers::threshold_classify(s, tau));
    return evaluation::f1_accuracy_confusion(pred, truth).f1;
  });
  CHECK(best == 153.0);
  CHECK(f1 == doctest::Approx(1.0));
}

TEST_CASE("bitstring_fidelity over per-frame outcomes") {
  std::vector<std::string> truth = {"00", "01", "01", "11"};
  CHECK(evaluation::bitstring_fidelity(truth, truth) == doctest::Approx(1.0));
  std::vector<std::string> disjoint = {"10", "10", "10", "10"};
  CHECK(evaluation::bitstring_fidelity(disjoint, truth) == doctest::Approx(0.0));
  std::vector<std::string> half = {"00", "01", "10", "10"};
  // overlap: P(00)=Q(00)=1/4 -> 1/4; P(01)=1/4 vs Q(01)=1/2 -> sqrt(1/8)
  CHECK(evaluation::bitstring_fidelity(half, truth) ==
        doctest::Approx(0.25 + std::sqrt(0.125)));
}

TEST_CASE("benchmark runs every method on a small synthetic set") {
  auto ds = tiny_dataset(120, 17);
  evaluation::BenchmarkConfig cfg;
  cfg.qsvm_train_fraction = 0.10;
  cfg.qsvm_max_train = 40;
  cfg.qsvm_solver.metropolis.sweeps = 300;
  cfg.qsvm_solver.restarts = 2;
  std::vector<std::string> methods = {"stats", "conv", "kmeans", "svm", "quant", "qsvm"};
  auto report = evaluation::benchmark(ds, methods, cfg, 23);

  REQUIRE(report.rows.size() == methods.size());
  for (std::size_t i = 0; i < methods.size(); ++i) {
    CHECK(report.rows[i].method == methods[i]);
    CHECK(report.rows[i].fidelity >= 0.98);  // trivially separable synthetic data
    CHECK(report.rows[i].accuracy >= 0.98);
    CHECK(report.rows[i].n_evaluated > 0);
    long total = report.rows[i].confusion.tp + report.rows[i].confusion.fp +
                 report.rows[i].confusion.tn + report.rows[i].confusion.fn;
    CHECK(total == static_cast<long>(report.rows[i].n_evaluated));
  }

  // stats with the fixed default threshold scores the whole sample set
  CHECK(report.rows[0].n_evaluated == ds.frames.size() * 4);
}

TEST_CASE("benchmark rejects unknown methods by name") {
  auto ds = tiny_dataset(20, 3);
  evaluation::BenchmarkConfig cfg;
  CHECK_THROWS_WITH_AS(evaluation::benchmark(ds, {"stats", "foo"}, cfg, 1),
                       doctest::Contains("foo"), std::invalid_argument);
}

TEST_CASE("perfect predictions give fidelity and f1 of exactly 1") {
  auto ds = tiny_dataset(60, 29);
  evaluation::BenchmarkConfig cfg;
  auto report = evaluation::benchmark(ds, {"stats"}, cfg, 31);
  CHECK(report.rows[0].fidelity >= 1.0 - 1e-12);
  CHECK(report.rows[0].f1 == 1.0);
  CHECK(report.rows[0].accuracy == 1.0);
}

TEST_CASE("benchmark calibrates thresholds by F1 when left free") {
  auto ds = tiny_dataset(100, 61);
  evaluation::BenchmarkConfig cfg;
  cfg.tau.reset();
  cfg.epsilon.reset();
  auto report = evaluation::benchmark(ds, {"stats", "quant"}, cfg, 67);
  const std::size_t n = ds.frames.size() * 4;
  for (const auto& r : report.rows) {
    CHECK(r.fidelity >= 1.0 - 1e-9);  // separable data calibrates perfectly
    CHECK(r.n_evaluated < n);         // scored on the calibration holdout
    CHECK(r.n_evaluated >= n - n / 10 - 1);
  }
}

TEST_CASE("benchmark can score against statistics-generated labels") {
  auto ds = tiny_dataset(60, 53);
  // corrupt the manifest truth; the statistics labeler should ignore it
  for (auto& l : ds.labels) l = std::string(4, '1');
  evaluation::BenchmarkConfig cfg;
  cfg.label_source = evaluation::LabelSource::statistics;
  auto report = evaluation::benchmark(ds, {"stats", "kmeans"}, cfg, 57);
  CHECK(report.rows[0].fidelity >= 1.0 - 1e-12);  // stats agrees with its own labels
  CHECK(report.rows[0].accuracy == 1.0);
  CHECK(report.rows[1].fidelity >= 0.98);
}

TEST_CASE("benchmark bitstring fidelity appears for whole-set methods") {
  auto ds = tiny_dataset(60, 41);
  evaluation::BenchmarkConfig cfg;
  cfg.report_bitstring_fidelity = true;
  auto report = evaluation::benchmark(ds, {"stats", "svm"}, cfg, 43);
  REQUIRE(report.rows[0].bitstring_fid.has_value());  // full-set method
  CHECK(*report.rows[0].bitstring_fid == doctest::Approx(1.0));
  CHECK(!report.rows[1].bitstring_fid.has_value());  // split method
}
