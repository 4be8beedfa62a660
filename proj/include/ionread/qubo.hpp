#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace ionread::qubo {

/// Spin model E(s) = -sum_i h_i s_i - sum_{i<j} J_ij s_i s_j over s in {-1,+1}^n.
/// Couplings are stored strictly upper-triangular (i < j).
struct IsingModel {
  int n = 0;
  std::vector<double> h;
  std::vector<double> couplings;  // packed strictly upper triangle

  explicit IsingModel(int n_spins = 0);
  double& coupling(int i, int j);
  double coupling(int i, int j) const;
  double energy(const std::vector<int>& spins) const;
};

/// Maximization objective value(x) = sum_{j<=i} Q_ij x_i x_j + C over bits x.
/// Coefficients are stored as a packed lower triangle (j <= i).
struct QuboProblem {
  int n = 0;
  double offset = 0.0;
  std::vector<double> coeff;  // packed lower triangle incl. the diagonal

  explicit QuboProblem(int n_vars = 0);
  double& q(int i, int j);
  double q(int i, int j) const;
};

/// Substitutes s_i = 2 x_i - 1 and collects terms so that for every x,
/// value(x) of the result equals model.energy(s(x)) exactly.
QuboProblem ising_to_qubo(const IsingModel& model);

/// Inverse transform. For every x: value(q, x) == result.energy(s(x)) + offset.
std::pair<IsingModel, double> qubo_to_ising(const QuboProblem& q);

double qubo_value(const QuboProblem& q, const std::vector<std::uint8_t>& x);

struct Solution {
  std::vector<std::uint8_t> x;
  double value = 0.0;
};

/// Global maximum by enumeration (n <= 24). Ties resolve to the
/// lexicographically smallest bitstring (x_1 first).
Solution solve_exhaustive(const QuboProblem& q);

struct MetropolisSchedule {
  double temp_start = 10.0;
  double temp_end = 0.01;
  int sweeps = 2000;  // one sweep = n single-bit proposals
};

struct MeanFieldSchedule {
  double pump_start = -1.0;  // negative start keeps amplitudes suppressed early
  double pump_end = 1.0;
  double step_size = 0.05;
  int steps = 3000;
  double noise_sigma = 0.05;
};

/// Best-of-restarts single-bit-flip Metropolis search with geometric cooling,
/// maximizing the objective. Deterministic given the seed; each restart uses
/// its own RNG substream. `initial` pins the start state of every restart
/// (random starts otherwise).
Solution solve_sim_anneal(const QuboProblem& q, const MetropolisSchedule& schedule,
                          int n_restarts, std::uint64_t seed,
                          const std::optional<std::vector<std::uint8_t>>& initial = std::nullopt);

/// Mean-field search: continuous amplitudes in [-1,1]^n follow gradient
/// ascent on the Ising form of the objective under a linearly ramped pump
/// term plus decaying seeded noise; bits are read from the amplitude signs.
Solution solve_mean_field(const QuboProblem& q, const MeanFieldSchedule& schedule,
                          std::uint64_t seed);

/// Dense Schrodinger integration of H(t) = (1-t/T) H0 + (t/T) H_P with
/// H0 = -sum_i sigma^x_i, starting from the uniform superposition. Returns
/// the probability of the H_P ground-state manifold at t = T. Fixed-step RK4;
/// throws if n > 10 or the state norm drifts beyond 1e-4. `norm_drift`, when
/// given, receives |norm - 1| of the final state.
double anneal_exact_small(const IsingModel& model, double total_time, double dt = 0.01,
                          double* norm_drift = nullptr);

/// Configurable solver handle for callers that take the method as data.
struct SolverSpec {
  enum class Kind { exhaustive, sim_anneal, mean_field };
  Kind kind = Kind::exhaustive;
  MetropolisSchedule metropolis;
  int restarts = 8;
  MeanFieldSchedule mean_field;
  std::uint64_t seed = 0;
};

Solution solve(const QuboProblem& q, const SolverSpec& spec);

/// Text format: header "n C max", then one "i j value" triple per packed
/// coefficient with j <= i (0-based).
void save_qubo(const QuboProblem& q, const std::filesystem::path& path);
QuboProblem load_qubo(const std::filesystem::path& path);

}  // namespace ionread::qubo
