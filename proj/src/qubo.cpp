#include "ionread/qubo.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ionread/rng.hpp"

namespace ionread::qubo {

namespace {

std::size_t upper_index(int i, int j, int n) {
  // strictly upper triangle, row-major: (i, j) with i < j
  return static_cast<std::size_t>(i) * n - static_cast<std::size_t>(i) * (i + 1) / 2 +
         (j - i - 1);
}

std::size_t lower_index(int i, int j) {
  // lower triangle incl. diagonal: (i, j) with j <= i
  return static_cast<std::size_t>(i) * (i + 1) / 2 + j;
}

}  // namespace

IsingModel::IsingModel(int n_spins)
    : n(n_spins),
      h(static_cast<std::size_t>(n_spins), 0.0),
      couplings(static_cast<std::size_t>(n_spins) * (n_spins > 0 ? n_spins - 1 : 0) / 2, 0.0) {
  if (n_spins < 0) throw std::invalid_argument("IsingModel: negative size");
}

double& IsingModel::coupling(int i, int j) {
  if (i > j) std::swap(i, j);
  if (i == j || i < 0 || j >= n) throw std::out_of_range("IsingModel::coupling: bad index");
  return couplings[upper_index(i, j, n)];
}

double IsingModel::coupling(int i, int j) const {
  if (i > j) std::swap(i, j);
  if (i == j || i < 0 || j >= n) throw std::out_of_range("IsingModel::coupling: bad index");
  return couplings[upper_index(i, j, n)];
}

double IsingModel::energy(const std::vector<int>& spins) const {
  if (static_cast<int>(spins.size()) != n)
    throw std::invalid_argument("IsingModel::energy: spin count mismatch");
  double e = 0.0;
  for (int i = 0; i < n; ++i) e -= h[i] * spins[i];
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) e -= coupling(i, j) * spins[i] * spins[j];
  return e;
}

QuboProblem::QuboProblem(int n_vars)
    : n(n_vars), coeff(static_cast<std::size_t>(n_vars) * (n_vars + 1) / 2, 0.0) {
  if (n_vars < 0) throw std::invalid_argument("QuboProblem: negative size");
}

double& QuboProblem::q(int i, int j) {
  if (j > i || j < 0 || i >= n) throw std::out_of_range("QuboProblem::q: need j <= i < n");
  return coeff[lower_index(i, j)];
}

double QuboProblem::q(int i, int j) const {
  if (j > i || j < 0 || i >= n) throw std::out_of_range("QuboProblem::q: need j <= i < n");
  return coeff[lower_index(i, j)];
}

QuboProblem ising_to_qubo(const IsingModel& model) {
  QuboProblem q(model.n);
  double c = 0.0;
  for (int i = 0; i < model.n; ++i) {
    q.q(i, i) = -2.0 * model.h[i];
    c += model.h[i];
  }
  for (int i = 0; i < model.n; ++i)
    for (int j = i + 1; j < model.n; ++j) {
      double jij = model.coupling(i, j);
      if (jij == 0.0) continue;
      q.q(j, i) += -4.0 * jij;
      q.q(i, i) += 2.0 * jij;
      q.q(j, j) += 2.0 * jij;
      c -= jij;
    }
  q.offset = c;
  return q;
}

std::pair<IsingModel, double> qubo_to_ising(const QuboProblem& q) {
  IsingModel m(q.n);
  double offset = q.offset;
  for (int i = 0; i < q.n; ++i) {
    m.h[i] = -0.5 * q.q(i, i);
    offset += 0.5 * q.q(i, i);
  }
  for (int i = 0; i < q.n; ++i)
    for (int j = 0; j < i; ++j) {
      double qij = q.q(i, j);
      if (qij == 0.0) continue;
      m.coupling(j, i) = -0.25 * qij;
      m.h[i] -= 0.25 * qij;
      m.h[j] -= 0.25 * qij;
      offset += 0.25 * qij;
    }
  return {std::move(m), offset};
}

double qubo_value(const QuboProblem& q, const std::vector<std::uint8_t>& x) {
  if (static_cast<int>(x.size()) != q.n)
    throw std::invalid_argument("qubo_value: assignment length mismatch");
  double v = q.offset;
  for (int i = 0; i < q.n; ++i) {
    if (!x[i]) continue;
    for (int j = 0; j <= i; ++j)
      if (x[j]) v += q.coeff[lower_index(i, j)];
  }
  return v;
}

namespace {

// Local fields f_i = Q_ii + sum_{j != i} Q(i,j) x_j: the value change of
// setting x_i from 0 to 1 given the rest of x.
std::vector<double> local_fields(const QuboProblem& q, const std::vector<std::uint8_t>& x) {
  std::vector<double> f(q.n);
  for (int i = 0; i < q.n; ++i) {
    double s = q.q(i, i);
    for (int j = 0; j < i; ++j)
      if (x[j]) s += q.q(i, j);
    for (int j = i + 1; j < q.n; ++j)
      if (x[j]) s += q.q(j, i);
    f[i] = s;
  }
  return f;
}

void apply_flip(const QuboProblem& q, std::vector<std::uint8_t>& x, std::vector<double>& f,
                int bit) {
  double sign = x[bit] ? -1.0 : 1.0;
  x[bit] ^= 1;
  for (int j = 0; j < bit; ++j) f[j] += sign * q.q(bit, j);
  for (int j = bit + 1; j < q.n; ++j) f[j] += sign * q.q(j, bit);
}

}  // namespace

Solution solve_exhaustive(const QuboProblem& q) {
  if (q.n < 1) throw std::invalid_argument("solve_exhaustive: empty problem");
  if (q.n > 24) throw std::invalid_argument("solve_exhaustive: n > 24 is not enumerable");

  const std::uint64_t total = 1ULL << q.n;

  // Pass 1: Gray-code sweep with incremental deltas to bracket the maximum.
  std::vector<std::uint8_t> x(q.n, 0);
  std::vector<double> f = local_fields(q, x);
  double value = q.offset;
  double approx_best = value;
  for (std::uint64_t code = 1; code < total; ++code) {
    int bit = __builtin_ctzll(code);
    value += x[bit] ? -f[bit] : f[bit];
    apply_flip(q, x, f, bit);
    approx_best = std::max(approx_best, value);
  }

  // Pass 2: exact re-evaluation of every near-maximal state; ties resolve to
  // the lexicographically smallest bitstring.
  const double tol = 1e-9 * (1.0 + std::abs(approx_best));
  std::fill(x.begin(), x.end(), 0);
  f = local_fields(q, x);
  value = q.offset;
  Solution best;
  bool have_best = false;
  auto consider = [&](const std::vector<std::uint8_t>& cand) {
    double exact = qubo_value(q, cand);
    if (!have_best || exact > best.value ||
        (exact == best.value &&
         std::lexicographical_compare(cand.begin(), cand.end(), best.x.begin(),
                                      best.x.end()))) {
      best.x = cand;
      best.value = exact;
      have_best = true;
    }
  };
  if (value >= approx_best - tol) consider(x);
  for (std::uint64_t code = 1; code < total; ++code) {
    int bit = __builtin_ctzll(code);
    value += x[bit] ? -f[bit] : f[bit];
    apply_flip(q, x, f, bit);
    if (value >= approx_best - tol) consider(x);
  }
  return best;
}

Solution solve_sim_anneal(const QuboProblem& q, const MetropolisSchedule& schedule,
                          int n_restarts, std::uint64_t seed,
                          const std::optional<std::vector<std::uint8_t>>& initial) {
  if (q.n < 1) throw std::invalid_argument("solve_sim_anneal: empty problem");
  if (schedule.sweeps < 1) throw std::invalid_argument("solve_sim_anneal: sweeps must be >= 1");
  if (!(schedule.temp_start >= schedule.temp_end) || !(schedule.temp_end > 0))
    throw std::invalid_argument("solve_sim_anneal: need temp_start >= temp_end > 0");
  if (n_restarts < 1) throw std::invalid_argument("solve_sim_anneal: restarts must be >= 1");
  if (initial && static_cast<int>(initial->size()) != q.n)
    throw std::invalid_argument("solve_sim_anneal: initial state length mismatch");

  const double cool =
      schedule.sweeps > 1
          ? std::pow(schedule.temp_end / schedule.temp_start, 1.0 / (schedule.sweeps - 1))
          : 1.0;

  Solution best;
  bool have_best = false;
  for (int restart = 0; restart < n_restarts; ++restart) {
    auto gen = rng::engine(rng::substream(seed, restart));
    std::uniform_int_distribution<int> pick(0, q.n - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<std::uint8_t> x(q.n);
    if (initial)
      x = *initial;
    else
      for (auto& b : x) b = static_cast<std::uint8_t>(gen() & 1);
    std::vector<double> f = local_fields(q, x);
    double value = qubo_value(q, x);
    std::vector<std::uint8_t> run_best_x = x;
    double run_best = value;

    double temp = schedule.temp_start;
    for (int sweep = 0; sweep < schedule.sweeps; ++sweep) {
      for (int step = 0; step < q.n; ++step) {
        int bit = pick(gen);
        double delta = x[bit] ? -f[bit] : f[bit];
        if (delta >= 0 || unit(gen) < std::exp(delta / temp)) {
          value += delta;
          apply_flip(q, x, f, bit);
          if (value > run_best) {
            run_best = value;
            run_best_x = x;
          }
        }
      }
      temp *= cool;
    }
    double exact = qubo_value(q, run_best_x);
    if (!have_best || exact > best.value) {
      best.x = std::move(run_best_x);
      best.value = exact;
      have_best = true;
    }
  }
  return best;
}

Solution solve_mean_field(const QuboProblem& q, const MeanFieldSchedule& schedule,
                          std::uint64_t seed) {
  if (q.n < 1) throw std::invalid_argument("solve_mean_field: empty problem");
  if (schedule.steps < 1) throw std::invalid_argument("solve_mean_field: steps must be >= 1");
  if (!(schedule.step_size > 0))
    throw std::invalid_argument("solve_mean_field: step_size must be > 0");

  auto [ising, offset] = qubo_to_ising(q);
  (void)offset;
  auto gen = rng::engine(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<double> a(q.n, 0.0);
  std::vector<double> grad(q.n);
  for (int step = 0; step < schedule.steps; ++step) {
    double t = schedule.steps > 1 ? static_cast<double>(step) / (schedule.steps - 1) : 1.0;
    double pump = schedule.pump_start + (schedule.pump_end - schedule.pump_start) * t;
    double sigma = schedule.noise_sigma * (1.0 - t);  // noise anneals away
    // Ascent direction of the Ising objective E(s) = -h.s - s.J.s at s = a.
    for (int i = 0; i < q.n; ++i) {
      double g = -ising.h[i];
      for (int j = 0; j < q.n; ++j)
        if (j != i) g -= ising.coupling(i, j) * a[j];
      grad[i] = g;
    }
    for (int i = 0; i < q.n; ++i) {
      a[i] += schedule.step_size * (pump * a[i] + grad[i]);
      if (sigma > 0) a[i] += sigma * noise(gen);
      a[i] = std::clamp(a[i], -1.0, 1.0);
    }
  }

  Solution sol;
  sol.x.resize(q.n);
  for (int i = 0; i < q.n; ++i) sol.x[i] = a[i] > 0 ? 1 : 0;
  sol.value = qubo_value(q, sol.x);
  return sol;
}

namespace {

// Diagonal of H_P in the computational basis; bit i of the index selects
// spin i, with bit value 0 meaning s_i = +1 (sigma^z |0> = +|0>).
std::vector<double> problem_diagonal(const IsingModel& m) {
  const std::size_t dim = 1ULL << m.n;
  std::vector<double> diag(dim);
  std::vector<int> spins(m.n);
  for (std::size_t z = 0; z < dim; ++z) {
    for (int i = 0; i < m.n; ++i) spins[i] = (z >> i) & 1 ? -1 : 1;
    diag[z] = m.energy(spins);
  }
  return diag;
}

}  // namespace

double anneal_exact_small(const IsingModel& model, double total_time, double dt,
                          double* norm_drift) {
  if (model.n < 1) throw std::invalid_argument("anneal_exact_small: empty model");
  if (model.n > 10)
    throw std::invalid_argument("anneal_exact_small: n > 10 exceeds the dense simulator");
  if (total_time < 0) throw std::invalid_argument("anneal_exact_small: negative total_time");
  if (!(dt > 0)) throw std::invalid_argument("anneal_exact_small: dt must be > 0");

  const std::size_t dim = 1ULL << model.n;
  const std::vector<double> diag = problem_diagonal(model);

  double ground = *std::min_element(diag.begin(), diag.end());
  const double gtol = 1e-9 * (1.0 + std::abs(ground));
  auto in_ground_manifold = [&](std::size_t z) { return diag[z] <= ground + gtol; };

  using Cx = std::complex<double>;
  std::vector<Cx> psi(dim, Cx(1.0 / std::sqrt(static_cast<double>(dim)), 0.0));

  if (total_time == 0) {
    if (norm_drift) *norm_drift = 0.0;
    double p = 0.0;
    for (std::size_t z = 0; z < dim; ++z)
      if (in_ground_manifold(z)) p += std::norm(psi[z]);
    return p;
  }

  const int steps = std::max(1, static_cast<int>(std::ceil(total_time / dt)));
  const double h = total_time / steps;

  // H(t) psi = -(1-t/T) sum_i psi[z ^ (1<<i)] + (t/T) diag[z] psi[z]
  auto apply_h = [&](double t, const std::vector<Cx>& in, std::vector<Cx>& out) {
    const double a = 1.0 - t / total_time;
    const double b = t / total_time;
    for (std::size_t z = 0; z < dim; ++z) {
      Cx flip(0.0, 0.0);
      for (int i = 0; i < model.n; ++i) flip += in[z ^ (1ULL << i)];
      out[z] = -a * flip + b * diag[z] * in[z];
    }
  };

  std::vector<Cx> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
  const Cx mi(0.0, -1.0);
  for (int s = 0; s < steps; ++s) {
    const double t = s * h;
    apply_h(t, psi, k1);
    for (std::size_t z = 0; z < dim; ++z) tmp[z] = psi[z] + mi * (0.5 * h) * k1[z];
    apply_h(t + 0.5 * h, tmp, k2);
    for (std::size_t z = 0; z < dim; ++z) tmp[z] = psi[z] + mi * (0.5 * h) * k2[z];
    apply_h(t + 0.5 * h, tmp, k3);
    for (std::size_t z = 0; z < dim; ++z) tmp[z] = psi[z] + mi * h * k3[z];
    apply_h(t + h, tmp, k4);
    for (std::size_t z = 0; z < dim; ++z)
      psi[z] += mi * (h / 6.0) * (k1[z] + 2.0 * k2[z] + 2.0 * k3[z] + k4[z]);
  }

  double norm2 = 0.0;
  for (const Cx& c : psi) norm2 += std::norm(c);
  const double drift = std::abs(std::sqrt(norm2) - 1.0);
  if (norm_drift) *norm_drift = drift;
  if (drift > 1e-4)
    throw std::runtime_error("anneal_exact_small: dt too coarse, norm drift " +
                             std::to_string(drift));

  double p = 0.0;
  for (std::size_t z = 0; z < dim; ++z)
    if (in_ground_manifold(z)) p += std::norm(psi[z]);
  return p / norm2;
}

Solution solve(const QuboProblem& q, const SolverSpec& spec) {
  switch (spec.kind) {
    case SolverSpec::Kind::exhaustive:
      return solve_exhaustive(q);
    case SolverSpec::Kind::sim_anneal:
      return solve_sim_anneal(q, spec.metropolis, spec.restarts, spec.seed);
    case SolverSpec::Kind::mean_field:
      return solve_mean_field(q, spec.mean_field, spec.seed);
  }
  throw std::logic_error("solve: unknown solver kind");
}

void save_qubo(const QuboProblem& q, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("qubo: cannot write '" + path.string() + "'");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", q.offset);
  out << q.n << ' ' << buf << " max\n";
  for (int i = 0; i < q.n; ++i)
    for (int j = 0; j <= i; ++j) {
      double v = q.q(i, j);
      if (v == 0.0) continue;
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << i << ' ' << j << ' ' << buf << '\n';
    }
}

QuboProblem load_qubo(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("qubo: cannot open '" + path.string() + "'");
  int n = 0;
  double offset = 0.0;
  std::string sense;
  if (!(in >> n >> offset >> sense))
    throw std::runtime_error("qubo: malformed header (expected 'n C sense')");
  if (sense != "max")
    throw std::runtime_error("qubo: unsupported sense '" + sense + "' (only max)");
  if (n < 0) throw std::runtime_error("qubo: negative size");
  QuboProblem q(n);
  q.offset = offset;
  int i, j;
  double v;
  while (in >> i >> j >> v) {
    if (j > i || j < 0 || i >= n)
      throw std::runtime_error("qubo: entry (" + std::to_string(i) + "," + std::to_string(j) +
                               ") outside the lower triangle");
    q.q(i, j) = v;
  }
  if (!in.eof() && in.fail()) throw std::runtime_error("qubo: malformed coefficient line");
  return q;
}

}  // namespace ionread::qubo
