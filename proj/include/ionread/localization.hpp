#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ionread/frame.hpp"

namespace ionread::localization {

/// Axial trap model constants. Defaults are SI values for a singly ionized
/// atom; mass and trap frequency have no sensible default and must be set.
struct TrapParameters {
  double ion_mass = 0.0;          // kg
  double trap_frequency = 0.0;    // rad/s, axial
  double ionization_degree = 1.0;
  double vacuum_permittivity = 8.8541878128e-12;  // F/m
  double electron_charge = 1.602176634e-19;       // C

  /// Characteristic chain length (Z^2 e^2 / (4 pi eta0 M nu^2))^(1/3), meters.
  double length_scale() const;
  void validate() const;
};

/// Fitted geometry of the ion chain in image coordinates (pixels).
struct IonChainLayout {
  std::vector<std::array<double, 2>> centers;  // strictly increasing in x
  double slope = 0.0;                          // fitted line y = slope*x + intercept
  double intercept = 0.0;
};

/// Per-ion region of interest. The rect (x0, y0, width, height) is the
/// nominal box clipped to the frame; the nominal center is kept alongside.
struct AnchorBox {
  double center_x = 0.0;
  double center_y = 0.0;
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;
};

/// Equilibrium positions of an n-ion chain in the harmonic + Coulomb axial
/// potential, in units of the trap length scale. Sorted ascending, symmetric
/// about 0; the dimensionless potential gradient at the solution is below
/// `tol` in max-norm.
std::vector<double> equilibrium_positions_dimensionless(int n_ions, double tol = 1e-10,
                                                        int max_iter = 200);

/// Same positions scaled to meters by trap.length_scale().
std::vector<double> equilibrium_positions(int n_ions, const TrapParameters& trap,
                                          double tol = 1e-10, int max_iter = 200);

/// Max-norm of the dimensionless force-balance residual at positions u.
double equilibrium_gradient_norm(const std::vector<double>& u);

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<int> assignments;
  double objective = 0.0;                 // weighted within-cluster sum of squares
  std::vector<double> objective_trace;    // objective after each Lloyd update
  int iterations = 0;
};

/// Lloyd's algorithm with greedy farthest-point seeding, run to an assignment
/// fixpoint and then polished with single-point moves until no reassignment
/// lowers the objective. Ties in point-to-centroid distance go to the lowest
/// centroid index. Deterministic given the seed.
KMeansResult kmeans(const std::vector<std::vector<double>>& points,
                    const std::vector<double>& weights, int k, std::uint64_t seed,
                    int max_iter = 300, double tol = 0.0);

/// Index of the centroid nearest to `point` (lowest index wins ties).
int nearest_centroid(const std::vector<double>& point,
                     const std::vector<std::vector<double>>& centroids);

/// Ordinary least squares of y on x. Throws if all x coincide.
std::pair<double, double> fit_line(const std::vector<std::array<double, 2>>& centers);

/// Locate n_ions ions from a stack of frames: threshold the mean image at the
/// given intensity percentile, cluster the surviving pixel coordinates
/// (intensity-weighted k-means), sort by x and fit the chain line.
IonChainLayout locate_ions(const std::vector<imaging::Frame>& frames, int n_ions,
                           double background_percentile, std::uint64_t seed);

/// One box per ion, centered on the ion's x and the fitted line's y, clipped
/// to the frame. Boxes come back ordered by x.
std::vector<AnchorBox> anchor_boxes(const IonChainLayout& layout, int box_width,
                                    int box_height, int frame_width, int frame_height);

void save_layout(const IonChainLayout& layout, const std::filesystem::path& path);
IonChainLayout load_layout(const std::filesystem::path& path);

}  // namespace ionread::localization
