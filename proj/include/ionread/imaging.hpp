#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ionread/frame.hpp"
#include "ionread/localization.hpp"

namespace ionread::imaging {

struct ManifestEntry {
  std::string image;                 // path relative to the manifest file
  std::optional<std::string> label;  // bitstring, '0' = bright, '1' = dark
};

struct DatasetManifest {
  int n_ions = 10;
  std::string name;
  std::vector<ManifestEntry> entries;
};

/// Binary PGM (P5) reader, maxval 255 only. Header comments are accepted.
Frame load_pgm(const std::filesystem::path& path);

/// Canonical P5 writer: "P5\n<w> <h>\n255\n" followed by the raw raster.
/// load_pgm inverts it exactly.
void save_pgm(const Frame& frame, const std::filesystem::path& path);

/// Reads a dataset manifest and validates it: labels (when present) must be
/// n_ions characters of {0,1} and every referenced image must exist.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// One label bitstring per frame; every bit is an independent fair coin flip,
/// the state distribution a Hadamard-prepared register would give.
std::vector<std::string> sample_states(int n_ions, int n_frames, std::uint64_t seed);

/// Evenly spaced chain along a fixed camera row.
struct UniformSpacing {
  double start_x = 15.0;
  double spacing = 18.0;
  double row_y = 16.0;
};

/// Chain spaced like the physical equilibrium positions, scaled to fill the
/// frame width minus the margins.
struct EquilibriumSpacing {
  localization::TrapParameters trap;
  double margin = 15.0;
  double row_y = 16.0;
};

struct SynthParams {
  int n_ions = 10;
  int frame_width = 200;
  int frame_height = 32;
  double bright_photon_mean = 1500.0;  // photons per bright ion per exposure
  double dark_photon_mean = 4.0;
  double background_mean = 0.5;        // counts per pixel
  double psf_sigma = 1.2;              // pixels
  double counts_per_photon = 2.0;
  std::variant<UniformSpacing, EquilibriumSpacing> spacing = UniformSpacing{};

  void validate() const;
};

/// Ion centers implied by the spacing model, as a layout with a fitted
/// (here exact) chain line.
localization::IonChainLayout make_layout(const SynthParams& params);

/// Renders one frame: each ion emits Poisson-many photons (bright or dark
/// mean according to its state bit), each photon lands on the pixel nearest a
/// Gaussian(psf_sigma) offset from the ion center and deposits
/// counts_per_photon; every pixel then gains Poisson(background_mean) counts.
/// Intensities are clipped to [0, 255]. Deterministic given frame_seed.
Frame synth_frame(const SynthParams& params, const localization::IonChainLayout& layout,
                  const std::string& states, std::uint64_t frame_seed);

/// Frames for a list of per-frame state strings. Frame i uses RNG substream i
/// of `seed`, so results do not depend on generation order.
std::vector<Frame> synth_frames(const SynthParams& params,
                                const localization::IonChainLayout& layout,
                                const std::vector<std::string>& states, std::uint64_t seed,
                                int threads = 0);

/// Writes n_frames PGMs plus a manifest with ground-truth labels into out_dir.
/// `forced_label`, when set, replaces Hadamard sampling (e.g. an all-bright
/// reference set). Fully reproducible from seed.
DatasetManifest synth_dataset(const SynthParams& params, int n_frames,
                              const std::filesystem::path& out_dir, std::uint64_t seed,
                              const std::optional<std::string>& forced_label = std::nullopt,
                              const std::string& name = "", int threads = 0);

/// Loads every frame referenced by a manifest (paths resolved relative to the
/// manifest's directory).
std::vector<Frame> load_frames(const DatasetManifest& manifest,
                               const std::filesystem::path& manifest_path);

}  // namespace ionread::imaging
