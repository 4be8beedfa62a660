#include "ionread/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ionread/rng.hpp"
#include "json.hpp"
#include "parallel.hpp"

namespace fs = std::filesystem;

namespace ionread::imaging {

namespace {

// Skips PNM whitespace and '#' comments, then reads one decimal field.
int read_header_int(std::istream& in, const char* field) {
  int c = in.peek();
  while (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') {
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else {
      in.get();
    }
    c = in.peek();
  }
  long value = 0;
  bool any = false;
  while (true) {
    int d = in.peek();
    if (d == EOF || !std::isdigit(static_cast<unsigned char>(d))) break;
    value = value * 10 + (in.get() - '0');
    any = true;
    if (value > 1000000) break;
  }
  if (!any) throw std::runtime_error(std::string("pgm: malformed header field '") + field + "'");
  return static_cast<int>(value);
}

}  // namespace

Frame load_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pgm: cannot open '" + path.string() + "'");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5')
    throw std::runtime_error("pgm: bad magic in '" + path.string() + "' (expected P5)");
  int width = read_header_int(in, "width");
  int height = read_header_int(in, "height");
  int maxval = read_header_int(in, "maxval");
  if (width <= 0) throw std::runtime_error("pgm: invalid width");
  if (height <= 0) throw std::runtime_error("pgm: invalid height");
  if (maxval != 255)
    throw std::runtime_error("pgm: unsupported maxval " + std::to_string(maxval) +
                             " (only 255 is supported)");
  int sep = in.get();
  if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n')
    throw std::runtime_error("pgm: malformed header (missing whitespace after maxval)");
  Frame frame(width, height);
  in.read(reinterpret_cast<char*>(frame.pixels.data()),
          static_cast<std::streamsize>(frame.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(frame.pixels.size()))
    throw std::runtime_error("pgm: truncated pixel data in '" + path.string() + "'");
  return frame;
}

void save_pgm(const Frame& frame, const fs::path& path) {
  if (frame.width <= 0 || frame.height <= 0 ||
      frame.pixels.size() != static_cast<std::size_t>(frame.width) * frame.height)
    throw std::invalid_argument("save_pgm: inconsistent frame dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pgm: cannot write '" + path.string() + "'");
  out << "P5\n" << frame.width << ' ' << frame.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(frame.pixels.data()),
            static_cast<std::streamsize>(frame.pixels.size()));
  if (!out) throw std::runtime_error("pgm: write failed for '" + path.string() + "'");
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest: parse error in '" + path.string() + "': " + e.what());
  }
  DatasetManifest m;
  m.n_ions = doc.at("n_ions").get<int>();
  if (m.n_ions <= 0) throw std::runtime_error("manifest: n_ions must be positive");
  m.name = doc.value("name", std::string{});
  const fs::path base = path.parent_path();
  for (const auto& e : doc.at("entries")) {
    ManifestEntry entry;
    entry.image = e.at("image").get<std::string>();
    if (!fs::exists(base / entry.image))
      throw std::runtime_error("manifest: missing image file '" + (base / entry.image).string() +
                               "'");
    if (e.contains("label") && !e.at("label").is_null()) {
      entry.label = e.at("label").get<std::string>();
      if (static_cast<int>(entry.label->size()) != m.n_ions)
        throw std::runtime_error("manifest: label '" + *entry.label + "' has length " +
                                 std::to_string(entry.label->size()) + ", expected " +
                                 std::to_string(m.n_ions));
      if (entry.label->find_first_not_of("01") != std::string::npos)
        throw std::runtime_error("manifest: label '" + *entry.label +
                                 "' contains symbols outside {0,1}");
    }
    m.entries.push_back(std::move(entry));
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  nlohmann::json doc;
  doc["n_ions"] = manifest.n_ions;
  doc["name"] = manifest.name;
  doc["entries"] = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    nlohmann::json je;
    je["image"] = e.image;
    if (e.label)
      je["label"] = *e.label;
    else
      je["label"] = nullptr;
    doc["entries"].push_back(std::move(je));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("manifest: cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

std::vector<std::string> sample_states(int n_ions, int n_frames, std::uint64_t seed) {
  if (n_ions < 1) throw std::invalid_argument("sample_states: n_ions must be >= 1");
  if (n_frames < 0) throw std::invalid_argument("sample_states: n_frames must be >= 0");
  auto gen = rng::engine(seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::string> states(n_frames);
  for (auto& s : states) {
    s.resize(n_ions);
    for (int i = 0; i < n_ions; ++i) s[i] = coin(gen) ? '1' : '0';
  }
  return states;
}

void SynthParams::validate() const {
  if (n_ions < 1) throw std::invalid_argument("synth: n_ions must be >= 1");
  if (frame_width <= 0 || frame_height <= 0)
    throw std::invalid_argument("synth: frame dimensions must be positive");
  if (!(bright_photon_mean > dark_photon_mean))
    throw std::invalid_argument("synth: bright_photon_mean must exceed dark_photon_mean");
  if (dark_photon_mean < 0) throw std::invalid_argument("synth: dark_photon_mean must be >= 0");
  if (!(psf_sigma > 0)) throw std::invalid_argument("synth: psf_sigma must be > 0");
  if (!(counts_per_photon > 0))
    throw std::invalid_argument("synth: counts_per_photon must be > 0");
  if (background_mean < 0) throw std::invalid_argument("synth: background_mean must be >= 0");
}

localization::IonChainLayout make_layout(const SynthParams& params) {
  params.validate();
  localization::IonChainLayout layout;
  if (const auto* u = std::get_if<UniformSpacing>(&params.spacing)) {
    for (int i = 0; i < params.n_ions; ++i)
      layout.centers.push_back({u->start_x + i * u->spacing, u->row_y});
    layout.intercept = u->row_y;
  } else {
    const auto& eq = std::get<EquilibriumSpacing>(params.spacing);
    std::vector<double> pos = localization::equilibrium_positions_dimensionless(params.n_ions);
    double span = pos.back() - pos.front();
    double scale = span > 0 ? (params.frame_width - 2 * eq.margin) / span : 0.0;
    for (double p : pos)
      layout.centers.push_back({eq.margin + (p - pos.front()) * scale, eq.row_y});
    layout.intercept = eq.row_y;
  }
  layout.slope = 0.0;
  for (const auto& c : layout.centers)
    if (c[0] < 0 || c[0] >= params.frame_width || c[1] < 0 || c[1] >= params.frame_height)
      throw std::invalid_argument("synth: ion center outside the frame");
  return layout;
}

Frame synth_frame(const SynthParams& params, const localization::IonChainLayout& layout,
                  const std::string& states, std::uint64_t frame_seed) {
  params.validate();
  if (layout.centers.size() != states.size())
    throw std::invalid_argument("synth_frame: layout has " +
                                std::to_string(layout.centers.size()) + " centers but " +
                                std::to_string(states.size()) + " states were given");
  for (char c : states)
    if (c != '0' && c != '1')
      throw std::invalid_argument("synth_frame: state string must be over {0,1}");

  const int w = params.frame_width;
  const int h = params.frame_height;
  for (const auto& c : layout.centers)
    if (c[0] < 0 || c[0] >= w || c[1] < 0 || c[1] >= h)
      throw std::invalid_argument("synth_frame: ion center outside the frame");

  auto gen = rng::engine(frame_seed);
  std::normal_distribution<double> psf(0.0, params.psf_sigma);
  std::vector<double> acc(static_cast<std::size_t>(w) * h, 0.0);

  for (std::size_t i = 0; i < layout.centers.size(); ++i) {
    double mean = states[i] == '0' ? params.bright_photon_mean : params.dark_photon_mean;
    int photons = 0;
    if (mean > 0) {
      std::poisson_distribution<int> dist(mean);
      photons = dist(gen);
    }
    const double cx = layout.centers[i][0];
    const double cy = layout.centers[i][1];
    for (int p = 0; p < photons; ++p) {
      int px = static_cast<int>(std::lround(cx + psf(gen)));
      int py = static_cast<int>(std::lround(cy + psf(gen)));
      if (px >= 0 && px < w && py >= 0 && py < h)
        acc[static_cast<std::size_t>(py) * w + px] += params.counts_per_photon;
    }
  }

  if (params.background_mean > 0) {
    std::poisson_distribution<int> bg(params.background_mean);
    for (auto& v : acc) v += bg(gen);
  }

  Frame frame(w, h);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    long v = std::lround(acc[i]);
    frame.pixels[i] = static_cast<std::uint8_t>(std::clamp<long>(v, 0, 255));
  }
  return frame;
}

std::vector<Frame> synth_frames(const SynthParams& params,
                                const localization::IonChainLayout& layout,
                                const std::vector<std::string>& states, std::uint64_t seed,
                                int threads) {
  std::vector<Frame> frames(states.size());
  detail::parallel_for(states.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      frames[i] = synth_frame(params, layout, states[i], rng::substream(seed, i + 1));
  });
  return frames;
}

DatasetManifest synth_dataset(const SynthParams& params, int n_frames, const fs::path& out_dir,
                              std::uint64_t seed, const std::optional<std::string>& forced_label,
                              const std::string& name, int threads) {
  params.validate();
  if (n_frames < 0) throw std::invalid_argument("synth_dataset: n_frames must be >= 0");
  if (forced_label) {
    if (static_cast<int>(forced_label->size()) != params.n_ions)
      throw std::invalid_argument("synth_dataset: forced label length != n_ions");
    if (forced_label->find_first_not_of("01") != std::string::npos)
      throw std::invalid_argument("synth_dataset: forced label must be over {0,1}");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir))
    throw std::runtime_error("synth_dataset: cannot create output directory '" +
                             out_dir.string() + "'");

  localization::IonChainLayout layout = make_layout(params);
  std::vector<std::string> states =
      forced_label ? std::vector<std::string>(n_frames, *forced_label)
                   : sample_states(params.n_ions, n_frames, rng::substream(seed, 0));

  DatasetManifest manifest;
  manifest.n_ions = params.n_ions;
  manifest.name = name;
  manifest.entries.resize(n_frames);
  for (int i = 0; i < n_frames; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%05d.pgm", i);
    manifest.entries[i] = ManifestEntry{buf, states[i]};
  }

  detail::parallel_for(static_cast<std::size_t>(n_frames), threads,
                       [&](std::size_t begin, std::size_t end) {
                         for (std::size_t i = begin; i < end; ++i) {
                           Frame f = synth_frame(params, layout, states[i],
                                                 rng::substream(seed, i + 1));
                           save_pgm(f, out_dir / manifest.entries[i].image);
                         }
                       });

  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

std::vector<Frame> load_frames(const DatasetManifest& manifest, const fs::path& manifest_path) {
  const fs::path base = manifest_path.parent_path();
  std::vector<Frame> frames;
  frames.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) frames.push_back(load_pgm(base / e.image));
  return frames;
}

}  // namespace ionread::imaging
