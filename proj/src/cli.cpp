#include "ionread/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>

#include "CLI11.hpp"
#include "ionread/evaluation.hpp"
#include "ionread/rng.hpp"

namespace fs = std::filesystem;

namespace ionread::cli {

namespace {

fs::path resolve_manifest(const std::string& dataset) {
  fs::path p(dataset);
  if (fs::is_directory(p)) p /= "manifest.json";
  if (!fs::exists(p))
    throw std::runtime_error("dataset: no manifest at '" + p.string() + "'");
  return p;
}

evaluation::LabeledDataset load_dataset(const std::string& dataset, bool require_labels) {
  fs::path manifest_path = resolve_manifest(dataset);
  imaging::DatasetManifest manifest = imaging::load_manifest(manifest_path);
  evaluation::LabeledDataset ds;
  ds.n_ions = manifest.n_ions;
  ds.frames = imaging::load_frames(manifest, manifest_path);
  for (const auto& e : manifest.entries) {
    if (e.label)
      ds.labels.push_back(*e.label);
    else if (require_labels)
      throw std::runtime_error("dataset: entry '" + e.image + "' has no label");
    else
      ds.labels.push_back(std::string(manifest.n_ions, '0'));
  }
  return ds;
}

localization::IonChainLayout layout_for(const evaluation::LabeledDataset& ds,
                                        const std::string& layout_file, double percentile,
                                        const std::optional<std::uint64_t>& seed) {
  if (!layout_file.empty()) return localization::load_layout(layout_file);
  if (!seed) throw std::runtime_error("locating ions is seeded; pass --seed or --layout");
  return localization::locate_ions(ds.frames, ds.n_ions, percentile, *seed);
}

struct SynthArgs {
  std::string preset = "h1";
  int frames = -1;
  int n_ions = 10;
  std::uint64_t seed = 0;
  std::string out;
  std::string name;
  imaging::SynthParams params;
  std::string spacing = "uniform";
  int threads = 0;
};

struct SolverArgs {
  std::string method = "exhaustive";
  qubo::MetropolisSchedule metropolis;
  int restarts = 8;
  qubo::MeanFieldSchedule mean_field;

  qubo::SolverSpec spec(const std::optional<std::uint64_t>& seed) const {
    qubo::SolverSpec s;
    if (method == "exhaustive") {
      s.kind = qubo::SolverSpec::Kind::exhaustive;
      return s;
    }
    if (!seed) throw std::runtime_error("solver '" + method + "' is stochastic; pass --seed");
    s.seed = *seed;
    if (method == "anneal") {
      s.kind = qubo::SolverSpec::Kind::sim_anneal;
      s.metropolis = metropolis;
      s.restarts = restarts;
    } else if (method == "meanfield") {
      s.kind = qubo::SolverSpec::Kind::mean_field;
      s.mean_field = mean_field;
    } else {
      throw std::runtime_error("unknown solver '" + method + "'");
    }
    return s;
  }
};

void add_solver_flags(CLI::App* cmd, SolverArgs& args) {
  cmd->add_option("--solver", args.method, "QUBO solver: exhaustive, anneal or meanfield")
      ->check(CLI::IsMember({"exhaustive", "anneal", "meanfield"}));
  cmd->add_option("--sweeps", args.metropolis.sweeps, "Annealing sweeps");
  cmd->add_option("--restarts", args.restarts, "Annealing restarts");
  cmd->add_option("--temp-start", args.metropolis.temp_start, "Annealing start temperature");
  cmd->add_option("--temp-end", args.metropolis.temp_end, "Annealing end temperature");
  cmd->add_option("--mf-steps", args.mean_field.steps, "Mean-field steps");
  cmd->add_option("--mf-step-size", args.mean_field.step_size, "Mean-field step size");
  cmd->add_option("--mf-noise", args.mean_field.noise_sigma, "Mean-field noise sigma");
}

std::string state_csv_line(std::size_t frame, int ion, const std::string& method, char bit) {
  return std::to_string(frame) + "," + std::to_string(ion) + "," + method + "," + bit + "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trapped-ion state readout from camera frames"};
  app.name("ionread");
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from an INI-style config file");

  // ---- synth ----
  SynthArgs synth;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "Generate a synthetic labeled dataset of chain images");
  synth_cmd->add_option("--preset", synth.preset,
                        "Dataset shape: h1 (Hadamard labels, 10000 frames), allbright "
                        "(900 frames, all ions bright), or none")
      ->check(CLI::IsMember({"h1", "allbright", "none"}));
  synth_cmd->add_option("--frames", synth.frames, "Frame count (overrides the preset)");
  synth_cmd->add_option("--n-ions", synth.n_ions, "Ions per chain");
  synth_cmd->add_option("--seed", synth.seed, "Master RNG seed")->required();
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--name", synth.name, "Dataset name stored in the manifest");
  synth_cmd->add_option("--bright-mean", synth.params.bright_photon_mean,
                        "Mean photons per bright ion");
  synth_cmd->add_option("--dark-mean", synth.params.dark_photon_mean,
                        "Mean photons per dark ion");
  synth_cmd->add_option("--background-mean", synth.params.background_mean,
                        "Mean background counts per pixel");
  synth_cmd->add_option("--psf-sigma", synth.params.psf_sigma, "Point-spread sigma in pixels");
  synth_cmd->add_option("--counts-per-photon", synth.params.counts_per_photon,
                        "Intensity per detected photon");
  synth_cmd->add_option("--width", synth.params.frame_width, "Frame width in pixels");
  synth_cmd->add_option("--height", synth.params.frame_height, "Frame height in pixels");
  synth_cmd->add_option("--spacing", synth.spacing, "Chain spacing model")
      ->check(CLI::IsMember({"uniform", "equilibrium"}));
  synth_cmd->add_option("--threads", synth.threads, "Worker threads (0 = all cores)");

  // ---- locate ----
  std::string loc_dataset, loc_out = "layout.json";
  double loc_percentile = 90.0;
  std::uint64_t loc_seed = 0;
  CLI::App* locate_cmd =
      app.add_subcommand("locate", "Fit the ion chain layout from a dataset's frames");
  locate_cmd->add_option("--dataset", loc_dataset, "Dataset directory or manifest path")
      ->required();
  locate_cmd->add_option("--seed", loc_seed, "Clustering seed")->required();
  locate_cmd->add_option("--percentile", loc_percentile, "Background intensity percentile");
  locate_cmd->add_option("--out", loc_out, "Layout JSON output path");

  // ---- features ----
  std::string feat_dataset, feat_layout, feat_out = "features.csv";
  int feat_bw = 16, feat_bh = 16;
  double feat_percentile = 90.0;
  std::optional<std::uint64_t> feat_seed;
  CLI::App* features_cmd =
      app.add_subcommand("features", "Extract the per-ion feature table from a dataset");
  features_cmd->add_option("--dataset", feat_dataset, "Dataset directory or manifest path")
      ->required();
  features_cmd->add_option("--layout", feat_layout, "Layout JSON (located when omitted)");
  features_cmd->add_option("--seed", feat_seed, "Clustering seed when locating");
  features_cmd->add_option("--box-width", feat_bw, "Anchor box width");
  features_cmd->add_option("--box-height", feat_bh, "Anchor box height");
  features_cmd->add_option("--percentile", feat_percentile, "Background percentile for locate");
  features_cmd->add_option("--out", feat_out, "Feature CSV output path");

  // ---- train ----
  std::string train_method, train_dataset, train_layout, train_out = "model.json";
  std::optional<std::uint64_t> train_seed;
  double train_fraction = -1, train_c = 10.0;
  std::string train_kernel = "rbf";
  std::optional<double> train_gamma;
  int train_bw = 16, train_bh = 16, train_max = 500;
  double train_percentile = 90.0;
  quantum::QsvmEncoding train_enc;
  SolverArgs train_solver;
  train_solver.method = "anneal";
  CLI::App* train_cmd = app.add_subcommand("train", "Train an SVM or QSVM model");
  train_cmd->add_option("--method", train_method, "svm or qsvm")
      ->required()
      ->check(CLI::IsMember({"svm", "qsvm"}));
  train_cmd->add_option("--dataset", train_dataset, "Dataset directory or manifest path")
      ->required();
  train_cmd->add_option("--layout", train_layout, "Layout JSON (located when omitted)");
  train_cmd->add_option("--seed", train_seed, "Split / solver seed")->required();
  train_cmd->add_option("--train-fraction", train_fraction,
                        "Training fraction (default 0.1 svm, 0.05 qsvm)");
  train_cmd->add_option("--c", train_c, "Soft-margin bound C");
  train_cmd->add_option("--kernel", train_kernel, "Kernel kind")
      ->check(CLI::IsMember({"linear", "rbf"}));
  train_cmd->add_option("--gamma", train_gamma, "RBF gamma (default 1/(d*var))");
  train_cmd->add_option("--bits", train_enc.bits_per_alpha, "QSVM bits per alpha");
  train_cmd->add_option("--encoding-base", train_enc.base, "QSVM encoding base");
  train_cmd->add_option("--penalty", train_enc.equality_penalty, "QSVM equality penalty");
  train_cmd->add_option("--max-train", train_max, "QSVM training sample cap (0 = none)");
  train_cmd->add_option("--box-width", train_bw, "Anchor box width");
  train_cmd->add_option("--box-height", train_bh, "Anchor box height");
  train_cmd->add_option("--percentile", train_percentile, "Background percentile for locate");
  train_cmd->add_option("--out", train_out, "Model JSON output path");
  add_solver_flags(train_cmd, train_solver);

  // ---- classify ----
  std::string cls_method, cls_dataset, cls_layout, cls_model, cls_out = "predictions.csv";
  std::optional<std::uint64_t> cls_seed;
  double cls_tau = 153.0, cls_theta = 0.012, cls_epsilon = 152.8;
  std::string cls_orientation = "similar";
  int cls_bw = 16, cls_bh = 16;
  double cls_percentile = 90.0;
  SolverArgs cls_solver;
  CLI::App* classify_cmd =
      app.add_subcommand("classify", "Classify every (frame, ion) box of a dataset");
  classify_cmd->add_option("--method", cls_method, "stats, conv, kmeans, svm, quant or qsvm")
      ->required()
      ->check(CLI::IsMember({"stats", "conv", "kmeans", "svm", "quant", "qsvm"}));
  classify_cmd->add_option("--dataset", cls_dataset, "Dataset directory or manifest path")
      ->required();
  classify_cmd->add_option("--layout", cls_layout, "Layout JSON (located when omitted)");
  classify_cmd->add_option("--model", cls_model, "Model JSON (svm / qsvm)");
  classify_cmd->add_option("--seed", cls_seed, "Seed for seeded steps (locate, kmeans)");
  classify_cmd->add_option("--tau", cls_tau, "Stats max-brightness threshold");
  classify_cmd->add_option("--theta", cls_theta, "Convolution score threshold");
  classify_cmd->add_option("--epsilon", cls_epsilon, "Quant brightness threshold");
  classify_cmd->add_option("--orientation", cls_orientation,
                           "Convolution orientation: similar or dissimilar (to the "
                           "reference) is bright")
      ->check(CLI::IsMember({"similar", "dissimilar"}));
  classify_cmd->add_option("--box-width", cls_bw, "Anchor box width");
  classify_cmd->add_option("--box-height", cls_bh, "Anchor box height");
  classify_cmd->add_option("--percentile", cls_percentile, "Background percentile for locate");
  classify_cmd->add_option("--out", cls_out, "Predictions CSV output path");
  add_solver_flags(classify_cmd, cls_solver);

  // ---- eval ----
  std::string eval_dataset, eval_methods = "stats,conv,kmeans,svm,quant,qsvm",
              eval_out = "eval_out";
  std::uint64_t eval_seed = 0;
  evaluation::BenchmarkConfig eval_cfg;
  bool eval_calibrate_tau = false, eval_calibrate_epsilon = false;
  std::optional<double> eval_theta;
  std::string eval_kernel = "rbf", eval_labels = "truth";
  SolverArgs eval_qsvm_solver;
  eval_qsvm_solver.method = "anneal";
  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "Benchmark classifiers on a labeled dataset and write a report");
  eval_cmd->add_option("--dataset", eval_dataset, "Dataset directory or manifest path")
      ->required();
  eval_cmd->add_option("--methods", eval_methods, "Comma-separated method list");
  eval_cmd->add_option("--seed", eval_seed, "Master seed")->required();
  eval_cmd->add_option("--out", eval_out, "Output directory");
  eval_cmd->add_option("--tau", eval_cfg.tau, "Stats threshold");
  eval_cmd->add_flag("--calibrate-tau", eval_calibrate_tau, "Calibrate tau by F1 instead");
  eval_cmd->add_option("--theta", eval_theta,
                       "Convolution threshold (calibrated by F1 when omitted)");
  eval_cmd->add_option("--epsilon", eval_cfg.epsilon, "Quant threshold");
  eval_cmd->add_flag("--calibrate-epsilon", eval_calibrate_epsilon,
                     "Calibrate epsilon by F1 instead");
  eval_cmd->add_option("--calib-fraction", eval_cfg.calibration_fraction,
                       "Calibration split fraction");
  eval_cmd->add_option("--svm-train-fraction", eval_cfg.svm_train_fraction,
                       "SVM training fraction");
  eval_cmd->add_option("--qsvm-train-fraction", eval_cfg.qsvm_train_fraction,
                       "QSVM training fraction");
  eval_cmd->add_option("--qsvm-max-train", eval_cfg.qsvm_max_train,
                       "QSVM training sample cap (0 = none)");
  eval_cmd->add_option("--c", eval_cfg.svm_c, "Soft-margin bound C");
  eval_cmd->add_option("--kernel", eval_kernel, "Kernel kind")
      ->check(CLI::IsMember({"linear", "rbf"}));
  eval_cmd->add_option("--gamma", eval_cfg.svm_gamma, "RBF gamma (default 1/(d*var))");
  eval_cmd->add_option("--bits", eval_cfg.qsvm_encoding.bits_per_alpha, "QSVM bits per alpha");
  eval_cmd->add_option("--encoding-base", eval_cfg.qsvm_encoding.base, "QSVM encoding base");
  eval_cmd->add_option("--penalty", eval_cfg.qsvm_encoding.equality_penalty,
                       "QSVM equality penalty");
  eval_cmd->add_option("--box-width", eval_cfg.box_width, "Anchor box width");
  eval_cmd->add_option("--box-height", eval_cfg.box_height, "Anchor box height");
  eval_cmd->add_option("--percentile", eval_cfg.background_percentile,
                       "Background percentile");
  eval_cmd->add_option("--labels", eval_labels,
                       "Benchmark truth: manifest ground truth or stats auto-labels")
      ->check(CLI::IsMember({"truth", "stats"}));
  eval_cmd->add_flag("--bitstring-fidelity", eval_cfg.report_bitstring_fidelity,
                     "Also report per-frame bitstring fidelity");
  eval_cmd->add_option("--threads", eval_cfg.threads, "Worker threads (0 = all cores)");
  eval_cmd->add_option("--sweeps", eval_cfg.qsvm_solver.metropolis.sweeps,
                       "QSVM annealing sweeps");
  eval_cmd->add_option("--restarts", eval_cfg.qsvm_solver.restarts, "QSVM annealing restarts");

  // ---- qubo ----
  CLI::App* qubo_cmd = app.add_subcommand("qubo", "QUBO utilities");
  qubo_cmd->require_subcommand(1);
  std::string qs_in, qs_out;
  std::optional<std::uint64_t> qs_seed;
  SolverArgs qs_solver;
  CLI::App* qubo_solve = qubo_cmd->add_subcommand("solve", "Maximize a QUBO file");
  qubo_solve->add_option("--in", qs_in, "QUBO file ('n C max' header, then 'i j value')")
      ->required();
  qubo_solve->add_option("--method", qs_solver.method, "Solver")
      ->check(CLI::IsMember({"exhaustive", "anneal", "meanfield"}));
  qubo_solve->add_option("--seed", qs_seed, "Solver seed (stochastic methods)");
  qubo_solve->add_option("--sweeps", qs_solver.metropolis.sweeps, "Annealing sweeps");
  qubo_solve->add_option("--restarts", qs_solver.restarts, "Annealing restarts");
  qubo_solve->add_option("--temp-start", qs_solver.metropolis.temp_start, "Start temperature");
  qubo_solve->add_option("--temp-end", qs_solver.metropolis.temp_end, "End temperature");
  qubo_solve->add_option("--mf-steps", qs_solver.mean_field.steps, "Mean-field steps");
  qubo_solve->add_option("--mf-step-size", qs_solver.mean_field.step_size,
                         "Mean-field step size");
  qubo_solve->add_option("--mf-noise", qs_solver.mean_field.noise_sigma, "Mean-field noise");
  qubo_solve->add_option("--out", qs_out, "Write 'value bitstring' here instead of stdout");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;
    err << "ionread: " << e.what() << '\n';
    return e.get_exit_code();
  }

  try {
    if (*synth_cmd) {
      std::optional<std::string> forced;
      int frames = synth.frames;
      if (synth.preset == "h1") {
        if (frames < 0) frames = 10000;
      } else if (synth.preset == "allbright") {
        if (frames < 0) frames = 900;
        forced = std::string(synth.n_ions, '0');
      } else if (frames < 0) {
        throw std::runtime_error("synth: --frames is required with --preset none");
      }
      synth.params.n_ions = synth.n_ions;
      if (synth.spacing == "equilibrium") {
        imaging::EquilibriumSpacing eq;
        eq.trap.ion_mass = 171 * 1.66053906660e-27;  // a generic heavy ion
        eq.trap.trap_frequency = 2 * M_PI * 150e3;
        synth.params.spacing = eq;
      }
      std::string name = synth.name.empty() ? synth.preset : synth.name;
      imaging::DatasetManifest m = imaging::synth_dataset(
          synth.params, frames, synth.out, synth.seed, forced, name, synth.threads);
      out << "wrote " << m.entries.size() << " frames to " << synth.out << '\n';

    } else if (*locate_cmd) {
      auto ds = load_dataset(loc_dataset, false);
      auto layout = localization::locate_ions(ds.frames, ds.n_ions, loc_percentile, loc_seed);
      localization::save_layout(layout, loc_out);
      out << "layout: " << layout.centers.size() << " centers, line y = " << layout.slope
          << " x + " << layout.intercept << '\n';

    } else if (*features_cmd) {
      auto ds = load_dataset(feat_dataset, false);
      auto layout = layout_for(ds, feat_layout, feat_percentile, feat_seed);
      auto boxes = localization::anchor_boxes(layout, feat_bw, feat_bh, ds.frames[0].width,
                                              ds.frames[0].height);
      std::vector<features::FeatureVector> rows;
      std::vector<int> frame_ids, ion_ids;
      std::vector<std::optional<char>> labels;
      for (std::size_t f = 0; f < ds.frames.size(); ++f)
        for (std::size_t i = 0; i < boxes.size(); ++i) {
          rows.push_back(
              features::extract_features(features::flatten(ds.frames[f], boxes[i])));
          frame_ids.push_back(static_cast<int>(f));
          ion_ids.push_back(static_cast<int>(i));
          labels.push_back(ds.labels[f][i]);
        }
      features::save_feature_table(feat_out, rows, frame_ids, ion_ids, labels);
      out << "wrote " << rows.size() << " feature rows to " << feat_out << '\n';

    } else if (*train_cmd) {
      auto ds = load_dataset(train_dataset, true);
      auto layout = layout_for(ds, train_layout, train_percentile, train_seed);
      auto boxes = localization::anchor_boxes(layout, train_bw, train_bh, ds.frames[0].width,
                                              ds.frames[0].height);
      const int n_ions = ds.n_ions;
      const std::size_t n = ds.frames.size() * boxes.size();
      std::vector<features::FeatureVector> feats(n);
      std::vector<int> ys(n);
      for (std::size_t f = 0; f < ds.frames.size(); ++f)
        for (std::size_t i = 0; i < boxes.size(); ++i) {
          std::size_t s = f * n_ions + i;
          feats[s] = features::extract_features(features::flatten(ds.frames[f], boxes[i]));
          ys[s] = ds.labels[f][i] == '0' ? -1 : +1;
        }
      double fraction = train_fraction > 0 ? train_fraction
                                           : (train_method == "svm" ? 0.10 : 0.05);
      auto order = evaluation::shuffled_indices(n, rng::substream(*train_seed, 104));
      std::size_t n_train = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround(fraction * n)), 2, n);
      if (train_method == "qsvm" && train_max > 0)
        n_train = std::min(n_train, static_cast<std::size_t>(train_max));
      std::vector<features::FeatureVector> train_feats;
      std::vector<int> train_ys;
      for (std::size_t k = 0; k < n_train; ++k) {
        train_feats.push_back(feats[order[k]]);
        train_ys.push_back(ys[order[k]]);
      }
      auto scaler = features::FeatureScaler::fit(train_feats);
      std::vector<std::vector<double>> xs;
      for (const auto& fv : train_feats) {
        auto a = scaler.transform(fv);
        xs.emplace_back(a.begin(), a.end());
      }
      classifiers::KernelSpec kernel;
      kernel.kind = train_kernel == "linear" ? classifiers::KernelSpec::Kind::linear
                                             : classifiers::KernelSpec::Kind::rbf;
      kernel.gamma = train_gamma.value_or(classifiers::default_gamma(xs));
      classifiers::SvmModel model;
      if (train_method == "svm") {
        model = classifiers::svm_train(xs, train_ys, kernel, train_c);
      } else {
        train_enc.kernel = kernel;
        model = quantum::qsvm_train(xs, train_ys, train_enc,
                                    train_solver.spec(rng::substream(*train_seed, 106)));
      }
      classifiers::save_svm_model(model, scaler, train_out);
      out << "trained " << train_method << " on " << n_train << " samples, "
          << model.alphas.size() << " support vectors -> " << train_out << '\n';

    } else if (*classify_cmd) {
      auto ds = load_dataset(cls_dataset, false);
      auto layout = layout_for(ds, cls_layout, cls_percentile, cls_seed);
      auto boxes = localization::anchor_boxes(layout, cls_bw, cls_bh, ds.frames[0].width,
                                              ds.frames[0].height);
      const int n_ions = static_cast<int>(boxes.size());
      const std::size_t n = ds.frames.size() * boxes.size();

      std::ofstream pred_out(cls_out);
      if (!pred_out) throw std::runtime_error("classify: cannot write '" + cls_out + "'");
      pred_out << "frame,ion,method,state\n";

      auto emit = [&](std::size_t s, classifiers::IonState st) {
        pred_out << state_csv_line(s / n_ions, static_cast<int>(s % n_ions), cls_method,
                                   classifiers::to_bit(st));
      };

      if (cls_method == "stats" || cls_method == "quant") {
        quantum::QuantConfig qc;
        qc.epsilon = cls_epsilon;
        qc.solver = cls_solver.spec(cls_seed);
        for (std::size_t f = 0; f < ds.frames.size(); ++f)
          for (int i = 0; i < n_ions; ++i) {
            auto v = features::flatten(ds.frames[f], boxes[i]);
            double mx = *std::max_element(v.begin(), v.end());
            classifiers::IonState st =
                cls_method == "stats" ? classifiers::threshold_classify(mx, cls_tau)
                                      : quantum::quant_classify(mx, qc);
            emit(f * n_ions + i, st);
          }
      } else if (cls_method == "conv") {
        auto reference = features::flatten(ds.frames[0], boxes[0]);
        auto orientation = cls_orientation == "similar"
                               ? classifiers::ConvOrientation::similar_is_bright
                               : classifiers::ConvOrientation::dissimilar_is_bright;
        for (std::size_t f = 0; f < ds.frames.size(); ++f)
          for (int i = 0; i < n_ions; ++i) {
            auto v = features::flatten(ds.frames[f], boxes[i]);
            emit(f * n_ions + i,
                 classifiers::convolution_classify(v, reference, cls_theta, orientation));
          }
      } else if (cls_method == "kmeans") {
        if (!cls_seed) throw std::runtime_error("classify kmeans: pass --seed");
        std::vector<features::FeatureVector> feats(n);
        for (std::size_t f = 0; f < ds.frames.size(); ++f)
          for (int i = 0; i < n_ions; ++i)
            feats[f * n_ions + i] =
                features::extract_features(features::flatten(ds.frames[f], boxes[i]));
        auto states = classifiers::kmeans2_classify(feats, *cls_seed);
        for (std::size_t s = 0; s < n; ++s) emit(s, states[s]);
      } else {  // svm / qsvm
        if (cls_model.empty())
          throw std::runtime_error("classify " + cls_method + ": pass --model");
        auto [model, scaler] = classifiers::load_svm_model(cls_model);
        for (std::size_t f = 0; f < ds.frames.size(); ++f)
          for (int i = 0; i < n_ions; ++i) {
            auto fv = features::extract_features(features::flatten(ds.frames[f], boxes[i]));
            auto a = scaler.transform(fv);
            emit(f * n_ions + i,
                 classifiers::svm_predict(model, std::vector<double>(a.begin(), a.end())));
          }
      }
      out << "wrote predictions for " << n << " boxes to " << cls_out << '\n';

    } else if (*eval_cmd) {
      auto ds = load_dataset(eval_dataset, eval_labels == "truth");
      if (eval_calibrate_tau) eval_cfg.tau.reset();
      if (eval_calibrate_epsilon) eval_cfg.epsilon.reset();
      eval_cfg.theta = eval_theta;
      eval_cfg.kernel_kind = eval_kernel == "linear" ? classifiers::KernelSpec::Kind::linear
                                                     : classifiers::KernelSpec::Kind::rbf;
      eval_cfg.label_source = eval_labels == "truth" ? evaluation::LabelSource::ground_truth
                                                     : evaluation::LabelSource::statistics;
      std::vector<std::string> methods;
      for (std::size_t pos = 0; pos < eval_methods.size();) {
        std::size_t comma = eval_methods.find(',', pos);
        if (comma == std::string::npos) comma = eval_methods.size();
        if (comma > pos) methods.push_back(eval_methods.substr(pos, comma - pos));
        pos = comma + 1;
      }
      if (methods.empty()) throw std::runtime_error("eval: empty --methods list");

      evaluation::EvaluationReport report =
          evaluation::benchmark(ds, methods, eval_cfg, eval_seed);

      fs::create_directories(eval_out);
      evaluation::write_report_csv(report, fs::path(eval_out) / "report.csv");
      evaluation::write_report_json(report, fs::path(eval_out) / "report.json");
      evaluation::write_predictions_csv(report, ds.n_ions,
                                        fs::path(eval_out) / "predictions.csv");
      localization::save_layout(report.layout, fs::path(eval_out) / "layout.json");
      for (const auto& r : report.rows) {
        char line[256];
        std::snprintf(line, sizeof line,
                      "%-8s fidelity %.6f  f1 %.6f  accuracy %.6f  train %.3fs  classify %.3fs\n",
                      r.method.c_str(), r.fidelity, r.f1, r.accuracy, r.train_seconds,
                      r.classify_seconds);
        out << line;
      }

    } else if (*qubo_solve) {
      qubo::QuboProblem q = qubo::load_qubo(qs_in);
      qubo::Solution sol = qubo::solve(q, qs_solver.spec(qs_seed));
      std::string bits(sol.x.size(), '0');
      for (std::size_t i = 0; i < sol.x.size(); ++i)
        if (sol.x[i]) bits[i] = '1';
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.12g", sol.value);
      if (!qs_out.empty()) {
        std::ofstream f(qs_out);
        if (!f) throw std::runtime_error("qubo: cannot write '" + qs_out + "'");
        f << buf << ' ' << bits << '\n';
      }
      out << buf << ' ' << bits << '\n';
    }
  } catch (const std::exception& e) {
    err << "ionread: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace ionread::cli
