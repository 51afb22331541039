#pragma once

// Subcommand bodies behind the onebit CLI. Each returns a process exit code:
// 0 success, 2 usage/config error, 3 runtime numeric failure.

#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "onebit/data.hpp"
#include "onebit/experiment.hpp"
#include "onebit/model.hpp"
#include "onebit/recon.hpp"
#include "onebit/sensing.hpp"
#include "onebit/train.hpp"

namespace onebit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

struct CommandArgs {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  std::optional<std::string> model;
  std::optional<std::vector<std::string>> algorithms;
  std::ostream* log = &std::cerr;
};

namespace detail {

inline int guarded(const CommandArgs& args, const std::function<void()>& body) {
  std::ostream& log = *args.log;
  try {
    body();
    return kExitOk;
  } catch (const TrainingError& e) {
    log << "error: training failed at " << e.what() << '\n';
    return kExitNumeric;
  } catch (const NumericError& e) {
    log << "error: numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ParseError& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DegenerateInput& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
}

inline nlohmann::json load_config(const CommandArgs& args) {
  if (!args.config) throw std::invalid_argument("--config is required");
  return parse_json_file(*args.config);
}

inline std::string require_out(const CommandArgs& args, const nlohmann::json& cfg) {
  if (args.out) return *args.out;
  if (cfg.is_object() && cfg.contains("output") && cfg["output"].is_string()) return cfg["output"].get<std::string>();
  throw std::invalid_argument("--out (or config 'output') is required");
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument(path + ": cannot open file for writing");
  out << text;
  if (!out) throw std::runtime_error(path + ": write failed");
}

inline nlohmann::json dataset_to_json(const DenseMatrix& data) {
  return {{"format_version", 1},
          {"kind", "dataset"},
          {"rows", data.rows()},
          {"cols", data.cols()},
          {"entries", std::vector<double>(data.entries().begin(), data.entries().end())}};
}

inline DenseMatrix dataset_from_json(const nlohmann::json& doc, const std::string& where) {
  const auto rows = require_count(doc, "rows", where);
  const auto cols = require_count(doc, "cols", where);
  auto entries = require_numbers(doc, "entries", where);
  if (entries.size() != rows * cols)
    throw ParseError(where + ".entries: expected rows*cols = " + std::to_string(rows * cols) + " values");
  return DenseMatrix(rows, cols, std::move(entries));
}

/// JSON dataset files (written by gen-data) or IDX image files.
inline DenseMatrix load_dataset(const std::string& path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
    return dataset_from_json(parse_json_file(path), path);
  return read_idx(path).as_matrix();
}

inline SparseSpec sparse_spec_from_json(const nlohmann::json& doc, const std::string& where) {
  SparseSpec spec;
  spec.n = json_value<std::size_t>(doc, "n", spec.n, where);
  spec.k = json_value<std::size_t>(doc, "k", spec.k, where);
  spec.normalize = json_value<bool>(doc, "normalize", spec.normalize, where);
  spec.value_dist = value_dist_from_name(json_value<std::string>(doc, "value_dist", "uniform_half_one", where));
  spec.validate();
  return spec;
}

inline ActivationKind activation_kind(const std::string& name, const std::string& where) {
  const auto act = Activation::from_name(name);
  if (!act) throw ParseError(where + ": unknown activation '" + name + "'");
  return act->kind;
}

inline ExperimentConfig experiment_with_overrides(const nlohmann::json& doc, const CommandArgs& args) {
  ExperimentConfig cfg = experiment_from_json(doc);
  if (args.seed) cfg.master_seed = *args.seed;
  if (args.model) cfg.model_path = *args.model;
  if (args.algorithms) cfg.algorithms = *args.algorithms;
  if (args.threads) cfg.threads = *args.threads;
  if (args.out) cfg.output = *args.out;
  return cfg;
}

}  // namespace detail

/// Config: {n, k, value_dist, normalize, count, seed}. Writes a JSON dataset.
inline int cmd_gen_data(const CommandArgs& args) {
  return detail::guarded(args, [&] {
    const auto cfg = detail::load_config(args);
    const auto spec = detail::sparse_spec_from_json(cfg, "gen-data");
    const auto count = detail::json_value<std::size_t>(cfg, "count", 10000, "gen-data");
    const auto seed = args.seed.value_or(detail::json_value<std::uint64_t>(cfg, "seed", kReferenceSeed, "gen-data"));
    RngStream stream(seed, 0);
    const auto data = sample_sparse_dataset(spec, count, stream);
    detail::write_json_file(detail::require_out(args, cfg), detail::dataset_to_json(data));
  });
}

/// Config: {dataset, architecture{...}, train{...}, output, vae_output, curve_output}.
/// Writes the exported decoder, plus the full VAE and the training curve when asked.
inline int cmd_train(const CommandArgs& args) {
  return detail::guarded(args, [&] {
    const auto cfg = detail::load_config(args);
    const std::string where = "train";
    const auto& dataset_path = detail::require_field(cfg, "dataset", where);
    if (!dataset_path.is_string()) throw ParseError(where + ".dataset: expected a path");
    const std::string out = detail::require_out(args, cfg);
    const DenseMatrix data = detail::load_dataset(dataset_path.get<std::string>());

    VaeArchitecture arch;
    arch.data_dim = data.cols();
    if (cfg.contains("architecture")) {
      const auto& a = cfg["architecture"];
      const std::string aw = where + ".architecture";
      arch.latent_dim = detail::json_value<std::size_t>(a, "latent_dim", arch.latent_dim, aw);
      arch.encoder_hidden = detail::json_value<std::vector<std::size_t>>(a, "encoder_hidden", arch.encoder_hidden, aw);
      arch.decoder_hidden = detail::json_value<std::vector<std::size_t>>(a, "decoder_hidden", arch.decoder_hidden, aw);
      arch.hidden_activation =
          detail::activation_kind(detail::json_value<std::string>(a, "hidden_activation", "relu", aw), aw);
      arch.output_activation =
          detail::activation_kind(detail::json_value<std::string>(a, "output_activation", "sigmoid", aw), aw);
    }
    TrainConfig tc;
    if (cfg.contains("train")) {
      const auto& t = cfg["train"];
      const std::string tw = where + ".train";
      tc.epochs = detail::json_value<std::size_t>(t, "epochs", tc.epochs, tw);
      tc.batch_size = detail::json_value<std::size_t>(t, "batch_size", tc.batch_size, tw);
      tc.learning_rate = detail::json_value<double>(t, "learning_rate", tc.learning_rate, tw);
      tc.beta1 = detail::json_value<double>(t, "beta1", tc.beta1, tw);
      tc.beta2 = detail::json_value<double>(t, "beta2", tc.beta2, tw);
      tc.epsilon = detail::json_value<double>(t, "epsilon", tc.epsilon, tw);
      tc.recon_variance = detail::json_value<double>(t, "recon_variance", tc.recon_variance, tw);
      tc.seed = detail::json_value<std::uint64_t>(t, "seed", tc.seed, tw);
    }
    if (args.seed) tc.seed = *args.seed;

    const TrainedVae trained = train_vae(data, arch, tc);
    save_model(export_decoder(trained.model), out);
    if (cfg.contains("vae_output") && cfg["vae_output"].is_string())
      detail::write_json_file(cfg["vae_output"].get<std::string>(), vae_to_json(trained.model));
    const std::string curve =
        cfg.contains("curve_output") && cfg["curve_output"].is_string() ? cfg["curve_output"].get<std::string>()
                                                                          : out + ".curve.csv";
    std::ostringstream csv;
    csv << "# results_format=" << kResultsFormat << "\nepoch,mean_loss,recon_term,kl_term\n";
    for (const auto& e : trained.history)
      csv << e.epoch << ',' << detail::fmt_double(e.mean_loss) << ',' << detail::fmt_double(e.recon_term) << ','
          << detail::fmt_double(e.kl_term) << '\n';
    detail::write_text_file(curve, csv.str());
    if (!trained.history.empty())
      *args.log << "trained " << tc.epochs << " epochs, final loss " << trained.history.back().mean_loss << '\n';
  });
}

/// --model points at a full VAE file; writes its decoder.
inline int cmd_export_decoder(const CommandArgs& args) {
  return detail::guarded(args, [&] {
    if (!args.model) throw std::invalid_argument("--model is required");
    if (!args.out) throw std::invalid_argument("--out is required");
    const auto vae = vae_from_json(detail::parse_json_file(*args.model), *args.model);
    save_model(export_decoder(vae), *args.out);
  });
}

/// Config: sweep-style document; the first value of each grid is used with
/// trial 0. Writes {x_true, ensemble (nominal A), observation}.
inline int cmd_measure(const CommandArgs& args) {
  return detail::guarded(args, [&] {
    const auto doc = detail::load_config(args);
    ExperimentConfig cfg = detail::experiment_with_overrides(doc, args);
    const std::string out = detail::require_out(args, doc);
    std::optional<MlpGenerator> G;
    std::optional<ImageDataset> images;
    if (cfg.signal.source == SignalSource::in_range) {
      if (cfg.model_path.empty()) throw std::invalid_argument("in_range signals need --model");
      G = load_model(cfg.model_path);
    }
    if (cfg.signal.source == SignalSource::idx) images = read_idx(cfg.signal.idx_path);
    const std::size_t m = cfg.m_grid.at(0);
    const NoiseConfig noise{cfg.v_n.at(0), cfg.alpha.at(0)};
    noise.validate();
    TrialStreams st = trial_streams(cfg.master_seed, m, 0);
    const Vector x = detail::make_signal(cfg, G ? &*G : nullptr, images ? &*images : nullptr, 0, st.signal);
    const auto ens = make_ensemble(cfg.ensemble, m, x.size(), st.ensemble);
    const auto actual = perturb_matrix(ens, cfg.v_delta.at(0), st.perturbation);
    const auto obs = quantize(actual, x, noise, st.noise);
    detail::write_json_file(out, {{"format_version", 1},
                                  {"kind", "measurement"},
                                  {"master_seed", cfg.master_seed},
                                  {"x_true", x},
                                  {"ensemble", ensemble_to_json(ens)},
                                  {"observation", observation_to_json(obs)}});
  });
}

/// Config: {measurement: path, algorithms, gen{...}, gen_pgd{...}, biht{...},
/// sparsity, yp{l1_budget}}. Writes one estimate per algorithm, with metrics
/// when the measurement file carries x_true.
inline int cmd_reconstruct(const CommandArgs& args) {
  return detail::guarded(args, [&] {
    const auto doc = detail::load_config(args);
    ExperimentConfig cfg = detail::experiment_with_overrides(doc, args);
    const std::string out = detail::require_out(args, doc);
    const auto& meas_path = detail::require_field(doc, "measurement", "reconstruct");
    if (!meas_path.is_string()) throw ParseError("reconstruct.measurement: expected a path");
    const std::string path = meas_path.get<std::string>();
    const auto meas = detail::parse_json_file(path);
    const auto ens = ensemble_from_json(detail::require_field(meas, "ensemble", path), path + ".ensemble");
    const auto obs = observation_from_json(detail::require_field(meas, "observation", path), path + ".observation");
    if (obs.y.size() != ens.m()) throw ParseError(path + ": observation length does not match ensemble rows");
    std::optional<Vector> x_true;
    if (meas.contains("x_true")) x_true = detail::require_numbers(meas, "x_true", path);
    cfg.validate();
    std::optional<MlpGenerator> G;
    if (cfg.needs_model()) G = load_model(cfg.model_path);
    const std::size_t K = cfg.sparsity.value_or(cfg.signal.sparse.k);
    const RngStream algo_stream = trial_streams(cfg.master_seed, ens.m(), 0).algorithm;

    nlohmann::json results = nlohmann::json::array();
    for (const auto& algo : cfg.algorithms) {
      nlohmann::json entry{{"algorithm", algo}};
      Vector x_hat;
      if (algo == "gen" || algo == "gen_noise_aware") {
        const auto r = algo == "gen" ? reconstruct_gen(*G, ens.A, obs.y, cfg.gen, algo_stream)
                                     : reconstruct_gen_noise_aware(*G, ens.A, obs.y, obs.noise.flip_keep_prob, cfg.gen,
                                                                   algo_stream);
        x_hat = r.x_hat;
        entry["z_hat"] = *r.z_hat;
        entry["best_loss"] = r.best_loss;
      } else if (algo == "gen_pgd") {
        const auto r = gen_pgd(*G, ens.A, obs.y, cfg.pgd, algo_stream);
        x_hat = r.x_hat;
        entry["z_hat"] = *r.z_hat;
        entry["best_loss"] = r.best_loss;
      } else if (algo == "biht") {
        x_hat = biht(ens.A, obs.y, K, cfg.biht);
      } else {
        x_hat = yp_convex(ens.A, obs.y, cfg.l1_budget.value_or(std::sqrt(static_cast<double>(K)))).x;
      }
      entry["x_hat"] = x_hat;
      entry["hamming"] = hamming_dist(sign_vector(matvec(ens.A, x_hat)), obs.y);
      if (x_true) {
        entry["mse"] = mse(*x_true, x_hat);
        if (norm2(x_hat) > 0.0) entry["nmse"] = nmse(*x_true, x_hat);
      }
      results.push_back(std::move(entry));
    }
    detail::write_json_file(out, {{"format_version", 1}, {"kind", "reconstruction"}, {"results", results}});
  });
}

/// Runs a sweep and writes the results CSV (to --out / config output, or the log stream).
inline int cmd_sweep(const CommandArgs& args, std::ostream* csv_sink = nullptr) {
  return detail::guarded(args, [&] {
    const auto doc = detail::load_config(args);
    const ExperimentConfig cfg = detail::experiment_with_overrides(doc, args);
    cfg.validate();
    std::optional<MlpGenerator> G;
    std::optional<ImageDataset> images;
    if (cfg.needs_model()) G = load_model(cfg.model_path);
    if (cfg.signal.source == SignalSource::idx) images = read_idx(cfg.signal.idx_path);
    const auto rows = run_sweep(cfg, G ? &*G : nullptr, images ? &*images : nullptr);
    std::ostringstream csv;
    write_sweep_csv(csv, rows);
    if (csv_sink != nullptr) *csv_sink << csv.str();
    if (!cfg.output.empty())
      detail::write_text_file(cfg.output, csv.str());
    else if (csv_sink == nullptr)
      std::cout << csv.str();
  });
}

/// Built-in checks; failed checks show up as pass=false rows, never as an error exit.
inline int cmd_theory_check(const CommandArgs& args) {
  return detail::guarded(args, [&] {
    const auto rows = theory_check(args.seed.value_or(kReferenceSeed), args.threads.value_or(1));
    std::ostringstream csv;
    write_theory_csv(csv, rows);
    if (args.out)
      detail::write_text_file(*args.out, csv.str());
    else
      std::cout << csv.str();
  });
}

}  // namespace onebit
