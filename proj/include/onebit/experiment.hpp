#pragma once

// Declarative sweeps over (m, v_n, alpha, v_delta, trial, algorithm) and the
// built-in theory checks. Both produce tidy CSV.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "onebit/analysis.hpp"
#include "onebit/core.hpp"
#include "onebit/data.hpp"
#include "onebit/model.hpp"
#include "onebit/recon.hpp"
#include "onebit/sensing.hpp"

namespace onebit {

inline constexpr int kResultsFormat = 1;
inline constexpr std::uint64_t kReferenceSeed = 20240601;

enum class SignalSource { synthetic, in_range, idx };

struct SignalConfig {
  SignalSource source = SignalSource::synthetic;
  SparseSpec sparse;
  std::string idx_path;
  /// Rescale every x* to this norm; in_range signals default to 1.
  std::optional<double> norm;
};

struct ExperimentConfig {
  SignalConfig signal;
  EnsembleKind ensemble = EnsembleKind::unit_sphere_columns;
  std::vector<std::size_t> m_grid{25, 50, 100, 200, 400};
  std::vector<double> v_n{0.0};
  std::vector<double> alpha{1.0};
  std::vector<double> v_delta{0.0};
  std::vector<std::string> algorithms{"gen", "biht", "yp"};
  std::size_t trials = 20;
  std::uint64_t master_seed = kReferenceSeed;
  std::string model_path;
  std::string output;
  std::size_t threads = 1;
  GenOpts gen;
  PgdOpts pgd;
  /// K for biht; yp uses sqrt(K) as its l1 budget unless l1_budget is set.
  std::optional<std::size_t> sparsity;
  BihtOpts biht;
  std::optional<double> l1_budget;
  nlohmann::json source_doc;

  bool needs_model() const {
    if (signal.source == SignalSource::in_range) return true;
    for (const auto& a : algorithms)
      if (a == "gen" || a == "gen_noise_aware" || a == "gen_pgd") return true;
    return false;
  }

  void validate() const {
    if (m_grid.empty() || v_n.empty() || alpha.empty() || v_delta.empty() || algorithms.empty())
      throw std::invalid_argument("experiment: grids and algorithm list must be nonempty");
    if (trials < 1) throw std::invalid_argument("experiment: trials must be >= 1");
    for (auto m : m_grid)
      if (m < 1) throw std::invalid_argument("experiment: m values must be >= 1");
    for (const auto& a : algorithms)
      if (a != "gen" && a != "gen_noise_aware" && a != "biht" && a != "yp" && a != "gen_pgd")
        throw std::invalid_argument("experiment: unknown algorithm '" + a + "'");
    for (double v : v_n) NoiseConfig{v, 1.0}.validate();
    for (double a : alpha) NoiseConfig{0.0, a}.validate();
    for (double v : v_delta)
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("experiment: v_delta must be >= 0");
    if (needs_model() && model_path.empty())
      throw std::invalid_argument("experiment: a model path is required for gen algorithms and in_range signals");
    gen.validate();
    signal.sparse.validate();
  }
};

namespace detail {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
std::vector<T> json_list(const nlohmann::json& doc, const char* key, const std::vector<T>& fallback) {
  if (!doc.contains(key)) return fallback;
  const auto& v = doc[key];
  try {
    if (v.is_array()) return v.get<std::vector<T>>();
    return {v.get<T>()};
  } catch (const nlohmann::json::exception&) {
    throw ParseError(std::string("experiment.") + key + ": wrong value type");
  }
}

template <typename T>
T json_value(const nlohmann::json& doc, const char* key, T fallback, const std::string& where) {
  if (!doc.contains(key) || doc[key].is_null()) return fallback;
  try {
    return doc[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(where + "." + key + ": wrong value type");
  }
}

}  // namespace detail

/// Parses a sweep description. Unknown keys are ignored; type errors raise
/// ParseError, semantic errors std::invalid_argument (both exit 2 in the CLI).
inline ExperimentConfig experiment_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("experiment: expected an object");
  ExperimentConfig cfg;
  cfg.source_doc = doc;
  const std::string where = "experiment";
  if (doc.contains("signal")) {
    const auto& s = doc["signal"];
    const std::string src = detail::json_value<std::string>(s, "source", "synthetic", where + ".signal");
    if (src == "synthetic")
      cfg.signal.source = SignalSource::synthetic;
    else if (src == "in_range")
      cfg.signal.source = SignalSource::in_range;
    else if (src == "idx")
      cfg.signal.source = SignalSource::idx;
    else
      throw ParseError(where + ".signal.source: unknown source '" + src + "'");
    cfg.signal.sparse.n = detail::json_value<std::size_t>(s, "n", cfg.signal.sparse.n, where + ".signal");
    cfg.signal.sparse.k = detail::json_value<std::size_t>(s, "k", cfg.signal.sparse.k, where + ".signal");
    cfg.signal.sparse.normalize = detail::json_value<bool>(s, "normalize", false, where + ".signal");
    cfg.signal.sparse.value_dist = value_dist_from_name(
        detail::json_value<std::string>(s, "value_dist", "uniform_half_one", where + ".signal"));
    cfg.signal.idx_path = detail::json_value<std::string>(s, "path", "", where + ".signal");
    if (s.contains("norm") && !s["norm"].is_null()) cfg.signal.norm = detail::json_value<double>(s, "norm", 1.0, where);
    if (cfg.signal.source == SignalSource::idx && cfg.signal.idx_path.empty())
      throw ParseError(where + ".signal.path: required for idx signals");
  }
  if (cfg.signal.source == SignalSource::in_range && !cfg.signal.norm) cfg.signal.norm = 1.0;
  if (doc.contains("ensemble")) cfg.ensemble = ensemble_from_name(detail::json_value<std::string>(doc, "ensemble", "", where));
  cfg.m_grid = detail::json_list<std::size_t>(doc, "m", cfg.m_grid);
  cfg.v_n = detail::json_list<double>(doc, "v_n", cfg.v_n);
  cfg.alpha = detail::json_list<double>(doc, "alpha", cfg.alpha);
  cfg.v_delta = detail::json_list<double>(doc, "v_delta", cfg.v_delta);
  cfg.algorithms = detail::json_list<std::string>(doc, "algorithms", cfg.algorithms);
  cfg.trials = detail::json_value<std::size_t>(doc, "trials", cfg.trials, where);
  cfg.master_seed = detail::json_value<std::uint64_t>(doc, "master_seed", cfg.master_seed, where);
  cfg.model_path = detail::json_value<std::string>(doc, "model", "", where);
  cfg.output = detail::json_value<std::string>(doc, "output", "", where);
  cfg.threads = detail::json_value<std::size_t>(doc, "threads", cfg.threads, where);
  if (doc.contains("gen")) {
    const auto& g = doc["gen"];
    cfg.gen.restarts = detail::json_value<std::size_t>(g, "restarts", cfg.gen.restarts, where + ".gen");
    cfg.gen.steps_per_restart = detail::json_value<std::size_t>(g, "steps", cfg.gen.steps_per_restart, where + ".gen");
    cfg.gen.step_size = detail::json_value<double>(g, "step_size", cfg.gen.step_size, where + ".gen");
    cfg.gen.project_output_unit_ball = detail::json_value<bool>(g, "project_output_unit_ball", false, where + ".gen");
    if (g.contains("latent_radius") && !g["latent_radius"].is_null())
      cfg.gen.latent_radius = detail::json_value<double>(g, "latent_radius", 1.0, where + ".gen");
  }
  if (doc.contains("gen_pgd")) {
    const auto& p = doc["gen_pgd"];
    cfg.pgd.outer_iters = detail::json_value<std::size_t>(p, "outer_iters", cfg.pgd.outer_iters, where + ".gen_pgd");
    cfg.pgd.step = detail::json_value<double>(p, "step", cfg.pgd.step, where + ".gen_pgd");
    cfg.pgd.inner_steps = detail::json_value<std::size_t>(p, "inner_steps", cfg.pgd.inner_steps, where + ".gen_pgd");
    cfg.pgd.inner_step_size = detail::json_value<double>(p, "inner_step_size", cfg.pgd.inner_step_size, where + ".gen_pgd");
    cfg.pgd.projection_restarts =
        detail::json_value<std::size_t>(p, "projection_restarts", cfg.pgd.projection_restarts, where + ".gen_pgd");
  }
  if (doc.contains("sparsity")) cfg.sparsity = detail::json_value<std::size_t>(doc, "sparsity", 1, where);
  if (doc.contains("biht")) {
    const auto& b = doc["biht"];
    cfg.biht.iters = detail::json_value<std::size_t>(b, "iters", cfg.biht.iters, where + ".biht");
    cfg.biht.step = detail::json_value<double>(b, "step", cfg.biht.step, where + ".biht");
  }
  if (doc.contains("yp") && doc["yp"].contains("l1_budget"))
    cfg.l1_budget = detail::json_value<double>(doc["yp"], "l1_budget", 1.0, where + ".yp");
  return cfg;
}

/// Effective config as JSON (what the hash covers): the source document with
/// flag overrides applied.
inline nlohmann::json effective_config(const ExperimentConfig& cfg) {
  nlohmann::json doc = cfg.source_doc.is_object() ? cfg.source_doc : nlohmann::json::object();
  doc["master_seed"] = cfg.master_seed;
  doc["model"] = cfg.model_path;
  doc["algorithms"] = cfg.algorithms;
  doc.erase("threads");  // results do not depend on it
  doc.erase("output");
  return doc;
}

inline std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(detail::fnv1a64(effective_config(cfg).dump())));
  return buf;
}

struct SweepRow {
  std::string algorithm;
  std::size_t m = 0;
  double v_n = 0.0;
  double alpha = 1.0;
  double v_delta = 0.0;
  std::size_t trial = 0;
  double mse = std::numeric_limits<double>::quiet_NaN();
  double nmse = std::numeric_limits<double>::quiet_NaN();
  double hamming = std::numeric_limits<double>::quiet_NaN();
  double best_loss = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
  std::uint64_t master_seed = 0;
  std::uint64_t signal_stream = 0;
  std::uint64_t ensemble_stream = 0;
  std::uint64_t noise_stream = 0;
  std::uint64_t algorithm_stream = 0;
  std::string config_hash;
  double seconds = 0.0;
};

/// Stream layout. Everything is keyed by values (m, trial), not by grid
/// position, so the same trial sees the same x*, A and noise draws across
/// algorithms and noise levels.
struct TrialStreams {
  RngStream signal;
  RngStream ensemble;
  RngStream perturbation;
  RngStream noise;
  RngStream algorithm;
};

inline TrialStreams trial_streams(std::uint64_t master_seed, std::size_t m, std::size_t trial) {
  const RngStream root(master_seed, 0);
  auto keyed = [&](std::uint64_t purpose, bool by_m) {
    RngStream s = derive_stream(root, purpose);
    if (by_m) s = derive_stream(s, m);
    return derive_stream(s, trial);
  };
  return {keyed(1, false), keyed(2, true), keyed(3, true), keyed(4, true), keyed(5, true)};
}

namespace detail {

inline Vector make_signal(const ExperimentConfig& cfg, const MlpGenerator* G, const ImageDataset* images,
                          std::size_t trial, RngStream stream) {
  Vector x;
  switch (cfg.signal.source) {
    case SignalSource::synthetic:
      x = sample_sparse(cfg.signal.sparse, stream);
      break;
    case SignalSource::in_range:
      x = forward(*G, sample_gaussian(stream, G->input_dim(), 0.0, 1.0));
      break;
    case SignalSource::idx: {
      const auto img = images->image(trial % images->count);
      x.assign(img.begin(), img.end());
      break;
    }
  }
  if (cfg.signal.norm) {
    x = normalize_unit(x);
    for (double& v : x) v *= *cfg.signal.norm;
  }
  return x;
}

inline std::string sanitize_status(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
  return "error: " + s;
}

}  // namespace detail

/// Runs every cell of the grid. Rows come back in grid order
/// (m, v_n, alpha, v_delta, trial, algorithm) whatever the thread count.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const MlpGenerator* G = nullptr,
                                       const ImageDataset* images = nullptr) {
  cfg.validate();
  if (cfg.needs_model() && G == nullptr) throw std::invalid_argument("run_sweep: generator required");
  if (cfg.signal.source == SignalSource::idx && images == nullptr)
    throw std::invalid_argument("run_sweep: image dataset required");
  const std::string hash = config_hash(cfg);
  const std::size_t n = cfg.signal.source == SignalSource::synthetic ? cfg.signal.sparse.n
                        : cfg.signal.source == SignalSource::in_range ? G->output_dim()
                                                                       : images->height * images->width;
  if (G != nullptr && cfg.needs_model() && G->output_dim() != n)
    throw std::invalid_argument("run_sweep: generator output dim " + std::to_string(G->output_dim()) +
                                " does not match signal dim " + std::to_string(n));
  std::size_t K = cfg.sparsity.value_or(cfg.signal.source == SignalSource::synthetic ? cfg.signal.sparse.k : 0);
  for (const auto& a : cfg.algorithms)
    if ((a == "biht" || a == "yp") && (K < 1 || K > n))
      throw std::invalid_argument("run_sweep: biht/yp need 'sparsity' in [1, n]");
  const double budget = cfg.l1_budget.value_or(std::sqrt(static_cast<double>(K)));

  struct Cell {
    std::size_t m;
    double v_n, alpha, v_delta;
    std::size_t trial;
  };
  std::vector<Cell> cells;
  for (auto m : cfg.m_grid)
    for (double vn : cfg.v_n)
      for (double a : cfg.alpha)
        for (double vd : cfg.v_delta)
          for (std::size_t t = 0; t < cfg.trials; ++t) cells.push_back({m, vn, a, vd, t});

  const std::size_t per_cell = cfg.algorithms.size();
  std::vector<SweepRow> rows(cells.size() * per_cell);
  parallel_for(cells.size(), cfg.threads, [&](std::size_t ci) {
    const Cell& c = cells[ci];
    TrialStreams st = trial_streams(cfg.master_seed, c.m, c.trial);
    auto fill = [&](SweepRow& row, const std::string& algo) {
      row.algorithm = algo;
      row.m = c.m;
      row.v_n = c.v_n;
      row.alpha = c.alpha;
      row.v_delta = c.v_delta;
      row.trial = c.trial;
      row.master_seed = cfg.master_seed;
      row.signal_stream = st.signal.stream_id();
      row.ensemble_stream = st.ensemble.stream_id();
      row.noise_stream = st.noise.stream_id();
      row.algorithm_stream = st.algorithm.stream_id();
      row.config_hash = hash;
    };
    for (std::size_t a = 0; a < per_cell; ++a) fill(rows[ci * per_cell + a], cfg.algorithms[a]);

    Vector x_true;
    MeasurementEnsemble ens;
    OneBitObservation obs;
    try {
      x_true = detail::make_signal(cfg, G, images, c.trial, st.signal);
      RngStream ens_stream = st.ensemble;
      ens = make_ensemble(cfg.ensemble, c.m, n, ens_stream);
      RngStream perturb_stream = st.perturbation;
      const MeasurementEnsemble actual = perturb_matrix(ens, c.v_delta, perturb_stream);
      RngStream noise_stream = st.noise;
      obs = quantize(actual, x_true, {c.v_n, c.alpha}, noise_stream);
    } catch (const std::exception& e) {
      for (std::size_t a = 0; a < per_cell; ++a) rows[ci * per_cell + a].status = detail::sanitize_status(e.what());
      return;
    }

    for (std::size_t a = 0; a < per_cell; ++a) {
      SweepRow& row = rows[ci * per_cell + a];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        Vector x_hat;
        const std::string& algo = row.algorithm;
        if (algo == "gen" || algo == "gen_noise_aware") {
          const auto r = algo == "gen" ? reconstruct_gen(*G, ens.A, obs.y, cfg.gen, st.algorithm)
                                       : reconstruct_gen_noise_aware(*G, ens.A, obs.y, c.alpha, cfg.gen, st.algorithm);
          x_hat = r.x_hat;
          row.best_loss = r.best_loss;
        } else if (algo == "gen_pgd") {
          const auto r = gen_pgd(*G, ens.A, obs.y, cfg.pgd, st.algorithm);
          x_hat = r.x_hat;
          row.best_loss = r.best_loss;
        } else if (algo == "biht") {
          x_hat = biht(ens.A, obs.y, K, cfg.biht);
        } else {
          x_hat = yp_convex(ens.A, obs.y, budget).x;
        }
        row.mse = mse(x_true, x_hat);
        row.hamming = hamming_dist(sign_vector(matvec(ens.A, x_hat)), obs.y);
        row.nmse = nmse(x_true, x_hat);
      } catch (const std::exception& e) {
        row.status = detail::sanitize_status(e.what());
      }
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  });
  return rows;
}

namespace detail {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline const char* kSweepHeader =
    "algorithm,m,v_n,alpha,v_delta,trial,mse,nmse,hamming,best_loss,status,master_seed,signal_stream,"
    "ensemble_stream,noise_stream,algorithm_stream,config_hash,seconds";

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "# results_format=" << kResultsFormat << '\n' << kSweepHeader << '\n';
  for (const auto& r : rows) {
    out << r.algorithm << ',' << r.m << ',' << detail::fmt_double(r.v_n) << ',' << detail::fmt_double(r.alpha) << ','
        << detail::fmt_double(r.v_delta) << ',' << r.trial << ',' << detail::fmt_double(r.mse) << ','
        << detail::fmt_double(r.nmse) << ',' << detail::fmt_double(r.hamming) << ','
        << detail::fmt_double(r.best_loss) << ',' << r.status << ',' << r.master_seed << ',' << r.signal_stream << ','
        << r.ensemble_stream << ',' << r.noise_stream << ',' << r.algorithm_stream << ',' << r.config_hash << ','
        << detail::fmt_double(r.seconds) << '\n';
  }
}

// ---- theory checks ------------------------------------------------------------

struct TheoryRow {
  std::string quantity;
  std::uint64_t m_or_trials = 0;
  double estimate = 0.0;
  double target = 0.0;
  double abs_error = 0.0;
  bool pass = false;
};

/// Concentration, mean-width, Lipschitz and calculator checks at fixed sizes. Never throws on a failed
/// check; the row just says pass=false.
inline std::vector<TheoryRow> theory_check(std::uint64_t seed = kReferenceSeed, std::size_t threads = 1) {
  const RngStream root(seed, 0);
  const double root2pi = std::sqrt(2.0 / std::numbers::pi);
  std::vector<TheoryRow> rows;
  auto add = [&](std::string q, std::uint64_t count, double est, double target, double tol) {
    const double err = std::abs(est - target);
    rows.push_back({std::move(q), count, est, target, err, err <= tol});
  };

  {
    const std::size_t m = 200000, n = 32;
    RngStream s = derive_stream(root, 1);
    const auto ens = make_ensemble(EnsembleKind::gaussian_iid, m, n, s);
    Vector x = sample_gaussian(s, n, 0.0, 1.0);
    x = normalize_unit(x);
    const auto clean = quantize(ens, x, {}, s);
    add("f_statistic_sign", m, f_statistic(ens.A, clean.y, x), root2pi, 0.01);
    const auto flipped = quantize(ens, x, {0.0, 0.85}, s);
    add("f_statistic_flip_alpha_0.85", m, f_statistic(ens.A, flipped.y, x), 0.7 * root2pi, 0.01);
  }
  {
    const std::size_t trials = 100000;
    const std::vector<Vector> pair{{1.0, 0.0, 0.0}, {-1.0, 0.0, 0.0}};
    const double est = mean_width_mc(pair, trials, derive_stream(root, 2));
    const double target = 2.0 * root2pi;
    add("mean_width_two_point", trials, est, target, 0.02 * target);
    add("mean_width_singleton", trials, mean_width_mc({{0.3, -0.2, 0.9}}, trials, derive_stream(root, 3)), 0.0, 0.0);
  }
  {
    // Random nets: the largest observed ||G(z)-G(z')||/||z-z'|| against the bound.
    const std::size_t nets = 20, pairs = 1000;
    RngStream s = derive_stream(root, 4);
    double worst = 0.0;
    std::vector<double> ratios(nets);
    parallel_for(nets, threads, [&](std::size_t k) {
      RngStream ns = derive_stream(s, k);
      const std::size_t depth = 1 + ns.uniform_index(4);
      std::vector<MlpLayer> layers;
      std::size_t in = 2 + ns.uniform_index(7);
      for (std::size_t l = 0; l < depth; ++l) {
        const std::size_t out = 2 + ns.uniform_index(15);
        const auto act = static_cast<ActivationKind>(ns.uniform_index(4));
        layers.push_back({DenseMatrix(out, in, sample_gaussian(ns, out * in, 0.0, 0.25)),
                          sample_gaussian(ns, out, 0.0, 0.25), Activation{act}});
        in = out;
      }
      const MlpNetwork net(std::move(layers));
      const double bound = lipschitz_bound(net);
      double r = 0.0;
      for (std::size_t p = 0; p < pairs; ++p) {
        const Vector a = sample_gaussian(ns, net.input_dim(), 0.0, 1.0);
        const Vector b = sample_gaussian(ns, net.input_dim(), 0.0, 1.0);
        Vector d(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
        const Vector ga = forward(net, a);
        const Vector gb = forward(net, b);
        Vector dg(ga.size());
        for (std::size_t i = 0; i < ga.size(); ++i) dg[i] = ga[i] - gb[i];
        r = std::max(r, norm2(dg) / (norm2(d) * bound));
      }
      ratios[k] = r;
    });
    for (double r : ratios) worst = std::max(worst, r);
    rows.push_back({"lipschitz_ratio_max", nets * pairs, worst, 1.0, std::max(0.0, worst - 1.0), worst <= 1.0});
  }
  {
    const auto b = measurement_bound(8, 3, 3, 1.0, 64, 0.5, 0.5);
    add("measurement_bound_example", 1, static_cast<double>(b.m), 621.0, 0.0);
    add("covering_number_example", 1, covering_number_bound(1.0, 1.0, 3.0), 64.0, 0.0);
  }
  return rows;
}

inline void write_theory_csv(std::ostream& out, const std::vector<TheoryRow>& rows) {
  out << "# results_format=" << kResultsFormat << '\n' << "quantity,m_or_trials,estimate,target,abs_error,pass\n";
  for (const auto& r : rows)
    out << r.quantity << ',' << r.m_or_trials << ',' << detail::fmt_double(r.estimate) << ','
        << detail::fmt_double(r.target) << ',' << detail::fmt_double(r.abs_error) << ',' << (r.pass ? "true" : "false")
        << '\n';
}

}  // namespace onebit
