// dssm: simulate data, train, predict, evaluate and generate from the command line.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dssm/bouncing_ball.hpp"
#include "dssm/dssm.hpp"
#include "dssm/eval.hpp"
#include "dssm/lotka_volterra.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dssm;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::size_t threads = 1;
};

void log(const std::string& msg) { std::cerr << "[dssm] " << msg << '\n'; }

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path out_dir(const Globals& g, const std::string& fallback = ".") {
  fs::path dir = g.out_dir.empty() ? fs::path(fallback) : fs::path(g.out_dir);
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

// Scalars that may be NaN become null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double mean_of(const std::vector<double>& v) {
  return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

// ---- models on disk --------------------------------------------------------------

struct LoadedModel {
  cli::RunConfig config;
  std::optional<DSSMModel> dssm;
  std::optional<LstmBaseline> baseline;

  bool is_baseline() const { return baseline.has_value(); }
};

LoadedModel load_model(const std::string& checkpoint, const Globals& g) {
  const fs::path ckpt(checkpoint);
  const fs::path cfg_path = g.config.empty() ? ckpt.parent_path() / "resolved_config.txt" : fs::path(g.config);
  LoadedModel m;
  m.config = cli::load_run_config(cfg_path);
  if (m.config.obs_dim_auto || m.config.likelihood_auto) {
    throw cli::ConfigError({cfg_path.string() + ": obs_dim and likelihood must be resolved to load a checkpoint"});
  }
  auto params = nn::load_checkpoint(ckpt);
  if (m.config.model.mode == Mode::kLstmBaseline) {
    m.baseline.emplace(m.config.baseline(), std::move(params));
  } else {
    m.dssm.emplace(m.config.model, std::move(params));
  }
  return m;
}

std::vector<std::size_t> all_ids(const data::SequenceDataset& ds) {
  std::vector<std::size_t> ids(ds.n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

std::vector<std::size_t> parse_ids(const std::string& text, std::size_t n) {
  std::vector<std::size_t> ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t id = 0;
    try {
      std::size_t used = 0;
      id = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad sequence id '" + item + "'");
    }
    if (id >= n) throw std::invalid_argument("sequence id " + item + " out of range (dataset has " + std::to_string(n) + ")");
    ids.push_back(id);
  }
  if (ids.empty()) throw std::invalid_argument("no sequence ids given");
  return ids;
}

// Appends B sequences given as per-step O x B tensors to a row-major buffer.
void append_sequences(std::vector<double>& out, const std::vector<Tensor>& steps) {
  if (steps.empty()) return;
  const std::size_t O = steps[0].dim(0);
  const std::size_t B = steps[0].dim(1);
  for (std::size_t b = 0; b < B; ++b) {
    for (const auto& s : steps) {
      for (std::size_t o = 0; o < O; ++o) out.push_back(s.at(o, b));
    }
  }
}

data::SequenceDataset real_valued(std::size_t n, std::size_t steps, std::size_t obs_dim, std::vector<double> values) {
  data::SequenceDataset ds;
  ds.n = n;
  ds.steps = steps;
  ds.obs_dim = obs_dim;
  ds.likelihood = Likelihood::kGaussian;
  ds.observations = std::move(values);
  ds.splits.assign(n, data::Split::kTest);
  return ds;
}

std::size_t resolution_of(const data::SequenceDataset& ds) {
  const auto r = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(ds.obs_dim))));
  if (r * r != ds.obs_dim) throw std::invalid_argument("bernoulli data is not a square frame");
  return r;
}

// ---- simulate ----------------------------------------------------------------------

struct SimulateArgs {
  std::size_t n = 2000;
  double noise = 0.5;
  std::size_t prefix = 50;
  std::size_t horizon = 150;
  std::size_t directions = 16;
  std::size_t per_direction = 200;
  std::size_t res = 16;
  std::size_t steps = 70;
  std::string out;
};

json simulate(const std::string& kind, const SimulateArgs& a, const Globals& g) {
  const std::uint64_t seed = g.seed.value_or(0);
  const fs::path out = a.out.empty() ? out_dir(g) / (kind + ".dsq") : fs::path(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  data::SequenceDataset ds;
  json meta = {{"kind", kind}, {"seed", seed}};
  if (kind == "lv") {
    data::LVProtocol p;
    data::LVGenerationStats stats;
    ds = data::make_lv_dataset(a.n, seed, a.noise, p, g.threads, &stats);
    meta.update({{"n", a.n},
                 {"noise_sigma", a.noise},
                 {"alpha_range", {p.alpha_min, p.alpha_max}},
                 {"x0", {p.x0[0], p.x0[1]}},
                 {"dt", p.dt},
                 {"points", p.points},
                 {"time_horizon", p.horizon},
                 {"stride", p.stride()},
                 {"resampled_blowups", stats.resampled}});
  } else if (kind == "lv-benchmark") {
    data::LVProtocol p;
    Rng rng(seed);
    ds.n = a.n;
    ds.steps = a.prefix + a.horizon;
    ds.obs_dim = 2;
    ds.n_factors = 4;
    ds.splits.assign(a.n, data::Split::kTest);
    for (std::size_t i = 0; i < a.n; ++i) {
      const auto b = data::make_lv_benchmark(a.noise, rng, p, a.prefix, a.horizon);
      ds.observations.insert(ds.observations.end(), b.prefix.begin(), b.prefix.end());
      ds.observations.insert(ds.observations.end(), b.truth.begin(), b.truth.end());
      ds.factors.insert(ds.factors.end(), p.benchmark.alpha.begin(), p.benchmark.alpha.end());
    }
    meta.update({{"realisations", a.n},
                 {"noise_sigma", a.noise},
                 {"alpha", p.benchmark.alpha},
                 {"prefix_steps", a.prefix},
                 {"horizon_steps", a.horizon},
                 {"layout", "noisy prefix followed by the noise-free continuation"}});
  } else if (kind == "ball") {
    data::BallProtocol p;
    p.resolution = a.res;
    p.steps = a.steps;
    data::BallHoldout holdout;
    ds = data::make_ball_dataset(a.directions, a.per_direction, seed, p, g.threads, &holdout);
    meta.update({{"directions", a.directions},
                 {"per_direction", a.per_direction},
                 {"resolution", a.res},
                 {"steps", a.steps},
                 {"radius_px", p.radius_px},
                 {"gravity_magnitude", p.gravity_magnitude()},
                 {"max_initial_speed", p.max_initial_speed},
                 {"val_direction", holdout.val_direction},
                 {"test_direction", holdout.test_direction},
                 {"main_directions", data::main_directions(a.directions)}});
  } else {
    throw std::invalid_argument("unknown simulation kind '" + kind + "'");
  }
  data::write_dsq(out, ds);
  meta["file"] = out.string();
  meta["created"] = timestamp();
  write_json(fs::path(out.string() + ".json"), meta);
  log("wrote " + std::to_string(ds.n) + " sequences to " + out.string());
  return {{"command", "simulate"}, {"kind", kind}, {"file", out.string()}, {"n", ds.n}, {"steps", ds.steps}};
}

// ---- train ---------------------------------------------------------------------------

json train_cmd(const Globals& g) {
  if (g.config.empty()) throw std::invalid_argument("train needs --config");
  cli::RunConfig cfg = cli::load_run_config(g.config);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.schedule.seed = *g.seed;
  }
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  if (cfg.train_data.empty()) throw cli::ConfigError({"train_data is required"});
  cfg.threads = g.threads;
  const auto ds = data::read_dsq(cfg.train_data);
  cfg.resolve_data(ds);
  if (auto p = cfg.problems(); !p.empty()) throw cli::ConfigError(p);
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  cli::write_run_config(dir / "resolved_config.txt", cfg);

  auto on_epoch = [](const EpochMetrics& m) {
    std::ostringstream os;
    os << "epoch " << m.epoch << " loss " << m.train_loss << " val " << m.val_loss << " nll " << m.nll << " kl_D "
       << m.kl_domain << " kl_S0 " << m.kl_initial << " kl_beta " << m.kl_beta << " mm " << m.mm << " anneal "
       << m.anneal << " (" << m.seconds << " s)";
    log(os.str());
  };
  TrainResult r;
  nn::ParamStore final_params;
  if (cfg.model.mode == Mode::kLstmBaseline) {
    LstmBaseline m(cfg.baseline(), cfg.seed);
    r = train_lstm_baseline(m, ds, cfg.schedule, on_epoch);
    final_params = m.params();
  } else {
    DSSMModel m(cfg.model, cfg.seed);
    r = train(m, ds, cfg.schedule, on_epoch);
    final_params = m.params();
  }
  nn::save_checkpoint(dir / "final.dsm", final_params, false);
  nn::save_checkpoint(dir / "best.dsm", r.best, false);
  write_metrics_csv((dir / "metrics.csv").string(), r.history);
  json summary = {{"command", "train"},
                  {"mode", to_string(cfg.model.mode)},
                  {"epochs_run", r.history.size()},
                  {"best_epoch", r.best_epoch},
                  {"best_val_loss", num(r.best_val_loss)},
                  {"iterations", r.iterations},
                  {"stopped_early", r.stopped_early},
                  {"final_train_loss", r.history.empty() ? json(nullptr) : num(r.history.back().train_loss)},
                  {"out_dir", dir.string()}};
  write_json(dir / "train.json", summary);
  return summary;
}

// ---- predict ---------------------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::string data;
  std::size_t prefix = 50;
  std::size_t horizon = 150;
  std::size_t batch = 100;
};

json predict_cmd(const PredictArgs& a, const Globals& g) {
  auto model = load_model(a.checkpoint, g);
  const auto ds = data::read_dsq(a.data);
  if (ds.obs_dim != model.config.model.obs_dim) throw std::invalid_argument("dataset and checkpoint disagree on obs_dim");
  if (a.prefix < 1 || a.horizon < 1 || a.prefix + a.horizon > ds.steps) {
    throw std::invalid_argument("need prefix >= 1, horizon >= 1 and prefix + horizon <= " + std::to_string(ds.steps));
  }
  const bool ball = ds.likelihood == Likelihood::kBernoulli;
  const std::size_t res = ball ? resolution_of(ds) : 0;
  const fs::path dir = out_dir(g);

  std::vector<double> predictions;
  std::vector<double> mse;
  std::vector<eval::BallErrorCurve> curves;
  const auto ids = all_ids(ds);
  for (std::size_t start = 0; start < ds.n; start += a.batch) {
    const std::vector<std::size_t> chunk(ids.begin() + static_cast<std::ptrdiff_t>(start),
                                         ids.begin() + static_cast<std::ptrdiff_t>(std::min(ds.n, start + a.batch)));
    const auto prefix = data::make_batch(ds, chunk, 0, a.prefix);
    const auto pred = model.is_baseline() ? model.baseline->rollout(prefix, a.horizon)
                                          : predict(*model.dssm, prefix, a.horizon);
    std::vector<double> flat;
    append_sequences(flat, pred);
    const std::size_t per_seq = a.horizon * ds.obs_dim;
    for (std::size_t k = 0; k < chunk.size(); ++k) {
      const std::span<const double> p(flat.data() + k * per_seq, per_seq);
      const auto truth = ds.sequence(chunk[k]).subspan(a.prefix * ds.obs_dim, per_seq);
      mse.push_back(eval::prediction_mse(eval::Matrix(a.horizon, ds.obs_dim, {p.begin(), p.end()}),
                                         eval::Matrix(a.horizon, ds.obs_dim, {truth.begin(), truth.end()})));
      if (ball) curves.push_back(eval::ball_position_error(p, truth, res));
    }
    predictions.insert(predictions.end(), flat.begin(), flat.end());
  }

  data::write_dsq(dir / "predictions.dsq", real_valued(ds.n, a.horizon, ds.obs_dim, std::move(predictions)));
  {
    std::ofstream out(dir / "predict_metrics.csv");
    out << "id,mse" << (ball ? ",ball_mean_error,ball_failure_rate" : "") << '\n';
    for (std::size_t i = 0; i < ds.n; ++i) {
      out << i << ',' << mse[i];
      if (ball) out << ',' << curves[i].mean_detected << ',' << curves[i].failure_rate;
      out << '\n';
    }
  }
  json summary = {{"command", "predict"},
                  {"n", ds.n},
                  {"prefix", a.prefix},
                  {"horizon", a.horizon},
                  {"mse_mean", num(mean_of(mse))},
                  {"mse_std", num(std_of(mse))}};
  if (ball) {
    std::ofstream out(dir / "ball_error_curve.csv");
    out << "step,mean_distance,failure_rate\n";
    std::vector<double> per_step_mean(a.horizon);
    for (std::size_t t = 0; t < a.horizon; ++t) {
      std::vector<double> d;
      for (const auto& c : curves) {
        if (c.distance[t]) d.push_back(*c.distance[t]);
      }
      per_step_mean[t] = mean_of(d);
      const double failure = 1.0 - static_cast<double>(d.size()) / static_cast<double>(curves.size());
      out << t + 1 << ',' << per_step_mean[t] << ',' << failure << '\n';
    }
    std::vector<double> overall;
    for (const auto& c : curves) {
      if (std::isfinite(c.mean_detected)) overall.push_back(c.mean_detected);
    }
    std::vector<double> failures;
    for (const auto& c : curves) failures.push_back(c.failure_rate);
    summary["ball_error_mean"] = num(mean_of(overall));
    summary["ball_failure_rate"] = num(mean_of(failures));
    summary["ball_error_curve"] = json::array();
    for (double v : per_step_mean) summary["ball_error_curve"].push_back(num(v));
  }
  write_json(dir / "predict.json", summary);
  summary.erase("ball_error_curve");
  return summary;
}

// ---- eval-disentangle --------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string benchmark;
  std::size_t bench_prefix = 50;
  eval::ForestConfig forest;
  bool no_bootstrap = false;
};

json eval_cmd(EvalArgs a, const Globals& g) {
  auto model = load_model(a.checkpoint, g);
  if (model.is_baseline()) throw std::invalid_argument("eval-disentangle needs a dssm or ssm checkpoint");
  const auto ds = data::read_dsq(a.data);
  if (ds.n_factors == 0) throw std::invalid_argument("dataset " + a.data + " has no generative factors");
  a.forest.bootstrap = !a.no_bootstrap;
  a.forest.seed = g.seed.value_or(a.forest.seed);
  a.forest.threads = g.threads;
  const fs::path dir = out_dir(g);

  const auto table = eval::export_embeddings(*model.dssm, ds);
  eval::write_embeddings_csv((dir / "embeddings.csv").string(), table);
  // Forests are fitted on the training split only.
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.n; ++i) {
    if (ds.splits[i] == data::Split::kTrain) rows.push_back(i);
  }
  if (rows.empty()) rows = all_ids(ds);
  const std::size_t dim = table.embeddings.cols;
  eval::Matrix emb(rows.size(), dim);
  eval::Matrix fac(rows.size(), ds.n_factors);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < dim; ++j) emb(r, j) = table.embeddings(rows[r], j);
    for (std::size_t k = 0; k < ds.n_factors; ++k) fac(r, k) = table.factors(rows[r], k);
  }
  std::vector<eval::RegressionForest> forests;
  const auto matrix = eval::dependency_matrix(emb, fac, a.forest, &forests);
  eval::write_matrix_csv((dir / "dependency_matrix.csv").string(), matrix);
  const auto score = eval::disentanglement_score(matrix.values);
  bool degenerate = false;
  for (const auto& f : forests) degenerate = degenerate || f.degenerate;

  json summary = {{"command", "eval-disentangle"},
                  {"delta", model.config.model.delta},
                  {"mode", to_string(model.config.model.mode)},
                  {"score", score.overall},
                  {"per_factor_scores", score.per_factor},
                  {"degenerate", degenerate},
                  {"n_fit", rows.size()}};
  if (!a.benchmark.empty()) {
    const auto bench = data::read_dsq(a.benchmark);
    if (a.bench_prefix < 1 || a.bench_prefix > bench.steps) throw std::invalid_argument("bad --bench-prefix");
    const auto x = data::make_batch(bench, all_ids(bench), 0, a.bench_prefix);
    const Tensor mu = domain_mean(*model.dssm, x);
    std::vector<std::vector<double>> inferred(ds.n_factors);
    std::ofstream out(dir / "inferred_parameters.csv");
    out << "realisation";
    for (std::size_t k = 0; k < ds.n_factors; ++k) out << ",factor" << k + 1;
    out << '\n';
    for (std::size_t b = 0; b < bench.n; ++b) {
      std::vector<double> e(dim);
      for (std::size_t j = 0; j < dim; ++j) e[j] = mu.at(j, b);
      const auto alpha = eval::infer_parameters(forests, e);
      out << b;
      for (std::size_t k = 0; k < alpha.size(); ++k) {
        inferred[k].push_back(alpha[k]);
        out << ',' << alpha[k];
      }
      out << '\n';
    }
    json inf = json::array();
    for (const auto& v : inferred) inf.push_back({{"mean", mean_of(v)}, {"std", std_of(v)}});
    summary["inferred"] = inf;
    if (bench.n_factors == ds.n_factors && bench.n > 0) {
      summary["true_factors"] = std::vector<double>(bench.factors.begin(), bench.factors.begin() + bench.n_factors);
    }
  }
  write_json(dir / "disentangle.json", summary);
  return summary;
}

// ---- swap / generate ---------------------------------------------------------------------

struct SwapArgs {
  std::string checkpoint;
  std::string data;
  std::size_t base = 0;
  std::string targets;
  std::size_t horizon = 40;
  std::size_t prefix = 0;
  std::string s0_from = "target";
};

void write_trajectories(const fs::path& path, const std::vector<double>& frames, std::size_t n, std::size_t steps,
                        std::size_t res) {
  std::ofstream out(path);
  out << "sequence,step,col,row\n";
  const std::size_t frame = res * res;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < steps; ++t) {
      const std::span<const double> f(frames.data() + (i * steps + t) * frame, frame);
      const auto pos = data::detect_ball_position(f, res);
      out << i << ',' << t + 1 << ',';
      if (pos) {
        out << (*pos)[0] << ',' << (*pos)[1];
      } else {
        out << ',';
      }
      out << '\n';
    }
  }
}

json swap_cmd(const SwapArgs& a, const Globals& g) {
  auto model = load_model(a.checkpoint, g);
  if (model.is_baseline()) throw std::invalid_argument("swap needs a dssm or ssm checkpoint");
  const auto ds = data::read_dsq(a.data);
  if (a.base >= ds.n) throw std::invalid_argument("base id out of range");
  if (a.horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  const auto targets = parse_ids(a.targets, ds.n);
  const std::size_t prefix = a.prefix == 0 ? ds.steps : a.prefix;
  if (prefix > ds.steps) throw std::invalid_argument("prefix longer than the sequences");
  const auto source = a.s0_from == "base" ? InitialStateSource::kBase : InitialStateSource::kTarget;
  if (a.s0_from != "base" && a.s0_from != "target") throw std::invalid_argument("--s0-from must be base or target");

  const std::vector<std::size_t> base_ids(targets.size(), a.base);
  const auto base = data::make_batch(ds, base_ids, 0, prefix);
  const auto target = data::make_batch(ds, targets, 0, prefix);
  const auto frames = swap_domain(*model.dssm, base, target, a.horizon, source);
  std::vector<double> flat;
  append_sequences(flat, frames);
  const fs::path dir = out_dir(g);
  auto out = real_valued(targets.size(), a.horizon, ds.obs_dim, flat);
  data::write_dsq(dir / "swap.dsq", out);
  if (ds.likelihood == Likelihood::kBernoulli) {
    write_trajectories(dir / "swap_trajectories.csv", flat, targets.size(), a.horizon, resolution_of(ds));
  }
  json summary = {{"command", "swap"},  {"base", a.base},          {"targets", targets},
                  {"horizon", a.horizon}, {"recognition_steps", prefix}, {"s0_from", a.s0_from},
                  {"file", (dir / "swap.dsq").string()}};
  write_json(dir / "swap.json", summary);
  return summary;
}

struct GenerateArgs {
  std::string checkpoint;
  std::size_t n = 10;
  std::size_t length = 70;
};

json generate_cmd(const GenerateArgs& a, const Globals& g) {
  auto model = load_model(a.checkpoint, g);
  if (model.is_baseline()) throw std::invalid_argument("generate needs a dssm or ssm checkpoint");
  if (a.length < 1) throw std::invalid_argument("length must be at least 1");
  const std::uint64_t seed = g.seed.value_or(0);
  Rng rng(seed);
  std::vector<double> flat;
  if (a.n > 0) append_sequences(flat, generate_unconditional(*model.dssm, rng, a.length, a.n));
  const std::size_t obs = model.config.model.obs_dim;
  const fs::path dir = out_dir(g);
  data::write_dsq(dir / "generated.dsq", real_valued(a.n, a.length, obs, flat));
  json summary = {{"command", "generate"}, {"n", a.n}, {"length", a.length}, {"seed", seed},
                  {"file", (dir / "generated.dsq").string()}};
  if (model.config.model.likelihood == Likelihood::kBernoulli && a.n > 0) {
    const std::size_t res = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(obs))));
    std::size_t good = 0;
    for (std::size_t i = 0; i < a.n; ++i) {
      std::size_t detected = 0;
      for (std::size_t t = 0; t < a.length; ++t) {
        const std::span<const double> f(flat.data() + (i * a.length + t) * obs, obs);
        if (data::detect_ball_position(f, res)) ++detected;
      }
      if (static_cast<double>(detected) >= 0.9 * static_cast<double>(a.length)) ++good;
    }
    summary["fraction_detectable"] = static_cast<double>(good) / static_cast<double>(a.n);
    write_trajectories(dir / "generated_trajectories.csv", flat, a.n, a.length, res);
  }
  json sidecar = summary;
  sidecar["created"] = timestamp();
  sidecar["checkpoint"] = a.checkpoint;
  write_json(dir / "generated.dsq.json", sidecar);
  return summary;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disentangled state-space models: simulate, train, predict, evaluate, generate"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "key = value run config");
  auto* seed_opt = app.add_option("--seed", seed, "master seed");
  app.add_option("--out-dir", g.out_dir, "output directory");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);

  SimulateArgs sim;
  std::string kind;
  auto* sim_cmd = app.add_subcommand("simulate", "generate a dataset file");
  sim_cmd->add_option("kind", kind, "lv | lv-benchmark | ball")->required()->check(
      CLI::IsMember({"lv", "lv-benchmark", "ball"}));
  sim_cmd->add_option("--n", sim.n, "sequences (lv) or noise realisations (lv-benchmark)");
  auto* noise_opt = sim_cmd->add_option("--noise", sim.noise, "observation noise std (default 0.5, benchmark 1.0)");
  sim_cmd->add_option("--prefix", sim.prefix, "benchmark recognition steps");
  sim_cmd->add_option("--horizon", sim.horizon, "benchmark prediction steps");
  sim_cmd->add_option("--directions", sim.directions, "gravity directions");
  sim_cmd->add_option("--per-direction", sim.per_direction, "sequences per direction");
  sim_cmd->add_option("--res", sim.res, "frame resolution");
  sim_cmd->add_option("--steps", sim.steps, "frames per sequence");
  sim_cmd->add_option("--out", sim.out, "output .dsq path");

  auto* train_sub = app.add_subcommand("train", "train a model from --config");

  PredictArgs pa;
  auto* pred_cmd = app.add_subcommand("predict", "filter a prefix and roll out");
  pred_cmd->add_option("--checkpoint", pa.checkpoint)->required();
  pred_cmd->add_option("--data", pa.data)->required();
  pred_cmd->add_option("--prefix", pa.prefix);
  pred_cmd->add_option("--horizon", pa.horizon);
  pred_cmd->add_option("--batch", pa.batch)->check(CLI::PositiveNumber);

  EvalArgs ea;
  auto* eval_sub = app.add_subcommand("eval-disentangle", "dependency matrix and disentanglement score");
  eval_sub->add_option("--checkpoint", ea.checkpoint)->required();
  eval_sub->add_option("--data", ea.data)->required();
  eval_sub->add_option("--benchmark", ea.benchmark, "lv-benchmark file for parameter inference");
  eval_sub->add_option("--bench-prefix", ea.bench_prefix);
  eval_sub->add_option("--trees", ea.forest.n_trees)->check(CLI::PositiveNumber);
  eval_sub->add_option("--max-depth", ea.forest.max_depth);
  eval_sub->add_option("--min-leaf", ea.forest.min_leaf)->check(CLI::PositiveNumber);
  eval_sub->add_option("--feature-subsample", ea.forest.feature_subsample, "features per split (0: all)");
  eval_sub->add_flag("--no-bootstrap", ea.no_bootstrap);

  SwapArgs sa;
  auto* swap_sub = app.add_subcommand("swap", "generate with another sequence's domain");
  swap_sub->add_option("--checkpoint", sa.checkpoint)->required();
  swap_sub->add_option("--data", sa.data)->required();
  swap_sub->add_option("--base", sa.base, "sequence providing D")->required();
  swap_sub->add_option("--targets", sa.targets, "comma-separated sequence ids")->required();
  swap_sub->add_option("--horizon", sa.horizon);
  swap_sub->add_option("--prefix", sa.prefix, "recognition steps (0: whole sequence)");
  swap_sub->add_option("--s0-from", sa.s0_from, "target | base");

  GenerateArgs ga;
  auto* gen_sub = app.add_subcommand("generate", "sample sequences from the prior");
  gen_sub->add_option("--checkpoint", ga.checkpoint)->required();
  gen_sub->add_option("--n", ga.n);
  gen_sub->add_option("--length", ga.length);

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count() > 0) g.seed = seed;
  if (kind == "lv-benchmark" && noise_opt->count() == 0) {
    sim.noise = 1.0;
    if (sim_cmd->get_option("--n")->count() == 0) sim.n = 100;
  }

  try {
    json summary;
    if (sim_cmd->parsed()) summary = simulate(kind, sim, g);
    if (train_sub->parsed()) summary = train_cmd(g);
    if (pred_cmd->parsed()) summary = predict_cmd(pa, g);
    if (eval_sub->parsed()) summary = eval_cmd(ea, g);
    if (swap_sub->parsed()) summary = swap_cmd(sa, g);
    if (gen_sub->parsed()) summary = generate_cmd(ga, g);
    std::cout << summary.dump() << std::endl;
  } catch (const cli::ConfigError& e) {
    std::cerr << "dssm: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "dssm: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
