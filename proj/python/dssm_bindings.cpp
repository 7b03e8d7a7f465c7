#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dssm/bouncing_ball.hpp"
#include "dssm/dssm.hpp"
#include "dssm/eval.hpp"
#include "dssm/lotka_volterra.hpp"

namespace py = pybind11;
using namespace dssm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (B, T, O) array -> T tensors of shape O x B.
std::vector<Tensor> to_steps(const Array& x) {
  if (x.ndim() != 3) throw std::invalid_argument("expected an array of shape (batch, steps, obs_dim)");
  const auto B = static_cast<std::size_t>(x.shape(0));
  const auto T = static_cast<std::size_t>(x.shape(1));
  const auto O = static_cast<std::size_t>(x.shape(2));
  auto v = x.unchecked<3>();
  std::vector<Tensor> steps;
  for (std::size_t t = 0; t < T; ++t) {
    Tensor s = Tensor::zeros({O, B});
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t o = 0; o < O; ++o) s.at(o, b) = v(b, t, o);
    }
    steps.push_back(std::move(s));
  }
  return steps;
}

Array from_steps(const std::vector<Tensor>& steps) {
  if (steps.empty()) return Array(std::vector<py::ssize_t>{0, 0, 0});
  const std::size_t O = steps[0].dim(0);
  const std::size_t B = steps[0].dim(1);
  Array out({B, steps.size(), O});
  auto v = out.mutable_unchecked<3>();
  for (std::size_t t = 0; t < steps.size(); ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t o = 0; o < O; ++o) v(b, t, o) = steps[t].at(o, b);
    }
  }
  return out;
}

eval::Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
  return eval::Matrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                      std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const eval::Matrix& m) {
  Array out({m.rows, m.cols});
  std::copy(m.values.begin(), m.values.end(), out.mutable_data());
  return out;
}

py::dict dataset_to_dict(const data::SequenceDataset& ds) {
  Array obs({ds.n, ds.steps, ds.obs_dim});
  std::copy(ds.observations.begin(), ds.observations.end(), obs.mutable_data());
  Array factors({ds.n, ds.n_factors});
  std::copy(ds.factors.begin(), ds.factors.end(), factors.mutable_data());
  std::vector<std::string> splits;
  for (auto s : ds.splits) splits.push_back(s == data::Split::kTrain ? "train" : s == data::Split::kVal ? "val" : "test");
  py::dict d;
  d["observations"] = obs;
  d["factors"] = factors;
  d["splits"] = splits;
  d["likelihood"] = to_string(ds.likelihood);
  return d;
}

data::SequenceDataset dict_to_dataset(const py::dict& d) {
  const Array obs = d["observations"].cast<Array>();
  if (obs.ndim() != 3) throw std::invalid_argument("observations must have shape (n, steps, obs_dim)");
  data::SequenceDataset ds;
  ds.n = static_cast<std::size_t>(obs.shape(0));
  ds.steps = static_cast<std::size_t>(obs.shape(1));
  ds.obs_dim = static_cast<std::size_t>(obs.shape(2));
  ds.observations.assign(obs.data(), obs.data() + obs.size());
  if (d.contains("factors")) {
    const Array f = d["factors"].cast<Array>();
    ds.n_factors = f.ndim() == 2 ? static_cast<std::size_t>(f.shape(1)) : 0;
    ds.factors.assign(f.data(), f.data() + f.size());
  }
  ds.splits.assign(ds.n, data::Split::kTrain);
  if (d.contains("splits")) {
    const auto tags = d["splits"].cast<std::vector<std::string>>();
    if (tags.size() != ds.n) throw std::invalid_argument("one split tag per sequence");
    for (std::size_t i = 0; i < ds.n; ++i) {
      if (tags[i] == "train") ds.splits[i] = data::Split::kTrain;
      else if (tags[i] == "val") ds.splits[i] = data::Split::kVal;
      else if (tags[i] == "test") ds.splits[i] = data::Split::kTest;
      else throw std::invalid_argument("unknown split tag '" + tags[i] + "'");
    }
  }
  if (d.contains("likelihood")) ds.likelihood = likelihood_from_string(d["likelihood"].cast<std::string>());
  ds.validate();
  return ds;
}

py::list history_to_list(const std::vector<EpochMetrics>& history) {
  py::list out;
  for (const auto& m : history) {
    py::dict d;
    d["epoch"] = m.epoch;
    d["train_loss"] = m.train_loss;
    d["val_loss"] = m.val_loss;
    d["nll"] = m.nll;
    d["kl_domain"] = m.kl_domain;
    d["kl_initial"] = m.kl_initial;
    d["kl_beta"] = m.kl_beta;
    d["mm"] = m.mm;
    d["anneal"] = m.anneal;
    d["lr"] = m.lr;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_dssm, m) {
  m.doc() = "Disentangled state-space models trained as variational Bayesian filters";

  py::enum_<Mode>(m, "Mode")
      .value("dssm", Mode::kDssm)
      .value("ssm", Mode::kSsm)
      .value("lstm_baseline", Mode::kLstmBaseline);
  py::enum_<Likelihood>(m, "Likelihood")
      .value("gaussian", Likelihood::kGaussian)
      .value("bernoulli", Likelihood::kBernoulli);

  py::class_<DSSMConfig>(m, "DSSMConfig")
      .def(py::init<>())
      .def_readwrite("obs_dim", &DSSMConfig::obs_dim)
      .def_readwrite("state_dim", &DSSMConfig::state_dim)
      .def_readwrite("domain_dim", &DSSMConfig::domain_dim)
      .def_readwrite("hidden_dim", &DSSMConfig::hidden_dim)
      .def_readwrite("lstm_layers", &DSSMConfig::lstm_layers)
      .def_readwrite("likelihood", &DSSMConfig::likelihood)
      .def_readwrite("sigma_omega", &DSSMConfig::sigma_omega)
      .def_readwrite("delta", &DSSMConfig::delta)
      .def_readwrite("mm_weight", &DSSMConfig::mm_weight)
      .def_readwrite("kl_anneal_increment", &DSSMConfig::kl_anneal_increment)
      .def_readwrite("recon_scale", &DSSMConfig::recon_scale)
      .def_readwrite("mode", &DSSMConfig::mode)
      .def("validate", &DSSMConfig::validate);

  py::class_<TrainSchedule>(m, "TrainSchedule")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainSchedule::epochs)
      .def_readwrite("batch_size", &TrainSchedule::batch_size)
      .def_readwrite("lr", &TrainSchedule::lr)
      .def_readwrite("lr_decay", &TrainSchedule::lr_decay)
      .def_readwrite("lr_decay_every", &TrainSchedule::lr_decay_every)
      .def_readwrite("seed", &TrainSchedule::seed)
      .def_readwrite("patience", &TrainSchedule::patience)
      .def_readwrite("val_fraction", &TrainSchedule::val_fraction)
      .def_readwrite("max_val_sequences", &TrainSchedule::max_val_sequences);

  py::class_<DSSMModel>(m, "DSSMModel")
      .def(py::init<const DSSMConfig&, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
      .def_static(
          "load",
          [](const DSSMConfig& config, const std::filesystem::path& path) {
            return DSSMModel(config, nn::load_checkpoint(path));
          },
          py::arg("config"), py::arg("path"))
      .def(
          "save", [](const DSSMModel& model, const std::filesystem::path& path) { nn::save_checkpoint(path, model.params(), false); },
          py::arg("path"))
      .def_property_readonly("config", &DSSMModel::config)
      .def_property_readonly("num_parameters", [](const DSSMModel& model) { return model.params().num_scalars(); })
      .def("parameter_names", [](const DSSMModel& model) {
        std::vector<std::string> names;
        for (const auto& [name, t] : model.params().entries()) names.push_back(name);
        return names;
      });

  m.def(
      "train",
      [](DSSMModel& model, const py::dict& dataset, const TrainSchedule& schedule, bool restore_best) {
        const auto ds = dict_to_dataset(dataset);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(model, ds, schedule);
        }
        if (restore_best) model.params() = r.best;
        py::dict out;
        out["history"] = history_to_list(r.history);
        out["best_epoch"] = r.best_epoch;
        out["best_val_loss"] = r.best_val_loss;
        out["stopped_early"] = r.stopped_early;
        return out;
      },
      py::arg("model"), py::arg("dataset"), py::arg("schedule"), py::arg("restore_best") = true,
      "Train in place; returns the per-epoch history.");

  m.def(
      "predict",
      [](DSSMModel& model, const Array& prefix, std::size_t horizon) {
        return from_steps(predict(model, to_steps(prefix), horizon));
      },
      py::arg("model"), py::arg("prefix"), py::arg("horizon"),
      "Filter a (batch, steps, obs_dim) prefix and roll out `horizon` steps.");
  m.def(
      "domain_mean",
      [](DSSMModel& model, const Array& x) {
        const Tensor d = domain_mean(model, to_steps(x));
        Array out({d.dim(1), d.dim(0)});
        auto v = out.mutable_unchecked<2>();
        for (std::size_t i = 0; i < d.dim(0); ++i) {
          for (std::size_t b = 0; b < d.dim(1); ++b) v(b, i) = d.at(i, b);
        }
        return out;
      },
      py::arg("model"), py::arg("x"), "Posterior domain means, shape (batch, domain_dim).");
  m.def(
      "swap_domain",
      [](DSSMModel& model, const Array& base, const Array& target, std::size_t horizon, const std::string& s0_from) {
        const auto src = s0_from == "base" ? InitialStateSource::kBase : InitialStateSource::kTarget;
        return from_steps(swap_domain(model, to_steps(base), to_steps(target), horizon, src));
      },
      py::arg("model"), py::arg("base"), py::arg("target"), py::arg("horizon"), py::arg("s0_from") = "target");
  m.def(
      "generate",
      [](DSSMModel& model, std::size_t n, std::size_t length, std::uint64_t seed) {
        if (n == 0) return Array(std::vector<py::ssize_t>{0, static_cast<py::ssize_t>(length),
                                                         static_cast<py::ssize_t>(model.config().obs_dim)});
        Rng rng(seed);
        return from_steps(generate_unconditional(model, rng, length, n));
      },
      py::arg("model"), py::arg("n"), py::arg("length"), py::arg("seed") = 0,
      "Sample from the prior; returns (n, length, obs_dim).");

  m.def(
      "simulate_lv",
      [](std::size_t n, std::uint64_t seed, double noise, std::size_t threads) {
        return dataset_to_dict(data::make_lv_dataset(n, seed, noise, {}, threads));
      },
      py::arg("n"), py::arg("seed") = 0, py::arg("noise") = 0.5, py::arg("threads") = 1);
  m.def(
      "lv_benchmark",
      [](double noise, std::uint64_t seed) {
        Rng rng(seed);
        const auto b = data::make_lv_benchmark(noise, rng);
        py::dict d;
        d["prefix"] = Array({b.prefix_steps, std::size_t{2}}, b.prefix.data());
        d["truth"] = Array({b.horizon_steps, std::size_t{2}}, b.truth.data());
        return d;
      },
      py::arg("noise") = 1.0, py::arg("seed") = 0);
  m.def(
      "simulate_ball",
      [](std::size_t directions, std::size_t per_direction, std::uint64_t seed, std::size_t resolution,
         std::size_t steps, std::size_t threads) {
        data::BallProtocol p;
        p.resolution = resolution;
        p.steps = steps;
        return dataset_to_dict(data::make_ball_dataset(directions, per_direction, seed, p, threads));
      },
      py::arg("directions") = 16, py::arg("per_direction") = 200, py::arg("seed") = 0, py::arg("resolution") = 16,
      py::arg("steps") = 70, py::arg("threads") = 1);
  m.def(
      "read_dsq", [](const std::filesystem::path& path) { return dataset_to_dict(data::read_dsq(path)); },
      py::arg("path"));
  m.def(
      "write_dsq",
      [](const std::filesystem::path& path, const py::dict& dataset) { data::write_dsq(path, dict_to_dataset(dataset)); },
      py::arg("path"), py::arg("dataset"));

  m.def(
      "prediction_mse", [](const Array& pred, const Array& truth) {
        return eval::prediction_mse(to_matrix(pred), to_matrix(truth));
      },
      py::arg("pred"), py::arg("truth"));
  m.def(
      "dependency_matrix",
      [](const Array& embeddings, const Array& factors, std::size_t n_trees, std::uint64_t seed) {
        eval::ForestConfig cfg;
        cfg.n_trees = n_trees;
        cfg.seed = seed;
        return to_array(eval::dependency_matrix(to_matrix(embeddings), to_matrix(factors), cfg).values);
      },
      py::arg("embeddings"), py::arg("factors"), py::arg("n_trees") = 100, py::arg("seed") = 0,
      "Per-factor normalised forest importances, shape (dim, n_factors).");
  m.def(
      "disentanglement_score", [](const Array& matrix) { return eval::disentanglement_score(to_matrix(matrix)).overall; },
      py::arg("matrix"));
  m.def(
      "cluster_separation",
      [](const Array& points, const std::vector<std::size_t>& groups) {
        return eval::cluster_separation(to_matrix(points), groups).ratio;
      },
      py::arg("points"), py::arg("groups"));
}
