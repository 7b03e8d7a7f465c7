#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "dssm/dssm.hpp"

namespace dssm {

namespace {

struct BatchResult {
  Var loss;
  double nll = 0.0;
  double kl_domain = 0.0;
  double kl_initial = 0.0;
  double kl_beta = 0.0;
  double mm = 0.0;
};

// (tape, batch steps, trainable, noise, anneal weight) -> loss
using BatchLossFn = std::function<BatchResult(ad::Tape&, std::span<const Var>, bool, Noise&, double)>;

constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kNoiseStream = 0x6e6f6973;
constexpr std::uint64_t kSplitStream = 0x73706c74;

std::string describe(const BatchResult& r) {
  std::ostringstream os;
  os << "loss=" << r.loss.item() << " nll=" << r.nll << " kl_D=" << r.kl_domain << " kl_S0=" << r.kl_initial
     << " kl_beta=" << r.kl_beta << " mm=" << r.mm;
  return os.str();
}

double evaluate(const data::SequenceDataset& ds, std::span<const std::size_t> indices,
                std::size_t batch_size, const BatchLossFn& loss_fn, double anneal, std::uint64_t seed) {
  if (indices.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  Noise noise(seed);
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t end = std::min(indices.size(), start + batch_size);
    const auto idx = indices.subspan(start, end - start);
    const auto batch = data::make_batch(ds, idx, 0, ds.steps);
    ad::Tape tape;
    std::vector<Var> x;
    for (const auto& t : batch) x.push_back(tape.constant_ref(t));
    const BatchResult r = loss_fn(tape, x, false, noise, anneal);
    total += r.loss.item() * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(indices.size());
}

TrainResult fit(nn::ParamStore& params, const data::SequenceDataset& ds, const TrainSchedule& schedule,
                double anneal_increment, const BatchLossFn& loss_fn, const EpochCallback& on_epoch) {
  schedule.validate();
  ds.validate();
  auto [train_idx, val_idx] = training_split(ds, schedule);
  if (train_idx.empty()) throw std::invalid_argument("train: no training sequences");
  if (schedule.max_val_sequences > 0 && val_idx.size() > schedule.max_val_sequences) {
    val_idx.resize(schedule.max_val_sequences);
  }

  TrainResult result;
  result.best = params;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  nn::AdamConfig adam;
  adam.lr = schedule.lr;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng = derive_rng(schedule.seed, epoch, kShuffleStream);
    std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = adam.lr;
    std::size_t seen = 0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += schedule.batch_size, ++batch_no) {
      const std::size_t end = std::min(train_idx.size(), start + schedule.batch_size);
      const std::span<const std::size_t> idx(train_idx.data() + start, end - start);
      const auto batch = data::make_batch(ds, idx, 0, ds.steps);
      const double anneal = anneal_weight(result.iterations, anneal_increment);

      ad::Tape tape;
      std::vector<Var> x;
      x.reserve(batch.size());
      for (const auto& t : batch) x.push_back(tape.constant_ref(t));
      Noise noise(derive_rng(schedule.seed, result.iterations, kNoiseStream)());
      BatchResult r = loss_fn(tape, x, true, noise, anneal);
      const double loss = r.loss.item();
      if (!std::isfinite(loss)) {
        throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_no) + ": " + describe(r));
      }
      tape.backward(r.loss);
      nn::adam_step(params, adam);
      ++result.iterations;

      const double w = static_cast<double>(idx.size());
      m.train_loss += loss * w;
      m.nll += r.nll * w;
      m.kl_domain += r.kl_domain * w;
      m.kl_initial += r.kl_initial * w;
      m.kl_beta += r.kl_beta * w;
      m.mm += r.mm * w;
      m.anneal = anneal;
      seen += idx.size();
    }
    const double n = static_cast<double>(seen);
    m.train_loss /= n;
    m.nll /= n;
    m.kl_domain /= n;
    m.kl_initial /= n;
    m.kl_beta /= n;
    m.mm /= n;

    // Validation always scores the full bound so epochs stay comparable while
    // the KL weight ramps up.
    m.val_loss = evaluate(ds, val_idx, schedule.batch_size, loss_fn, 1.0,
                          derive_rng(schedule.seed, 0, kNoiseStream + 1)());
    const double score = std::isnan(m.val_loss) ? m.train_loss : m.val_loss;
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);

    if (score < result.best_val_loss) {
      result.best_val_loss = score;
      result.best_epoch = epoch;
      result.best = params;
      since_best = 0;
    } else if (schedule.patience > 0 && ++since_best >= schedule.patience) {
      result.stopped_early = true;
      break;
    }
    if (epoch % schedule.lr_decay_every == 0) adam.lr *= schedule.lr_decay;
  }
  return result;
}

}  // namespace

void TrainSchedule::validate() const {
  if (batch_size < 1) throw std::invalid_argument("TrainSchedule: batch_size must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("TrainSchedule: lr must be finite and >= 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("TrainSchedule: lr_decay must be in (0, 1]");
  if (lr_decay_every < 1) throw std::invalid_argument("TrainSchedule: lr_decay_every must be at least 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("TrainSchedule: val_fraction must be in [0, 1)");
  }
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> training_split(const data::SequenceDataset& ds,
                                                                             const TrainSchedule& schedule) {
  std::vector<std::size_t> train_idx = ds.indices(data::Split::kTrain);
  std::vector<std::size_t> val_idx = ds.indices(data::Split::kVal);
  if (val_idx.empty() && schedule.val_fraction > 0.0 && train_idx.size() > 1) {
    Rng rng = derive_rng(schedule.seed, 0, kSplitStream);
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    auto n_val = static_cast<std::size_t>(std::ceil(schedule.val_fraction * static_cast<double>(train_idx.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, train_idx.size() - 1);
    val_idx.assign(train_idx.end() - static_cast<std::ptrdiff_t>(n_val), train_idx.end());
    train_idx.resize(train_idx.size() - n_val);
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
  }
  return {train_idx, val_idx};
}

TrainResult train(DSSMModel& model, const data::SequenceDataset& ds, const TrainSchedule& schedule,
                  const EpochCallback& on_epoch) {
  const DSSMConfig& c = model.config();
  if (ds.obs_dim != c.obs_dim) {
    throw std::invalid_argument("train: dataset obs_dim " + std::to_string(ds.obs_dim) + " != model obs_dim " +
                                std::to_string(c.obs_dim));
  }
  if (ds.likelihood != c.likelihood) throw std::invalid_argument("train: dataset and model likelihoods differ");
  const BatchLossFn loss_fn = [&model](ad::Tape& tape, std::span<const Var> x, bool trainable, Noise& noise,
                                       double anneal) {
    const Filter filter(tape, model, trainable);
    ElboTerms e = elbo_loss(filter, x, noise, anneal);
    return BatchResult{e.loss, e.nll, e.kl_domain, e.kl_initial, e.kl_beta, e.mm};
  };
  return fit(model.params(), ds, schedule, c.kl_anneal_increment, loss_fn, on_epoch);
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics to " + path);
  out.precision(10);
  out << "epoch,train_loss,val_loss,nll,kl_D,kl_S0,kl_beta,mm,anneal_weight,lr\n";
  for (const auto& m : history) {
    out << m.epoch << ',' << m.train_loss << ',' << m.val_loss << ',' << m.nll << ',' << m.kl_domain << ','
        << m.kl_initial << ',' << m.kl_beta << ',' << m.mm << ',' << m.anneal << ',' << m.lr << '\n';
  }
}

// ---- LSTM baseline ---------------------------------------------------------------

namespace {

constexpr const char* kBaselineLstm = "lstm";
constexpr const char* kBaselineReadout = "readout";

nn::LSTMSpec baseline_lstm_spec(const LstmBaselineConfig& c) { return {c.obs_dim, c.hidden_dim, c.num_layers}; }
nn::MLPSpec baseline_readout_spec(const LstmBaselineConfig& c) { return {{c.hidden_dim, c.obs_dim}}; }

void validate_baseline(const LstmBaselineConfig& c) {
  if (c.obs_dim == 0 || c.hidden_dim == 0 || c.num_layers == 0) {
    throw std::invalid_argument("LstmBaselineConfig: dimensions must be positive");
  }
}

struct BoundBaseline {
  nn::StackedLstm lstm;
  nn::MLP readout;
};

BoundBaseline bind_baseline(ad::Tape& tape, nn::ParamStore& params, const LstmBaselineConfig& c, bool trainable) {
  const nn::Binder bind(tape, params, trainable);
  return {nn::StackedLstm::bind(bind, kBaselineLstm, baseline_lstm_spec(c)),
          nn::MLP::bind(bind, kBaselineReadout, baseline_readout_spec(c))};
}

}  // namespace

LstmBaseline::LstmBaseline(const LstmBaselineConfig& config, std::uint64_t seed) : config_(config) {
  validate_baseline(config_);
  nn::Rng rng(seed);
  nn::init_lstm(params_, kBaselineLstm, baseline_lstm_spec(config_), rng);
  nn::init_mlp(params_, kBaselineReadout, baseline_readout_spec(config_), rng);
}

LstmBaseline::LstmBaseline(const LstmBaselineConfig& config, nn::ParamStore params)
    : config_(config), params_(std::move(params)) {
  validate_baseline(config_);
  LstmBaseline fresh(config_, 0);
  for (const auto& [name, t] : fresh.params().entries()) {
    if (!params_.contains(name)) throw std::invalid_argument("checkpoint is missing parameter '" + name + "'");
    if (params_.at(name).shape != t.shape) throw std::invalid_argument("parameter '" + name + "' has wrong shape");
  }
}

Var LstmBaseline::teacher_forced_loss(ad::Tape& tape, std::span<const Var> x, bool trainable) {
  if (x.size() < 2) throw std::invalid_argument("teacher_forced_loss: need at least two steps");
  const std::size_t batch = x.front().shape()[1];
  const BoundBaseline net = bind_baseline(tape, params_, config_, trainable);
  auto state = net.lstm.zero_state(tape, batch);
  Var total = tape.constant(Tensor::scalar(0.0));
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const Var pred = net.readout.forward(net.lstm.step(x[i], state));
    total = total + ad::sum(ad::square(pred - x[i + 1]));
  }
  return ad::scale(total, 1.0 / static_cast<double>(batch));
}

std::vector<Tensor> LstmBaseline::rollout(std::span<const Tensor> prefix, std::size_t horizon) {
  if (prefix.empty()) throw std::invalid_argument("LstmBaseline::rollout: empty prefix");
  if (horizon < 1) throw std::invalid_argument("LstmBaseline::rollout: horizon must be at least 1");
  ad::Tape tape;
  const BoundBaseline net = bind_baseline(tape, params_, config_, false);
  auto state = net.lstm.zero_state(tape, prefix.front().shape[1]);
  Var pred;
  for (const auto& t : prefix) pred = net.readout.forward(net.lstm.step(tape.constant_ref(t), state));
  std::vector<Tensor> out;
  out.reserve(horizon);
  for (std::size_t k = 0; k < horizon; ++k) {
    out.push_back(pred.value());
    if (k + 1 < horizon) pred = net.readout.forward(net.lstm.step(pred, state));
  }
  return out;
}

std::vector<Tensor> LstmBaseline::teacher_forced_predictions(std::span<const Tensor> x) {
  ad::Tape tape;
  const BoundBaseline net = bind_baseline(tape, params_, config_, false);
  auto state = net.lstm.zero_state(tape, x.front().shape[1]);
  std::vector<Tensor> out;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    out.push_back(net.readout.forward(net.lstm.step(tape.constant_ref(x[i]), state)).value());
  }
  return out;
}

TrainResult train_lstm_baseline(LstmBaseline& model, const data::SequenceDataset& ds, const TrainSchedule& schedule,
                                const EpochCallback& on_epoch) {
  if (ds.likelihood != Likelihood::kGaussian) {
    throw std::invalid_argument("train_lstm_baseline: only gaussian-observation datasets are supported");
  }
  if (ds.obs_dim != model.config().obs_dim) throw std::invalid_argument("train_lstm_baseline: obs_dim mismatch");
  const BatchLossFn loss_fn = [&model](ad::Tape& tape, std::span<const Var> x, bool trainable, Noise&, double) {
    const Var loss = model.teacher_forced_loss(tape, x, trainable);
    return BatchResult{loss, loss.item()};
  };
  return fit(model.params(), ds, schedule, 0.0, loss_fn, on_epoch);
}

}  // namespace dssm
