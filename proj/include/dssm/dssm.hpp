#pragma once

// Disentangled state-space model trained as a variational Bayesian filter.
//
// Generative side: a per-sequence domain vector D and an initial state S0,
// both with N(0, I) priors, a transition S_i = f(S_{i-1}, D) + beta_i with
// beta_i ~ N(0, I), and an emission X_i ~ p(X | g(S_i)).
//
// Recognition side: phi_D and phi_S (bidirectional LSTM + MLP head) read the
// whole sequence and emit Gaussian posteriors over D and S0; phi_beta reads
// the a-priori state S_i^- and the observation X_i and emits a Gaussian over
// the residual beta_i. Filtering alternates
//   predict:  S_i^- = f(S_{i-1}, D)
//   update:   S_i   = S_i^- + beta_i
// and never looks at observations after step i when forming S_i.
//
// f is an LSTM cell whose input is D; the latent state is its (h, c) pair,
// with h exposed to g and phi_beta and corrected by beta, and c carried
// through the update unchanged.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dssm/dataset.hpp"
#include "dssm/nn.hpp"
#include "dssm/rng.hpp"
#include "dssm/tensor.hpp"

namespace dssm {

using ad::Tensor;
using ad::Var;
using data::Likelihood;

enum class Mode { kDssm, kSsm, kLstmBaseline };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& text);
std::string to_string(Likelihood likelihood);
Likelihood likelihood_from_string(const std::string& text);

struct DSSMConfig {
  std::size_t obs_dim = 2;
  std::size_t state_dim = 48;
  std::size_t domain_dim = 4;
  std::size_t hidden_dim = 48;
  std::size_t lstm_layers = 2;
  Likelihood likelihood = Likelihood::kGaussian;
  double sigma_omega = 0.5;
  double delta = 1.0;
  double mm_weight = 1.0;
  double kl_anneal_increment = 1e-6;
  double recon_scale = 1.0;
  Mode mode = Mode::kDssm;

  void validate() const;
};

// Standard-normal draws for the reparameterised samples. The zero source
// yields all-zero draws, turning every sample into its mean.
class Noise {
 public:
  explicit Noise(std::uint64_t seed) : rng_(seed), zero_(false) {}
  static Noise zero() { return Noise(); }

  Tensor normal(const ad::Shape& shape);
  bool is_zero() const { return zero_; }

 private:
  Noise() : rng_(0), zero_(true) {}
  Rng rng_;
  bool zero_;
};

class DSSMModel {
 public:
  DSSMModel(const DSSMConfig& config, std::uint64_t seed);
  // Adopts existing parameters; throws if an entry is missing or misshaped.
  DSSMModel(const DSSMConfig& config, nn::ParamStore params);

  const DSSMConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

 private:
  DSSMConfig config_;
  nn::ParamStore params_;
};

// Parameter layout for a config, as (name, shape) pairs.
std::vector<std::pair<std::string, ad::Shape>> expected_parameters(const DSSMConfig& config);

struct GaussianEstimate {
  Var mu;
  Var logvar;
  Var sample;
};

struct LatentState {
  Var h;
  Var c;
};

struct DomainRecognition {
  GaussianEstimate domain;
  // Top-layer phi_D hidden states per step (empty in ssm mode).
  std::vector<Var> hidden_fwd;
  std::vector<Var> hidden_bwd;
};

struct FilterTrace {
  GaussianEstimate domain;
  GaussianEstimate initial;
  std::vector<Var> hidden_fwd;
  std::vector<Var> hidden_bwd;
  std::vector<LatentState> s_minus;
  std::vector<GaussianEstimate> beta;
  std::vector<LatentState> s_plus;
  // Emission before the output activation (equals x_hat for gaussian).
  std::vector<Var> x_pre;
  std::vector<Var> x_hat;

  std::size_t steps() const { return s_plus.size(); }
};

// sample = mu + exp(logvar / 2) * epsilon
Var reparameterize(const Var& mu, const Var& logvar, const Tensor& epsilon);

// KL(N(mu, diag exp(logvar)) || N(0, I)) summed over every element.
Var kl_diag_gaussian_to_std(const Var& mu, const Var& logvar);

// The model's networks bound to one tape. All batched quantities are
// (features x B) matrices; a sequence is a list of O x B step tensors.
class Filter {
 public:
  Filter(ad::Tape& tape, DSSMModel& model, bool trainable);

  const DSSMConfig& config() const { return config_; }
  ad::Tape& tape() const { return tape_; }

  DomainRecognition recognize_domain(std::span<const Var> x, Noise& noise) const;
  GaussianEstimate recognize_initial_state(std::span<const Var> x, Noise& noise) const;
  LatentState transition_predict(const LatentState& prev, const Var& domain) const;
  GaussianEstimate recognize_residual(const Var& s_minus_h, const Var& x, Noise& noise) const;
  // Pixel probabilities (bernoulli) or the Gaussian mean g(S).
  Var emit(const Var& s_h) const;
  Var emit_pre_activation(const Var& s_h) const;

  FilterTrace filter_sequence(std::span<const Var> x, Noise& noise) const;

  // Continues from the last a-posteriori state of `trace` with beta = 0 and
  // D = mu^D; returns the emissions for steps T+1..T+horizon.
  std::vector<Var> predict_rollout(const FilterTrace& trace, std::size_t horizon) const;
  // Emissions of `horizon` predict steps with beta = 0 from `start`.
  std::vector<Var> rollout(LatentState start, const Var& domain, std::size_t horizon) const;

  LatentState initial_state(const Var& s0) const;
  Var zero_domain(std::size_t batch) const;

 private:
  ad::Tape& tape_;
  DSSMConfig config_;
  std::optional<nn::BiLstm> phi_d_;
  std::optional<nn::MLP> phi_d_head_;
  nn::BiLstm phi_s_;
  nn::MLP phi_s_head_;
  nn::LstmCell transition_;
  nn::MLP phi_beta_;
  nn::MLP emission_;
};

struct ElboTerms {
  Var loss;
  // Batch means. nll already includes recon_scale.
  double nll = 0.0;
  double kl_domain = 0.0;
  double kl_initial = 0.0;
  double kl_beta = 0.0;
  double mm = 0.0;
  // kl_domain + kl_initial + kl_beta as assembled inside the loss.
  double kl_total = 0.0;
  FilterTrace trace;
};

// Negative annealed lower bound, averaged over the batch:
//   recon_scale * NLL + anneal * (delta * KL_D + KL_S0 + sum_i KL_beta_i)
//   + mm_weight * sum_{i>=2} ||h_i - h_{i-1}||^2   (phi_D hidden states)
ElboTerms elbo_loss(const Filter& filter, std::span<const Var> x, Noise& noise, double anneal_weight);

// Moment-matching penalty over one list of per-step hidden states.
Var moment_matching(std::span<const Var> hidden);

// min(1, iteration * increment)
double anneal_weight(std::uint64_t iteration, double increment);

// ---- evaluation helpers (own tape, no gradients) ----------------------------

// Filters `prefix` with zero noise and rolls out `horizon` steps.
std::vector<Tensor> predict(DSSMModel& model, std::span<const Tensor> prefix, std::size_t horizon);

// Posterior means mu^D (domain_dim x B); zeros in ssm mode.
Tensor domain_mean(DSSMModel& model, std::span<const Tensor> x);
Tensor initial_state_mean(DSSMModel& model, std::span<const Tensor> x);

enum class InitialStateSource { kTarget, kBase };

// D from mu^D(base), S0 from mu^S(target) (or base), then `horizon` steps
// with beta = 0. Batches must match in size.
std::vector<Tensor> swap_domain(DSSMModel& model, std::span<const Tensor> base, std::span<const Tensor> target,
                                std::size_t horizon, InitialStateSource s0_from = InitialStateSource::kTarget);

std::vector<Tensor> generate_from_encodings(DSSMModel& model, std::span<const Tensor> x, std::size_t horizon);

// rows x cols draws from N(0, 1), consumed row-major.
Tensor sample_standard_normal(Rng& rng, std::size_t rows, std::size_t cols);

// D ~ N(0, I), S0 ~ N(0, I), c0 = 0, beta_i ~ N(0, I) at every step.
std::vector<Tensor> generate_unconditional(DSSMModel& model, Rng& rng, std::size_t steps, std::size_t batch = 1);

// ---- training ------------------------------------------------------------------

struct TrainSchedule {
  std::size_t epochs = 50;
  std::size_t batch_size = 50;
  double lr = 1e-3;
  double lr_decay = 0.94;
  // Epochs between applications of lr_decay.
  std::size_t lr_decay_every = 1;
  std::uint64_t seed = 0;
  // Stop after this many epochs without validation improvement (0: never).
  std::size_t patience = 10;
  // Used when the dataset has no sequences tagged val.
  double val_fraction = 0.05;
  // Cap on validation sequences per evaluation (0: all).
  std::size_t max_val_sequences = 0;

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double nll = 0.0;
  double kl_domain = 0.0;
  double kl_initial = 0.0;
  double kl_beta = 0.0;
  double mm = 0.0;
  double anneal = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  nn::ParamStore best;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::uint64_t iterations = 0;
  bool stopped_early = false;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Train/validation index split used by the trainers.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> training_split(const data::SequenceDataset& ds,
                                                                             const TrainSchedule& schedule);

TrainResult train(DSSMModel& model, const data::SequenceDataset& ds, const TrainSchedule& schedule,
                  const EpochCallback& on_epoch = {});

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history);

// ---- teacher-forced LSTM baseline --------------------------------------------------

struct LstmBaselineConfig {
  std::size_t obs_dim = 2;
  std::size_t hidden_dim = 48;
  std::size_t num_layers = 2;
};

class LstmBaseline {
 public:
  LstmBaseline(const LstmBaselineConfig& config, std::uint64_t seed);
  LstmBaseline(const LstmBaselineConfig& config, nn::ParamStore params);

  const LstmBaselineConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }

  // Mean over the batch of sum_i ||prediction(X_<=i) - X_{i+1}||^2 with
  // ground-truth inputs.
  Var teacher_forced_loss(ad::Tape& tape, std::span<const Var> x, bool trainable);
  // Reads the prefix, then feeds back its own predictions.
  std::vector<Tensor> rollout(std::span<const Tensor> prefix, std::size_t horizon);
  // One-step predictions for steps 2..T given ground truth inputs.
  std::vector<Tensor> teacher_forced_predictions(std::span<const Tensor> x);

 private:
  LstmBaselineConfig config_;
  nn::ParamStore params_;
};

TrainResult train_lstm_baseline(LstmBaseline& model, const data::SequenceDataset& ds, const TrainSchedule& schedule,
                                const EpochCallback& on_epoch = {});

}  // namespace dssm
