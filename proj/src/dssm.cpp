#include "dssm/dssm.hpp"

#include <cmath>
#include <numbers>

namespace dssm {

namespace {

constexpr const char* kPhiD = "phi_D";
constexpr const char* kPhiDHead = "phi_D.head";
constexpr const char* kPhiS = "phi_S";
constexpr const char* kPhiSHead = "phi_S.head";
constexpr const char* kTransition = "f";
constexpr const char* kPhiBeta = "phi_beta";
constexpr const char* kEmission = "g";

nn::LSTMSpec encoder_spec(const DSSMConfig& c) { return {c.obs_dim, c.hidden_dim, c.lstm_layers}; }

nn::MLPSpec head_spec(const DSSMConfig& c, std::size_t out) {
  return {{2 * c.hidden_dim, c.hidden_dim, 2 * out}, nn::Activation::kRelu, nn::OutputActivation::kIdentity};
}

nn::MLPSpec beta_spec(const DSSMConfig& c) {
  return {{c.state_dim + c.obs_dim, c.hidden_dim, 2 * c.state_dim}, nn::Activation::kRelu,
          nn::OutputActivation::kIdentity};
}

nn::MLPSpec emission_spec(const DSSMConfig& c) {
  return {{c.state_dim, c.hidden_dim, c.obs_dim}, nn::Activation::kRelu,
          c.likelihood == Likelihood::kBernoulli ? nn::OutputActivation::kSigmoid : nn::OutputActivation::kIdentity};
}

bool uses_domain(const DSSMConfig& c) { return c.mode == Mode::kDssm; }

void init_params(nn::ParamStore& store, const DSSMConfig& c, std::uint64_t seed) {
  nn::Rng rng(seed);
  if (uses_domain(c)) {
    nn::init_bilstm(store, kPhiD, encoder_spec(c), rng);
    nn::init_mlp(store, kPhiDHead, head_spec(c, c.domain_dim), rng);
  }
  nn::init_bilstm(store, kPhiS, encoder_spec(c), rng);
  nn::init_mlp(store, kPhiSHead, head_spec(c, c.state_dim), rng);
  nn::init_lstm_cell(store, kTransition, c.domain_dim, c.state_dim, rng);
  nn::init_mlp(store, kPhiBeta, beta_spec(c), rng);
  nn::init_mlp(store, kEmission, emission_spec(c), rng);
}

// Splits a (2n x B) head output into (mu, logvar).
std::pair<Var, Var> split_gaussian(const Var& out, std::size_t n) {
  return {ad::slice(out, 0, 0, n), ad::slice(out, 0, n, 2 * n)};
}

std::size_t batch_of(std::span<const Var> x) {
  if (x.empty()) throw std::invalid_argument("empty sequence");
  const auto& s = x.front().shape();
  if (s.size() != 2) throw std::invalid_argument("sequence steps must be (features x batch) matrices");
  return s[1];
}

void check_steps(std::span<const Var> x, std::size_t obs_dim) {
  const std::size_t b = batch_of(x);
  for (const auto& v : x) {
    if (v.shape().size() != 2 || v.shape()[0] != obs_dim || v.shape()[1] != b) {
      throw std::invalid_argument("observation step has shape " + ad::shape_str(v.shape()) + ", expected [" +
                                  std::to_string(obs_dim) + ", " + std::to_string(b) + "]");
    }
  }
}

GaussianEstimate make_estimate(const Var& mu, const Var& logvar, Noise& noise) {
  return {mu, logvar, reparameterize(mu, logvar, noise.normal(mu.shape()))};
}

}  // namespace

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kDssm: return "dssm";
    case Mode::kSsm: return "ssm";
    case Mode::kLstmBaseline: return "lstm_baseline";
  }
  return "?";
}

Mode mode_from_string(const std::string& text) {
  if (text == "dssm") return Mode::kDssm;
  if (text == "ssm") return Mode::kSsm;
  if (text == "lstm_baseline") return Mode::kLstmBaseline;
  throw std::invalid_argument("unknown mode '" + text + "' (expected dssm, ssm or lstm_baseline)");
}

std::string to_string(Likelihood likelihood) {
  return likelihood == Likelihood::kBernoulli ? "bernoulli" : "gaussian";
}

Likelihood likelihood_from_string(const std::string& text) {
  if (text == "gaussian") return Likelihood::kGaussian;
  if (text == "bernoulli") return Likelihood::kBernoulli;
  throw std::invalid_argument("unknown likelihood '" + text + "' (expected gaussian or bernoulli)");
}

void DSSMConfig::validate() const {
  if (obs_dim == 0 || state_dim == 0 || domain_dim == 0 || hidden_dim == 0 || lstm_layers == 0) {
    throw std::invalid_argument("DSSMConfig: dimensions must be positive");
  }
  if (!(delta >= 0.0) || !(mm_weight >= 0.0) || !(recon_scale >= 0.0) || !(kl_anneal_increment >= 0.0)) {
    throw std::invalid_argument("DSSMConfig: delta, mm_weight, recon_scale and kl_anneal_increment must be >= 0");
  }
  if (likelihood == Likelihood::kGaussian ? !(sigma_omega > 0.0) : !(sigma_omega >= 0.0)) {
    throw std::invalid_argument("DSSMConfig: sigma_omega must be positive for gaussian likelihood");
  }
  if (mode == Mode::kLstmBaseline) {
    throw std::invalid_argument("DSSMConfig: lstm_baseline mode is served by LstmBaseline, not DSSMModel");
  }
}

Tensor Noise::normal(const ad::Shape& shape) {
  Tensor t = Tensor::zeros(shape);
  if (zero_) return t;
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : t.data) v = dist(rng_);
  return t;
}

std::vector<std::pair<std::string, ad::Shape>> expected_parameters(const DSSMConfig& config) {
  config.validate();
  nn::ParamStore store;
  init_params(store, config, 0);
  std::vector<std::pair<std::string, ad::Shape>> out;
  for (const auto& [name, t] : store.entries()) out.emplace_back(name, t.shape);
  return out;
}

DSSMModel::DSSMModel(const DSSMConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  init_params(params_, config_, seed);
}

DSSMModel::DSSMModel(const DSSMConfig& config, nn::ParamStore params) : config_(config), params_(std::move(params)) {
  const auto expected = expected_parameters(config_);
  for (const auto& [name, shape] : expected) {
    if (!params_.contains(name)) throw std::invalid_argument("checkpoint is missing parameter '" + name + "'");
    if (params_.at(name).shape != shape) {
      throw std::invalid_argument("parameter '" + name + "' has shape " + ad::shape_str(params_.at(name).shape) +
                                  ", config expects " + ad::shape_str(shape));
    }
  }
  if (params_.entries().size() != expected.size()) {
    for (const auto& [name, t] : params_.entries()) {
      bool known = false;
      for (const auto& e : expected) known = known || e.first == name;
      if (!known) throw std::invalid_argument("checkpoint has parameter '" + name + "' not used by this config");
    }
  }
}

Var reparameterize(const Var& mu, const Var& logvar, const Tensor& epsilon) {
  if (mu.shape() != logvar.shape() || mu.shape() != epsilon.shape) {
    throw std::invalid_argument("reparameterize: shapes " + ad::shape_str(mu.shape()) + ", " +
                                ad::shape_str(logvar.shape()) + ", " + ad::shape_str(epsilon.shape) + " differ");
  }
  ad::Tape& tape = mu.tape();
  const Var sigma = ad::exp(ad::scale(logvar, 0.5));
  return mu + sigma * tape.constant(epsilon);
}

Var kl_diag_gaussian_to_std(const Var& mu, const Var& logvar) {
  if (mu.shape() != logvar.shape()) {
    throw std::invalid_argument("kl_diag_gaussian_to_std: shapes " + ad::shape_str(mu.shape()) + " and " +
                                ad::shape_str(logvar.shape()) + " differ");
  }
  const Var terms = ad::exp(logvar) + ad::square(mu) - logvar;
  return ad::scale(ad::add_scalar(ad::sum(terms), -static_cast<double>(mu.size())), 0.5);
}

Filter::Filter(ad::Tape& tape, DSSMModel& model, bool trainable) : tape_(tape), config_(model.config()) {
  const nn::Binder bind(tape, model.params(), trainable);
  if (uses_domain(config_)) {
    phi_d_ = nn::BiLstm::bind(bind, kPhiD, encoder_spec(config_));
    phi_d_head_ = nn::MLP::bind(bind, kPhiDHead, head_spec(config_, config_.domain_dim));
  }
  phi_s_ = nn::BiLstm::bind(bind, kPhiS, encoder_spec(config_));
  phi_s_head_ = nn::MLP::bind(bind, kPhiSHead, head_spec(config_, config_.state_dim));
  transition_ = nn::LstmCell::bind(bind, kTransition, config_.domain_dim, config_.state_dim);
  phi_beta_ = nn::MLP::bind(bind, kPhiBeta, beta_spec(config_));
  emission_ = nn::MLP::bind(bind, kEmission, emission_spec(config_));
}

Var Filter::zero_domain(std::size_t batch) const { return tape_.constant(Tensor::zeros({config_.domain_dim, batch})); }

LatentState Filter::initial_state(const Var& s0) const {
  if (s0.shape().size() != 2 || s0.shape()[0] != config_.state_dim) {
    throw std::invalid_argument("initial state has shape " + ad::shape_str(s0.shape()));
  }
  return {s0, tape_.constant(Tensor::zeros(s0.shape()))};
}

DomainRecognition Filter::recognize_domain(std::span<const Var> x, Noise& noise) const {
  check_steps(x, config_.obs_dim);
  const std::size_t b = batch_of(x);
  DomainRecognition out;
  // The draw is consumed even in ssm mode so both modes see the same stream.
  const Tensor eps = noise.normal({config_.domain_dim, b});
  if (!phi_d_) {
    const Var zero = zero_domain(b);
    out.domain = {zero, zero, zero};
    return out;
  }
  auto enc = nn::bilstm_encode(*phi_d_, x);
  const auto [mu, logvar] = split_gaussian(phi_d_head_->forward(enc.summary), config_.domain_dim);
  out.domain = {mu, logvar, reparameterize(mu, logvar, eps)};
  out.hidden_fwd = std::move(enc.h_fwd);
  out.hidden_bwd = std::move(enc.h_bwd);
  return out;
}

GaussianEstimate Filter::recognize_initial_state(std::span<const Var> x, Noise& noise) const {
  check_steps(x, config_.obs_dim);
  const auto enc = nn::bilstm_encode(phi_s_, x);
  const auto [mu, logvar] = split_gaussian(phi_s_head_.forward(enc.summary), config_.state_dim);
  return make_estimate(mu, logvar, noise);
}

LatentState Filter::transition_predict(const LatentState& prev, const Var& domain) const {
  if (domain.shape().size() != 2 || domain.shape()[0] != config_.domain_dim) {
    throw std::invalid_argument("transition_predict: domain has shape " + ad::shape_str(domain.shape()) +
                                ", expected [" + std::to_string(config_.domain_dim) + ", B]");
  }
  if (prev.h.shape() != prev.c.shape() || prev.h.shape()[0] != config_.state_dim ||
      prev.h.shape()[1] != domain.shape()[1]) {
    throw std::invalid_argument("transition_predict: state " + ad::shape_str(prev.h.shape()) + "/" +
                                ad::shape_str(prev.c.shape()) + " does not match domain " +
                                ad::shape_str(domain.shape()));
  }
  const nn::LstmState next = nn::lstm_cell_step(transition_, domain, {prev.h, prev.c});
  return {next.h, next.c};
}

GaussianEstimate Filter::recognize_residual(const Var& s_minus_h, const Var& x, Noise& noise) const {
  if (s_minus_h.shape().size() != 2 || x.shape().size() != 2 || s_minus_h.shape()[0] != config_.state_dim ||
      x.shape()[0] != config_.obs_dim || s_minus_h.shape()[1] != x.shape()[1]) {
    throw std::invalid_argument("recognize_residual: state " + ad::shape_str(s_minus_h.shape()) +
                                " and observation " + ad::shape_str(x.shape()) + " do not fit");
  }
  const Var parts[] = {s_minus_h, x};
  const auto [mu, logvar] = split_gaussian(phi_beta_.forward(ad::concat(parts, 0)), config_.state_dim);
  return make_estimate(mu, logvar, noise);
}

Var Filter::emit(const Var& s_h) const { return emission_.forward(s_h); }

Var Filter::emit_pre_activation(const Var& s_h) const { return emission_.forward_pre_activation(s_h); }

FilterTrace Filter::filter_sequence(std::span<const Var> x, Noise& noise) const {
  check_steps(x, config_.obs_dim);
  FilterTrace trace;
  DomainRecognition dom = recognize_domain(x, noise);
  trace.domain = dom.domain;
  trace.hidden_fwd = std::move(dom.hidden_fwd);
  trace.hidden_bwd = std::move(dom.hidden_bwd);
  trace.initial = recognize_initial_state(x, noise);

  const bool sigmoid_out = config_.likelihood == Likelihood::kBernoulli;
  LatentState state = initial_state(trace.initial.sample);
  for (const Var& xi : x) {
    const LatentState prior = transition_predict(state, trace.domain.sample);
    GaussianEstimate beta = recognize_residual(prior.h, xi, noise);
    state = {prior.h + beta.sample, prior.c};
    const Var pre = emit_pre_activation(state.h);
    trace.s_minus.push_back(prior);
    trace.beta.push_back(std::move(beta));
    trace.s_plus.push_back(state);
    trace.x_pre.push_back(pre);
    trace.x_hat.push_back(sigmoid_out ? ad::sigmoid(pre) : pre);
  }
  return trace;
}

std::vector<Var> Filter::rollout(LatentState start, const Var& domain, std::size_t horizon) const {
  if (horizon < 1) throw std::invalid_argument("rollout: horizon must be at least 1");
  std::vector<Var> out;
  out.reserve(horizon);
  for (std::size_t k = 0; k < horizon; ++k) {
    start = transition_predict(start, domain);
    out.push_back(emit(start.h));
  }
  return out;
}

std::vector<Var> Filter::predict_rollout(const FilterTrace& trace, std::size_t horizon) const {
  if (horizon < 1) throw std::invalid_argument("predict_rollout: horizon must be at least 1");
  if (trace.s_plus.empty()) throw std::invalid_argument("predict_rollout: empty trace");
  return rollout(trace.s_plus.back(), trace.domain.mu, horizon);
}

Var moment_matching(std::span<const Var> hidden) {
  if (hidden.empty()) throw std::invalid_argument("moment_matching: no hidden states");
  ad::Tape& tape = hidden.front().tape();
  Var total = tape.constant(Tensor::scalar(0.0));
  for (std::size_t i = 1; i < hidden.size(); ++i) total = total + ad::sum(ad::square(hidden[i] - hidden[i - 1]));
  return total;
}

double anneal_weight(std::uint64_t iteration, double increment) {
  return std::min(1.0, static_cast<double>(iteration) * increment);
}

ElboTerms elbo_loss(const Filter& filter, std::span<const Var> x, Noise& noise, double anneal) {
  if (!(anneal >= 0.0 && anneal <= 1.0)) {
    throw std::invalid_argument("elbo_loss: anneal weight " + std::to_string(anneal) + " outside [0, 1]");
  }
  const DSSMConfig& c = filter.config();
  ad::Tape& tape = filter.tape();
  const double batch = static_cast<double>(batch_of(x));

  ElboTerms out;
  out.trace = filter.filter_sequence(x, noise);
  const FilterTrace& tr = out.trace;

  Var nll = tape.constant(Tensor::scalar(0.0));
  if (c.likelihood == Likelihood::kGaussian) {
    const double var = c.sigma_omega * c.sigma_omega;
    const double log_norm = 0.5 * std::log(2.0 * std::numbers::pi * var);
    for (std::size_t i = 0; i < x.size(); ++i) {
      nll = nll + ad::scale(ad::sum(ad::square(x[i] - tr.x_pre[i])), 0.5 / var);
    }
    nll = ad::add_scalar(nll, log_norm * static_cast<double>(x.size() * x.front().size()));
  } else {
    // -[x log p + (1 - x) log(1 - p)] with p = sigmoid(z) is softplus(z) - x z.
    for (std::size_t i = 0; i < x.size(); ++i) {
      nll = nll + ad::sum(ad::softplus(tr.x_pre[i]) - x[i] * tr.x_pre[i]);
    }
  }
  nll = ad::scale(nll, c.recon_scale);

  const Var kl_d = kl_diag_gaussian_to_std(tr.domain.mu, tr.domain.logvar);
  const Var kl_s = kl_diag_gaussian_to_std(tr.initial.mu, tr.initial.logvar);
  Var kl_b = tape.constant(Tensor::scalar(0.0));
  for (const auto& b : tr.beta) kl_b = kl_b + kl_diag_gaussian_to_std(b.mu, b.logvar);

  Var mm = tape.constant(Tensor::scalar(0.0));
  if (!tr.hidden_fwd.empty()) mm = moment_matching(tr.hidden_fwd) + moment_matching(tr.hidden_bwd);

  const Var kl_weighted = ad::scale(kl_d, c.delta) + kl_s + kl_b;
  Var loss = nll + ad::scale(kl_weighted, anneal) + ad::scale(mm, c.mm_weight);
  out.loss = ad::scale(loss, 1.0 / batch);

  out.nll = nll.item() / batch;
  out.kl_domain = kl_d.item() / batch;
  out.kl_initial = kl_s.item() / batch;
  out.kl_beta = kl_b.item() / batch;
  out.mm = mm.item() / batch;
  out.kl_total = (kl_d.item() + kl_s.item() + kl_b.item()) / batch;
  return out;
}

// ---- evaluation helpers ------------------------------------------------------------

namespace {

std::vector<Var> as_constants(ad::Tape& tape, std::span<const Tensor> x) {
  std::vector<Var> out;
  out.reserve(x.size());
  for (const auto& t : x) out.push_back(tape.constant_ref(t));
  return out;
}

std::vector<Tensor> values(std::span<const Var> vars) {
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(v.value());
  return out;
}

}  // namespace

std::vector<Tensor> predict(DSSMModel& model, std::span<const Tensor> prefix, std::size_t horizon) {
  if (horizon < 1) throw std::invalid_argument("predict: horizon must be at least 1");
  ad::Tape tape;
  const Filter filter(tape, model, false);
  const auto x = as_constants(tape, prefix);
  Noise noise = Noise::zero();
  const FilterTrace trace = filter.filter_sequence(x, noise);
  return values(filter.predict_rollout(trace, horizon));
}

Tensor domain_mean(DSSMModel& model, std::span<const Tensor> x) {
  ad::Tape tape;
  const Filter filter(tape, model, false);
  const auto xs = as_constants(tape, x);
  Noise noise = Noise::zero();
  return filter.recognize_domain(xs, noise).domain.mu.value();
}

Tensor initial_state_mean(DSSMModel& model, std::span<const Tensor> x) {
  ad::Tape tape;
  const Filter filter(tape, model, false);
  const auto xs = as_constants(tape, x);
  Noise noise = Noise::zero();
  return filter.recognize_initial_state(xs, noise).mu.value();
}

std::vector<Tensor> swap_domain(DSSMModel& model, std::span<const Tensor> base, std::span<const Tensor> target,
                                std::size_t horizon, InitialStateSource s0_from) {
  if (horizon < 1) throw std::invalid_argument("swap_domain: horizon must be at least 1");
  ad::Tape tape;
  const Filter filter(tape, model, false);
  const auto xb = as_constants(tape, base);
  const auto xt = as_constants(tape, target);
  if (batch_of(xb) != batch_of(xt)) throw std::invalid_argument("swap_domain: base and target batch sizes differ");
  Noise noise = Noise::zero();
  const Var domain = filter.recognize_domain(xb, noise).domain.mu;
  const auto& s0_source = s0_from == InitialStateSource::kTarget ? xt : xb;
  const Var s0 = filter.recognize_initial_state(s0_source, noise).mu;
  return values(filter.rollout(filter.initial_state(s0), domain, horizon));
}

std::vector<Tensor> generate_from_encodings(DSSMModel& model, std::span<const Tensor> x, std::size_t horizon) {
  return swap_domain(model, x, x, horizon, InitialStateSource::kTarget);
}

Tensor sample_standard_normal(Rng& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t = Tensor::zeros({rows, cols});
  for (double& v : t.data) v = normal(rng);
  return t;
}

std::vector<Tensor> generate_unconditional(DSSMModel& model, Rng& rng, std::size_t steps, std::size_t batch) {
  if (steps < 1) throw std::invalid_argument("generate_unconditional: need at least one step");
  if (batch < 1) throw std::invalid_argument("generate_unconditional: batch must be positive");
  const DSSMConfig& c = model.config();
  auto draw = [&](std::size_t rows) { return sample_standard_normal(rng, rows, batch); };
  ad::Tape tape;
  const Filter filter(tape, model, false);
  Tensor d = draw(c.domain_dim);
  if (c.mode == Mode::kSsm) d = Tensor::zeros({c.domain_dim, batch});
  const Var domain = tape.constant(std::move(d));
  LatentState state = filter.initial_state(tape.constant(draw(c.state_dim)));
  std::vector<Tensor> out;
  out.reserve(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const LatentState prior = filter.transition_predict(state, domain);
    state = {prior.h + tape.constant(draw(c.state_dim)), prior.c};
    out.push_back(filter.emit(state.h).value());
  }
  return out;
}

}  // namespace dssm
