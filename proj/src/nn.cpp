#include "dssm/nn.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "binary_io.hpp"

namespace dssm::nn {

// ---- ParamStore --------------------------------------------------------------

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  if (entries_.count(name) != 0) throw std::invalid_argument("ParamStore: duplicate entry " + name);
  value.requires_grad = true;
  return entries_.emplace(name, std::move(value)).first->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParamStore: no entry " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParamStore: no entry " + name);
  return it->second;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

std::vector<Tensor*> ParamStore::tensors() {
  std::vector<Tensor*> out;
  out.reserve(entries_.size());
  for (auto& [_, t] : entries_) out.push_back(&t);
  return out;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (const auto& [name, t] : entries_) {
    auto it = other.entries_.find(name);
    if (it == other.entries_.end()) return false;
    if (it->second.shape != t.shape || it->second.data != t.data) return false;
  }
  return true;
}

Var Binder::operator()(const std::string& name) const {
  Tensor& t = store_.at(name);
  return trainable_ ? tape_.leaf(t) : tape_.constant_ref(t);
}

// ---- init helpers --------------------------------------------------------------

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor t = Tensor::zeros({rows, cols});
  for (double& v : t.data) v = dist(rng);
  return t;
}

}  // namespace

// ---- MLP -------------------------------------------------------------------------

void MLPSpec::validate() const {
  if (layer_sizes.size() < 2) throw std::invalid_argument("MLPSpec: need at least two layer sizes");
  for (auto n : layer_sizes) {
    if (n == 0) throw std::invalid_argument("MLPSpec: layer sizes must be positive");
  }
}

void init_mlp(ParamStore& store, const std::string& prefix, const MLPSpec& spec, Rng& rng) {
  spec.validate();
  for (std::size_t k = 0; k + 1 < spec.layer_sizes.size(); ++k) {
    const std::size_t in = spec.layer_sizes[k];
    const std::size_t out = spec.layer_sizes[k + 1];
    store.add(prefix + ".W" + std::to_string(k), glorot(out, in, rng));
    store.add(prefix + ".b" + std::to_string(k), Tensor::zeros({out}));
  }
}

MLP MLP::bind(const Binder& binder, const std::string& prefix, const MLPSpec& spec) {
  spec.validate();
  MLP mlp;
  mlp.spec = spec;
  for (std::size_t k = 0; k + 1 < spec.layer_sizes.size(); ++k) {
    mlp.weights.push_back(binder(prefix + ".W" + std::to_string(k)));
    mlp.biases.push_back(binder(prefix + ".b" + std::to_string(k)));
    const auto& w = mlp.weights.back().shape();
    if (w.size() != 2 || w[0] != spec.layer_sizes[k + 1] || w[1] != spec.layer_sizes[k]) {
      throw std::invalid_argument("MLP::bind: " + prefix + ".W" + std::to_string(k) + " has shape " +
                                  ad::shape_str(w));
    }
  }
  return mlp;
}

Var MLP::forward_pre_activation(const Var& x) const {
  Var h = x;
  if (x.shape().size() == 1) {
    // Plain vectors are evaluated as a single column.
    if (x.requires_grad()) throw std::invalid_argument("mlp_forward: pass differentiable inputs as (in x B) matrices");
    h = x.tape().constant(Tensor({x.shape()[0], 1}, x.value().data));
  }
  if (h.shape().size() != 2 || h.shape()[0] != spec.layer_sizes.front()) {
    throw std::invalid_argument("mlp_forward: input " + ad::shape_str(x.shape()) + " does not match first layer size " +
                                std::to_string(spec.layer_sizes.front()));
  }
  for (std::size_t k = 0; k < weights.size(); ++k) {
    h = ad::add_bias(ad::matmul(weights[k], h), biases[k]);
    if (k + 1 < weights.size()) h = spec.activation == Activation::kRelu ? ad::relu(h) : ad::tanh(h);
  }
  return h;
}

Var MLP::forward(const Var& x) const {
  Var y = forward_pre_activation(x);
  return spec.output_activation == OutputActivation::kSigmoid ? ad::sigmoid(y) : y;
}

// ---- LSTM -------------------------------------------------------------------------

void LSTMSpec::validate() const {
  if (input_size == 0 || hidden_size == 0 || num_layers == 0) {
    throw std::invalid_argument("LSTMSpec: sizes and num_layers must be positive");
  }
}

void init_lstm_cell(ParamStore& store, const std::string& prefix, std::size_t input_size,
                    std::size_t hidden_size, Rng& rng) {
  store.add(prefix + ".W", glorot(4 * hidden_size, input_size + hidden_size, rng));
  Tensor b = Tensor::zeros({4 * hidden_size});
  for (std::size_t i = hidden_size; i < 2 * hidden_size; ++i) b.data[i] = 1.0;  // forget gate
  store.add(prefix + ".b", std::move(b));
}

void init_lstm(ParamStore& store, const std::string& prefix, const LSTMSpec& spec, Rng& rng) {
  spec.validate();
  for (std::size_t k = 0; k < spec.num_layers; ++k) {
    init_lstm_cell(store, prefix + ".layer" + std::to_string(k), k == 0 ? spec.input_size : spec.hidden_size,
                   spec.hidden_size, rng);
  }
}

void init_bilstm(ParamStore& store, const std::string& prefix, const LSTMSpec& spec, Rng& rng) {
  init_lstm(store, prefix + ".fwd", spec, rng);
  init_lstm(store, prefix + ".bwd", spec, rng);
}

LstmCell LstmCell::bind(const Binder& binder, const std::string& prefix, std::size_t input_size,
                        std::size_t hidden_size) {
  LstmCell cell{binder(prefix + ".W"), binder(prefix + ".b"), input_size, hidden_size};
  const ad::Shape expected{4 * hidden_size, input_size + hidden_size};
  if (cell.weight.shape() != expected || cell.bias.shape() != ad::Shape{4 * hidden_size}) {
    throw std::invalid_argument("LstmCell::bind: " + prefix + " has shape " + ad::shape_str(cell.weight.shape()) +
                                ", expected " + ad::shape_str(expected));
  }
  return cell;
}

LstmState lstm_cell_step(const LstmCell& cell, const Var& x, const LstmState& state) {
  const std::size_t hs = cell.hidden_size;
  if (x.shape().size() != 2 || x.shape()[0] != cell.input_size || state.h.shape().size() != 2 ||
      state.h.shape()[0] != hs || state.c.shape() != state.h.shape() || x.shape()[1] != state.h.shape()[1]) {
    throw std::invalid_argument("lstm_cell_step: shape mismatch x " + ad::shape_str(x.shape()) + " h " +
                                ad::shape_str(state.h.shape()) + " c " + ad::shape_str(state.c.shape()) +
                                " for input " + std::to_string(cell.input_size) + ", hidden " + std::to_string(hs));
  }
  const Var parts[] = {x, state.h};
  const Var z = ad::add_bias(ad::matmul(cell.weight, ad::concat(parts, 0)), cell.bias);
  const Var i = ad::sigmoid(ad::slice(z, 0, 0, hs));
  const Var f = ad::sigmoid(ad::slice(z, 0, hs, 2 * hs));
  const Var g = ad::tanh(ad::slice(z, 0, 2 * hs, 3 * hs));
  const Var o = ad::sigmoid(ad::slice(z, 0, 3 * hs, 4 * hs));
  const Var c = f * state.c + i * g;
  return {o * ad::tanh(c), c};
}

StackedLstm StackedLstm::bind(const Binder& binder, const std::string& prefix, const LSTMSpec& spec) {
  spec.validate();
  StackedLstm net;
  net.spec = spec;
  for (std::size_t k = 0; k < spec.num_layers; ++k) {
    net.layers.push_back(LstmCell::bind(binder, prefix + ".layer" + std::to_string(k),
                                        k == 0 ? spec.input_size : spec.hidden_size, spec.hidden_size));
  }
  return net;
}

std::vector<LstmState> StackedLstm::zero_state(ad::Tape& tape, std::size_t batch) const {
  std::vector<LstmState> states;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const Var zero = tape.constant(Tensor::zeros({spec.hidden_size, batch}));
    states.push_back({zero, zero});
  }
  return states;
}

Var StackedLstm::step(const Var& x, std::vector<LstmState>& states) const {
  Var input = x;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    states[k] = lstm_cell_step(layers[k], input, states[k]);
    input = states[k].h;
  }
  return input;
}

BiLstm BiLstm::bind(const Binder& binder, const std::string& prefix, const LSTMSpec& spec) {
  return {StackedLstm::bind(binder, prefix + ".fwd", spec), StackedLstm::bind(binder, prefix + ".bwd", spec)};
}

BiLstmEncoding bilstm_encode(const BiLstm& net, std::span<const Var> sequence) {
  if (sequence.empty()) throw std::invalid_argument("bilstm_encode: empty sequence");
  const std::size_t steps = sequence.size();
  const ad::Shape& step_shape = sequence.front().shape();
  for (const auto& x : sequence) {
    if (x.shape() != step_shape) throw std::invalid_argument("bilstm_encode: steps differ in shape");
  }
  ad::Tape& tape = sequence.front().tape();
  const std::size_t batch = step_shape.size() == 2 ? step_shape[1] : 1;

  BiLstmEncoding enc;
  enc.h_fwd.resize(steps);
  enc.h_bwd.resize(steps);
  auto fwd_state = net.forward_dir.zero_state(tape, batch);
  for (std::size_t i = 0; i < steps; ++i) enc.h_fwd[i] = net.forward_dir.step(sequence[i], fwd_state);
  auto bwd_state = net.backward_dir.zero_state(tape, batch);
  for (std::size_t i = steps; i-- > 0;) enc.h_bwd[i] = net.backward_dir.step(sequence[i], bwd_state);

  const Var ends[] = {enc.h_fwd.back(), enc.h_bwd.front()};
  enc.summary = ad::concat(ends, 0);
  return enc;
}

// ---- Adam --------------------------------------------------------------------------

void adam_step(ParamStore& store, const AdamConfig& config) {
  for (const auto& [name, t] : store.entries()) {
    if (!t.has_grad()) throw std::logic_error("adam_step: no gradient for " + name);
  }
  AdamState& st = store.adam();
  ++st.step;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (auto& [name, p] : store.entries()) {
    auto& m = st.m[name];
    auto& v = st.v[name];
    if (m.size() != p.size()) m.assign(p.size(), 0.0);
    if (v.size() != p.size()) v.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.data[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
    std::fill(p.grad.begin(), p.grad.end(), 0.0);
  }
}

// ---- checkpoints ----------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, bool include_adam) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  os.write("DSM1", 4);
  io::write_u32(os, static_cast<std::uint32_t>(store.entries().size()));
  for (const auto& [name, t] : store.entries()) {
    io::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape) io::write_u32(os, static_cast<std::uint32_t>(d));
    io::write_f64s(os, t.data.data(), t.size());
  }
  if (include_adam) {
    const AdamState& st = store.adam();
    os.write("DSMO", 4);
    io::write_u64(os, st.step);
    for (const auto& [name, t] : store.entries()) {
      for (const auto* moments : {&st.m, &st.v}) {
        auto it = moments->find(name);
        if (it != moments->end() && it->second.size() == t.size()) {
          io::write_f64s(os, it->second.data(), t.size());
        } else {
          for (std::size_t i = 0; i < t.size(); ++i) io::write_f64(os, 0.0);
        }
      }
    }
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  io::Reader in(is, "checkpoint " + path.string());
  in.expect_magic("DSM1");
  ParamStore store;
  const std::uint32_t count = in.u32();
  std::vector<std::string> order;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t len = in.u32();
    if (len > (1u << 16)) throw std::runtime_error("load_checkpoint: implausible name length");
    std::string name(len, '\0');
    in.bytes(name.data(), len);
    const std::uint32_t rank = in.u32();
    if (rank == 0 || rank > 8) throw std::runtime_error("load_checkpoint: bad rank for " + name);
    ad::Shape shape(rank);
    for (auto& d : shape) d = in.u32();
    const std::size_t n = ad::numel(shape);
    if (n == 0 || n > (std::size_t{1} << 32)) throw std::runtime_error("load_checkpoint: bad shape for " + name);
    std::vector<double> data(n);
    in.f64s(data.data(), n);
    store.add(name, Tensor(std::move(shape), std::move(data)));
    order.push_back(name);
  }
  if (!in.at_end()) {
    in.expect_magic("DSMO");
    AdamState& st = store.adam();
    st.step = in.u64();
    for (const auto& name : order) {
      const std::size_t n = store.at(name).size();
      auto& m = st.m[name];
      auto& v = st.v[name];
      m.resize(n);
      v.resize(n);
      in.f64s(m.data(), n);
      in.f64s(v.data(), n);
    }
  }
  return store;
}

}  // namespace dssm::nn
