#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dssm/tensor.hpp"

namespace dssm::nn {

using ad::Tensor;
using ad::Var;

using Rng = std::mt19937_64;

struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::uint64_t step = 0;
};

// Named trainable tensors, e.g. "phi_D.fwd.layer0.W". Entries are stored in
// a std::map so references stay valid as the store grows.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  std::map<std::string, Tensor>& entries() { return entries_; }
  const std::map<std::string, Tensor>& entries() const { return entries_; }
  std::size_t num_scalars() const;

  void zero_grad();
  std::vector<Tensor*> tensors();

  AdamState& adam() { return adam_; }
  const AdamState& adam() const { return adam_; }

  bool operator==(const ParamStore& other) const;

 private:
  std::map<std::string, Tensor> entries_;
  AdamState adam_;
};

// Puts store entries on a tape, either as trainable leaves or as
// non-differentiable references (evaluation).
class Binder {
 public:
  Binder(ad::Tape& tape, ParamStore& store, bool trainable) : tape_(tape), store_(store), trainable_(trainable) {}

  Var operator()(const std::string& name) const;
  ad::Tape& tape() const { return tape_; }
  bool trainable() const { return trainable_; }

 private:
  ad::Tape& tape_;
  ParamStore& store_;
  bool trainable_;
};

// ---- MLP -----------------------------------------------------------------

enum class Activation { kRelu, kTanh };
enum class OutputActivation { kIdentity, kSigmoid };

struct MLPSpec {
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::kRelu;
  OutputActivation output_activation = OutputActivation::kIdentity;

  void validate() const;
};

// Adds "<prefix>.W<k>" (out x in) and "<prefix>.b<k>" (out) per layer.
void init_mlp(ParamStore& store, const std::string& prefix, const MLPSpec& spec, Rng& rng);

struct MLP {
  MLPSpec spec;
  std::vector<Var> weights;
  std::vector<Var> biases;

  static MLP bind(const Binder& binder, const std::string& prefix, const MLPSpec& spec);

  // x: in x B (or a rank-1 vector of size in).
  Var forward(const Var& x) const;
  // Same, without the output activation.
  Var forward_pre_activation(const Var& x) const;
};

// ---- LSTM ----------------------------------------------------------------

struct LSTMSpec {
  std::size_t input_size = 1;
  std::size_t hidden_size = 1;
  std::size_t num_layers = 2;

  void validate() const;
};

// One cell: W is 4H x (in + H) with gate blocks [input, forget, candidate,
// output]; b is 4H.
void init_lstm_cell(ParamStore& store, const std::string& prefix, std::size_t input_size,
                    std::size_t hidden_size, Rng& rng);
// Stacked cells "<prefix>.layer<k>".
void init_lstm(ParamStore& store, const std::string& prefix, const LSTMSpec& spec, Rng& rng);
void init_bilstm(ParamStore& store, const std::string& prefix, const LSTMSpec& spec, Rng& rng);

struct LstmState {
  Var h;
  Var c;
};

struct LstmCell {
  Var weight;
  Var bias;
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;

  static LstmCell bind(const Binder& binder, const std::string& prefix, std::size_t input_size,
                       std::size_t hidden_size);
};

LstmState lstm_cell_step(const LstmCell& cell, const Var& x, const LstmState& state);

struct StackedLstm {
  LSTMSpec spec;
  std::vector<LstmCell> layers;

  static StackedLstm bind(const Binder& binder, const std::string& prefix, const LSTMSpec& spec);
  std::vector<LstmState> zero_state(ad::Tape& tape, std::size_t batch) const;
  // Advances every layer one step; returns the top-layer hidden state.
  Var step(const Var& x, std::vector<LstmState>& states) const;
};

struct BiLstm {
  StackedLstm forward_dir;
  StackedLstm backward_dir;

  static BiLstm bind(const Binder& binder, const std::string& prefix, const LSTMSpec& spec);
};

struct BiLstmEncoding {
  // Top-layer hidden state per step, indexed by step for both directions.
  std::vector<Var> h_fwd;
  std::vector<Var> h_bwd;
  // concat(h_fwd[T-1], h_bwd[0]) along the feature axis.
  Var summary;
};

BiLstmEncoding bilstm_encode(const BiLstm& net, std::span<const Var> sequence);

// ---- optimisation ------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update from the grads populated by backward; zeroes
// the grads afterwards. Rejects entries whose grads were never populated.
void adam_step(ParamStore& store, const AdamConfig& config);

// ---- checkpoints ---------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, bool include_adam);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace dssm::nn
