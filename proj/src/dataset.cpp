#include "dssm/dataset.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"

namespace dssm::data {

std::span<const double> SequenceDataset::sequence(std::size_t i) const {
  if (i >= n) throw std::out_of_range("SequenceDataset: sequence index " + std::to_string(i));
  return {observations.data() + i * steps * obs_dim, steps * obs_dim};
}

std::span<const double> SequenceDataset::frame(std::size_t i, std::size_t t) const {
  if (t >= steps) throw std::out_of_range("SequenceDataset: step index " + std::to_string(t));
  return sequence(i).subspan(t * obs_dim, obs_dim);
}

std::span<const double> SequenceDataset::factor_row(std::size_t i) const {
  if (i >= n) throw std::out_of_range("SequenceDataset: sequence index " + std::to_string(i));
  return {factors.data() + i * n_factors, n_factors};
}

std::vector<std::size_t> SequenceDataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

void SequenceDataset::validate() const {
  if (observations.size() != n * steps * obs_dim) throw std::invalid_argument("SequenceDataset: observation size");
  if (factors.size() != n * n_factors) throw std::invalid_argument("SequenceDataset: factor block size");
  if (splits.size() != n) throw std::invalid_argument("SequenceDataset: split tags size");
  for (double v : observations) {
    if (!std::isfinite(v)) throw std::invalid_argument("SequenceDataset: non-finite observation");
    if (likelihood == Likelihood::kBernoulli && v != 0.0 && v != 1.0) {
      throw std::invalid_argument("SequenceDataset: bernoulli observations must be 0 or 1");
    }
  }
  for (auto s : splits) {
    if (static_cast<std::uint8_t>(s) > 2) throw std::invalid_argument("SequenceDataset: unknown split tag");
  }
}

void write_dsq(const std::filesystem::path& path, const SequenceDataset& ds) {
  ds.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_dsq: cannot open " + path.string());
  os.write("DSQ1", 4);
  for (std::size_t v : {ds.n, ds.steps, ds.obs_dim, ds.n_factors}) io::write_u32(os, static_cast<std::uint32_t>(v));
  io::write_u32(os, static_cast<std::uint32_t>(ds.likelihood));
  io::write_f64s(os, ds.factors.data(), ds.factors.size());
  for (auto s : ds.splits) os.put(static_cast<char>(s));
  if (ds.likelihood == Likelihood::kGaussian) {
    io::write_f64s(os, ds.observations.data(), ds.observations.size());
  } else {
    const std::size_t frame_bytes = (ds.obs_dim + 7) / 8;
    std::vector<char> packed(frame_bytes);
    for (std::size_t f = 0; f < ds.n * ds.steps; ++f) {
      std::fill(packed.begin(), packed.end(), 0);
      const double* px = ds.observations.data() + f * ds.obs_dim;
      for (std::size_t o = 0; o < ds.obs_dim; ++o) {
        if (px[o] != 0.0) packed[o / 8] = static_cast<char>(packed[o / 8] | (0x80 >> (o % 8)));
      }
      os.write(packed.data(), static_cast<std::streamsize>(frame_bytes));
    }
  }
  if (!os) throw std::runtime_error("write_dsq: write failed for " + path.string());
}

SequenceDataset read_dsq(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_dsq: cannot open " + path.string());
  io::Reader in(is, "dataset " + path.string());
  in.expect_magic("DSQ1");
  SequenceDataset ds;
  ds.n = in.u32();
  ds.steps = in.u32();
  ds.obs_dim = in.u32();
  ds.n_factors = in.u32();
  const std::uint32_t tag = in.u32();
  if (tag > 1) throw std::runtime_error("read_dsq: unknown likelihood tag " + std::to_string(tag));
  ds.likelihood = static_cast<Likelihood>(tag);
  if (ds.n > 0 && (ds.steps == 0 || ds.obs_dim == 0)) throw std::runtime_error("read_dsq: empty sequences");

  ds.factors.resize(ds.n * ds.n_factors);
  in.f64s(ds.factors.data(), ds.factors.size());
  ds.splits.resize(ds.n);
  for (auto& s : ds.splits) {
    char c = 0;
    in.bytes(&c, 1);
    if (static_cast<unsigned char>(c) > 2) throw std::runtime_error("read_dsq: unknown split tag");
    s = static_cast<Split>(c);
  }
  ds.observations.resize(ds.n * ds.steps * ds.obs_dim);
  if (ds.likelihood == Likelihood::kGaussian) {
    in.f64s(ds.observations.data(), ds.observations.size());
  } else {
    const std::size_t frame_bytes = (ds.obs_dim + 7) / 8;
    std::vector<char> packed(frame_bytes);
    for (std::size_t f = 0; f < ds.n * ds.steps; ++f) {
      in.bytes(packed.data(), frame_bytes);
      double* px = ds.observations.data() + f * ds.obs_dim;
      for (std::size_t o = 0; o < ds.obs_dim; ++o) {
        px[o] = (static_cast<unsigned char>(packed[o / 8]) & (0x80 >> (o % 8))) != 0 ? 1.0 : 0.0;
      }
    }
  }
  return ds;
}

std::vector<ad::Tensor> make_batch(const SequenceDataset& ds, std::span<const std::size_t> indices,
                                   std::size_t t_begin, std::size_t t_end) {
  if (indices.empty()) throw std::invalid_argument("make_batch: no sequences selected");
  if (t_begin >= t_end || t_end > ds.steps) throw std::invalid_argument("make_batch: bad step range");
  const std::size_t batch = indices.size();
  std::vector<ad::Tensor> out;
  out.reserve(t_end - t_begin);
  for (std::size_t t = t_begin; t < t_end; ++t) {
    ad::Tensor x = ad::Tensor::zeros({ds.obs_dim, batch});
    for (std::size_t b = 0; b < batch; ++b) {
      const auto f = ds.frame(indices[b], t);
      for (std::size_t o = 0; o < ds.obs_dim; ++o) x.data[o * batch + b] = f[o];
    }
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<ad::Tensor> sequence_steps(std::span<const double> values, std::size_t steps, std::size_t obs_dim) {
  if (values.size() != steps * obs_dim) throw std::invalid_argument("sequence_steps: size mismatch");
  std::vector<ad::Tensor> out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    out.emplace_back(ad::Shape{obs_dim, 1},
                     std::vector<double>(values.begin() + t * obs_dim, values.begin() + (t + 1) * obs_dim));
  }
  return out;
}

}  // namespace dssm::data
