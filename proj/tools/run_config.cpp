#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dssm::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
void parse_number(const std::string& text, T& out) {
  T v{};
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) throw std::invalid_argument("not a number: " + text);
  out = v;
}


struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename M>
Field model_num(M DSSMConfig::*f) {
  return {[f](RunConfig& c, const std::string& v) { parse_number(v, c.model.*f); },
          [f](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<M>) return fmt(c.model.*f);
            else return std::to_string(c.model.*f);
          }};
}

template <typename M>
Field sched_num(M TrainSchedule::*f) {
  return {[f](RunConfig& c, const std::string& v) { parse_number(v, c.schedule.*f); },
          [f](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<M>) return fmt(c.schedule.*f);
            else return std::to_string(c.schedule.*f);
          }};
}

// Ordered as they appear in resolved configs.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"mode",
       {[](RunConfig& c, const std::string& v) { c.model.mode = mode_from_string(v); },
        [](const RunConfig& c) { return to_string(c.model.mode); }}},
      {"obs_dim",
       {[](RunConfig& c, const std::string& v) {
          if (v == "auto") {
            c.obs_dim_auto = true;
            return;
          }
          parse_number(v, c.model.obs_dim);
          c.obs_dim_auto = false;
        },
        [](const RunConfig& c) { return c.obs_dim_auto ? std::string("auto") : std::to_string(c.model.obs_dim); }}},
      {"likelihood",
       {[](RunConfig& c, const std::string& v) {
          if (v == "auto") {
            c.likelihood_auto = true;
            return;
          }
          c.model.likelihood = likelihood_from_string(v);
          c.likelihood_auto = false;
        },
        [](const RunConfig& c) { return c.likelihood_auto ? std::string("auto") : to_string(c.model.likelihood); }}},
      {"state_dim", model_num(&DSSMConfig::state_dim)},
      {"domain_dim", model_num(&DSSMConfig::domain_dim)},
      {"hidden_dim", model_num(&DSSMConfig::hidden_dim)},
      {"lstm_layers", model_num(&DSSMConfig::lstm_layers)},
      {"sigma_omega", model_num(&DSSMConfig::sigma_omega)},
      {"delta", model_num(&DSSMConfig::delta)},
      {"mm_weight", model_num(&DSSMConfig::mm_weight)},
      {"kl_anneal_increment", model_num(&DSSMConfig::kl_anneal_increment)},
      {"recon_scale", model_num(&DSSMConfig::recon_scale)},
      {"epochs", sched_num(&TrainSchedule::epochs)},
      {"batch_size", sched_num(&TrainSchedule::batch_size)},
      {"lr", sched_num(&TrainSchedule::lr)},
      {"lr_decay", sched_num(&TrainSchedule::lr_decay)},
      {"lr_decay_every", sched_num(&TrainSchedule::lr_decay_every)},
      {"patience", sched_num(&TrainSchedule::patience)},
      {"val_fraction", sched_num(&TrainSchedule::val_fraction)},
      {"max_val_sequences", sched_num(&TrainSchedule::max_val_sequences)},
      {"seed",
       {[](RunConfig& c, const std::string& v) { parse_number(v, c.seed); },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"threads",
       {[](RunConfig& c, const std::string& v) { parse_number(v, c.threads); },
        [](const RunConfig& c) { return std::to_string(c.threads); }}},
      {"train_data",
       {[](RunConfig& c, const std::string& v) { c.train_data = v; },
        [](const RunConfig& c) { return c.train_data; }}},
      {"out_dir",
       {[](RunConfig& c, const std::string& v) { c.out_dir = v; },
        [](const RunConfig& c) { return c.out_dir; }}},
  };
  return table;
}

std::string join(const std::vector<std::string>& errors) {
  std::string out = "invalid run config:";
  for (const auto& e : errors) out += "\n  " + e;
  return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors) : std::runtime_error(join(errors)), errors_(std::move(errors)) {}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

void RunConfig::resolve_data(const data::SequenceDataset& ds) {
  if (obs_dim_auto) {
    model.obs_dim = ds.obs_dim;
    obs_dim_auto = false;
  } else if (model.obs_dim != ds.obs_dim) {
    throw ConfigError({"obs_dim = " + std::to_string(model.obs_dim) + " but the data has " +
                       std::to_string(ds.obs_dim) + " values per step"});
  }
  if (likelihood_auto) {
    model.likelihood = ds.likelihood;
    likelihood_auto = false;
  } else if (model.likelihood != ds.likelihood) {
    throw ConfigError({"likelihood = " + to_string(model.likelihood) + " but the data is " + to_string(ds.likelihood)});
  }
}

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> out;
  auto check = [&out](const auto& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      out.emplace_back(e.what());
    }
  };
  if (model.mode == Mode::kLstmBaseline) {
    if (model.hidden_dim == 0) out.emplace_back("hidden_dim must be positive");
    if (model.lstm_layers == 0) out.emplace_back("lstm_layers must be positive");
    if (!likelihood_auto && model.likelihood == Likelihood::kBernoulli) {
      out.emplace_back("mode lstm_baseline only supports gaussian data");
    }
  } else {
    DSSMConfig probe = model;
    if (obs_dim_auto) probe.obs_dim = std::max<std::size_t>(probe.obs_dim, 1);
    check([&] { probe.validate(); });
  }
  check([&] { schedule.validate(); });
  if (threads == 0) out.emplace_back("threads must be at least 1");
  return out;
}

RunConfig parse_run_config(std::string_view text, const RunConfig& base) {
  RunConfig c = base;
  std::vector<std::string> errors;
  std::map<std::string, std::size_t> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + "expected key = value");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const auto& f) { return f.first == key; });
    if (it == table.end()) {
      errors.push_back(where + "unknown key '" + key + "'");
      continue;
    }
    if (auto prev = seen.find(key); prev != seen.end()) {
      errors.push_back(where + "'" + key + "' already set on line " + std::to_string(prev->second));
      continue;
    }
    seen[key] = line_no;
    try {
      it->second.set(c, value);
    } catch (const std::exception& e) {
      errors.push_back(where + key + ": " + e.what());
    }
  }
  for (auto& p : c.problems()) errors.push_back(std::move(p));
  if (!errors.empty()) throw ConfigError(std::move(errors));
  c.schedule.seed = c.seed;
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config " + path.string()});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), base);
}

std::string format_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& [key, f] : fields()) out += key + " = " + f.get(config) + "\n";
  return out;
}

void write_run_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::trunc);
  out << format_run_config(config);
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace dssm::cli
