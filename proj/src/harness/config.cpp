#include "icdm/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace icdm::harness {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw std::invalid_argument("config: key '" + std::string(key) + "' expects " + expected + ", got '" +
                              std::string(value) + "'");
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view v) {
  Int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (k < 1) throw std::invalid_argument("config: k must be at least 1");
  if (trials < 1) throw std::invalid_argument("config: trials must be at least 1");
  if (!std::isfinite(snr_db)) throw std::invalid_argument("config: snr_db must be finite");
  if (!std::isfinite(sinr_db)) throw std::invalid_argument("config: sinr_db must be finite");
  if (p_z && !(*p_z >= 0)) throw std::invalid_argument("config: p_z must be non-negative");
  if (!(prior_x_var > 0) || !(prior_z_var > 0) || !(gmm_var > 0)) {
    throw std::invalid_argument("config: prior variances must be positive");
  }
  if (score == ScoreSource::Affine && (score_table_x.empty() || score_table_z.empty())) {
    throw std::invalid_argument("config: score = affine needs score_table_x and score_table_z");
  }
  if (threads < 0) throw std::invalid_argument("config: threads must be non-negative");
  sampler().validate();
}

SamplerConfig<double> ExperimentConfig::sampler() const {
  SamplerConfig<double> s;
  s.order = order;
  s.t_max = steps;
  s.beta = beta;
  s.gamma = gamma;
  s.sigma_hat2 = sigma_hat2;
  s.method = guidance;
  s.conditional_corrector = conditional_corrector;
  return s;
}

Powers sinr_to_powers(double snr_db, double sinr_db) {
  if (!std::isfinite(snr_db)) throw std::invalid_argument("sinr_to_powers: snr_db must be finite");
  Powers p;
  p.sigma2 = std::pow(10.0, -snr_db / 10.0);
  if (!(p.sigma2 > 0)) throw std::invalid_argument("sinr_to_powers: snr_db too large, sigma^2 underflows to 0");
  const double total = std::pow(10.0, -sinr_db / 10.0);
  p.p_z = total - p.sigma2;
  if (!(p.p_z > 0)) {
    p.p_z = 0;
    p.interference_free = true;
  }
  return p;
}

ChannelParams<double> channel_params(const ExperimentConfig& cfg) {
  const Powers pw = sinr_to_powers(cfg.snr_db, cfg.sinr_db);
  ChannelParams<double> p{pw.p_x, cfg.p_z.value_or(pw.p_z), pw.sigma2, cfg.k};
  p.validate();
  return p;
}

const std::vector<std::string_view>& config_keys() {
  static const std::vector<std::string_view> keys = {
      "channel",    "k",          "snr_db",      "sinr_db",      "p_z",         "prior_x",
      "prior_x_mean", "prior_x_var", "gmm_offset", "gmm_var",     "prior_z_mean", "prior_z_var",
      "guidance",   "order",      "steps",       "rho_min",      "rho_max",     "beta",
      "gamma",      "sigma_hat2", "conditional_corrector", "score", "score_table_x", "score_table_z",
      "trials",     "seed",       "threads",     "bound_check",  "record_time", "sinr_grid",
      "output"};
  return keys;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view raw) {
  const std::string_view v = trim(raw);
  if (key == "channel") {
    cfg.channel = parse_channel_kind(v);
  } else if (key == "k") {
    cfg.k = to_int<Index>(key, v);
  } else if (key == "snr_db") {
    cfg.snr_db = to_double(key, v);
  } else if (key == "sinr_db") {
    cfg.sinr_db = to_double(key, v);
  } else if (key == "p_z") {
    if (v.empty() || v == "auto") {
      cfg.p_z.reset();
    } else {
      cfg.p_z = to_double(key, v);
    }
  } else if (key == "prior_x") {
    if (v == "gaussian") {
      cfg.prior_x = PriorKind::Gaussian;
    } else if (v == "gmm") {
      cfg.prior_x = PriorKind::Gmm;
    } else {
      bad_value(key, v, "gaussian|gmm");
    }
  } else if (key == "prior_x_mean") {
    cfg.prior_x_mean = to_double(key, v);
  } else if (key == "prior_x_var") {
    cfg.prior_x_var = to_double(key, v);
  } else if (key == "gmm_offset") {
    cfg.gmm_offset = to_double(key, v);
  } else if (key == "gmm_var") {
    cfg.gmm_var = to_double(key, v);
  } else if (key == "prior_z_mean") {
    cfg.prior_z_mean = to_double(key, v);
  } else if (key == "prior_z_var") {
    cfg.prior_z_var = to_double(key, v);
  } else if (key == "guidance") {
    cfg.guidance = parse_guidance_method(v);
  } else if (key == "order") {
    cfg.order = to_int<int>(key, v);
  } else if (key == "steps") {
    cfg.steps = to_int<int>(key, v);
  } else if (key == "rho_min") {
    cfg.rho_min = to_double(key, v);
  } else if (key == "rho_max") {
    cfg.rho_max = to_double(key, v);
  } else if (key == "beta") {
    cfg.beta = to_double(key, v);
  } else if (key == "gamma") {
    cfg.gamma = to_double(key, v);
  } else if (key == "sigma_hat2") {
    cfg.sigma_hat2 = to_double(key, v);
  } else if (key == "conditional_corrector") {
    cfg.conditional_corrector = to_bool(key, v);
  } else if (key == "score") {
    if (v == "exact") {
      cfg.score = ScoreSource::Exact;
    } else if (v == "affine") {
      cfg.score = ScoreSource::Affine;
    } else {
      bad_value(key, v, "exact|affine");
    }
  } else if (key == "score_table_x") {
    cfg.score_table_x = std::string(v);
  } else if (key == "score_table_z") {
    cfg.score_table_z = std::string(v);
  } else if (key == "trials") {
    cfg.trials = to_int<int>(key, v);
  } else if (key == "seed") {
    cfg.seed = to_int<std::uint64_t>(key, v);
  } else if (key == "threads") {
    cfg.threads = to_int<int>(key, v);
  } else if (key == "bound_check") {
    cfg.bound_check = to_bool(key, v);
  } else if (key == "record_time") {
    cfg.record_time = to_bool(key, v);
  } else if (key == "sinr_grid") {
    parse_grid(v);
    cfg.sinr_grid = std::string(v);
  } else if (key == "output") {
    cfg.output = std::string(v);
  } else {
    throw std::invalid_argument("config: unknown key '" + std::string(key) + "'");
  }
}

void apply_config_text(ExperimentConfig& cfg, std::string_view text, const std::string& origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      apply_setting(cfg, trim(s.substr(0, eq)), s.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str(), path);
}

std::vector<double> parse_grid(std::string_view spec) {
  spec = trim(spec);
  std::vector<double> out;
  if (spec.find(':') != std::string_view::npos) {
    std::vector<double> parts;
    std::size_t pos = 0;
    while (true) {
      const auto next = spec.find(':', pos);
      parts.push_back(to_double("sinr_grid", trim(spec.substr(pos, next - pos))));
      if (next == std::string_view::npos) break;
      pos = next + 1;
    }
    if (parts.size() != 3 || !(parts[2] > 0) || parts[1] < parts[0]) {
      bad_value("sinr_grid", spec, "start:stop:step with step > 0");
    }
    const auto n = static_cast<long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(parts[0] + static_cast<double>(i) * parts[2]);
  } else {
    std::size_t pos = 0;
    while (pos <= spec.size()) {
      const auto next = spec.find(',', pos);
      out.push_back(to_double("sinr_grid", trim(spec.substr(pos, next - pos))));
      if (next == std::string_view::npos) break;
      pos = next + 1;
    }
  }
  if (out.empty()) bad_value("sinr_grid", spec, "a nonempty grid");
  return out;
}

std::string resolve_output_path(const std::string& path, const std::string& default_name) {
  std::filesystem::path p = path.empty() ? std::filesystem::path(default_name) : std::filesystem::path(path);
  if (p.is_relative()) {
    if (const char* dir = std::getenv("ICDM_OUTPUT_DIR"); dir != nullptr && *dir != '\0') {
      p = std::filesystem::path(dir) / p;
    }
  }
  return p.string();
}

}  // namespace icdm::harness
