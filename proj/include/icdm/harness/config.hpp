#pragma once

// Flat `key = value` experiment configuration. Keys are listed in
// `config_keys()`; see README for meanings and defaults.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "icdm/channel.hpp"
#include "icdm/guidance.hpp"
#include "icdm/sampler.hpp"
#include "icdm/schedule.hpp"

namespace icdm::harness {

enum class PriorKind { Gaussian, Gmm };
enum class ScoreSource { Exact, Affine };

struct ExperimentConfig {
  ChannelKind channel = ChannelKind::Rayleigh;
  Index k = 64;
  double snr_db = 20;
  double sinr_db = 0;
  std::optional<double> p_z;  // overrides the SINR mapping when set

  PriorKind prior_x = PriorKind::Gaussian;
  double prior_x_mean = 0;
  double prior_x_var = 1;
  double gmm_offset = 1;  // x mixture: 0.5 N(-offset, gmm_var) + 0.5 N(+offset, gmm_var)
  double gmm_var = 0.25;
  double prior_z_mean = 0;
  double prior_z_var = 1;

  GuidanceMethod guidance = GuidanceMethod::Icdm;
  int order = 2;
  int steps = kDefaultSteps;
  double rho_min = kDefaultRhoMin;
  double rho_max = kDefaultRhoMax;
  double beta = 1;
  double gamma = 1;
  double sigma_hat2 = 1;
  bool conditional_corrector = false;

  ScoreSource score = ScoreSource::Exact;
  std::string score_table_x;
  std::string score_table_z;

  int trials = 100;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: hardware concurrency
  bool bound_check = true;
  bool record_time = false;
  std::string sinr_grid = "-4:7:1";
  std::string output;

  void validate() const;
  SamplerConfig<double> sampler() const;
};

struct Powers {
  double p_x = 1;
  double p_z = 0;
  double sigma2 = 0;
  bool interference_free = false;  // requested SINR at or above the SNR
};

/// P_x = 1, sigma^2 = 10^(-snr/10), P_z = max(10^(-sinr/10) - sigma^2, 0).
Powers sinr_to_powers(double snr_db, double sinr_db);

ChannelParams<double> channel_params(const ExperimentConfig& cfg);

const std::vector<std::string_view>& config_keys();

/// Throws std::invalid_argument naming the key on unknown keys or bad values.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Reads `key = value` lines; '#' starts a comment.
void apply_config_text(ExperimentConfig& cfg, std::string_view text, const std::string& origin = "<text>");
void load_config_file(ExperimentConfig& cfg, const std::string& path);

/// "a:b:step" (inclusive) or "a,b,c".
std::vector<double> parse_grid(std::string_view spec);

/// Output path resolution: relative paths are placed under $ICDM_OUTPUT_DIR
/// when it is set; an empty path falls back to `default_name`.
std::string resolve_output_path(const std::string& path, const std::string& default_name);

}  // namespace icdm::harness
