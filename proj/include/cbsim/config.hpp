#pragma once

#include "cbsim/channel.hpp"
#include "cbsim/mac.hpp"
#include "cbsim/radio.hpp"
#include "cbsim/traffic.hpp"

#include <cstdint>
#include <iosfwd>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbsim {

/// Collects every problem found while reading or validating a configuration.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

private:
  std::vector<std::string> issues_;
};

struct ExperimentConfig {
  radio::RadioConfig         radio;
  channel::DeploymentConfig  deployment;
  channel::LinkBudgetConfig  link;
  traffic::UrllcConfig       urllc;
  traffic::FlConfig          fl;
  int                        t_bo_slots     = 10;
  double                     survival_s     = 0.015;
  double                     warmup_s       = 1.0;
  int                        sr_proc_slots  = 2;
  int                        grant_proc_slots = 2;
  int                        cqi_period_slots = 40;
  int                        cqi_control_rbs  = 15;

  // Point of the matrix a single run uses.
  mac::Policy policy = mac::Policy::ds;

  // Sweep axes.
  std::vector<mac::Policy>   sweep_policies{mac::Policy::ds, mac::Policy::ibi, mac::Policy::cb_dedicated_retx,
                                          mac::Policy::cb_contention_retx};
  std::vector<int>           sweep_n_fl{1, 5, 10, 15, 20, 25, 30};
  std::vector<std::uint64_t> sweep_model_bytes{12 * 1024, 16 * 1024, 2 * 1024 * 1024};
  std::vector<double>        sweep_b_cb_hz{40e6};
  int                        num_seeds = 10;
  std::uint64_t              seed_base = 1;

  /// Keys that were set explicitly by the parsed file.
  std::set<std::string> explicit_keys;

  int n_fl() const { return static_cast<int>(deployment.num_fl); }

  std::vector<std::uint64_t> seeds() const;

  /// Every parameter checked against its physical range. Throws ConfigError listing each bad field.
  void validate() const;

  /// Canonical key = value text; parsing it back yields an identical configuration.
  std::string to_text() const;

  /// Stable hash of the canonical text and the seed, as 16 hex digits.
  std::string fingerprint(std::uint64_t seed) const;
};

/// Reads the flat key = value format. Unknown keys and malformed values are errors.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);

/// Applies one key = value pair; throws ConfigError on a bad key or value.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// "12kB" -> 12288, "2MB" -> 2097152, "1460" -> 1460. Powers of 1024.
std::uint64_t parse_size(const std::string& text);

/// Label used in CSV output: the policy name, plus "@<MHz>" when the CB bandwidth cap is not the full carrier.
std::string policy_label(mac::Policy p, double b_cb_hz, double system_bandwidth_hz);

} // namespace cbsim
