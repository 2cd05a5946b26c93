#pragma once

#include "cbsim/config.hpp"
#include "cbsim/mac.hpp"
#include "cbsim/metrics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cbsim {

struct UeReport {
  UeId          ue;
  mac::UeClass  cls;
  double        ul_availability = 1.0; // URLLC only
  double        dl_availability = 1.0;
  std::uint64_t collided        = 0; // FL only
  std::uint64_t utilized        = 0;
};

/// One uplink SDU handed to an FL UE's RLC, for the on-off traffic property.
struct UlActivity {
  SlotIndex slot;
  UeId      ue;
  SduKind   kind;
  std::uint32_t flow;
};

struct RunOptions {
  bool              record_trace    = false;
  bool              record_activity = false;
  mac::MacObserver* observer        = nullptr;
};

struct RunResult {
  std::string                  fingerprint;
  std::uint64_t                seed = 0;
  metrics::MetricMap           metrics;
  std::vector<UeReport>        ues;
  metrics::TransferLedger      ledger;
  std::vector<mac::TraceRecord> trace;
  std::vector<UlActivity>      activity;
  SlotIndex                    slots  = 0;
  double                       wall_s = 0.0;
};

/// Simulates one (config, seed) pair for T_S seconds at the configured policy, N_FL and model size.
/// Throws ConfigError when the configuration does not validate.
RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& options = {});

/// The factory layout a run with `cfg` and `seed` uses.
channel::FactoryLayout layout_for(const ExperimentConfig& cfg, std::uint64_t seed);

} // namespace cbsim
