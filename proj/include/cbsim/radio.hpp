#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbsim {

using UeId = std::uint32_t;
using SlotIndex = std::int64_t;

} // namespace cbsim

namespace cbsim::radio {

inline constexpr int symbols_per_slot = 14;
inline constexpr int subcarriers_per_rb = 12;

enum class radio_errc { bandwidth_too_small, invalid_numerology, invalid_mcs, invalid_allocation };

class radio_error : public std::runtime_error {
public:
  radio_error(radio_errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  radio_errc code() const noexcept { return code_; }

private:
  radio_errc code_;
};

struct RadioConfig {
  double carrier_freq_hz       = 2.6e9;
  double system_bandwidth_hz   = 40e6;
  double subcarrier_spacing_hz = 30e3;
  /// Upper bound on the bandwidth a contention-based grant may span.
  double cb_bandwidth_cap_hz = 40e6;
  double sim_duration_s      = 150.0;
  /// Fraction of resource elements lost to DMRS and control, folded into one factor.
  double pilot_overhead = 1.0 / 7.0;
};

struct GridDims {
  int    num_rbs;
  double slot_duration_s;
};

/// Number of RBs and slot length implied by the numerology.
/// Throws radio_error(bandwidth_too_small) when less than one RB fits.
GridDims derive_grid(const RadioConfig& cfg);

/// RBs needed to span `bandwidth_hz`, a partial RB counting as one (40 MHz at 30 kHz gives 112).
int rbs_in_bandwidth(double bandwidth_hz, double subcarrier_spacing_hz);

struct McsEntry {
  int    index;
  double spectral_efficiency; // bits per resource element
  double min_sinr_db;
};

/// Linear 28-entry table, 0.15..5.5 bits/RE and -6..22 dB.
class McsTable {
public:
  static constexpr int num_entries = 28;

  static const McsTable& standard();

  const McsEntry& at(int mcs_index) const;
  int             size() const { return static_cast<int>(entries_.size()); }
  int             max_index() const { return size() - 1; }
  bool            valid(int mcs_index) const { return mcs_index >= 0 && mcs_index < size(); }

  /// Highest MCS whose threshold is at or below `sinr_db`; 0 when none is.
  int highest_for_sinr(double sinr_db) const;

private:
  McsTable();
  std::vector<McsEntry> entries_;
};

/// Transport block capacity in bytes:
/// floor(rbs * 12 * symbols * (1 - overhead) * SE / 8).
int tbs_bytes(int mcs_index, int rb_count, int symbol_count = symbols_per_slot, double pilot_overhead = 1.0 / 7.0);

/// Smallest RB count whose capacity reaches `bytes`, or nullopt when even `max_rbs` is not enough.
std::optional<int>
rbs_for_bytes(int mcs_index, int bytes, int max_rbs, int symbol_count = symbols_per_slot, double pilot_overhead = 1.0 / 7.0);

enum class GrantKind { dedicated, contention_based, dedicated_retx, control };

const char* to_string(GrantKind kind);

struct GrantTarget {
  enum class Kind { ue, ue_set } kind = Kind::ue;
  std::uint32_t id = 0;

  static GrantTarget single(UeId ue) { return {Kind::ue, ue}; }
  static GrantTarget set(std::uint32_t set_id) { return {Kind::ue_set, set_id}; }
  bool               is_set() const { return kind == Kind::ue_set; }
};

struct Grant {
  std::uint64_t grant_id      = 0;
  SlotIndex     slot_index    = 0;
  int           rb_start      = 0;
  int           rb_count      = 0;
  int           symbol_start  = 0;
  int           symbol_count  = symbols_per_slot;
  int           mcs_index     = 0;
  GrantKind     kind          = GrantKind::dedicated;
  GrantTarget   target;
  /// Only set for dedicated_retx grants that repair a failed contention-based attempt.
  std::optional<std::uint64_t> referenced_failed_cb_resource;
};

/// Checks the structural invariants of a grant against the grid size.
bool grant_is_well_formed(const Grant& g, int num_rbs);

/// Per-slot occupancy of RBs x OFDM symbols.
class ResourceGrid {
public:
  ResourceGrid(SlotIndex slot, int num_rbs);

  SlotIndex slot() const { return slot_; }
  int       num_rbs() const { return num_rbs_; }

  /// First-fit in frequency over a contiguous run of free RBs.
  /// Returns nullopt (Insufficient) when no contiguous region of `rb_count` fits.
  std::optional<Grant> allocate(int               rb_count,
                                int               symbol_count,
                                int               mcs_index,
                                GrantKind         kind,
                                GrantTarget       target,
                                std::uint64_t     grant_id,
                                int               symbol_start = 0);

  /// Longest contiguous run of RBs free over every symbol in [symbol_start, symbol_start + symbol_count).
  int largest_free_run(int symbol_count = symbols_per_slot, int symbol_start = 0) const;

  /// RBs with at least one occupied symbol.
  int occupied_rbs() const;
  int free_rbs() const { return num_rbs_ - occupied_rbs(); }

  /// Sum of rb_count over every grant handed out from this grid.
  int granted_rbs() const { return granted_rbs_; }

private:
  SlotIndex                  slot_;
  int                        num_rbs_;
  std::vector<std::uint16_t> symbol_mask_; // one bit per symbol, per RB
  int                        granted_rbs_ = 0;
};

} // namespace cbsim::radio
