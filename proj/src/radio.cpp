#include "cbsim/radio.hpp"

#include <algorithm>
#include <cmath>

namespace cbsim::radio {

namespace {

// Guards floor() and ceil() against representation error when the exact value is an integer.
constexpr double round_slack = 1e-9;

bool supported_scs(double scs_hz)
{
  for (double v : {15e3, 30e3, 60e3, 120e3}) {
    if (std::abs(scs_hz - v) < 1e-6) {
      return true;
    }
  }
  return false;
}

} // namespace

int rbs_in_bandwidth(double bandwidth_hz, double subcarrier_spacing_hz)
{
  const double rb_width = subcarriers_per_rb * subcarrier_spacing_hz;
  return static_cast<int>(std::ceil(bandwidth_hz / rb_width - round_slack));
}

GridDims derive_grid(const RadioConfig& cfg)
{
  if (!supported_scs(cfg.subcarrier_spacing_hz)) {
    throw radio_error(radio_errc::invalid_numerology,
                      "subcarrier spacing must be one of 15, 30, 60, 120 kHz");
  }
  const int num_rbs = rbs_in_bandwidth(cfg.system_bandwidth_hz, cfg.subcarrier_spacing_hz);
  if (cfg.system_bandwidth_hz < subcarriers_per_rb * cfg.subcarrier_spacing_hz) {
    throw radio_error(radio_errc::bandwidth_too_small, "system bandwidth is narrower than one resource block");
  }
  // 1 ms at 15 kHz, halving with each doubling of the spacing.
  const double slot = 0.001 / (cfg.subcarrier_spacing_hz / 15e3);
  return {num_rbs, slot};
}

McsTable::McsTable()
{
  entries_.reserve(num_entries);
  for (int i = 0; i < num_entries; ++i) {
    const double frac = static_cast<double>(i) / (num_entries - 1);
    entries_.push_back({i, 0.15 + frac * (5.5 - 0.15), -6.0 + frac * (22.0 - (-6.0))});
  }
}

const McsTable& McsTable::standard()
{
  static const McsTable table;
  return table;
}

const McsEntry& McsTable::at(int mcs_index) const
{
  if (!valid(mcs_index)) {
    throw radio_error(radio_errc::invalid_mcs, "MCS index " + std::to_string(mcs_index) + " out of range");
  }
  return entries_[static_cast<std::size_t>(mcs_index)];
}

int McsTable::highest_for_sinr(double sinr_db) const
{
  int best = 0;
  for (const auto& e : entries_) {
    if (e.min_sinr_db <= sinr_db) {
      best = e.index;
    }
  }
  return best;
}

int tbs_bytes(int mcs_index, int rb_count, int symbol_count, double pilot_overhead)
{
  const auto& e = McsTable::standard().at(mcs_index);
  if (rb_count < 1 || symbol_count < 1 || symbol_count > symbols_per_slot) {
    throw radio_error(radio_errc::invalid_allocation, "TBS requires rb_count >= 1 and 1..14 symbols");
  }
  const double res  = static_cast<double>(rb_count) * subcarriers_per_rb * symbol_count * (1.0 - pilot_overhead);
  const double bits = res * e.spectral_efficiency;
  return static_cast<int>(std::floor(bits / 8.0 + round_slack));
}

std::optional<int> rbs_for_bytes(int mcs_index, int bytes, int max_rbs, int symbol_count, double pilot_overhead)
{
  if (max_rbs < 1) {
    return std::nullopt;
  }
  if (bytes <= 0) {
    return 1;
  }
  const int per_rb = tbs_bytes(mcs_index, 1, symbol_count, pilot_overhead);
  // Capacity is superadditive under flooring, so ceil(bytes / per_rb) is an upper bound; walk down from it.
  int guess = per_rb > 0 ? (bytes + per_rb - 1) / per_rb : max_rbs;
  guess     = std::clamp(guess, 1, max_rbs);
  while (guess > 1 && tbs_bytes(mcs_index, guess - 1, symbol_count, pilot_overhead) >= bytes) {
    --guess;
  }
  while (guess <= max_rbs && tbs_bytes(mcs_index, guess, symbol_count, pilot_overhead) < bytes) {
    ++guess;
  }
  if (guess > max_rbs) {
    return std::nullopt;
  }
  return guess;
}

const char* to_string(GrantKind kind)
{
  switch (kind) {
    case GrantKind::dedicated:
      return "dedicated";
    case GrantKind::contention_based:
      return "contention";
    case GrantKind::dedicated_retx:
      return "dedicated_retx";
    case GrantKind::control:
      return "control";
  }
  return "unknown";
}

bool grant_is_well_formed(const Grant& g, int num_rbs)
{
  if (g.rb_count < 1 || g.rb_start < 0 || g.rb_start + g.rb_count > num_rbs) {
    return false;
  }
  if (g.symbol_count < 1 || g.symbol_start < 0 || g.symbol_start + g.symbol_count > symbols_per_slot) {
    return false;
  }
  if ((g.kind == GrantKind::contention_based) != g.target.is_set()) {
    return false;
  }
  if (g.referenced_failed_cb_resource.has_value() && g.kind != GrantKind::dedicated_retx) {
    return false;
  }
  return true;
}

ResourceGrid::ResourceGrid(SlotIndex slot, int num_rbs) :
  slot_(slot), num_rbs_(num_rbs), symbol_mask_(static_cast<std::size_t>(num_rbs), 0)
{
}

std::optional<Grant> ResourceGrid::allocate(int           rb_count,
                                            int           symbol_count,
                                            int           mcs_index,
                                            GrantKind     kind,
                                            GrantTarget   target,
                                            std::uint64_t grant_id,
                                            int           symbol_start)
{
  if (rb_count < 1 || symbol_count < 1 || symbol_start < 0 || symbol_start + symbol_count > symbols_per_slot) {
    throw radio_error(radio_errc::invalid_allocation, "allocation request outside the slot");
  }
  const auto mask = static_cast<std::uint16_t>(((1u << symbol_count) - 1u) << symbol_start);
  int        run  = 0;
  for (int rb = 0; rb < num_rbs_; ++rb) {
    run = (symbol_mask_[static_cast<std::size_t>(rb)] & mask) == 0 ? run + 1 : 0;
    if (run == rb_count) {
      const int start = rb - rb_count + 1;
      for (int r = start; r <= rb; ++r) {
        symbol_mask_[static_cast<std::size_t>(r)] |= mask;
      }
      granted_rbs_ += rb_count;
      Grant g;
      g.grant_id     = grant_id;
      g.slot_index   = slot_;
      g.rb_start     = start;
      g.rb_count     = rb_count;
      g.symbol_start = symbol_start;
      g.symbol_count = symbol_count;
      g.mcs_index    = mcs_index;
      g.kind         = kind;
      g.target       = target;
      return g;
    }
  }
  return std::nullopt;
}

int ResourceGrid::largest_free_run(int symbol_count, int symbol_start) const
{
  const auto mask = static_cast<std::uint16_t>(((1u << symbol_count) - 1u) << symbol_start);
  int        best = 0;
  int        run  = 0;
  for (int rb = 0; rb < num_rbs_; ++rb) {
    run  = (symbol_mask_[static_cast<std::size_t>(rb)] & mask) == 0 ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

int ResourceGrid::occupied_rbs() const
{
  return static_cast<int>(std::count_if(symbol_mask_.begin(), symbol_mask_.end(), [](std::uint16_t m) { return m != 0; }));
}

} // namespace cbsim::radio
