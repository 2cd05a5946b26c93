#pragma once

#include "cbsim/radio.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace cbsim::channel {

inline constexpr double speed_of_light = 299792458.0;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

double distance(const Vec3& a, const Vec3& b);

/// Axis-aligned cube resting on the floor.
struct Obstacle {
  Vec3   center; // z is ignored; the cube spans [0, side] vertically
  double side = 0.0;

  Vec3 lo() const { return {center.x - side / 2, center.y - side / 2, 0.0}; }
  Vec3 hi() const { return {center.x + side / 2, center.y + side / 2, side}; }
};

struct DeploymentConfig {
  double   length_m               = 15.0;
  double   width_m                = 15.0;
  double   height_m               = 11.0;
  double   obstacle_density_per_m2 = 0.15;
  double   obstacle_side_m        = 9.0;
  double   ue_height_m            = 1.5;
  double   gnb_height_m           = 10.0;
  unsigned num_urllc              = 10;
  unsigned num_fl                 = 1;
};

struct FactoryLayout {
  DeploymentConfig      config;
  std::vector<Obstacle> obstacles;
  Vec3                  gnb_position;
  /// URLLC UEs first, then FL UEs.
  std::vector<Vec3> ue_positions;
};

/// round(density * l * w)
unsigned obstacle_count(const DeploymentConfig& cfg);

FactoryLayout deploy(std::uint64_t seed, const DeploymentConfig& cfg);

/// One JSON object per line: the gNB, each obstacle, each UE.
void write_layout_jsonl(std::ostream& os, const FactoryLayout& layout);

/// 20 log10(4 pi f / c), the free-space loss at 1 m.
double reference_loss_db(double carrier_freq_hz);

/// Log-distance model; distances under 1 m are clamped to 1 m.
double pathloss_db(const Vec3& ue, const Vec3& gnb, double carrier_freq_hz, double exponent = 2.2);

/// Single knife-edge loss from the Fresnel-Kirchhoff parameter; 0 for nu <= -0.7.
double knife_edge_loss_db(double nu);

/// Fresnel parameter of the top edge of `obstacle` for the ue->gnb ray, or nullopt when
/// the segment does not pass through the cube.
std::optional<double> top_edge_fresnel(const Vec3& ue, const Vec3& gnb, const Obstacle& obstacle, double wavelength_m);

/// Sum of knife-edge losses over every obstacle crossed by the segment, capped at `cap_db`.
double blockage_loss_db(const Vec3&                  ue,
                        const Vec3&                  gnb,
                        const std::vector<Obstacle>& obstacles,
                        double                       carrier_freq_hz,
                        double                       cap_db = 40.0);

struct LinkBudgetConfig {
  double ue_tx_power_w        = 0.2;
  double gnb_tx_power_w       = 0.5;
  int    gnb_antennas         = 2;
  int    ue_antennas          = 1;
  double gnb_noise_figure_db  = 7.0;
  double ue_noise_figure_db   = 9.0;
  double pathloss_exponent    = 2.2;
  double blockage_cap_db      = 40.0;
  double static_shadow_sigma_db = 3.0;
  /// Per-(UE, slot) decoding fluctuation.
  double fast_sigma_db = 2.0;
  double link_margin_db = 1.0;
};

struct LinkState {
  UeId   ue_id            = 0;
  double pathloss_db      = 0.0;
  double blockage_loss_db = 0.0;
  double shadowing_db     = 0.0;
  double ul_sinr_db       = 0.0;
  double dl_sinr_db       = 0.0;
  std::optional<int>       last_cqi; // UL MCS implied by the last report
  std::optional<int>       last_dl_cqi;
  std::optional<SlotIndex> last_cqi_slot;
};

double watts_to_dbm(double w);
double thermal_noise_dbm(double bandwidth_hz, double noise_figure_db);

/// Receive diversity gain applied to the uplink, 10 log10(A_gNB).
double ul_diversity_gain_db(const LinkBudgetConfig& cfg);

/// Builds one LinkState per UE of the layout.
std::vector<LinkState> compute_links(const FactoryLayout&     layout,
                                     const LinkBudgetConfig& budget,
                                     double                  carrier_freq_hz,
                                     double                  bandwidth_hz,
                                     std::uint64_t           seed);

struct CqiReport {
  UeId      ue_id;
  SlotIndex slot;
  int       ul_mcs;
  int       dl_mcs;
};

/// Emits a report when none was sent yet or `period_slots` elapsed since the last one; updates `link`.
std::optional<CqiReport> cqi_report(LinkState& link, SlotIndex slot, int period_slots, double link_margin_db);

/// MCS the gNB would pick for `sinr_db` after backing off by `margin_db`.
int mcs_for_sinr(double sinr_db, double margin_db);

/// Decoding outcome for one TB. `fluctuation_db` is the slot's draw; collisions always fail.
bool tb_success(int mcs_index, double sinr_db, double fluctuation_db, bool collided);

/// The slot's decoding fluctuation for one UE and direction, a pure function of its arguments.
double fast_fluctuation_db(std::uint64_t seed, UeId ue, SlotIndex slot, int direction, double sigma_db);

} // namespace cbsim::channel
