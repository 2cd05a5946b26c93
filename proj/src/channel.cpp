#include "cbsim/channel.hpp"

#include "cbsim/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

namespace cbsim::channel {

double distance(const Vec3& a, const Vec3& b)
{
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

unsigned obstacle_count(const DeploymentConfig& cfg)
{
  return static_cast<unsigned>(std::lround(cfg.obstacle_density_per_m2 * cfg.length_m * cfg.width_m));
}

FactoryLayout deploy(std::uint64_t seed, const DeploymentConfig& cfg)
{
  FactoryLayout layout;
  layout.config       = cfg;
  layout.gnb_position = {cfg.length_m / 2, cfg.width_m / 2, cfg.gnb_height_m};

  auto                                   rng = make_engine(seed, Stream::deployment);
  std::uniform_real_distribution<double> along_l(0.0, cfg.length_m);
  std::uniform_real_distribution<double> along_w(0.0, cfg.width_m);

  // Obstacles are drawn before UEs so that adding FL UEs keeps every earlier position.
  const unsigned n_obstacles = obstacle_count(cfg);
  layout.obstacles.reserve(n_obstacles);
  for (unsigned i = 0; i < n_obstacles; ++i) {
    const double x = along_l(rng);
    const double y = along_w(rng);
    layout.obstacles.push_back({{x, y, 0.0}, cfg.obstacle_side_m});
  }
  const unsigned n_ues = cfg.num_urllc + cfg.num_fl;
  layout.ue_positions.reserve(n_ues);
  for (unsigned i = 0; i < n_ues; ++i) {
    const double x = along_l(rng);
    const double y = along_w(rng);
    layout.ue_positions.push_back({x, y, cfg.ue_height_m});
  }
  return layout;
}

void write_layout_jsonl(std::ostream& os, const FactoryLayout& layout)
{
  using nlohmann::json;
  const auto& g = layout.gnb_position;
  os << json{{"type", "gnb"}, {"x", g.x}, {"y", g.y}, {"z", g.z}}.dump() << '\n';
  for (std::size_t i = 0; i < layout.obstacles.size(); ++i) {
    const auto& o = layout.obstacles[i];
    os << json{{"type", "obstacle"}, {"id", i}, {"x", o.center.x}, {"y", o.center.y}, {"side", o.side}}.dump() << '\n';
  }
  for (std::size_t i = 0; i < layout.ue_positions.size(); ++i) {
    const auto& p   = layout.ue_positions[i];
    const char* cls = i < layout.config.num_urllc ? "urllc" : "fl";
    os << json{{"type", "ue"}, {"id", i}, {"class", cls}, {"x", p.x}, {"y", p.y}, {"z", p.z}}.dump() << '\n';
  }
}

double reference_loss_db(double carrier_freq_hz)
{
  return 20.0 * std::log10(4.0 * std::numbers::pi * carrier_freq_hz / speed_of_light);
}

double pathloss_db(const Vec3& ue, const Vec3& gnb, double carrier_freq_hz, double exponent)
{
  const double d = std::max(1.0, distance(ue, gnb));
  return reference_loss_db(carrier_freq_hz) + 10.0 * exponent * std::log10(d);
}

double knife_edge_loss_db(double nu)
{
  if (nu <= -0.7) {
    return 0.0;
  }
  const double v = nu - 0.1;
  return 6.9 + 20.0 * std::log10(std::sqrt(v * v + 1.0) + v);
}

std::optional<double> top_edge_fresnel(const Vec3& ue, const Vec3& gnb, const Obstacle& obstacle, double wavelength_m)
{
  const Vec3   lo      = obstacle.lo();
  const Vec3   hi      = obstacle.hi();
  const double p[3]    = {ue.x, ue.y, ue.z};
  const double d[3]    = {gnb.x - ue.x, gnb.y - ue.y, gnb.z - ue.z};
  const double box_lo[3] = {lo.x, lo.y, lo.z};
  const double box_hi[3] = {hi.x, hi.y, hi.z};

  double t_enter = 0.0;
  double t_exit  = 1.0;
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(d[axis]) < 1e-12) {
      if (p[axis] < box_lo[axis] || p[axis] > box_hi[axis]) {
        return std::nullopt;
      }
      continue;
    }
    double t0 = (box_lo[axis] - p[axis]) / d[axis];
    double t1 = (box_hi[axis] - p[axis]) / d[axis];
    if (t0 > t1) {
      std::swap(t0, t1);
    }
    t_enter = std::max(t_enter, t0);
    t_exit  = std::min(t_exit, t1);
    if (t_enter > t_exit) {
      return std::nullopt;
    }
  }

  // The diffracting edge sits where the ray first meets the cube; its clearance below the top face is h.
  const double length = distance(ue, gnb);
  const double z_los  = ue.z + t_enter * d[2];
  const double h      = hi.z - z_los;
  const double d1     = std::max(wavelength_m, t_enter * length);
  const double d2     = std::max(wavelength_m, (1.0 - t_enter) * length);
  return h * std::sqrt(2.0 * (d1 + d2) / (wavelength_m * d1 * d2));
}

double blockage_loss_db(const Vec3&                  ue,
                        const Vec3&                  gnb,
                        const std::vector<Obstacle>& obstacles,
                        double                       carrier_freq_hz,
                        double                       cap_db)
{
  const double wavelength = speed_of_light / carrier_freq_hz;
  double       total      = 0.0;
  for (const auto& o : obstacles) {
    if (auto nu = top_edge_fresnel(ue, gnb, o, wavelength)) {
      total += knife_edge_loss_db(*nu);
      if (total >= cap_db) {
        return cap_db;
      }
    }
  }
  return total;
}

double watts_to_dbm(double w)
{
  return 10.0 * std::log10(w * 1000.0);
}

double thermal_noise_dbm(double bandwidth_hz, double noise_figure_db)
{
  return -174.0 + 10.0 * std::log10(bandwidth_hz) + noise_figure_db;
}

double ul_diversity_gain_db(const LinkBudgetConfig& cfg)
{
  return 10.0 * std::log10(static_cast<double>(std::max(1, cfg.gnb_antennas)));
}

std::vector<LinkState> compute_links(const FactoryLayout&     layout,
                                     const LinkBudgetConfig& budget,
                                     double                  carrier_freq_hz,
                                     double                  bandwidth_hz,
                                     std::uint64_t           seed)
{
  std::vector<LinkState> links;
  links.reserve(layout.ue_positions.size());
  const double ul_noise = thermal_noise_dbm(bandwidth_hz, budget.gnb_noise_figure_db);
  const double dl_noise = thermal_noise_dbm(bandwidth_hz, budget.ue_noise_figure_db);
  const double ue_tx    = watts_to_dbm(budget.ue_tx_power_w);
  const double gnb_tx   = watts_to_dbm(budget.gnb_tx_power_w);
  const double div_gain = ul_diversity_gain_db(budget);

  auto                             rng = make_engine(seed, Stream::shadowing);
  std::normal_distribution<double> shadow(0.0, 1.0);

  for (std::size_t i = 0; i < layout.ue_positions.size(); ++i) {
    const auto& pos = layout.ue_positions[i];
    LinkState   ls;
    ls.ue_id            = static_cast<UeId>(i);
    ls.pathloss_db      = pathloss_db(pos, layout.gnb_position, carrier_freq_hz, budget.pathloss_exponent);
    ls.blockage_loss_db = blockage_loss_db(pos, layout.gnb_position, layout.obstacles, carrier_freq_hz, budget.blockage_cap_db);
    ls.shadowing_db     = budget.static_shadow_sigma_db * shadow(rng);
    const double loss   = ls.pathloss_db + ls.blockage_loss_db + ls.shadowing_db;
    ls.ul_sinr_db       = ue_tx - loss - ul_noise + div_gain;
    ls.dl_sinr_db       = gnb_tx - loss - dl_noise;
    links.push_back(ls);
  }
  return links;
}

int mcs_for_sinr(double sinr_db, double margin_db)
{
  return radio::McsTable::standard().highest_for_sinr(sinr_db - margin_db);
}

std::optional<CqiReport> cqi_report(LinkState& link, SlotIndex slot, int period_slots, double link_margin_db)
{
  if (link.last_cqi_slot && slot - *link.last_cqi_slot < period_slots) {
    return std::nullopt;
  }
  CqiReport r{link.ue_id, slot, mcs_for_sinr(link.ul_sinr_db, link_margin_db), mcs_for_sinr(link.dl_sinr_db, link_margin_db)};
  link.last_cqi      = r.ul_mcs;
  link.last_dl_cqi   = r.dl_mcs;
  link.last_cqi_slot = slot;
  return r;
}

bool tb_success(int mcs_index, double sinr_db, double fluctuation_db, bool collided)
{
  if (collided) {
    return false;
  }
  return sinr_db >= radio::McsTable::standard().at(mcs_index).min_sinr_db + fluctuation_db;
}

double fast_fluctuation_db(std::uint64_t seed, UeId ue, SlotIndex slot, int direction, double sigma_db)
{
  if (sigma_db == 0.0) {
    return 0.0;
  }
  const std::uint64_t key = substream_seed(seed, Stream::shadowing, 1);
  return sigma_db * counter_normal(key, ue, static_cast<std::uint64_t>(slot) * 2 + static_cast<std::uint64_t>(direction));
}

} // namespace cbsim::channel
