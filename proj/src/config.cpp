#include "cbsim/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace cbsim {

namespace {

std::string join(const std::vector<std::string>& v, const char* sep)
{
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out += (i ? sep : "") + v[i];
  }
  return out;
}

std::string trim(const std::string& s)
{
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v)
{
  char       buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& key, const std::string& v)
{
  try {
    std::size_t pos = 0;
    double      d   = std::stod(v, &pos);
    if (pos != v.size()) {
      throw std::invalid_argument(v);
    }
    return d;
  } catch (const std::exception&) {
    throw ConfigError({key + ": expected a number, got '" + v + "'"});
  }
}

long long to_int(const std::string& key, const std::string& v)
{
  long long out = 0;
  auto [p, ec]  = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError({key + ": expected an integer, got '" + v + "'"});
  }
  return out;
}

std::vector<std::string> split_list(const std::string& v)
{
  std::vector<std::string> out;
  std::string              item;
  std::stringstream        ss(v);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) {
      out.push_back(item);
    }
  }
  return out;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)>                             get;
};

template <typename Get>
Field real_field(Get g)
{
  return {[g](ExperimentConfig& c, const std::string& k, const std::string& v) { g(c) = to_double(k, v); },
          [g](const ExperimentConfig& c) { return fmt(g(const_cast<ExperimentConfig&>(c))); }};
}

template <typename Get>
Field int_field(Get g)
{
  return {[g](ExperimentConfig& c, const std::string& k, const std::string& v) {
            using T = std::remove_reference_t<decltype(g(c))>;
            g(c)    = static_cast<T>(to_int(k, v));
          },
          [g](const ExperimentConfig& c) { return std::to_string(g(const_cast<ExperimentConfig&>(c))); }};
}

const std::map<std::string, Field>& fields()
{
  using C = ExperimentConfig;
  static const std::map<std::string, Field> table = {
      {"f_c", real_field([](C& c) -> double& { return c.radio.carrier_freq_hz; })},
      {"B", real_field([](C& c) -> double& { return c.radio.system_bandwidth_hz; })},
      {"delta_f", real_field([](C& c) -> double& { return c.radio.subcarrier_spacing_hz; })},
      {"T_S", real_field([](C& c) -> double& { return c.radio.sim_duration_s; })},
      {"B_CB", real_field([](C& c) -> double& { return c.radio.cb_bandwidth_cap_hz; })},
      {"N_UR", int_field([](C& c) -> unsigned& { return c.deployment.num_urllc; })},
      {"N_FL", int_field([](C& c) -> unsigned& { return c.deployment.num_fl; })},
      {"tau", real_field([](C& c) -> double& { return c.urllc.period_s; })},
      {"P_UR_U", int_field([](C& c) -> std::uint32_t& { return c.urllc.ul_pdu_bytes; })},
      {"P_UR_D", int_field([](C& c) -> std::uint32_t& { return c.urllc.dl_pdu_bytes; })},
      {"tau_B_U", real_field([](C& c) -> double& { return c.urllc.ul_delay_bound_s; })},
      {"tau_B_D", real_field([](C& c) -> double& { return c.urllc.dl_delay_bound_s; })},
      {"tau_M", real_field([](C& c) -> double& { return c.fl.tau_m_s; })},
      {"tau_T", real_field([](C& c) -> double& { return c.fl.tau_t_s; })},
      {"tau_A", real_field([](C& c) -> double& { return c.fl.tau_a_s; })},
      {"T_BO", int_field([](C& c) -> int& { return c.t_bo_slots; })},
      {"T_SV", real_field([](C& c) -> double& { return c.survival_s; })},
      {"B_D", real_field([](C& c) -> double& { return c.deployment.obstacle_density_per_m2; })},
      {"S", real_field([](C& c) -> double& { return c.deployment.obstacle_side_m; })},
      {"l", real_field([](C& c) -> double& { return c.deployment.length_m; })},
      {"w", real_field([](C& c) -> double& { return c.deployment.width_m; })},
      {"h", real_field([](C& c) -> double& { return c.deployment.height_m; })},
      {"H_UE", real_field([](C& c) -> double& { return c.deployment.ue_height_m; })},
      {"H_gNB", real_field([](C& c) -> double& { return c.deployment.gnb_height_m; })},
      {"P_TX_U", real_field([](C& c) -> double& { return c.link.ue_tx_power_w; })},
      {"P_TX_d", real_field([](C& c) -> double& { return c.link.gnb_tx_power_w; })},
      {"A_gNB", int_field([](C& c) -> int& { return c.link.gnb_antennas; })},
      {"A_UE", int_field([](C& c) -> int& { return c.link.ue_antennas; })},
      {"P_FL",
       {[](C& c, const std::string& k, const std::string& v) {
          try {
            c.fl.model_bytes = parse_size(v);
          } catch (const std::invalid_argument&) {
            throw ConfigError({k + ": bad size '" + v + "'"});
          }
        },
        [](const C& c) { return std::to_string(c.fl.model_bytes); }}},
      {"policy",
       {[](C& c, const std::string& k, const std::string& v) {
          auto p = mac::parse_policy(v);
          if (!p) {
            throw ConfigError({k + ": unknown policy '" + v + "'"});
          }
          c.policy = *p;
        },
        [](const C& c) { return std::string(mac::to_string(c.policy)); }}},
      {"seeds", int_field([](C& c) -> int& { return c.num_seeds; })},
      {"seed_base", int_field([](C& c) -> std::uint64_t& { return c.seed_base; })},
      {"warmup", real_field([](C& c) -> double& { return c.warmup_s; })},
      {"sr_proc", int_field([](C& c) -> int& { return c.sr_proc_slots; })},
      {"grant_proc", int_field([](C& c) -> int& { return c.grant_proc_slots; })},
      {"cqi_period", int_field([](C& c) -> int& { return c.cqi_period_slots; })},
      {"cqi_rbs", int_field([](C& c) -> int& { return c.cqi_control_rbs; })},
      {"sigma_shadow", real_field([](C& c) -> double& { return c.link.static_shadow_sigma_db; })},
      {"sigma_fast", real_field([](C& c) -> double& { return c.link.fast_sigma_db; })},
      {"link_margin", real_field([](C& c) -> double& { return c.link.link_margin_db; })},
      {"tcp_window", int_field([](C& c) -> std::uint32_t& { return c.fl.transport.window_segments; })},
      {"tcp_rto", real_field([](C& c) -> double& { return c.fl.transport.rto_s; })},
      {"sweep.policy",
       {[](C& c, const std::string& k, const std::string& v) {
          c.sweep_policies.clear();
          for (const auto& item : split_list(v)) {
            auto p = mac::parse_policy(item);
            if (!p) {
              throw ConfigError({k + ": unknown policy '" + item + "'"});
            }
            c.sweep_policies.push_back(*p);
          }
        },
        [](const C& c) {
          std::vector<std::string> s;
          for (auto p : c.sweep_policies) {
            s.emplace_back(mac::to_string(p));
          }
          return join(s, ",");
        }}},
      {"sweep.N_FL",
       {[](C& c, const std::string& k, const std::string& v) {
          c.sweep_n_fl.clear();
          for (const auto& item : split_list(v)) {
            c.sweep_n_fl.push_back(static_cast<int>(to_int(k, item)));
          }
        },
        [](const C& c) {
          std::vector<std::string> s;
          for (int n : c.sweep_n_fl) {
            s.push_back(std::to_string(n));
          }
          return join(s, ",");
        }}},
      {"sweep.P_FL",
       {[](C& c, const std::string& k, const std::string& v) {
          c.sweep_model_bytes.clear();
          for (const auto& item : split_list(v)) {
            try {
              c.sweep_model_bytes.push_back(parse_size(item));
            } catch (const std::invalid_argument&) {
              throw ConfigError({k + ": bad size '" + item + "'"});
            }
          }
        },
        [](const C& c) {
          std::vector<std::string> s;
          for (auto b : c.sweep_model_bytes) {
            s.push_back(std::to_string(b));
          }
          return join(s, ",");
        }}},
      {"sweep.B_CB",
       {[](C& c, const std::string& k, const std::string& v) {
          c.sweep_b_cb_hz.clear();
          for (const auto& item : split_list(v)) {
            c.sweep_b_cb_hz.push_back(to_double(k, item));
          }
        },
        [](const C& c) {
          std::vector<std::string> s;
          for (double b : c.sweep_b_cb_hz) {
            s.push_back(fmt(b));
          }
          return join(s, ",");
        }}},
  };
  return table;
}

} // namespace

ConfigError::ConfigError(std::vector<std::string> issues) : std::runtime_error(join(issues, "; ")), issues_(std::move(issues)) {}

std::uint64_t parse_size(const std::string& text)
{
  const std::string t = trim(text);
  std::size_t       i = 0;
  while (i < t.size() && (std::isdigit(static_cast<unsigned char>(t[i])) || t[i] == '.')) {
    ++i;
  }
  if (i == 0) {
    throw std::invalid_argument("size must start with a number");
  }
  const double num = std::stod(t.substr(0, i));
  std::string  unit;
  for (char ch : t.substr(i)) {
    unit += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  unit = trim(unit);
  double mult = 1.0;
  if (unit.empty() || unit == "b") {
    mult = 1.0;
  } else if (unit == "k" || unit == "kb") {
    mult = 1024.0;
  } else if (unit == "m" || unit == "mb") {
    mult = 1024.0 * 1024.0;
  } else {
    throw std::invalid_argument("unknown size unit '" + unit + "'");
  }
  return static_cast<std::uint64_t>(std::llround(num * mult));
}

std::string policy_label(mac::Policy p, double b_cb_hz, double system_bandwidth_hz)
{
  std::string label = mac::to_string(p);
  if (mac::is_contention_based(p) && b_cb_hz < system_bandwidth_hz) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "@%g", b_cb_hz / 1e6);
    label += buf;
  }
  return label;
}

std::vector<std::uint64_t> ExperimentConfig::seeds() const
{
  std::vector<std::uint64_t> out;
  for (int i = 0; i < num_seeds; ++i) {
    out.push_back(seed_base + static_cast<std::uint64_t>(i));
  }
  return out;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value)
{
  const auto& table = fields();
  auto        it    = table.find(key);
  if (it == table.end()) {
    throw ConfigError({key + ": unknown key"});
  }
  it->second.set(cfg, key, value);
  cfg.explicit_keys.insert(key);
}

ExperimentConfig parse_config(std::istream& in)
{
  ExperimentConfig         cfg;
  std::vector<std::string> issues;
  std::string              line;
  int                      lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      issues.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), value);
    } catch (const ConfigError& e) {
      for (const auto& i : e.issues()) {
        issues.push_back("line " + std::to_string(lineno) + ": " + i);
      }
    }
  }
  if (!issues.empty()) {
    throw ConfigError(issues);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw ConfigError({path + ": cannot open"});
  }
  return parse_config(in);
}

void ExperimentConfig::validate() const
{
  std::vector<std::string> bad;
  auto need = [&](bool ok, const char* key, const char* what) {
    if (!ok) {
      bad.push_back(std::string(key) + ": " + what);
    }
  };
  const double scs = radio.subcarrier_spacing_hz;
  need(radio.carrier_freq_hz > 0.0 && radio.carrier_freq_hz <= 100e9, "f_c", "must be in (0, 100 GHz]");
  need(scs == 15e3 || scs == 30e3 || scs == 60e3 || scs == 120e3, "delta_f", "must be 15, 30, 60 or 120 kHz");
  need(radio.system_bandwidth_hz >= radio::subcarriers_per_rb * scs, "B", "must hold at least one RB");
  need(radio.sim_duration_s > 0.0, "T_S", "must be positive");
  need(radio.cb_bandwidth_cap_hz > 0.0 && radio.cb_bandwidth_cap_hz <= radio.system_bandwidth_hz, "B_CB", "must be in (0, B]");
  need(urllc.period_s > 0.0, "tau", "must be positive");
  need(urllc.ul_pdu_bytes > 0, "P_UR_U", "must be positive");
  need(urllc.dl_pdu_bytes > 0, "P_UR_D", "must be positive");
  need(urllc.ul_delay_bound_s > 0.0, "tau_B_U", "must be positive");
  need(urllc.dl_delay_bound_s > 0.0, "tau_B_D", "must be positive");
  need(fl.tau_m_s >= 0.0, "tau_M", "must be non-negative");
  need(fl.tau_t_s >= 0.0, "tau_T", "must be non-negative");
  need(fl.tau_a_s >= 0.0, "tau_A", "must be non-negative");
  need(fl.model_bytes > 0, "P_FL", "must be positive");
  need(t_bo_slots >= 0, "T_BO", "must be non-negative");
  need(survival_s > 0.0, "T_SV", "must be positive");
  need(deployment.obstacle_density_per_m2 >= 0.0, "B_D", "must be non-negative");
  need(deployment.length_m > 0.0, "l", "must be positive");
  need(deployment.width_m > 0.0, "w", "must be positive");
  need(deployment.height_m > 0.0, "h", "must be positive");
  need(deployment.obstacle_side_m > 0.0 && deployment.obstacle_side_m <= deployment.height_m, "S", "must be in (0, h]");
  need(deployment.ue_height_m > 0.0 && deployment.ue_height_m < deployment.height_m, "H_UE", "must be in (0, h)");
  need(deployment.gnb_height_m > 0.0 && deployment.gnb_height_m <= deployment.height_m, "H_gNB", "must be in (0, h]");
  need(link.ue_tx_power_w > 0.0, "P_TX_U", "must be positive");
  need(link.gnb_tx_power_w > 0.0, "P_TX_d", "must be positive");
  need(link.gnb_antennas >= 1, "A_gNB", "must be at least 1");
  need(link.ue_antennas >= 1, "A_UE", "must be at least 1");
  need(link.static_shadow_sigma_db >= 0.0, "sigma_shadow", "must be non-negative");
  need(link.fast_sigma_db >= 0.0, "sigma_fast", "must be non-negative");
  need(num_seeds >= 1, "seeds", "must be at least 1");
  need(warmup_s >= 0.0 && warmup_s < radio.sim_duration_s, "warmup", "must be in [0, T_S)");
  need(sr_proc_slots >= 0, "sr_proc", "must be non-negative");
  need(grant_proc_slots >= 1, "grant_proc", "must be at least 1");
  need(cqi_period_slots >= 0, "cqi_period", "must be non-negative");
  need(fl.transport.window_segments >= 1, "tcp_window", "must be at least 1");
  need(fl.transport.rto_s > 0.0, "tcp_rto", "must be positive");
  if (scs > 0.0 && radio.system_bandwidth_hz >= radio::subcarriers_per_rb * scs) {
    const int rbs = radio::rbs_in_bandwidth(radio.system_bandwidth_hz, scs);
    need(cqi_control_rbs >= 0 && cqi_control_rbs < rbs, "cqi_rbs", "must leave at least one RB for data");
  }
  need(!sweep_policies.empty(), "sweep.policy", "must not be empty");
  need(!sweep_n_fl.empty() && std::all_of(sweep_n_fl.begin(), sweep_n_fl.end(), [](int n) { return n >= 0; }), "sweep.N_FL",
       "must list non-negative counts");
  need(!sweep_model_bytes.empty() &&
           std::all_of(sweep_model_bytes.begin(), sweep_model_bytes.end(), [](std::uint64_t b) { return b > 0; }),
       "sweep.P_FL", "must list positive sizes");
  need(!sweep_b_cb_hz.empty() && std::all_of(sweep_b_cb_hz.begin(), sweep_b_cb_hz.end(),
                                             [&](double b) { return b > 0.0 && b <= radio.system_bandwidth_hz; }),
       "sweep.B_CB", "must list values in (0, B]");
  if (!bad.empty()) {
    throw ConfigError(bad);
  }
}

std::string ExperimentConfig::to_text() const
{
  std::string out;
  for (const auto& [key, f] : fields()) {
    out += key + " = " + f.get(*this) + "\n";
  }
  return out;
}

std::string ExperimentConfig::fingerprint(std::uint64_t seed) const
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto          mix = [&](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (char c : to_text()) {
    mix(static_cast<unsigned char>(c));
  }
  for (int i = 0; i < 8; ++i) {
    mix(static_cast<unsigned char>(seed >> (8 * i)));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

} // namespace cbsim
