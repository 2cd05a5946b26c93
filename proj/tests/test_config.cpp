#include "cbsim/config.hpp"

#include <doctest.h>

#include <algorithm>
#include <sstream>

using namespace cbsim;

namespace {

bool mentions(const ConfigError& e, const std::string& key)
{
  return std::any_of(e.issues().begin(), e.issues().end(), [&](const std::string& i) { return i.find(key) != std::string::npos; });
}

} // namespace

TEST_CASE("defaults validate")
{
  ExperimentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.radio.system_bandwidth_hz == 40e6);
  CHECK(cfg.deployment.num_urllc == 10);
  CHECK(cfg.fl.model_bytes > 0);
  CHECK(cfg.seeds() == std::vector<std::uint64_t>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
}

TEST_CASE("validation lists every bad field")
{
  ExperimentConfig cfg;
  cfg.radio.subcarrier_spacing_hz = 25e3;
  cfg.survival_s                  = 0.0;
  cfg.deployment.obstacle_side_m  = 20.0;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(mentions(e, "delta_f"));
    CHECK(mentions(e, "T_SV"));
    CHECK(mentions(e, "S:"));
    CHECK(e.issues().size() >= 3);
  }

  ExperimentConfig cb;
  cb.radio.cb_bandwidth_cap_hz = 50e6;
  CHECK_THROWS_AS(cb.validate(), ConfigError);
}

TEST_CASE("parsing")
{
  std::istringstream in("# factory\nN_FL = 12\npolicy = cb-dedicated\nP_FL = 16kB   # small model\n"
                        "sweep.N_FL = 1, 5\nsweep.P_FL = 12kB,2MB\nB_CB = 20e6\n");
  const auto cfg = parse_config(in);
  CHECK(cfg.n_fl() == 12);
  CHECK(cfg.policy == mac::Policy::cb_dedicated_retx);
  CHECK(cfg.fl.model_bytes == 16384);
  CHECK(cfg.sweep_n_fl == std::vector<int>{1, 5});
  CHECK(cfg.sweep_model_bytes == std::vector<std::uint64_t>{12288, 2097152});
  CHECK(cfg.radio.cb_bandwidth_cap_hz == 20e6);
  CHECK(cfg.explicit_keys.count("N_FL"));
  CHECK_FALSE(cfg.explicit_keys.count("T_S"));

  std::istringstream bad("N_FL = twelve\nbogus = 1\nno equals sign\npolicy = aloha\n");
  try {
    parse_config(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.issues().size() == 4);
    CHECK(mentions(e, "line 1"));
    CHECK(mentions(e, "bogus"));
    CHECK(mentions(e, "line 3"));
    CHECK(mentions(e, "aloha"));
  }
  CHECK_THROWS_AS(load_config("/nonexistent/cbsim.cfg"), ConfigError);
}

TEST_CASE("canonical text round trip")
{
  ExperimentConfig a;
  set_config_value(a, "N_FL", "7");
  set_config_value(a, "B_D", "0.15");
  set_config_value(a, "tau", "0.004");
  set_config_value(a, "sweep.policy", "ds,cb-contention");
  set_config_value(a, "sweep.B_CB", "10e6,40e6");
  const auto         text = a.to_text();
  std::istringstream in(text);
  const auto         b = parse_config(in);
  CHECK(b.to_text() == text);
  CHECK(b.fingerprint(3) == a.fingerprint(3));
  CHECK(a.fingerprint(3) != a.fingerprint(4));
  CHECK(text.find("B_D = 0.15\n") != std::string::npos);
  CHECK(a.fingerprint(1).size() == 16);

  ExperimentConfig c = a;
  c.fl.tau_t_s += 1.0;
  CHECK(c.fingerprint(3) != a.fingerprint(3));
}

TEST_CASE("size parsing")
{
  CHECK(parse_size("12kB") == 12288);
  CHECK(parse_size("16 KB") == 16384);
  CHECK(parse_size("2MB") == 2097152);
  CHECK(parse_size("1460") == 1460);
  CHECK(parse_size("0.5k") == 512);
  CHECK_THROWS(parse_size("kB"));
  CHECK_THROWS(parse_size("3GB"));
}

TEST_CASE("policy labels")
{
  CHECK(policy_label(mac::Policy::ds, 40e6, 40e6) == "ds");
  CHECK(policy_label(mac::Policy::cb_dedicated_retx, 40e6, 40e6) == "cb-dedicated");
  CHECK(policy_label(mac::Policy::cb_dedicated_retx, 10e6, 40e6) == "cb-dedicated@10");
  CHECK(policy_label(mac::Policy::cb_contention_retx, 2.5e6, 40e6) == "cb-contention@2.5");
  CHECK(policy_label(mac::Policy::ibi, 10e6, 40e6) == "ibi");
}
