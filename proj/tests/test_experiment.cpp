#include "cbsim/experiment.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace cbsim;

namespace {

SummaryRow upload(const std::string& policy, int n, std::uint64_t bytes, double mean)
{
  return {policy, n, bytes, "upload_time_s", mean, 0.0, 5};
}

ExperimentConfig short_config()
{
  ExperimentConfig cfg;
  cfg.radio.sim_duration_s = 3.0;
  cfg.warmup_s             = 0.5;
  cfg.fl.model_bytes       = 12 * 1024;
  return cfg;
}

} // namespace

TEST_CASE("default matrix size")
{
  ExperimentConfig cfg;
  const auto       points = enumerate_points(cfg);
  CHECK(points.size() == 4 * 7 * 3);
  CHECK(points.size() * cfg.seeds().size() == 840);

  cfg.sweep_b_cb_hz = {10e6, 40e6};
  // The cap axis only multiplies the two contention-based policies.
  CHECK(enumerate_points(cfg).size() == 2 * 7 * 3 + 2 * 7 * 3 * 2);
  for (const auto& p : enumerate_points(cfg)) {
    if (!mac::is_contention_based(p.policy)) {
      CHECK(p.b_cb_hz == cfg.radio.system_bandwidth_hz);
    }
  }
}

TEST_CASE("boundary verdicts")
{
  const std::uint64_t small = 12 * 1024, mid = 16 * 1024, big = 2 * 1024 * 1024;
  std::vector<SummaryRow> s;
  for (int n : {1, 5, 10}) {
    s.push_back(upload("ds", n, small, 0.006));
    s.push_back(upload("cb-dedicated", n, small, 0.002));
    s.push_back(upload("ds", n, mid, 0.006));
    s.push_back(upload("cb-dedicated", n, mid, n <= 5 ? 0.004 : 0.008));
    s.push_back(upload("ds", n, big, 2.0));
    s.push_back(upload("cb-dedicated", n, big, n == 1 ? 2.5 : 3.0));
    s.push_back(upload("cb-dedicated@10", n, big, n == 1 ? 1.5 : 3.0));
  }
  const auto b = boundary_report(s);
  REQUIRE(b.size() == 4);
  auto find = [&](std::uint64_t bytes, const std::string& label) {
    for (const auto& e : b) {
      if (e.model_bytes == bytes && e.cb_label == label) {
        return e;
      }
    }
    FAIL("missing entry");
    return BoundaryEntry{};
  };
  CHECK(find(small, "cb-dedicated").verdict == "YES");
  CHECK(find(small, "cb-dedicated").up_to_n_fl == 10);
  CHECK(find(mid, "cb-dedicated").verdict == "YES (up to 5 UEs)");
  CHECK(find(big, "cb-dedicated").verdict == "NO");
  CHECK(find(big, "cb-dedicated").up_to_n_fl == 0);
  CHECK(find(big, "cb-dedicated@10").verdict == "YES (up to 1 UEs)");

  std::ostringstream os;
  write_boundary_csv(os, b);
  CHECK(os.str().rfind("model_bytes,cb_policy,verdict,up_to_n_fl\n", 0) == 0);
}

TEST_CASE("results CSV round trip and summaries")
{
  std::vector<ResultRow> rows;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    rows.push_back({"ds", 5, 12288, seed, "upload_time_s", 0.001 * static_cast<double>(seed) + 1.0 / 3.0});
    rows.push_back({"cb-dedicated@10", 5, 12288, seed, "collision_probability", 0.1 * static_cast<double>(seed)});
  }
  rows.push_back({"ds", 1, 12288, 9, "failed", 1.0});

  std::ostringstream os;
  write_results_csv(os, rows);
  std::istringstream in(os.str());
  const auto         back = read_results_csv(in);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].policy == rows[i].policy);
    CHECK(back[i].seed == rows[i].seed);
    CHECK(back[i].value == rows[i].value); // shortest round-trip formatting is exact
  }

  const auto sum = summarize_rows(back);
  REQUIRE(sum.size() == 3);
  CHECK(sum[0].metric == "upload_time_s");
  CHECK(sum[0].mean == doctest::Approx(0.0025 + 1.0 / 3.0));
  CHECK(sum[0].n == 4);
  CHECK(sum[1].mean == doctest::Approx(0.25));
  CHECK(sum[2].metric == "failed_runs");
  CHECK(sum[2].mean == 1.0);

  std::istringstream bad("policy,seed\n");
  CHECK_THROWS(read_results_csv(bad));

  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0 / 3.0) == "0.3333333333333333");
  CHECK(format_double(std::nan("")) == "nan");
}

TEST_CASE("matrix runs are deterministic across thread counts")
{
  auto cfg               = short_config();
  cfg.sweep_policies     = {mac::Policy::ds, mac::Policy::cb_dedicated_retx};
  cfg.sweep_n_fl         = {2};
  cfg.sweep_model_bytes  = {12 * 1024};
  cfg.num_seeds          = 2;
  const auto serial      = run_matrix(cfg, 1);
  const auto parallel    = run_matrix(cfg, 3);
  REQUIRE(serial.size() == 4);
  REQUIRE(parallel.size() == 4);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    REQUIRE(serial[i].result);
    REQUIRE(parallel[i].result);
    CHECK(serial[i].seed == parallel[i].seed);
    CHECK(serial[i].result->fingerprint == parallel[i].result->fingerprint);
    CHECK(serial[i].result->metrics == parallel[i].result->metrics);
  }
  std::ostringstream a, b;
  write_results_csv(a, result_rows(serial, cfg.radio.system_bandwidth_hz));
  write_results_csv(b, result_rows(parallel, cfg.radio.system_bandwidth_hz));
  CHECK(a.str() == b.str());

  std::ostringstream t, it, ue;
  write_transfers_csv(t, serial, cfg.radio.system_bandwidth_hz);
  write_iterations_csv(it, serial, cfg.radio.system_bandwidth_hz);
  write_ue_metrics_csv(ue, serial, cfg.radio.system_bandwidth_hz);
  CHECK(t.str().rfind("policy,n_fl,model_bytes,seed,iteration,ue,download_s,upload_s\n", 0) == 0);
  CHECK(it.str().rfind("policy,n_fl,model_bytes,seed,iteration,iteration_time_s\n", 0) == 0);
  CHECK(ue.str().rfind("policy,n_fl,model_bytes,seed,ue,class,ul_availability,dl_availability,collided,utilized\n", 0) == 0);
}

TEST_CASE("a failing cell does not stop the matrix")
{
  auto cfg = short_config();
  std::vector<MatrixPoint> points{{mac::Policy::ds, 1, 12 * 1024, cfg.radio.system_bandwidth_hz},
                                  {mac::Policy::cb_dedicated_retx, 1, 12 * 1024, 80e6}}; // cap wider than the carrier
  const auto runs = run_points(cfg, points, {1}, 1);
  REQUIRE(runs.size() == 2);
  CHECK(runs[0].result);
  CHECK_FALSE(runs[1].result);
  CHECK_FALSE(runs[1].error.empty());
  const auto rows = result_rows(runs, cfg.radio.system_bandwidth_hz);
  CHECK(rows.back().metric == "failed");
}
