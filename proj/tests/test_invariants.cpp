#include "cbsim/simulation.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>

using namespace cbsim;
using mac::Policy;

namespace {

// Checks the per-slot scheduler properties as the run goes.
struct Auditor : mac::MacObserver {
  int         violations  = 0;
  std::size_t grids       = 0;
  std::size_t scarce      = 0;
  std::size_t cb_checked  = 0;
  std::string first;

  void fail(const std::string& what)
  {
    if (violations++ == 0) {
      first = what;
    }
  }

  void on_schedule(const mac::SlotAudit& a) override
  {
    ++grids;
    if (a.granted_rbs > a.num_rbs) {
      fail("more RBs granted than exist");
    }
    int sum = 0;
    for (std::size_t i = 0; i < a.grants.size(); ++i) {
      const auto& g = a.grants[i];
      sum += g.rb_count;
      if (!radio::grant_is_well_formed(g, a.num_rbs) || g.slot_index != a.air_slot) {
        fail("malformed grant");
      }
      for (std::size_t j = i + 1; j < a.grants.size(); ++j) {
        const auto& h = a.grants[j];
        if (g.rb_start < h.rb_start + h.rb_count && h.rb_start < g.rb_start + g.rb_count) {
          fail("overlapping grants");
        }
      }
    }
    if (sum != a.granted_rbs) {
      fail("granted RB count does not match the grants");
    }
    // A class left with unmet demand must have had no room for it after being served.
    for (const auto& c : a.classes) {
      if (c.unmet) {
        ++scarce;
        if (!(c.min_unmet_rbs > c.free_after)) {
          fail("priority ladder: unmet demand would have fit");
        }
      }
    }
    if (a.cb_rbs > a.classes.back().free_after) {
      fail("contention-based grant larger than the leftover");
    }
  }

  void on_cb_occasion(SlotIndex s, std::span<const UeId> tx, const mac::Cell& cell) override
  {
    for (UeId id : tx) {
      ++cb_checked;
      if (cell.backoff_remaining(id, s) != 0 || cell.ue(id).ul_queue.empty() || cell.ue(id).ul_harq_pending != 0) {
        fail("UE transmitted on a CB grant while it had to stay silent");
      }
    }
  }
};

ExperimentConfig config(Policy p, int n_fl, std::uint64_t bytes, double seconds)
{
  ExperimentConfig cfg;
  cfg.policy               = p;
  cfg.deployment.num_fl    = static_cast<unsigned>(n_fl);
  cfg.fl.model_bytes       = bytes;
  cfg.radio.sim_duration_s = seconds;
  cfg.warmup_s             = std::min(1.0, seconds / 2);
  return cfg;
}

} // namespace

TEST_CASE("scheduler invariants over full runs")
{
  struct Case {
    Policy        p;
    int           n_fl;
    std::uint64_t bytes;
  };
  const std::vector<Case> cases{{Policy::ds, 10, 2 * 1024 * 1024},
                                {Policy::ibi, 10, 2 * 1024 * 1024},
                                {Policy::cb_dedicated_retx, 10, 2 * 1024 * 1024},
                                {Policy::cb_contention_retx, 10, 2 * 1024 * 1024},
                                {Policy::cb_dedicated_retx, 30, 12 * 1024},
                                {Policy::cb_contention_retx, 30, 16 * 1024}};
  for (const auto& c : cases) {
    CAPTURE(mac::to_string(c.p));
    CAPTURE(c.n_fl);
    Auditor    audit;
    RunOptions opt;
    opt.observer        = &audit;
    opt.record_trace    = true;
    opt.record_activity = true;
    const auto r        = run_single(config(c.p, c.n_fl, c.bytes, 25.0), 11, opt);

    CHECK(audit.violations == 0);
    CHECK(audit.first == "");
    CHECK(audit.grids == 2 * static_cast<std::size_t>(r.slots));

    // Collision accounting: every collided transmission is counted once, and T_n >= C_n.
    std::uint64_t sum_c = 0, sum_t = 0, trace_c = 0, trace_t = 0;
    for (const auto& u : r.ues) {
      CHECK(u.utilized >= u.collided);
      sum_c += u.collided;
      sum_t += u.utilized;
    }
    for (const auto& t : r.trace) {
      if (t.kind == radio::GrantKind::contention_based) {
        trace_t += static_cast<std::uint64_t>(t.transmitters);
        if (t.outcome == mac::TxOutcome::collision) {
          CHECK(t.transmitters >= 2);
          trace_c += static_cast<std::uint64_t>(t.transmitters);
        }
      }
    }
    CHECK(sum_c == trace_c);
    CHECK(sum_t == trace_t);
    if (mac::is_contention_based(c.p)) {
      CHECK(audit.cb_checked == sum_t);
    } else {
      CHECK(sum_t == 0);
    }

    // On-off traffic: an FL UE never sends upload data while acknowledging a download.
    std::map<std::pair<UeId, std::uint32_t>, std::pair<SlotIndex, SlotIndex>> span;
    std::map<std::pair<UeId, std::uint32_t>, SduKind>                         kind;
    for (const auto& a : r.activity) {
      const auto key = std::make_pair(a.ue, a.flow);
      auto [it, fresh] = span.try_emplace(key, a.slot, a.slot);
      it->second.second = std::max(it->second.second, a.slot);
      if (fresh) {
        kind[key] = a.kind;
      } else {
        CHECK(kind[key] == a.kind);
      }
    }
    for (auto i = span.begin(); i != span.end(); ++i) {
      for (auto j = std::next(i); j != span.end() && j->first.first == i->first.first; ++j) {
        const bool disjoint = i->second.second < j->second.first || j->second.second < i->second.first;
        CHECK(disjoint);
      }
    }
    CHECK(!r.activity.empty());
  }
}

TEST_CASE("runs are reproducible")
{
  const auto cfg = config(Policy::cb_contention_retx, 5, 16 * 1024, 5.0);
  RunOptions opt;
  opt.record_trace = true;
  const auto a     = run_single(cfg, 3, opt);
  const auto b     = run_single(cfg, 3, opt);
  CHECK(a.fingerprint == b.fingerprint);
  CHECK(a.metrics == b.metrics);
  REQUIRE(a.trace.size() == b.trace.size());
  bool same = true;
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    const auto& x = a.trace[i];
    const auto& y = b.trace[i];
    same = same && x.slot == y.slot && x.kind == y.kind && x.rb_count == y.rb_count && x.mcs_index == y.mcs_index &&
           x.target.id == y.target.id && x.outcome == y.outcome && x.transmitters == y.transmitters;
  }
  CHECK(same);
  const auto c = run_single(cfg, 4, opt);
  CHECK(c.fingerprint != a.fingerprint);
  CHECK(c.metrics != a.metrics);
}

TEST_CASE("horizon in slots")
{
  auto cfg     = config(Policy::ds, 1, 12 * 1024, 1.0);
  cfg.warmup_s = 0.0;
  const auto r = run_single(cfg, 1);
  CHECK(r.slots == 2000);
  CHECK(r.wall_s < 1.0);

  auto full = config(Policy::ds, 1, 12 * 1024, 150.0);
  CHECK(run_single(full, 1).slots == 300000);
}

TEST_CASE("invalid configurations are rejected before running")
{
  auto cfg       = config(Policy::ds, 1, 12 * 1024, 1.0);
  cfg.survival_s = -1.0;
  CHECK_THROWS_AS(run_single(cfg, 1), ConfigError);
}
