#include "cbsim/simulation.hpp"

#include "cbsim/rng.hpp"
#include "cbsim/traffic.hpp"

#include <chrono>
#include <cmath>
#include <random>

namespace cbsim {

namespace {

class CellSink final : public traffic::SduSink {
public:
  CellSink(mac::Cell& cell, std::vector<UlActivity>* activity, const std::vector<bool>& is_fl)
      : cell_(cell), activity_(activity), is_fl_(is_fl)
  {
  }

  void send(UeId ue, bool uplink, SduInfo sdu) override
  {
    sdu.sdu_id = next_id_++;
    if (uplink) {
      if (activity_ && is_fl_[ue]) {
        activity_->push_back({sdu.created_slot, ue, sdu.kind, sdu.flow});
      }
      cell_.enqueue_ul(ue, sdu);
    } else {
      cell_.enqueue_dl(ue, sdu);
    }
  }

private:
  mac::Cell&               cell_;
  std::vector<UlActivity>* activity_;
  const std::vector<bool>& is_fl_;
  std::uint64_t            next_id_ = 1;
};

class TraceTap final : public mac::MacObserver {
public:
  TraceTap(std::vector<mac::TraceRecord>* trace, mac::MacObserver* next) : trace_(trace), next_(next) {}

  void on_schedule(const mac::SlotAudit& a) override
  {
    if (next_) {
      next_->on_schedule(a);
    }
  }
  void on_ul_transmission(const mac::TraceRecord& r) override
  {
    if (trace_) {
      trace_->push_back(r);
    }
    if (next_) {
      next_->on_ul_transmission(r);
    }
  }
  void on_cb_occasion(SlotIndex s, std::span<const UeId> tx, const mac::Cell& c) override
  {
    if (next_) {
      next_->on_cb_occasion(s, tx, c);
    }
  }

private:
  std::vector<mac::TraceRecord>* trace_;
  mac::MacObserver*              next_;
};

} // namespace

channel::FactoryLayout layout_for(const ExperimentConfig& cfg, std::uint64_t seed)
{
  return channel::deploy(seed, cfg.deployment);
}

RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& options)
{
  cfg.validate();
  const auto wall_start = std::chrono::steady_clock::now();

  const radio::GridDims grid   = radio::derive_grid(cfg.radio);
  const double          slot_s = grid.slot_duration_s;
  const auto            layout = layout_for(cfg, seed);
  const auto links = channel::compute_links(layout, cfg.link, cfg.radio.carrier_freq_hz, cfg.radio.system_bandwidth_hz, seed);

  const unsigned n_ur = cfg.deployment.num_urllc;
  const unsigned n_fl = cfg.deployment.num_fl;
  const unsigned n    = n_ur + n_fl;

  mac::MacConfig mc;
  mc.num_rbs          = grid.num_rbs;
  mc.slot_duration_s  = slot_s;
  mc.pilot_overhead   = cfg.radio.pilot_overhead;
  mc.sr_proc_slots    = cfg.sr_proc_slots;
  mc.grant_proc_slots = cfg.grant_proc_slots;
  mc.cqi_period_slots = cfg.cqi_period_slots;
  mc.cqi_control_rbs  = cfg.cqi_control_rbs;
  mc.link_margin_db   = cfg.link.link_margin_db;
  mc.fast_sigma_db    = cfg.link.fast_sigma_db;

  const int cb_rbs = std::clamp(radio::rbs_in_bandwidth(cfg.radio.cb_bandwidth_cap_hz, cfg.radio.subcarrier_spacing_hz), 1, grid.num_rbs);
  auto      pc     = mac::PolicyConfig::for_policy(cfg.policy, cb_rbs);
  pc.t_bo_slots    = cfg.t_bo_slots;

  std::vector<mac::UeClass> classes(n, mac::UeClass::urllc);
  std::vector<bool>         is_fl(n, false);
  std::vector<UeId>         fl_ids;
  for (unsigned i = n_ur; i < n; ++i) {
    classes[i] = mac::UeClass::fl;
    is_fl[i]   = true;
    fl_ids.push_back(i);
  }

  RunResult result;
  result.seed        = seed;
  result.fingerprint = cfg.fingerprint(seed);

  mac::Cell cell(mc, pc, classes, links, seed);
  TraceTap  tap(options.record_trace ? &result.trace : nullptr, options.observer);
  if (options.record_trace || options.observer) {
    cell.set_observer(&tap);
  }
  CellSink sink(cell, options.record_activity ? &result.activity : nullptr, is_fl);

  // URLLC flows with a random phase so that the periodic arrivals do not all land in one slot.
  const SlotIndex                         period = std::max<SlotIndex>(1, traffic::to_slots(cfg.urllc.period_s, slot_s));
  auto                                    trng   = make_engine(seed, Stream::traffic);
  std::uniform_int_distribution<SlotIndex> phase(0, period - 1);
  std::vector<traffic::UrllcFlow>         flows;
  for (unsigned i = 0; i < n_ur; ++i) {
    flows.emplace_back(i, period, phase(trng), cfg.urllc.ul_pdu_bytes, cfg.urllc.dl_pdu_bytes);
  }

  traffic::FlSession session(cfg.fl, fl_ids, slot_s);
  session.start(0);

  std::vector<metrics::AvailabilityTracker> ul_avail;
  std::vector<metrics::AvailabilityTracker> dl_avail;
  for (unsigned i = 0; i < n_ur; ++i) {
    ul_avail.emplace_back(cfg.survival_s, cfg.warmup_s);
    dl_avail.emplace_back(cfg.survival_s, cfg.warmup_s);
  }
  std::vector<metrics::CollisionCounter> collisions(n_fl);
  std::uint64_t                          ul_fail = 0, dl_fail = 0, ul_ok = 0, dl_ok = 0;

  const SlotIndex total_slots = static_cast<SlotIndex>(std::llround(cfg.radio.sim_duration_s / slot_s));
  std::vector<mac::Delivery> pending;

  auto handle_deliveries = [&](SlotIndex now) {
    const double t = static_cast<double>(now) * slot_s;
    for (const auto& d : pending) {
      const bool uplink = d.dir == mac::Direction::ul;
      if (d.sdu.kind == SduKind::urllc_pdu) {
        const double bound = uplink ? cfg.urllc.ul_delay_bound_s : cfg.urllc.dl_delay_bound_s;
        auto&        trk   = uplink ? ul_avail[d.ue] : dl_avail[d.ue];
        if (traffic::urllc_on_time(static_cast<double>(d.sdu.created_slot) * slot_s, t, bound)) {
          trk.on_success(t);
          (uplink ? ul_ok : dl_ok)++;
        } else {
          trk.on_failure(t);
          (uplink ? ul_fail : dl_fail)++;
        }
      } else if (now < total_slots) {
        session.on_delivery(now, d.ue, uplink, d.sdu, sink);
      }
    }
    pending.clear();
  };

  auto drain_transfers = [&] {
    for (const auto& e : session.take_events()) {
      const double a = static_cast<double>(e.start) * slot_s;
      const double b = static_cast<double>(e.end) * slot_s;
      switch (e.kind) {
      case traffic::TransferKind::download: result.ledger.record_download(e.iteration, e.ue, a, b); break;
      case traffic::TransferKind::upload: result.ledger.record_upload(e.iteration, e.ue, a, b); break;
      case traffic::TransferKind::iteration: result.ledger.record_iteration(e.iteration, a, b); break;
      }
    }
  };

  for (SlotIndex s = 0; s < total_slots; ++s) {
    handle_deliveries(s);
    const double t = static_cast<double>(s) * slot_s;

    // PDUs that can no longer meet their bound even if sent in this slot are discarded at the sender.
    for (unsigned i = 0; i < n_ur; ++i) {
      auto late = [&](double bound) {
        return [&, bound](const SduInfo& sdu) {
          return sdu.kind == SduKind::urllc_pdu && static_cast<double>(s + 1 - sdu.created_slot) * slot_s > bound + 1e-12;
        };
      };
      for (const auto& d : cell.drop_ul_if(i, late(cfg.urllc.ul_delay_bound_s))) {
        (void)d;
        ul_avail[i].on_failure(t);
        ++ul_fail;
      }
      for (const auto& d : cell.drop_dl_if(i, late(cfg.urllc.dl_delay_bound_s))) {
        (void)d;
        dl_avail[i].on_failure(t);
        ++dl_fail;
      }
    }

    for (auto& f : flows) {
      f.tick(s, sink);
    }
    session.on_tick(s, sink);
    drain_transfers();

    const auto& rep = cell.run_slot(s);
    for (const auto& r : rep.cb_results) {
      collisions[r.ue - n_ur].record(r.collided);
    }
    pending = rep.deliveries;
  }
  handle_deliveries(total_slots);
  drain_transfers();
  result.ledger.set_incomplete(session.incomplete_transfers());

  // Per-UE and per-run metrics.
  const double end_s = static_cast<double>(total_slots) * slot_s;
  double       ul_sum = 0.0, dl_sum = 0.0;
  for (unsigned i = 0; i < n; ++i) {
    UeReport r{i, classes[i]};
    if (i < n_ur) {
      r.ul_availability = ul_avail[i].availability(end_s);
      r.dl_availability = dl_avail[i].availability(end_s);
      ul_sum += r.ul_availability;
      dl_sum += r.dl_availability;
    } else {
      r.collided = collisions[i - n_ur].collided();
      r.utilized = collisions[i - n_ur].utilized();
    }
    result.ues.push_back(r);
  }

  auto& m = result.metrics;
  if (n_ur > 0) {
    m["ul_availability"] = ul_sum / n_ur;
    m["dl_availability"] = dl_sum / n_ur;
    const double ul_total = static_cast<double>(ul_ok + ul_fail);
    const double dl_total = static_cast<double>(dl_ok + dl_fail);
    m["urllc_ul_loss"]    = ul_total > 0 ? static_cast<double>(ul_fail) / ul_total : 0.0;
    m["urllc_dl_loss"]    = dl_total > 0 ? static_cast<double>(dl_fail) / dl_total : 0.0;
  }
  if (auto p = metrics::mean_collision_probability(collisions)) {
    m["collision_probability"] = *p;
  }
  if (auto v = result.ledger.mean_download_s()) {
    m["download_time_s"] = *v;
  }
  if (auto v = result.ledger.mean_upload_s()) {
    m["upload_time_s"] = *v;
  }
  if (auto v = result.ledger.mean_iteration_s()) {
    m["iteration_time_s"] = *v;
  }
  m["iterations"]           = static_cast<double>(result.ledger.iterations().size());
  m["incomplete_transfers"] = static_cast<double>(result.ledger.incomplete());
  m["transport_timeouts"]   = static_cast<double>(session.total_timeouts());
  if (mac::is_contention_based(cfg.policy)) {
    m["cb_occasions"] = static_cast<double>(cell.cb_occasions());
    m["cb_mean_rbs"]  = cell.cb_occasions() ? static_cast<double>(cell.cb_rbs_total()) / static_cast<double>(cell.cb_occasions()) : 0.0;
  }

  result.slots  = total_slots;
  result.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return result;
}

} // namespace cbsim
