#include "cbsim/mac.hpp"

#include "cbsim/rng.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace cbsim::mac {

using radio::GrantKind;
using radio::GrantTarget;

namespace {

void note_unmet(ClassAudit& ca, int rbs)
{
  ca.min_unmet_rbs = ca.unmet ? std::min(ca.min_unmet_rbs, rbs) : rbs;
  ca.unmet         = true;
}

} // namespace

const char* to_string(Policy p)
{
  switch (p) {
  case Policy::ds: return "ds";
  case Policy::ibi: return "ibi";
  case Policy::cb_dedicated_retx: return "cb-dedicated";
  case Policy::cb_contention_retx: return "cb-contention";
  }
  return "?";
}

std::optional<Policy> parse_policy(std::string_view name)
{
  for (Policy p : {Policy::ds, Policy::ibi, Policy::cb_dedicated_retx, Policy::cb_contention_retx}) {
    if (name == to_string(p)) {
      return p;
    }
  }
  return std::nullopt;
}

bool is_contention_based(Policy p)
{
  return p == Policy::cb_dedicated_retx || p == Policy::cb_contention_retx;
}

const char* to_string(TxOutcome o)
{
  switch (o) {
  case TxOutcome::ack: return "ack";
  case TxOutcome::nack: return "nack";
  case TxOutcome::collision: return "collision";
  case TxOutcome::unused: return "unused";
  }
  return "?";
}

PolicyConfig PolicyConfig::for_policy(Policy p, int cb_cap_rbs)
{
  PolicyConfig c;
  c.policy     = p;
  c.n_rx_fl    = p == Policy::cb_contention_retx ? 0 : 10;
  c.cb_cap_rbs = cb_cap_rbs;
  return c;
}

void PolicyConfig::validate() const
{
  if (n_rx_fl < 0 || n_rx_urllc_ul < 0 || n_rx_urllc_dl < 0) {
    throw std::invalid_argument("HARQ retransmission limits must be non-negative");
  }
  if (sr_period_slots < 1) {
    throw std::invalid_argument("SR period must be at least one slot");
  }
  if (t_bo_slots < 0) {
    throw std::invalid_argument("backoff window must be non-negative");
  }
  if (is_contention_based(policy) && cb_cap_rbs < 1) {
    throw std::invalid_argument("contention-based grants need at least one RB");
  }
  if (policy == Policy::cb_contention_retx && n_rx_fl != 0) {
    throw std::invalid_argument("contention retransmissions replace HARQ: n_rx_fl must be 0");
  }
  if (is_contention_based(policy) && !cb_grant_every_slot) {
    throw std::invalid_argument("only per-slot contention-based grants are modelled");
  }
}

Cell::Cell(MacConfig cfg, PolicyConfig policy, std::vector<UeClass> classes, std::vector<channel::LinkState> links, std::uint64_t seed)
    : cfg_(cfg), policy_(policy), seed_(seed)
{
  policy_.validate();
  if (classes.size() != links.size()) {
    throw std::invalid_argument("one link state per UE is required");
  }
  if (cfg_.num_rbs < 1 || cfg_.grant_proc_slots < 1 || cfg_.sr_proc_slots < 0 || cfg_.decode_slots < 1 ||
      cfg_.dl_harq_feedback_slots < 1) {
    throw std::invalid_argument("invalid MAC timing or grid size");
  }
  if (cfg_.cqi_control_rbs < 0 || cfg_.cqi_control_rbs >= cfg_.num_rbs) {
    throw std::invalid_argument("control reservation must leave room for data");
  }
  ues_.resize(classes.size());
  for (std::size_t i = 0; i < classes.size(); ++i) {
    auto& u = ues_[i];
    u.ue_id = static_cast<UeId>(i);
    u.cls   = classes[i];
    u.link  = links[i];
    if (u.cls == UeClass::fl) {
      fl_ues_.push_back(u.ue_id);
    }
    backoff_rng_.push_back(make_engine(seed, Stream::backoff, i));
  }
  ring_ = cfg_.grant_proc_slots + 2;
  ul_plan_.resize(static_cast<std::size_t>(ring_));
  dl_plan_.resize(static_cast<std::size_t>(ring_));
  ul_served_bps_.assign(ues_.size(), 0.0);
  dl_served_bps_.assign(ues_.size(), 0.0);
  ul_granted_now_.assign(ues_.size(), false);
}

void Cell::enqueue_ul(UeId ue, const SduInfo& sdu)
{
  ues_.at(ue).ul_queue.push(sdu);
}

void Cell::enqueue_dl(UeId ue, const SduInfo& sdu)
{
  ues_.at(ue).dl_queue.push(sdu);
}

bool Cell::uses_sr(const UeMacState& u) const
{
  return u.cls == UeClass::urllc || policy_.policy == Policy::ds;
}

bool Cell::uses_ibi(const UeMacState& u) const
{
  return u.cls == UeClass::fl && policy_.policy == Policy::ibi;
}

bool Cell::uses_cb(const UeMacState& u) const
{
  return u.cls == UeClass::fl && is_contention_based(policy_.policy);
}

int Cell::max_harq_retx(UeClass cls, Direction dir) const
{
  if (cls == UeClass::fl) {
    return policy_.n_rx_fl;
  }
  return dir == Direction::ul ? policy_.n_rx_urllc_ul : policy_.n_rx_urllc_dl;
}

int Cell::backoff_remaining(UeId ue, SlotIndex s) const
{
  return static_cast<int>(std::max<SlotIndex>(0, ues_.at(ue).backoff_until - s));
}

bool Cell::cb_eligible(UeId ue, SlotIndex s) const
{
  const auto& u = ues_.at(ue);
  return uses_cb(u) && !u.ul_queue.empty() && s >= u.backoff_until && u.ul_harq_pending == 0;
}

int Cell::cb_mcs() const
{
  if (fl_ues_.empty()) {
    return 0;
  }
  int m = radio::McsTable::standard().max_index();
  for (UeId id : fl_ues_) {
    const auto& u = ues_[id];
    if (!u.ul_mcs) {
      return 0;
    }
    m = std::min(m, *u.ul_mcs);
  }
  return m;
}

double Cell::achievable_bps(int mcs) const
{
  return radio::tbs_bytes(mcs, cfg_.num_rbs, radio::symbols_per_slot, cfg_.pilot_overhead) * 8.0 / cfg_.slot_duration_s;
}

int Cell::retx_rbs(const TransportBlock& tb, int own_mcs, int& mcs_out) const
{
  const int max_rbs = cfg_.num_rbs - (tb.dir == Direction::ul ? cfg_.cqi_control_rbs : 0);
  if (auto r = radio::rbs_for_bytes(own_mcs, std::max(1, tb.size_bytes), max_rbs, radio::symbols_per_slot, cfg_.pilot_overhead)) {
    mcs_out = own_mcs;
    return *r;
  }
  mcs_out = tb.mcs_index;
  return tb.rb_count;
}

const SlotReport& Cell::run_slot(SlotIndex s)
{
  report_.slot = s;
  report_.deliveries.clear();
  report_.cb_results.clear();

  run_cqi(s);
  run_ul_air(s);
  run_sr_occasions(s);
  run_dl_air(s);
  schedule_ul(s);
  schedule_dl(s);
  return report_;
}

void Cell::run_cqi(SlotIndex s)
{
  if (cfg_.cqi_period_slots <= 0 || s % cfg_.cqi_period_slots != 0) {
    return;
  }
  for (auto& u : ues_) {
    if (auto r = channel::cqi_report(u.link, s, cfg_.cqi_period_slots, cfg_.link_margin_db)) {
      u.ul_mcs = r->ul_mcs;
      u.dl_mcs = r->dl_mcs;
    }
  }
}

TransportBlock Cell::build_ul_newtx(UeMacState& u, const radio::Grant& g, SlotIndex s)
{
  TransportBlock tb;
  tb.tb_id        = next_tb_id_++;
  tb.ue_id        = u.ue_id;
  tb.dir          = Direction::ul;
  tb.mcs_index    = g.mcs_index;
  tb.rb_count     = g.rb_count;
  tb.created_slot = s;
  tb.origin       = g.kind;
  const int  cap  = radio::tbs_bytes(g.mcs_index, g.rb_count, g.symbol_count, cfg_.pilot_overhead);
  const bool bsr  = uses_sr(u);
  const int  hdr  = bsr || g.kind == GrantKind::contention_based ? cfg_.bsr_ce_bytes : 0;
  const auto data = u.ul_queue.pull(static_cast<std::uint32_t>(std::max(0, cap - hdr)), tb.payload);
  if (bsr) {
    tb.bsr_bytes = static_cast<std::uint32_t>(std::min<std::uint64_t>(u.ul_queue.bytes(), std::numeric_limits<std::uint32_t>::max()));
  }
  tb.size_bytes = static_cast<int>(data) + (hdr > 0 && cap >= hdr ? hdr : 0);
  return tb;
}

void Cell::deliver(UeMacState& u, Direction dir, const TransportBlock& tb)
{
  auto& rx = dir == Direction::ul ? u.ul_rx : u.dl_rx;
  for (const auto& p : tb.payload) {
    if (auto sdu = rx.accept(p)) {
      report_.deliveries.push_back({u.ue_id, dir, *sdu});
    }
  }
}

void Cell::resolve_ul(UeMacState& u, TransportBlock tb, bool success, SlotIndex s)
{
  const bool was_retx = tb.harq_attempt > 0;
  if (success) {
    if (was_retx) {
      --u.ul_harq_pending;
    }
    deliver(u, Direction::ul, tb);
    if (tb.bsr_bytes) {
      if (tb.created_slot >= u.last_acked_bsr_slot) {
        u.last_acked_bsr      = *tb.bsr_bytes;
        u.last_acked_bsr_slot = tb.created_slot;
        u.bsr_lost            = false;
      }
      u.pending_bsr.push_back({*tb.bsr_bytes, tb.created_slot, s + cfg_.decode_slots});
    }
    return;
  }
  if (tb.harq_attempt < max_harq_retx(u.cls, Direction::ul)) {
    if (!was_retx) {
      ++u.ul_harq_pending;
    }
    ++tb.harq_attempt;
    u.ul_retx.push_back({std::move(tb), s + cfg_.decode_slots});
    return;
  }
  if (was_retx) {
    --u.ul_harq_pending;
  }
  u.ul_queue.requeue_front(tb.payload);
  if (tb.bsr_bytes) {
    u.bsr_lost = true;
  }
  if (uses_cb(u) && policy_.policy == Policy::cb_contention_retx) {
    std::uniform_int_distribution<int> draw(0, policy_.t_bo_slots);
    u.backoff_until = s + 1 + draw(backoff_rng_[u.ue_id]);
  }
}

void Cell::resolve_dl(UeMacState& u, TransportBlock tb, bool success, SlotIndex s)
{
  if (success) {
    deliver(u, Direction::dl, tb);
    return;
  }
  if (tb.harq_attempt < max_harq_retx(u.cls, Direction::dl)) {
    ++tb.harq_attempt;
    u.dl_retx.push_back({std::move(tb), s + cfg_.dl_harq_feedback_slots});
    return;
  }
  u.dl_queue.requeue_front(tb.payload);
}

void Cell::run_ul_air(SlotIndex s)
{
  auto& plan = ul_plan(s);

  // The contention set is fixed by the state at the start of the slot.
  const radio::Grant* cb = nullptr;
  for (const auto& p : plan) {
    if (p.grant.kind == GrantKind::contention_based) {
      cb = &p.grant;
    }
  }
  cb_tx_.clear();
  if (cb) {
    for (UeId id : fl_ues_) {
      if (!cb_eligible(id, s)) {
        continue;
      }
      const bool has_dedicated = std::any_of(plan.begin(), plan.end(), [&](const PlannedUl& p) {
        return !p.grant.target.is_set() && p.grant.kind != GrantKind::control && p.grant.target.id == id;
      });
      if (!has_dedicated) {
        cb_tx_.push_back(id);
      }
    }
  }

  for (auto& p : plan) {
    const auto& g = p.grant;
    if (g.kind == GrantKind::control || g.kind == GrantKind::contention_based) {
      continue;
    }
    auto&          u  = ues_[g.target.id];
    TransportBlock tb = p.retx ? std::move(*p.retx) : build_ul_newtx(u, g, s);
    if (p.retx) {
      tb.mcs_index = g.mcs_index;
      tb.rb_count  = g.rb_count;
    }
    if (tb.size_bytes == 0) {
      if (observer_) {
        observer_->on_ul_transmission({s, g.kind, g.rb_count, g.mcs_index, g.target, TxOutcome::unused, 0});
      }
      continue;
    }
    const double fluct = channel::fast_fluctuation_db(seed_, u.ue_id, s, 0, cfg_.fast_sigma_db);
    const bool   ok    = channel::tb_success(tb.mcs_index, u.link.ul_sinr_db, fluct, false);
    if (observer_) {
      observer_->on_ul_transmission({s, g.kind, g.rb_count, g.mcs_index, g.target, ok ? TxOutcome::ack : TxOutcome::nack, 1});
    }
    resolve_ul(u, std::move(tb), ok, s);
  }

  if (cb) {
    const radio::Grant g = *cb;
    ++cb_occasions_;
    cb_rbs_total_ += static_cast<std::uint64_t>(g.rb_count);
    if (observer_) {
      observer_->on_cb_occasion(s, cb_tx_, *this);
    }
    const bool collided = cb_tx_.size() >= 2;
    bool       any_ok   = false;
    for (UeId id : cb_tx_) {
      auto& u        = ues_[id];
      auto  tb       = build_ul_newtx(u, g, s);
      tb.cb_grant_id = g.grant_id;
      const double fluct = channel::fast_fluctuation_db(seed_, id, s, 0, cfg_.fast_sigma_db);
      const bool   ok    = channel::tb_success(tb.mcs_index, u.link.ul_sinr_db, fluct, collided);
      any_ok             = any_ok || ok;
      report_.cb_results.push_back({id, collided, ok});
      resolve_ul(u, std::move(tb), ok, s);
    }
    if (observer_) {
      TxOutcome o = TxOutcome::unused;
      if (collided) {
        o = TxOutcome::collision;
      } else if (!cb_tx_.empty()) {
        o = any_ok ? TxOutcome::ack : TxOutcome::nack;
      }
      observer_->on_ul_transmission({s, g.kind, g.rb_count, g.mcs_index, g.target, o, static_cast<int>(cb_tx_.size())});
    }
  }
  plan.clear();
}

void Cell::run_sr_occasions(SlotIndex s)
{
  if (s % policy_.sr_period_slots != 0) {
    return;
  }
  for (auto& u : ues_) {
    if (!uses_sr(u) || u.sr_outstanding || u.ul_queue.empty() || u.ul_harq_pending > 0) {
      continue;
    }
    const bool pipeline =
        std::any_of(u.ul_granted.begin(), u.ul_granted.end(), [s](const GrantedCapacity& g) { return g.air_slot > s; });
    if (pipeline) {
      continue;
    }
    if (u.last_acked_bsr > 0 && !u.bsr_lost) {
      continue;
    }
    u.sr_outstanding      = true;
    u.gnb_sr_visible_from = s + cfg_.sr_proc_slots;
  }
}

void Cell::run_dl_air(SlotIndex s)
{
  auto& plan = dl_plan(s);
  for (auto& p : plan) {
    auto&        u     = ues_[p.grant.target.id];
    const double fluct = channel::fast_fluctuation_db(seed_, u.ue_id, s, 1, cfg_.fast_sigma_db);
    const bool   ok    = channel::tb_success(p.tb.mcs_index, u.link.dl_sinr_db, fluct, false);
    resolve_dl(u, std::move(p.tb), ok, s);
  }
  plan.clear();
}

void Cell::apply_visible_bsr(UeMacState& u, SlotIndex s)
{
  while (!u.pending_bsr.empty() && u.pending_bsr.front().visible_from <= s) {
    const auto b = u.pending_bsr.front();
    u.pending_bsr.pop_front();
    if (b.built_slot > u.gnb_bsr_slot) {
      u.gnb_known_bsr_bytes = b.value;
      u.gnb_bsr_slot        = b.built_slot;
      while (!u.ul_granted.empty() && u.ul_granted.front().air_slot <= b.built_slot) {
        u.ul_granted.pop_front();
      }
    }
  }
}

std::uint32_t Cell::ul_gnb_demand(const UeMacState& u, SlotIndex s) const
{
  std::uint64_t owed    = 0;
  std::uint64_t granted = 0;
  if (uses_ibi(u)) {
    owed = u.ul_queue.bytes();
    for (const auto& g : u.ul_granted) {
      if (g.air_slot > s) {
        granted += g.data_bytes;
      }
    }
  } else if (uses_sr(u)) {
    owed = u.gnb_known_bsr_bytes;
    for (const auto& g : u.ul_granted) {
      granted += g.data_bytes;
    }
  }
  if (granted >= owed) {
    return 0;
  }
  return static_cast<std::uint32_t>(std::min<std::uint64_t>(owed - granted, std::numeric_limits<std::uint32_t>::max()));
}

void Cell::schedule_ul(SlotIndex s)
{
  const SlotIndex    air = s + cfg_.grant_proc_slots;
  radio::ResourceGrid grid(air, cfg_.num_rbs);
  auto&              plan = ul_plan(air);
  SlotAudit          audit;
  audit.scheduled_at = s;
  audit.air_slot     = air;
  audit.dir          = Direction::ul;
  audit.num_rbs      = cfg_.num_rbs;

  if (cfg_.cqi_period_slots > 0 && cfg_.cqi_control_rbs > 0 && air % cfg_.cqi_period_slots == 0) {
    if (auto g = grid.allocate(cfg_.cqi_control_rbs, radio::symbols_per_slot, 0, GrantKind::control, GrantTarget::single(0),
                               next_grant_id_++)) {
      audit.control_rbs = g->rb_count;
      audit.grants.push_back(*g);
      plan.push_back({*g, std::nullopt});
    }
  }

  std::fill(ul_granted_now_.begin(), ul_granted_now_.end(), false);
  std::fill(ul_served_bps_.begin(), ul_served_bps_.end(), 0.0);
  for (auto& u : ues_) {
    apply_visible_bsr(u, s);
    if (uses_ibi(u)) {
      while (!u.ul_granted.empty() && u.ul_granted.front().air_slot <= s) {
        u.ul_granted.pop_front();
      }
    }
  }

  for (int cls = 0; cls < num_priority_classes; ++cls) {
    const auto pc = static_cast<PriorityClass>(cls);
    demands_.clear();
    for (auto& u : ues_) {
      const bool want_urllc = pc == PriorityClass::urllc_retx || pc == PriorityClass::urllc_first_tx;
      if ((u.cls == UeClass::urllc) != want_urllc || ul_granted_now_[u.ue_id]) {
        continue;
      }
      const int    mcs = ul_mcs_of(u);
      const double pf  = achievable_bps(mcs) / std::max(u.pf_avg_ul_bps, cfg_.pf_eps_bps);
      if (pc == PriorityClass::urllc_retx || pc == PriorityClass::fl_dedicated_retx) {
        if (!u.ul_retx.empty() && u.ul_retx.front().visible_from <= s) {
          demands_.push_back({u.ue_id, pf, true, 0, mcs, false});
        }
        continue;
      }
      if (uses_cb(u)) {
        continue;
      }
      const bool    sr    = uses_sr(u) && u.gnb_sr_visible_from && *u.gnb_sr_visible_from <= s;
      std::uint32_t bytes = ul_gnb_demand(u, s);
      if (sr) {
        bytes = std::max<std::uint32_t>(bytes, static_cast<std::uint32_t>(cfg_.bsr_ce_bytes + cfg_.ds_first_grant_data_bytes));
      } else if (bytes > 0 && uses_sr(u)) {
        bytes += static_cast<std::uint32_t>(cfg_.bsr_ce_bytes);
      }
      if (bytes > 0) {
        demands_.push_back({u.ue_id, pf, false, bytes, mcs, sr});
      }
    }
    auto& ca   = audit.classes[static_cast<std::size_t>(cls)];
    ca.demands = static_cast<int>(demands_.size());
    std::stable_sort(demands_.begin(), demands_.end(), [](const Demand& a, const Demand& b) { return a.pf_metric > b.pf_metric; });

    for (const auto& d : demands_) {
      auto&     u    = ues_[d.ue];
      const int free = grid.largest_free_run();
      if (d.retx) {
        auto&     tb  = u.ul_retx.front().tb;
        int       mcs = d.mcs;
        const int need = retx_rbs(tb, d.mcs, mcs);
        if (need > free) {
          note_unmet(ca, need);
          continue;
        }
        auto g = grid.allocate(need, radio::symbols_per_slot, mcs, GrantKind::dedicated_retx, GrantTarget::single(d.ue),
                               next_grant_id_++);
        g->referenced_failed_cb_resource = tb.cb_grant_id;
        plan.push_back({*g, std::move(tb)});
        u.ul_retx.pop_front();
        ca.granted_rbs += g->rb_count;
        audit.grants.push_back(*g);
        ul_granted_now_[d.ue] = true;
        ul_served_bps_[d.ue]  = radio::tbs_bytes(mcs, need, radio::symbols_per_slot, cfg_.pilot_overhead) * 8.0 / cfg_.slot_duration_s;
        continue;
      }
      const int need = radio::rbs_for_bytes(d.mcs, static_cast<int>(std::min<std::uint32_t>(d.bytes, 1u << 30)), cfg_.num_rbs,
                                            radio::symbols_per_slot, cfg_.pilot_overhead)
                           .value_or(cfg_.num_rbs);
      const int take = std::min(need, free);
      if (take < need) {
        note_unmet(ca, need - take);
      }
      if (take < 1) {
        continue;
      }
      auto g = grid.allocate(take, radio::symbols_per_slot, d.mcs, GrantKind::dedicated, GrantTarget::single(d.ue), next_grant_id_++);
      plan.push_back({*g, std::nullopt});
      const int cap  = radio::tbs_bytes(d.mcs, take, radio::symbols_per_slot, cfg_.pilot_overhead);
      const int data = std::max(0, cap - (uses_sr(u) ? cfg_.bsr_ce_bytes : 0));
      u.ul_granted.push_back({air, static_cast<std::uint32_t>(data)});
      if (d.first_grant) {
        u.gnb_sr_visible_from.reset();
        u.sr_outstanding = false;
      }
      ca.granted_rbs += take;
      audit.grants.push_back(*g);
      ul_granted_now_[d.ue] = true;
      ul_served_bps_[d.ue]  = cap * 8.0 / cfg_.slot_duration_s;
    }
    ca.free_after = grid.largest_free_run();
  }

  if (is_contention_based(policy_.policy) && !fl_ues_.empty()) {
    const int take = std::min(policy_.cb_cap_rbs, grid.largest_free_run());
    if (take >= 1) {
      auto g = grid.allocate(take, radio::symbols_per_slot, cb_mcs(), GrantKind::contention_based, GrantTarget::set(1),
                             next_grant_id_++);
      plan.push_back({*g, std::nullopt});
      audit.cb_rbs = take;
      audit.grants.push_back(*g);
    }
  }

  for (auto& u : ues_) {
    u.pf_avg_ul_bps = (1.0 - cfg_.pf_alpha) * u.pf_avg_ul_bps + cfg_.pf_alpha * ul_served_bps_[u.ue_id];
  }
  audit.granted_rbs = grid.granted_rbs();
  if (observer_) {
    observer_->on_schedule(audit);
  }
}

void Cell::schedule_dl(SlotIndex s)
{
  const SlotIndex    air = s + 1;
  radio::ResourceGrid grid(air, cfg_.num_rbs);
  auto&              plan = dl_plan(air);
  SlotAudit          audit;
  audit.scheduled_at = s;
  audit.air_slot     = air;
  audit.dir          = Direction::dl;
  audit.num_rbs      = cfg_.num_rbs;
  std::fill(dl_served_bps_.begin(), dl_served_bps_.end(), 0.0);
  std::vector<bool> granted(ues_.size(), false);

  for (int cls = 0; cls < num_priority_classes; ++cls) {
    const auto pc = static_cast<PriorityClass>(cls);
    demands_.clear();
    for (auto& u : ues_) {
      const bool want_urllc = pc == PriorityClass::urllc_retx || pc == PriorityClass::urllc_first_tx;
      if ((u.cls == UeClass::urllc) != want_urllc || granted[u.ue_id]) {
        continue;
      }
      const int    mcs = dl_mcs_of(u);
      const double pf  = achievable_bps(mcs) / std::max(u.pf_avg_dl_bps, cfg_.pf_eps_bps);
      if (pc == PriorityClass::urllc_retx || pc == PriorityClass::fl_dedicated_retx) {
        if (!u.dl_retx.empty() && u.dl_retx.front().visible_from <= s) {
          demands_.push_back({u.ue_id, pf, true, 0, mcs, false});
        }
      } else if (!u.dl_queue.empty()) {
        const auto bytes = static_cast<std::uint32_t>(std::min<std::uint64_t>(u.dl_queue.bytes(), 1u << 30));
        demands_.push_back({u.ue_id, pf, false, bytes, mcs, false});
      }
    }
    auto& ca   = audit.classes[static_cast<std::size_t>(cls)];
    ca.demands = static_cast<int>(demands_.size());
    std::stable_sort(demands_.begin(), demands_.end(), [](const Demand& a, const Demand& b) { return a.pf_metric > b.pf_metric; });

    for (const auto& d : demands_) {
      auto&     u    = ues_[d.ue];
      const int free = grid.largest_free_run();
      if (d.retx) {
        auto&     tb   = u.dl_retx.front().tb;
        int       mcs  = d.mcs;
        const int need = retx_rbs(tb, d.mcs, mcs);
        if (need > free) {
          note_unmet(ca, need);
          continue;
        }
        auto g = grid.allocate(need, radio::symbols_per_slot, mcs, GrantKind::dedicated_retx, GrantTarget::single(d.ue),
                               next_grant_id_++);
        tb.mcs_index = mcs;
        tb.rb_count  = need;
        plan.push_back({*g, std::move(tb)});
        u.dl_retx.pop_front();
        ca.granted_rbs += need;
        audit.grants.push_back(*g);
        granted[d.ue]        = true;
        dl_served_bps_[d.ue] = radio::tbs_bytes(mcs, need, radio::symbols_per_slot, cfg_.pilot_overhead) * 8.0 / cfg_.slot_duration_s;
        continue;
      }
      const int need = radio::rbs_for_bytes(d.mcs, static_cast<int>(d.bytes), cfg_.num_rbs, radio::symbols_per_slot, cfg_.pilot_overhead)
                           .value_or(cfg_.num_rbs);
      const int take = std::min(need, free);
      if (take < need) {
        note_unmet(ca, need - take);
      }
      if (take < 1) {
        continue;
      }
      auto g = grid.allocate(take, radio::symbols_per_slot, d.mcs, GrantKind::dedicated, GrantTarget::single(d.ue), next_grant_id_++);
      TransportBlock tb;
      tb.tb_id        = next_tb_id_++;
      tb.ue_id        = d.ue;
      tb.dir          = Direction::dl;
      tb.mcs_index    = d.mcs;
      tb.rb_count     = take;
      tb.created_slot = s;
      const int cap   = radio::tbs_bytes(d.mcs, take, radio::symbols_per_slot, cfg_.pilot_overhead);
      tb.size_bytes   = static_cast<int>(u.dl_queue.pull(static_cast<std::uint32_t>(cap), tb.payload));
      plan.push_back({*g, std::move(tb)});
      ca.granted_rbs += take;
      audit.grants.push_back(*g);
      granted[d.ue]        = true;
      dl_served_bps_[d.ue] = cap * 8.0 / cfg_.slot_duration_s;
    }
    ca.free_after = grid.largest_free_run();
  }

  for (auto& u : ues_) {
    u.pf_avg_dl_bps = (1.0 - cfg_.pf_alpha) * u.pf_avg_dl_bps + cfg_.pf_alpha * dl_served_bps_[u.ue_id];
  }
  audit.granted_rbs = grid.granted_rbs();
  if (observer_) {
    observer_->on_schedule(audit);
  }
}

} // namespace cbsim::mac
