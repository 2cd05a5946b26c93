#pragma once

#include "cbsim/channel.hpp"
#include "cbsim/radio.hpp"
#include "cbsim/rlc.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace cbsim::mac {

enum class Policy { ds, ibi, cb_dedicated_retx, cb_contention_retx };

/// "ds", "ibi", "cb-dedicated", "cb-contention"
const char*           to_string(Policy p);
std::optional<Policy> parse_policy(std::string_view name);
bool                  is_contention_based(Policy p);

enum class UeClass { urllc, fl };
enum class Direction : int { ul = 0, dl = 1 };

/// Allocation order inside a slot, highest first.
enum class PriorityClass : int {
  urllc_retx             = 0,
  fl_dedicated_retx      = 1,
  urllc_first_tx         = 2,
  fl_first_tx_or_cb_retx = 3,
};
inline constexpr int num_priority_classes = 4;

struct PolicyConfig {
  Policy policy              = Policy::ds;
  int    n_rx_fl             = 10;
  int    n_rx_urllc_ul       = 3;
  int    n_rx_urllc_dl       = 2;
  int    sr_period_slots     = 1;
  bool   cb_grant_every_slot = true;
  int    t_bo_slots          = 10;
  int    cb_cap_rbs          = 112;

  /// Defaults for `p`; contention retransmissions force n_rx_fl = 0.
  static PolicyConfig for_policy(Policy p, int cb_cap_rbs);

  /// Throws std::invalid_argument on an inconsistent combination.
  void validate() const;
};

struct MacConfig {
  int    num_rbs         = 112;
  double slot_duration_s = 0.0005;
  double pilot_overhead  = 1.0 / 7.0;

  int sr_proc_slots          = 2;
  int grant_proc_slots       = 2;
  int decode_slots           = 1;
  int dl_harq_feedback_slots = 1;

  int    cqi_period_slots = 40;
  int    cqi_control_rbs  = 15;
  double link_margin_db   = 1.0;

  double pf_alpha   = 0.05;
  double pf_eps_bps = 1.0;

  int bsr_ce_bytes              = 3;
  int ds_first_grant_data_bytes = 64;

  double fast_sigma_db = 2.0;
};

struct TransportBlock {
  std::uint64_t      tb_id        = 0;
  UeId               ue_id        = 0;
  Direction          dir          = Direction::ul;
  int                size_bytes   = 0;
  int                mcs_index    = 0;
  int                rb_count     = 0;
  int                harq_attempt = 0;
  std::vector<Piece> payload;
  /// Buffer status carried in the TB, when it has one.
  std::optional<std::uint32_t> bsr_bytes;
  SlotIndex                    created_slot = 0;
  radio::GrantKind             origin       = radio::GrantKind::dedicated;
  /// Set when the first attempt went over a contention-based grant.
  std::optional<std::uint64_t> cb_grant_id;
};

enum class TxOutcome { ack, nack, collision, unused };
const char* to_string(TxOutcome o);

/// One uplink grant as it played out on air.
struct TraceRecord {
  SlotIndex          slot;
  radio::GrantKind   kind;
  int                rb_count;
  int                mcs_index;
  radio::GrantTarget target;
  TxOutcome          outcome;
  int                transmitters; // UEs that used the grant
};

struct ClassAudit {
  int  demands     = 0;
  bool unmet       = false;
  int  granted_rbs = 0;
  int  min_unmet_rbs = 0; // smallest RB need among unmet demands
  int  free_after    = 0; // largest free run once the class was served
};

/// What the scheduler did for one grid.
struct SlotAudit {
  SlotIndex                                    scheduled_at = 0;
  SlotIndex                                    air_slot     = 0;
  Direction                                    dir          = Direction::ul;
  int                                          num_rbs      = 0;
  int                                          control_rbs  = 0;
  std::array<ClassAudit, num_priority_classes> classes{};
  int                                          cb_rbs       = 0;
  int                                          granted_rbs  = 0;
  std::vector<radio::Grant>                    grants;
};

class Cell;

class MacObserver {
public:
  virtual ~MacObserver() = default;
  virtual void on_schedule(const SlotAudit&) {}
  virtual void on_ul_transmission(const TraceRecord&) {}
  /// Called after the contention set of a CB occasion is known, before outcomes are applied.
  virtual void on_cb_occasion(SlotIndex, std::span<const UeId>, const Cell&) {}
};

struct Delivery {
  UeId      ue;
  Direction dir;
  SduInfo   sdu;
};

struct CbResult {
  UeId ue;
  bool collided;
  bool success;
};

struct SlotReport {
  SlotIndex             slot = 0;
  std::vector<Delivery> deliveries; // complete SDUs received by the end of the slot
  std::vector<CbResult> cb_results;
};

struct HarqRetx {
  TransportBlock tb;
  SlotIndex      visible_from = 0;
};

struct GrantedCapacity {
  SlotIndex     air_slot;
  std::uint32_t data_bytes;
};

struct UeMacState {
  UeId    ue_id = 0;
  UeClass cls   = UeClass::urllc;

  // UE side, uplink.
  RlcTxQueue    ul_queue;
  bool          sr_outstanding = false;
  std::uint32_t last_acked_bsr = 0;
  SlotIndex     last_acked_bsr_slot = -1;
  bool          bsr_lost       = false;
  SlotIndex     backoff_until  = 0;
  int           ul_harq_pending = 0;

  // gNB view of the uplink.
  std::optional<SlotIndex>     gnb_sr_visible_from;
  std::uint32_t                gnb_known_bsr_bytes = 0;
  SlotIndex                    gnb_bsr_slot        = -1;
  std::deque<GrantedCapacity>  ul_granted; // new-tx grants with air slot after gnb_bsr_slot
  std::deque<HarqRetx>         ul_retx;
  struct PendingBsr {
    std::uint32_t value;
    SlotIndex     built_slot;
    SlotIndex     visible_from;
  };
  std::deque<PendingBsr> pending_bsr;

  // Downlink, gNB side.
  RlcTxQueue           dl_queue;
  std::deque<HarqRetx> dl_retx;

  RlcRxReassembly ul_rx; // at the gNB
  RlcRxReassembly dl_rx; // at the UE

  std::optional<int> ul_mcs;
  std::optional<int> dl_mcs;
  double             pf_avg_ul_bps = 0.0;
  double             pf_avg_dl_bps = 0.0;

  channel::LinkState link;
};

/// MAC and PHY abstraction of one cell: the gNB scheduler plus the MAC entities of its UEs.
class Cell {
public:
  Cell(MacConfig                      cfg,
       PolicyConfig                   policy,
       std::vector<UeClass>           classes,
       std::vector<channel::LinkState> links,
       std::uint64_t                  seed);

  /// Data handed to the UE's uplink RLC at the current slot boundary.
  void enqueue_ul(UeId ue, const SduInfo& sdu);
  /// Data handed to the gNB's downlink RLC for `ue`.
  void enqueue_dl(UeId ue, const SduInfo& sdu);

  template <typename Pred>
  std::vector<SduInfo> drop_ul_if(UeId ue, Pred pred)
  {
    return ues_[ue].ul_queue.drop_if(pred);
  }
  template <typename Pred>
  std::vector<SduInfo> drop_dl_if(UeId ue, Pred pred)
  {
    return ues_[ue].dl_queue.drop_if(pred);
  }

  /// Runs slot `s`: uplink air interface, downlink air interface, then the scheduler.
  /// Slots must be consecutive starting at 0.
  const SlotReport& run_slot(SlotIndex s);

  const UeMacState&   ue(UeId id) const { return ues_[id]; }
  std::size_t         num_ues() const { return ues_.size(); }
  const MacConfig&    config() const { return cfg_; }
  const PolicyConfig& policy() const { return policy_; }

  /// Slots a UE must still stay silent at slot `s` (only meaningful for s after the failed attempt).
  int backoff_remaining(UeId ue, SlotIndex s) const;

  /// Whether `ue` would use a contention-based grant on air at `s`.
  bool cb_eligible(UeId ue, SlotIndex s) const;

  /// MCS of the contention-based grant: the minimum over the UE set, or 0 if any member lacks CSI.
  int cb_mcs() const;

  /// HARQ limit for a UE class and direction under the active policy.
  int max_harq_retx(UeClass cls, Direction dir) const;

  void set_observer(MacObserver* obs) { observer_ = obs; }

  std::uint64_t cb_occasions() const { return cb_occasions_; }
  std::uint64_t cb_rbs_total() const { return cb_rbs_total_; }

private:
  struct PlannedUl {
    radio::Grant                  grant;
    std::optional<TransportBlock> retx;
  };
  struct PlannedDl {
    radio::Grant   grant;
    TransportBlock tb;
  };
  struct Demand {
    UeId          ue;
    double        pf_metric;
    bool          retx;
    std::uint32_t bytes;
    int           mcs;
    bool          first_grant;
  };

  bool uses_sr(const UeMacState& u) const;
  bool uses_ibi(const UeMacState& u) const;
  bool uses_cb(const UeMacState& u) const;
  int  ul_mcs_of(const UeMacState& u) const { return u.ul_mcs.value_or(0); }
  int  dl_mcs_of(const UeMacState& u) const { return u.dl_mcs.value_or(0); }

  void run_cqi(SlotIndex s);
  void run_ul_air(SlotIndex s);
  void run_dl_air(SlotIndex s);
  void run_sr_occasions(SlotIndex s);
  void schedule_ul(SlotIndex s);
  void schedule_dl(SlotIndex s);
  void apply_visible_bsr(UeMacState& u, SlotIndex s);

  TransportBlock build_ul_newtx(UeMacState& u, const radio::Grant& g, SlotIndex s);
  void           resolve_ul(UeMacState& u, TransportBlock tb, bool success, SlotIndex s);
  void           resolve_dl(UeMacState& u, TransportBlock tb, bool success, SlotIndex s);
  void           deliver(UeMacState& u, Direction dir, const TransportBlock& tb);

  std::uint32_t ul_gnb_demand(const UeMacState& u, SlotIndex s) const;
  double        achievable_bps(int mcs) const;
  int           retx_rbs(const TransportBlock& tb, int own_mcs, int& mcs_out) const;

  std::vector<PlannedUl>& ul_plan(SlotIndex air) { return ul_plan_[static_cast<std::size_t>(air % ring_)]; }
  std::vector<PlannedDl>& dl_plan(SlotIndex air) { return dl_plan_[static_cast<std::size_t>(air % ring_)]; }

  MacConfig                    cfg_;
  PolicyConfig                 policy_;
  std::uint64_t                seed_;
  std::vector<UeMacState>      ues_;
  std::vector<UeId>            fl_ues_;
  std::vector<std::mt19937_64> backoff_rng_;

  SlotIndex                           ring_;
  std::vector<std::vector<PlannedUl>> ul_plan_;
  std::vector<std::vector<PlannedDl>> dl_plan_;

  std::uint64_t next_grant_id_ = 1;
  std::uint64_t next_tb_id_    = 1;
  SlotReport    report_;
  MacObserver*  observer_ = nullptr;

  std::vector<double> ul_served_bps_;
  std::vector<double> dl_served_bps_;
  std::vector<bool>   ul_granted_now_;
  std::vector<UeId>   cb_tx_;
  std::vector<Demand> demands_;

  std::uint64_t cb_occasions_ = 0;
  std::uint64_t cb_rbs_total_ = 0;
};

} // namespace cbsim::mac
