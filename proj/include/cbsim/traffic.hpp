#pragma once

#include "cbsim/radio.hpp"
#include "cbsim/rlc.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

namespace cbsim::traffic {

/// Where generated SDUs go. The implementation assigns sdu_id.
class SduSink {
public:
  virtual ~SduSink()                                          = default;
  virtual void send(UeId ue, bool uplink, SduInfo sdu)        = 0;
};

/// Converts a duration to whole slots, rounding to nearest.
SlotIndex to_slots(double seconds, double slot_s);

struct UrllcConfig {
  double        period_s         = 0.005;
  std::uint32_t ul_pdu_bytes     = 64;
  std::uint32_t dl_pdu_bytes     = 80;
  double        ul_delay_bound_s = 0.010;
  double        dl_delay_bound_s = 0.003;
};

/// True when a PDU generated at `gen_s` and received at `received_s` met `bound_s`.
bool urllc_on_time(double gen_s, double received_s, double bound_s);

/// Periodic bidirectional traffic of one URLLC UE. Generation instants are slot boundaries.
class UrllcFlow {
public:
  UrllcFlow(UeId ue, SlotIndex period_slots, SlotIndex phase_slots, std::uint32_t ul_bytes, std::uint32_t dl_bytes);

  /// Emits one UL and one DL PDU when `now` is a generation instant. Returns the number emitted.
  int tick(SlotIndex now, SduSink& sink);

  UeId          ue() const { return ue_; }
  SlotIndex     next_gen() const { return next_gen_; }
  std::uint64_t generated() const { return generated_; }

private:
  UeId          ue_;
  SlotIndex     period_;
  SlotIndex     next_gen_;
  std::uint32_t ul_bytes_;
  std::uint32_t dl_bytes_;
  std::uint64_t generated_ = 0;
};

struct TransportConfig {
  std::uint32_t segment_size_bytes = 1460;
  std::uint32_t header_bytes       = 40;
  std::uint32_t ack_bytes          = 40;
  std::uint32_t window_segments    = 64;
  double        rto_s              = 0.2;
  int           rto_max_factor     = 4;
};

class flow_closed : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// ceil(bytes / mss)
std::uint32_t segment_count(std::uint64_t bytes, std::uint32_t mss);

/// Fixed-window sender with cumulative ACKs and a single retransmission timer.
class ReliableSender {
public:
  ReliableSender(std::uint32_t flow_id, UeId ue, bool uplink, std::uint64_t bytes, const TransportConfig& cfg, double slot_s);

  void start(SlotIndex now, SduSink& sink);
  /// `cum` segments are acknowledged in order. Throws flow_closed once the flow completed.
  void on_ack(std::uint32_t cum, SlotIndex now, SduSink& sink);
  /// Fires the retransmission timer when due.
  void on_tick(SlotIndex now, SduSink& sink);

  bool          complete() const { return cum_acked_ == n_segments_; }
  std::uint32_t num_segments() const { return n_segments_; }
  std::uint32_t in_flight() const { return next_ - cum_acked_; }
  std::uint32_t timeouts() const { return timeouts_; }
  std::uint32_t segments_sent() const { return sent_; }
  std::uint32_t flow_id() const { return flow_id_; }

private:
  void emit(std::uint32_t seq, SlotIndex now, SduSink& sink);
  void fill_window(SlotIndex now, SduSink& sink);

  std::uint32_t            flow_id_;
  UeId                     ue_;
  bool                     uplink_;
  std::uint64_t            bytes_;
  TransportConfig          cfg_;
  std::uint32_t            n_segments_;
  SlotIndex                rto_base_;
  SlotIndex                rto_;
  std::uint32_t            next_      = 0;
  std::uint32_t            cum_acked_ = 0;
  std::optional<SlotIndex> deadline_;
  std::uint32_t            timeouts_ = 0;
  std::uint32_t            sent_     = 0;
};

/// In-order reassembly at the receiving end; every accepted segment yields a cumulative ACK.
class ReliableReceiver {
public:
  ReliableReceiver(std::uint32_t flow_id, std::uint64_t bytes, std::uint32_t mss);

  /// Returns the cumulative ACK after taking segment `seq`. Duplicates are ignored.
  std::uint32_t accept(std::uint32_t seq, std::uint32_t payload_bytes);

  bool          complete() const { return delivered_bytes_ == bytes_; }
  std::uint64_t delivered_bytes() const { return delivered_bytes_; }
  std::uint32_t expected() const { return expected_; }
  std::uint32_t flow_id() const { return flow_id_; }

private:
  std::uint32_t                                  flow_id_    = 0;
  std::uint64_t                                  bytes_      = 0;
  std::uint32_t                                  n_segments_ = 0;
  std::uint32_t                                  expected_        = 0;
  std::uint64_t                                  delivered_bytes_ = 0;
  std::set<std::pair<std::uint32_t, std::uint32_t>> out_of_order_; // (seq, payload)
};

struct FlConfig {
  std::uint64_t   model_bytes = 2 * 1024 * 1024;
  double          tau_m_s     = 0.010;
  double          tau_t_s     = 10.0;
  double          tau_a_s     = 10.0;
  TransportConfig transport;
};

enum class UePhase { idle, downloading, training, uploading, done };
enum class ServerPhase { distributing, waiting_uploads, aggregating };

enum class TransferKind { download, upload, iteration };

struct TransferEvent {
  TransferKind kind;
  int          iteration;
  UeId         ue; // unused for iteration records
  SlotIndex    start;
  SlotIndex    end;
};

/// Synchronous FL: the server distributes the model, every UE trains and uploads, the server aggregates.
class FlSession {
public:
  FlSession(FlConfig cfg, std::vector<UeId> fl_ues, double slot_s);

  /// Model version 0 is ready at `now`.
  void start(SlotIndex now);

  /// Timers: staggered download starts, training and aggregation expiry, transport timeouts.
  void on_tick(SlotIndex now, SduSink& sink);

  /// A complete SDU of an FL flow arrived. Stale flows are ignored.
  void on_delivery(SlotIndex now, UeId ue, bool uplink, const SduInfo& sdu, SduSink& sink);

  /// Moves out transfer records completed since the last call.
  std::vector<TransferEvent> take_events();

  int         iteration() const { return iteration_; }
  ServerPhase server_phase() const { return server_phase_; }
  UePhase     ue_phase(std::size_t idx) const { return ues_[idx].phase; }
  std::size_t num_ues() const { return ues_.size(); }
  UeId        ue_id(std::size_t idx) const { return ues_[idx].ue; }

  /// FL UEs whose current transfer has not completed.
  int incomplete_transfers() const;
  std::uint32_t total_timeouts() const { return timeouts_; }

private:
  struct UeState {
    UeId                            ue;
    UePhase                         phase = UePhase::idle;
    SlotIndex                       download_at = 0;
    SlotIndex                       phase_start = 0;
    SlotIndex                       training_end = 0;
    std::optional<ReliableSender>   sender;   // server->UE during download, UE->server during upload
    std::optional<ReliableReceiver> receiver;
  };

  int  index_of(UeId ue) const;
  void begin_iteration(SlotIndex now);

  FlConfig                   cfg_;
  double                     slot_s_;
  std::vector<UeState>       ues_;
  std::vector<int>           index_; // ue id -> position, -1 otherwise
  SlotIndex                  tau_m_;
  SlotIndex                  tau_t_;
  SlotIndex                  tau_a_;
  int                        iteration_       = 0;
  SlotIndex                  iteration_start_ = 0;
  ServerPhase                server_phase_    = ServerPhase::distributing;
  SlotIndex                  aggregate_end_   = 0;
  int                        uploads_done_    = 0;
  std::uint32_t              next_flow_       = 1;
  std::uint32_t              timeouts_        = 0;
  bool                       started_         = false;
  std::vector<TransferEvent> events_;
};

} // namespace cbsim::traffic
