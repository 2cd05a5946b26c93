#include "cbsim/traffic.hpp"

#include <algorithm>
#include <cmath>

namespace cbsim::traffic {

SlotIndex to_slots(double seconds, double slot_s)
{
  return static_cast<SlotIndex>(std::llround(seconds / slot_s));
}

bool urllc_on_time(double gen_s, double received_s, double bound_s)
{
  return received_s - gen_s <= bound_s + 1e-12;
}

UrllcFlow::UrllcFlow(UeId ue, SlotIndex period_slots, SlotIndex phase_slots, std::uint32_t ul_bytes, std::uint32_t dl_bytes)
    : ue_(ue), period_(std::max<SlotIndex>(1, period_slots)), next_gen_(phase_slots), ul_bytes_(ul_bytes), dl_bytes_(dl_bytes)
{
}

int UrllcFlow::tick(SlotIndex now, SduSink& sink)
{
  int n = 0;
  while (now >= next_gen_) {
    SduInfo ul;
    ul.size_bytes   = ul_bytes_;
    ul.kind         = SduKind::urllc_pdu;
    ul.seq          = static_cast<std::uint32_t>(generated_);
    ul.created_slot = next_gen_;
    SduInfo dl      = ul;
    dl.size_bytes   = dl_bytes_;
    sink.send(ue_, true, ul);
    sink.send(ue_, false, dl);
    ++generated_;
    next_gen_ += period_;
    n += 2;
  }
  return n;
}

std::uint32_t segment_count(std::uint64_t bytes, std::uint32_t mss)
{
  return static_cast<std::uint32_t>((bytes + mss - 1) / mss);
}

ReliableSender::ReliableSender(std::uint32_t          flow_id,
                               UeId                   ue,
                               bool                   uplink,
                               std::uint64_t          bytes,
                               const TransportConfig& cfg,
                               double                 slot_s)
    : flow_id_(flow_id),
      ue_(ue),
      uplink_(uplink),
      bytes_(bytes),
      cfg_(cfg),
      n_segments_(segment_count(bytes, cfg.segment_size_bytes)),
      rto_base_(std::max<SlotIndex>(1, to_slots(cfg.rto_s, slot_s))),
      rto_(rto_base_)
{
}

void ReliableSender::emit(std::uint32_t seq, SlotIndex now, SduSink& sink)
{
  const std::uint64_t off = static_cast<std::uint64_t>(seq) * cfg_.segment_size_bytes;
  const auto payload = static_cast<std::uint32_t>(std::min<std::uint64_t>(cfg_.segment_size_bytes, bytes_ - off));
  SduInfo    sdu;
  sdu.size_bytes    = payload + cfg_.header_bytes;
  sdu.kind          = SduKind::transport_data;
  sdu.flow          = flow_id_;
  sdu.seq           = seq;
  sdu.payload_bytes = payload;
  sdu.created_slot  = now;
  sink.send(ue_, uplink_, sdu);
  ++sent_;
}

void ReliableSender::fill_window(SlotIndex now, SduSink& sink)
{
  while (next_ < n_segments_ && next_ - cum_acked_ < cfg_.window_segments) {
    emit(next_++, now, sink);
  }
}

void ReliableSender::start(SlotIndex now, SduSink& sink)
{
  fill_window(now, sink);
  if (!complete()) {
    deadline_ = now + rto_;
  }
}

void ReliableSender::on_ack(std::uint32_t cum, SlotIndex now, SduSink& sink)
{
  if (complete()) {
    throw flow_closed("ACK for a finished flow");
  }
  if (cum <= cum_acked_) {
    return;
  }
  cum_acked_ = std::min(cum, n_segments_);
  next_      = std::max(next_, cum_acked_);
  rto_       = rto_base_;
  if (complete()) {
    deadline_.reset();
    return;
  }
  fill_window(now, sink);
  deadline_ = now + rto_;
}

void ReliableSender::on_tick(SlotIndex now, SduSink& sink)
{
  if (complete() || !deadline_ || now < *deadline_) {
    return;
  }
  emit(cum_acked_, now, sink);
  ++timeouts_;
  rto_      = std::min<SlotIndex>(rto_ * 2, rto_base_ * cfg_.rto_max_factor);
  deadline_ = now + rto_;
}

ReliableReceiver::ReliableReceiver(std::uint32_t flow_id, std::uint64_t bytes, std::uint32_t mss)
    : flow_id_(flow_id), bytes_(bytes), n_segments_(segment_count(bytes, mss))
{
}

std::uint32_t ReliableReceiver::accept(std::uint32_t seq, std::uint32_t payload_bytes)
{
  if (seq < expected_ || seq >= n_segments_) {
    return expected_;
  }
  if (seq > expected_) {
    out_of_order_.insert({seq, payload_bytes});
    return expected_;
  }
  delivered_bytes_ += payload_bytes;
  ++expected_;
  while (!out_of_order_.empty() && out_of_order_.begin()->first <= expected_) {
    const auto [s, p] = *out_of_order_.begin();
    out_of_order_.erase(out_of_order_.begin());
    if (s == expected_) {
      delivered_bytes_ += p;
      ++expected_;
    }
  }
  return expected_;
}

FlSession::FlSession(FlConfig cfg, std::vector<UeId> fl_ues, double slot_s)
    : cfg_(cfg),
      slot_s_(slot_s),
      tau_m_(to_slots(cfg.tau_m_s, slot_s)),
      tau_t_(to_slots(cfg.tau_t_s, slot_s)),
      tau_a_(to_slots(cfg.tau_a_s, slot_s))
{
  UeId max_id = 0;
  for (UeId u : fl_ues) {
    UeState st;
    st.ue = u;
    ues_.push_back(std::move(st));
    max_id = std::max(max_id, u);
  }
  index_.assign(fl_ues.empty() ? 0 : max_id + 1, -1);
  for (std::size_t i = 0; i < ues_.size(); ++i) {
    index_[ues_[i].ue] = static_cast<int>(i);
  }
}

int FlSession::index_of(UeId ue) const
{
  return ue < index_.size() ? index_[ue] : -1;
}

void FlSession::start(SlotIndex now)
{
  started_   = true;
  iteration_ = -1;
  begin_iteration(now);
}

void FlSession::begin_iteration(SlotIndex now)
{
  ++iteration_;
  iteration_start_ = now;
  uploads_done_    = 0;
  server_phase_    = ServerPhase::distributing;
  for (std::size_t i = 0; i < ues_.size(); ++i) {
    ues_[i].download_at = now + static_cast<SlotIndex>(i) * tau_m_;
  }
}

void FlSession::on_tick(SlotIndex now, SduSink& sink)
{
  if (!started_ || ues_.empty()) {
    return;
  }
  if (server_phase_ == ServerPhase::aggregating && now >= aggregate_end_) {
    events_.push_back({TransferKind::iteration, iteration_, 0, iteration_start_, now});
    begin_iteration(now);
  }
  bool all_started = true;
  for (auto& u : ues_) {
    if (server_phase_ == ServerPhase::distributing && (u.phase == UePhase::idle || u.phase == UePhase::done)) {
      if (now >= u.download_at) {
        const std::uint32_t flow = next_flow_++;
        u.phase                  = UePhase::downloading;
        u.phase_start            = now;
        u.receiver.emplace(flow, cfg_.model_bytes, cfg_.transport.segment_size_bytes);
        u.sender.emplace(flow, u.ue, false, cfg_.model_bytes, cfg_.transport, slot_s_);
        u.sender->start(now, sink);
      } else {
        all_started = false;
      }
    }
    if (u.phase == UePhase::training && now >= u.training_end) {
      const std::uint32_t flow = next_flow_++;
      u.phase                  = UePhase::uploading;
      u.phase_start            = now;
      u.receiver.emplace(flow, cfg_.model_bytes, cfg_.transport.segment_size_bytes);
      u.sender.emplace(flow, u.ue, true, cfg_.model_bytes, cfg_.transport, slot_s_);
      u.sender->start(now, sink);
    }
    if (u.sender) {
      const auto before = u.sender->timeouts();
      u.sender->on_tick(now, sink);
      timeouts_ += u.sender->timeouts() - before;
    }
  }
  if (server_phase_ == ServerPhase::distributing && all_started) {
    server_phase_ = ServerPhase::waiting_uploads;
  }
}

void FlSession::on_delivery(SlotIndex now, UeId ue, bool uplink, const SduInfo& sdu, SduSink& sink)
{
  const int idx = index_of(ue);
  if (idx < 0) {
    return;
  }
  auto& u = ues_[static_cast<std::size_t>(idx)];

  if (sdu.kind == SduKind::transport_ack) {
    if (u.sender && u.sender->flow_id() == sdu.flow && !u.sender->complete()) {
      u.sender->on_ack(sdu.seq, now, sink);
    }
    return;
  }
  if (sdu.kind != SduKind::transport_data || !u.receiver || u.receiver->flow_id() != sdu.flow) {
    return;
  }
  const bool download = !uplink;
  if ((download && u.phase != UePhase::downloading) || (!download && u.phase != UePhase::uploading)) {
    // The transfer already completed; late duplicates still get an ACK.
    SduInfo ack;
    ack.size_bytes   = cfg_.transport.ack_bytes;
    ack.kind         = SduKind::transport_ack;
    ack.flow         = sdu.flow;
    ack.seq          = u.receiver->expected();
    ack.created_slot = now;
    sink.send(ue, !uplink, ack);
    return;
  }
  const std::uint32_t cum = u.receiver->accept(sdu.seq, sdu.payload_bytes);
  SduInfo             ack;
  ack.size_bytes   = cfg_.transport.ack_bytes;
  ack.kind         = SduKind::transport_ack;
  ack.flow         = sdu.flow;
  ack.seq          = cum;
  ack.created_slot = now;
  sink.send(ue, !uplink, ack);

  if (!u.receiver->complete()) {
    return;
  }
  if (download) {
    events_.push_back({TransferKind::download, iteration_, ue, u.phase_start, now});
    u.phase        = UePhase::training;
    u.training_end = now + tau_t_;
  } else {
    events_.push_back({TransferKind::upload, iteration_, ue, u.phase_start, now});
    u.phase = UePhase::done;
    if (++uploads_done_ == static_cast<int>(ues_.size())) {
      server_phase_  = ServerPhase::aggregating;
      aggregate_end_ = now + tau_a_;
    }
  }
}

std::vector<TransferEvent> FlSession::take_events()
{
  std::vector<TransferEvent> out;
  out.swap(events_);
  return out;
}

int FlSession::incomplete_transfers() const
{
  return static_cast<int>(std::count_if(ues_.begin(), ues_.end(), [](const UeState& u) {
    return u.phase == UePhase::downloading || u.phase == UePhase::uploading;
  }));
}

} // namespace cbsim::traffic
