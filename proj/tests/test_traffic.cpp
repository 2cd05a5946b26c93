#include "cbsim/traffic.hpp"

#include <doctest.h>

#include <deque>
#include <map>

using namespace cbsim;
using namespace cbsim::traffic;

namespace {

struct Sent {
  UeId    ue;
  bool    uplink;
  SduInfo sdu;
};

class Recorder : public SduSink {
public:
  void send(UeId ue, bool uplink, SduInfo sdu) override
  {
    sdu.sdu_id = ++next_;
    out.push_back({ue, uplink, sdu});
  }
  std::deque<Sent> out;

private:
  std::uint64_t next_ = 0;
};

// Lossless pipe with a fixed one-way delay, optionally blackholing one UE's uplink.
struct Loopback {
  FlSession&             session;
  Recorder               sink;
  SlotIndex              delay = 2;
  std::optional<UeId>    mute_uplink_of;
  std::multimap<SlotIndex, Sent> in_flight;

  void step(SlotIndex now)
  {
    auto range = in_flight.equal_range(now);
    std::vector<Sent> due;
    for (auto it = range.first; it != range.second; ++it) {
      due.push_back(it->second);
    }
    in_flight.erase(range.first, range.second);
    for (const auto& d : due) {
      session.on_delivery(now, d.ue, d.uplink, d.sdu, sink);
    }
    session.on_tick(now, sink);
    while (!sink.out.empty()) {
      auto s = sink.out.front();
      sink.out.pop_front();
      if (mute_uplink_of && s.uplink && s.ue == *mute_uplink_of) {
        continue;
      }
      in_flight.emplace(now + delay, s);
    }
  }
};

} // namespace

TEST_CASE("segment counts")
{
  CHECK(segment_count(12 * 1024, 1460) == 9);
  CHECK(segment_count(16 * 1024, 1460) == 12);
  CHECK(segment_count(2 * 1024 * 1024, 1460) == 1437); // 1436.4 segments, rounded up
  CHECK(segment_count(1460, 1460) == 1);
  CHECK(segment_count(1461, 1460) == 2);
}

TEST_CASE("slot conversion")
{
  CHECK(to_slots(0.005, 0.0005) == 10);
  CHECK(to_slots(10.0, 0.0005) == 20000);
  CHECK(to_slots(0.0, 0.0005) == 0);
}

TEST_CASE("URLLC generation")
{
  Recorder  sink;
  UrllcFlow f(3, 10, 4, 64, 80);
  for (SlotIndex s = 0; s < 300000; ++s) {
    f.tick(s, sink);
  }
  // 150 s at one PDU per 5 ms.
  CHECK(f.generated() == 30000);
  int ul = 0, dl = 0;
  for (const auto& s : sink.out) {
    CHECK(s.ue == 3);
    CHECK(s.sdu.kind == SduKind::urllc_pdu);
    CHECK((s.sdu.created_slot - 4) % 10 == 0);
    if (s.uplink) {
      ++ul;
      CHECK(s.sdu.size_bytes == 64);
    } else {
      ++dl;
      CHECK(s.sdu.size_bytes == 80);
    }
  }
  CHECK(ul == 30000);
  CHECK(dl == 30000);
}

TEST_CASE("URLLC delay bound")
{
  CHECK(urllc_on_time(1.0, 1.010, 0.010));
  CHECK_FALSE(urllc_on_time(1.0, 1.0101, 0.010));
  CHECK(urllc_on_time(0.0, 0.003, 0.003));
  CHECK_FALSE(urllc_on_time(0.0, 0.0035, 0.003));
}

TEST_CASE("reliable sender window and acknowledgements")
{
  TransportConfig cfg;
  cfg.window_segments = 4;
  Recorder       sink;
  ReliableSender tx(7, 1, true, 10 * 1460 + 100, cfg, 0.0005);
  CHECK(tx.num_segments() == 11);
  tx.start(0, sink);
  CHECK(sink.out.size() == 4);
  CHECK(tx.in_flight() == 4);
  for (const auto& s : sink.out) {
    CHECK(s.uplink);
    CHECK(s.sdu.flow == 7);
    CHECK(s.sdu.size_bytes == 1460 + 40);
  }
  sink.out.clear();

  tx.on_ack(2, 5, sink);
  CHECK(sink.out.size() == 2);
  CHECK(tx.in_flight() == 4);
  tx.on_ack(1, 6, sink); // stale
  CHECK(sink.out.size() == 2);
  tx.on_ack(11, 7, sink);
  CHECK(tx.complete());
  CHECK_THROWS_AS(tx.on_ack(11, 8, sink), flow_closed);

  ReliableSender last(8, 1, false, 1460 + 100, cfg, 0.0005);
  sink.out.clear();
  last.start(0, sink);
  REQUIRE(sink.out.size() == 2);
  CHECK(sink.out[1].sdu.payload_bytes == 100);
  CHECK(sink.out[1].sdu.size_bytes == 140);
}

TEST_CASE("retransmission timer backs off to four times the base")
{
  TransportConfig cfg; // 0.2 s base = 400 slots
  Recorder        sink;
  ReliableSender  tx(1, 0, true, 3000, cfg, 0.0005);
  tx.start(0, sink);
  sink.out.clear();

  std::vector<SlotIndex> fires;
  for (SlotIndex s = 1; s <= 6000; ++s) {
    const auto before = tx.timeouts();
    tx.on_tick(s, sink);
    if (tx.timeouts() > before) {
      fires.push_back(s);
      CHECK(sink.out.back().sdu.seq == 0);
    }
  }
  REQUIRE(fires.size() >= 4);
  CHECK(fires[0] == 400);
  CHECK(fires[1] == 400 + 800);
  CHECK(fires[2] == 400 + 800 + 1600);
  CHECK(fires[3] == 400 + 800 + 1600 + 1600);

  // An ACK resets the timer to the base value.
  tx.on_ack(1, 6001, sink);
  for (SlotIndex s = 6002; s <= 6401; ++s) {
    tx.on_tick(s, sink);
  }
  CHECK(tx.timeouts() == fires.size() + 1);
}

TEST_CASE("receiver reorders and acknowledges cumulatively")
{
  ReliableReceiver rx(1, 3 * 1460, 1460);
  CHECK(rx.accept(1, 1460) == 0);
  CHECK(rx.accept(2, 1460) == 0);
  CHECK(rx.accept(0, 1460) == 3);
  CHECK(rx.complete());
  CHECK(rx.accept(0, 1460) == 3);
  CHECK(rx.delivered_bytes() == 3 * 1460);
}

TEST_CASE("FL session timeline")
{
  FlConfig cfg;
  cfg.model_bytes = 12 * 1024;
  FlSession session(cfg, {10, 11, 12, 13}, 0.0005);
  Loopback  pipe{session};
  session.start(0);

  std::map<UeId, SlotIndex> first_download;
  std::map<UeId, SlotIndex> first_upload;
  std::vector<TransferEvent> events;
  for (SlotIndex s = 0; s < 2 * 50000; ++s) {
    pipe.step(s);
    for (const auto& [t, m] : pipe.in_flight) {
      if (m.sdu.kind != SduKind::transport_data) {
        continue;
      }
      auto& book = m.uplink ? first_upload : first_download;
      if (!book.count(m.ue)) {
        book[m.ue] = t - pipe.delay;
      }
    }
    for (auto& e : session.take_events()) {
      events.push_back(e);
    }
  }

  // Downloads start n * 10 ms after the iteration start.
  CHECK(first_download[10] == 0);
  CHECK(first_download[11] == 20);
  CHECK(first_download[12] == 40);
  CHECK(first_download[13] == 60);

  std::map<UeId, TransferEvent> dl, ul;
  std::vector<TransferEvent>    its;
  for (const auto& e : events) {
    if (e.kind == TransferKind::download && e.iteration == 0) {
      dl[e.ue] = e;
    } else if (e.kind == TransferKind::upload && e.iteration == 0) {
      ul[e.ue] = e;
    } else if (e.kind == TransferKind::iteration) {
      its.push_back(e);
    }
  }
  REQUIRE(dl.size() == 4);
  REQUIRE(ul.size() == 4);
  SlotIndex last_upload = 0;
  for (UeId u : {10u, 11u, 12u, 13u}) {
    CHECK(dl[u].start == first_download[u]);
    // Training takes 10 s after the download completes.
    CHECK(ul[u].start == dl[u].end + 20000);
    CHECK(first_upload[u] == ul[u].start);
    last_upload = std::max(last_upload, ul[u].end);
  }
  REQUIRE(!its.empty());
  CHECK(its[0].start == 0);
  CHECK(its[0].end == last_upload + 20000);
  CHECK(its[0].end - its[0].start >= 40000);
  CHECK(session.total_timeouts() == 0);
}

TEST_CASE("server waits for every upload")
{
  FlConfig cfg;
  cfg.model_bytes = 4000;
  FlSession session(cfg, {0, 1}, 0.0005);
  Loopback  pipe{session};
  pipe.mute_uplink_of = 1;
  session.start(0);
  bool saw_iteration  = false;
  for (SlotIndex s = 0; s < 80000; ++s) {
    pipe.step(s);
    for (const auto& e : session.take_events()) {
      saw_iteration = saw_iteration || e.kind == TransferKind::iteration;
    }
  }
  CHECK_FALSE(saw_iteration);
  CHECK(session.server_phase() == ServerPhase::waiting_uploads);
  CHECK(session.ue_phase(1) == UePhase::uploading);
  CHECK(session.ue_phase(0) == UePhase::done);
  CHECK(session.incomplete_transfers() == 1);
  CHECK(session.total_timeouts() > 0);
}
