#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <unordered_map>
#include <vector>

namespace cbsim {

enum class SduKind : std::uint8_t { urllc_pdu, transport_data, transport_ack };

/// Upper-layer packet handed to RLC. `flow` and `seq` are interpreted by the owner of the SDU.
struct SduInfo {
  std::uint64_t sdu_id     = 0;
  std::uint32_t size_bytes = 0;
  SduKind       kind       = SduKind::urllc_pdu;
  std::uint32_t flow       = 0;
  std::uint32_t seq        = 0;
  /// Payload bytes carried (segment data excluding headers); 0 for ACKs and URLLC PDUs.
  std::uint32_t payload_bytes = 0;
  std::int64_t  created_slot  = 0;
};

/// A byte range of one SDU carried inside a transport block.
struct Piece {
  SduInfo       sdu;
  std::uint32_t offset = 0;
  std::uint32_t length = 0;
};

/// Sender-side acknowledged-mode queue: fresh SDUs plus pieces returned after a HARQ failure, which are
/// served first.
class RlcTxQueue {
public:
  void push(const SduInfo& sdu);

  /// Re-inserts pieces of a failed transport block ahead of fresh data, keeping their order.
  void requeue_front(const std::vector<Piece>& pieces);

  /// Moves up to `budget` bytes into `out`, segmenting SDUs as needed. Returns the bytes taken.
  std::uint32_t pull(std::uint32_t budget, std::vector<Piece>& out);

  std::uint64_t bytes() const { return bytes_; }
  bool          empty() const { return bytes_ == 0; }

  /// Drops every SDU (and requeued piece) for which `pred(sdu)` holds. Returns the dropped SDUs, once each.
  template <typename Pred>
  std::vector<SduInfo> drop_if(Pred pred);

  /// Oldest SDU still (partly) queued, if any.
  std::optional<SduInfo> front() const;

private:
  struct Entry {
    SduInfo       sdu;
    std::uint32_t sent = 0;
  };
  std::deque<Piece> retx_;
  std::deque<Entry> fresh_;
  std::uint64_t     bytes_ = 0;
};

/// Receiver-side reassembly. Reports an SDU once all of its bytes have arrived.
class RlcRxReassembly {
public:
  std::optional<SduInfo> accept(const Piece& piece);
  std::size_t            pending() const { return partial_.size(); }

private:
  std::unordered_map<std::uint64_t, std::uint32_t> partial_;
};

template <typename Pred>
std::vector<SduInfo> RlcTxQueue::drop_if(Pred pred)
{
  std::vector<SduInfo> dropped;
  for (auto it = retx_.begin(); it != retx_.end();) {
    if (pred(it->sdu)) {
      bytes_ -= it->length;
      bool seen = false;
      for (const auto& d : dropped) {
        seen = seen || d.sdu_id == it->sdu.sdu_id;
      }
      if (!seen) {
        dropped.push_back(it->sdu);
      }
      it = retx_.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = fresh_.begin(); it != fresh_.end();) {
    if (pred(it->sdu)) {
      bytes_ -= it->sdu.size_bytes - it->sent;
      bool seen = false;
      for (const auto& d : dropped) {
        seen = seen || d.sdu_id == it->sdu.sdu_id;
      }
      if (!seen) {
        dropped.push_back(it->sdu);
      }
      it = fresh_.erase(it);
    } else {
      ++it;
    }
  }
  return dropped;
}

} // namespace cbsim
