#include "cbsim/rlc.hpp"

#include <algorithm>

namespace cbsim {

void RlcTxQueue::push(const SduInfo& sdu)
{
  if (sdu.size_bytes == 0) {
    return;
  }
  fresh_.push_back({sdu, 0});
  bytes_ += sdu.size_bytes;
}

void RlcTxQueue::requeue_front(const std::vector<Piece>& pieces)
{
  for (auto it = pieces.rbegin(); it != pieces.rend(); ++it) {
    retx_.push_front(*it);
    bytes_ += it->length;
  }
}

std::uint32_t RlcTxQueue::pull(std::uint32_t budget, std::vector<Piece>& out)
{
  std::uint32_t taken = 0;
  while (taken < budget && !retx_.empty()) {
    Piece&              p    = retx_.front();
    const std::uint32_t room = budget - taken;
    if (p.length <= room) {
      out.push_back(p);
      taken += p.length;
      retx_.pop_front();
    } else {
      out.push_back({p.sdu, p.offset, room});
      p.offset += room;
      p.length -= room;
      taken += room;
    }
  }
  while (taken < budget && !fresh_.empty()) {
    Entry&              e      = fresh_.front();
    const std::uint32_t remain = e.sdu.size_bytes - e.sent;
    const std::uint32_t len    = std::min(remain, budget - taken);
    out.push_back({e.sdu, e.sent, len});
    e.sent += len;
    taken += len;
    if (e.sent == e.sdu.size_bytes) {
      fresh_.pop_front();
    }
  }
  bytes_ -= taken;
  return taken;
}

std::optional<SduInfo> RlcTxQueue::front() const
{
  if (!retx_.empty()) {
    return retx_.front().sdu;
  }
  if (!fresh_.empty()) {
    return fresh_.front().sdu;
  }
  return std::nullopt;
}

std::optional<SduInfo> RlcRxReassembly::accept(const Piece& piece)
{
  if (piece.length == piece.sdu.size_bytes) {
    return piece.sdu;
  }
  auto& got = partial_[piece.sdu.sdu_id];
  got += piece.length;
  if (got >= piece.sdu.size_bytes) {
    partial_.erase(piece.sdu.sdu_id);
    return piece.sdu;
  }
  return std::nullopt;
}

} // namespace cbsim
