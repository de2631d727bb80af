#include "pmdio/comm.hpp"

#include <thread>

namespace pmdio {

InProcessTransport::InProcessTransport(int size) : size_(size), pending_(static_cast<std::size_t>(size)) {
  if (size < 1) fail(Errc::invalid_argument, "rank group size must be >= 1");
}

void InProcessTransport::unwind_locked() const {
  throw GroupFault(fault_->origin, fault_->cause, fault_->message);
}

Gathered InProcessTransport::exchange(int rank, Contribution contribution) {
  std::unique_lock lock(mutex_);
  if (fault_) unwind_locked();
  if (departed_ > 0) {
    fault_ = FaultInfo{rank, Errc::collective_mismatch, "collective entered after a member left the group"};
    cv_.notify_all();
    unwind_locked();
  }
  pending_[static_cast<std::size_t>(rank)] = std::move(contribution);
  if (++arrived_ == size_) {
    result_ = std::make_shared<const std::vector<Contribution>>(std::move(pending_));
    pending_ = std::vector<Contribution>(static_cast<std::size_t>(size_));
    arrived_ = 0;
    ++generation_;
    cv_.notify_all();
    return result_;
  }
  const auto generation = generation_;
  cv_.wait(lock, [&] { return generation_ != generation || fault_ || departed_ > 0; });
  if (generation_ != generation) return result_;
  if (!fault_) {
    fault_ = FaultInfo{rank, Errc::collective_mismatch, "a member left the group during a collective"};
    cv_.notify_all();
  }
  unwind_locked();
}

void InProcessTransport::fault(int rank, Errc cause, const std::string& message) {
  std::lock_guard lock(mutex_);
  if (!fault_) fault_ = FaultInfo{rank, cause, message};
  cv_.notify_all();
}

void InProcessTransport::depart(int) {
  std::lock_guard lock(mutex_);
  ++departed_;
  cv_.notify_all();
}

std::optional<InProcessTransport::FaultInfo> InProcessTransport::fault_info() const {
  std::lock_guard lock(mutex_);
  return fault_;
}

RankGroup::RankGroup(std::shared_ptr<Transport> transport, int rank)
    : transport_(std::move(transport)), rank_(rank) {
  if (!transport_ || rank < 0 || rank >= transport_->size())
    fail(Errc::invalid_argument, "rank out of range for group");
}

Gathered RankGroup::exchange(CollectiveKind kind, std::uint64_t value, Bytes bytes) {
  Contribution c{kind, sequence_++, value, std::move(bytes)};
  auto all = transport_->exchange(rank_, std::move(c));
  const auto& first = all->front();
  for (const auto& other : *all) {
    if (other.kind != first.kind || other.sequence != first.sequence)
      fail(Errc::collective_mismatch, "members disagree on collective kind or call sequence");
  }
  return all;
}

std::uint64_t RankGroup::exclusive_prefix_sum(std::uint64_t local) {
  auto all = exchange(CollectiveKind::prefix_sum, local);
  std::uint64_t sum = 0;
  for (int r = 0; r < rank_; ++r) sum += (*all)[static_cast<std::size_t>(r)].value;
  return sum;
}

std::uint64_t RankGroup::all_reduce_sum(std::uint64_t local) {
  auto all = exchange(CollectiveKind::reduce_sum, local);
  std::uint64_t sum = 0;
  for (const auto& c : *all) sum += c.value;
  return sum;
}

void RankGroup::barrier() { exchange(CollectiveKind::barrier, 0); }

std::vector<std::uint64_t> RankGroup::all_gather(std::uint64_t local) {
  auto all = exchange(CollectiveKind::gather, local);
  std::vector<std::uint64_t> out;
  out.reserve(all->size());
  for (const auto& c : *all) out.push_back(c.value);
  return out;
}

Gathered RankGroup::all_gather_bytes(Bytes local) {
  return exchange(CollectiveKind::gather_bytes, 0, std::move(local));
}

void RankGroup::agree(std::uint64_t digest, std::string_view what) {
  auto all = exchange(CollectiveKind::agree, digest);
  for (const auto& c : *all) {
    if (c.value != digest) fail(Errc::collective_mismatch, "members passed different " + std::string(what));
  }
}

namespace detail {

void run_group(int size, const std::function<void(RankGroup&)>& program) {
  auto transport = std::make_shared<InProcessTransport>(size);
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(size));
  for (int r = 0; r < size; ++r) {
    threads.emplace_back([&, r] {
      try {
        RankGroup group(transport, r);
        program(group);
      } catch (const GroupFault& f) {
        transport->fault(r, f.cause(), f.detail());
      } catch (const Error& e) {
        transport->fault(r, e.code(), e.what());
      } catch (const std::exception& e) {
        transport->fault(r, Errc::group_fault, e.what());
      } catch (...) {
        transport->fault(r, Errc::group_fault, "unknown exception");
      }
      transport->depart(r);
    });
  }
  for (auto& t : threads) t.join();
  if (auto f = transport->fault_info()) throw GroupFault(f->origin, f->cause, f->message);
}

}  // namespace detail
}  // namespace pmdio
