#pragma once

// Rank groups and the collectives the writer needs.
//
// Every collective is built on one primitive, Transport::exchange, which
// deposits a contribution from each member and hands every member the full
// vector once all have arrived. Contributions carry the collective kind and a
// per-member call sequence number, so members that disagree about which
// collective they are in fail with CollectiveMismatch instead of deadlocking
// or mixing values.

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "pmdio/error.hpp"

namespace pmdio {

using Bytes = std::vector<std::byte>;

enum class CollectiveKind : std::uint32_t {
  barrier = 1,
  prefix_sum = 2,
  reduce_sum = 3,
  gather = 4,
  gather_bytes = 5,
  agree = 6,
};

struct Contribution {
  CollectiveKind kind = CollectiveKind::barrier;
  std::uint64_t sequence = 0;
  std::uint64_t value = 0;
  Bytes bytes;
};

using Gathered = std::shared_ptr<const std::vector<Contribution>>;

// A fault that brought the group down. `origin` is the rank that failed first
// and `cause` the error class it failed with.
class GroupFault : public Error {
 public:
  GroupFault(int origin, Errc cause, const std::string& message)
      : Error(Errc::group_fault, "rank " + std::to_string(origin) + ": " + message),
        origin_(origin),
        cause_(cause),
        detail_(message) {}

  int origin() const noexcept { return origin_; }
  Errc cause() const noexcept { return cause_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  int origin_;
  Errc cause_;
  std::string detail_;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual int size() const noexcept = 0;
  virtual Gathered exchange(int rank, Contribution contribution) = 0;
};

// Threads-in-one-process transport. Members block in exchange() until every
// member has arrived, a member faults, or a member leaves the group while
// others are still inside a collective.
class InProcessTransport final : public Transport {
 public:
  explicit InProcessTransport(int size);

  int size() const noexcept override { return size_; }
  Gathered exchange(int rank, Contribution contribution) override;

  // Marks the group faulted; waiting members unwind with GroupFault.
  void fault(int rank, Errc cause, const std::string& message);
  void depart(int rank);

  struct FaultInfo {
    int origin;
    Errc cause;
    std::string message;
  };
  std::optional<FaultInfo> fault_info() const;

 private:
  [[noreturn]] void unwind_locked() const;

  const int size_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<Contribution> pending_;
  Gathered result_;
  int arrived_ = 0;
  int departed_ = 0;
  std::uint64_t generation_ = 0;
  std::optional<FaultInfo> fault_;
};

class RankGroup {
 public:
  RankGroup(std::shared_ptr<Transport> transport, int rank);

  int rank() const noexcept { return rank_; }
  int size() const noexcept { return transport_->size(); }

  // Sum of `local` over all ranks strictly below the caller.
  std::uint64_t exclusive_prefix_sum(std::uint64_t local);
  std::uint64_t all_reduce_sum(std::uint64_t local);
  void barrier();
  std::vector<std::uint64_t> all_gather(std::uint64_t local);
  Gathered all_gather_bytes(Bytes local);

  // Fails with CollectiveMismatch on every member unless all members passed
  // the same digest.
  void agree(std::uint64_t digest, std::string_view what);

  std::uint64_t collective_count() const noexcept { return sequence_; }

 private:
  Gathered exchange(CollectiveKind kind, std::uint64_t value, Bytes bytes = {});

  std::shared_ptr<Transport> transport_;
  int rank_;
  std::uint64_t sequence_ = 0;
};

namespace detail {
// Runs program(rank_group) on `size` threads; throws GroupFault if any rank
// failed.
void run_group(int size, const std::function<void(RankGroup&)>& program);
}  // namespace detail

template <class Program>
auto spawn_group(int size, Program&& program) {
  using Result = std::invoke_result_t<Program&, RankGroup&>;
  if constexpr (std::is_void_v<Result>) {
    detail::run_group(size, [&](RankGroup& g) { program(g); });
  } else {
    std::vector<std::optional<Result>> slots(size > 0 ? static_cast<std::size_t>(size) : 0);
    detail::run_group(size, [&](RankGroup& g) { slots[static_cast<std::size_t>(g.rank())].emplace(program(g)); });
    std::vector<Result> results;
    results.reserve(slots.size());
    for (auto& s : slots) results.push_back(std::move(*s));
    return results;
  }
}

}  // namespace pmdio
