#include "lindbladiff/instrumentation.hpp"

namespace lindbladiff {
namespace {

std::atomic<std::uint64_t> g_forward{0};
std::atomic<std::uint64_t> g_adjoint{0};
std::atomic<std::uint64_t> g_replay{0};
std::atomic<std::uint64_t> g_tangent{0};

}  // namespace

CallCounts call_counts() noexcept {
  return {g_forward.load(), g_adjoint.load(), g_replay.load(), g_tangent.load()};
}

namespace detail {
void count_forward_integration() noexcept { g_forward.fetch_add(1, std::memory_order_relaxed); }
void count_adjoint_pass() noexcept { g_adjoint.fetch_add(1, std::memory_order_relaxed); }
void count_segment_replay() noexcept { g_replay.fetch_add(1, std::memory_order_relaxed); }
void count_tangent_integration() noexcept { g_tangent.fetch_add(1, std::memory_order_relaxed); }
}  // namespace detail

}  // namespace lindbladiff
