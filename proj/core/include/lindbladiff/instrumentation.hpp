#pragma once

#include <atomic>
#include <cstdint>

namespace lindbladiff {

/// Process-wide call counters. Tests take a snapshot before and after a call and compare.
struct CallCounts {
  std::uint64_t forward_integrations = 0;
  std::uint64_t adjoint_passes = 0;
  std::uint64_t segment_replays = 0;
  std::uint64_t tangent_integrations = 0;
};

CallCounts call_counts() noexcept;

namespace detail {
void count_forward_integration() noexcept;
void count_adjoint_pass() noexcept;
void count_segment_replay() noexcept;
void count_tangent_integration() noexcept;
}  // namespace detail

}  // namespace lindbladiff
