#include "rnntd/memory.hpp"

#include <algorithm>

namespace rnntd {
namespace memory_detail {

Counters& counters() {
  thread_local Counters c;
  return c;
}

void on_allocate(std::size_t bytes) {
  auto& c = counters();
  c.live += static_cast<std::int64_t>(bytes);
  c.peak = std::max(c.peak, c.live);
}

void on_deallocate(std::size_t bytes) {
  counters().live -= static_cast<std::int64_t>(bytes);
}

}  // namespace memory_detail

MemoryMeter::MemoryMeter() {
  auto& c = memory_detail::counters();
  baseline_ = c.live;
  saved_peak_ = c.peak;
  c.peak = c.live;
}

MemoryMeter::~MemoryMeter() {
  auto& c = memory_detail::counters();
  c.peak = std::max(c.peak, saved_peak_);
}

std::int64_t MemoryMeter::peak_bytes() const {
  return memory_detail::counters().peak - baseline_;
}

}  // namespace rnntd
