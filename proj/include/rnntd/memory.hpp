#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <vector>

namespace rnntd {

namespace memory_detail {
struct Counters {
  std::int64_t live = 0;
  std::int64_t peak = 0;
};
Counters& counters();
void on_allocate(std::size_t bytes);
void on_deallocate(std::size_t bytes);
}  // namespace memory_detail

// Allocator that reports every allocation to a thread-local live/peak
// counter. Lattice storage uses it so tests can measure how much auxiliary
// memory a loss evaluation materializes.
template <class T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    memory_detail::on_allocate(n * sizeof(T));
    return static_cast<T*>(::operator new(n * sizeof(T)));
  }
  void deallocate(T* p, std::size_t n) noexcept {
    memory_detail::on_deallocate(n * sizeof(T));
    ::operator delete(p);
  }

  template <class U>
  bool operator==(const TrackingAllocator<U>&) const noexcept {
    return true;
  }
};

template <class T>
using tracked_vector = std::vector<T, TrackingAllocator<T>>;

// Scoped high-water mark of tracked allocations made on this thread since
// construction. peak_bytes() excludes whatever was live before the scope.
class MemoryMeter {
 public:
  MemoryMeter();
  ~MemoryMeter();
  MemoryMeter(const MemoryMeter&) = delete;
  MemoryMeter& operator=(const MemoryMeter&) = delete;

  std::int64_t peak_bytes() const;

 private:
  std::int64_t baseline_;
  std::int64_t saved_peak_;
};

}  // namespace rnntd
