#pragma once

#include <cstddef>
#include <new>
#include <vector>

namespace difiv {

// Vectorized reductions peel leading elements until the pointer is
// packet-aligned, so their summation order depends on the buffer address.
// A fixed 64-byte base alignment makes results independent of the heap.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using AlignedVector = std::vector<double, AlignedAllocator<double>>;

}  // namespace difiv
