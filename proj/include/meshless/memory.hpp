#pragma once

#include <sys/resource.h>

namespace meshless {

/// Bytes the kernel reports as available to new allocations, or a negative
/// value when unknown.
double available_memory_bytes();

/// Limits the address space to its current size plus 90% of the available
/// memory while alive, so oversized allocations throw instead of inviting
/// the OOM killer. Never loosens an existing tighter limit; a no-op where
/// the limits cannot be read.
class AddressSpaceCap {
 public:
  AddressSpaceCap();
  ~AddressSpaceCap();
  AddressSpaceCap(const AddressSpaceCap&) = delete;
  AddressSpaceCap& operator=(const AddressSpaceCap&) = delete;

 private:
  rlimit saved_{};
  bool active_ = false;
};

}  // namespace meshless
