#include "meshless/memory.hpp"

#include <fstream>
#include <string>

namespace meshless {

namespace {

/// Value in bytes of a `Key: value kB` line, or a negative value.
double proc_kb_field(const char* path, const std::string& wanted) {
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(wanted, 0) == 0) return std::stod(line.substr(wanted.size())) * 1024.0;
  }
  return -1.0;
}

}  // namespace

double available_memory_bytes() { return proc_kb_field("/proc/meminfo", "MemAvailable:"); }

AddressSpaceCap::AddressSpaceCap() {
  const double available = available_memory_bytes();
  const double mapped = proc_kb_field("/proc/self/status", "VmSize:");
  if (available <= 0.0 || mapped <= 0.0 || getrlimit(RLIMIT_AS, &saved_) != 0) return;
  rlimit capped = saved_;
  const auto limit = static_cast<rlim_t>(mapped + 0.9 * available);
  if (capped.rlim_cur != RLIM_INFINITY && capped.rlim_cur <= limit) return;
  capped.rlim_cur = limit;
  active_ = setrlimit(RLIMIT_AS, &capped) == 0;
}

AddressSpaceCap::~AddressSpaceCap() {
  if (active_) setrlimit(RLIMIT_AS, &saved_);
}

}  // namespace meshless
