#pragma once

#include <thread>

namespace pwcc {

// workers <= 0 means "use all logical cores".
inline int resolve_workers(int workers) {
  if (workers > 0) return workers;
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

}  // namespace pwcc
