#include "domainmix/util.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace domainmix {

int worker_threads() {
  static const int cached = [] {
    const char* env = std::getenv("DOMAINMIX_THREADS");
    if (env == nullptr) return 1;
    const int requested = std::atoi(env);
    if (requested <= 1) return 1;
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    return hw > 0 ? std::min(requested, hw) : requested;
  }();
  return cached;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  const int workers = std::min(worker_threads(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace domainmix
