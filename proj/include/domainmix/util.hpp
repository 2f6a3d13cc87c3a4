#pragma once

#include <functional>

namespace domainmix {

// Threads available for data-parallel loops. 1 unless the DOMAINMIX_THREADS
// environment variable asks for more (capped at hardware concurrency).
int worker_threads();

// Runs fn(i) for i in [0, n). Work items must write to disjoint locations;
// results do not depend on the thread count.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace domainmix
