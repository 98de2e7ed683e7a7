#pragma once

namespace radgs {

// Environment variable consulted for the default worker count.
inline constexpr const char* kThreadsEnvVar = "RADGS_THREADS";

// Worker count for the data-parallel loops. Results do not depend on it:
// per-worker partials are always reduced in a fixed order.
void set_num_threads(int n);
int num_threads();
// RADGS_THREADS if set and positive, otherwise every available core.
int default_num_threads();

} // namespace radgs
