#include "radgs/parallel.hpp"

#include <cstdlib>
#include <string>

#include <omp.h>

#include "radgs/error.hpp"

namespace radgs {

void set_num_threads(int n) {
    require(n >= 1, ErrorKind::InvalidParameter, "thread count must be at least 1");
    omp_set_num_threads(n);
}

int num_threads() { return omp_get_max_threads(); }

int default_num_threads() {
    if (const char* env = std::getenv(kThreadsEnvVar)) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
    }
    return omp_get_num_procs();
}

} // namespace radgs
