#include "glocnav/parallel.hpp"

#include <cstdlib>

#ifdef GLOCNAV_HAVE_OPENMP
#include <omp.h>
#endif

namespace glocnav {

namespace {
int g_forced_threads = 0;
bool g_serial_kernels = false;

int env_threads() {
    const char* s = std::getenv("GLOCNAV_THREADS");
    if (!s) return 0;
    int n = std::atoi(s);
    return n > 0 ? n : 0;
}
}  // namespace

int worker_threads() {
    if (g_forced_threads > 0) return g_forced_threads;
    int n = env_threads();
    if (n > 0) return n;
#ifdef GLOCNAV_HAVE_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_worker_threads(int n) { g_forced_threads = n; }

bool use_serial_kernels() { return g_serial_kernels; }
void set_use_serial_kernels(bool on) { g_serial_kernels = on; }

}  // namespace glocnav
