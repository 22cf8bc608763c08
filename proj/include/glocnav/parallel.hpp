#pragma once

namespace glocnav {

// Worker-pool width for OpenMP regions. Resolved once from GLOCNAV_THREADS
// (falls back to the OpenMP default when unset or invalid).
int worker_threads();

// Force a thread count programmatically; 0 restores the environment value.
void set_worker_threads(int n);

// When true, the dense kernels take the serial reference path instead of the
// OpenMP one. Used by the equivalence tests and the benchmark.
bool use_serial_kernels();
void set_use_serial_kernels(bool on);

}  // namespace glocnav
