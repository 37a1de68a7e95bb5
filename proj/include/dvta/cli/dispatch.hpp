#pragma once

#include <cstddef>

namespace dvta {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the dvta tool. Data goes to files or stdout, logs to
/// stderr. Returns 0 on success, 1 for usage or validation errors and 2 for
/// runtime failures.
int dispatch(int argc, const char* const* argv);

/// `flag` when positive, else DVTA_THREADS, else 1. Throws ValidationError
/// for a malformed environment value.
std::size_t resolve_threads(int flag);

/// Raises glibc's mmap/trim thresholds so per-step matrix buffers are reused
/// from the heap. No-op on other C libraries.
void tune_allocator();

}  // namespace dvta
