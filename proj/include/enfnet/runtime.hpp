#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace enfnet {

/// Keeps freed tensor memory inside the process instead of returning it to
/// the OS. Forward/backward passes allocate and release hundreds of MB per
/// step; without this, glibc mmap()s and munmap()s the large blocks and every
/// step pays the fresh-page-fault cost again. Call once at process start.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace enfnet
