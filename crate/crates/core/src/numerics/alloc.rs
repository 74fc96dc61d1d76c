//! Allocator tuning for tape-heavy workloads.
//!
//! Every forward/backward pass allocates and frees many multi-megabyte
//! buffers. With glibc defaults those go through `mmap`/`munmap`, so each
//! pass pays a page fault per page touched. Keeping freed memory in the heap
//! roughly halves the cost of elementwise ops in sandboxed environments.

use std::sync::Once;

static TUNE: Once = Once::new();

/// Asks the allocator to serve large buffers from the heap and never trim
/// it. Idempotent; a no-op off glibc.
pub fn retain_freed_memory() {
    TUNE.call_once(|| {
        #[cfg(all(target_os = "linux", target_env = "gnu"))]
        // SAFETY: mallopt only adjusts allocator tunables and is called once,
        // before any concurrent work is started by this crate.
        unsafe {
            // 32 MiB is the largest mmap threshold glibc accepts on 64-bit.
            libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
            libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
        }
    });
}
