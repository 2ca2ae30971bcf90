//! Versioned try-lock.
//!
//! A single 64-bit word: the even part is the version, the least significant
//! bit is the lock. Locking flips the word from `ver` to `ver + 1`, unlocking
//! from `ver + 1` to `ver + 2`, so every completed critical section advances the
//! version by exactly two and a reader holding an old version can never lock.

use std::sync::atomic::{AtomicU64, Ordering};

/// Number of failed acquisition attempts before a spinning locker starts
/// yielding its time slice.
const SPINS_BEFORE_YIELD: u32 = 64;

#[derive(Debug, Default)]
pub struct VersionedTryLock {
    word: AtomicU64,
}

impl VersionedTryLock {
    /// Unlocked, version 0.
    pub const fn new() -> Self {
        Self {
            word: AtomicU64::new(0),
        }
    }

    /// Current version with the lock bit masked off. Never blocks.
    #[inline]
    pub fn get_version(&self) -> u64 {
        self.word.load(Ordering::Acquire) & !1
    }

    /// Raw word, for tests and debug snapshots.
    #[inline]
    pub fn raw(&self) -> u64 {
        self.word.load(Ordering::Acquire)
    }

    #[inline]
    pub fn is_locked(&self) -> bool {
        self.raw() & 1 == 1
    }

    /// Single CAS from `ver` to `ver + 1`. Fails if the lock is held or the
    /// version moved since `ver` was read.
    #[inline]
    pub fn try_lock_at_version(&self, ver: u64) -> bool {
        debug_assert!(
            ver & 1 == 0,
            "try_lock_at_version called with odd version {ver}"
        );
        self.word
            .compare_exchange(ver, ver + 1, Ordering::Acquire, Ordering::Relaxed)
            .is_ok()
    }

    /// Spins until the lock is taken at whatever version is current.
    pub fn lock_at_current_version(&self) {
        self.lock_at_current_version_or_else(|| {});
    }

    /// Like [`lock_at_current_version`](Self::lock_at_current_version), calling
    /// `on_contention` after every failed attempt.
    pub fn lock_at_current_version_or_else(&self, mut on_contention: impl FnMut()) {
        let mut failures = 0u32;
        loop {
            let ver = self.get_version();
            if self.try_lock_at_version(ver) {
                return;
            }
            on_contention();
            failures = failures.saturating_add(1);
            if failures < SPINS_BEFORE_YIELD {
                std::hint::spin_loop();
            } else {
                std::thread::yield_now();
            }
        }
    }

    /// Releases the lock and advances the version. The caller must hold the
    /// lock; while the word is odd only the holder may change it, so a plain
    /// release store of `word + 1` is enough.
    #[inline]
    pub fn unlock_and_increment_version(&self) {
        let word = self.word.load(Ordering::Relaxed);
        debug_assert!(
            word & 1 == 1,
            "unlock_and_increment_version on an unlocked lock (word = {word})"
        );
        self.word.store(word + 1, Ordering::Release);
    }
}
