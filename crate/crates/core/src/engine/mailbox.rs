//! Capacity-one latest-wins hand-off between two threads.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::Duration;

struct Slot<P> {
    item: Option<(u64, P)>,
    closed: bool,
}

/// Single-slot mailbox. `put` never waits for the consumer: an unconsumed
/// item is overwritten and counted as dropped.
pub struct Mailbox<P> {
    slot: Mutex<Slot<P>>,
    ready: Condvar,
    dropped: AtomicU64,
}

impl<P> Default for Mailbox<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Mailbox<P> {
    pub fn new() -> Self {
        Self {
            slot: Mutex::new(Slot { item: None, closed: false }),
            ready: Condvar::new(),
            dropped: AtomicU64::new(0),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Slot<P>> {
        // A panicking peer must not wedge the other side.
        self.slot.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Stores `item`, replacing any unconsumed one. Returns `true` if an item
    /// was overwritten. Puts after `close` are discarded.
    pub fn put(&self, seq: u64, item: P) -> bool {
        let mut slot = self.lock();
        if slot.closed {
            return false;
        }
        let overwrote = slot.item.replace((seq, item)).is_some();
        if overwrote {
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        drop(slot);
        self.ready.notify_one();
        overwrote
    }

    /// Takes the current item without waiting.
    pub fn try_take(&self) -> Option<(u64, P)> {
        self.lock().item.take()
    }

    /// Waits for an item. Returns `None` once the mailbox is closed and empty.
    pub fn take(&self) -> Option<(u64, P)> {
        let mut slot = self.lock();
        loop {
            if let Some(item) = slot.item.take() {
                return Some(item);
            }
            if slot.closed {
                return None;
            }
            slot = self.ready.wait(slot).unwrap_or_else(|e| e.into_inner());
        }
    }

    /// Like [`take`](Self::take) but gives up after `timeout`.
    pub fn take_timeout(&self, timeout: Duration) -> Option<(u64, P)> {
        let slot = self.lock();
        let (mut slot, _) = self
            .ready
            .wait_timeout_while(slot, timeout, |s| s.item.is_none() && !s.closed)
            .unwrap_or_else(|e| e.into_inner());
        slot.item.take()
    }

    /// Wakes all waiters; later puts are ignored. A pending item can still be
    /// taken.
    pub fn close(&self) {
        self.lock().closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    /// Items overwritten before being taken.
    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::thread;

    #[test]
    fn latest_wins() {
        let mb = Mailbox::new();
        assert!(!mb.put(1, "a"));
        assert!(mb.put(2, "b"));
        assert!(mb.put(3, "c"));
        assert_eq!(mb.try_take(), Some((3, "c")));
        assert_eq!(mb.try_take(), None);
        assert_eq!(mb.dropped(), 2);
    }

    #[test]
    fn close_wakes_consumer() {
        let mb = Arc::new(Mailbox::<u32>::new());
        let consumer = {
            let mb = mb.clone();
            thread::spawn(move || mb.take())
        };
        thread::sleep(Duration::from_millis(20));
        mb.close();
        assert_eq!(consumer.join().unwrap(), None);
        assert!(!mb.put(1, 5));
    }

    #[test]
    fn pending_item_survives_close() {
        let mb = Mailbox::new();
        mb.put(7, 1u8);
        mb.close();
        assert_eq!(mb.take(), Some((7, 1)));
        assert_eq!(mb.take(), None);
    }

    #[test]
    fn consumer_sees_non_decreasing_sequence() {
        let mb = Arc::new(Mailbox::new());
        let producer = {
            let mb = mb.clone();
            thread::spawn(move || {
                for i in 0..20_000u64 {
                    mb.put(i, i);
                }
                mb.close();
            })
        };
        let mut last = None;
        let mut seen = 0u64;
        while let Some((seq, v)) = mb.take() {
            assert_eq!(seq, v);
            if let Some(prev) = last {
                assert!(seq > prev);
            }
            last = Some(seq);
            seen += 1;
        }
        producer.join().unwrap();
        assert_eq!(last, Some(19_999));
        assert_eq!(seen + mb.dropped(), 20_000);
    }

    #[test]
    fn take_timeout_returns_none_when_empty() {
        let mb = Mailbox::<()>::new();
        assert!(mb.take_timeout(Duration::from_millis(5)).is_none());
    }
}
