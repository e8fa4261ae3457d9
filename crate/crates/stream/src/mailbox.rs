use std::sync::{Condvar, Mutex};
use std::time::Duration;

/// Single-value mailbox: `put` replaces whatever is waiting, `take` blocks
/// until a value arrives or the mailbox is closed.
#[derive(Debug)]
pub struct Latest<T> {
    state: Mutex<State<T>>,
    cv: Condvar,
}

#[derive(Debug)]
struct State<T> {
    value: Option<T>,
    closed: bool,
    replaced: u64,
}

impl<T> Default for Latest<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> Latest<T> {
    pub fn new() -> Self {
        Self { state: Mutex::new(State { value: None, closed: false, replaced: 0 }), cv: Condvar::new() }
    }

    /// Stores `v`, dropping any unconsumed value. Returns true if one was dropped.
    pub fn put(&self, v: T) -> bool {
        let mut s = self.state.lock().unwrap();
        let dropped = s.value.replace(v).is_some();
        if dropped {
            s.replaced += 1;
        }
        self.cv.notify_all();
        dropped
    }

    /// Stores `v` only when nothing is waiting.
    pub fn put_if_empty(&self, v: T) -> bool {
        let mut s = self.state.lock().unwrap();
        if s.value.is_some() {
            return false;
        }
        s.value = Some(v);
        self.cv.notify_all();
        true
    }

    /// Blocks for the next value; `None` once closed and drained.
    pub fn take(&self) -> Option<T> {
        let mut s = self.state.lock().unwrap();
        loop {
            if let Some(v) = s.value.take() {
                return Some(v);
            }
            if s.closed {
                return None;
            }
            s = self.cv.wait(s).unwrap();
        }
    }

    pub fn take_timeout(&self, timeout: Duration) -> Option<T> {
        let s = self.state.lock().unwrap();
        let (mut s, _) = self.cv.wait_timeout_while(s, timeout, |s| s.value.is_none() && !s.closed).unwrap();
        s.value.take()
    }

    pub fn try_take(&self) -> Option<T> {
        self.state.lock().unwrap().value.take()
    }

    pub fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.cv.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.state.lock().unwrap().closed
    }

    /// Values overwritten before anyone took them.
    pub fn replaced(&self) -> u64 {
        self.state.lock().unwrap().replaced
    }
}
