use std::sync::Arc;

use parking_lot::{Condvar, Mutex};

/// Counting semaphore bounding in-flight requests to one backend.
#[derive(Debug)]
pub(crate) struct Limiter {
    max: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

pub(crate) struct Permit(Arc<Limiter>);

impl Limiter {
    pub(crate) fn new(max: usize) -> Arc<Self> {
        Arc::new(Self { max: max.max(1), in_use: Mutex::new(0), freed: Condvar::new() })
    }

    pub(crate) fn acquire(self: &Arc<Self>) -> Permit {
        let mut in_use = self.in_use.lock();
        while *in_use >= self.max {
            self.freed.wait(&mut in_use);
        }
        *in_use += 1;
        Permit(Arc::clone(self))
    }
}

impl Drop for Permit {
    fn drop(&mut self) {
        *self.0.in_use.lock() -= 1;
        self.0.freed.notify_one();
    }
}
