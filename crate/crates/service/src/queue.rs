//! Outbound frame queue shared by the control thread and the socket writer.
//!
//! Pushing never blocks. Past capacity the oldest droppable frame is
//! discarded; safety and error frames are always kept.

use std::collections::VecDeque;
use std::sync::Mutex;

use tokio::sync::Notify;

use crate::protocol::{Outbound, OutboundMsg, PROTOCOL_VERSION};

#[derive(Debug)]
struct Inner {
    frames: VecDeque<OutboundMsg>,
    next_seq: u64,
    dropped: u64,
    closed: bool,
}

#[derive(Debug)]
pub struct OutboundQueue {
    capacity: usize,
    inner: Mutex<Inner>,
    notify: Notify,
}

impl OutboundQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            inner: Mutex::new(Inner {
                frames: VecDeque::new(),
                next_seq: 0,
                dropped: 0,
                closed: false,
            }),
            notify: Notify::new(),
        }
    }

    pub fn push(&self, tick: u64, body: Outbound) {
        let mut g = self.inner.lock().expect("queue lock");
        let seq = g.next_seq;
        g.next_seq += 1;
        g.frames.push_back(OutboundMsg {
            version: PROTOCOL_VERSION,
            seq,
            tick,
            body,
        });
        while g.frames.len() > self.capacity {
            match g.frames.iter().position(|f| f.body.droppable()) {
                Some(i) => {
                    g.frames.remove(i);
                    g.dropped += 1;
                }
                None => break,
            }
        }
        drop(g);
        self.notify.notify_one();
    }

    pub fn try_pop(&self) -> Option<OutboundMsg> {
        self.inner.lock().expect("queue lock").frames.pop_front()
    }

    /// Waits for the next frame. `None` once closed and drained.
    pub async fn pop(&self) -> Option<OutboundMsg> {
        loop {
            let notified = self.notify.notified();
            {
                let mut g = self.inner.lock().expect("queue lock");
                if let Some(f) = g.frames.pop_front() {
                    return Some(f);
                }
                if g.closed {
                    return None;
                }
            }
            notified.await;
        }
    }

    pub fn close(&self) {
        self.inner.lock().expect("queue lock").closed = true;
        self.notify.notify_waiters();
        self.notify.notify_one();
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("queue lock").frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Frames discarded under backpressure so far.
    pub fn dropped(&self) -> u64 {
        self.inner.lock().expect("queue lock").dropped
    }
}
