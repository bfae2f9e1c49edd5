use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use hintcolor::image::{ImageTensor, InputMode};
use hintcolor::inference::blank_frame;
use hintcolor::Result;

/// Per-client colorization state. `prev_frame` carries the last output.
#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub mode: InputMode,
    pub height: usize,
    pub width: usize,
    pub prev_frame: ImageTensor<f32>,
    pub frame_index: u64,
    pub created_at: Instant,
}

impl Session {
    pub fn new(id: String, mode: InputMode, height: usize, width: usize) -> Result<Self> {
        Ok(Self {
            id,
            mode,
            height,
            width,
            prev_frame: blank_frame(height, width)?,
            frame_index: 0,
            created_at: Instant::now(),
        })
    }

    pub fn reset(&mut self) -> Result<()> {
        self.prev_frame = blank_frame(self.height, self.width)?;
        self.frame_index = 0;
        Ok(())
    }
}

/// A session behind its own async lock, so calls on one session are
/// serialized while different sessions run concurrently.
#[derive(Debug)]
pub struct SessionSlot {
    pub state: tokio::sync::Mutex<Session>,
    last_used: Mutex<Instant>,
}

impl SessionSlot {
    fn touch(&self, now: Instant) {
        *self.last_used.lock().unwrap() = now;
    }

    fn idle_since(&self, now: Instant) -> Duration {
        now.saturating_duration_since(*self.last_used.lock().unwrap())
    }
}

/// Live sessions with idle expiry.
#[derive(Debug)]
pub struct SessionRegistry {
    ttl: Duration,
    slots: Mutex<HashMap<String, Arc<SessionSlot>>>,
}

impl SessionRegistry {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            slots: Mutex::new(HashMap::new()),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn create(&self, mode: InputMode, height: usize, width: usize) -> Result<String> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::new(id.clone(), mode, height, width)?;
        let now = Instant::now();
        let slot = Arc::new(SessionSlot {
            state: tokio::sync::Mutex::new(session),
            last_used: Mutex::new(now),
        });
        let mut slots = self.slots.lock().unwrap();
        slots.retain(|_, s| s.idle_since(now) < self.ttl);
        slots.insert(id.clone(), slot);
        Ok(id)
    }

    /// Live slot for `id`, refreshing its idle timer. Expired sessions are
    /// dropped on sight.
    pub fn get(&self, id: &str) -> Option<Arc<SessionSlot>> {
        let now = Instant::now();
        let mut slots = self.slots.lock().unwrap();
        let slot = slots.get(id)?.clone();
        if slot.idle_since(now) >= self.ttl {
            slots.remove(id);
            return None;
        }
        slot.touch(now);
        Some(slot)
    }

    /// Drops every session idle for at least the TTL; returns how many.
    pub fn sweep(&self) -> usize {
        let now = Instant::now();
        let mut slots = self.slots.lock().unwrap();
        let before = slots.len();
        slots.retain(|_, s| s.idle_since(now) < self.ttl);
        before - slots.len()
    }

    pub fn len(&self) -> usize {
        self.slots.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
