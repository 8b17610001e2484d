use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{SimEvent, Ticks};
use crate::error::{Error, Result};

/// Min-queue of pending events under the [`SimEvent`] ordering, with a clock
/// that never moves backwards.
#[derive(Debug, Default, Clone)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<SimEvent>>,
    now: Ticks,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Empty queue whose clock starts at `now`.
    pub fn starting_at(now: Ticks) -> Self {
        EventQueue { heap: BinaryHeap::new(), now }
    }

    pub fn now(&self) -> Ticks {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, event: SimEvent) -> Result<()> {
        if event.time < self.now {
            return Err(Error::Scheduler(format!(
                "event at {} scheduled in the past (now {})",
                event.time, self.now
            )));
        }
        self.heap.push(Reverse(event));
        Ok(())
    }

    pub fn peek(&self) -> Option<&SimEvent> {
        self.heap.peek().map(|Reverse(e)| e)
    }

    /// Pops the earliest event; `None` means the simulation is complete.
    pub fn advance(&mut self) -> Option<SimEvent> {
        let Reverse(event) = self.heap.pop()?;
        self.now = event.time;
        Some(event)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timing::EventKind;
    use rand::Rng;

    fn ev(time: Ticks, kind: EventKind, client_id: usize) -> SimEvent {
        SimEvent { time, kind, client_id }
    }

    #[test]
    fn tie_pops_upload_first() {
        let mut q = EventQueue::new();
        q.schedule(ev(3, EventKind::ComputeDone, 1)).unwrap();
        q.schedule(ev(3, EventKind::UploadDone, 2)).unwrap();
        assert_eq!(q.advance().unwrap().kind, EventKind::UploadDone);
        assert_eq!(q.advance().unwrap().kind, EventKind::ComputeDone);
        assert!(q.advance().is_none());
    }

    #[test]
    fn single_event() {
        let mut q = EventQueue::new();
        let e = ev(7, EventKind::DownloadDone, 0);
        q.schedule(e).unwrap();
        assert_eq!(q.advance(), Some(e));
        assert_eq!(q.now(), 7);
    }

    #[test]
    fn past_events_rejected() {
        let mut q = EventQueue::new();
        q.schedule(ev(5, EventKind::ComputeDone, 0)).unwrap();
        q.advance();
        assert!(q.schedule(ev(4, EventKind::ComputeDone, 0)).is_err());
    }

    #[test]
    fn random_events_pop_in_sorted_order() {
        let mut rng = crate::seed::rng(17);
        let kinds = [EventKind::UploadDone, EventKind::DownloadDone, EventKind::ComputeDone];
        let events: Vec<SimEvent> = (0..1000)
            .map(|_| ev(rng.random_range(0..50), kinds[rng.random_range(0..3)], rng.random_range(0..40)))
            .collect();
        let mut q = EventQueue::new();
        for e in &events {
            q.schedule(*e).unwrap();
        }
        let mut expected = events.clone();
        expected.sort_by_key(|e| (e.time, e.kind as u8, e.client_id));
        let popped: Vec<SimEvent> = std::iter::from_fn(|| q.advance()).collect();
        assert_eq!(popped, expected);
    }
}
