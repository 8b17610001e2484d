use super::{ClientId, Ticks};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingRequest {
    pub client_id: ClientId,
    pub request_time: Ticks,
    /// Slot of the client's previous upload, 0 if it never uploaded.
    pub last_upload_slot: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferKind {
    Upload,
    Download,
}

/// One interval during which the channel carried a transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelUse {
    pub client_id: ClientId,
    pub kind: TransferKind,
    pub start: Ticks,
    pub end: Ticks,
}

/// Record of one upload grant and the requests that competed for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrantDecision {
    pub time: Ticks,
    pub slot: u64,
    pub granted: ClientId,
    pub candidates: Vec<PendingRequest>,
}

/// Single TDMA channel shared by uploads and downloads. Upload slots are
/// numbered from 1 in grant order.
#[derive(Debug, Clone, Default)]
pub struct Channel {
    busy_until: Ticks,
    pending: Vec<PendingRequest>,
    slots_granted: u64,
    audit: bool,
    uses: Vec<ChannelUse>,
    decisions: Vec<GrantDecision>,
}

impl Channel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps every transfer interval and grant decision for later inspection.
    pub fn with_audit(mut self) -> Self {
        self.audit = true;
        self
    }

    pub fn busy_until(&self) -> Ticks {
        self.busy_until
    }

    pub fn is_free(&self, now: Ticks) -> bool {
        self.busy_until <= now
    }

    /// Index the next granted upload slot will carry.
    pub fn current_slot(&self) -> u64 {
        self.slots_granted + 1
    }

    pub fn pending(&self) -> &[PendingRequest] {
        &self.pending
    }

    pub fn is_pending(&self, client_id: ClientId) -> bool {
        self.pending.iter().any(|p| p.client_id == client_id)
    }

    pub fn uses(&self) -> &[ChannelUse] {
        &self.uses
    }

    pub fn decisions(&self) -> &[GrantDecision] {
        &self.decisions
    }

    pub fn request(&mut self, client_id: ClientId, now: Ticks, last_upload_slot: u64) -> Result<()> {
        if self.is_pending(client_id) {
            return Err(Error::Scheduler(format!(
                "client {client_id} requested a slot twice"
            )));
        }
        self.pending.push(PendingRequest {
            client_id,
            request_time: now,
            last_upload_slot,
        });
        Ok(())
    }

    /// Picks the next uploader if the channel is free: earliest request,
    /// then the client whose last upload is furthest behind the current
    /// slot, then the lowest id. Returns the grant and its slot index; the
    /// caller must [`occupy`](Self::occupy) the channel for the transfer.
    pub fn grant_next(&mut self, now: Ticks) -> Option<(PendingRequest, u64)> {
        if !self.is_free(now) || self.pending.is_empty() {
            return None;
        }
        let slot = self.current_slot();
        let staleness = |p: &PendingRequest| slot.saturating_sub(p.last_upload_slot);
        let best = (0..self.pending.len()).min_by(|&a, &b| {
            let (pa, pb) = (&self.pending[a], &self.pending[b]);
            pa.request_time
                .cmp(&pb.request_time)
                .then_with(|| staleness(pb).cmp(&staleness(pa)))
                .then_with(|| pa.client_id.cmp(&pb.client_id))
        })?;
        Some(self.take(best, now))
    }

    /// Grants the slot to a specific pending client, used by fixed-order
    /// schedules. `None` if the channel is busy or the client has not asked.
    pub fn grant_client(&mut self, client_id: ClientId, now: Ticks) -> Option<(PendingRequest, u64)> {
        if !self.is_free(now) {
            return None;
        }
        let idx = self.pending.iter().position(|p| p.client_id == client_id)?;
        Some(self.take(idx, now))
    }

    fn take(&mut self, idx: usize, now: Ticks) -> (PendingRequest, u64) {
        let slot = self.current_slot();
        if self.audit {
            self.decisions.push(GrantDecision {
                time: now,
                slot,
                granted: self.pending[idx].client_id,
                candidates: self.pending.clone(),
            });
        }
        self.slots_granted += 1;
        (self.pending.remove(idx), slot)
    }

    /// Marks the channel busy for `[start, start + duration)`.
    pub fn occupy(&mut self, client_id: ClientId, kind: TransferKind, start: Ticks, duration: Ticks) -> Result<Ticks> {
        if start < self.busy_until {
            return Err(Error::Scheduler(format!(
                "transfer for client {client_id} at {start} overlaps a transfer ending at {}",
                self.busy_until
            )));
        }
        let end = start + duration;
        self.busy_until = end;
        if self.audit {
            self.uses.push(ChannelUse {
                client_id,
                kind,
                start,
                end,
            });
        }
        Ok(end)
    }
}
