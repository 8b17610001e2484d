//! Integer-tick clock, event queue, TDMA channel and the completion-time
//! arithmetic of both learning modes.
//!
//! Time is always an exact number of ticks. Uploads and downloads share one
//! channel; computation runs concurrently with any transfer.

mod channel;
mod queue;
mod timeline;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use channel::{Channel, ChannelUse, GrantDecision, PendingRequest, TransferKind};
pub use queue::EventQueue;
pub use timeline::{sfl_round, AsyncTimeline, GrantPolicy, TrunkOrder, Upload};

pub type Ticks = u64;
pub type ClientId = usize;

/// Static timing facts of one client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub client_id: ClientId,
    /// Ticks for one local epoch.
    pub compute_time: Ticks,
    pub upload_time: Ticks,
    pub download_time: Ticks,
    pub local_epochs: u32,
}

impl ClientProfile {
    /// Duration of one local-training pass of `local_epochs` epochs.
    pub fn pass_time(&self) -> Ticks {
        self.compute_time * Ticks::from(self.local_epochs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.compute_time == 0 || self.upload_time == 0 || self.download_time == 0 {
            return Err(Error::Config(format!(
                "client {}: all times must be positive",
                self.client_id
            )));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config(format!(
                "client {}: local epochs must be at least 1",
                self.client_id
            )));
        }
        Ok(())
    }
}

pub(crate) fn validate_profiles(profiles: &[ClientProfile]) -> Result<()> {
    if profiles.is_empty() {
        return Err(Error::Config("no clients".into()));
    }
    for (i, p) in profiles.iter().enumerate() {
        if p.client_id != i {
            return Err(Error::Config(format!(
                "profile {i} carries client id {}",
                p.client_id
            )));
        }
        p.validate()?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    UploadDone,
    DownloadDone,
    ComputeDone,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::UploadDone => "UploadDone",
            EventKind::DownloadDone => "DownloadDone",
            EventKind::ComputeDone => "ComputeDone",
        })
    }
}

/// Events order by time, then kind (uploads before downloads before
/// computations), then client id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: Ticks,
    pub kind: EventKind,
    pub client_id: ClientId,
}

impl SimEvent {
    /// Tab-separated trace line: `time  kind  client_id`.
    pub fn trace_line(&self) -> String {
        format!("{}\t{}\t{}", self.time, self.kind, self.client_id)
    }
}

/// One synchronous round under TDMA: a broadcast download, computation until
/// the slowest client finishes, then `clients` sequential uploads.
pub fn sfl_round_time(clients: usize, slowest_compute: Ticks, upload: Ticks, download: Ticks) -> Ticks {
    download + slowest_compute + clients as Ticks * upload
}

/// Completion window of one asynchronous trunk when the fastest client needs
/// `compute` ticks and the slowest `slowdown * compute`: every client uploads
/// once and receives the aggregate back.
pub fn afl_trunk_time_bounds(
    clients: usize,
    compute: Ticks,
    slowdown: u64,
    upload: Ticks,
    download: Ticks,
) -> Result<(Ticks, Ticks)> {
    if slowdown < 1 {
        return Err(Error::Config("slowdown factor must be at least 1".into()));
    }
    let m = clients as Ticks;
    let comm = m * download + m * upload;
    Ok((comm + compute, comm + slowdown * compute))
}
