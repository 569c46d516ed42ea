use serde::{Deserialize, Serialize};

/// Received-versus-lost packet tally for one device over one range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketStats {
    pub expected: u64,
    pub received: u64,
    pub received_pct: f64,
    pub lost_pct: f64,
}

impl PacketStats {
    fn from_counts(expected: u64, received: u64) -> Self {
        let received_pct = received as f64 / expected as f64 * 100.0;
        Self {
            expected,
            received,
            received_pct,
            lost_pct: 100.0 - received_pct,
        }
    }
}

/// Infers losses from sequence-number gaps. Duplicates count once; `None`
/// when no packet was received in the range.
pub fn packet_accounting<I: IntoIterator<Item = u64>>(seqs: I) -> Option<PacketStats> {
    let mut seqs: Vec<u64> = seqs.into_iter().collect();
    if seqs.is_empty() {
        return None;
    }
    seqs.sort_unstable();
    seqs.dedup();
    let expected = seqs[seqs.len() - 1] - seqs[0] + 1;
    Some(PacketStats::from_counts(expected, seqs.len() as u64))
}

/// Streaming form of [`packet_accounting`] for strictly increasing sequences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PacketTally {
    first: Option<u64>,
    last: u64,
    received: u64,
}

impl PacketTally {
    pub fn observe(&mut self, seq: u64) {
        match self.first {
            None => {
                self.first = Some(seq);
                self.last = seq;
                self.received = 1;
            }
            Some(_) if seq > self.last => {
                self.last = seq;
                self.received += 1;
            }
            // repeats and reorders are ignored; delivery is ordered per device
            Some(_) => {}
        }
    }

    pub fn stats(&self) -> Option<PacketStats> {
        self.first
            .map(|first| PacketStats::from_counts(self.last - first + 1, self.received))
    }
}
