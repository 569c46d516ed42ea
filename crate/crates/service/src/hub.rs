//! Fan-out of persisted events to live stream subscribers.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use palmwatch::detector::HealthAssessment;
use palmwatch::model::{AccelSample, DeviceId};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamEvent {
    Reading(AccelSample),
    Assessment(HealthAssessment),
}

impl StreamEvent {
    pub fn device_id(&self) -> &DeviceId {
        match self {
            StreamEvent::Reading(s) => &s.device_id,
            StreamEvent::Assessment(a) => &a.device_id,
        }
    }
}

struct Subscriber {
    devices: HashSet<DeviceId>,
    tx: mpsc::UnboundedSender<StreamEvent>,
}

/// Routes events to subscribers of their device.
///
/// Publishing never blocks: each subscriber has its own unbounded queue. The
/// store publishes while holding the device's write lock, so every subscriber
/// sees a device's events in storage order.
#[derive(Default)]
pub struct Hub {
    next_id: AtomicU64,
    subscribers: Mutex<HashMap<u64, Subscriber>>,
}

impl Hub {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn subscribe(self: &Arc<Self>, devices: impl IntoIterator<Item = DeviceId>) -> Subscription {
        let (tx, rx) = mpsc::unbounded_channel();
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        self.subscribers.lock().expect("hub lock").insert(
            id,
            Subscriber {
                devices: devices.into_iter().collect(),
                tx,
            },
        );
        Subscription {
            id,
            hub: Arc::clone(self),
            rx,
        }
    }

    pub fn publish(&self, event: &StreamEvent) {
        let mut subs = self.subscribers.lock().expect("hub lock");
        subs.retain(|_, s| {
            if s.devices.contains(event.device_id()) {
                s.tx.send(event.clone()).is_ok()
            } else {
                !s.tx.is_closed()
            }
        });
    }

    pub fn subscriber_count(&self) -> usize {
        self.subscribers.lock().expect("hub lock").len()
    }
}

/// A live subscription; dropping it unsubscribes.
pub struct Subscription {
    id: u64,
    hub: Arc<Hub>,
    rx: mpsc::UnboundedReceiver<StreamEvent>,
}

impl Subscription {
    pub async fn recv(&mut self) -> Option<StreamEvent> {
        self.rx.recv().await
    }

    pub fn try_recv(&mut self) -> Option<StreamEvent> {
        self.rx.try_recv().ok()
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        if let Ok(mut subs) = self.hub.subscribers.lock() {
            subs.remove(&self.id);
        }
    }
}
