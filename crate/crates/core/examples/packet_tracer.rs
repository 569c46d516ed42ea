//! Send one device's stream through a lossy gateway and reconstruct the loss
//! rate from sequence-number gaps alone.

use palmwatch::fieldsim::{generate_stream, packet_accounting, Gateway, GatewayIdentity, PacketTally, SignalModel, StreamSpec};
use palmwatch::model::DeviceId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let id = DeviceId::new("palm-9");
    let identity = GatewayIdentity {
        gateway_id: "gw-1".into(),
        farm_id: "farm-a".into(),
        cluster_id: "c1".into(),
    };
    let mut gateway = Gateway::new(identity, 0.1, 99)?;
    gateway.register(id.clone());

    let stream = generate_stream(&id, &SignalModel::inside(), 600.0, 3, &StreamSpec::default());
    let mut tally = PacketTally::default();
    let mut dropped = 0;
    for batch in stream.chunks(100) {
        let out = gateway.forward(batch.to_vec());
        dropped += out.dropped;
        for s in &out.to_cloud {
            tally.observe(s.seq);
        }
    }

    let stats = tally.stats().expect("something arrived");
    println!(
        "sent {} dropped {} -> expected {} received {} lost {:.2}%",
        stream.len(),
        dropped,
        stats.expected,
        stats.received,
        stats.lost_pct
    );
    assert_eq!(packet_accounting([1, 2, 4, 5]).map(|p| p.lost_pct), Some(20.0));
    Ok(())
}
