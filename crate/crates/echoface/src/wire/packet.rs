//! Packet framing: magic, wrapping sequence number, interleaved payload.
//!
//! Layout, little-endian:
//!
//! ```text
//! offset  size  field
//! 0       2     magic "EE"
//! 2       2     seq (u16, wraps mod 65536)
//! 4       1     channels (2)
//! 5       2     payload_len in bytes (even)
//! 7       len   payload: interleaved signed 8-bit samples ch0,ch1,...
//! ```
//!
//! The decoder tolerates reordering within a 16-packet window, zero-fills
//! missing payloads so the sample timeline keeps its length, and drops
//! packets with a corrupt magic, counting everything it repairs.

use crate::error::Error;

/// Packet magic bytes.
pub const PACKET_MAGIC: [u8; 2] = *b"EE";
/// Fixed header length in bytes.
pub const PACKET_HEADER_LEN: usize = 7;
/// Maximum reordering distance the decoder repairs.
pub const REORDER_WINDOW: usize = 16;

/// One wire packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub seq: u16,
    pub channels: u8,
    /// Interleaved signed 8-bit samples (ch0, ch1, ch0, ...).
    pub payload: Vec<i8>,
}

impl Packet {
    pub fn encode(&self) -> Vec<u8> {
        let len = self.payload.len() as u16;
        let mut out = Vec::with_capacity(PACKET_HEADER_LEN + self.payload.len());
        out.extend_from_slice(&PACKET_MAGIC);
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.push(self.channels);
        out.extend_from_slice(&len.to_le_bytes());
        out.extend(self.payload.iter().map(|&b| b as u8));
        out
    }

    /// Decode one packet from the start of `bytes`; returns the packet and
    /// how many bytes it consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Packet, usize), Error> {
        if bytes.len() < PACKET_HEADER_LEN {
            return Err(Error::data("truncated packet header"));
        }
        if bytes[0..2] != PACKET_MAGIC {
            return Err(Error::data("bad packet magic"));
        }
        let seq = u16::from_le_bytes([bytes[2], bytes[3]]);
        let channels = bytes[4];
        let len = u16::from_le_bytes([bytes[5], bytes[6]]) as usize;
        if len % 2 != 0 {
            return Err(Error::data("odd payload length"));
        }
        if bytes.len() < PACKET_HEADER_LEN + len {
            return Err(Error::data("truncated packet payload"));
        }
        let payload = bytes[PACKET_HEADER_LEN..PACKET_HEADER_LEN + len]
            .iter()
            .map(|&b| b as i8)
            .collect();
        Ok((
            Packet {
                seq,
                channels,
                payload,
            },
            PACKET_HEADER_LEN + len,
        ))
    }
}

/// Split an interleaved 2-channel sample stream into packets of
/// `samples_per_packet` sample pairs, sequence numbers from 0.
pub fn packetize(interleaved: &[i8], samples_per_packet: usize) -> Result<Vec<Packet>, Error> {
    if samples_per_packet == 0 {
        return Err(Error::data("samples_per_packet must be nonzero"));
    }
    if samples_per_packet * 2 > u16::MAX as usize {
        return Err(Error::data("packet payload exceeds the u16 length field"));
    }
    Ok(interleaved
        .chunks(samples_per_packet * 2)
        .enumerate()
        .map(|(i, chunk)| Packet {
            seq: (i % 65_536) as u16,
            channels: 2,
            payload: chunk.to_vec(),
        })
        .collect())
}

/// Losses and repairs seen while decoding one stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LossReport {
    /// Zero-filled gaps as (first sample pair, count) per interval.
    pub intervals: Vec<(usize, usize)>,
    /// Packets that never arrived.
    pub lost_packets: usize,
    /// Packets dropped for a corrupt magic or malformed framing.
    pub corrupt_packets: usize,
    /// Packets that arrived out of order but within the reorder window.
    pub reordered_packets: usize,
}

impl LossReport {
    pub fn lossless(&self) -> bool {
        self.intervals.is_empty() && self.lost_packets == 0 && self.corrupt_packets == 0
    }
}

fn seq_distance(from: u16, to: u16) -> u16 {
    to.wrapping_sub(from)
}

/// Reassemble the interleaved stream. Missing packets are zero-filled (the
/// stream keeps its nominal length); packets reordered within
/// [`REORDER_WINDOW`] are put back in place.
pub fn depacketize(packets: &[Packet]) -> (Vec<i8>, LossReport) {
    let mut report = LossReport::default();
    let mut out: Vec<i8> = Vec::new();
    if packets.is_empty() {
        return (out, report);
    }

    let payload_len = packets[0].payload.len().max(2);
    let mut pending: Vec<Packet> = Vec::new();
    let mut expected: u16 = packets[0].seq;
    let mut emitted_pairs: usize = 0;

    let emit = |p: Option<&Packet>, report: &mut LossReport, out: &mut Vec<i8>, emitted: &mut usize| {
        match p {
            Some(p) => {
                out.extend_from_slice(&p.payload);
                *emitted += p.payload.len() / 2;
            }
            None => {
                report.intervals.push((*emitted, payload_len / 2));
                report.lost_packets += 1;
                out.extend(std::iter::repeat(0i8).take(payload_len));
                *emitted += payload_len / 2;
            }
        }
    };

    for p in packets {
        if p.channels != 2 {
            report.corrupt_packets += 1;
            continue;
        }
        if seq_distance(p.seq, expected) != 0 && seq_distance(expected, p.seq) > (REORDER_WINDOW as u16) * 4 {
            // Far outside the window in either direction: stale duplicate.
            report.corrupt_packets += 1;
            continue;
        }
        if p.seq != expected {
            report.reordered_packets += 1;
        }
        pending.push(p.clone());
        // Emit in order while the head of line is present or overdue.
        loop {
            if let Some(pos) = pending.iter().position(|q| q.seq == expected) {
                let q = pending.swap_remove(pos);
                emit(Some(&q), &mut report, &mut out, &mut emitted_pairs);
                expected = expected.wrapping_add(1);
            } else if pending
                .iter()
                .any(|q| seq_distance(expected, q.seq) as usize > REORDER_WINDOW)
            {
                // The gap outlived the reorder window: declare the packet lost.
                emit(None, &mut report, &mut out, &mut emitted_pairs);
                expected = expected.wrapping_add(1);
            } else {
                break;
            }
        }
    }
    // Flush what remains in sequence order, zero-filling interior gaps.
    while !pending.is_empty() {
        if let Some(pos) = pending.iter().position(|q| q.seq == expected) {
            let q = pending.swap_remove(pos);
            emit(Some(&q), &mut report, &mut out, &mut emitted_pairs);
        } else {
            emit(None, &mut report, &mut out, &mut emitted_pairs);
        }
        expected = expected.wrapping_add(1);
    }
    (out, report)
}

/// Serialize packets back to back for offline replay.
pub fn write_packet_stream(packets: &[Packet]) -> Vec<u8> {
    let mut out = Vec::new();
    for p in packets {
        out.extend(p.encode());
    }
    out
}

/// Parse a concatenated packet stream, resynchronizing on the magic after
/// corrupt framing and counting dropped bytes as corrupt packets.
pub fn read_packet_stream(bytes: &[u8]) -> (Vec<Packet>, usize) {
    let mut packets = Vec::new();
    let mut corrupt = 0;
    let mut pos = 0;
    while pos + PACKET_HEADER_LEN <= bytes.len() {
        match Packet::decode(&bytes[pos..]) {
            Ok((p, used)) => {
                packets.push(p);
                pos += used;
            }
            Err(_) => {
                corrupt += 1;
                // Scan forward for the next plausible magic.
                let next = bytes[pos + 1..]
                    .windows(2)
                    .position(|w| w == PACKET_MAGIC)
                    .map(|off| pos + 1 + off)
                    .unwrap_or(bytes.len());
                pos = next;
            }
        }
    }
    (packets, corrupt)
}
