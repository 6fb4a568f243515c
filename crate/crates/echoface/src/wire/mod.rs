//! Software reproduction of the device-to-host transport.
//!
//! Two microphone channels at 50 kHz and 8-bit depth come to about 800 kbps,
//! which is what the real link carries. This module reproduces that path in
//! software: symmetric 8-bit quantization, packet framing with wrapping
//! sequence numbers and loss accounting, a clap detector for synchronizing
//! the acoustic stream with the ground-truth timeline, and the resampling
//! alignment that pairs every 600-sample frame with a blendshape row.

mod packet;
mod quant;
mod sync;

pub use packet::{
    depacketize, packetize, read_packet_stream, write_packet_stream, LossReport, Packet,
    PACKET_HEADER_LEN, PACKET_MAGIC, REORDER_WINDOW,
};
pub use quant::{dequantize8, interleave, nominal_bit_rate, quantize8, split_channels, Quantized};
pub use sync::{align, detect_clap, AlignedSession, ClapDetector};
