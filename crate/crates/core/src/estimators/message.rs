//! Sensor-to-FC messages and their wire form.
//!
//! A payload carries exactly the bits the protocol pays for: `r_V` for a
//! level-triggered `V` sample (sign bit then `r_V - 1` overshoot bits), `r_U`
//! for any `U` sample, `r_V` for a uniform `V` sample, `R_k` for a fixed-time
//! block and 4 sign bits for Obs-MLE. Indices are big-endian.
//!
//! A frame prepends a 3-bit kind code and an 8-bit sensor id to the payload.
//! A transcript groups frames by time step:
//!
//! ```text
//! step  := t: u64 BE | count: u32 BE | frame*count
//! frame := bit_len: u16 BE | ceil(bit_len/8) bytes, MSB first, zero padded
//! ```

use std::io::{Read, Write};

use bitvec::prelude::*;

use super::Scheme;
use crate::error::{Error, Result};
use crate::quant::{Bits, BitsRef, QuantIndex};

pub const FRAME_HEADER_BITS: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn of(value: f64) -> Self {
        if value < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    fn bit(self) -> bool {
        self == Sign::Plus
    }

    fn from_bit(bit: bool) -> Self {
        if bit {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// Signs of `(Re y, Im y, Re h, Im h)`; `true` means nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObsSigns {
    pub re_y: bool,
    pub im_y: bool,
    pub re_h: bool,
    pub im_h: bool,
}

impl ObsSigns {
    /// Number of agreeing `(y, h)` sign pairs, 0..=2.
    pub fn agreements(self) -> u64 {
        u64::from(self.re_y == self.re_h) + u64::from(self.im_y == self.im_h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    VLt = 0,
    ULt = 1,
    VUni = 2,
    UUni = 3,
    VFinal = 4,
    ObsBits = 5,
}

impl MessageKind {
    fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => MessageKind::VLt,
            1 => MessageKind::ULt,
            2 => MessageKind::VUni,
            3 => MessageKind::UUni,
            4 => MessageKind::VFinal,
            5 => MessageKind::ObsBits,
            c => return Err(Error::protocol(format!("unknown message kind code {c}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Message {
    VLt {
        sensor: u8,
        t: u64,
        sign: Sign,
        q_index: QuantIndex,
    },
    ULt {
        sensor: u8,
        t: u64,
        p_index: QuantIndex,
    },
    VUni {
        sensor: u8,
        t: u64,
        index: QuantIndex,
    },
    UUni {
        sensor: u8,
        t: u64,
        index: QuantIndex,
    },
    VFinal {
        sensor: u8,
        t: u64,
        index: QuantIndex,
    },
    ObsBits {
        sensor: u8,
        t: u64,
        signs: ObsSigns,
    },
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::VLt { .. } => MessageKind::VLt,
            Message::ULt { .. } => MessageKind::ULt,
            Message::VUni { .. } => MessageKind::VUni,
            Message::UUni { .. } => MessageKind::UUni,
            Message::VFinal { .. } => MessageKind::VFinal,
            Message::ObsBits { .. } => MessageKind::ObsBits,
        }
    }

    pub fn sensor(&self) -> u8 {
        match *self {
            Message::VLt { sensor, .. }
            | Message::ULt { sensor, .. }
            | Message::VUni { sensor, .. }
            | Message::UUni { sensor, .. }
            | Message::VFinal { sensor, .. }
            | Message::ObsBits { sensor, .. } => sensor,
        }
    }

    pub fn time(&self) -> u64 {
        match *self {
            Message::VLt { t, .. }
            | Message::ULt { t, .. }
            | Message::VUni { t, .. }
            | Message::UUni { t, .. }
            | Message::VFinal { t, .. }
            | Message::ObsBits { t, .. } => t,
        }
    }

    /// Declared payload size.
    pub fn payload_bits(&self) -> u32 {
        match *self {
            Message::VLt { q_index, .. } => 1 + u32::from(q_index.bit_width()),
            Message::ULt { p_index: i, .. }
            | Message::VUni { index: i, .. }
            | Message::UUni { index: i, .. }
            | Message::VFinal { index: i, .. } => u32::from(i.bit_width()),
            Message::ObsBits { .. } => 4,
        }
    }
}

/// Payload bits only.
pub fn encode_message(msg: &Message) -> Bits {
    let mut out = Bits::with_capacity(msg.payload_bits() as usize);
    write_payload(msg, &mut out);
    out
}

fn write_payload(msg: &Message, out: &mut Bits) {
    match *msg {
        Message::VLt { sign, q_index, .. } => {
            out.push(sign.bit());
            q_index.write(out);
        }
        Message::ULt { p_index: i, .. }
        | Message::VUni { index: i, .. }
        | Message::UUni { index: i, .. }
        | Message::VFinal { index: i, .. } => i.write(out),
        Message::ObsBits { signs, .. } => {
            out.extend([signs.re_y, signs.im_y, signs.re_h, signs.im_h]);
        }
    }
}

/// Decodes a payload whose kind, sender and time are known from the frame.
/// The payload must be exactly as long as the scheme declares.
pub fn decode_message(
    bits: &BitsRef,
    scheme: &Scheme,
    kind: MessageKind,
    sensor: u8,
    t: u64,
) -> Result<Message> {
    if usize::from(sensor) >= scheme.sensors() {
        return Err(Error::protocol(format!(
            "sensor id {sensor} outside network of {}",
            scheme.sensors()
        )));
    }
    let expected = scheme.payload_bits(kind, usize::from(sensor)) as usize;
    if bits.len() != expected {
        return Err(Error::protocol(format!(
            "{kind:?} payload from sensor {sensor} must be {expected} bits, got {}",
            bits.len()
        )));
    }
    let width = expected as u8;
    Ok(match kind {
        MessageKind::VLt => Message::VLt {
            sensor,
            t,
            sign: Sign::from_bit(bits[0]),
            q_index: QuantIndex::read(&bits[1..], width - 1)?,
        },
        MessageKind::ULt => Message::ULt {
            sensor,
            t,
            p_index: QuantIndex::read(bits, width)?,
        },
        MessageKind::VUni => Message::VUni {
            sensor,
            t,
            index: QuantIndex::read(bits, width)?,
        },
        MessageKind::UUni => Message::UUni {
            sensor,
            t,
            index: QuantIndex::read(bits, width)?,
        },
        MessageKind::VFinal => Message::VFinal {
            sensor,
            t,
            index: QuantIndex::read(bits, width)?,
        },
        MessageKind::ObsBits => Message::ObsBits {
            sensor,
            t,
            signs: ObsSigns {
                re_y: bits[0],
                im_y: bits[1],
                re_h: bits[2],
                im_h: bits[3],
            },
        },
    })
}

/// `[kind: 3][sensor: 8][payload]`.
pub fn encode_frame(msg: &Message) -> Bits {
    let mut out = Bits::with_capacity(FRAME_HEADER_BITS + msg.payload_bits() as usize);
    let code = msg.kind() as u8;
    for i in (0..3).rev() {
        out.push((code >> i) & 1 == 1);
    }
    let sensor = msg.sensor();
    for i in (0..8).rev() {
        out.push((sensor >> i) & 1 == 1);
    }
    write_payload(msg, &mut out);
    out
}

pub fn decode_frame(bits: &BitsRef, scheme: &Scheme, t: u64) -> Result<Message> {
    if bits.len() < FRAME_HEADER_BITS {
        return Err(Error::protocol(format!("frame of {} bits has no header", bits.len())));
    }
    let code = bits[..3].load_be::<u8>();
    let sensor = bits[3..11].load_be::<u8>();
    decode_message(&bits[FRAME_HEADER_BITS..], scheme, MessageKind::from_code(code)?, sensor, t)
}

/// Messages grouped by time step, in application order.
pub type Transcript = Vec<(u64, Vec<Message>)>;

pub fn write_transcript<W: Write>(mut out: W, transcript: &Transcript) -> Result<()> {
    for (t, msgs) in transcript {
        out.write_all(&t.to_be_bytes())?;
        let count = u32::try_from(msgs.len())
            .map_err(|_| Error::protocol("too many frames in one step"))?;
        out.write_all(&count.to_be_bytes())?;
        for m in msgs {
            let frame = encode_frame(m);
            let len = u16::try_from(frame.len()).map_err(|_| Error::protocol("frame too long"))?;
            out.write_all(&len.to_be_bytes())?;
            out.write_all(frame.as_raw_slice())?;
        }
    }
    Ok(())
}

pub fn read_transcript<R: Read>(mut input: R, scheme: &Scheme) -> Result<Transcript> {
    let mut transcript = Transcript::new();
    loop {
        let mut t_buf = [0u8; 8];
        match input.read_exact(&mut t_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let t = u64::from_be_bytes(t_buf);
        let mut c_buf = [0u8; 4];
        input.read_exact(&mut c_buf)?;
        let count = u32::from_be_bytes(c_buf);
        let mut msgs = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let mut l_buf = [0u8; 2];
            input.read_exact(&mut l_buf)?;
            let len = usize::from(u16::from_be_bytes(l_buf));
            let mut bytes = vec![0u8; len.div_ceil(8)];
            input.read_exact(&mut bytes)?;
            let bits = BitVec::<u8, Msb0>::from_vec(bytes);
            msgs.push(decode_frame(&bits[..len], scheme, t)?);
        }
        transcript.push((t, msgs));
    }
    Ok(transcript)
}
