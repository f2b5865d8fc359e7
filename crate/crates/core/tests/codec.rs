use proptest::prelude::*;
use seqest::estimators::{
    decode_frame, encode_frame, encode_message, read_transcript, write_transcript, Message, ObsSigns, Scheme, SchemeConfig,
    SchemeKind, Sign, FRAME_HEADER_BITS,
};
use seqest::quant::{Bits, QuantIndex};

const K: usize = 4;

fn scheme(kind: SchemeKind, bits_v: u8, bits_u: u8, bits_final: u8) -> Scheme {
    let mut c = SchemeConfig::new(kind, 100.0);
    c.bits_v = bits_v;
    c.bits_u = bits_u;
    if kind.uses_d() {
        c.d = vec![1.0; K];
    }
    if kind.uses_e() {
        c.e = vec![1.0; K];
    }
    if kind.uses_phi() || kind.final_block() {
        c.phi = vec![3.0; K];
    }
    if kind.uses_theta() {
        c.theta = vec![3.0; K];
    }
    if kind.final_block() {
        c.bits_final = vec![bits_final; K];
    }
    if kind == SchemeKind::ObsMle {
        c.obs_theta = Some(1.0);
        c.obs_sigma = Some(1.0);
    }
    Scheme::new(c, K).unwrap()
}

fn index(raw: u32, width: u8) -> QuantIndex {
    QuantIndex::new(raw & ((1u32 << width) - 1), width).unwrap()
}

/// Every message kind the scheme can emit, built from raw entropy.
fn messages(s: &Scheme, sensor: u8, t: u64, raw: u32) -> Vec<Message> {
    let kind = s.kind();
    let c = s.config();
    let mut out = vec![];
    if kind.lt_v() {
        out.push(Message::VLt {
            sensor,
            t,
            sign: if raw & 1 == 0 { Sign::Plus } else { Sign::Minus },
            q_index: index(raw >> 1, c.bits_v - 1),
        });
    }
    if kind.lt_u() {
        out.push(Message::ULt { sensor, t, p_index: index(raw, c.bits_u) });
    }
    if kind.uniform_v() {
        out.push(Message::VUni { sensor, t, index: index(raw, c.bits_v) });
    }
    if kind.uniform_u() {
        out.push(Message::UUni { sensor, t, index: index(raw >> 3, c.bits_u) });
    }
    if kind.final_block() {
        out.push(Message::VFinal { sensor, t, index: index(raw, c.bits_final[0]) });
    }
    if kind == SchemeKind::ObsMle {
        out.push(Message::ObsBits {
            sensor,
            t,
            signs: ObsSigns { re_y: raw & 1 == 1, im_y: raw & 2 == 2, re_h: raw & 4 == 4, im_h: raw & 8 == 8 },
        });
    }
    out
}

fn declared(s: &Scheme, m: &Message) -> u32 {
    let c = s.config();
    match m {
        Message::VLt { .. } | Message::VUni { .. } => u32::from(c.bits_v),
        Message::ULt { .. } | Message::UUni { .. } => u32::from(c.bits_u),
        Message::VFinal { sensor, .. } => u32::from(c.bits_final[usize::from(*sensor)]),
        Message::ObsBits { .. } => 4,
    }
}

fn kinds() -> impl Strategy<Value = SchemeKind> {
    prop::sample::select(
        SchemeKind::ALL.iter().copied().filter(|k| *k != SchemeKind::Centralized).collect::<Vec<_>>(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn frame_roundtrip(kind in kinds(), bv in 1u8..=16, bu in 1u8..=16, bf in 1u8..=16,
                       sensor in 0u8..K as u8, t in 1u64..1_000_000, raw in any::<u32>()) {
        let s = scheme(kind, bv, bu, bf);
        for m in messages(&s, sensor, t, raw) {
            let payload = encode_message(&m);
            prop_assert_eq!(payload.len() as u32, declared(&s, &m));
            prop_assert_eq!(m.payload_bits(), declared(&s, &m));
            let frame = encode_frame(&m);
            prop_assert_eq!(frame.len(), FRAME_HEADER_BITS + payload.len());
            prop_assert_eq!(decode_frame(&frame, &s, t).unwrap(), m);
        }
    }

    #[test]
    fn garbage_never_panics(kind in kinds(), bits in prop::collection::vec(any::<bool>(), 0..64)) {
        let s = scheme(kind, 2, 2, 8);
        let frame: Bits = bits.into_iter().collect();
        let _ = decode_frame(&frame, &s, 1);
    }

    #[test]
    fn truncated_or_padded_frames_are_rejected(kind in kinds(), raw in any::<u32>(), extra in 1usize..5) {
        let s = scheme(kind, 2, 3, 9);
        for m in messages(&s, 1, 7, raw) {
            let frame = encode_frame(&m);
            prop_assert!(decode_frame(&frame[..frame.len() - 1], &s, 7).is_err());
            let mut long = frame.clone();
            long.extend(std::iter::repeat_n(false, extra));
            prop_assert!(decode_frame(&long, &s, 7).is_err());
        }
    }
}

#[test]
fn transcript_roundtrip_many_steps() {
    let s = scheme(SchemeKind::LtDsDmle, 3, 2, 1);
    let mut tr = vec![];
    let mut raw = 0x1234_5678u32;
    for t in 1..=500u64 {
        raw = raw.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
        let msgs: Vec<Message> = (0..K as u8).flat_map(|k| messages(&s, k, t, raw.rotate_left(u32::from(k)))).collect();
        tr.push((t, msgs));
    }
    let mut buf = vec![];
    write_transcript(&mut buf, &tr).unwrap();
    assert_eq!(read_transcript(&buf[..], &s).unwrap(), tr);
    assert!(read_transcript(&buf[..buf.len() - 1], &s).is_err());
}
