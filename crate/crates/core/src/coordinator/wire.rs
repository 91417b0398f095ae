//! Little-endian binary form of [`ClientMessage`].
//!
//! ```text
//! header   "FCUL" | version u16 | variant u8 | precision u8 | round u32
//!          | client u32 | d u32 | c u32 | r u32
//! add      payload section
//! [r_del]  u32, QR-factor messages only
//! del      payload section
//! ```
//!
//! A full-statistics section is `S` packed as its upper triangle (row-major),
//! then `G` (d×c, row-major), then `n`. A QR-factor section is `R` (r×d,
//! row-major), then `G`, then `n`. The header `r` is the row count of the add
//! factor (0 for full statistics). Scalars are `f32` or `f64` according to the
//! precision byte (4 or 8).

use crate::client::{ClientMessage, MessageVariant, Payload};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Precision};

pub const MAGIC: &[u8; 4] = b"FCUL";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 1 + 1 + 4 * 5;

fn variant_code(v: MessageVariant) -> u8 {
    match v {
        MessageVariant::FullStats => 0,
        MessageVariant::QrFactor => 1,
    }
}

pub fn encode_message(msg: &ClientMessage) -> Vec<u8> {
    let (d, c) = (msg.d(), msg.c());
    let p = msg.precision;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * msg.scalar_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(variant_code(msg.variant()));
    out.push(p.width() as u8);
    for v in [
        msg.round,
        msg.client_id,
        d as u32,
        c as u32,
        msg.add.rank_rows() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_payload(&mut out, &msg.add, p);
    if msg.variant() == MessageVariant::QrFactor {
        out.extend_from_slice(&(msg.del.rank_rows() as u32).to_le_bytes());
    }
    write_payload(&mut out, &msg.del, p);
    out
}

fn put(out: &mut Vec<u8>, v: f64, p: Precision) {
    match p {
        Precision::Single => out.extend_from_slice(&(v as f32).to_le_bytes()),
        Precision::Double => out.extend_from_slice(&v.to_le_bytes()),
    }
}

fn write_payload(out: &mut Vec<u8>, payload: &Payload, p: Precision) {
    match payload {
        Payload::FullStats { s, g, n } => {
            let d = s.rows();
            for i in 0..d {
                for j in i..d {
                    put(out, s[(i, j)], p);
                }
            }
            g.as_slice().iter().for_each(|&v| put(out, v, p));
            put(out, *n as f64, p);
        }
        Payload::QrFactor { r, g, n } => {
            r.as_slice().iter().for_each(|&v| put(out, v, p));
            g.as_slice().iter().for_each(|&v| put(out, v, p));
            put(out, *n as f64, p);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos + len;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Wire(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(bytes)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn scalar(&mut self, p: Precision) -> Result<f64> {
        let v = match p {
            Precision::Single => f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64,
            Precision::Double => f64::from_le_bytes(self.take(8)?.try_into().unwrap()),
        };
        if !v.is_finite() {
            return Err(Error::Wire(format!("non-finite scalar before byte {}", self.pos)));
        }
        Ok(v)
    }

    fn matrix(&mut self, rows: usize, cols: usize, p: Precision) -> Result<Matrix> {
        let data = (0..rows * cols)
            .map(|_| self.scalar(p))
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_vec(rows, cols, data)
    }

    fn count(&mut self, p: Precision) -> Result<u64> {
        let v = self.scalar(p)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Wire(format!("invalid sample count {v}")));
        }
        Ok(v as u64)
    }
}

pub fn decode_message(bytes: &[u8]) -> Result<ClientMessage> {
    let mut rd = Reader { buf: bytes, pos: 0 };
    if rd.take(4)? != MAGIC {
        return Err(Error::Wire("bad magic".into()));
    }
    let version = rd.u16()?;
    if version != VERSION {
        return Err(Error::Wire(format!("unsupported version {version}")));
    }
    let variant = match rd.u8()? {
        0 => MessageVariant::FullStats,
        1 => MessageVariant::QrFactor,
        v => return Err(Error::Wire(format!("unknown variant {v}"))),
    };
    let p = Precision::from_width(rd.u8()?).ok_or_else(|| Error::Wire("bad precision".into()))?;
    let round = rd.u32()?;
    let client_id = rd.u32()?;
    let d = rd.u32()? as usize;
    let c = rd.u32()? as usize;
    let r_add = rd.u32()? as usize;

    let add = read_payload(&mut rd, variant, d, c, r_add, p)?;
    let r_del = match variant {
        MessageVariant::QrFactor => rd.u32()? as usize,
        MessageVariant::FullStats => 0,
    };
    let del = read_payload(&mut rd, variant, d, c, r_del, p)?;
    if rd.pos != bytes.len() {
        return Err(Error::Wire(format!("{} trailing bytes", bytes.len() - rd.pos)));
    }
    Ok(ClientMessage {
        client_id,
        round,
        precision: p,
        add,
        del,
    })
}

fn read_payload(
    rd: &mut Reader<'_>,
    variant: MessageVariant,
    d: usize,
    c: usize,
    r: usize,
    p: Precision,
) -> Result<Payload> {
    Ok(match variant {
        MessageVariant::FullStats => {
            let mut s = Matrix::zeros(d, d);
            for i in 0..d {
                for j in i..d {
                    let v = rd.scalar(p)?;
                    s[(i, j)] = v;
                    s[(j, i)] = v;
                }
            }
            let g = rd.matrix(d, c, p)?;
            let n = rd.count(p)?;
            Payload::FullStats { s, g, n }
        }
        MessageVariant::QrFactor => {
            let r = rd.matrix(r, d, p)?;
            let g = rd.matrix(d, c, p)?;
            let n = rd.count(p)?;
            Payload::QrFactor { r, g, n }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{ClientStore, Sample, SampleId};
    use proptest::prelude::*;

    fn message(variant: MessageVariant, p: Precision, n_add: u64, n_del: u64, d: usize) -> ClientMessage {
        let mut store = ClientStore::new(7, d, 2);
        let mk = |i: u64| Sample {
            id: SampleId(i),
            feature: (0..d).map(|j| p.round(((i * 31 + j as u64) as f64).sin())).collect(),
            label: vec![1.0, 0.0],
        };
        let first: Vec<SampleId> = (0..n_del).map(SampleId).collect();
        store.ingest((0..n_del).map(mk)).unwrap();
        store.make_round_message(1, &first, &[], variant, p).unwrap();
        let adds: Vec<SampleId> = (100..100 + n_add).map(SampleId).collect();
        store.ingest((100..100 + n_add).map(mk)).unwrap();
        store.make_round_message(2, &adds, &first, variant, p).unwrap()
    }

    #[test]
    fn header_layout() {
        let msg = message(MessageVariant::QrFactor, Precision::Double, 2, 1, 4);
        let bytes = encode_message(&msg);
        assert_eq!(&bytes[..4], b"FCUL");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(bytes[6], 1);
        assert_eq!(bytes[7], 8);
        let word = |k: usize| u32::from_le_bytes(bytes[8 + 4 * k..12 + 4 * k].try_into().unwrap());
        assert_eq!([word(0), word(1), word(2), word(3), word(4)], [2, 7, 4, 2, 2]);
        // add: r·d + d·c + 1; r_del word; del: r·d + d·c + 1.
        let expect = HEADER_LEN + 8 * (2 * 4 + 8 + 1) + 4 + 8 * (4 + 8 + 1);
        assert_eq!(bytes.len(), expect);
    }

    #[test]
    fn packed_full_stats_size() {
        let msg = message(MessageVariant::FullStats, Precision::Single, 3, 0, 4);
        let bytes = encode_message(&msg);
        assert_eq!(bytes.len(), HEADER_LEN + 2 * 4 * (10 + 8 + 1));
        assert_eq!(bytes[7], 4);
    }

    #[test]
    fn rejects_corruption() {
        let msg = message(MessageVariant::FullStats, Precision::Double, 2, 1, 3);
        let bytes = encode_message(&msg);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_message(&bad).is_err());
        assert!(decode_message(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode_message(&long).is_err());
        let mut ver = bytes;
        ver[4] = 9;
        assert!(decode_message(&ver).is_err());
    }

    proptest! {
        #[test]
        fn round_trips(qr in any::<bool>(), single in any::<bool>(), n_add in 0u64..6, n_del in 0u64..6, d in 1usize..6) {
            let variant = if qr { MessageVariant::QrFactor } else { MessageVariant::FullStats };
            let p = if single { Precision::Single } else { Precision::Double };
            let msg = message(variant, p, n_add, n_del, d);
            let back = decode_message(&encode_message(&msg)).unwrap();
            prop_assert_eq!(back, msg);
        }
    }
}
