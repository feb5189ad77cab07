//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "IDMC"
//! 4       4     u32 format version (1)
//! 8       1     u8 mode: 0 analog, 1 regular, 2 irregular
//! 9       4     u32 encoder layer count E
//! 13      4     u32 decoder layer count D
//! 17      8(E+D) per layer, encoder first: u32 inputs, u32 outputs
//! ...           payload: per layer in the same order, weights as f32
//!               (inputs x outputs, row-major) followed by bias as f32
//!               (outputs)
//! ...     8     footer, regular mode only: f64 grid step d
//! ```
//!
//! Parameters are stored at single precision; [`Checkpoint::new`] rounds
//! in-memory parameters the same way so a loaded checkpoint equals the one
//! that was saved.

use std::path::Path;

use super::matrix::Matrix;
use super::network::{Architecture, CodecParams, Dense};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IDMC";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckpointMode {
    Analog,
    Regular,
    Irregular,
}

impl CheckpointMode {
    fn code(self) -> u8 {
        match self {
            CheckpointMode::Analog => 0,
            CheckpointMode::Regular => 1,
            CheckpointMode::Irregular => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(CheckpointMode::Analog),
            1 => Ok(CheckpointMode::Regular),
            2 => Ok(CheckpointMode::Irregular),
            other => Err(Error::format(
                "checkpoint",
                format!("unknown mode byte {other}"),
            )),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CheckpointMode::Analog => "analog",
            CheckpointMode::Regular => "regular",
            CheckpointMode::Irregular => "irregular",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    mode: CheckpointMode,
    params: CodecParams,
}

fn round_f32(m: &mut Matrix) {
    for v in m.data_mut() {
        *v = *v as f32 as f64;
    }
}

impl Checkpoint {
    /// Snapshots `params`, rounding weights to single precision. Regular mode
    /// requires a grid step; the other modes drop it.
    pub fn new(mode: CheckpointMode, params: &CodecParams) -> Result<Self> {
        params.architecture()?;
        let mut params = params.clone();
        for l in params.encoder.iter_mut().chain(params.decoder.iter_mut()) {
            round_f32(&mut l.weights);
            round_f32(&mut l.bias);
        }
        match mode {
            CheckpointMode::Regular => {
                if params.distance.is_none() {
                    return Err(Error::arg("regular checkpoint needs a grid step"));
                }
            }
            _ => params.distance = None,
        }
        if !params.is_finite() {
            return Err(Error::Numerical(
                "refusing to checkpoint non-finite parameters".into(),
            ));
        }
        Ok(Checkpoint { mode, params })
    }

    pub fn mode(&self) -> CheckpointMode {
        self.mode
    }

    pub fn params(&self) -> &CodecParams {
        &self.params
    }

    pub fn into_params(self) -> CodecParams {
        self.params
    }

    pub fn architecture(&self) -> Architecture {
        self.params
            .architecture()
            .expect("validated at construction")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::with_capacity(32 + 4 * p.parameter_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.mode.code());
        out.extend_from_slice(&(p.encoder.len() as u32).to_le_bytes());
        out.extend_from_slice(&(p.decoder.len() as u32).to_le_bytes());
        for l in p.encoder.iter().chain(&p.decoder) {
            out.extend_from_slice(&(l.inputs() as u32).to_le_bytes());
            out.extend_from_slice(&(l.outputs() as u32).to_le_bytes());
        }
        for l in p.encoder.iter().chain(&p.decoder) {
            for v in l.weights.data().iter().chain(l.bias.data()) {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        if self.mode == CheckpointMode::Regular {
            out.extend_from_slice(&p.distance.unwrap().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(
                "checkpoint",
                format!("unsupported version {version}"),
            ));
        }
        let mode = CheckpointMode::from_code(r.take(1)?[0])?;
        let enc = r.u32()? as usize;
        let dec = r.u32()? as usize;
        if enc == 0 || dec == 0 || enc + dec > 1024 {
            return Err(Error::format("checkpoint", "implausible layer counts"));
        }
        let mut shapes = Vec::with_capacity(enc + dec);
        for _ in 0..enc + dec {
            let i = r.u32()? as usize;
            let o = r.u32()? as usize;
            if i == 0 || o == 0 || i.saturating_mul(o) > (1 << 28) {
                return Err(Error::format("checkpoint", "implausible layer shape"));
            }
            shapes.push((i, o));
        }
        let mut layers = Vec::with_capacity(shapes.len());
        for &(i, o) in &shapes {
            let w = r.f32s(i * o)?;
            let b = r.f32s(o)?;
            layers.push(Dense {
                weights: Matrix::from_vec(i, o, w),
                bias: Matrix::from_vec(1, o, b),
            });
        }
        let decoder = layers.split_off(enc);
        let distance = if mode == CheckpointMode::Regular {
            Some(f64::from_le_bytes(r.take(8)?.try_into().unwrap()))
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        let params = CodecParams {
            encoder: layers,
            decoder,
            distance,
        };
        params
            .architecture()
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
        if !params.is_finite() {
            return Err(Error::format("checkpoint", "non-finite parameters"));
        }
        if let Some(d) = distance {
            if !(d > 0.0) {
                return Err(Error::format(
                    "checkpoint",
                    format!("grid step {d} is not positive"),
                ));
            }
        }
        Ok(Checkpoint { mode, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| {
            Error::config(format!("cannot read checkpoint {}: {e}", path.display()))
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("checkpoint", "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{streams, Rng};

    fn params() -> CodecParams {
        let arch = Architecture {
            image_len: 4,
            symbols: 1,
            hidden: vec![3],
        };
        CodecParams::init(&arch, &mut Rng::new(1, streams::INIT))
    }

    #[test]
    fn header_layout() {
        let ck = Checkpoint::new(CheckpointMode::Analog, &params()).unwrap();
        let b = ck.to_bytes();
        assert_eq!(&b[..4], b"IDMC");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(b[8], 0);
        assert_eq!(u32::from_le_bytes(b[9..13].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[13..17].try_into().unwrap()), 2);
        // First encoder layer: 5 -> 3.
        assert_eq!(u32::from_le_bytes(b[17..21].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(b[21..25].try_into().unwrap()), 3);
        let n_params = 5 * 3 + 3 + 3 * 2 + 2 + 3 * 3 + 3 + 3 * 4 + 4;
        assert_eq!(b.len(), 17 + 4 * 8 + 4 * n_params);
    }

    #[test]
    fn regular_round_trip_keeps_distance_at_double_precision() {
        let mut p = params();
        p.distance = Some(0.123456789012345);
        let ck = Checkpoint::new(CheckpointMode::Regular, &p).unwrap();
        let b = ck.to_bytes();
        let back = Checkpoint::from_bytes(&b).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.params().distance, Some(0.123456789012345));
        assert_eq!(back.to_bytes(), b);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let ck = Checkpoint::new(CheckpointMode::Irregular, &params()).unwrap();
        let b = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&b[..b.len() - 1]).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut bad = b.clone();
        bad[8] = 9;
        assert!(Checkpoint::from_bytes(&bad).is_err());
        assert!(Checkpoint::new(CheckpointMode::Regular, &params()).is_err());
    }
}
