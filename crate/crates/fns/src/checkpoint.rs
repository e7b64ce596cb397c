//! Binary checkpoint container.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! "FNS1"            magic
//! u32               format version
//! u32 n, u8 dim     training grid (dim = 1 or 2)
//! u8 variant, u8 mode, u8 smoother kind, f64 omega, u32 sweeps,
//! u32 kernel_size, u32 depth, u32 hidden, u8 mask_inputs
//! u64 epoch, f64 loss
//! u32 segment count, then per segment:
//!     u32 name length, name (UTF-8), u64 value count, f64 values
//! ```
//!
//! Nothing may follow the last segment.

use std::fs;
use std::path::Path;

use fns_core::corrector::Variant;
use fns_core::relax::{SmootherKind, SmootherSpec};
use fns_core::train::{Mode, Model, ModelSpec, ParamVector};
use fns_core::{Dim, Grid};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"FNS1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub grid: Grid,
    pub spec: ModelSpec,
    pub epoch: u64,
    pub loss: f64,
    pub params: ParamVector<f64>,
}

fn corrupt(msg: impl Into<String>) -> CliError {
    CliError::CorruptCheckpoint(msg.into())
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| CliError::Validation(format!("{what} {v} does not fit the checkpoint format")))
}

impl Checkpoint {
    pub fn new(model: &Model, params: ParamVector<f64>, epoch: u64, loss: f64) -> Self {
        Self {
            grid: model.grid(),
            spec: *model.spec(),
            epoch,
            loss,
            params,
        }
    }

    pub fn model(&self) -> Result<Model> {
        Ok(Model::new(self.spec, self.grid)?)
    }

    /// Same layout, same bits.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        let same_values = self.params.len() == other.params.len()
            && self
                .params
                .values()
                .iter()
                .zip(other.params.values())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        self.grid == other.grid
            && self.spec == other.spec
            && self.epoch == other.epoch
            && self.loss.to_bits() == other.loss.to_bits()
            && self.params.segments() == other.params.segments()
            && same_values
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let s = &self.spec;
        let mut b = Vec::with_capacity(64 + 8 * self.params.len());
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&u32_of(self.grid.n(), "grid size")?.to_le_bytes());
        b.push(match self.grid.dim() {
            Dim::One => 1,
            Dim::Two => 2,
        });
        b.push(match s.variant {
            Variant::Diagonal => 0,
            Variant::Conv => 1,
            Variant::RegionSplit => 2,
        });
        b.push(match s.mode {
            Mode::Direct => 0,
            Mode::Meta => 1,
        });
        b.push(match s.smoother.kind {
            SmootherKind::Jacobi => 0,
            SmootherKind::Richardson => 1,
        });
        b.extend_from_slice(&s.smoother.omega.to_le_bytes());
        for (v, what) in [
            (s.smoother.sweeps, "sweeps"),
            (s.kernel_size, "kernel size"),
            (s.depth, "depth"),
            (s.hidden, "hidden width"),
        ] {
            b.extend_from_slice(&u32_of(v, what)?.to_le_bytes());
        }
        b.push(s.mask_inputs as u8);
        b.extend_from_slice(&self.epoch.to_le_bytes());
        b.extend_from_slice(&self.loss.to_le_bytes());
        b.extend_from_slice(&u32_of(self.params.segments().len(), "segment count")?.to_le_bytes());
        for seg in self.params.segments() {
            b.extend_from_slice(&u32_of(seg.name.len(), "segment name length")?.to_le_bytes());
            b.extend_from_slice(seg.name.as_bytes());
            b.extend_from_slice(&(seg.len as u64).to_le_bytes());
            for v in &self.params.values()[seg.range()] {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(b)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CliError::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let n = r.u32()? as usize;
        let dim = match r.u8()? {
            1 => Dim::One,
            2 => Dim::Two,
            d => return Err(corrupt(format!("unknown dimension tag {d}"))),
        };
        let grid = Grid::new(n, dim).map_err(|e| corrupt(format!("grid: {e}")))?;
        let variant = match r.u8()? {
            0 => Variant::Diagonal,
            1 => Variant::Conv,
            2 => Variant::RegionSplit,
            t => return Err(corrupt(format!("unknown variant tag {t}"))),
        };
        let mode = match r.u8()? {
            0 => Mode::Direct,
            1 => Mode::Meta,
            t => return Err(corrupt(format!("unknown mode tag {t}"))),
        };
        let kind = match r.u8()? {
            0 => SmootherKind::Jacobi,
            1 => SmootherKind::Richardson,
            t => return Err(corrupt(format!("unknown smoother tag {t}"))),
        };
        let omega = r.f64()?;
        let sweeps = r.u32()? as usize;
        let smoother = SmootherSpec::new(kind, omega, sweeps).map_err(|e| corrupt(format!("smoother: {e}")))?;
        let mut spec = ModelSpec::new(variant, mode, smoother);
        spec.kernel_size = r.u32()? as usize;
        spec.depth = r.u32()? as usize;
        spec.hidden = r.u32()? as usize;
        spec.mask_inputs = match r.u8()? {
            0 => false,
            1 => true,
            t => return Err(corrupt(format!("bad flag byte {t}"))),
        };
        let epoch = r.u64()?;
        let loss = r.f64()?;
        let count = r.u32()? as usize;
        let mut params = ParamVector::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| corrupt("segment name is not UTF-8"))?
                .to_string();
            let len = usize::try_from(r.u64()?).map_err(|_| corrupt("segment too long"))?;
            let raw = r.take(len.checked_mul(8).ok_or_else(|| corrupt("segment too long"))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            params
                .push(name, values)
                .map_err(|e| corrupt(format!("segments: {e}")))?;
        }
        if r.pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let ck = Self {
            grid,
            spec,
            epoch,
            loss,
            params,
        };
        ck.check_layout()?;
        Ok(ck)
    }

    /// The segments must be exactly those the model would allocate.
    fn check_layout(&self) -> Result<()> {
        let model = self.model().map_err(|e| corrupt(format!("model: {e}")))?;
        let expected = model.init_params::<f64>(0);
        if expected.segments() != self.params.segments() {
            return Err(corrupt("parameter segments do not match the stored model"));
        }
        Ok(())
    }

    /// Writes through a temporary file so a crash never leaves a torn checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()?).map_err(|e| CliError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt(format!("truncated at byte {} (wanted {k} more)", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(variant: Variant, mode: Mode, seed: u64) -> Checkpoint {
        let sm = SmootherSpec::jacobi(0.75, 4).unwrap();
        let mut spec = ModelSpec::new(variant, mode, sm);
        spec.kernel_size = 3;
        let model = Model::new(spec, Grid::square(7).unwrap()).unwrap();
        Checkpoint::new(&model, model.init_params(seed), 17, 0.125)
    }

    #[test]
    fn truncation_is_corruption_at_every_length() {
        let bytes = sample(Variant::Conv, Mode::Direct, 1).to_bytes().unwrap();
        for cut in 0..bytes.len() {
            let err = Checkpoint::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, CliError::CorruptCheckpoint(_)), "cut {cut}: {err}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            Checkpoint::from_bytes(&long),
            Err(CliError::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn newer_version_is_refused() {
        let mut bytes = sample(Variant::Diagonal, Mode::Direct, 0).to_bytes().unwrap();
        bytes[4..8].copy_from_slice(&(VERSION + 1).to_le_bytes());
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, CliError::VersionMismatch { found, .. } if found == VERSION + 1));
        bytes[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CliError::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn foreign_segments_are_rejected() {
        let mut ck = sample(Variant::Diagonal, Mode::Direct, 0);
        let mut p = ParamVector::new();
        p.push("h0.lambda", vec![0.0; 3]).unwrap();
        ck.params = p;
        let bytes = ck.to_bytes().unwrap();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CliError::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.fns");
        let ck = sample(Variant::RegionSplit, Mode::Meta, 5);
        ck.save(&path).unwrap();
        assert!(Checkpoint::load(&path).unwrap().bitwise_eq(&ck));
        assert!(!path.with_extension("tmp").exists());
    }
}
