//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! b"HATCNCKP"  u32 version  u32 variant (0 hatcn, 1 tcn)
//! u64 layers  u64 channels  u64 kernel  u64 input_length
//! u8 schedule (0 powers of two, 1 custom) [u64 count, u64 dilation * count]
//! u64 seed  u64 epochs
//! u64 parameter count, then per parameter: u64 rows, u64 cols, f64 * rows*cols
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{DilationSchedule, HatcnConfig, HatcnModel, Variant};

const MAGIC: &[u8; 8] = b"HATCNCKP";
const VERSION: u32 = 1;

/// A trained model plus the facts needed to reproduce it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: HatcnModel,
    pub variant: Variant,
    pub seed: u64,
    pub epochs: u64,
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = &self.model.config;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let variant: u32 = match self.variant {
            Variant::Hatcn => 0,
            Variant::Tcn => 1,
        };
        out.extend_from_slice(&variant.to_le_bytes());
        for v in [cfg.layers, cfg.channels, cfg.kernel_size, cfg.input_length] {
            put_u64(&mut out, v as u64);
        }
        match &cfg.dilations {
            DilationSchedule::PowersOfTwo => out.push(0),
            DilationSchedule::Custom(d) => {
                out.push(1);
                put_u64(&mut out, d.len() as u64);
                for &v in d {
                    put_u64(&mut out, v as u64);
                }
            }
        }
        put_u64(&mut out, self.seed);
        put_u64(&mut out, self.epochs);
        let params = self.model.parameters();
        put_u64(&mut out, params.len() as u64);
        for p in params {
            put_u64(&mut out, p.rows() as u64);
            put_u64(&mut out, p.cols() as u64);
            for v in p.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let variant = match r.u32()? {
            0 => Variant::Hatcn,
            1 => Variant::Tcn,
            v => return Err(Error::Format(format!("unknown variant tag {v}"))),
        };
        let layers = r.usize()?;
        let channels = r.usize()?;
        let kernel_size = r.usize()?;
        let input_length = r.usize()?;
        let dilations = match r.take(1)?[0] {
            0 => DilationSchedule::PowersOfTwo,
            1 => {
                let n = r.usize()?;
                if n > layers {
                    return Err(Error::Format(format!("{n} dilations for {layers} layers")));
                }
                DilationSchedule::Custom((0..n).map(|_| r.usize()).collect::<Result<_>>()?)
            }
            t => return Err(Error::Format(format!("unknown dilation schedule tag {t}"))),
        };
        let config = HatcnConfig { layers, channels, kernel_size, input_length, dilations };
        config.validate().map_err(|e| Error::Format(format!("invalid stored configuration: {e}")))?;
        let seed = r.u64()?;
        let epochs = r.u64()?;
        let count = r.usize()?;
        let mut model = HatcnModel::zeros(config);
        let expected = model.parameter_count();
        if count != expected {
            return Err(Error::Format(format!("checkpoint holds {count} parameters, configuration needs {expected}")));
        }
        for (i, slot) in model.parameters_mut().into_iter().enumerate() {
            let rows = r.usize()?;
            let cols = r.usize()?;
            if (rows, cols) != (slot.rows(), slot.cols()) {
                return Err(Error::Format(format!(
                    "parameter {i} is {rows}x{cols}, expected {}x{}",
                    slot.rows(),
                    slot.cols()
                )));
            }
            for v in slot.as_mut_slice() {
                *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
        }
        if !model.is_finite() {
            return Err(Error::Format("checkpoint contains non-finite parameters".into()));
        }
        Ok(Self { model, variant, seed, epochs })
    }

    pub fn write(&self, mut out: impl Write) -> Result<()> {
        out.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(mut input: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!("checkpoint truncated at byte {}", self.pos))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Format(format!("value {v} does not fit in usize")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(schedule: DilationSchedule) -> Checkpoint {
        let mut cfg = HatcnConfig::new(3, 2, 3, 16);
        cfg.dilations = schedule;
        let model = HatcnModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        Checkpoint { model, variant: Variant::Tcn, seed: 42, epochs: 5 }
    }

    #[test]
    fn round_trip() {
        for schedule in [DilationSchedule::PowersOfTwo, DilationSchedule::Custom(vec![1, 3, 5])] {
            let ck = sample(schedule);
            let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
            assert_eq!(back, ck);
        }
    }

    #[test]
    fn bad_magic() {
        let mut bytes = sample(DilationSchedule::PowersOfTwo).to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = sample(DilationSchedule::PowersOfTwo).to_bytes();
        for cut in 0..bytes.len() {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Format(_))), "cut at {cut}");
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = sample(DilationSchedule::PowersOfTwo).to_bytes();
        bytes.push(0);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
