//! `CAE1` checkpoints: magic, config fields, then every parameter tensor in
//! declaration order as little-endian f64.

use std::io::Write;
use std::path::Path;

use super::model::{CaeConfig, CaeModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CAE1";

pub fn write_checkpoint(model: &CaeModel, mut w: impl Write) -> std::io::Result<()> {
    let c = &model.config;
    w.write_all(MAGIC)?;
    for v in [c.input_rows, c.input_cols]
        .into_iter()
        .chain(c.encoder_filters)
        .chain(c.pool_sizes.iter().flat_map(|&(r, k)| [r, k]))
    {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&c.learning_rate.to_le_bytes())?;
    w.write_all(&(c.batch_size as u32).to_le_bytes())?;
    w.write_all(&(c.max_epochs as u32).to_le_bytes())?;
    w.write_all(&c.validation_fraction.to_le_bytes())?;
    w.write_all(&[c.l2_constrained as u8])?;
    w.write_all(&c.seed.to_le_bytes())?;
    for p in model.parameters() {
        for v in p {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| Error::Format {
            path: self.path.to_path_buf(),
            line: 0,
            message: format!("checkpoint truncated at byte {}", self.pos),
        })?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length is N"))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take()?) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<CaeModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(path, &bytes)
}

pub fn parse_checkpoint(path: &Path, bytes: &[u8]) -> Result<CaeModel> {
    let mut cur = Cursor { path, bytes, pos: 0 };
    if &cur.take::<4>()? != MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            line: 0,
            message: "not a CAE1 checkpoint".into(),
        });
    }
    let input_rows = cur.u32()?;
    let input_cols = cur.u32()?;
    let encoder_filters = [cur.u32()?, cur.u32()?, cur.u32()?];
    let mut pool_sizes = [(0, 0); 3];
    for p in &mut pool_sizes {
        *p = (cur.u32()?, cur.u32()?);
    }
    let config = CaeConfig {
        input_rows,
        input_cols,
        encoder_filters,
        pool_sizes,
        learning_rate: cur.f64()?,
        batch_size: cur.u32()?,
        max_epochs: cur.u32()?,
        validation_fraction: cur.f64()?,
        l2_constrained: cur.take::<1>()?[0] != 0,
        seed: u64::from_le_bytes(cur.take()?),
    };
    let mut model = CaeModel::zeroed(config)?;
    for p in model.parameters_mut() {
        for v in p.iter_mut() {
            *v = cur.f64()?;
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{} trailing bytes after parameters", bytes.len() - cur.pos),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = CaeConfig::for_embedding_dim(300).unwrap().constrained(true).with_seed(9);
        let model = CaeModel::new(cfg).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"CAE1");
        let p = Path::new("mem");
        assert_eq!(parse_checkpoint(p, &buf).unwrap(), model);
        assert!(parse_checkpoint(p, &buf[..buf.len() - 1]).is_err());
        buf.push(0);
        assert!(parse_checkpoint(p, &buf).is_err());
        assert!(parse_checkpoint(p, b"CAE2").is_err());
    }
}
