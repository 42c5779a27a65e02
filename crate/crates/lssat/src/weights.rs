//! Binary weight container: `LSSAT1`, a u32 tensor count, then per tensor a
//! u32 name length, the UTF-8 name, u32 rank, u32 dims and f64 values, all
//! little-endian. Hyper-parameters travel as the tensor `meta.hparams`.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::model::{LsSat, LsSatConfig};
use crate::LsSatError;

const MAGIC: &[u8; 6] = b"LSSAT1";
const META: &str = "meta.hparams";

fn hparams(cfg: &LsSatConfig) -> Array2<f64> {
    let v = [
        cfg.raw_dim,
        cfg.kappa,
        cfg.heads,
        cfg.n_self,
        cfg.n_cross,
        cfg.tau,
        cfg.phases,
        usize::from(cfg.literal),
    ];
    Array2::from_shape_fn((1, v.len()), |(_, j)| v[j] as f64)
}

pub fn to_bytes(model: &LsSat) -> Vec<u8> {
    let p = model.params();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(p.len() as u32 + 1).to_le_bytes());
    let meta = hparams(model.config());
    let tensors = std::iter::once((META, &meta)).chain(p.names.iter().map(String::as_str).zip(&p.values));
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], String> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or("truncated")?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

fn parse(buf: &[u8]) -> Result<LsSat, String> {
    let mut r = Reader { buf, at: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err("bad magic".into());
    }
    let count = r.u32()?;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32()?;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| "tensor name is not UTF-8")?;
        let rank = r.u32()?;
        let dims: Vec<usize> = (0..rank).map(|_| r.u32()).collect::<Result<_, _>>()?;
        let (rows, cols) = match dims.as_slice() {
            [n] => (1, *n),
            [a, b] => (*a, *b),
            _ => return Err(format!("{name}: unsupported rank {rank}")),
        };
        let n = rows.checked_mul(cols).ok_or("tensor too large")?;
        let bytes = r.take(n.checked_mul(8).ok_or("tensor too large")?)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        tensors.push((name, Array2::from_shape_vec((rows, cols), data).expect("shape checked")));
    }
    if r.at != buf.len() {
        return Err("trailing bytes".into());
    }
    let meta = tensors.iter().find(|(n, _)| n == META).ok_or("missing meta.hparams")?;
    let h: Vec<usize> = meta.1.iter().map(|v| *v as usize).collect();
    if h.len() != 8 {
        return Err("meta.hparams must hold 8 values".into());
    }
    let cfg = LsSatConfig {
        raw_dim: h[0],
        kappa: h[1],
        heads: h[2],
        n_self: h[3],
        n_cross: h[4],
        tau: h[5],
        phases: h[6],
        literal: h[7] != 0,
    };
    let mut model = LsSat::new(cfg, 0).map_err(|e| e.to_string())?;
    if tensors.len() != model.params().len() + 1 {
        return Err(format!("expected {} tensors, found {}", model.params().len() + 1, tensors.len()));
    }
    for (name, t) in tensors {
        if name == META {
            continue;
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(format!("{name}: non-finite value"));
        }
        model.set_param(&name, t).map_err(|e| e.to_string())?;
    }
    Ok(model)
}

pub fn from_bytes(buf: &[u8]) -> Result<LsSat, String> {
    parse(buf)
}

pub fn save(model: &LsSat, path: &Path) -> Result<(), LsSatError> {
    let io = |source| LsSatError::Io { path: path.to_path_buf(), source };
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(&to_bytes(model)).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<LsSat, LsSatError> {
    let buf = std::fs::read(path).map_err(|source| LsSatError::Io { path: path.to_path_buf(), source })?;
    parse(&buf).map_err(|msg| LsSatError::Format { path: path.to_path_buf(), msg })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> LsSatConfig {
        LsSatConfig { raw_dim: 12, kappa: 3, heads: 2, n_self: 1, n_cross: 2, tau: 5, phases: 4, literal: false }
    }

    #[test]
    fn round_trip_exact() {
        let m = LsSat::new(cfg(), 17).unwrap();
        let back = from_bytes(&to_bytes(&m)).unwrap();
        assert_eq!(back, m);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        save(&m, &path).unwrap();
        assert_eq!(load(&path).unwrap(), m);
        let lit = LsSat::new(LsSatConfig { literal: true, ..cfg() }, 1).unwrap();
        assert_eq!(from_bytes(&to_bytes(&lit)).unwrap(), lit);
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = to_bytes(&LsSat::new(cfg(), 1).unwrap());
        assert!(from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
        let err = load(Path::new("/nonexistent/w.bin")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/w.bin"));
    }
}
