//! Path records: a binary format and a plotting CSV.
//!
//! Binary layout, all little-endian: magic `STLDPTH1`, `u32` model-id length
//! and UTF-8 bytes, `f64` epsilon, `f64` dt, `u64` seed, `u8` mode
//! (0 full, 1 zero drift, 2 skeleton), `u64` refined steps, `u64` dim,
//! `u64` number of times, then the times and the row-major states as `f64`.

use std::io::{Read, Write};

use stldp_core::path::{Mode, Path, PathMeta};

use crate::error::{Result, RunError};
use crate::numfmt::{fmt_f64, to_csv};

const MAGIC: &[u8; 8] = b"STLDPTH1";

fn mode_byte(m: Mode) -> u8 {
    match m {
        Mode::Full => 0,
        Mode::ZeroDrift => 1,
        Mode::Skeleton => 2,
    }
}

pub fn write_binary(path: &Path, mut w: impl Write) -> std::io::Result<()> {
    let meta = &path.meta;
    w.write_all(MAGIC)?;
    w.write_all(&(meta.model_id.len() as u32).to_le_bytes())?;
    w.write_all(meta.model_id.as_bytes())?;
    w.write_all(&meta.epsilon.to_le_bytes())?;
    w.write_all(&meta.dt.to_le_bytes())?;
    w.write_all(&meta.seed.to_le_bytes())?;
    w.write_all(&[mode_byte(meta.mode)])?;
    w.write_all(&(meta.refined_steps as u64).to_le_bytes())?;
    w.write_all(&(path.dim() as u64).to_le_bytes())?;
    w.write_all(&(path.times.len() as u64).to_le_bytes())?;
    for t in &path.times {
        w.write_all(&t.to_le_bytes())?;
    }
    for x in path.raw_states() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| RunError::Format(format!("truncated path record: {e}")))?;
    Ok(b)
}

fn take_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| Ok(f64::from_le_bytes(take::<8>(r)?))).collect()
}

pub fn read_binary(mut r: impl Read) -> Result<Path> {
    if &take::<8>(&mut r)? != MAGIC {
        return Err(RunError::Format("not a path record".into()));
    }
    let len = u32::from_le_bytes(take(&mut r)?) as usize;
    if len > 1 << 16 {
        return Err(RunError::Format("model id too long".into()));
    }
    let mut id = vec![0u8; len];
    r.read_exact(&mut id).map_err(|e| RunError::Format(e.to_string()))?;
    let model_id = String::from_utf8(id).map_err(|e| RunError::Format(e.to_string()))?;
    let epsilon = f64::from_le_bytes(take(&mut r)?);
    let dt = f64::from_le_bytes(take(&mut r)?);
    let seed = u64::from_le_bytes(take(&mut r)?);
    let mode = match take::<1>(&mut r)?[0] {
        0 => Mode::Full,
        1 => Mode::ZeroDrift,
        2 => Mode::Skeleton,
        b => return Err(RunError::Format(format!("unknown mode byte {b}"))),
    };
    let refined_steps = u64::from_le_bytes(take(&mut r)?) as usize;
    let dim = u64::from_le_bytes(take(&mut r)?) as usize;
    let n = u64::from_le_bytes(take(&mut r)?) as usize;
    let times = take_f64s(&mut r, n)?;
    let states = take_f64s(&mut r, n.checked_mul(dim).ok_or_else(|| RunError::Format("size overflow".into()))?)?;
    let meta = PathMeta {
        model_id,
        mode,
        epsilon,
        dt,
        seed,
        refined_steps,
    };
    Ok(Path::from_parts(times, dim, states, meta)?)
}

/// `time, x_0, ..., x_{n-1}` per row.
pub fn to_path_csv(path: &Path) -> Result<String> {
    let header: Vec<String> = std::iter::once("time".to_string())
        .chain((0..path.dim()).map(|i| format!("x_{i}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = path
        .times
        .iter()
        .zip(path.states())
        .map(|(t, x)| std::iter::once(*t).chain(x.iter().copied()).map(fmt_f64).collect())
        .collect();
    to_csv(&header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_is_exact() {
        let meta = PathMeta {
            model_id: "heat".into(),
            mode: Mode::ZeroDrift,
            epsilon: 0.1,
            dt: 0.25,
            seed: u64::MAX - 3,
            refined_steps: 2,
        };
        let p = Path::from_parts(vec![0.0, 0.25, 0.5], 2, vec![1.0, -2.0, 0.1, 1e-300, 3.0, f64::MIN_POSITIVE], meta)
            .unwrap();
        let mut buf = Vec::new();
        write_binary(&p, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 4 + 8 * 3 + 1 + 8 * 3 + 8 * 9);
        let q = read_binary(&buf[..]).unwrap();
        assert_eq!(p, q);
        assert!(read_binary(&buf[..buf.len() - 1]).is_err());
        let csv = to_path_csv(&q).unwrap();
        assert!(csv.starts_with("time,x_0,x_1\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
