//! File formats: the `HCF1` binary field container, and CSV exports of
//! fields and trajectories.
//!
//! `HCF1` layout, all little-endian:
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 4            | magic `b"HCF1"`                           |
//! | 4            | `d` as u32                                |
//! | 4 d          | `n_k` as u32 per axis                     |
//! | 16 d         | `lo_k, hi_k` as f64 pairs                 |
//! | 8            | time, f64                                 |
//! | 8            | alpha, f64                                |
//! | 8 prod(n_k)  | amplitudes, row-major, `(re, im)` as f32  |

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;

use crate::branches::BranchDecomposition;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::field::WaveField;
use crate::grid::{build_grid, MAX_DIMS};
use crate::guidance::Configuration;

pub const HCF1_MAGIC: &[u8; 4] = b"HCF1";

/// Writes `field` to an `HCF1` container. Amplitudes are stored in single
/// precision.
pub fn write_hcf1<W: Write>(mut w: W, field: &WaveField, alpha: f64) -> Result<()> {
    let grid = field.grid();
    w.write_all(HCF1_MAGIC)?;
    w.write_u32::<LittleEndian>(grid.dims() as u32)?;
    for &n in grid.points() {
        w.write_u32::<LittleEndian>(n as u32)?;
    }
    for &[lo, hi] in grid.extents() {
        w.write_f64::<LittleEndian>(lo)?;
        w.write_f64::<LittleEndian>(hi)?;
    }
    w.write_f64::<LittleEndian>(field.time())?;
    w.write_f64::<LittleEndian>(alpha)?;
    let mut buf = Vec::with_capacity(8 * field.psi().len());
    for v in field.psi() {
        buf.extend_from_slice(&(v.re as f32).to_le_bytes());
        buf.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn encode_hcf1(field: &WaveField, alpha: f64) -> Vec<u8> {
    let mut out = Vec::new();
    write_hcf1(&mut out, field, alpha).expect("writing to memory");
    out
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Container("truncated header".into())
    } else {
        Error::Io(e)
    }
}

/// Decodes an `HCF1` container into the field and its alpha. Trailing bytes
/// are rejected.
pub fn decode_hcf1(bytes: &[u8]) -> Result<(WaveField, f64)> {
    let mut r = bytes;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != HCF1_MAGIC {
        return Err(Error::Container(format!("bad magic {magic:02x?}")));
    }
    let d = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    if !(1..=MAX_DIMS).contains(&d) {
        return Err(Error::Container(format!(
            "dimension count {d} outside 1..={MAX_DIMS}"
        )));
    }
    let mut points = Vec::with_capacity(d);
    for _ in 0..d {
        points.push(r.read_u32::<LittleEndian>().map_err(truncated)? as usize);
    }
    let mut extents = Vec::with_capacity(d);
    for _ in 0..d {
        let lo = r.read_f64::<LittleEndian>().map_err(truncated)?;
        let hi = r.read_f64::<LittleEndian>().map_err(truncated)?;
        extents.push([lo, hi]);
    }
    let time = r.read_f64::<LittleEndian>().map_err(truncated)?;
    let alpha = r.read_f64::<LittleEndian>().map_err(truncated)?;
    if !(time.is_finite() && alpha.is_finite()) {
        return Err(Error::Container("non-finite time or alpha".into()));
    }
    let grid = build_grid(&extents, &points)?;
    if r.len() != 8 * grid.len() {
        return Err(Error::Container(format!(
            "payload holds {} bytes, grid needs {}",
            r.len(),
            8 * grid.len()
        )));
    }
    let psi = r
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect::<Vec<Complex64>>();
    if let Some(i) = psi
        .iter()
        .position(|v| !(v.re.is_finite() && v.im.is_finite()))
    {
        return Err(Error::Container(format!(
            "non-finite amplitude at index {i}"
        )));
    }
    Ok((WaveField::new(grid, psi, time)?, alpha))
}

pub fn read_hcf1<R: Read>(mut r: R) -> Result<(WaveField, f64)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_hcf1(&bytes)
}

/// Tidy CSV of a field: `x_1..x_d, re, im, rho`, one row per grid point.
pub fn write_field_csv<W: Write>(w: W, field: &WaveField) -> Result<()> {
    let d = field.grid().dims();
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=d).map(|k| format!("x_{k}")).collect();
    header.extend(["re", "im", "rho"].map(String::from));
    out.write_record(&header).map_err(csv_error)?;
    for (flat, v) in field.psi().iter().enumerate() {
        let x = field.grid().position(flat);
        let mut row: Vec<String> = x[..d].iter().map(|c| c.to_string()).collect();
        row.push(v.re.to_string());
        row.push(v.im.to_string());
        row.push(v.norm_sqr().to_string());
        out.write_record(&row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Container(format!("{other:?}")),
    }
}

/// Appends member positions to a trajectory CSV with columns
/// `member_id, t, x_1..x_d, branch_label, regularized_hits`.
pub struct TrajectoryWriter<W: Write> {
    out: csv::Writer<W>,
    dims: usize,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(w: W, dims: usize) -> Result<Self> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["member_id".to_string(), "t".to_string()];
        header.extend((1..=dims).map(|k| format!("x_{k}")));
        header.extend(["branch_label", "regularized_hits"].map(String::from));
        out.write_record(&header).map_err(csv_error)?;
        Ok(Self { out, dims })
    }

    /// One row per member. `branches` supplies labels; without it, or for
    /// members below the branch threshold, the label is 0.
    pub fn write_snapshot(
        &mut self,
        t: f64,
        ensemble: &Ensemble,
        branches: Option<&BranchDecomposition>,
    ) -> Result<()> {
        for m in ensemble.members() {
            self.write_row(t, m.id, &m.config, branches, m.regularized_hits)?;
        }
        Ok(())
    }

    pub fn write_row(
        &mut self,
        t: f64,
        id: u64,
        config: &Configuration,
        branches: Option<&BranchDecomposition>,
        regularized_hits: u32,
    ) -> Result<()> {
        let x = config.coords();
        if x.len() != self.dims {
            return Err(Error::InvalidArgument(format!(
                "member {id} has {} coordinates",
                x.len()
            )));
        }
        let label = branches.and_then(|b| b.label_at(x)).unwrap_or(0);
        let mut row = vec![id.to_string(), t.to_string()];
        row.extend(x.iter().map(|c| c.to_string()));
        row.push(label.to_string());
        row.push(regularized_hits.to_string());
        self.out.write_record(&row).map_err(csv_error)
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        self.out.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::sample_from_density;
    use crate::field::gaussian_packet;
    use crate::grid::build_grid;

    #[test]
    fn hcf1_roundtrip_to_single_precision() {
        let g = build_grid(&[[-8.0, 8.0], [-8.0, 8.0]], &[32, 32]).unwrap();
        let f = gaussian_packet(&g, &[0.5, -0.5], 1.0, &[1.0, 0.0]).unwrap();
        let bytes = encode_hcf1(&f, 0.25);
        assert_eq!(&bytes[..4], b"HCF1");
        assert_eq!(bytes.len(), 4 + 4 + 8 + 32 + 16 + 8 * g.len());
        let (back, alpha) = decode_hcf1(&bytes).unwrap();
        assert_eq!(alpha, 0.25);
        assert_eq!(back.grid(), &g);
        for (a, b) in back.psi().iter().zip(f.psi()) {
            assert_eq!(a.re, b.re as f32 as f64);
            assert_eq!(a.im, b.im as f32 as f64);
        }
        assert_eq!(encode_hcf1(&back, 0.25), bytes);
    }

    #[test]
    fn hcf1_rejects_malformed_input() {
        let g = build_grid(&[[0.0, 1.0]], &[8]).unwrap();
        let f = WaveField::new(g, vec![Complex64::new(1.0, 0.0); 8], 0.0).unwrap();
        let good = encode_hcf1(&f, 1.0);
        assert!(decode_hcf1(&good[..good.len() - 1]).is_err());
        assert!(decode_hcf1(&good[..10]).is_err());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode_hcf1(&bad).is_err());
        let mut bad = good.clone();
        bad[8] = 7;
        assert!(decode_hcf1(&bad).is_err());
        let mut long = good;
        long.push(0);
        assert!(decode_hcf1(&long).is_err());
        assert!(decode_hcf1(&[]).is_err());
        let mut nan = encode_hcf1(&f, 1.0);
        let at = nan.len() - 4;
        nan[at..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_hcf1(&nan).is_err());
    }

    #[test]
    fn csv_exports() {
        let g = build_grid(&[[-4.0, 4.0]], &[8]).unwrap();
        let f = gaussian_packet(&g, &[0.0], 0.4, &[0.0]).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &f).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("x_1,re,im,rho"));
        assert_eq!(text.lines().count(), 9);

        let ens = sample_from_density(&f, 3, 1).unwrap();
        let mut tw = TrajectoryWriter::new(Vec::new(), 1).unwrap();
        tw.write_snapshot(0.0, &ens, None).unwrap();
        let text = String::from_utf8(tw.finish().unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("member_id,t,x_1,branch_label,regularized_hits")
        );
        assert!(lines.next().unwrap().starts_with("0,0,"));
    }
}
