//! Binary container for sampled fields and CSV import.
//!
//! Layout, all little endian:
//!
//! ```text
//! magic      4 bytes  "W4DF"
//! version    u32      1
//! symmetry   u8       0 cylindrical, 1 bicylindrical, 2 full
//! axes       u8       number of reduced axes d
//! components u8       1 for a field, 2 for a position/velocity pair
//! flags      u8       bit 0: gradients present
//! d × { min f64, step f64, count u64, radial u8 }
//! label      u32 length + UTF-8 bytes
//! per component: count f64 samples, then d × count gradient samples if flagged
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Axis, FieldError, SampledField, Symmetry};

const MAGIC: &[u8; 4] = b"W4DF";
const VERSION: u32 = 1;

fn sym_code(s: Symmetry) -> u8 {
    match s {
        Symmetry::Cylindrical => 0,
        Symmetry::Bicylindrical => 1,
        Symmetry::Full => 2,
    }
}

pub fn to_bytes(components: &[SampledField]) -> Result<Vec<u8>, FieldError> {
    let first = components.first().ok_or_else(|| FieldError::Container("no components".into()))?;
    if components.len() > 2 {
        return Err(FieldError::Container("at most two components".into()));
    }
    for c in components {
        if c.axes != first.axes || c.symmetry != first.symmetry {
            return Err(FieldError::Container("components must share a grid".into()));
        }
        if c.gradient.is_some() != first.gradient.is_some() {
            return Err(FieldError::Container("gradient presence must agree".into()));
        }
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(sym_code(first.symmetry));
    out.push(first.axes.len() as u8);
    out.push(components.len() as u8);
    out.push(u8::from(first.gradient.is_some()));
    for a in &first.axes {
        out.extend_from_slice(&a.min.to_le_bytes());
        out.extend_from_slice(&a.step.to_le_bytes());
        out.extend_from_slice(&(a.count as u64).to_le_bytes());
        out.push(u8::from(a.radial));
    }
    let label = first.label.as_bytes();
    out.extend_from_slice(&(label.len() as u32).to_le_bytes());
    out.extend_from_slice(label);
    for c in components {
        for v in &c.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(g) = &c.gradient {
            for comp in g {
                for v in comp {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FieldError> {
        if self.pos + n > self.bytes.len() {
            return Err(FieldError::Container(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, FieldError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, FieldError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, FieldError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64, FieldError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FieldError> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Vec<SampledField>, FieldError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(FieldError::Container("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(FieldError::Container(format!("unsupported version {version}")));
    }
    let symmetry = match c.u8()? {
        0 => Symmetry::Cylindrical,
        1 => Symmetry::Bicylindrical,
        2 => Symmetry::Full,
        s => return Err(FieldError::Container(format!("unknown symmetry code {s}"))),
    };
    let d = c.u8()? as usize;
    let ncomp = c.u8()? as usize;
    let flags = c.u8()?;
    if ncomp == 0 || ncomp > 2 {
        return Err(FieldError::Container(format!("bad component count {ncomp}")));
    }
    let mut axes = Vec::with_capacity(d);
    for _ in 0..d {
        let min = c.f64()?;
        let step = c.f64()?;
        let count = c.u64()? as usize;
        let radial = c.u8()? != 0;
        axes.push(Axis::new(min, step, count, radial)?);
    }
    let len = c.u32()? as usize;
    let label = String::from_utf8(c.take(len)?.to_vec()).map_err(|e| FieldError::Container(e.to_string()))?;
    let n: usize = axes.iter().map(|a| a.count).product();
    let mut out = Vec::with_capacity(ncomp);
    for _ in 0..ncomp {
        let values = c.f64s(n)?;
        let mut f = SampledField::new(symmetry, axes.clone(), values)?.with_label(label.clone());
        if flags & 1 == 1 {
            let g = (0..d).map(|_| c.f64s(n)).collect::<Result<Vec<_>, _>>()?;
            f = f.with_gradient(g)?;
        }
        out.push(f);
    }
    if c.pos != bytes.len() {
        return Err(FieldError::Container("trailing bytes".into()));
    }
    Ok(out)
}

pub fn write(path: &Path, components: &[SampledField]) -> Result<(), FieldError> {
    let bytes = to_bytes(components)?;
    fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Vec<SampledField>, FieldError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

/// Reads a CSV whose leading columns are reduced coordinates and whose
/// remaining one or two columns are sample values. Rows may come in any order
/// but must fill a uniform tensor grid.
pub fn read_csv(path: &Path, symmetry: Symmetry) -> Result<Vec<SampledField>, FieldError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let d = symmetry.reduced_dim();
    let ncols = rdr.headers()?.len();
    if ncols < d + 1 || ncols > d + 2 {
        return Err(FieldError::Container(format!("expected {} or {} columns, found {ncols}", d + 1, d + 2)));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| FieldError::Container(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let radial_last = symmetry != Symmetry::Full;
    let mut axes = Vec::with_capacity(d);
    for k in 0..d {
        let mut coords: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        coords.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        coords.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * (1.0 + b.abs()));
        if coords.len() < 4 {
            return Err(FieldError::InvalidGrid(format!("column {k} has fewer than 4 distinct values")));
        }
        let step = (coords[coords.len() - 1] - coords[0]) / (coords.len() - 1) as f64;
        for w in coords.windows(2) {
            if ((w[1] - w[0]) - step).abs() > 1e-6 * step {
                return Err(FieldError::InvalidGrid(format!("column {k} is not uniformly spaced")));
            }
        }
        axes.push(Axis::new(coords[0], step, coords.len(), radial_last && k == d - 1)?);
    }
    let n: usize = axes.iter().map(|a| a.count).product();
    if rows.len() != n {
        return Err(FieldError::InvalidGrid(format!("{} rows for a grid of {n} points", rows.len())));
    }
    let ncomp = ncols - d;
    let mut data = vec![vec![f64::NAN; n]; ncomp];
    for row in &rows {
        let mut flat = 0usize;
        for k in 0..d {
            let i = ((row[k] - axes[k].min) / axes[k].step).round() as usize;
            flat = flat * axes[k].count + i;
        }
        for (c, slot) in data.iter_mut().enumerate() {
            slot[flat] = row[d + c];
        }
    }
    data.into_iter()
        .map(|values| SampledField::new(symmetry, axes.clone(), values))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FnField, ScalarField};

    fn sample() -> SampledField {
        let f = FnField::new("g", Symmetry::Cylindrical, |x| (-(x[0] * x[0] + x[3] * x[3])).exp());
        let axes = vec![Axis::cell(-2.0, 2.0, 8).unwrap(), Axis::cell_radial(2.0, 5).unwrap()];
        SampledField::sample(&f, Symmetry::Cylindrical, axes).unwrap().with_label("gauss")
    }

    #[test]
    fn round_trip_is_bitwise() {
        let a = sample();
        let b = sample();
        let bytes = to_bytes(&[a.clone(), b]).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].values, a.values);
        assert_eq!(back[0].label, "gauss");
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupted_container_is_rejected() {
        let bytes = to_bytes(&[sample()]).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
    }

    #[test]
    fn csv_import_matches_samples() {
        let s = sample();
        let dir = std::env::temp_dir().join(format!("w4d-csv-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("f.csv");
        let mut text = String::from("x1,r,u\n");
        for i in (0..8).rev() {
            for j in 0..5 {
                let (x1, r) = (s.axes[0].coord(i), s.axes[1].coord(j));
                text += &format!("{x1},{r},{}\n", s.values[i * 5 + j]);
            }
        }
        fs::write(&path, text).unwrap();
        let f = read_csv(&path, Symmetry::Cylindrical).unwrap();
        let x = [0.3, 0.1, 0.0, 0.2];
        assert!((f[0].value(&x) - s.value(&x)).abs() < 1e-12);
    }
}
