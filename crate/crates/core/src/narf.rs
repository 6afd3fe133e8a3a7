//! NARF files: one JSON header line, then little-endian `f64` pairs
//! `(re, im)`. Also CSV and 16-bit PGM exports.
//!
//! Grid data is ordered by grid row, grid column, matrix row, matrix column.
//! Sinograms are ordered by angle, offset, matrix row, matrix column, and
//! record `n_angles` and `n_offsets` in the header. Gauge fields store
//! `A1`, `A2`, `A0` one after the other (`components = 3`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge_field::GaugeField;
use crate::grid::{GridSpec, MatrixField};
use crate::mat::C64;
use crate::ray_transport::{uniform_angles, Sinogram, SinogramKind};

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub narf: u32,
    pub n: usize,
    pub m: usize,
    pub rows: usize,
    pub cols: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    pub half_extent: f64,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_angles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_offsets: Option<usize>,
}

impl Header {
    fn for_grid(grid: GridSpec, rows: usize, cols: usize, kind: &str) -> Self {
        Self {
            narf: VERSION,
            n: grid.n,
            m: rows,
            rows,
            cols,
            radius: grid.radius,
            half_extent: grid.half_extent,
            kind: kind.to_string(),
            components: None,
            coupling: None,
            n_angles: None,
            n_offsets: None,
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::with_half_extent(self.n, self.half_extent, self.radius)
    }

    pub fn is_sinogram(&self) -> bool {
        self.n_angles.is_some()
    }

    fn value_count(&self) -> usize {
        let nodes = match (self.n_angles, self.n_offsets) {
            (Some(a), Some(o)) => a * o,
            _ => self.n * self.n,
        };
        nodes * self.rows * self.cols * self.components.unwrap_or(1)
    }
}

/// Anything stored in a NARF file.
#[derive(Debug, Clone, PartialEq)]
pub enum NarfData {
    Field { kind: String, field: MatrixField },
    Gauge(GaugeField),
    Sinogram(Sinogram),
}

fn write_values(w: &mut impl Write, values: &[C64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 16);
    for v in values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn write_header(w: &mut impl Write, header: &Header) -> Result<()> {
    serde_json::to_writer(&mut *w, header)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_field(w: &mut impl Write, field: &MatrixField, kind: &str) -> Result<()> {
    write_header(
        w,
        &Header::for_grid(field.grid, field.rows, field.cols, kind),
    )?;
    write_values(w, &field.values)
}

pub fn write_gauge(w: &mut impl Write, field: &GaugeField) -> Result<()> {
    let mut h = Header::for_grid(field.grid(), field.m(), field.m(), "gauge");
    h.components = Some(3);
    h.coupling = Some([field.coupling.re, field.coupling.im]);
    write_header(w, &h)?;
    for c in field.components() {
        write_values(w, &c.values)?;
    }
    Ok(())
}

pub fn write_sinogram(w: &mut impl Write, s: &Sinogram) -> Result<()> {
    let mut h = Header::for_grid(s.grid, s.rows, s.cols, s.kind.name());
    h.n_angles = Some(s.n_angles());
    h.n_offsets = Some(s.n_offsets());
    write_header(w, &h)?;
    write_values(w, &s.values)
}

pub fn write(w: &mut impl Write, data: &NarfData) -> Result<()> {
    match data {
        NarfData::Field { kind, field } => write_field(w, field, kind),
        NarfData::Gauge(g) => write_gauge(w, g),
        NarfData::Sinogram(s) => write_sinogram(w, s),
    }
}

fn sinogram_kind(name: &str) -> Result<SinogramKind> {
    [
        SinogramKind::ScatteringData,
        SinogramKind::Attenuated,
        SinogramKind::Functional,
    ]
    .into_iter()
    .find(|k| k.name() == name)
    .ok_or_else(|| Error::Format(format!("unknown sinogram kind {name:?}")))
}

pub fn read(r: &mut impl BufRead) -> Result<NarfData> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("missing header line".into()));
    }
    let header: Header = serde_json::from_slice(&line[..line.len() - 1])?;
    if header.narf != VERSION {
        return Err(Error::Format(format!(
            "unsupported NARF version {}",
            header.narf
        )));
    }
    let grid = header.grid()?;
    let count = header.value_count();
    let mut raw = vec![0u8; count * 16];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Format(format!("expected {count} complex values")))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after data".into()));
    }
    let values: Vec<C64> = raw
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite value".into()));
    }
    let field = |vals: &[C64]| MatrixField {
        grid,
        rows: header.rows,
        cols: header.cols,
        values: vals.to_vec(),
    };
    if let (Some(na), Some(no)) = (header.n_angles, header.n_offsets) {
        if no != grid.n {
            return Err(Error::Format("sinogram offsets must match the grid".into()));
        }
        let mut s = Sinogram::zeros(
            grid,
            na,
            header.rows,
            header.cols,
            sinogram_kind(&header.kind)?,
        );
        s.angles = uniform_angles(na);
        s.values = values;
        return Ok(NarfData::Sinogram(s));
    }
    if header.kind == "gauge" {
        if header.components != Some(3) || header.rows != header.cols {
            return Err(Error::Format(
                "gauge files hold three square components".into(),
            ));
        }
        let part = values.len() / 3;
        let coupling = header
            .coupling
            .map_or(C64::new(1.0, 0.0), |c| C64::new(c[0], c[1]));
        let g = GaugeField::new(
            field(&values[..part]),
            field(&values[part..2 * part]),
            field(&values[2 * part..]),
            coupling,
        )?;
        return Ok(NarfData::Gauge(g));
    }
    Ok(NarfData::Field {
        kind: header.kind.clone(),
        field: field(&values),
    })
}

pub fn save(path: impl AsRef<Path>, data: &NarfData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write(&mut w, data)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<NarfData> {
    read(&mut BufReader::new(File::open(path)?))
}

/// CSV with columns `y2, phi` and `e<i><j>_re`, `e<i><j>_im` per entry.
pub fn write_sinogram_csv(w: &mut impl Write, s: &Sinogram) -> Result<()> {
    let mut head = vec!["y2".to_string(), "phi".to_string()];
    for i in 0..s.rows {
        for j in 0..s.cols {
            head.push(format!("e{i}{j}_re"));
            head.push(format!("e{i}{j}_im"));
        }
    }
    writeln!(w, "{}", head.join(","))?;
    for (a, phi) in s.angles.iter().enumerate() {
        for (o, y2) in s.offsets.iter().enumerate() {
            write!(w, "{y2:.17e},{phi:.17e}")?;
            for v in s.at(a, o) {
                write!(w, ",{:.17e},{:.17e}", v.re, v.im)?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Binary 16-bit PGM of `width x height` magnitudes, scaled to the maximum.
pub fn write_pgm(
    w: &mut impl Write,
    width: usize,
    height: usize,
    magnitudes: &[f64],
) -> Result<()> {
    if magnitudes.len() != width * height {
        return Err(Error::Shape("heatmap size mismatch".into()));
    }
    let top = magnitudes.iter().copied().fold(0.0, f64::max);
    let scale = if top > 0.0 { 65535.0 / top } else { 0.0 };
    write!(w, "P5\n{width} {height}\n65535\n")?;
    let mut buf = Vec::with_capacity(2 * magnitudes.len());
    for v in magnitudes {
        buf.extend_from_slice(&((v * scale).round() as u16).to_be_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Largest entry magnitude per block.
pub fn block_magnitudes(values: &[C64], block: usize) -> Vec<f64> {
    values
        .chunks(block)
        .map(|b| b.iter().map(|v| v.norm()).fold(0.0, f64::max))
        .collect()
}

/// Heatmap of a field (grid rows top to bottom).
pub fn field_heatmap(w: &mut impl Write, f: &MatrixField) -> Result<()> {
    write_pgm(
        w,
        f.grid.n,
        f.grid.n,
        &block_magnitudes(&f.values, f.block()),
    )
}

/// Heatmap of a sinogram (one row per angle).
pub fn sinogram_heatmap(w: &mut impl Write, s: &Sinogram) -> Result<()> {
    write_pgm(
        w,
        s.n_offsets(),
        s.n_angles(),
        &block_magnitudes(&s.values, s.block()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{make_phantom, PhantomKind, PhantomSpec};

    #[test]
    fn gauge_round_trip() {
        let g = GridSpec::new(16, 1.0).unwrap();
        let a = make_phantom(&PhantomSpec::new(PhantomKind::SmoothRandom, 2, 1), g)
            .unwrap()
            .into_gauge()
            .unwrap()
            .with_coupling(C64::new(0.0, -1.0));
        let mut buf = Vec::new();
        write_gauge(&mut buf, &a).unwrap();
        assert_eq!(
            buf.iter().position(|&b| b == b'\n').unwrap() + 1 + 3 * 16 * 16 * 4 * 16,
            buf.len()
        );
        match read(&mut &buf[..]).unwrap() {
            NarfData::Gauge(b) => assert_eq!(a, b),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_truncated_data() {
        let g = GridSpec::new(16, 1.0).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &MatrixField::identity(g, 2), "field").unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read(&mut &buf[..]), Err(Error::Format(_))));
    }
}
