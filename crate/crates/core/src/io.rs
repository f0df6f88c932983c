//! Field serialization.
//!
//! CSV: header `index,re,im`, one row per grid point in row-major order.
//! Binary: consecutive little-endian `f64` pairs `(re, im)` in the same order,
//! no header. Vector fields are written component after component.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, ScalarField, VectorField};

#[derive(serde::Serialize, serde::Deserialize)]
struct Row {
    index: usize,
    re: f64,
    im: f64,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

pub fn write_csv(values: &[Complex64], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (index, z) in values.iter().enumerate() {
        w.serialize(Row { index, re: z.re, im: z.im }).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows in any order; every index in `0..len` must appear exactly once.
pub fn read_csv(input: impl Read, len: usize) -> Result<Vec<Complex64>> {
    let mut values = vec![None; len];
    for row in csv::Reader::from_reader(input).deserialize::<Row>() {
        let row = row.map_err(csv_err)?;
        let slot = values
            .get_mut(row.index)
            .ok_or_else(|| Error::Parse(format!("index {} out of range 0..{len}", row.index)))?;
        if slot.replace(Complex64::new(row.re, row.im)).is_some() {
            return Err(Error::Parse(format!("index {} appears twice", row.index)));
        }
    }
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::Parse(format!("index {i} missing"))))
        .collect()
}

pub fn write_binary(values: &[Complex64], mut out: impl Write) -> Result<()> {
    let mut buf = Vec::with_capacity(16 * values.len());
    for z in values {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_binary(mut input: impl Read, len: usize) -> Result<Vec<Complex64>> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    if buf.len() != 16 * len {
        return Err(Error::Parse(format!("expected {} bytes, found {}", 16 * len, buf.len())));
    }
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect())
}

pub fn read_scalar_csv(lattice: Lattice, input: impl Read) -> Result<ScalarField> {
    ScalarField::new(lattice, read_csv(input, lattice.len())?)
}

pub fn read_vector_csv(lattice: Lattice, input: impl Read) -> Result<VectorField> {
    VectorField::from_flat(lattice, &read_csv(input, lattice.dim() * lattice.len())?)
}

pub fn read_vector_binary(lattice: Lattice, input: impl Read) -> Result<VectorField> {
    VectorField::from_flat(lattice, &read_binary(input, lattice.dim() * lattice.len())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Complex64> {
        (0..12).map(|i| Complex64::new(i as f64 * 0.1 - 0.3, 1.0 / (i as f64 + 1.0))).collect()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut buf = Vec::new();
        write_csv(&sample(), &mut buf).unwrap();
        assert!(std::str::from_utf8(&buf).unwrap().starts_with("index,re,im\n0,"));
        assert_eq!(read_csv(&buf[..], 12).unwrap(), sample());
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let mut buf = Vec::new();
        write_binary(&sample(), &mut buf).unwrap();
        assert_eq!(buf.len(), 12 * 16);
        assert_eq!(read_binary(&buf[..], 12).unwrap(), sample());
        assert!(read_binary(&buf[..], 11).is_err());
    }

    #[test]
    fn csv_rejects_gaps_and_duplicates() {
        assert!(read_csv("index,re,im\n0,1,0\n".as_bytes(), 2).is_err());
        assert!(read_csv("index,re,im\n0,1,0\n0,1,0\n".as_bytes(), 2).is_err());
        assert!(read_csv("index,re,im\n1,2,0\n0,1,0\n".as_bytes(), 2).is_ok());
    }
}
