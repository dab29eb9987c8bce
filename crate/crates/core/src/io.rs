//! Matrix Market and binary exports, CSV formatting.
//!
//! Binary formats are little-endian. A binary CSR file is the magic
//! `PLCSR001`, a complex flag byte, `n_rows`, `n_cols`, `nnz` as `u64`, then the
//! offsets and column indices as `u64` and the values as `f64` (re, im
//! interleaved when complex). A lifted-field file is the magic `PLFLD001`, a
//! `u64` header length, a JSON header, then each recorded slice in time order.

use crate::error::{Error, Result};
use crate::grid::PhaseSpaceGrid;
use crate::lift::{LiftedField, RecoveredField};
use crate::scalar::{Scalar, C64};
use crate::sparse::SparseMatrix;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Read, Write};

/// Shortest round-trip decimal.
fn num(x: f64) -> String {
    format!("{x:e}")
}

/// 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_matrix_market<T: Scalar, W: Write>(a: &SparseMatrix<T>, mut w: W) -> Result<()> {
    let field = if T::IS_COMPLEX { "complex" } else { "real" };
    writeln!(w, "%%MatrixMarket matrix coordinate {field} general")?;
    writeln!(w, "{} {} {}", a.n_rows, a.n_cols, a.nnz())?;
    for i in 0..a.n_rows {
        for (j, v) in a.row(i) {
            if T::IS_COMPLEX {
                writeln!(w, "{} {} {} {}", i + 1, j + 1, num(v.re()), num(v.im()))?;
            } else {
                writeln!(w, "{} {} {}", i + 1, j + 1, num(v.re()))?;
            }
        }
    }
    Ok(())
}

/// Read a coordinate Matrix Market file (real, integer or complex; general or symmetric).
pub fn read_matrix_market<R: BufRead>(r: R) -> Result<SparseMatrix<C64>> {
    let bad = |m: &str| Error::Config(format!("Matrix Market: {m}"));
    let mut lines = r.lines();
    let banner = lines.next().ok_or_else(|| bad("empty input"))??;
    let tok: Vec<String> = banner.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if tok.len() < 5 || tok[0] != "%%matrixmarket" || tok[1] != "matrix" || tok[2] != "coordinate" {
        return Err(bad("expected a coordinate matrix banner"));
    }
    let complex = match tok[3].as_str() {
        "real" | "integer" => false,
        "complex" => true,
        other => return Err(bad(&format!("unsupported field `{other}`"))),
    };
    let symmetry = tok[4].clone();
    if !["general", "symmetric", "hermitian"].contains(&symmetry.as_str()) {
        return Err(bad(&format!("unsupported symmetry `{symmetry}`")));
    }
    let mut size: Option<(usize, usize, usize)> = None;
    let mut trip = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if f.len() != 3 {
                    return Err(bad("size line needs three integers"));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| bad("bad size line"));
                size = Some((p(f[0])?, p(f[1])?, p(f[2])?));
                trip.reserve(size.unwrap().2);
            }
            Some((m, n, _)) => {
                let need = if complex { 4 } else { 3 };
                if f.len() != need {
                    return Err(bad(&format!("entry line `{t}`")));
                }
                let i: usize = f[0].parse().map_err(|_| bad("row index"))?;
                let j: usize = f[1].parse().map_err(|_| bad("column index"))?;
                if i == 0 || j == 0 || i > m || j > n {
                    return Err(bad(&format!("index ({i},{j}) out of range")));
                }
                let re: f64 = f[2].parse().map_err(|_| bad("value"))?;
                let im: f64 = if complex { f[3].parse().map_err(|_| bad("value"))? } else { 0.0 };
                let v = C64::new(re, im);
                trip.push((i - 1, j - 1, v));
                if symmetry != "general" && i != j {
                    let mirrored = if symmetry == "hermitian" { v.conj() } else { v };
                    trip.push((j - 1, i - 1, mirrored));
                }
            }
        }
    }
    let (m, n, nnz) = size.ok_or_else(|| bad("missing size line"))?;
    let stored = if symmetry == "general" { trip.len() } else { trip.iter().filter(|t| t.0 >= t.1).count() };
    if stored != nnz {
        return Err(bad(&format!("expected {nnz} entries, found {stored}")));
    }
    SparseMatrix::from_triplets(m, n, &trip)
}

const CSR_MAGIC: &[u8; 8] = b"PLCSR001";
const FIELD_MAGIC: &[u8; 8] = b"PLFLD001";

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(get_u64(r)?))
}

fn put_values<T: Scalar, W: Write>(w: &mut W, v: &[T]) -> Result<()> {
    for x in v {
        w.write_all(&x.re().to_le_bytes())?;
        if T::IS_COMPLEX {
            w.write_all(&x.im().to_le_bytes())?;
        }
    }
    Ok(())
}

fn get_values<T: Scalar, R: Read>(r: &mut R, n: usize) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let re = get_f64(r)?;
        let im = if T::IS_COMPLEX { get_f64(r)? } else { 0.0 };
        out.push(T::from_parts(re, im));
    }
    Ok(out)
}

pub fn write_csr_binary<T: Scalar, W: Write>(a: &SparseMatrix<T>, mut w: W) -> Result<()> {
    w.write_all(CSR_MAGIC)?;
    w.write_all(&[T::IS_COMPLEX as u8])?;
    for v in [a.n_rows, a.n_cols, a.nnz()] {
        put_u64(&mut w, v as u64)?;
    }
    for &o in &a.row_offsets {
        put_u64(&mut w, o as u64)?;
    }
    for &c in &a.col_indices {
        put_u64(&mut w, c as u64)?;
    }
    put_values(&mut w, &a.values)
}

pub fn read_csr_binary<T: Scalar, R: Read>(mut r: R) -> Result<SparseMatrix<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CSR_MAGIC {
        return Err(Error::Config("not a binary CSR file".into()));
    }
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    if (flag[0] == 1) != T::IS_COMPLEX {
        return Err(Error::Layout("binary CSR scalar type differs from the requested one".into()));
    }
    let n_rows = get_u64(&mut r)? as usize;
    let n_cols = get_u64(&mut r)? as usize;
    let nnz = get_u64(&mut r)? as usize;
    let row_offsets = (0..=n_rows).map(|_| get_u64(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let col_indices = (0..nnz).map(|_| get_u64(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let values = get_values(&mut r, nnz)?;
    let m = SparseMatrix { n_rows, n_cols, row_offsets, col_indices, values };
    m.validate()?;
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub grid: PhaseSpaceGrid,
    pub complex: bool,
    /// Index order of one slice, slowest first.
    pub layout: Vec<String>,
    pub time_indices: Vec<usize>,
    pub slice_len: usize,
}

pub fn write_lifted_field<T: Scalar, W: Write>(f: &LiftedField<T>, mut w: W) -> Result<()> {
    let header = FieldHeader {
        grid: f.grid.clone(),
        complex: T::IS_COMPLEX,
        layout: vec!["x".into(), if f.grid.kind.has_q() { "q" } else { "v" }.into(), "p".into()],
        time_indices: f.slices.keys().copied().collect(),
        slice_len: f.grid.state_size(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(FIELD_MAGIC)?;
    put_u64(&mut w, json.len() as u64)?;
    w.write_all(&json)?;
    for s in f.slices.values() {
        put_values(&mut w, s)?;
    }
    Ok(())
}

pub fn read_lifted_field<T: Scalar, R: Read>(mut r: R) -> Result<LiftedField<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Config("not a lifted-field file".into()));
    }
    let len = get_u64(&mut r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    let header: FieldHeader = serde_json::from_slice(&buf)?;
    if header.complex != T::IS_COMPLEX {
        return Err(Error::Layout("lifted-field scalar type differs from the requested one".into()));
    }
    let mut f = LiftedField::new(header.grid);
    for n in header.time_indices {
        let s = get_values(&mut r, header.slice_len)?;
        f.insert(n, s)?;
    }
    Ok(f)
}

/// Write rows as CSV with LF endings; the header row is mandatory.
pub fn write_csv<W: Write>(mut w: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if header.is_empty() {
        return Err(Error::Config("CSV needs a header row".into()));
    }
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::Layout(format!("CSV row has {} fields, header {}", r.len(), header.len())));
        }
        writeln!(w, "{}", r.join(","))?;
    }
    Ok(())
}

/// Columns `n, j, i_0.., x_0.., [v], value` (or `re, im` when complex).
pub fn recovered_rows<T: Scalar>(field: &RecoveredField<T>, grid: &PhaseSpaceGrid) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["n".to_string(), "j".to_string()];
    header.extend((0..grid.d).map(|a| format!("i{a}")));
    header.extend((0..grid.d).map(|a| format!("x{a}")));
    if field.inner > 1 {
        header.push("v_index".into());
    }
    if T::IS_COMPLEX {
        header.push("re".into());
        header.push("im".into());
    } else {
        header.push("value".into());
    }
    let mut rows = Vec::with_capacity(field.values.len());
    for j in 0..grid.x_cells() {
        let multi = grid.x_multi(j);
        let x = grid.x_point(j);
        for k in 0..field.inner {
            let mut r = vec![field.time_index.to_string(), j.to_string()];
            r.extend(multi.iter().map(|i| i.to_string()));
            r.extend(x.iter().map(|v| fmt17(*v)));
            if field.inner > 1 {
                r.push(k.to_string());
            }
            let v = field.at(j, k);
            r.push(fmt17(v.re()));
            if T::IS_COMPLEX {
                r.push(fmt17(v.im()));
            }
            rows.push(r);
        }
    }
    (header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_market_round_trip() {
        let a = SparseMatrix::from_triplets(3, 2, &[(0, 0, 0.1), (2, 1, -1.0 / 3.0), (1, 0, 1e-300)]).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&a, &mut buf).unwrap();
        let b = read_matrix_market(buf.as_slice()).unwrap();
        assert_eq!(b, a.to_complex());
    }

    #[test]
    fn symmetric_input_is_mirrored() {
        let txt = "%%MatrixMarket matrix coordinate real symmetric\n% c\n2 2 2\n1 1 2\n2 1 -1\n";
        let a = read_matrix_market(txt.as_bytes()).unwrap();
        assert_eq!(a.get(0, 1), C64::new(-1.0, 0.0));
        assert_eq!(a.get(1, 0), C64::new(-1.0, 0.0));
    }

    #[test]
    fn binary_csr_round_trip() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 1, C64::new(1.5, -2.0)), (1, 0, C64::new(0.0, 1.0))]).unwrap();
        let mut buf = Vec::new();
        write_csr_binary(&a, &mut buf).unwrap();
        assert_eq!(read_csr_binary::<C64, _>(buf.as_slice()).unwrap(), a);
        assert!(read_csr_binary::<f64, _>(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_digits() {
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        let mut buf = Vec::new();
        write_csv(&mut buf, &["a", "b"], &[vec!["1".into(), "2".into()]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1,2\n");
    }
}
