//! Binary and text file formats.
//!
//! All binary formats are little-endian and start with a 4-byte magic and a
//! `u32` version (currently 1).
//!
//! | file  | layout after magic + version |
//! |-------|------------------------------|
//! | AOTM  | `u8 domain, u32 n, u32 d, n*d f64 atoms (row-major), n f64 weights` |
//! | AOTP  | `u32 n, u32 m, f64 eps, n*m f64 plan (row-major)` |
//! | AOTW  | `u8 family, u8 trained_by, u32 L, u32 d, f64 eps, f64 lambda, L*d f64 thetas, L f64 omega` |
//!
//! In AOTW the low nibble of `family` is the projection family (0 linear,
//! 1 stereographic) and the high nibble is the ambient cost (0 squared
//! Euclidean, 1 Euclidean, 2 geodesic).
//!
//! CSV exports: measures use the header `x0,..,x{d-1},weight`; plans use
//! `row,col,mass` with one line per entry.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use crate::amortize::{AmortizedModel, TrainedBy};
use crate::error::{AotError, Result};
use crate::measures::{CostFamily, DiscreteMeasure, Domain, TransportPlan};
use crate::slicing::{ProjectionFamily, ProjectionSet};

pub const MEASURE_MAGIC: [u8; 4] = *b"AOTM";
pub const PLAN_MAGIC: [u8; 4] = *b"AOTP";
pub const MODEL_MAGIC: [u8; 4] = *b"AOTW";
pub const VERSION: u32 = 1;

/// Loaded weights may deviate from unit mass by at most this much.
pub const LOAD_MASS_TOL: f64 = 1e-6;

fn read_header<R: Read>(r: &mut R, expected: [u8; 4]) -> Result<()> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found).map_err(|_| AotError::BadMagic { expected, found })?;
    if found != expected {
        return Err(AotError::BadMagic { expected, found });
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(AotError::BadVersion(version));
    }
    Ok(())
}

fn write_header<W: Write>(w: &mut W, magic: [u8; 4]) -> Result<()> {
    w.write_all(&magic)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; count];
    r.read_f64_into::<LittleEndian>(&mut out)
        .map_err(|e| AotError::Malformed(format!("expected {count} values: {e}")))?;
    Ok(out)
}

fn write_f64s<'a, W: Write>(w: &mut W, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    for v in values {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| AotError::Malformed(format!("size {v} exceeds u32")))
}

pub fn encode_measure<W: Write>(w: &mut W, m: &DiscreteMeasure) -> Result<()> {
    write_header(w, MEASURE_MAGIC)?;
    w.write_u8(m.domain().tag())?;
    w.write_u32::<LittleEndian>(to_u32(m.len())?)?;
    w.write_u32::<LittleEndian>(to_u32(m.dim())?)?;
    write_f64s(w, m.atoms().iter())?;
    write_f64s(w, m.weights().iter())
}

/// Decodes a measure, renormalizing weights whose mass is within `1e-6` of 1.
pub fn decode_measure<R: Read>(r: &mut R) -> Result<DiscreteMeasure> {
    read_header(r, MEASURE_MAGIC)?;
    let tag = r.read_u8()?;
    let domain = Domain::from_tag(tag).ok_or_else(|| AotError::Malformed(format!("domain tag {tag}")))?;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let d = r.read_u32::<LittleEndian>()? as usize;
    let atoms = Array2::from_shape_vec((n, d), read_f64s(r, n * d)?)
        .map_err(|e| AotError::Malformed(e.to_string()))?;
    let weights = Array1::from(read_f64s(r, n)?);
    for (index, &value) in weights.iter().enumerate() {
        if !(value > 0.0) {
            return Err(AotError::PositivityViolation { index, value });
        }
    }
    let total = weights.sum();
    if (total - 1.0).abs() > LOAD_MASS_TOL {
        return Err(AotError::MassNotNormalizable(total));
    }
    DiscreteMeasure::new(atoms, weights, domain)
}

pub fn write_measure(path: &Path, m: &DiscreteMeasure) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_measure(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn read_measure(path: &Path) -> Result<DiscreteMeasure> {
    decode_measure(&mut BufReader::new(File::open(path)?))
}

pub fn encode_plan<W: Write>(w: &mut W, plan: &TransportPlan) -> Result<()> {
    let (n, m) = plan.shape();
    write_header(w, PLAN_MAGIC)?;
    w.write_u32::<LittleEndian>(to_u32(n)?)?;
    w.write_u32::<LittleEndian>(to_u32(m)?)?;
    w.write_f64::<LittleEndian>(plan.epsilon())?;
    write_f64s(w, plan.to_dense().iter())
}

pub fn decode_plan<R: Read>(r: &mut R) -> Result<TransportPlan> {
    read_header(r, PLAN_MAGIC)?;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let m = r.read_u32::<LittleEndian>()? as usize;
    let eps = r.read_f64::<LittleEndian>()?;
    let p = Array2::from_shape_vec((n, m), read_f64s(r, n * m)?)
        .map_err(|e| AotError::Malformed(e.to_string()))?;
    TransportPlan::dense(p, eps)
}

pub fn write_plan(path: &Path, plan: &TransportPlan) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_plan(&mut w, plan)?;
    w.flush()?;
    Ok(())
}

pub fn read_plan(path: &Path) -> Result<TransportPlan> {
    decode_plan(&mut BufReader::new(File::open(path)?))
}

pub fn encode_model<W: Write>(w: &mut W, model: &AmortizedModel) -> Result<()> {
    write_header(w, MODEL_MAGIC)?;
    w.write_u8(model.pset.family().tag() | (model.cost.tag() << 4))?;
    w.write_u8(model.trained_by.tag())?;
    w.write_u32::<LittleEndian>(to_u32(model.pset.len())?)?;
    w.write_u32::<LittleEndian>(to_u32(model.pset.dim())?)?;
    w.write_f64::<LittleEndian>(model.epsilon)?;
    w.write_f64::<LittleEndian>(model.ridge_lambda)?;
    write_f64s(w, model.pset.thetas().iter())?;
    write_f64s(w, model.omega.iter())
}

pub fn decode_model<R: Read>(r: &mut R) -> Result<AmortizedModel> {
    read_header(r, MODEL_MAGIC)?;
    let packed = r.read_u8()?;
    let family = ProjectionFamily::from_tag(packed & 0x0f)
        .ok_or_else(|| AotError::Malformed(format!("projection family {}", packed & 0x0f)))?;
    let cost = CostFamily::from_tag(packed >> 4)
        .ok_or_else(|| AotError::Malformed(format!("cost family {}", packed >> 4)))?;
    let tb = r.read_u8()?;
    let trained_by = TrainedBy::from_tag(tb).ok_or_else(|| AotError::Malformed(format!("trained_by {tb}")))?;
    let l = r.read_u32::<LittleEndian>()? as usize;
    let d = r.read_u32::<LittleEndian>()? as usize;
    let eps = r.read_f64::<LittleEndian>()?;
    let lambda = r.read_f64::<LittleEndian>()?;
    let thetas = Array2::from_shape_vec((l, d), read_f64s(r, l * d)?)
        .map_err(|e| AotError::Malformed(e.to_string()))?;
    let omega = Array1::from(read_f64s(r, l)?);
    let pset = ProjectionSet::from_thetas(family, thetas)?;
    AmortizedModel::new(omega, pset, cost, eps, lambda, trained_by)
}

pub fn write_model(path: &Path, model: &AmortizedModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<AmortizedModel> {
    decode_model(&mut BufReader::new(File::open(path)?))
}

pub fn measure_to_csv<W: Write>(w: &mut W, m: &DiscreteMeasure) -> Result<()> {
    let header: Vec<String> = (0..m.dim()).map(|k| format!("x{k}")).chain(["weight".into()]).collect();
    writeln!(w, "{}", header.join(","))?;
    for (row, wt) in m.atoms().outer_iter().zip(m.weights()) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).chain([format!("{wt:e}")]).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn plan_to_csv<W: Write>(w: &mut W, plan: &TransportPlan) -> Result<()> {
    writeln!(w, "row,col,mass")?;
    for ((i, j), v) in plan.to_dense().indexed_iter() {
        writeln!(w, "{i},{j},{v:e}")?;
    }
    Ok(())
}

/// 8-bit binary PGM heatmap of a plan, scaled to its largest entry.
pub fn plan_to_pgm<W: Write>(w: &mut W, plan: &TransportPlan) -> Result<()> {
    let p = plan.to_dense();
    let peak = p.iter().copied().fold(0.0, f64::max);
    write!(w, "P5\n{} {}\n255\n", p.ncols(), p.nrows())?;
    let bytes: Vec<u8> = p
        .iter()
        .map(|v| if peak > 0.0 { (255.0 * v / peak).round() as u8 } else { 0 })
        .collect();
    w.write_all(&bytes)?;
    Ok(())
}
