//! Plain-text formats: meshes, per-vertex CSV, one-form CSV, polylines and
//! flat `key=value` records. Floats are written with 17 significant digits
//! so every value round-trips exactly.

use std::fmt::{Display, Write as _};

use thiserror::Error;

use crate::field::{FieldError, ScalarField};
use crate::forms::OneForm;
use crate::mesh::{Mesh, MeshError, ShapeTag, VertexClass};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("data does not match the mesh: {0}")]
    Mismatch(String),
}

fn parse_err(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse { line, msg: msg.into() }
}

/// 17 significant digits, scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, line: usize) -> Result<f64, IoError> {
    s.trim().parse::<f64>().map_err(|_| parse_err(line, format!("invalid number {s:?}")))
}

fn parse_usize(s: &str, line: usize) -> Result<usize, IoError> {
    s.trim().parse::<usize>().map_err(|_| parse_err(line, format!("invalid index {s:?}")))
}

/// Ordered flat key-value record, one `key=value` per line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record {
    entries: Vec<(String, String)>,
}

impl Record {
    pub fn new() -> Record {
        Record::default()
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn push_f64(&mut self, key: &str, value: f64) {
        self.entries.push((key.to_string(), fmt_f64(value)));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Record, IoError> {
        let mut r = Record::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| parse_err(i + 1, "expected key=value"))?;
            if k.trim().is_empty() {
                return Err(parse_err(i + 1, "empty key"));
            }
            r.push(k.trim(), v.trim());
        }
        Ok(r)
    }
}

impl Display for Record {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Header `V T h`, then `x y class` per vertex, then `i j k` per triangle.
pub fn write_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", mesh.n_vertices(), mesh.n_triangles(), fmt_f64(mesh.h()));
    for (p, c) in mesh.vertices().iter().zip(mesh.classes()) {
        let _ = writeln!(out, "{} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), c.code());
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
    }
    out
}

pub fn read_mesh(text: &str) -> Result<Mesh, IoError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (n0, header) = lines.next().ok_or_else(|| parse_err(1, "empty mesh file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(parse_err(n0 + 1, "header must be `V T h`"));
    }
    let nv = parse_usize(fields[0], n0 + 1)?;
    let nt = parse_usize(fields[1], n0 + 1)?;
    let h = parse_f64(fields[2], n0 + 1)?;
    let mut vertices = Vec::with_capacity(nv);
    let mut classes = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (n, l) = lines.next().ok_or_else(|| parse_err(n0 + 1, "missing vertex lines"))?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 {
            return Err(parse_err(n + 1, "vertex line must be `x y class`"));
        }
        vertices.push([parse_f64(f[0], n + 1)?, parse_f64(f[1], n + 1)?]);
        let code = f[2].parse::<u8>().ok().and_then(VertexClass::from_code);
        classes.push(code.ok_or_else(|| parse_err(n + 1, format!("invalid class {:?}", f[2])))?);
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (n, l) = lines.next().ok_or_else(|| parse_err(n0 + 1, "missing triangle lines"))?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 {
            return Err(parse_err(n + 1, "triangle line must be `i j k`"));
        }
        triangles.push([parse_usize(f[0], n + 1)?, parse_usize(f[1], n + 1)?, parse_usize(f[2], n + 1)?]);
    }
    if let Some((n, _)) = lines.next() {
        return Err(parse_err(n + 1, "trailing data after the last triangle"));
    }
    Ok(Mesh::new(vertices, triangles, classes, h, ShapeTag::Custom("file".into()))?)
}

/// CSV with header `vertex,x,y,value`.
pub fn write_scalar_csv(mesh: &Mesh, field: &ScalarField) -> String {
    let mut out = String::from("vertex,x,y,value\n");
    for (i, (p, v)) in mesh.vertices().iter().zip(field.values()).enumerate() {
        let _ = writeln!(out, "{i},{},{},{}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(*v));
    }
    out
}

/// Reads a per-vertex CSV and checks that its coordinates match `mesh`.
pub fn read_scalar_csv(mesh: &Mesh, text: &str) -> Result<ScalarField, IoError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "vertex,x,y,value" => {}
        _ => return Err(parse_err(1, "expected header `vertex,x,y,value`")),
    }
    let mut values = vec![f64::NAN; mesh.n_vertices()];
    let mut seen = vec![false; mesh.n_vertices()];
    for (n, l) in lines {
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 4 {
            return Err(parse_err(n + 1, "expected 4 columns"));
        }
        let i = parse_usize(f[0], n + 1)?;
        if i >= mesh.n_vertices() || seen[i] {
            return Err(IoError::Mismatch(format!("vertex {i} out of range or repeated")));
        }
        let (x, y) = (parse_f64(f[1], n + 1)?, parse_f64(f[2], n + 1)?);
        let p = mesh.vertices()[i];
        let scale = 1e-9 * (1.0 + p[0].abs() + p[1].abs());
        if (x - p[0]).abs() > scale || (y - p[1]).abs() > scale {
            return Err(IoError::Mismatch(format!("vertex {i} is at ({x}, {y}), mesh has ({}, {})", p[0], p[1])));
        }
        values[i] = parse_f64(f[3], n + 1)?;
        seen[i] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(IoError::Mismatch(format!("vertex {i} missing")));
    }
    Ok(ScalarField::new(mesh, values)?)
}

/// CSV with header `triangle,p,q`.
pub fn write_form_csv(form: &OneForm) -> String {
    let mut out = String::from("triangle,p,q\n");
    for (t, c) in form.coeffs().iter().enumerate() {
        let _ = writeln!(out, "{t},{},{}", fmt_f64(c[0]), fmt_f64(c[1]));
    }
    out
}

pub fn read_form_csv(mesh: &Mesh, text: &str) -> Result<OneForm, IoError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "triangle,p,q" => {}
        _ => return Err(parse_err(1, "expected header `triangle,p,q`")),
    }
    let mut coeffs = vec![[f64::NAN; 2]; mesh.n_triangles()];
    let mut count = 0;
    for (n, l) in lines {
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 3 {
            return Err(parse_err(n + 1, "expected 3 columns"));
        }
        let t = parse_usize(f[0], n + 1)?;
        if t >= mesh.n_triangles() {
            return Err(IoError::Mismatch(format!("triangle {t} out of range")));
        }
        coeffs[t] = [parse_f64(f[1], n + 1)?, parse_f64(f[2], n + 1)?];
        count += 1;
    }
    if count != mesh.n_triangles() {
        return Err(IoError::Mismatch(format!("{count} rows for {} triangles", mesh.n_triangles())));
    }
    OneForm::new(mesh, coeffs).map_err(|e| IoError::Mismatch(e.to_string()))
}

/// CSV with header `x,y`.
pub fn write_polyline_csv(points: &[[f64; 2]]) -> String {
    let mut out = String::from("x,y\n");
    for p in points {
        let _ = writeln!(out, "{},{}", fmt_f64(p[0]), fmt_f64(p[1]));
    }
    out
}

pub fn read_polyline_csv(text: &str) -> Result<Vec<[f64; 2]>, IoError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "x,y" => {}
        _ => return Err(parse_err(1, "expected header `x,y`")),
    }
    lines
        .map(|(n, l)| {
            let (x, y) = l.split_once(',').ok_or_else(|| parse_err(n + 1, "expected 2 columns"))?;
            Ok([parse_f64(x, n + 1)?, parse_f64(y, n + 1)?])
        })
        .collect()
}
