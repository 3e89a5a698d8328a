//! Plain-text mesh and field files.
//!
//! Mesh: a header `dim N nodes M cells K`, then `M` lines of `N`
//! coordinates, then `K` lines of `N + 1` node indices followed by a region
//! tag. A field file is a mesh block followed by `values M` and one nodal
//! value per line. Floats are written in shortest round-trip form, so a
//! reloaded field reproduces the written values exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Mesh, Region};
use crate::error::{Error, Result};

pub(crate) fn mesh_to_string(mesh: &Mesh) -> String {
    let mut out = String::new();
    let dim = mesh.dim();
    writeln!(out, "dim {dim} nodes {} cells {}", mesh.num_nodes(), mesh.num_cells()).unwrap();
    for i in 0..mesh.num_nodes() {
        let line: Vec<String> = mesh.node(i).iter().map(|x| format!("{x}")).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    for c in 0..mesh.num_cells() {
        let line: Vec<String> = mesh.cell(c).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{} {}", line.join(" "), mesh.region(c)).unwrap();
    }
    out
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut lines = Lines::new(path, &text);
    let mesh = parse_mesh(&mut lines)?;
    if let Some((line, _)) = lines.next_nonempty() {
        return Err(lines.err(line, "trailing content after mesh block"));
    }
    Ok(mesh)
}

/// Writes a mesh block followed by one value per node.
pub fn write_field(path: impl AsRef<Path>, mesh: &Mesh, values: &[f64]) -> Result<()> {
    if values.len() != mesh.num_nodes() {
        return Err(Error::InvalidArgument(format!(
            "field has {} values for {} nodes",
            values.len(),
            mesh.num_nodes()
        )));
    }
    let mut out = mesh_to_string(mesh);
    writeln!(out, "values {}", values.len()).unwrap();
    for v in values {
        writeln!(out, "{v}").unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<(Mesh, Vec<f64>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut lines = Lines::new(path, &text);
    let mesh = parse_mesh(&mut lines)?;
    let (line, header) = lines.next_nonempty().ok_or_else(|| lines.err(0, "missing values block"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 2 || tokens[0] != "values" {
        return Err(lines.err(line, "expected 'values <count>'"));
    }
    let count: usize = tokens[1].parse().map_err(|_| lines.err(line, "bad value count"))?;
    if count != mesh.num_nodes() {
        return Err(lines.err(line, "value count does not match node count"));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let (line, text) = lines.next_nonempty().ok_or_else(|| lines.err(0, "unexpected end of file"))?;
        values.push(text.trim().parse().map_err(|_| lines.err(line, "bad value"))?);
    }
    Ok((mesh, values))
}

struct Lines<'a> {
    path: &'a Path,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        Lines { path, iter: text.lines().enumerate() }
    }

    fn next_nonempty(&mut self) -> Option<(usize, &'a str)> {
        self.iter.by_ref().map(|(k, l)| (k + 1, l)).find(|(_, l)| !l.trim().is_empty())
    }

    fn err(&self, line: usize, msg: &str) -> Error {
        Error::Parse { path: self.path.to_path_buf(), line, msg: msg.to_string() }
    }
}

fn parse_mesh(lines: &mut Lines<'_>) -> Result<Mesh> {
    let (line, header) = lines.next_nonempty().ok_or_else(|| lines.err(0, "empty file"))?;
    let t: Vec<&str> = header.split_whitespace().collect();
    if t.len() != 6 || t[0] != "dim" || t[2] != "nodes" || t[4] != "cells" {
        return Err(lines.err(line, "expected 'dim N nodes M cells K'"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| lines.err(line, "bad header count"));
    let (dim, m, k) = (num(t[1])?, num(t[3])?, num(t[5])?);
    if dim != 1 && dim != 2 {
        return Err(Error::UnsupportedDimension(dim));
    }
    let mut coords = Vec::with_capacity(dim * m);
    for _ in 0..m {
        let (line, text) = lines.next_nonempty().ok_or_else(|| lines.err(0, "unexpected end of file"))?;
        let row: Vec<&str> = text.split_whitespace().collect();
        if row.len() != dim {
            return Err(lines.err(line, "wrong number of coordinates"));
        }
        for x in row {
            coords.push(x.parse::<f64>().map_err(|_| lines.err(line, "bad coordinate"))?);
        }
    }
    let mut cells = Vec::with_capacity((dim + 1) * k);
    let mut regions = Vec::with_capacity(k);
    for _ in 0..k {
        let (line, text) = lines.next_nonempty().ok_or_else(|| lines.err(0, "unexpected end of file"))?;
        let row: Vec<&str> = text.split_whitespace().collect();
        if row.len() != dim + 2 {
            return Err(lines.err(line, "wrong number of cell entries"));
        }
        for v in &row[..=dim] {
            cells.push(v.parse::<usize>().map_err(|_| lines.err(line, "bad node index"))?);
        }
        regions.push(row[dim + 1].parse::<Region>().map_err(|_| lines.err(line, "unknown region tag"))?);
    }
    Mesh::new(dim, coords, cells, regions)
}
