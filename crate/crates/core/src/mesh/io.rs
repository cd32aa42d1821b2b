//! Legacy VTK export and the plain-text mesh format.
//!
//! The text format is line oriented; `#` starts a comment and blank lines are ignored:
//!
//! ```text
//! vertices 4
//! 0 0
//! 1 0
//! 1 1
//! 0 1
//! elements 2
//! tri 1 2 0
//! tri 3 0 2
//! ```
//!
//! Vertex ids are zero based. Elements may be `tri a b c` or `quad a b c d` (a
//! parallelogram). Clockwise elements are reoriented on import, and the longest edge of
//! each imported triangle becomes its refinement edge.

use std::io::{BufRead, Write};

use super::{dist, signed_area, Element, ElementKind, Mesh, Point};
use crate::error::{Error, Result};

/// Named per-cell or per-point scalar data for VTK output.
#[derive(Clone, Copy, Debug)]
pub struct DataField<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

/// Writes `mesh` as a legacy ASCII VTK unstructured grid.
pub fn write_vtk<W: Write>(
    mut w: W,
    mesh: &Mesh,
    cell_data: &[DataField<'_>],
    point_data: &[DataField<'_>],
) -> Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "monofem mesh")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_vertices())?;
    for p in mesh.vertices() {
        writeln!(w, "{:.17e} {:.17e} 0", p[0], p[1])?;
    }
    let size: usize = mesh.elements().iter().map(|e| e.vertices().len() + 1).sum();
    writeln!(w, "CELLS {} {}", mesh.n_elements(), size)?;
    for el in mesh.elements() {
        let vs = el.vertices();
        write!(w, "{}", vs.len())?;
        for v in vs {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {}", mesh.n_elements())?;
    for el in mesh.elements() {
        writeln!(w, "{}", el.kind().vtk_type())?;
    }
    write_fields(&mut w, "CELL_DATA", mesh.n_elements(), cell_data)?;
    write_fields(&mut w, "POINT_DATA", mesh.n_vertices(), point_data)?;
    Ok(())
}

fn write_fields<W: Write>(w: &mut W, section: &str, n: usize, fields: &[DataField<'_>]) -> Result<()> {
    if fields.is_empty() {
        return Ok(());
    }
    writeln!(w, "{section} {n}")?;
    for f in fields {
        if f.values.len() != n {
            return Err(Error::InvalidArgument(format!(
                "field {} has {} values, expected {n}",
                f.name,
                f.values.len()
            )));
        }
        writeln!(w, "SCALARS {} double 1", f.name)?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in f.values {
            writeln!(w, "{v:.17e}")?;
        }
    }
    Ok(())
}

/// Writes `mesh` in the plain-text format accepted by [`read_mesh_text`].
pub fn write_mesh_text<W: Write>(mut w: W, mesh: &Mesh) -> Result<()> {
    writeln!(w, "vertices {}", mesh.n_vertices())?;
    for p in mesh.vertices() {
        writeln!(w, "{:.17e} {:.17e}", p[0], p[1])?;
    }
    writeln!(w, "elements {}", mesh.n_elements())?;
    for el in mesh.elements() {
        let tag = match el.kind() {
            ElementKind::Triangle => "tri",
            ElementKind::Quad => "quad",
        };
        write!(w, "{tag}")?;
        for v in el.vertices() {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a mesh in the plain-text format described in the module docs.
pub fn read_mesh_text<R: BufRead>(r: R) -> Result<Mesh> {
    let mut lines = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim().to_string();
        if !body.is_empty() {
            lines.push((i + 1, body));
        }
    }
    let mut it = lines.into_iter();
    let parse_err = |line: usize, message: String| Error::Parse { line, message };

    let (ln, header) = it.next().ok_or_else(|| parse_err(0, "empty mesh file".into()))?;
    let n_vertices = section_count(ln, &header, "vertices")?;
    let mut vertices: Vec<Point> = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let (ln, body) = it
            .next()
            .ok_or_else(|| parse_err(ln, "unexpected end of file in vertex list".into()))?;
        let nums: Vec<f64> = body
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(ln, format!("bad coordinate: {e}")))?;
        if nums.len() != 2 || !nums.iter().all(|x| x.is_finite()) {
            return Err(parse_err(ln, "expected two finite coordinates".into()));
        }
        vertices.push([nums[0], nums[1]]);
    }

    let (ln, header) = it
        .next()
        .ok_or_else(|| parse_err(0, "missing elements section".into()))?;
    let n_elements = section_count(ln, &header, "elements")?;
    let mut elements = Vec::with_capacity(n_elements);
    for _ in 0..n_elements {
        let (ln, body) = it
            .next()
            .ok_or_else(|| parse_err(ln, "unexpected end of file in element list".into()))?;
        let mut toks = body.split_whitespace();
        let tag = toks.next().unwrap_or_default();
        let ids: Vec<usize> = toks
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(ln, format!("bad vertex id: {e}")))?;
        if let Some(&bad) = ids.iter().find(|&&v| v >= vertices.len()) {
            return Err(parse_err(ln, format!("vertex id {bad} out of range")));
        }
        let el = match (tag, ids.len()) {
            ("tri", 3) => oriented_triangle(&vertices, [ids[0], ids[1], ids[2]]),
            ("quad", 4) => {
                let q = Element::quad(ids[0], ids[1], ids[2], ids[3]);
                if signed_area(&vertices, &q) < 0.0 {
                    Element::quad(ids[0], ids[3], ids[2], ids[1])
                } else {
                    q
                }
            }
            _ => return Err(parse_err(ln, format!("expected `tri a b c` or `quad a b c d`, got `{body}`"))),
        };
        elements.push(el);
    }
    if let Some((ln, body)) = it.next() {
        return Err(parse_err(ln, format!("trailing content `{body}`")));
    }
    Mesh::new(vertices, elements)
}

fn section_count(line: usize, header: &str, name: &str) -> Result<usize> {
    let mut toks = header.split_whitespace();
    match (toks.next(), toks.next().map(str::parse::<usize>), toks.next()) {
        (Some(tag), Some(Ok(n)), None) if tag == name => Ok(n),
        _ => Err(Error::Parse {
            line,
            message: format!("expected `{name} <count>`"),
        }),
    }
}

/// Counter-clockwise triangle whose local vertex 0 is opposite the longest edge.
fn oriented_triangle(vertices: &[Point], ids: [usize; 3]) -> Element {
    let mut t = Element::triangle(ids[0], ids[1], ids[2]);
    if signed_area(vertices, &t) < 0.0 {
        t = Element::triangle(ids[0], ids[2], ids[1]);
    }
    let vs = [t.verts[0], t.verts[1], t.verts[2]];
    let opposite = |k: usize| dist(vertices[vs[(k + 1) % 3]], vertices[vs[(k + 2) % 3]]);
    let mut best = 0;
    for k in 1..3 {
        if opposite(k) > opposite(best) * (1.0 + 1e-12) {
            best = k;
        }
    }
    Element::triangle(vs[best], vs[(best + 1) % 3], vs[(best + 2) % 3])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let m = Mesh::unit_square_tri(3).unwrap();
        let mut buf = Vec::new();
        write_mesh_text(&mut buf, &m).unwrap();
        let back = read_mesh_text(&buf[..]).unwrap();
        assert_eq!(back.n_elements(), m.n_elements());
        assert_eq!(back.n_vertices(), m.n_vertices());
        assert_eq!(back.elements(), m.elements());
    }

    #[test]
    fn import_reorients_and_labels_longest_edge() {
        let src = "# a single triangle, clockwise\nvertices 3\n0 0\n0 1\n1 0\nelements 1\ntri 0 1 2\n";
        let m = read_mesh_text(src.as_bytes()).unwrap();
        assert!(m.area(0) > 0.0);
        let [a, b] = m.element(0).edge(1).map(|v| m.vertex(v));
        assert!((dist(a, b) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn import_errors_carry_line_numbers() {
        let src = "vertices 2\n0 0\n1 x\n";
        match read_mesh_text(src.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let src = "vertices 3\n0 0\n1 0\n0 1\nelements 1\ntri 0 1 5\n";
        assert!(matches!(read_mesh_text(src.as_bytes()), Err(Error::Parse { line: 6, .. })));
    }

    #[test]
    fn vtk_layout() {
        let m = Mesh::unit_square_quad(2).unwrap();
        let eta = vec![1.0; 4];
        let mut buf = Vec::new();
        write_vtk(&mut buf, &m, &[DataField { name: "eta", values: &eta }], &[]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("POINTS 9 double"));
        assert!(s.contains("CELLS 4 20"));
        assert!(s.contains("CELL_TYPES 4"));
        assert!(s.contains("CELL_DATA 4"));
        assert!(s.contains("SCALARS eta double 1"));
        assert_eq!(s.lines().filter(|l| *l == "9").count(), 4);
        let bad = [1.0];
        assert!(write_vtk(Vec::new(), &m, &[DataField { name: "x", values: &bad }], &[]).is_err());
    }
}
