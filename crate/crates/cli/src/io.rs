//! Plain text formats for meshes, fields, vectors, sparse matrices and
//! basis functions. Floating point values are written with 17 significant
//! digits so that files round-trip exactly.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use stokes_lod_core::basis::{BasisFunction, CorrectorBasis, SparseVector};
use stokes_lod_core::coeffs::PiecewiseConstantField;
use stokes_lod_core::mesh::Mesh;
use stokes_lod_core::sparse::{CscMatrix, TripletMatrix};

use crate::config::{format_order, parse_order};
use crate::error::{HarnessError, Result};

pub const MANIFEST: &str = "manifest.txt";

/// `{:.16e}` for finite values, `nan`/`inf`/`-inf` otherwise.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

/// Line reader that skips blank lines and `#` comments and reports errors
/// with the line number.
struct Lines<'a> {
    origin: &'a Path,
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, origin: &'a Path) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Lines { origin, lines, pos: 0 }
    }

    fn error(&self, line: usize, message: impl Into<String>) -> HarnessError {
        HarnessError::Parse {
            path: self.origin.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<(usize, &'a str)> {
        let last = self.lines.last().map_or(0, |l| l.0);
        let item = self.lines.get(self.pos).copied().ok_or_else(|| self.error(last, "unexpected end of file"))?;
        self.pos += 1;
        Ok(item)
    }

    /// Parses whitespace separated values of one line.
    fn values<T: FromStr, const N: usize>(&mut self) -> Result<[T; N]> {
        let (line, text) = self.next()?;
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != N {
            return Err(self.error(line, format!("expected {N} values, found {}", parts.len())));
        }
        let mut out = Vec::with_capacity(N);
        for p in parts {
            out.push(p.parse().map_err(|_| self.error(line, format!("invalid value {p:?}")))?);
        }
        Ok(out.try_into().unwrap_or_else(|_| unreachable!()))
    }

    /// Reads `key value` and returns the value text.
    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let (line, text) = self.next()?;
        match text.split_once(char::is_whitespace) {
            Some((k, v)) if k == key => Ok(v.trim()),
            _ => Err(self.error(line, format!("expected `{key} <value>`"))),
        }
    }

    /// Reads a one-line header `tag k1 v1 k2 v2 ...` with integer values.
    fn header<const N: usize>(&mut self, tag: &str, keys: [&str; N]) -> Result<[usize; N]> {
        let (line, text) = self.next()?;
        let mut parts = text.split_whitespace();
        let mut layout: Vec<String> = keys.iter().map(|k| format!("{k} <n>")).collect();
        if !tag.is_empty() {
            layout.insert(0, tag.to_string());
        }
        let expected = || self.error(line, format!("expected `{}`", layout.join(" ")));
        if !tag.is_empty() && parts.next() != Some(tag) {
            return Err(expected());
        }
        let mut out = [0usize; N];
        for (slot, key) in out.iter_mut().zip(keys) {
            if parts.next() != Some(key) {
                return Err(expected());
            }
            *slot = parts.next().and_then(|v| v.parse().ok()).ok_or_else(expected)?;
        }
        match parts.next() {
            Some(_) => Err(expected()),
            None => Ok(out),
        }
    }

    fn keyed_parse<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let line = self.lines.get(self.pos).map_or(0, |l| l.0);
        let v = self.keyed(key)?;
        v.parse().map_err(|_| self.error(line, format!("invalid value {v:?} for {key}")))
    }

    fn finish(&self) -> Result<()> {
        match self.lines.get(self.pos) {
            Some(&(line, _)) => Err(self.error(line, "trailing content")),
            None => Ok(()),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(HarnessError::io(path))
}

/// Writes a file through a buffered writer.
pub fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(HarnessError::io(path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(HarnessError::io(path))
}

pub fn write_mesh(w: &mut dyn Write, mesh: &Mesh) -> std::io::Result<()> {
    writeln!(w, "vertices {} triangles {}", mesh.num_vertices(), mesh.num_triangles())?;
    for p in mesh.vertices() {
        writeln!(w, "{} {}", fmt_f64(p[0]), fmt_f64(p[1]))?;
    }
    for t in mesh.triangles() {
        writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

pub fn parse_mesh(text: &str, origin: &Path) -> Result<Mesh> {
    let mut r = Lines::new(text, origin);
    let [nv, nt] = r.header("", ["vertices", "triangles"])?;
    let vertices = (0..nv).map(|_| r.values::<f64, 2>()).collect::<Result<Vec<_>>>()?;
    let triangles = (0..nt).map(|_| r.values::<usize, 3>()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    if let Some(t) = triangles.iter().find(|t| t.iter().any(|&v| v >= nv)) {
        return Err(HarnessError::Parse {
            path: origin.to_path_buf(),
            line: 0,
            message: format!("triangle {t:?} references a missing vertex"),
        });
    }
    Ok(Mesh::from_coordinates(&vertices, triangles)?)
}

pub fn read_mesh(path: &Path) -> Result<Mesh> {
    parse_mesh(&read_text(path)?, path)
}

/// Piecewise constant field: level and one value per triangle.
pub fn write_field(w: &mut dyn Write, field: &PiecewiseConstantField) -> std::io::Result<()> {
    writeln!(w, "field level {} count {}", field.level(), field.values().len())?;
    field.values().iter().try_for_each(|v| writeln!(w, "{}", fmt_f64(*v)))
}

pub fn parse_field(text: &str, origin: &Path) -> Result<PiecewiseConstantField> {
    let mut r = Lines::new(text, origin);
    let header_line = r.lines.get(r.pos).map_or(0, |l| l.0);
    let [level, count] = r.header("field", ["level", "count"])?;
    let level = u32::try_from(level).map_err(|_| r.error(header_line, format!("level {level} out of range")))?;
    let values = (0..count).map(|_| r.values::<f64, 1>().map(|[v]| v)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(PiecewiseConstantField::new(level, values))
}

pub fn read_field(path: &Path) -> Result<PiecewiseConstantField> {
    parse_field(&read_text(path)?, path)
}

pub fn write_vector(w: &mut dyn Write, values: &[f64]) -> std::io::Result<()> {
    writeln!(w, "values {}", values.len())?;
    for v in values {
        writeln!(w, "{}", fmt_f64(*v))?;
    }
    Ok(())
}

fn read_values(r: &mut Lines<'_>) -> Result<Vec<f64>> {
    let n: usize = r.keyed_parse("values")?;
    (0..n).map(|_| r.values::<f64, 1>().map(|[v]| v)).collect()
}

pub fn parse_vector(text: &str, origin: &Path) -> Result<Vec<f64>> {
    let mut r = Lines::new(text, origin);
    let v = read_values(&mut r)?;
    r.finish()?;
    Ok(v)
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    parse_vector(&read_text(path)?, path)
}

/// Matrix Market coordinate format, 1-based indices.
pub fn write_matrix_market(w: &mut dyn Write, m: &CscMatrix) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    for (row, col, v) in m.iter() {
        writeln!(w, "{} {} {}", row + 1, col + 1, fmt_f64(v))?;
    }
    Ok(())
}

pub fn parse_matrix_market(text: &str, origin: &Path) -> Result<CscMatrix> {
    let err = |line: usize, message: &str| HarnessError::Parse {
        path: origin.to_path_buf(),
        line,
        message: message.into(),
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, h)) if h.to_ascii_lowercase().starts_with("%%matrixmarket matrix coordinate real general") => {}
        _ => return Err(err(1, "expected a real general coordinate Matrix Market header")),
    }
    let mut body = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (line, size) = body.next().ok_or_else(|| err(1, "missing size line"))?;
    let dims: Vec<usize> = size.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|_| err(line, "invalid size line"))?;
    let [nrows, ncols, nnz] = dims[..] else {
        return Err(err(line, "size line needs three integers"));
    };
    let mut t = TripletMatrix::with_capacity(nrows, ncols, nnz);
    for _ in 0..nnz {
        let (line, entry) = body.next().ok_or_else(|| err(line, "missing entries"))?;
        let parts: Vec<&str> = entry.split_whitespace().collect();
        let parsed = match parts[..] {
            [i, j, v] => i.parse::<usize>().ok().zip(j.parse::<usize>().ok()).zip(v.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some(((i, j), v)) if (1..=nrows).contains(&i) && (1..=ncols).contains(&j) => t.push(i - 1, j - 1, v),
            _ => return Err(err(line, "invalid entry")),
        }
    }
    if let Some((line, _)) = body.next() {
        return Err(err(line, "more entries than declared"));
    }
    Ok(t.to_csc())
}

pub fn read_matrix_market(path: &Path) -> Result<CscMatrix> {
    parse_matrix_market(&read_text(path)?, path)
}

fn write_sparse(w: &mut dyn Write, name: &str, v: &SparseVector) -> std::io::Result<()> {
    writeln!(w, "{name} {}", v.len())?;
    for (i, x) in v.iter() {
        writeln!(w, "{i} {}", fmt_f64(x))?;
    }
    Ok(())
}

fn read_sparse(r: &mut Lines<'_>, name: &str) -> Result<SparseVector> {
    let n: usize = r.keyed_parse(name)?;
    let mut indices = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let [i, x] = r.values::<String, 2>()?;
        let line = r.lines[r.pos - 1].0;
        let i: usize = i.parse().map_err(|_| r.error(line, format!("invalid index {i:?}")))?;
        if indices.last().is_some_and(|&last| last >= i) {
            return Err(r.error(line, "indices must increase"));
        }
        indices.push(i);
        values.push(x.parse().map_err(|_| r.error(line, format!("invalid value {x:?}")))?);
    }
    Ok(SparseVector {
        indices: Arc::from(indices),
        values,
    })
}

pub fn write_basis_function(w: &mut dyn Write, bf: &BasisFunction) -> std::io::Result<()> {
    writeln!(w, "face {}", bf.face)?;
    writeln!(w, "component {}", bf.component)?;
    writeln!(w, "order {}", format_order(bf.order))?;
    write_sparse(w, "velocity", &bf.velocity)?;
    write_sparse(w, "pressure", &bf.pressure)?;
    write_sparse(w, "multipliers", &bf.multipliers)?;
    write_sparse(w, "divergence", &bf.divergence)
}

pub fn parse_basis_function(text: &str, origin: &Path) -> Result<BasisFunction> {
    let mut r = Lines::new(text, origin);
    let face = r.keyed_parse("face")?;
    let component = r.keyed_parse("component")?;
    let order = parse_order(r.keyed("order")?).map_err(|m| r.error(r.lines[r.pos - 1].0, m))?;
    let bf = BasisFunction {
        face,
        component,
        order,
        velocity: read_sparse(&mut r, "velocity")?,
        pressure: read_sparse(&mut r, "pressure")?,
        multipliers: read_sparse(&mut r, "multipliers")?,
        divergence: read_sparse(&mut r, "divergence")?,
    };
    r.finish()?;
    Ok(bf)
}

fn function_file(i: usize) -> String {
    format!("phi_{i:05}.txt")
}

/// Writes `dir/manifest.txt` and one file per basis function.
pub fn write_basis(dir: &Path, basis: &CorrectorBasis) -> Result<()> {
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    for (i, bf) in basis.functions.iter().enumerate() {
        write_file(&dir.join(function_file(i)), |w| write_basis_function(w, bf))?;
    }
    write_file(&dir.join(MANIFEST), |w| {
        writeln!(w, "coarse_level {}", basis.coarse_level)?;
        writeln!(w, "fine_level {}", basis.fine_level)?;
        writeln!(w, "order {}", format_order(basis.order))?;
        writeln!(w, "functions {}", basis.len())?;
        (0..basis.len()).try_for_each(|i| writeln!(w, "{}", function_file(i)))
    })
}

/// Reads a basis written by [`write_basis`].
pub fn read_basis(dir: &Path) -> Result<CorrectorBasis> {
    let path: PathBuf = dir.join(MANIFEST);
    let text = read_text(&path)?;
    let mut r = Lines::new(&text, &path);
    let coarse_level = r.keyed_parse("coarse_level")?;
    let fine_level = r.keyed_parse("fine_level")?;
    let order = parse_order(r.keyed("order")?).map_err(|m| r.error(r.lines[r.pos - 1].0, m))?;
    let n: usize = r.keyed_parse("functions")?;
    let mut functions = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, name) = r.next()?;
        if name.contains(['/', '\\']) {
            return Err(r.error(line, "function files must live next to the manifest"));
        }
        let file = dir.join(name);
        functions.push(parse_basis_function(&read_text(&file)?, &file)?);
    }
    r.finish()?;
    Ok(CorrectorBasis {
        coarse_level,
        fine_level,
        order,
        functions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn to_string(f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn float_format() {
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(-f64::INFINITY), "-inf");
        let x = 0.1 + 0.2;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn mesh_round_trip() {
        let mesh = Mesh::initial().refine_red().refine_red();
        let text = to_string(|w| write_mesh(w, &mesh));
        let back = parse_mesh(&text, Path::new("m")).unwrap();
        assert_eq!(back.triangles(), mesh.triangles());
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.level(), 2);
        assert!(text.starts_with("vertices 25 triangles 32\n"));
    }

    #[test]
    fn matrix_market_round_trip() {
        let m = CscMatrix::from_dense(&[&[1.0, 0.0, -2.5], &[0.0, 1e-300, 0.0]]);
        let text = to_string(|w| write_matrix_market(w, &m));
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real general\n2 3 3\n"));
        let back = parse_matrix_market(&text, Path::new("a.mtx")).unwrap();
        assert_eq!(back.iter().collect::<Vec<_>>(), m.iter().collect::<Vec<_>>());
        assert_eq!((back.nrows(), back.ncols()), (2, 3));
        assert!(parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", Path::new("b")).is_err());
    }

    #[test]
    fn vector_and_field_round_trip() {
        let v = vec![1.0 / 3.0, -0.0, 1e300];
        let back = parse_vector(&to_string(|w| write_vector(w, &v)), Path::new("v")).unwrap();
        assert_eq!(back, v);
        let f = PiecewiseConstantField::new(1, vec![0.5; 8]);
        let back = parse_field(&to_string(|w| write_field(w, &f)), Path::new("f")).unwrap();
        assert_eq!(back, f);
        assert!(to_string(|w| write_field(w, &f)).starts_with("field level 1 count 8\n"));
        assert!(parse_field("field level 1 count 2\n1.0\n", Path::new("f")).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_vector("values 2\n1.0\n# c\nabc\n", Path::new("v.txt")).unwrap_err();
        assert_eq!(err.to_string(), "v.txt:4: invalid value \"abc\"");
        let err = parse_vector("values 3\n1.0\n", Path::new("v.txt")).unwrap_err();
        assert!(err.to_string().contains("unexpected end of file"));
    }
}
