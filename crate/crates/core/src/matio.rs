//! Sparse matrix storage (COO and CSR) and Matrix Market coordinate I/O.
//!
//! Indices are 0-based in memory and 1-based on disk. Duplicate `(row, col)`
//! entries are rejected everywhere instead of being summed.

use std::io::{self, BufRead, Write};

use thiserror::Error;

/// Errors raised while building or converting sparse matrices.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("matrix dimensions must be at least 1x1, got {n_rows}x{n_cols}")]
    EmptyShape { n_rows: usize, n_cols: usize },
    #[error("triplet arrays differ in length (rows {rows}, cols {cols}, values {values})")]
    LengthMismatch { rows: usize, cols: usize, values: usize },
    #[error("entry ({row}, {col}) lies outside a {n_rows}x{n_cols} matrix")]
    IndexOutOfBounds { row: usize, col: usize, n_rows: usize, n_cols: usize },
    #[error("duplicate entry at ({row}, {col})")]
    Duplicate { row: usize, col: usize },
    #[error("invalid CSR structure: {0}")]
    InvalidCsr(&'static str),
}

/// What went wrong while reading a Matrix Market stream.
#[derive(Debug, Error)]
pub enum ParseErrorKind {
    #[error("malformed banner: {0}")]
    Banner(String),
    #[error("unsupported format `{0}` (only `coordinate` is supported)")]
    UnsupportedFormat(String),
    #[error("unsupported field `{0}` (expected real, integer or pattern)")]
    UnsupportedField(String),
    #[error("unsupported symmetry `{0}` (expected general or symmetric)")]
    UnsupportedSymmetry(String),
    #[error("malformed size line: {0}")]
    SizeLine(String),
    #[error("malformed entry: {0}")]
    Entry(String),
    #[error("index ({row}, {col}) outside declared {n_rows}x{n_cols} dimensions")]
    OutOfBounds { row: usize, col: usize, n_rows: usize, n_cols: usize },
    #[error("duplicate entry at ({row}, {col}) (1-based)")]
    Duplicate { row: usize, col: usize },
    #[error("declared {declared} entries but found {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("missing size line")]
    MissingSize,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A Matrix Market parse failure, tagged with the 1-based line it occurred on
/// (0 when the failure is not tied to a line).
#[derive(Debug, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn at(line: usize, kind: ParseErrorKind) -> Self {
        ParseError { line, kind }
    }
}

/// Coordinate-triplet sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CooMatrix {
    n_rows: usize,
    n_cols: usize,
    row_idx: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CooMatrix {
    /// Builds a COO matrix, checking shape, bounds and uniqueness of positions.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_idx: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, MatrixError> {
        if n_rows == 0 || n_cols == 0 {
            return Err(MatrixError::EmptyShape { n_rows, n_cols });
        }
        if row_idx.len() != col_idx.len() || row_idx.len() != values.len() {
            return Err(MatrixError::LengthMismatch {
                rows: row_idx.len(),
                cols: col_idx.len(),
                values: values.len(),
            });
        }
        for (&row, &col) in row_idx.iter().zip(&col_idx) {
            if row >= n_rows || col >= n_cols {
                return Err(MatrixError::IndexOutOfBounds { row, col, n_rows, n_cols });
            }
        }
        let m = CooMatrix { n_rows, n_cols, row_idx, col_idx, values };
        if let Some((row, col)) = m.first_duplicate() {
            return Err(MatrixError::Duplicate { row, col });
        }
        Ok(m)
    }

    /// Caller guarantees all invariants (used when relabelling a valid matrix).
    pub(crate) fn from_parts_unchecked(
        n_rows: usize,
        n_cols: usize,
        row_idx: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_idx.len(), values.len());
        debug_assert_eq!(col_idx.len(), values.len());
        CooMatrix { n_rows, n_cols, row_idx, col_idx, values }
    }

    pub fn identity(n: usize) -> Result<Self, MatrixError> {
        CooMatrix::new(n, n, (0..n).collect(), (0..n).collect(), vec![1.0; n])
    }

    fn first_duplicate(&self) -> Option<(usize, usize)> {
        let mut keys: Vec<(usize, usize)> = self.triplets().map(|(r, c, _)| (r, c)).collect();
        keys.sort_unstable();
        keys.windows(2).find(|w| w[0] == w[1]).map(|w| w[0])
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_indices(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(row, col, value)` in storage order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.row_idx
            .iter()
            .zip(&self.col_idx)
            .zip(&self.values)
            .map(|((&r, &c), &v)| (r, c, v))
    }

    /// Same matrix with entries reordered row-major, columns ascending.
    pub fn sorted(&self) -> CooMatrix {
        let mut order: Vec<usize> = (0..self.nnz()).collect();
        order.sort_unstable_by_key(|&k| (self.row_idx[k], self.col_idx[k]));
        CooMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_idx: order.iter().map(|&k| self.row_idx[k]).collect(),
            col_idx: order.iter().map(|&k| self.col_idx[k]).collect(),
            values: order.iter().map(|&k| self.values[k]).collect(),
        }
    }

    /// Per-row nonzero counts.
    pub fn row_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_rows];
        for &r in &self.row_idx {
            counts[r] += 1;
        }
        counts
    }

    /// Per-column nonzero counts.
    pub fn col_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_cols];
        for &c in &self.col_idx {
            counts[c] += 1;
        }
        counts
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix after validating the pointer array and the
    /// strictly increasing column order inside each row.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, MatrixError> {
        if n_rows == 0 || n_cols == 0 {
            return Err(MatrixError::EmptyShape { n_rows, n_cols });
        }
        if row_ptr.len() != n_rows + 1 {
            return Err(MatrixError::InvalidCsr("row_ptr must have n_rows + 1 entries"));
        }
        if col_idx.len() != values.len() {
            return Err(MatrixError::InvalidCsr("col_idx and values differ in length"));
        }
        if row_ptr[0] != 0 || row_ptr[n_rows] != values.len() {
            return Err(MatrixError::InvalidCsr("row_ptr must start at 0 and end at nnz"));
        }
        if row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(MatrixError::InvalidCsr("row_ptr must be non-decreasing"));
        }
        for w in row_ptr.windows(2) {
            let cols = &col_idx[w[0]..w[1]];
            if cols.iter().any(|&c| c >= n_cols) {
                return Err(MatrixError::InvalidCsr("column index out of bounds"));
            }
            if cols.windows(2).any(|p| p[0] >= p[1]) {
                return Err(MatrixError::InvalidCsr("columns must be strictly increasing within a row"));
            }
        }
        Ok(CsrMatrix { n_rows, n_cols, row_ptr, col_idx, values })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Converts COO to CSR: rows ascending, columns ascending within rows,
/// values moved bit-for-bit.
pub fn coo_to_csr(m: &CooMatrix) -> Result<CsrMatrix, MatrixError> {
    let nnz = m.nnz();
    let mut row_ptr = vec![0usize; m.n_rows + 1];
    for &r in &m.row_idx {
        row_ptr[r + 1] += 1;
    }
    for i in 0..m.n_rows {
        row_ptr[i + 1] += row_ptr[i];
    }

    // Counting sort by row keeps the original order inside each row.
    let mut next = row_ptr.clone();
    let mut order = vec![0usize; nnz];
    for (k, &r) in m.row_idx.iter().enumerate() {
        order[next[r]] = k;
        next[r] += 1;
    }
    for w in row_ptr.windows(2) {
        order[w[0]..w[1]].sort_unstable_by_key(|&k| m.col_idx[k]);
    }

    let col_idx: Vec<usize> = order.iter().map(|&k| m.col_idx[k]).collect();
    let values: Vec<f64> = order.iter().map(|&k| m.values[k]).collect();
    for (i, w) in row_ptr.windows(2).enumerate() {
        if let Some(p) = col_idx[w[0]..w[1]].windows(2).find(|p| p[0] == p[1]) {
            return Err(MatrixError::Duplicate { row: i, col: p[0] });
        }
    }
    Ok(CsrMatrix { n_rows: m.n_rows, n_cols: m.n_cols, row_ptr, col_idx, values })
}

/// Expands CSR back into row-major sorted triplets.
pub fn csr_to_coo(m: &CsrMatrix) -> CooMatrix {
    let mut row_idx = Vec::with_capacity(m.nnz());
    for (i, w) in m.row_ptr.windows(2).enumerate() {
        row_idx.extend(std::iter::repeat_n(i, w[1] - w[0]));
    }
    CooMatrix::from_parts_unchecked(m.n_rows, m.n_cols, row_idx, m.col_idx.clone(), m.values.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

fn parse_banner(line: &str) -> Result<(Field, bool), ParseErrorKind> {
    let tokens: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.first().map(String::as_str) != Some("%%matrixmarket") {
        return Err(ParseErrorKind::Banner("expected `%%MatrixMarket`".into()));
    }
    if tokens.len() != 5 {
        return Err(ParseErrorKind::Banner(format!("expected 5 tokens, found {}", tokens.len())));
    }
    if tokens[1] != "matrix" {
        return Err(ParseErrorKind::Banner(format!("unsupported object `{}`", tokens[1])));
    }
    if tokens[2] != "coordinate" {
        return Err(ParseErrorKind::UnsupportedFormat(tokens[2].clone()));
    }
    let field = match tokens[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        other => return Err(ParseErrorKind::UnsupportedField(other.to_string())),
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(ParseErrorKind::UnsupportedSymmetry(other.to_string())),
    };
    Ok((field, symmetric))
}

fn parse_index(token: Option<&str>, what: &str) -> Result<usize, ParseErrorKind> {
    let token = token.ok_or_else(|| ParseErrorKind::Entry(format!("missing {what}")))?;
    token
        .parse::<usize>()
        .map_err(|_| ParseErrorKind::Entry(format!("invalid {what} `{token}`")))
}

/// Reads a Matrix Market coordinate stream into a COO matrix.
///
/// `pattern` entries get value 1.0, `integer` values are widened to `f64`,
/// and `symmetric` files have every off-diagonal entry mirrored.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<CooMatrix, ParseError> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (field, symmetric) = match lines.next() {
        Some((n, line)) => {
            let line = line.map_err(|e| ParseError::at(n, e.into()))?;
            parse_banner(&line).map_err(|k| ParseError::at(n, k))?
        }
        None => return Err(ParseError::at(1, ParseErrorKind::Banner("empty input".into()))),
    };

    let mut size = None;
    let mut last_line = 1;
    let mut row_idx = Vec::new();
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut found = 0usize;

    for (n, line) in lines {
        last_line = n;
        let line = line.map_err(|e| ParseError::at(n, e.into()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let Some((n_rows, n_cols, declared)) = size else {
            let parsed: Result<Vec<usize>, _> = tokens.map(str::parse::<usize>).collect();
            match parsed.as_deref() {
                Ok(&[r, c, z]) if r > 0 && c > 0 => {
                    size = Some((r, c, z));
                    row_idx.reserve(if symmetric { 2 * z } else { z });
                    continue;
                }
                _ => return Err(ParseError::at(n, ParseErrorKind::SizeLine(trimmed.to_string()))),
            }
        };

        let entry = (|| {
            let i = parse_index(tokens.next(), "row index")?;
            let j = parse_index(tokens.next(), "column index")?;
            let v = match field {
                Field::Pattern => 1.0,
                Field::Real => {
                    let t = tokens.next().ok_or_else(|| ParseErrorKind::Entry("missing value".into()))?;
                    t.parse::<f64>().map_err(|_| ParseErrorKind::Entry(format!("invalid value `{t}`")))?
                }
                Field::Integer => {
                    let t = tokens.next().ok_or_else(|| ParseErrorKind::Entry("missing value".into()))?;
                    t.parse::<i64>().map_err(|_| ParseErrorKind::Entry(format!("invalid integer `{t}`")))? as f64
                }
            };
            if tokens.next().is_some() {
                return Err(ParseErrorKind::Entry("trailing tokens".into()));
            }
            if i == 0 || j == 0 || i > n_rows || j > n_cols {
                return Err(ParseErrorKind::OutOfBounds { row: i, col: j, n_rows, n_cols });
            }
            if !seen.insert((i, j)) {
                return Err(ParseErrorKind::Duplicate { row: i, col: j });
            }
            Ok((i - 1, j - 1, v))
        })();
        let (r, c, v) = entry.map_err(|k| ParseError::at(n, k))?;

        found += 1;
        if found > declared {
            return Err(ParseError::at(n, ParseErrorKind::CountMismatch { declared, found }));
        }
        row_idx.push(r);
        col_idx.push(c);
        values.push(v);
        if symmetric && r != c {
            // The mirrored position must not also be listed explicitly.
            if !seen.insert((c + 1, r + 1)) {
                return Err(ParseError::at(n, ParseErrorKind::Duplicate { row: c + 1, col: r + 1 }));
            }
            row_idx.push(c);
            col_idx.push(r);
            values.push(v);
        }
    }

    let Some((n_rows, n_cols, declared)) = size else {
        return Err(ParseError::at(last_line, ParseErrorKind::MissingSize));
    };
    if found != declared {
        return Err(ParseError::at(last_line, ParseErrorKind::CountMismatch { declared, found }));
    }
    Ok(CooMatrix::from_parts_unchecked(n_rows, n_cols, row_idx, col_idx, values))
}

/// Writes `m` as a general real coordinate file with 17 significant digits
/// per value, so every `f64` survives a round trip.
pub fn write_matrix_market<W: Write>(m: &CooMatrix, mut sink: W) -> io::Result<()> {
    writeln!(sink, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(sink, "{} {} {}", m.n_rows, m.n_cols, m.nnz())?;
    for (r, c, v) in m.triplets() {
        writeln!(sink, "{} {} {:.16e}", r + 1, c + 1, v)?;
    }
    sink.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<CooMatrix, ParseError> {
        parse_matrix_market(s.as_bytes())
    }

    #[test]
    fn parses_identity() {
        let m = parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n2 2 1.0\n").unwrap();
        assert_eq!((m.n_rows(), m.n_cols(), m.nnz()), (2, 2, 2));
        assert_eq!(m.row_indices(), &[0, 1]);
        assert_eq!(m.col_indices(), &[0, 1]);
    }

    #[test]
    fn symmetric_expands_off_diagonal() {
        let m = parse("%%MatrixMarket matrix coordinate real symmetric\n% lower triangle\n3 3 2\n1 1 2\n2 1 5\n").unwrap();
        let got: Vec<_> = m.triplets().collect();
        assert_eq!(got, vec![(0, 0, 2.0), (1, 0, 5.0), (0, 1, 5.0)]);
    }

    #[test]
    fn pattern_values_are_one() {
        let m = parse("%%MatrixMarket matrix coordinate pattern general\n2 2 1\n2 1\n").unwrap();
        assert_eq!(m.values(), &[1.0]);
        assert_eq!(m.row_indices(), &[1]);
    }

    #[test]
    fn integer_field_widens() {
        let m = parse("%%MatrixMarket matrix coordinate integer general\n1 1 1\n1 1 -3\n").unwrap();
        assert_eq!(m.values(), &[-3.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cases = [
            ("%MatrixMarket matrix coordinate real general\n1 1 0\n", "banner"),
            ("%%MatrixMarket matrix coordinate complex general\n1 1 0\n", "complex"),
            ("%%MatrixMarket matrix array real general\n1 1\n", "array"),
            ("%%MatrixMarket matrix coordinate real skew-symmetric\n1 1 0\n", "skew"),
            ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", "bounds"),
            ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n1 1 2.0\n", "dup"),
            ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n", "count"),
            ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1.0\n2 2 1.0\n", "count-over"),
            ("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n2 1 1.0\n1 2 1.0\n", "sym-dup"),
        ];
        for (src, what) in cases {
            assert!(parse(src).is_err(), "{what} should fail");
        }
        let err = parse("%%MatrixMarket matrix coordinate complex general\n").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::UnsupportedField(_)));
        let err = parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n1 1 2.0\n").unwrap_err();
        assert_eq!(err.line, 4);
        assert!(matches!(err.kind, ParseErrorKind::Duplicate { row: 1, col: 1 }));
    }

    #[test]
    fn csr_from_identity() {
        let csr = coo_to_csr(&CooMatrix::identity(2).unwrap()).unwrap();
        assert_eq!(csr.row_ptr(), &[0, 1, 2]);
        assert_eq!(csr.col_indices(), &[0, 1]);
        assert_eq!(csr.values(), &[1.0, 1.0]);
    }

    #[test]
    fn csr_sorts_column_major_input() {
        let coo = CooMatrix::new(2, 2, vec![0, 1, 0, 1], vec![0, 0, 1, 1], vec![1.0, 3.0, 2.0, 4.0]).unwrap();
        let csr = coo_to_csr(&coo).unwrap();
        assert_eq!(csr.row_ptr(), &[0, 2, 4]);
        assert_eq!(csr.col_indices(), &[0, 1, 0, 1]);
        assert_eq!(csr.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn csr_repeats_offset_for_empty_row() {
        let coo = CooMatrix::new(3, 3, vec![2, 0, 2], vec![0, 1, 2], vec![1.0, 2.0, 3.0]).unwrap();
        let csr = coo_to_csr(&coo).unwrap();
        assert_eq!(csr.row_ptr(), &[0, 1, 1, 3]);
    }

    #[test]
    fn csr_conversion_rejects_duplicates() {
        let dup = CooMatrix::from_parts_unchecked(2, 2, vec![0, 0], vec![1, 1], vec![1.0, 2.0]);
        assert_eq!(coo_to_csr(&dup), Err(MatrixError::Duplicate { row: 0, col: 1 }));
        assert!(CooMatrix::new(2, 2, vec![0, 0], vec![1, 1], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn csr_round_trip() {
        let csr = coo_to_csr(&CooMatrix::identity(3).unwrap()).unwrap();
        assert_eq!(csr_to_coo(&csr), CooMatrix::identity(3).unwrap());
        assert_eq!(coo_to_csr(&csr_to_coo(&csr)).unwrap(), csr);

        let zero = CooMatrix::new(1, 1, vec![], vec![], vec![]).unwrap();
        let back = csr_to_coo(&coo_to_csr(&zero).unwrap());
        assert_eq!(back.nnz(), 0);
        assert!(back.values().is_empty());
    }

    #[test]
    fn csr_validation() {
        assert!(CsrMatrix::new(2, 2, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 2], vec![0, 1], vec![1.0, 1.0]).is_ok());
    }

    #[test]
    fn write_then_parse() {
        let m = CooMatrix::new(2, 3, vec![1, 0], vec![2, 0], vec![0.1, -1.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&m, &mut buf).unwrap();
        let back = parse_matrix_market(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.values()[0].to_bits(), 0.1f64.to_bits());

        let empty = CooMatrix::new(4, 4, vec![], vec![], vec![]).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&empty, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 2);
        assert_eq!(parse_matrix_market(buf.as_slice()).unwrap(), empty);
    }
}
