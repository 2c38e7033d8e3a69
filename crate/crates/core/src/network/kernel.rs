use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Pairwise resistances on an ordered vertex subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ResistanceKernel {
    support: Vec<usize>,
    matrix: DMatrix<f64>,
}

impl ResistanceKernel {
    pub fn new(support: Vec<usize>, matrix: DMatrix<f64>) -> Result<Self> {
        let m = support.len();
        if matrix.nrows() != m || matrix.ncols() != m {
            return Err(Error::DimensionMismatch { expected: m, got: matrix.nrows() });
        }
        Ok(Self { support, matrix })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn position(&self, v: usize) -> Result<usize> {
        self.support
            .iter()
            .position(|&s| s == v)
            .ok_or_else(|| Error::InvalidArgument(format!("vertex {v} is not in the kernel support")))
    }

    /// Resistance between two vertices of the support.
    pub fn get(&self, x: usize, y: usize) -> Result<f64> {
        Ok(self.matrix[(self.position(x)?, self.position(y)?)])
    }

    pub fn restrict(&self, subset: &[usize]) -> Result<ResistanceKernel> {
        let pos = subset.iter().map(|&v| self.position(v)).collect::<Result<Vec<_>>>()?;
        let m = DMatrix::from_fn(pos.len(), pos.len(), |i, j| self.matrix[(pos[i], pos[j])]);
        Ok(ResistanceKernel { support: subset.to_vec(), matrix: m })
    }

    /// Same kernel with the support relabelled (e.g. into a finer graph's indices).
    pub fn relabel(&self, labels: Vec<usize>) -> Result<ResistanceKernel> {
        ResistanceKernel::new(labels, self.matrix.clone())
    }

    /// Largest entrywise difference against a kernel on the same support order.
    pub fn max_abs_diff(&self, other: &ResistanceKernel) -> Result<f64> {
        if self.matrix.shape() != other.matrix.shape() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: other.len() });
        }
        Ok((&self.matrix - &other.matrix).amax())
    }

    pub fn scale(&self, factor: f64) -> ResistanceKernel {
        ResistanceKernel { support: self.support.clone(), matrix: &self.matrix * factor }
    }

    /// Symmetry, zero diagonal, positivity off the diagonal and the triangle
    /// inequality, all within `tol`. Returns the first violation found.
    pub fn check_metric(&self, tol: f64) -> std::result::Result<(), String> {
        let m = self.len();
        let r = &self.matrix;
        for i in 0..m {
            if r[(i, i)].abs() > tol {
                return Err(format!("R({i},{i}) = {}", r[(i, i)]));
            }
            for j in 0..m {
                if (r[(i, j)] - r[(j, i)]).abs() > tol {
                    return Err(format!("asymmetric at ({i},{j})"));
                }
                if i != j && r[(i, j)] <= 0.0 {
                    return Err(format!("R({i},{j}) = {} is not positive", r[(i, j)]));
                }
                for k in 0..m {
                    if r[(i, k)] > r[(i, j)] + r[(j, k)] + tol {
                        return Err(format!("triangle inequality fails for ({i},{j},{k})"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Header row of vertex labels, then one row per vertex. Values use the
    /// shortest round-trip formatting, so reading back is bit-identical.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = self.support.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = (0..self.len()).map(|j| format!("{:?}", self.matrix[(i, j)])).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<ResistanceKernel> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(Error::Csv { line: 1, msg: "empty file".into() })??;
        let support = header
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Csv { line: 1, msg: format!("bad vertex label '{t}'") })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = support.len();
        let mut data = Vec::with_capacity(m * m);
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Csv { line: k + 2, msg: format!("bad number '{t}'") })
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != m {
                return Err(Error::Csv { line: k + 2, msg: format!("expected {m} values, got {}", row.len()) });
            }
            data.extend(row);
        }
        if data.len() != m * m {
            return Err(Error::Csv { line: m + 1, msg: format!("expected {m} rows") });
        }
        ResistanceKernel::new(support, DMatrix::from_row_slice(m, m, &data))
    }
}
