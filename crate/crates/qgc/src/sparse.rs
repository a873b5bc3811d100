//! Row-major sparse matrices for assignment structures.
//!
//! Rows are workers, columns are data partitions. Entries within a row are
//! kept sorted by column so iteration order is deterministic.

/// Sparse matrix stored as one coordinate list per row, sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Vec::new(); rows],
        }
    }

    /// Build from per-row coordinate lists. Entries are sorted by column;
    /// duplicate columns within a row are rejected by debug assertion.
    pub fn from_rows(cols: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            debug_assert!(row.iter().all(|&(j, _)| j < cols));
        }
        Self {
            rows: rows.len(),
            cols,
            entries: rows,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.entries[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|idx| self.entries[i][idx].1)
            .unwrap_or(0.0)
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        match self.entries[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(idx) => self.entries[i][idx].1 = v,
            Err(idx) => self.entries[i].insert(idx, (j, v)),
        }
    }

    pub fn nnz(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|r| r.iter().map(|&(_, v)| v).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in &self.entries {
            for &(j, v) in row {
                sums[j] += v;
            }
        }
        sums
    }

    /// Map every stored value, keeping the sparsity pattern.
    pub fn map_rows<F: FnMut(usize, usize, f64) -> f64>(&self, mut f: F) -> SparseMatrix {
        let rows = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().map(|&(j, v)| (j, f(i, j, v))).collect())
            .collect();
        SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: rows,
        }
    }

    /// Iterate `(row, col, value)` over all nonzeros in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, v)| (i, j, v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_and_get() {
        let m = SparseMatrix::from_rows(3, vec![vec![(0, 1.0), (1, 0.5)], vec![(1, 0.5), (2, 1.0)]]);
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.get(0, 1), 0.5);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.row_sums(), vec![1.5, 1.5]);
        assert_eq!(m.col_sums(), vec![1.0, 1.0, 1.0]);
    }
}
