//! Incidence matrix realizing the metric-free discrete divergence.
//!
//! Row (element, i, j) of the matrix applies the telescoping difference
//! q^x_{i,j} - q^x_{i-1,j} + q^y_{i,j} - q^y_{i,j-1} to the global flux
//! vector, producing the net outflow of each sub-volume. Entries are exact
//! integers in {-1, 0, +1} and depend only on the grid topology, never on
//! element sizes.

use crate::mesh::{DofMap, Mesh};
use std::fmt::Write as _;

/// Sparse integer matrix in compressed sparse row layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMatrix {
    pub rows: usize,
    pub cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<i32>,
}

impl IncidenceMatrix {
    /// Columns and signs of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[i32]) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = E q
    pub fn apply(&self, q: &[f64]) -> Vec<f64> {
        assert_eq!(q.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v as f64 * q[c]).sum()
            })
            .collect()
    }

    /// y = Eᵀ p
    pub fn apply_transpose(&self, p: &[f64]) -> Vec<f64> {
        assert_eq!(p.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &pr) in p.iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[c] += v as f64 * pr;
            }
        }
        out
    }

    /// Iterate all (row, col, value) entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, i32)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter()
                .zip(vals)
                .map(move |(&c, &v)| (r, c, v))
                .collect::<Vec<_>>()
        })
    }

    /// Coordinate-list text dump, one `row col value` line per entry.
    pub fn to_coo_string(&self) -> String {
        let mut s = String::new();
        for (r, c, v) in self.entries() {
            let _ = writeln!(s, "{r} {c} {v}");
        }
        s
    }
}

/// Build the incidence matrix for the discrete divergence on a mesh.
pub fn incidence_div(mesh: &Mesh, dofmap: &DofMap) -> IncidenceMatrix {
    let n = mesh.degree;
    let n_p = dofmap.n_p;
    let mut row_ptr = Vec::with_capacity(n_p + 1);
    let mut col_idx = Vec::with_capacity(4 * n_p);
    let mut values = Vec::with_capacity(4 * n_p);
    row_ptr.push(0);
    // rows in global pressure order: element (ey-major), then j major, i minor
    for ey in 0..mesh.elements_y {
        for ex in 0..mesh.elements_x {
            for j in 1..=n {
                for i in 1..=n {
                    let mut entries = [
                        (dofmap.qx(ex, ey, i, j), 1),
                        (dofmap.qx(ex, ey, i - 1, j), -1),
                        (dofmap.qy(ex, ey, i, j), 1),
                        (dofmap.qy(ex, ey, i, j - 1), -1),
                    ];
                    entries.sort_unstable_by_key(|e| e.0);
                    for (c, v) in entries {
                        col_idx.push(c);
                        values.push(v);
                    }
                    row_ptr.push(col_idx.len());
                }
            }
        }
    }
    IncidenceMatrix {
        rows: n_p,
        cols: dofmap.n_q(),
        row_ptr,
        col_idx,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn single_element_lowest_order() {
        let (m, d) = build_mesh((0.0, 1.0, 0.0, 1.0), 1, 1, 1).unwrap();
        let e = incidence_div(&m, &d);
        assert_eq!((e.rows, e.cols), (1, 4));
        let (cols, vals) = e.row(0);
        let mut signed: Vec<(usize, i32)> = cols.iter().copied().zip(vals.iter().copied()).collect();
        signed.sort_unstable();
        assert_eq!(
            signed,
            vec![
                (d.qx(0, 0, 0, 1), -1),
                (d.qx(0, 0, 1, 1), 1),
                (d.qy(0, 0, 1, 0), -1),
                (d.qy(0, 0, 1, 1), 1),
            ]
        );
    }

    #[test]
    fn row_structure() {
        let (m, d) = build_mesh((0.0, 3.0, -1.0, 2.0), 3, 2, 3).unwrap();
        let e = incidence_div(&m, &d);
        for r in 0..e.rows {
            let (cols, vals) = e.row(r);
            assert_eq!(cols.len(), 4);
            assert_eq!(vals.iter().sum::<i32>(), 0);
            assert_eq!(vals.iter().filter(|&&v| v == 1).count(), 2);
            assert_eq!(vals.iter().filter(|&&v| v == -1).count(), 2);
        }
        // each column has at most 2 nonzeros with opposite signs
        let mut col_entries: Vec<Vec<i32>> = vec![Vec::new(); e.cols];
        for (_, c, v) in e.entries() {
            col_entries[c].push(v);
        }
        for entries in &col_entries {
            assert!(entries.len() <= 2);
            if entries.len() == 2 {
                assert_eq!(entries[0] + entries[1], 0);
            }
        }
    }

    #[test]
    fn constant_field_is_divergence_free() {
        let (m, d) = build_mesh((0.0, 1.0, 0.0, 1.0), 3, 3, 2).unwrap();
        let mut q = vec![0.0; d.n_q()];
        for k in 0..d.n_qx {
            q[k] = 2.5;
        }
        for k in d.n_qx..d.n_q() {
            q[k] = -1.25;
        }
        let div = incidence_div(&m, &d).apply(&q);
        assert!(div.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn metric_independence() {
        let (m1, d1) = build_mesh((0.0, 1.0, 0.0, 1.0), 2, 3, 2).unwrap();
        let (m2, d2) = build_mesh((-5.0, 17.0, 2.0, 2.25), 2, 3, 2).unwrap();
        assert_eq!(incidence_div(&m1, &d1), incidence_div(&m2, &d2));
    }

    #[test]
    fn coo_dump_golden() {
        let (m, d) = build_mesh((0.0, 1.0, 0.0, 1.0), 1, 1, 1).unwrap();
        let e = incidence_div(&m, &d);
        // left/right x-fluxes are columns 0/1, bottom/top y-fluxes 2/3
        assert_eq!(e.to_coo_string(), "0 0 -1\n0 1 1\n0 2 -1\n0 3 1\n");
    }
}
