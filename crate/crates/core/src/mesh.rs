//! Tensor-product tessellation, DOF numbering, and field reconstruction.
//!
//! The domain is tiled by congruent axis-aligned rectangles, each carrying a
//! degree-N basis. Flux unknowns are integral quantities through sub-edges:
//! the x-flux coefficient q^x_{ij} is the flux through the vertical sub-edge
//! at node ξ_i spanning the j-th node interval in η, so fluxes on shared
//! element interfaces have a single global index. Reconstruction applies the
//! Piola-type scalings that make the coefficients exactly those integral
//! quantities:
//!
//!   q_x(ξ,η) = Σ q^x_{ij} l_i(ξ) ε_j(η) · (2/Δy)
//!   q_y(ξ,η) = Σ q^y_{ij} ε_i(ξ) l_j(η) · (2/Δx)
//!   p(ξ,η)   = Σ p_{ij} ε_i(ξ) ε_j(η)
//!   div q    = Σ (q^x_{ij} - q^x_{i-1,j} + q^y_{ij} - q^y_{i,j-1}) ε_i ε_j · (4/(ΔxΔy))

use crate::basis::{tabulate, BasisSet};
use crate::error::{Error, Result};
use ndarray::Array2;

/// Uniform tensor-product mesh of an axis-aligned rectangle.
#[derive(Debug, Clone)]
pub struct Mesh {
    /// (x_min, x_max, y_min, y_max)
    pub domain: (f64, f64, f64, f64),
    pub elements_x: usize,
    pub elements_y: usize,
    /// Polynomial degree N of the nodal basis.
    pub degree: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Mesh {
    pub fn n_elements(&self) -> usize {
        self.elements_x * self.elements_y
    }

    pub fn area(&self) -> f64 {
        let (x0, x1, y0, y1) = self.domain;
        (x1 - x0) * (y1 - y0)
    }

    /// Physical x of reference coordinate ξ in element column ex.
    pub fn x_of(&self, ex: usize, xi: f64) -> f64 {
        self.domain.0 + (ex as f64 + (xi + 1.0) / 2.0) * self.dx
    }

    /// Physical y of reference coordinate η in element row ey.
    pub fn y_of(&self, ey: usize, eta: f64) -> f64 {
        self.domain.2 + (ey as f64 + (eta + 1.0) / 2.0) * self.dy
    }

    /// Element centroid.
    pub fn centroid(&self, ex: usize, ey: usize) -> (f64, f64) {
        (self.x_of(ex, 0.0), self.y_of(ey, 0.0))
    }
}

/// Boundary side of the rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    /// Sign of the coordinate flux component against the outward normal:
    /// q·n = sign · q_x on left/right, q·n = sign · q_y on bottom/top.
    pub fn outward_sign(self) -> f64 {
        match self {
            Side::Left | Side::Bottom => -1.0,
            Side::Right | Side::Top => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }
}

/// A flux DOF lying on the domain boundary.
#[derive(Debug, Clone)]
pub struct BoundaryDof {
    /// Global flux index.
    pub dof: usize,
    pub side: Side,
    /// Element index along the boundary and local interval index (1..=N).
    pub element: usize,
    pub interval: usize,
    /// Physical arc interval [s0, s1] of the sub-edge (y on left/right, x on bottom/top).
    pub arc: (f64, f64),
}

/// Global numbering of flux and pressure unknowns.
///
/// x-fluxes are ordered lexicographically by (global vertical line, global
/// row), then y-fluxes by (global horizontal line, global column), then
/// pressures element by element.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub n_qx: usize,
    pub n_qy: usize,
    pub n_p: usize,
    pub boundary: Vec<BoundaryDof>,
    mx: usize,
    my: usize,
    n: usize,
}

impl DofMap {
    pub fn n_q(&self) -> usize {
        self.n_qx + self.n_qy
    }

    pub fn total(&self) -> usize {
        self.n_q() + self.n_p
    }

    /// Global index of q^x_{ij} in element (ex, ey); i in 0..=N, j in 1..=N.
    pub fn qx(&self, ex: usize, ey: usize, i: usize, j: usize) -> usize {
        let line = ex * self.n + i;
        let row = ey * self.n + (j - 1);
        line * (self.my * self.n) + row
    }

    /// Global index of q^y_{ij} in element (ex, ey); i in 1..=N, j in 0..=N.
    pub fn qy(&self, ex: usize, ey: usize, i: usize, j: usize) -> usize {
        let line = ey * self.n + j;
        let col = ex * self.n + (i - 1);
        self.n_qx + line * (self.mx * self.n) + col
    }

    /// Global pressure index of p_{ij} in element (ex, ey); i, j in 1..=N.
    /// Pressure indices start at 0 (they are not offset by the flux count).
    pub fn pressure(&self, ex: usize, ey: usize, i: usize, j: usize) -> usize {
        let e = ey * self.mx + ex;
        e * self.n * self.n + (j - 1) * self.n + (i - 1)
    }

    /// Element-local flux DOFs in the canonical local ordering:
    /// x-fluxes (i major, j minor), then y-fluxes (i major, j minor).
    pub fn element_flux_dofs(&self, ex: usize, ey: usize) -> Vec<usize> {
        let n = self.n;
        let mut out = Vec::with_capacity(2 * n * (n + 1));
        for i in 0..=n {
            for j in 1..=n {
                out.push(self.qx(ex, ey, i, j));
            }
        }
        for i in 1..=n {
            for j in 0..=n {
                out.push(self.qy(ex, ey, i, j));
            }
        }
        out
    }

    /// Element-local pressure DOFs in local ordering (j major, i minor).
    pub fn element_pressure_dofs(&self, ex: usize, ey: usize) -> Vec<usize> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n);
        for j in 1..=n {
            for i in 1..=n {
                out.push(self.pressure(ex, ey, i, j));
            }
        }
        out
    }
}

/// Build a mesh and its DOF numbering.
pub fn build_mesh(
    domain: (f64, f64, f64, f64),
    elements_x: usize,
    elements_y: usize,
    degree: usize,
) -> Result<(Mesh, DofMap)> {
    let (x0, x1, y0, y1) = domain;
    let proper = x0 < x1 && y0 < y1; // also rejects NaN bounds
    if !proper {
        return Err(Error::InvalidParameter {
            name: "domain",
            reason: format!("degenerate rectangle ({x0}, {x1}) x ({y0}, {y1})"),
        });
    }
    if elements_x < 1 || elements_y < 1 {
        return Err(Error::InvalidParameter {
            name: "elements",
            reason: format!("element counts must be positive, got {elements_x} x {elements_y}"),
        });
    }
    if degree < 1 {
        return Err(Error::InvalidParameter {
            name: "degree",
            reason: format!("degree must be >= 1, got {degree}"),
        });
    }
    let mesh = Mesh {
        domain,
        elements_x,
        elements_y,
        degree,
        dx: (x1 - x0) / elements_x as f64,
        dy: (y1 - y0) / elements_y as f64,
    };
    let (mx, my, n) = (elements_x, elements_y, degree);
    let mut map = DofMap {
        n_qx: (mx * n + 1) * (my * n),
        n_qy: (mx * n) * (my * n + 1),
        n_p: mx * my * n * n,
        boundary: Vec::new(),
        mx,
        my,
        n,
    };
    let gll = crate::quadrature::gll_rule(n)?;
    for ey in 0..my {
        for j in 1..=n {
            let s0 = mesh.y_of(ey, gll.nodes[j - 1]);
            let s1 = mesh.y_of(ey, gll.nodes[j]);
            map.boundary.push(BoundaryDof {
                dof: map.qx(0, ey, 0, j),
                side: Side::Left,
                element: ey,
                interval: j,
                arc: (s0, s1),
            });
            map.boundary.push(BoundaryDof {
                dof: map.qx(mx - 1, ey, n, j),
                side: Side::Right,
                element: ey,
                interval: j,
                arc: (s0, s1),
            });
        }
    }
    for ex in 0..mx {
        for i in 1..=n {
            let s0 = mesh.x_of(ex, gll.nodes[i - 1]);
            let s1 = mesh.x_of(ex, gll.nodes[i]);
            map.boundary.push(BoundaryDof {
                dof: map.qy(ex, 0, i, 0),
                side: Side::Bottom,
                element: ex,
                interval: i,
                arc: (s0, s1),
            });
            map.boundary.push(BoundaryDof {
                dof: map.qy(ex, my - 1, i, n),
                side: Side::Top,
                element: ex,
                interval: i,
                arc: (s0, s1),
            });
        }
    }
    Ok((mesh, map))
}

/// Affine reference-to-physical map for one element.
pub fn map_to_physical(
    mesh: &Mesh,
    element: (usize, usize),
    ref_point: (f64, f64),
) -> Result<(f64, f64)> {
    let (ex, ey) = element;
    if ex >= mesh.elements_x || ey >= mesh.elements_y {
        return Err(Error::IndexOutOfRange {
            what: "element",
            index: ey * mesh.elements_x + ex,
            range: format!(
                "0..{} x 0..{}",
                mesh.elements_x, mesh.elements_y
            ),
        });
    }
    Ok((mesh.x_of(ex, ref_point.0), mesh.y_of(ey, ref_point.1)))
}

/// Which field to reconstruct from a coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    FluxX,
    FluxY,
    Pressure,
    Divergence,
}

/// Pointwise reconstruction of a field at a tensor grid of reference points.
///
/// `coefficients` must hold the full flux vector (length n_qx + n_qy) for the
/// flux and divergence fields, or the pressure vector (length n_p). The
/// output has one row per element (ey-major) and Q*Q columns ordered with the
/// ξ index major: column index = qi * Q + qj.
pub fn reconstruct(
    mesh: &Mesh,
    dofmap: &DofMap,
    coefficients: &[f64],
    field: Field,
    ref_points: &[f64],
) -> Result<Array2<f64>> {
    let expected = match field {
        Field::FluxX | Field::FluxY | Field::Divergence => dofmap.n_q(),
        Field::Pressure => dofmap.n_p,
    };
    if coefficients.len() != expected {
        return Err(Error::LengthMismatch {
            what: "reconstruct coefficients",
            got: coefficients.len(),
            expected,
        });
    }
    let basis = tabulate(mesh.degree, ref_points)?;
    let q = ref_points.len();
    let mut out = Array2::zeros((mesh.n_elements(), q * q));
    for ey in 0..mesh.elements_y {
        for ex in 0..mesh.elements_x {
            let row = ey * mesh.elements_x + ex;
            for qi in 0..q {
                for qj in 0..q {
                    out[[row, qi * q + qj]] =
                        eval_point(mesh, dofmap, &basis, coefficients, field, ex, ey, qi, qj);
                }
            }
        }
    }
    Ok(out)
}

fn eval_point(
    mesh: &Mesh,
    dofmap: &DofMap,
    basis: &BasisSet,
    c: &[f64],
    field: Field,
    ex: usize,
    ey: usize,
    qi: usize,
    qj: usize,
) -> f64 {
    let n = mesh.degree;
    match field {
        Field::FluxX => {
            let mut v = 0.0;
            for i in 0..=n {
                for j in 1..=n {
                    v += c[dofmap.qx(ex, ey, i, j)] * basis.lagrange[[i, qi]] * basis.edge_at(j, qj);
                }
            }
            v * 2.0 / mesh.dy
        }
        Field::FluxY => {
            let mut v = 0.0;
            for i in 1..=n {
                for j in 0..=n {
                    v += c[dofmap.qy(ex, ey, i, j)] * basis.edge_at(i, qi) * basis.lagrange[[j, qj]];
                }
            }
            v * 2.0 / mesh.dx
        }
        Field::Pressure => {
            let mut v = 0.0;
            for i in 1..=n {
                for j in 1..=n {
                    v += c[dofmap.pressure(ex, ey, i, j)] * basis.edge_at(i, qi) * basis.edge_at(j, qj);
                }
            }
            v
        }
        Field::Divergence => {
            let mut v = 0.0;
            for i in 1..=n {
                for j in 1..=n {
                    let net = c[dofmap.qx(ex, ey, i, j)] - c[dofmap.qx(ex, ey, i - 1, j)]
                        + c[dofmap.qy(ex, ey, i, j)]
                        - c[dofmap.qy(ex, ey, i, j - 1)];
                    v += net * basis.edge_at(i, qi) * basis.edge_at(j, qj);
                }
            }
            v * 4.0 / (mesh.dx * mesh.dy)
        }
    }
}

/// Physical coordinates matching the layout produced by [`reconstruct`].
pub fn physical_points(mesh: &Mesh, ref_points: &[f64]) -> Vec<Vec<(f64, f64)>> {
    let q = ref_points.len();
    let mut out = Vec::with_capacity(mesh.n_elements());
    for ey in 0..mesh.elements_y {
        for ex in 0..mesh.elements_x {
            let mut pts = Vec::with_capacity(q * q);
            for qi in 0..q {
                for qj in 0..q {
                    pts.push((mesh.x_of(ex, ref_points[qi]), mesh.y_of(ey, ref_points[qj])));
                }
            }
            out.push(pts);
        }
    }
    out
}
