//! Element matrices and the global saddle-point system.
//!
//! The flux mass matrix carries the K⁻¹ weighting of the constitutive law and
//! is the only place quadrature error enters; the divergence block is the
//! exact integer incidence matrix paired with the element-size-independent
//! volume mass matrix. The assembled system is
//!
//! ```text
//! [ M_K   s·(M E)ᵀ ] [q]   [ s·b ]
//! [ s·M E    0     ] [p] = [ s·f ]
//! ```
//!
//! with s = +1 for the as-written convention (q = K grad p, flow up the
//! gradient) and s = -1 for the physical convention (q = -K grad p).
//! Prescribed flux DOFs are eliminated symmetrically; if no side prescribes
//! pressure, a Lagrange-multiplier row pins the mean pressure.

use crate::basis::{tabulate, BasisSet};
use crate::error::{Error, Result};
use crate::mesh::{DofMap, Mesh, Side};
use crate::quadrature::{gll_rule, QuadratureRule};
use crate::topology::IncidenceMatrix;
use ndarray::{Array1, Array2};

/// Degree of the fixed GLL rule used for boundary data and compatibility
/// checks (24 points, exact through degree 45).
const BOUNDARY_QUAD_DEGREE: usize = 23;

/// Relative tolerance for the all-flux compatibility precondition.
const COMPATIBILITY_TOL: f64 = 1e-10;

/// Sign convention for the Darcy law.
///
/// `Paper` solves q = K grad p (flux runs up the pressure gradient);
/// `Physical` solves q = -K grad p.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DarcySign {
    Paper,
    Physical,
}

impl DarcySign {
    pub fn factor(self) -> f64 {
        match self {
            DarcySign::Paper => 1.0,
            DarcySign::Physical => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DarcySign::Paper => "paper",
            DarcySign::Physical => "physical",
        }
    }
}

type TensorFn = dyn Fn(f64, f64) -> [[f64; 2]; 2] + Send + Sync;

/// Symmetric positive definite permeability tensor field K(x, y).
pub struct PermeabilityField {
    eval: Box<TensorFn>,
    /// y-coordinates of horizontal material interfaces. When nonempty the
    /// tensor is treated as piecewise constant per element and evaluated at
    /// element centroids, so quadrature points landing exactly on an
    /// interface cannot pick up the wrong layer.
    pub discontinuity_y: Vec<f64>,
}

impl PermeabilityField {
    pub fn new(eval: impl Fn(f64, f64) -> [[f64; 2]; 2] + Send + Sync + 'static) -> Self {
        Self {
            eval: Box::new(eval),
            discontinuity_y: Vec::new(),
        }
    }

    pub fn constant(k: [[f64; 2]; 2]) -> Self {
        Self::new(move |_, _| k)
    }

    pub fn identity() -> Self {
        Self::constant([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn with_discontinuities(mut self, ys: Vec<f64>) -> Self {
        self.discontinuity_y = ys;
        self
    }

    /// Evaluate K, checking symmetry and positive definiteness.
    pub fn at(&self, x: f64, y: f64) -> Result<[[f64; 2]; 2]> {
        let k = (self.eval)(x, y);
        let scale = k[0][1].abs().max(k[1][0].abs()).max(1.0);
        if (k[0][1] - k[1][0]).abs() > 1e-14 * scale {
            return Err(Error::InvalidParameter {
                name: "permeability",
                reason: format!("tensor not symmetric at ({x}, {y})"),
            });
        }
        let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
        if !(det > 0.0 && k[0][0] > 0.0) {
            return Err(Error::SingularMaterial { x, y });
        }
        Ok(k)
    }

    /// K⁻¹ at a point.
    pub fn inverse_at(&self, x: f64, y: f64) -> Result<[[f64; 2]; 2]> {
        let k = self.at(x, y)?;
        let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
        Ok([
            [k[1][1] / det, -k[0][1] / det],
            [-k[1][0] / det, k[0][0] / det],
        ])
    }

    /// Evaluate K for a point inside a given element, resolving material
    /// interfaces by snapping to the element centroid.
    pub fn at_in_element(&self, mesh: &Mesh, ex: usize, ey: usize, x: f64, y: f64) -> Result<[[f64; 2]; 2]> {
        if self.discontinuity_y.is_empty() {
            self.at(x, y)
        } else {
            let (cx, cy) = mesh.centroid(ex, ey);
            self.at(cx, cy)
        }
    }

    /// K⁻¹ for a point inside a given element.
    pub fn inverse_in_element(
        &self,
        mesh: &Mesh,
        ex: usize,
        ey: usize,
        x: f64,
        y: f64,
    ) -> Result<[[f64; 2]; 2]> {
        let k = self.at_in_element(mesh, ex, ey, x, y)?;
        let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
        Ok([
            [k[1][1] / det, -k[0][1] / det],
            [-k[1][0] / det, k[0][0] / det],
        ])
    }
}

impl std::fmt::Debug for PermeabilityField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PermeabilityField")
            .field("discontinuity_y", &self.discontinuity_y)
            .finish_non_exhaustive()
    }
}

type ScalarBc = dyn Fn(f64) -> f64 + Send + Sync;

/// Boundary condition on one side of the rectangle.
pub enum BoundaryCondition {
    /// Outward normal flux q·n as a function of the arc coordinate
    /// (y on left/right, x on bottom/top).
    NormalFlux(Box<ScalarBc>),
    /// Pressure trace as a function of the arc coordinate.
    Pressure(Box<ScalarBc>),
}

impl BoundaryCondition {
    pub fn flux(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        BoundaryCondition::NormalFlux(Box::new(f))
    }

    pub fn pressure(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        BoundaryCondition::Pressure(Box::new(f))
    }
}

impl std::fmt::Debug for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCondition::NormalFlux(_) => f.write_str("NormalFlux"),
            BoundaryCondition::Pressure(_) => f.write_str("Pressure"),
        }
    }
}

/// One condition per side.
#[derive(Debug)]
pub struct BoundaryConditions {
    pub left: BoundaryCondition,
    pub right: BoundaryCondition,
    pub bottom: BoundaryCondition,
    pub top: BoundaryCondition,
}

impl BoundaryConditions {
    pub fn side(&self, s: Side) -> &BoundaryCondition {
        match s {
            Side::Left => &self.left,
            Side::Right => &self.right,
            Side::Bottom => &self.bottom,
            Side::Top => &self.top,
        }
    }

    pub fn all_flux(&self) -> bool {
        Side::ALL
            .iter()
            .all(|&s| matches!(self.side(s), BoundaryCondition::NormalFlux(_)))
    }
}

type ScalarField = dyn Fn(f64, f64) -> f64 + Send + Sync;
type FluxField = dyn Fn(f64, f64, (f64, f64)) -> (f64, f64) + Send + Sync;

/// Exact solution attached to a problem for verification.
pub struct ExactSolution {
    /// p(x, y)
    pub pressure: Box<ScalarField>,
    /// q(x, y); the element centroid is supplied to resolve values on
    /// material interfaces, smooth solutions ignore it.
    pub flux: Box<FluxField>,
}

impl std::fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ExactSolution")
    }
}

/// How the pressure constant is fixed when only fluxes are prescribed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaugeMode {
    /// Mean pressure over the domain is zero.
    MeanZero,
    /// Mean pressure matches the exact solution's mean (requires an exact
    /// solution).
    MatchExactMean,
}

/// Full statement of a Darcy problem on a rectangle.
pub struct ProblemSpec {
    pub name: String,
    pub domain: (f64, f64, f64, f64),
    pub permeability: PermeabilityField,
    /// Source density φ(x, y).
    pub source: Box<ScalarField>,
    pub boundary: BoundaryConditions,
    pub exact: Option<ExactSolution>,
    pub sign: DarcySign,
    pub gauge: GaugeMode,
    /// Constraint on the element row count (layered media must align
    /// element interfaces with material interfaces).
    pub elements_y_multiple: Option<usize>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("sign", &self.sign)
            .finish_non_exhaustive()
    }
}

/// Quadrature overrides for assembly (point counts per direction).
#[derive(Debug, Clone, Copy, Default)]
pub struct AssemblyOptions {
    pub mass_quad_pts: Option<usize>,
    pub source_quad_pts: Option<usize>,
}

impl AssemblyOptions {
    pub fn mass_pts(&self, degree: usize) -> usize {
        self.mass_quad_pts.unwrap_or(degree + 2)
    }

    pub fn source_pts(&self, degree: usize) -> usize {
        self.source_quad_pts.unwrap_or(degree + 4)
    }
}

/// Permeability-weighted flux mass matrix of one element.
///
/// Entry (a, b) is the integral of v_a · K⁻¹ v_b over the element, with the
/// Piola-scaled vector basis densities. Local ordering: x-fluxes (i major,
/// j minor), then y-fluxes. The quadrature rule must be exact at least
/// through degree 2N, i.e. carry at least N+2 points.
pub fn mass_matrix_flux(
    mesh: &Mesh,
    element: (usize, usize),
    basis: &BasisSet,
    permeability: &PermeabilityField,
    quad: &QuadratureRule,
) -> Result<Array2<f64>> {
    let n = mesh.degree;
    if quad.len() < n + 2 {
        return Err(Error::InvalidParameter {
            name: "mass_quad_pts",
            reason: format!(
                "flux mass matrix needs at least {} quadrature points, got {}",
                n + 2,
                quad.len()
            ),
        });
    }
    debug_assert_eq!(basis.points, quad.nodes);
    let (ex, ey) = element;
    let q = quad.len();
    // K^{-1} components at the tensor quadrature grid
    let mut w00 = Array2::zeros((q, q));
    let mut w01 = Array2::zeros((q, q));
    let mut w11 = Array2::zeros((q, q));
    for a in 0..q {
        for c in 0..q {
            let x = mesh.x_of(ex, quad.nodes[a]);
            let y = mesh.y_of(ey, quad.nodes[c]);
            let w = permeability.inverse_in_element(mesh, ex, ey, x, y)?;
            w00[[a, c]] = w[0][0];
            w01[[a, c]] = w[0][1];
            w11[[a, c]] = w[1][1];
        }
    }
    let nx = (n + 1) * n;
    let ny = n * (n + 1);
    let mut m = Array2::zeros((nx + ny, nx + ny));
    let rx = mesh.dx / mesh.dy;
    let ry = mesh.dy / mesh.dx;
    // xx block: (dx/dy) ∫ w00 l_i l_k (ξ) ε_j ε_l (η)
    for i in 0..=n {
        for j in 1..=n {
            let a = i * n + (j - 1);
            for k in i..=n {
                for l in 1..=n {
                    let b = k * n + (l - 1);
                    if b < a {
                        continue;
                    }
                    let mut s = 0.0;
                    for qa in 0..q {
                        let fx = quad.weights[qa] * basis.lagrange[[i, qa]] * basis.lagrange[[k, qa]];
                        if fx == 0.0 {
                            continue;
                        }
                        for qc in 0..q {
                            s += fx
                                * quad.weights[qc]
                                * w00[[qa, qc]]
                                * basis.edge_at(j, qc)
                                * basis.edge_at(l, qc);
                        }
                    }
                    let v = rx * s;
                    m[[a, b]] = v;
                    m[[b, a]] = v;
                }
            }
        }
    }
    // yy block: (dy/dx) ∫ w11 ε_i ε_k (ξ) l_j l_l (η)
    for i in 1..=n {
        for j in 0..=n {
            let a = nx + (i - 1) * (n + 1) + j;
            for k in i..=n {
                for l in 0..=n {
                    let b = nx + (k - 1) * (n + 1) + l;
                    if b < a {
                        continue;
                    }
                    let mut s = 0.0;
                    for qa in 0..q {
                        let fx = quad.weights[qa] * basis.edge_at(i, qa) * basis.edge_at(k, qa);
                        for qc in 0..q {
                            s += fx
                                * quad.weights[qc]
                                * w11[[qa, qc]]
                                * basis.lagrange[[j, qc]]
                                * basis.lagrange[[l, qc]];
                        }
                    }
                    let v = ry * s;
                    m[[a, b]] = v;
                    m[[b, a]] = v;
                }
            }
        }
    }
    // xy coupling: ∫ w01 l_i(ξ)ε_k(ξ) ε_j(η)l_l(η), Jacobians cancel
    for i in 0..=n {
        for j in 1..=n {
            let a = i * n + (j - 1);
            for k in 1..=n {
                for l in 0..=n {
                    let b = nx + (k - 1) * (n + 1) + l;
                    let mut s = 0.0;
                    for qa in 0..q {
                        let fx = quad.weights[qa] * basis.lagrange[[i, qa]] * basis.edge_at(k, qa);
                        for qc in 0..q {
                            s += fx
                                * quad.weights[qc]
                                * w01[[qa, qc]]
                                * basis.edge_at(j, qc)
                                * basis.lagrange[[l, qc]];
                        }
                    }
                    m[[a, b]] = s;
                    m[[b, a]] = s;
                }
            }
        }
    }
    Ok(m)
}

/// Pairing mass matrix of the volume-density and pressure bases.
///
/// Entry ((i,j),(k,l)) = ∫ ε_i(ξ)ε_j(η) ε_k(ξ)ε_l(η) dξ dη on the reference
/// square; the element-size Jacobians of the two Piola scalings cancel, so
/// the matrix is the same for every element. Local ordering is j major.
pub fn mass_matrix_volume(basis: &BasisSet, quad: &QuadratureRule) -> Result<Array2<f64>> {
    let n = basis.degree;
    if 2 * quad.degree < 2 * n - 1 {
        return Err(Error::InvalidParameter {
            name: "mass_quad_pts",
            reason: format!(
                "volume mass matrix needs exactness 2N-2 = {}, rule of degree {} is exact to {}",
                2 * n - 2,
                quad.degree,
                2 * quad.degree - 1
            ),
        });
    }
    debug_assert_eq!(basis.points, quad.nodes);
    // 1D edge mass matrix
    let mut m1 = Array2::zeros((n, n));
    for i in 1..=n {
        for k in i..=n {
            let mut s = 0.0;
            for (qa, &w) in quad.weights.iter().enumerate() {
                s += w * basis.edge_at(i, qa) * basis.edge_at(k, qa);
            }
            m1[[i - 1, k - 1]] = s;
            m1[[k - 1, i - 1]] = s;
        }
    }
    let mut m = Array2::zeros((n * n, n * n));
    for j in 1..=n {
        for i in 1..=n {
            let a = (j - 1) * n + (i - 1);
            for l in 1..=n {
                for k in 1..=n {
                    let b = (l - 1) * n + (k - 1);
                    m[[a, b]] = m1[[i - 1, k - 1]] * m1[[j - 1, l - 1]];
                }
            }
        }
    }
    Ok(m)
}

/// Element load vector: entry (i,j) = ∫_element ε_i(ξ)ε_j(η) φ(x,y) dx dy.
///
/// Pairing the result with the coefficients of the constant pressure yields
/// the quadrature value of ∫ φ over the element.
pub fn source_functional(
    mesh: &Mesh,
    element: (usize, usize),
    basis: &BasisSet,
    quad: &QuadratureRule,
    source: &dyn Fn(f64, f64) -> f64,
) -> Array1<f64> {
    let n = mesh.degree;
    let (ex, ey) = element;
    let q = quad.len();
    debug_assert_eq!(basis.points, quad.nodes);
    let jac = mesh.dx * mesh.dy / 4.0;
    // source values at the tensor grid
    let mut phi = Array2::zeros((q, q));
    for qa in 0..q {
        for qc in 0..q {
            phi[[qa, qc]] = source(mesh.x_of(ex, quad.nodes[qa]), mesh.y_of(ey, quad.nodes[qc]));
        }
    }
    let mut f = Array1::zeros(n * n);
    for j in 1..=n {
        for i in 1..=n {
            let a = (j - 1) * n + (i - 1);
            let mut s = 0.0;
            for qa in 0..q {
                let fx = quad.weights[qa] * basis.edge_at(i, qa);
                for qc in 0..q {
                    s += fx * quad.weights[qc] * basis.edge_at(j, qc) * phi[[qa, qc]];
                }
            }
            f[a] = jac * s;
        }
    }
    f
}

/// Assembled symmetric saddle-point system with boundary bookkeeping.
#[derive(Debug)]
pub struct SaddleSystem {
    /// Symmetric matrix of dimension n_free + n_p (+1 with gauge).
    pub matrix: Array2<f64>,
    pub rhs: Array1<f64>,
    /// Reduced index -> global flux index.
    pub free_fluxes: Vec<usize>,
    /// Global flux index -> reduced index (None when prescribed).
    pub flux_to_reduced: Vec<Option<usize>>,
    /// Eliminated flux DOFs with their prescribed values.
    pub prescribed: Vec<(usize, f64)>,
    pub n_p: usize,
    pub has_gauge: bool,
    pub gauge_target: f64,
    /// Sign-convention factor baked into the off-diagonal blocks.
    pub sign: f64,
    /// Sub-volume source coefficients φ̂ solving M^(n) φ̂ = source functional.
    pub source_hat: Vec<f64>,
    pub mass_quad_pts: usize,
    pub source_quad_pts: usize,
}

impl SaddleSystem {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_free(&self) -> usize {
        self.free_fluxes.len()
    }
}

/// Solve the small SPD system M x = b by Cholesky (used for per-element
/// volume-mass solves).
fn cholesky_solve(m: &Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = m.nrows();
    let mut l = m.clone();
    for k in 0..n {
        for j in 0..k {
            let f = l[[k, j]];
            for i in k..n {
                l[[i, k]] -= f * l[[i, j]];
            }
        }
        let d = l[[k, k]];
        if d <= 0.0 {
            return Err(Error::Factorization { pivot: k });
        }
        let s = d.sqrt();
        for i in k..n {
            l[[i, k]] /= s;
        }
    }
    let mut x = b.to_vec();
    for i in 0..n {
        for j in 0..i {
            x[i] -= l[[i, j]] * x[j];
        }
        x[i] /= l[[i, i]];
    }
    for i in (0..n).rev() {
        for j in i + 1..n {
            x[i] -= l[[j, i]] * x[j];
        }
        x[i] /= l[[i, i]];
    }
    Ok(x)
}

/// Assemble the global saddle-point system for a problem on a mesh.
pub fn assemble(
    spec: &ProblemSpec,
    mesh: &Mesh,
    dofmap: &DofMap,
    incidence: &IncidenceMatrix,
    options: &AssemblyOptions,
) -> Result<SaddleSystem> {
    let n = mesh.degree;
    let s = spec.sign.factor();
    if let Some(mult) = spec.elements_y_multiple {
        if !mesh.elements_y.is_multiple_of(mult) {
            return Err(Error::InvalidParameter {
                name: "elements_y",
                reason: format!(
                    "case `{}` requires a multiple of {mult}, got {}",
                    spec.name, mesh.elements_y
                ),
            });
        }
    }

    let mass_pts = options.mass_pts(n);
    let source_pts = options.source_pts(n);
    let quad_mass = gll_rule(mass_pts - 1)?;
    let quad_src = gll_rule(source_pts - 1)?;
    let basis_mass = tabulate(n, &quad_mass.nodes)?;
    let basis_src = tabulate(n, &quad_src.nodes)?;
    let quad_bnd = gll_rule(BOUNDARY_QUAD_DEGREE)?;
    let basis_bnd = tabulate(n, &quad_bnd.nodes)?;

    let m2 = mass_matrix_volume(&basis_mass, &quad_mass)?;

    // boundary data: prescribed sub-edge fluxes and the pressure functional
    let n_q = dofmap.n_q();
    let mut prescribed_value = vec![None::<f64>; n_q];
    let mut b1 = vec![0.0; n_q];
    let mut netout = 0.0;
    let has_pressure_bc = !spec.boundary.all_flux();
    for bd in &dofmap.boundary {
        let orient = bd.side.outward_sign();
        match spec.boundary.side(bd.side) {
            BoundaryCondition::NormalFlux(f) => {
                let flux_through = quad_bnd.integrate_on(bd.arc.0, bd.arc.1, &**f);
                netout += flux_through;
                prescribed_value[bd.dof] = Some(orient * flux_through);
            }
            BoundaryCondition::Pressure(pbar) => {
                // ∮ p̄ (v_a · n) ds over the full element edge
                let mut v = 0.0;
                for (k, &t) in quad_bnd.nodes.iter().enumerate() {
                    let arc = match bd.side {
                        Side::Left | Side::Right => mesh.y_of(bd.element, t),
                        Side::Bottom | Side::Top => mesh.x_of(bd.element, t),
                    };
                    v += quad_bnd.weights[k] * pbar(arc) * basis_bnd.edge_at(bd.interval, k);
                }
                b1[bd.dof] += orient * v;
            }
        }
    }

    // source functionals per element
    let n_p = dofmap.n_p;
    let mut f_src = vec![0.0; n_p];
    for ey in 0..mesh.elements_y {
        for ex in 0..mesh.elements_x {
            let fe = source_functional(mesh, (ex, ey), &basis_src, &quad_src, &spec.source);
            for (a, gp) in dofmap.element_pressure_dofs(ex, ey).into_iter().enumerate() {
                f_src[gp] += fe[a];
            }
        }
    }

    if !has_pressure_bc {
        // solvability precondition: the continuous data must balance
        let mut total_phi = 0.0;
        for ey in 0..mesh.elements_y {
            for ex in 0..mesh.elements_x {
                for (qa, &xi) in quad_bnd.nodes.iter().enumerate() {
                    for (qc, &eta) in quad_bnd.nodes.iter().enumerate() {
                        total_phi += quad_bnd.weights[qa]
                            * quad_bnd.weights[qc]
                            * (spec.source)(mesh.x_of(ex, xi), mesh.y_of(ey, eta));
                    }
                }
            }
        }
        total_phi *= mesh.dx * mesh.dy / 4.0;
        let scale = total_phi.abs().max(netout.abs()).max(1.0);
        if (total_phi - netout).abs() > COMPATIBILITY_TOL * scale {
            return Err(Error::IllPosed(format!(
                "all-flux boundary data is incompatible with the source: \
                 ∫φ = {total_phi:.12e} but ∮q·n = {netout:.12e}"
            )));
        }
        // enforce exact discrete compatibility: distribute the (quadrature
        // level) defect over the sub-volume measures so the discrete system
        // is consistent and conservation holds to round-off
        let widths: Vec<f64> = basis_mass
            .nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .collect();
        let mut c_dot_f = 0.0;
        for ey in 0..mesh.elements_y {
            for ex in 0..mesh.elements_x {
                for (a, gp) in dofmap.element_pressure_dofs(ex, ey).into_iter().enumerate() {
                    let i = a % n;
                    let j = a / n;
                    c_dot_f += widths[i] * widths[j] * f_src[gp];
                }
            }
        }
        let defect = c_dot_f - netout;
        let per_basis = mesh.dx * mesh.dy / 4.0 / mesh.area();
        for f in f_src.iter_mut() {
            *f -= defect * per_basis;
        }
    }

    // sub-volume source coefficients: M^(n) φ̂ = F per element
    let mut source_hat = vec![0.0; n_p];
    for ey in 0..mesh.elements_y {
        for ex in 0..mesh.elements_x {
            let dofs = dofmap.element_pressure_dofs(ex, ey);
            let fe: Vec<f64> = dofs.iter().map(|&g| f_src[g]).collect();
            let hat = cholesky_solve(&m2, &fe)?;
            for (a, &g) in dofs.iter().enumerate() {
                source_hat[g] = hat[a];
            }
        }
    }

    // reduced numbering
    let mut flux_to_reduced = vec![None::<usize>; n_q];
    let mut free_fluxes = Vec::new();
    for dof in 0..n_q {
        if prescribed_value[dof].is_none() {
            flux_to_reduced[dof] = Some(free_fluxes.len());
            free_fluxes.push(dof);
        }
    }
    let n_free = free_fluxes.len();
    let has_gauge = !has_pressure_bc;
    let dim = n_free + n_p + usize::from(has_gauge);
    if dim > crate::solver::MAX_DENSE_DIM {
        return Err(Error::InvalidParameter {
            name: "system",
            reason: format!(
                "dimension {dim} exceeds the dense factorization limit {}",
                crate::solver::MAX_DENSE_DIM
            ),
        });
    }
    let mut a = Array2::<f64>::zeros((dim, dim));
    let mut rhs = Array1::<f64>::zeros(dim);

    // flux block and elimination of prescribed columns (upper triangle only)
    for ey in 0..mesh.elements_y {
        for ex in 0..mesh.elements_x {
            let me = mass_matrix_flux(mesh, (ex, ey), &basis_mass, &spec.permeability, &quad_mass)?;
            let gl = dofmap.element_flux_dofs(ex, ey);
            for (la, &ga) in gl.iter().enumerate() {
                let Some(ra) = flux_to_reduced[ga] else {
                    continue;
                };
                for (lb, &gb) in gl.iter().enumerate() {
                    let v = me[[la, lb]];
                    match flux_to_reduced[gb] {
                        Some(rb) => {
                            if ra <= rb {
                                a[[ra, rb]] += v;
                            }
                        }
                        None => {
                            rhs[ra] -= v * prescribed_value[gb].unwrap();
                        }
                    }
                }
            }
            // divergence block rows for this element: M^(n) paired with the
            // incidence rows of its sub-volumes
            let gp = dofmap.element_pressure_dofs(ex, ey);
            for (lp, &gpr) in gp.iter().enumerate() {
                let row = n_free + gpr;
                for (lb, &gpb) in gp.iter().enumerate() {
                    let w = m2[[lp, lb]];
                    let (cols, signs) = incidence.row(gpb);
                    for (&gq, &sgn) in cols.iter().zip(signs) {
                        let v = s * w * sgn as f64;
                        match flux_to_reduced[gq] {
                            Some(rq) => a[[rq, row]] += v,
                            None => rhs[row] -= v * prescribed_value[gq].unwrap(),
                        }
                    }
                }
            }
        }
    }

    for (r, &g) in free_fluxes.iter().enumerate() {
        rhs[r] += s * b1[g];
    }
    for gp in 0..n_p {
        rhs[n_free + gp] += s * f_src[gp];
    }

    let mut gauge_target = 0.0;
    if has_gauge {
        if spec.gauge == GaugeMode::MatchExactMean {
            let exact = spec.exact.as_ref().ok_or(Error::MissingExactSolution)?;
            let mut mean = 0.0;
            for ey in 0..mesh.elements_y {
                for ex in 0..mesh.elements_x {
                    for (qa, &xi) in quad_bnd.nodes.iter().enumerate() {
                        for (qc, &eta) in quad_bnd.nodes.iter().enumerate() {
                            mean += quad_bnd.weights[qa]
                                * quad_bnd.weights[qc]
                                * (exact.pressure)(mesh.x_of(ex, xi), mesh.y_of(ey, eta));
                        }
                    }
                }
            }
            gauge_target = mean * mesh.dx * mesh.dy / 4.0;
        }
        // every pressure basis function integrates to dx·dy/4 over its element
        let g = s * mesh.dx * mesh.dy / 4.0;
        let last = dim - 1;
        for gp in 0..n_p {
            a[[n_free + gp, last]] = g;
        }
        rhs[last] = s * gauge_target;
    }

    // mirror the upper triangle for exact symmetry
    for i in 0..dim {
        for j in 0..i {
            a[[i, j]] = a[[j, i]];
        }
    }

    let prescribed = prescribed_value
        .iter()
        .enumerate()
        .filter_map(|(dof, v)| v.map(|val| (dof, val)))
        .collect();
    Ok(SaddleSystem {
        matrix: a,
        rhs,
        free_fluxes,
        flux_to_reduced,
        prescribed,
        n_p,
        has_gauge,
        gauge_target,
        sign: s,
        source_hat,
        mass_quad_pts: mass_pts,
        source_quad_pts: source_pts,
    })
}
