//! Direct solution of the assembled symmetric indefinite system.
//!
//! The saddle-point matrix is factored with a Bunch-Kaufman symmetric
//! indefinite factorization (LAPACK dsytrf) followed by one step of
//! iterative refinement. A hand-rolled partially pivoted LU provides an
//! independent second route used by the cross-check tests.

use crate::assembly::{PermeabilityField, SaddleSystem};
use crate::error::{Error, Result};
use crate::mesh::{reconstruct, DofMap, Field, Mesh};
use crate::topology::IncidenceMatrix;
use ndarray::{Array1, Array2};
use ndarray_linalg::{FactorizeHInto, SolveH};

/// Largest system dimension accepted by the dense factorization path.
pub const MAX_DENSE_DIM: usize = 20_000;

/// Relative residual bound every solve must satisfy.
const RESIDUAL_TOL: f64 = 1e-10;

const MAX_REFINEMENTS: usize = 3;

/// Solve diagnostics recorded with every solution.
#[derive(Debug, Clone)]
pub struct SolveDiagnostics {
    pub dim: usize,
    /// ‖Ax - b‖∞ after refinement.
    pub residual_inf: f64,
    /// ‖Ax - b‖∞ / (‖A‖∞ ‖x‖∞ + ‖b‖∞).
    pub relative_residual: f64,
    pub refinement_steps: usize,
}

/// Solution of one Darcy solve.
#[derive(Debug, Clone)]
pub struct SolutionFields {
    /// Full flux coefficient vector (prescribed boundary values included).
    pub flux: Vec<f64>,
    /// Pressure coefficient vector.
    pub pressure: Vec<f64>,
    /// Lagrange multiplier of the mean-pressure gauge, when present.
    pub gauge_multiplier: Option<f64>,
    pub diagnostics: SolveDiagnostics,
}

fn residual(a: &Array2<f64>, x: &Array1<f64>, b: &Array1<f64>) -> Array1<f64> {
    b - &a.dot(x)
}

fn inf_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

fn matrix_inf_norm(a: &Array2<f64>) -> f64 {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
}

/// Solve the saddle-point system and unpack the solution fields.
pub fn solve_saddle(system: &SaddleSystem) -> Result<SolutionFields> {
    let dim = system.dim();
    if dim > MAX_DENSE_DIM {
        return Err(Error::InvalidParameter {
            name: "system",
            reason: format!(
                "dimension {dim} exceeds the dense factorization limit {MAX_DENSE_DIM}"
            ),
        });
    }
    let a = &system.matrix;
    let b = &system.rhs;
    let factor = a
        .clone()
        .factorizeh_into()
        .map_err(|e| map_lapack_error(&e))?;
    let mut x = factor.solveh(b).map_err(|e| map_lapack_error(&e))?;

    let a_norm = matrix_inf_norm(a);
    let b_norm = inf_norm(b);
    let mut steps = 0;
    let mut r = residual(a, &x, b);
    for _ in 0..MAX_REFINEMENTS {
        let rel = inf_norm(&r) / (a_norm * inf_norm(&x) + b_norm).max(f64::MIN_POSITIVE);
        if rel <= RESIDUAL_TOL * 1e-4 {
            break;
        }
        let dx = factor.solveh(&r).map_err(|e| map_lapack_error(&e))?;
        x = &x + &dx;
        r = residual(a, &x, b);
        steps += 1;
    }
    let res_inf = inf_norm(&r);
    let rel = res_inf / (a_norm * inf_norm(&x) + b_norm).max(f64::MIN_POSITIVE);
    if !rel.is_finite() || rel > RESIDUAL_TOL {
        return Err(Error::ResidualTooLarge {
            residual: rel,
            tolerance: RESIDUAL_TOL,
        });
    }

    let n_free = system.n_free();
    let n_q = system.flux_to_reduced.len();
    let mut flux = vec![0.0; n_q];
    for (r, &g) in system.free_fluxes.iter().enumerate() {
        flux[g] = x[r];
    }
    for &(g, v) in &system.prescribed {
        flux[g] = v;
    }
    let pressure = x.as_slice().unwrap()[n_free..n_free + system.n_p].to_vec();
    let gauge_multiplier = system.has_gauge.then(|| x[dim - 1]);
    Ok(SolutionFields {
        flux,
        pressure,
        gauge_multiplier,
        diagnostics: SolveDiagnostics {
            dim,
            residual_inf: res_inf,
            relative_residual: rel,
            refinement_steps: steps,
        },
    })
}

fn map_lapack_error(e: &ndarray_linalg::error::LinalgError) -> Error {
    match e {
        ndarray_linalg::error::LinalgError::Lapack(
            lax::error::Error::LapackComputationalFailure { return_code },
        ) => Error::Factorization {
            pivot: *return_code as usize,
        },
        other => Error::InvalidParameter {
            name: "system",
            reason: other.to_string(),
        },
    }
}

/// Discrete mass-balance residual ‖E q - φ̂‖∞ of a solution.
pub fn mass_balance_residual(
    system: &SaddleSystem,
    incidence: &IncidenceMatrix,
    fields: &SolutionFields,
) -> f64 {
    let div = incidence.apply(&fields.flux);
    div.iter()
        .zip(&system.source_hat)
        .map(|(d, s)| (d - s).abs())
        .fold(0.0f64, f64::max)
}

/// Pointwise velocity u = K⁻¹ q at a tensor grid of reference points.
///
/// Returns (u_x, u_y) arrays laid out like [`reconstruct`].
pub fn velocity_from_flux(
    permeability: &PermeabilityField,
    mesh: &Mesh,
    dofmap: &DofMap,
    fields: &SolutionFields,
    ref_points: &[f64],
) -> Result<(Array2<f64>, Array2<f64>)> {
    let qx = reconstruct(mesh, dofmap, &fields.flux, Field::FluxX, ref_points)?;
    let qy = reconstruct(mesh, dofmap, &fields.flux, Field::FluxY, ref_points)?;
    let q = ref_points.len();
    let mut ux = Array2::zeros(qx.raw_dim());
    let mut uy = Array2::zeros(qx.raw_dim());
    for ey in 0..mesh.elements_y {
        for ex in 0..mesh.elements_x {
            let row = ey * mesh.elements_x + ex;
            for qi in 0..q {
                for qj in 0..q {
                    let x = mesh.x_of(ex, ref_points[qi]);
                    let y = mesh.y_of(ey, ref_points[qj]);
                    let w = permeability.inverse_in_element(mesh, ex, ey, x, y)?;
                    let col = qi * q + qj;
                    let (fx, fy) = (qx[[row, col]], qy[[row, col]]);
                    ux[[row, col]] = w[0][0] * fx + w[0][1] * fy;
                    uy[[row, col]] = w[1][0] * fx + w[1][1] * fy;
                }
            }
        }
    }
    Ok((ux, uy))
}

/// Dense LU with partial pivoting. Independent of the LAPACK path; used as
/// the second algebraic route in cross-check tests.
pub fn lu_solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    let mut lu = a.clone();
    let mut x = b.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        let mut best = lu[[k, k]].abs();
        for r in k + 1..n {
            let v = lu[[r, k]].abs();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best == 0.0 {
            return Err(Error::Factorization { pivot: k });
        }
        if p != k {
            for c in 0..n {
                lu.swap([k, c], [p, c]);
            }
            piv.swap(k, p);
            x.swap(k, p);
        }
        let d = lu[[k, k]];
        for r in k + 1..n {
            let f = lu[[r, k]] / d;
            lu[[r, k]] = f;
            if f != 0.0 {
                for c in k + 1..n {
                    lu[[r, c]] -= f * lu[[k, c]];
                }
                x[r] -= f * x[k];
            }
        }
    }
    for k in (0..n).rev() {
        for c in k + 1..n {
            x[k] -= lu[[k, c]] * x[c];
        }
        x[k] /= lu[[k, k]];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{
        assemble, AssemblyOptions, BoundaryCondition, BoundaryConditions, DarcySign, GaugeMode,
        ProblemSpec,
    };
    use crate::mesh::build_mesh;
    use crate::topology::incidence_div;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn lu_matches_direct_inverse() {
        let a = array![[2.0, 1.0, 0.0], [1.0, 3.0, -1.0], [0.0, -1.0, 1.5]];
        let b = array![1.0, -2.0, 0.5];
        let x = lu_solve(&a, &b).unwrap();
        let r = &b - &a.dot(&x);
        assert!(r.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn lu_reports_singularity() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        let b = array![1.0, 2.0];
        assert!(matches!(
            lu_solve(&a, &b),
            Err(Error::Factorization { .. })
        ));
    }

    fn trivial_spec() -> ProblemSpec {
        ProblemSpec {
            name: "trivial".into(),
            domain: (0.0, 1.0, 0.0, 1.0),
            permeability: PermeabilityField::identity(),
            source: Box::new(|_, _| 0.0),
            boundary: BoundaryConditions {
                left: BoundaryCondition::flux(|_| 0.0),
                right: BoundaryCondition::flux(|_| 0.0),
                bottom: BoundaryCondition::flux(|_| 0.0),
                top: BoundaryCondition::flux(|_| 0.0),
            },
            exact: None,
            sign: DarcySign::Paper,
            gauge: GaugeMode::MeanZero,
            elements_y_multiple: None,
        }
    }

    #[test]
    fn symmetric_and_lu_routes_agree() {
        let spec = trivial_spec();
        let (mesh, dofmap) = build_mesh(spec.domain, 2, 2, 2).unwrap();
        let e = incidence_div(&mesh, &dofmap);
        let mut sys = assemble(&spec, &mesh, &dofmap, &e, &AssemblyOptions::default()).unwrap();
        // inject a nontrivial compatible right-hand side
        for (k, v) in sys.rhs.iter_mut().enumerate() {
            *v = ((k * 7919) % 101) as f64 / 101.0 - 0.5;
        }
        let fields = solve_saddle(&sys).unwrap();
        let lu = lu_solve(&sys.matrix, &sys.rhs).unwrap();
        let mut x_sym = Vec::new();
        for &g in &sys.free_fluxes {
            x_sym.push(fields.flux[g]);
        }
        x_sym.extend_from_slice(&fields.pressure);
        x_sym.push(fields.gauge_multiplier.unwrap());
        let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in x_sym.iter().zip(lu.iter()) {
            assert!((a - b).abs() <= 1e-10 * scale.max(1.0), "{a} vs {b}");
        }
        assert!(fields.diagnostics.relative_residual <= 1e-10);
    }

    #[test]
    fn deterministic_solves() {
        let spec = trivial_spec();
        let (mesh, dofmap) = build_mesh(spec.domain, 3, 2, 3).unwrap();
        let e = incidence_div(&mesh, &dofmap);
        let mut sys = assemble(&spec, &mesh, &dofmap, &e, &AssemblyOptions::default()).unwrap();
        for (k, v) in sys.rhs.iter_mut().enumerate() {
            *v = ((k * 104729) % 997) as f64 / 997.0 - 0.3;
        }
        let a = solve_saddle(&sys).unwrap();
        let b = solve_saddle(&sys).unwrap();
        assert_eq!(a.flux, b.flux);
        assert_eq!(a.pressure, b.pressure);
    }

    #[test]
    fn velocity_inverts_permeability() {
        // constant flux (1, 0) under K = [[2,1],[1,2]] gives u = (2/3, -1/3)
        let (mesh, dofmap) = build_mesh((0.0, 1.0, 0.0, 1.0), 1, 1, 1).unwrap();
        let k = PermeabilityField::constant([[2.0, 1.0], [1.0, 2.0]]);
        let mut flux = vec![0.0; dofmap.n_q()];
        // unit flux density in x: coefficients are sub-edge fluxes, dy = 1
        flux[dofmap.qx(0, 0, 0, 1)] = 1.0;
        flux[dofmap.qx(0, 0, 1, 1)] = 1.0;
        let fields = SolutionFields {
            flux,
            pressure: vec![0.0; dofmap.n_p],
            gauge_multiplier: None,
            diagnostics: SolveDiagnostics {
                dim: 0,
                residual_inf: 0.0,
                relative_residual: 0.0,
                refinement_steps: 0,
            },
        };
        let (ux, uy) = velocity_from_flux(&k, &mesh, &dofmap, &fields, &[-0.5, 0.5]).unwrap();
        for (&vx, &vy) in ux.iter().zip(uy.iter()) {
            assert_abs_diff_eq!(vx, 2.0 / 3.0, epsilon = 1e-14);
            assert_abs_diff_eq!(vy, -1.0 / 3.0, epsilon = 1e-14);
        }
        // identity permeability returns the flux itself
        let (ux, uy) = velocity_from_flux(
            &PermeabilityField::identity(),
            &mesh,
            &dofmap,
            &fields,
            &[0.0],
        )
        .unwrap();
        assert_abs_diff_eq!(ux[[0, 0]], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(uy[[0, 0]], 0.0, epsilon = 1e-14);
    }
}
