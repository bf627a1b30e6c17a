//! Benchmark problems, error norms, and convergence studies.

use crate::assembly::{
    assemble, AssemblyOptions, BoundaryCondition, BoundaryConditions, DarcySign, ExactSolution,
    GaugeMode, PermeabilityField, ProblemSpec, SaddleSystem,
};
use crate::error::{Error, Result};
use crate::mesh::{build_mesh, reconstruct, DofMap, Field, Mesh};
use crate::quadrature::gll_rule;
use crate::solver::{solve_saddle, SolutionFields};
use crate::topology::{incidence_div, IncidenceMatrix};
use std::time::{SystemTime, UNIX_EPOCH};

/// Everything produced by one solve.
#[derive(Debug)]
pub struct SolveOutput {
    pub mesh: Mesh,
    pub dofmap: DofMap,
    pub incidence: IncidenceMatrix,
    pub system: SaddleSystem,
    pub fields: SolutionFields,
}

/// Build, assemble, and solve a problem on an elements_x × elements_y mesh.
pub fn solve_problem(
    spec: &ProblemSpec,
    elements_x: usize,
    elements_y: usize,
    degree: usize,
    options: &AssemblyOptions,
) -> Result<SolveOutput> {
    let (mesh, dofmap) = build_mesh(spec.domain, elements_x, elements_y, degree)?;
    let incidence = incidence_div(&mesh, &dofmap);
    let system = assemble(spec, &mesh, &dofmap, &incidence, options)?;
    let fields = solve_saddle(&system)?;
    Ok(SolveOutput {
        mesh,
        dofmap,
        incidence,
        system,
        fields,
    })
}

/// Which error norm to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorField {
    /// Pressure L² error; with `align_mean` the numerical pressure is first
    /// shifted by the difference of means (the gauge constant is arbitrary).
    Pressure { align_mean: bool },
    /// Combined L² error of both flux components.
    Flux,
}

/// L² error of a solved field against the exact solution, integrated with a
/// GLL rule of `degree + 4` points per direction.
pub fn l2_error(
    mesh: &Mesh,
    dofmap: &DofMap,
    fields: &SolutionFields,
    exact: Option<&ExactSolution>,
    which: ErrorField,
) -> Result<f64> {
    let exact = exact.ok_or(Error::MissingExactSolution)?;
    let quad = gll_rule(mesh.degree + 3)?;
    let q = quad.len();
    let jac = mesh.dx * mesh.dy / 4.0;
    match which {
        ErrorField::Pressure { align_mean } => {
            let ph = reconstruct(mesh, dofmap, &fields.pressure, Field::Pressure, &quad.nodes)?;
            let shift = if align_mean {
                let mut diff = 0.0;
                for ey in 0..mesh.elements_y {
                    for ex in 0..mesh.elements_x {
                        let row = ey * mesh.elements_x + ex;
                        for qa in 0..q {
                            for qc in 0..q {
                                let x = mesh.x_of(ex, quad.nodes[qa]);
                                let y = mesh.y_of(ey, quad.nodes[qc]);
                                diff += quad.weights[qa]
                                    * quad.weights[qc]
                                    * jac
                                    * ((exact.pressure)(x, y) - ph[[row, qa * q + qc]]);
                            }
                        }
                    }
                }
                diff / mesh.area()
            } else {
                0.0
            };
            let mut err2 = 0.0;
            for ey in 0..mesh.elements_y {
                for ex in 0..mesh.elements_x {
                    let row = ey * mesh.elements_x + ex;
                    for qa in 0..q {
                        for qc in 0..q {
                            let x = mesh.x_of(ex, quad.nodes[qa]);
                            let y = mesh.y_of(ey, quad.nodes[qc]);
                            let d = ph[[row, qa * q + qc]] + shift - (exact.pressure)(x, y);
                            err2 += quad.weights[qa] * quad.weights[qc] * jac * d * d;
                        }
                    }
                }
            }
            Ok(err2.sqrt())
        }
        ErrorField::Flux => {
            let qxh = reconstruct(mesh, dofmap, &fields.flux, Field::FluxX, &quad.nodes)?;
            let qyh = reconstruct(mesh, dofmap, &fields.flux, Field::FluxY, &quad.nodes)?;
            let mut err2 = 0.0;
            for ey in 0..mesh.elements_y {
                for ex in 0..mesh.elements_x {
                    let row = ey * mesh.elements_x + ex;
                    let center = mesh.centroid(ex, ey);
                    for qa in 0..q {
                        for qc in 0..q {
                            let x = mesh.x_of(ex, quad.nodes[qa]);
                            let y = mesh.y_of(ey, quad.nodes[qc]);
                            let (ex_x, ex_y) = (exact.flux)(x, y, center);
                            let dx = qxh[[row, qa * q + qc]] - ex_x;
                            let dy = qyh[[row, qa * q + qc]] - ex_y;
                            err2 +=
                                quad.weights[qa] * quad.weights[qc] * jac * (dx * dx + dy * dy);
                        }
                    }
                }
            }
            Ok(err2.sqrt())
        }
    }
}

/// Anisotropic manufactured benchmark on [-1,1]²: K = [[2,1],[1,2]],
/// p = e^{xy}, φ = 2(1+x²+xy+y²)e^{xy}, prescribed normal flux from the
/// exact flux on all four sides, gauge matched to the exact mean.
pub fn manufactured_case(sign: DarcySign) -> ProblemSpec {
    let s = sign.factor();
    let k = [[2.0, 1.0], [1.0, 2.0]];
    let exact_flux = move |x: f64, y: f64| {
        let e = (x * y).exp();
        (s * (2.0 * y + x) * e, s * (y + 2.0 * x) * e)
    };
    ProblemSpec {
        name: "manufactured".into(),
        domain: (-1.0, 1.0, -1.0, 1.0),
        permeability: PermeabilityField::constant(k),
        source: Box::new(move |x, y| s * 2.0 * (1.0 + x * x + x * y + y * y) * (x * y).exp()),
        boundary: BoundaryConditions {
            left: BoundaryCondition::flux(move |y| -exact_flux(-1.0, y).0),
            right: BoundaryCondition::flux(move |y| exact_flux(1.0, y).0),
            bottom: BoundaryCondition::flux(move |x| -exact_flux(x, -1.0).1),
            top: BoundaryCondition::flux(move |x| exact_flux(x, 1.0).1),
        },
        exact: Some(ExactSolution {
            pressure: Box::new(|x, y| (x * y).exp()),
            flux: Box::new(move |x, y, _| exact_flux(x, y)),
        }),
        sign,
        gauge: GaugeMode::MatchExactMean,
        elements_y_multiple: None,
    }
}

/// Piecewise permeability of the layered benchmark.
pub fn layered_alpha(y: f64) -> f64 {
    if y <= 1.0 / 3.0 {
        0.3
    } else if y <= 2.0 / 3.0 {
        0.7
    } else {
        0.5
    }
}

/// Layered-medium benchmark on [0,1]²: K = α(y)·I with α = 0.3 / 0.7 / 0.5
/// from bottom to top, a unit pressure drop across the x direction driving
/// left-to-right flow, and no-flow top/bottom walls. The exact solution has
/// pressure linear in x, uniform velocity, and q_x piecewise constant ∝ α.
pub fn layered_case(sign: DarcySign) -> ProblemSpec {
    // under the as-written convention flow runs up the gradient, so the
    // downstream side carries the higher pressure
    let (p_left, p_right) = match sign {
        DarcySign::Paper => (0.0, 1.0),
        DarcySign::Physical => (1.0, 0.0),
    };
    ProblemSpec {
        name: "layered".into(),
        domain: (0.0, 1.0, 0.0, 1.0),
        permeability: PermeabilityField::new(|_, y| {
            let a = layered_alpha(y);
            [[a, 0.0], [0.0, a]]
        })
        .with_discontinuities(vec![1.0 / 3.0, 2.0 / 3.0]),
        source: Box::new(|_, _| 0.0),
        boundary: BoundaryConditions {
            left: BoundaryCondition::pressure(move |_| p_left),
            right: BoundaryCondition::pressure(move |_| p_right),
            bottom: BoundaryCondition::flux(|_| 0.0),
            top: BoundaryCondition::flux(|_| 0.0),
        },
        exact: Some(ExactSolution {
            pressure: Box::new(move |x, _| match sign {
                DarcySign::Paper => x,
                DarcySign::Physical => 1.0 - x,
            }),
            // resolve the layer through the element center so values on
            // material interfaces follow the element being integrated
            flux: Box::new(|_, _, (_, cy)| (layered_alpha(cy), 0.0)),
        }),
        sign,
        gauge: GaugeMode::MeanZero,
        elements_y_multiple: Some(3),
    }
}

/// Benchmark selector for studies and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Manufactured,
    Layered,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::Manufactured => "manufactured",
            Case::Layered => "layered",
        }
    }

    pub fn build(self, sign: DarcySign) -> ProblemSpec {
        match self {
            Case::Manufactured => manufactured_case(sign),
            Case::Layered => layered_case(sign),
        }
    }

    /// Element row count for a nominal mesh parameter M.
    pub fn elements_y_for(self, m: usize) -> usize {
        match self {
            Case::Manufactured => m,
            // snap to a multiple of 3 so material interfaces coincide with
            // element interfaces
            Case::Layered => 3 * m.div_ceil(3),
        }
    }
}

/// Refinement mode of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMode {
    H,
    P,
}

impl StudyMode {
    pub fn name(self) -> &'static str {
        match self {
            StudyMode::H => "h",
            StudyMode::P => "p",
        }
    }
}

/// One row of a convergence report.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    /// Nominal mesh parameter M (elements per direction before snapping).
    pub mesh_m: usize,
    pub degree: usize,
    /// Total unknown count n_q + n_p.
    pub dofs: usize,
    pub pressure_error: f64,
    pub flux_error: f64,
    /// h mode: log(e_prev/e_cur) / log(h_prev/h_cur) against the previous
    /// row of the same degree. p mode: per-degree error reduction factor
    /// e_prev/e_cur. None on the first row of each sweep.
    pub observed_rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StudyMetadata {
    pub mass_quad_pts: Option<usize>,
    pub source_quad_pts: Option<usize>,
    pub sign: DarcySign,
    pub timestamp_unix: u64,
}

/// Result of a convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub case_name: String,
    pub mode: StudyMode,
    pub rows: Vec<ConvergenceRow>,
    pub metadata: StudyMetadata,
}

fn study_row(
    case: Case,
    spec: &ProblemSpec,
    m: usize,
    degree: usize,
    options: &AssemblyOptions,
) -> Result<(ConvergenceRow, SolveOutput)> {
    let my = case.elements_y_for(m);
    let out = solve_problem(spec, m, my, degree, options)?;
    let align = out.system.has_gauge;
    let p_err = l2_error(
        &out.mesh,
        &out.dofmap,
        &out.fields,
        spec.exact.as_ref(),
        ErrorField::Pressure { align_mean: align },
    )?;
    let q_err = l2_error(
        &out.mesh,
        &out.dofmap,
        &out.fields,
        spec.exact.as_ref(),
        ErrorField::Flux,
    )?;
    Ok((
        ConvergenceRow {
            mesh_m: m,
            degree,
            dofs: out.dofmap.total(),
            pressure_error: p_err,
            flux_error: q_err,
            observed_rate: None,
        },
        out,
    ))
}

/// Run an h- or p-refinement study of a benchmark case.
///
/// h mode sweeps `mesh_counts` for each entry of `degrees`; p mode sweeps
/// `degrees` on the first entry of `mesh_counts`.
pub fn convergence_study(
    case: Case,
    mode: StudyMode,
    degrees: &[usize],
    mesh_counts: &[usize],
    sign: DarcySign,
    options: &AssemblyOptions,
) -> Result<ConvergenceReport> {
    if degrees.is_empty() || mesh_counts.is_empty() {
        return Err(Error::InvalidParameter {
            name: "refinement lists",
            reason: "degrees and mesh counts must be nonempty".into(),
        });
    }
    let spec = case.build(sign);
    if spec.exact.is_none() {
        return Err(Error::MissingExactSolution);
    }
    let mut rows = Vec::new();
    match mode {
        StudyMode::H => {
            for &n in degrees {
                let mut prev: Option<(usize, f64)> = None;
                for &m in mesh_counts {
                    let (mut row, _) = study_row(case, &spec, m, n, options)?;
                    if let Some((m_prev, e_prev)) = prev {
                        let rate = (e_prev / row.pressure_error).ln()
                            / (m as f64 / m_prev as f64).ln();
                        row.observed_rate = Some(rate);
                    }
                    prev = Some((m, row.pressure_error));
                    rows.push(row);
                }
            }
        }
        StudyMode::P => {
            let m = mesh_counts[0];
            let mut prev: Option<f64> = None;
            for &n in degrees {
                let (mut row, _) = study_row(case, &spec, m, n, options)?;
                if let Some(e_prev) = prev {
                    row.observed_rate = Some(e_prev / row.pressure_error);
                }
                prev = Some(row.pressure_error);
                rows.push(row);
            }
        }
    }
    Ok(ConvergenceReport {
        case_name: case.name().into(),
        mode,
        rows,
        metadata: StudyMetadata {
            mass_quad_pts: options.mass_quad_pts,
            source_quad_pts: options.source_quad_pts,
            sign,
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::mass_balance_residual;
    use approx::assert_abs_diff_eq;

    #[test]
    fn manufactured_source_is_divergence_of_exact_flux() {
        // finite-difference divergence of K grad e^{xy} against φ
        let spec = manufactured_case(DarcySign::Paper);
        let exact = spec.exact.as_ref().unwrap();
        let h = 1e-5;
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let x = -0.9 + 1.8 * rng();
            let y = -0.9 + 1.8 * rng();
            let c = (0.0, 0.0);
            let dqx = ((exact.flux)(x + h, y, c).0 - (exact.flux)(x - h, y, c).0) / (2.0 * h);
            let dqy = ((exact.flux)(x, y + h, c).1 - (exact.flux)(x, y - h, c).1) / (2.0 * h);
            let phi = (spec.source)(x, y);
            assert!(
                (dqx + dqy - phi).abs() <= 1e-6 * phi.abs().max(1.0),
                "at ({x}, {y}): {} vs {phi}",
                dqx + dqy
            );
        }
        assert_abs_diff_eq!((exact.pressure)(0.0, 0.0), 1.0);
    }

    #[test]
    fn manufactured_data_is_compatible() {
        // divergence theorem: ∫φ = ∮ q·n for the exact data
        let spec = manufactured_case(DarcySign::Paper);
        let quad = gll_rule(30).unwrap();
        let mut total = 0.0;
        for (qa, &x) in quad.nodes.iter().enumerate() {
            for (qc, &y) in quad.nodes.iter().enumerate() {
                total += quad.weights[qa] * quad.weights[qc] * (spec.source)(x, y);
            }
        }
        let exact = spec.exact.as_ref().unwrap();
        let c = (0.0, 0.0);
        let bflux = quad.integrate(|t| {
            (exact.flux)(1.0, t, c).0 - (exact.flux)(-1.0, t, c).0 + (exact.flux)(t, 1.0, c).1
                - (exact.flux)(t, -1.0, c).1
        });
        assert_abs_diff_eq!(total, bflux, epsilon = 1e-10 * total.abs());
    }

    #[test]
    fn layered_exact_solution_by_hand() {
        // unit pressure drop over unit length: |u| = 1, |q_x| = α per layer
        let spec = layered_case(DarcySign::Paper);
        let exact = spec.exact.as_ref().unwrap();
        for (cy, alpha) in [(0.2, 0.3), (0.5, 0.7), (0.9, 0.5)] {
            let (qx, qy) = (exact.flux)(0.4, cy, (0.5, cy));
            assert_eq!(qx, alpha);
            assert_eq!(qy, 0.0);
        }
        assert_eq!((exact.pressure)(0.25, 0.7), 0.25);
    }

    #[test]
    fn zero_field_pressure_error_is_norm_of_exact() {
        // solved fields replaced by zeros: the error is ‖e^{xy}‖_{L²}
        let spec = manufactured_case(DarcySign::Paper);
        let (mesh, dofmap) = build_mesh(spec.domain, 2, 2, 3).unwrap();
        let zero = SolutionFields {
            flux: vec![0.0; dofmap.n_q()],
            pressure: vec![0.0; dofmap.n_p],
            gauge_multiplier: None,
            diagnostics: crate::solver::SolveDiagnostics {
                dim: 0,
                residual_inf: 0.0,
                relative_residual: 0.0,
                refinement_steps: 0,
            },
        };
        let err = l2_error(
            &mesh,
            &dofmap,
            &zero,
            spec.exact.as_ref(),
            ErrorField::Pressure { align_mean: false },
        )
        .unwrap();
        // ‖e^{xy}‖ on [-1,1]² from the series Σ 2^m (2/(m+1))²/m! over even m
        assert_abs_diff_eq!(err, 2.236768845167053, epsilon = 1e-12);
    }

    #[test]
    fn exact_injection_gives_zero_error() {
        // layered exact solution lies in the discrete space: injecting its
        // coefficients reproduces it to round-off
        let spec = layered_case(DarcySign::Paper);
        let (mesh, dofmap) = build_mesh(spec.domain, 3, 3, 2).unwrap();
        let n = mesh.degree;
        let gll = gll_rule(n).unwrap();
        let mut flux = vec![0.0; dofmap.n_q()];
        for ey in 0..3 {
            let alpha = layered_alpha(mesh.y_of(ey, 0.0));
            for ex in 0..3 {
                for i in 0..=n {
                    for j in 1..=n {
                        // sub-edge flux of the constant field (α, 0)
                        let len = (gll.nodes[j] - gll.nodes[j - 1]) * mesh.dy / 2.0;
                        flux[dofmap.qx(ex, ey, i, j)] = alpha * len;
                    }
                }
            }
        }
        let mut pressure = vec![0.0; dofmap.n_p];
        // p = x: histopolation coefficients are sub-interval integrals of x
        // divided by interval lengths in η; separable as (∫ x)·(Δη)
        for ey in 0..3 {
            for ex in 0..3 {
                for j in 1..=n {
                    for i in 1..=n {
                        let x0 = mesh.x_of(ex, gll.nodes[i - 1]);
                        let x1 = mesh.x_of(ex, gll.nodes[i]);
                        // coefficient in the reference-coordinate basis:
                        // p = Σ c_ij ε_i(ξ)ε_j(η), c_ij = (∫_ref x dξ)(Δη_j)
                        let int_x = 0.5 * (x0 + x1) * (gll.nodes[i] - gll.nodes[i - 1]);
                        let d_eta = gll.nodes[j] - gll.nodes[j - 1];
                        pressure[dofmap.pressure(ex, ey, i, j)] = int_x * d_eta;
                    }
                }
            }
        }
        let fields = SolutionFields {
            flux,
            pressure,
            gauge_multiplier: None,
            diagnostics: crate::solver::SolveDiagnostics {
                dim: 0,
                residual_inf: 0.0,
                relative_residual: 0.0,
                refinement_steps: 0,
            },
        };
        let perr = l2_error(
            &mesh,
            &dofmap,
            &fields,
            spec.exact.as_ref(),
            ErrorField::Pressure { align_mean: false },
        )
        .unwrap();
        let qerr = l2_error(
            &mesh,
            &dofmap,
            &fields,
            spec.exact.as_ref(),
            ErrorField::Flux,
        )
        .unwrap();
        assert!(perr <= 1e-13, "pressure error {perr}");
        assert!(qerr <= 1e-13, "flux error {qerr}");
    }

    #[test]
    fn missing_exact_solution_is_an_error() {
        let spec = manufactured_case(DarcySign::Paper);
        let (mesh, dofmap) = build_mesh(spec.domain, 1, 1, 1).unwrap();
        let zero = SolutionFields {
            flux: vec![0.0; dofmap.n_q()],
            pressure: vec![0.0; dofmap.n_p],
            gauge_multiplier: None,
            diagnostics: crate::solver::SolveDiagnostics {
                dim: 0,
                residual_inf: 0.0,
                relative_residual: 0.0,
                refinement_steps: 0,
            },
        };
        let err = l2_error(&mesh, &dofmap, &zero, None, ErrorField::Flux).unwrap_err();
        assert!(matches!(err, Error::MissingExactSolution));
    }

    #[test]
    fn refinement_decreases_error_monotonically() {
        let report = convergence_study(
            Case::Manufactured,
            StudyMode::H,
            &[3],
            &[2, 4],
            DarcySign::Paper,
            &AssemblyOptions::default(),
        )
        .unwrap();
        assert!(report.rows[1].pressure_error < report.rows[0].pressure_error);
        assert!(report.rows[1].flux_error < report.rows[0].flux_error);
        assert!(report.rows[0].observed_rate.is_none());
        assert!(report.rows[1].observed_rate.is_some());
    }

    #[test]
    fn layered_solution_is_exact_in_the_discrete_space() {
        // the exact flux (piecewise constant per layer) is representable for
        // every degree; the linear exact pressure needs N >= 2
        for n in [1, 2, 4] {
            let spec = layered_case(DarcySign::Paper);
            let out = solve_problem(&spec, 3, 3, n, &AssemblyOptions::default()).unwrap();
            let perr = l2_error(
                &out.mesh,
                &out.dofmap,
                &out.fields,
                spec.exact.as_ref(),
                ErrorField::Pressure { align_mean: false },
            )
            .unwrap();
            let qerr = l2_error(
                &out.mesh,
                &out.dofmap,
                &out.fields,
                spec.exact.as_ref(),
                ErrorField::Flux,
            )
            .unwrap();
            assert!(qerr <= 1e-10, "N={n}: flux error {qerr}");
            if n >= 2 {
                assert!(perr <= 1e-10, "N={n}: pressure error {perr}");
            }
            let mb = mass_balance_residual(&out.system, &out.incidence, &out.fields);
            assert!(mb <= 1e-12, "N={n}: mass balance {mb}");
        }
    }

    #[test]
    fn sign_convention_neutrality() {
        // under the physical convention the flux solution negates and the
        // error magnitudes are unchanged
        let opts = AssemblyOptions::default();
        let paper = manufactured_case(DarcySign::Paper);
        let physical = manufactured_case(DarcySign::Physical);
        let a = solve_problem(&paper, 2, 2, 2, &opts).unwrap();
        let b = solve_problem(&physical, 2, 2, 2, &opts).unwrap();
        for (x, y) in a.fields.flux.iter().zip(&b.fields.flux) {
            assert_abs_diff_eq!(*x, -*y, epsilon = 1e-11);
        }
        for which in [ErrorField::Pressure { align_mean: true }, ErrorField::Flux] {
            let ea = l2_error(&a.mesh, &a.dofmap, &a.fields, paper.exact.as_ref(), which).unwrap();
            let eb = l2_error(&b.mesh, &b.dofmap, &b.fields, physical.exact.as_ref(), which)
                .unwrap();
            assert_abs_diff_eq!(ea, eb, epsilon = 1e-10 * ea.max(1e-30));
        }
    }

    #[test]
    fn empty_refinement_lists_are_rejected() {
        assert!(convergence_study(
            Case::Manufactured,
            StudyMode::H,
            &[],
            &[2],
            DarcySign::Paper,
            &AssemblyOptions::default()
        )
        .is_err());
    }
}
