//! Command-line front end: flat key=value configuration, solves and
//! convergence studies, CSV output.
//!
//! Usage: `mimetic-darcy <command> [--config FILE] [--key=value ...]`
//! with commands `solve`, `convergence`, and `layered`. Flags override
//! config-file entries. Exit codes: 0 success, 1 numerical/modeling
//! failure, 2 configuration error, 3 I/O failure.

use crate::assembly::{AssemblyOptions, DarcySign};
use crate::error::Error;
use crate::mesh::physical_points;
use crate::mesh::{reconstruct, Field};
use crate::quadrature::gll_rule;
use crate::solver::velocity_from_flux;
use crate::verification::{
    convergence_study, l2_error, solve_problem, Case, ConvergenceReport, ErrorField, StudyMode,
};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Configuration problem: reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration key `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn cfg_err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.into(),
        message: message.into(),
    }
}

/// Runtime failure: numerical (exit 1) or I/O (exit 3).
#[derive(Debug)]
pub enum RunError {
    Numerical(Error),
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Numerical(_) => 1,
            RunError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Numerical(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o failure: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Numerical(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Convergence,
    Layered,
}

impl Command {
    fn parse(s: &str) -> Option<Command> {
        match s {
            "solve" => Some(Command::Solve),
            "convergence" => Some(Command::Convergence),
            "layered" => Some(Command::Layered),
            _ => None,
        }
    }
}

/// Fully validated run configuration.
#[derive(Debug)]
pub struct RunConfig {
    pub command: Command,
    pub case: Case,
    pub mode: StudyMode,
    pub domain: (f64, f64, f64, f64),
    pub elements_x: usize,
    pub elements_y: usize,
    pub degree: usize,
    pub degrees: Vec<usize>,
    pub mesh_counts: Vec<usize>,
    pub darcy_sign: DarcySign,
    pub mass_quad_pts: Option<usize>,
    pub source_quad_pts: Option<usize>,
    pub out_dir: PathBuf,
    /// GLL points per element per direction in field dumps.
    pub sample_pts: usize,
}

const KNOWN_KEYS: &[&str] = &[
    "command",
    "case",
    "mode",
    "x_min",
    "x_max",
    "y_min",
    "y_max",
    "elements_x",
    "elements_y",
    "degree",
    "degrees",
    "mesh_counts",
    "darcy_sign",
    "mass_quad_pts",
    "source_quad_pts",
    "out",
    "sample_pts",
];

/// Parse command-line arguments (and an optional config file) into a
/// validated configuration. Flags win over file entries.
pub fn parse_config(args: &[String]) -> Result<RunConfig, ConfigError> {
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    let mut positional_command: Option<String> = None;
    let mut config_path: Option<String> = None;

    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        if arg == "--config" {
            i += 1;
            let path = args
                .get(i)
                .ok_or_else(|| cfg_err("config", "missing file path after --config"))?;
            config_path = Some(path.clone());
        } else if let Some(rest) = arg.strip_prefix("--config=") {
            config_path = Some(rest.to_string());
        } else if let Some(rest) = arg.strip_prefix("--") {
            let (key, value) = rest
                .split_once('=')
                .ok_or_else(|| cfg_err(rest, "expected --key=value"))?;
            kv.insert(key.to_string(), value.to_string());
        } else if positional_command.is_none() {
            positional_command = Some(arg.clone());
        } else {
            return Err(cfg_err(arg, "unexpected positional argument"));
        }
        i += 1;
    }

    // file entries fill in whatever the flags did not set
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| cfg_err("config", format!("cannot read {path}: {e}")))?;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(line, "expected key=value"))?;
            kv.entry(key.trim().to_string())
                .or_insert_with(|| value.trim().to_string());
        }
    }
    if let Some(cmd) = positional_command {
        kv.insert("command".into(), cmd);
    }

    for key in kv.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(cfg_err(key, "unknown configuration key"));
        }
    }

    let command = match kv.get("command") {
        Some(c) => Command::parse(c)
            .ok_or_else(|| cfg_err("command", format!("unknown command `{c}`")))?,
        None => return Err(cfg_err("command", "no command given")),
    };

    let case = match kv.get("case").map(String::as_str) {
        Some("manufactured") => Case::Manufactured,
        Some("layered") => Case::Layered,
        Some(other) => return Err(cfg_err("case", format!("unknown case `{other}`"))),
        None => match command {
            Command::Layered => Case::Layered,
            _ => Case::Manufactured,
        },
    };
    if command == Command::Layered && case != Case::Layered {
        return Err(cfg_err("case", "the layered command requires case=layered"));
    }

    let mode = match kv.get("mode").map(String::as_str) {
        Some("h") | None => StudyMode::H,
        Some("p") => StudyMode::P,
        Some(other) => return Err(cfg_err("mode", format!("mode must be h or p, got `{other}`"))),
    };

    let parse_f64 = |key: &str, default: f64| -> Result<f64, ConfigError> {
        match kv.get(key) {
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| cfg_err(key, format!("not a number: `{v}`"))),
            None => Ok(default),
        }
    };
    let parse_usize = |key: &str, default: usize| -> Result<usize, ConfigError> {
        match kv.get(key) {
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| cfg_err(key, format!("not a nonnegative integer: `{v}`"))),
            None => Ok(default),
        }
    };
    let parse_list = |key: &str, default: &[usize]| -> Result<Vec<usize>, ConfigError> {
        match kv.get(key) {
            Some(v) => v
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| cfg_err(key, format!("bad list entry `{t}`")))
                })
                .collect(),
            None => Ok(default.to_vec()),
        }
    };

    let default_domain = match case {
        Case::Manufactured => (-1.0, 1.0, -1.0, 1.0),
        Case::Layered => (0.0, 1.0, 0.0, 1.0),
    };
    let domain = (
        parse_f64("x_min", default_domain.0)?,
        parse_f64("x_max", default_domain.1)?,
        parse_f64("y_min", default_domain.2)?,
        parse_f64("y_max", default_domain.3)?,
    );
    if !(domain.0 < domain.1 && domain.2 < domain.3) {
        return Err(cfg_err("x_min", "degenerate domain rectangle"));
    }
    if case == Case::Layered && domain != (0.0, 1.0, 0.0, 1.0) {
        return Err(cfg_err(
            "x_min",
            "the layered case is defined on the unit square [0,1]²",
        ));
    }

    let (def_mx, def_my, def_n) = match case {
        Case::Manufactured => (2, 2, 3),
        Case::Layered => (3, 3, 4),
    };
    let elements_x = parse_usize("elements_x", def_mx)?;
    let elements_y = parse_usize("elements_y", def_my)?;
    let degree = parse_usize("degree", def_n)?;
    if degree < 1 {
        return Err(cfg_err("degree", "polynomial degree must be >= 1"));
    }
    if elements_x < 1 {
        return Err(cfg_err("elements_x", "element count must be >= 1"));
    }
    if elements_y < 1 {
        return Err(cfg_err("elements_y", "element count must be >= 1"));
    }
    if case == Case::Layered && elements_y % 3 != 0 {
        return Err(cfg_err(
            "elements_y",
            "the layered case needs a multiple of 3 so element interfaces align with the material layers",
        ));
    }

    let default_degrees: &[usize] = match mode {
        StudyMode::H => &[1, 2, 3],
        StudyMode::P => &[2, 3, 4, 5, 6, 7, 8, 9, 10],
    };
    let default_counts: &[usize] = match mode {
        StudyMode::H => &[2, 4, 8, 16],
        StudyMode::P => &[2],
    };
    let degrees = parse_list("degrees", default_degrees)?;
    let mesh_counts = parse_list("mesh_counts", default_counts)?;
    if degrees.is_empty() || degrees.iter().any(|&n| n < 1) {
        return Err(cfg_err("degrees", "need a nonempty list of degrees >= 1"));
    }
    if mesh_counts.is_empty() || mesh_counts.iter().any(|&m| m < 1) {
        return Err(cfg_err("mesh_counts", "need a nonempty list of counts >= 1"));
    }

    let darcy_sign = match kv.get("darcy_sign").map(String::as_str) {
        Some("paper") | None => DarcySign::Paper,
        Some("physical") => DarcySign::Physical,
        Some(other) => {
            return Err(cfg_err(
                "darcy_sign",
                format!("must be paper or physical, got `{other}`"),
            ))
        }
    };

    let mass_quad_pts = match kv.get("mass_quad_pts") {
        Some(_) => {
            let v = parse_usize("mass_quad_pts", 0)?;
            if v < degree + 2 {
                return Err(cfg_err(
                    "mass_quad_pts",
                    format!("needs at least degree+2 = {} points", degree + 2),
                ));
            }
            Some(v)
        }
        None => None,
    };
    let source_quad_pts = match kv.get("source_quad_pts") {
        Some(_) => {
            let v = parse_usize("source_quad_pts", 0)?;
            if v < 2 {
                return Err(cfg_err("source_quad_pts", "needs at least 2 points"));
            }
            Some(v)
        }
        None => None,
    };

    let sample_pts = parse_usize("sample_pts", degree + 1)?;
    if sample_pts < 2 {
        return Err(cfg_err("sample_pts", "needs at least 2 points"));
    }

    let out_dir = PathBuf::from(kv.get("out").map(String::as_str).unwrap_or("./out"));

    Ok(RunConfig {
        command,
        case,
        mode,
        domain,
        elements_x,
        elements_y,
        degree,
        degrees,
        mesh_counts,
        darcy_sign,
        mass_quad_pts,
        source_quad_pts,
        out_dir,
        sample_pts,
    })
}

/// 17 significant digits, locale independent; round-trips f64 exactly.
fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}

fn report_csv(report: &ConvergenceReport) -> String {
    let mut s = String::from("case,mode,M,N,dofs,p_l2_error,q_l2_error,observed_rate\n");
    for row in &report.rows {
        let rate = row
            .observed_rate
            .map(fmt_g17)
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            report.case_name,
            report.mode.name(),
            row.mesh_m,
            row.degree,
            row.dofs,
            fmt_g17(row.pressure_error),
            fmt_g17(row.flux_error),
            rate
        );
    }
    s
}

fn single_row_csv(
    case: Case,
    label: &str,
    m: usize,
    n: usize,
    dofs: usize,
    p_err: Option<f64>,
    q_err: Option<f64>,
) -> String {
    let fmt_opt = |v: Option<f64>| v.map(fmt_g17).unwrap_or_default();
    format!(
        "case,mode,M,N,dofs,p_l2_error,q_l2_error,observed_rate\n{},{},{},{},{},{},{},\n",
        case.name(),
        label,
        m,
        n,
        dofs,
        fmt_opt(p_err),
        fmt_opt(q_err)
    )
}

fn write_field_csv(
    path: &Path,
    points: &[Vec<(f64, f64)>],
    values: &ndarray::Array2<f64>,
) -> Result<(), RunError> {
    let mut s = String::from("x,y,value\n");
    for (row, pts) in points.iter().enumerate() {
        for (col, &(x, y)) in pts.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{}",
                fmt_g17(x),
                fmt_g17(y),
                fmt_g17(values[[row, col]])
            );
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Execute a validated configuration, writing CSV outputs under `out_dir`.
pub fn run(cfg: &RunConfig) -> Result<(), RunError> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    match cfg.command {
        Command::Convergence => {
            let opts = AssemblyOptions {
                mass_quad_pts: cfg.mass_quad_pts,
                source_quad_pts: cfg.source_quad_pts,
            };
            let report = convergence_study(
                cfg.case,
                cfg.mode,
                &cfg.degrees,
                &cfg.mesh_counts,
                cfg.darcy_sign,
                &opts,
            )?;
            std::fs::write(cfg.out_dir.join("report.csv"), report_csv(&report))?;
        }
        Command::Solve | Command::Layered => {
            let opts = AssemblyOptions {
                mass_quad_pts: cfg.mass_quad_pts,
                source_quad_pts: cfg.source_quad_pts,
            };
            let spec = cfg.case.build(cfg.darcy_sign);
            let out = solve_problem(&spec, cfg.elements_x, cfg.elements_y, cfg.degree, &opts)?;
            let (p_err, q_err) = match spec.exact.as_ref() {
                Some(_) => {
                    let align = out.system.has_gauge;
                    (
                        Some(l2_error(
                            &out.mesh,
                            &out.dofmap,
                            &out.fields,
                            spec.exact.as_ref(),
                            ErrorField::Pressure { align_mean: align },
                        )?),
                        Some(l2_error(
                            &out.mesh,
                            &out.dofmap,
                            &out.fields,
                            spec.exact.as_ref(),
                            ErrorField::Flux,
                        )?),
                    )
                }
                None => (None, None),
            };
            let label = match cfg.command {
                Command::Layered => "layered",
                _ => "solve",
            };
            std::fs::write(
                cfg.out_dir.join("report.csv"),
                single_row_csv(
                    cfg.case,
                    label,
                    cfg.elements_x,
                    cfg.degree,
                    out.dofmap.total(),
                    p_err,
                    q_err,
                ),
            )?;

            // field dumps at GLL sample points per element
            let sample = gll_rule(cfg.sample_pts - 1)?;
            let pts = physical_points(&out.mesh, &sample.nodes);
            for (name, field) in [
                ("qx", Field::FluxX),
                ("qy", Field::FluxY),
                ("div", Field::Divergence),
            ] {
                let vals =
                    reconstruct(&out.mesh, &out.dofmap, &out.fields.flux, field, &sample.nodes)?;
                write_field_csv(&cfg.out_dir.join(format!("field_{name}.csv")), &pts, &vals)?;
            }
            let pvals = reconstruct(
                &out.mesh,
                &out.dofmap,
                &out.fields.pressure,
                Field::Pressure,
                &sample.nodes,
            )?;
            write_field_csv(&cfg.out_dir.join("field_p.csv"), &pts, &pvals)?;
            let (ux, uy) = velocity_from_flux(
                &spec.permeability,
                &out.mesh,
                &out.dofmap,
                &out.fields,
                &sample.nodes,
            )?;
            write_field_csv(&cfg.out_dir.join("field_ux.csv"), &pts, &ux)?;
            write_field_csv(&cfg.out_dir.join("field_uy.csv"), &pts, &uy)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, ConfigError> {
        let owned: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        parse_config(&owned)
    }

    #[test]
    fn minimal_convergence_config() {
        let cfg = parse(&["convergence", "--case=manufactured"]).unwrap();
        assert_eq!(cfg.command, Command::Convergence);
        assert_eq!(cfg.case, Case::Manufactured);
        assert_eq!(cfg.mode, StudyMode::H);
        assert_eq!(cfg.darcy_sign, DarcySign::Paper);
        assert_eq!(cfg.degrees, vec![1, 2, 3]);
        assert_eq!(cfg.mesh_counts, vec![2, 4, 8, 16]);
    }

    #[test]
    fn degree_zero_names_the_key() {
        let err = parse(&["solve", "--degree=0"]).unwrap_err();
        assert_eq!(err.key, "degree");
    }

    #[test]
    fn layered_element_rows_must_be_multiple_of_three() {
        let err = parse(&["layered", "--elements_y=4"]).unwrap_err();
        assert_eq!(err.key, "elements_y");
        assert!(parse(&["layered", "--elements_y=6"]).is_ok());
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse(&["solve", "--degre=3"]).unwrap_err();
        assert_eq!(err.key, "degre");
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "command=convergence\ncase=manufactured\ndegree=2\n").unwrap();
        let cfg = parse(&[
            "--config",
            path.to_str().unwrap(),
            "--degree=4",
        ])
        .unwrap();
        assert_eq!(cfg.command, Command::Convergence);
        assert_eq!(cfg.degree, 4);
    }

    #[test]
    fn g17_round_trip() {
        for v in [1.0 / 3.0, 2.2367688451670534e0, 1e-300, -7.25] {
            let s = fmt_g17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }
}
