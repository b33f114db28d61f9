//! Experiment catalog: configuration parsing and the drivers that turn a
//! configuration into tables, plots and summary values.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::actuators::{Arc, BoundaryActuatorSet, BoundaryModel, InternalActuatorSet, Rect};
use crate::analysis::{
    bisect_threshold, convergence_ratios, cost_series, decay_metrics, m_lambda, DECAY_CEILING,
};
use crate::config::{family_coefficients, Expr, Ini};
use crate::error::{Error, Result};
use crate::estimates::{actuator_bounds, t_star_upsilon, theta, TheoryParams};
use crate::fem::{spacetime_norm2, CoefficientField, FemOperators};
use crate::mesh::Mesh;
use crate::riccati::{OutputWeight, Plant, RiccatiPath};
use crate::sim_linear::{
    replay_open_loop, simulate_boundary, simulate_internal, BoundaryFeedback, ControlSchedule,
    InternalFeedback, LinearSetup, TimeGrid, Trajectory,
};
use crate::sim_nonlinear::{
    simulate_nonlinear, JacobianMode, NewtonOptions, NonlinearFeedback, NonlinearProblem,
    NonlinearRun, NonlinearTrajectory, Scheme,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    StabilizeLinearInternal,
    StabilizeLinearBoundary,
    ActuatorSweep,
    LambdaSweep,
    VarsigmaSweep,
    Replay,
    Switching,
    Nonlinear,
    Refinement,
    SchemeComparison,
    Estimates,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 11] = [
        ExperimentKind::StabilizeLinearInternal,
        ExperimentKind::StabilizeLinearBoundary,
        ExperimentKind::ActuatorSweep,
        ExperimentKind::LambdaSweep,
        ExperimentKind::VarsigmaSweep,
        ExperimentKind::Replay,
        ExperimentKind::Switching,
        ExperimentKind::Nonlinear,
        ExperimentKind::Refinement,
        ExperimentKind::SchemeComparison,
        ExperimentKind::Estimates,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::StabilizeLinearInternal => "stabilize-linear-internal",
            ExperimentKind::StabilizeLinearBoundary => "stabilize-linear-boundary",
            ExperimentKind::ActuatorSweep => "actuator-sweep",
            ExperimentKind::LambdaSweep => "lambda-sweep",
            ExperimentKind::VarsigmaSweep => "varsigma-sweep",
            ExperimentKind::Replay => "replay",
            ExperimentKind::Switching => "switching",
            ExperimentKind::Nonlinear => "nonlinear",
            ExperimentKind::Refinement => "refinement",
            ExperimentKind::SchemeComparison => "scheme-comparison",
            ExperimentKind::Estimates => "estimates",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment `{s}`")))
    }
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: impl Into<String>, columns: Vec<String>) -> Table {
        Table {
            name: name.into(),
            columns,
            rows: vec![],
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
    /// Scalar results as `key = value` pairs, in insertion order.
    pub summary: Vec<(String, String)>,
    /// Extra text outputs as `(file name, contents)`.
    pub files: Vec<(String, String)>,
}

impl Report {
    fn note(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.summary.push((key.into(), value.to_string()));
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.summary
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Rings(usize),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshSpec {
    pub source: MeshSource,
    pub refine: usize,
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh> {
        let mut mesh = match &self.source {
            MeshSource::Rings(r) => Mesh::disk(*r),
            MeshSource::Text(t) => Mesh::load(t)?,
        };
        for _ in 0..self.refine {
            mesh = mesh.refine();
        }
        Ok(mesh)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InternalSpec {
    pub rect: Rect,
    pub m: usize,
    pub n: usize,
    pub cells: Option<Vec<Rect>>,
    pub unrestricted: bool,
    pub chi: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub count: usize,
    pub theta0: f64,
    pub theta1: f64,
    pub arcs: Option<Vec<Arc>>,
    pub scaled_pi: bool,
    pub model: BoundaryModel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialShape {
    Expr(Expr),
    /// Indicator of `x1 < threshold`.
    Indicator(f64),
    Elliptic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearSpec {
    pub c: [f64; 3],
    pub yhat: Expr,
    pub schemes: Vec<Scheme>,
    pub control: ControlKind,
    pub epsilons: Vec<f64>,
    pub v0: InitialShape,
    pub rho: Vec<f64>,
    pub newton: NewtonOptions,
    pub bisect: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    None,
    Internal,
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub mesh: MeshSpec,
    pub grid: TimeGrid,
    pub nu: f64,
    pub lambda: f64,
    pub varsigma: f64,
    pub coeff: CoefficientField,
    pub internal: InternalSpec,
    pub boundary: BoundarySpec,
    pub z0: Expr,
    pub kappa0: Option<Vec<f64>>,
    pub schedule: ControlSchedule,
    pub schedule_variants: Vec<ControlSchedule>,
    pub homotopy_steps: usize,
    pub weight: OutputWeight,
    pub ceiling: f64,
    pub arrangements: Vec<(usize, usize)>,
    pub counts: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub varsigmas: Vec<f64>,
    pub perturbation: f64,
    pub nonlinear: NonlinearSpec,
    pub levels: usize,
    pub comparison_steps: Vec<usize>,
    pub theory: TheoryParams,
    /// Write `Pi(0)` as triplet text.
    pub export_pi: bool,
}

fn parse_enum<T>(ini: &Ini, section: &str, key: &str, default: T, table: &[(&str, T)]) -> Result<T>
where
    T: Copy,
{
    match ini.get_str(section, key) {
        None => Ok(default),
        Some(v) => table
            .iter()
            .find(|(name, _)| name.eq_ignore_ascii_case(v.trim()))
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let names: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
                Error::config(
                    section,
                    key,
                    format!("`{v}` is not one of {}", names.join(", ")),
                )
            }),
    }
}

fn parse_groups(ini: &Ini, section: &str, key: &str) -> Result<Option<Vec<Vec<f64>>>> {
    let Some(text) = ini.get_str(section, key) else {
        return Ok(None);
    };
    let mut out = vec![];
    for group in text.split(';').filter(|g| !g.trim().is_empty()) {
        let mut row = vec![];
        for item in group.split(',') {
            let e = crate::config::parse_expr(item.trim())
                .map_err(|e| Error::config(section, key, e.to_string()))?;
            row.push(e.eval(0.0, 0.0, 0.0));
        }
        out.push(row);
    }
    Ok(Some(out))
}

fn parse_schedule(section: &str, key: &str, text: &str) -> Result<ControlSchedule> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("always") {
        return Ok(ControlSchedule::always());
    }
    if t.eq_ignore_ascii_case("never") {
        return Ok(ControlSchedule::never());
    }
    let mut windows = vec![];
    for group in t.split(';').filter(|g| !g.trim().is_empty()) {
        let parts: Vec<&str> = group.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::config(
                section,
                key,
                format!("window `{group}` is not `start, end`"),
            ));
        }
        let num = |s: &str| -> Result<f64> {
            crate::config::parse_expr(s.trim())
                .map(|e| e.eval(0.0, 0.0, 0.0))
                .map_err(|e| Error::config(section, key, e.to_string()))
        };
        windows.push((num(parts[0])?, num(parts[1])?));
    }
    ControlSchedule::new(windows).map_err(|e| Error::config(section, key, e.to_string()))
}

fn rect_from(v: &[f64], section: &str, key: &str) -> Result<Rect> {
    if v.len() != 4 {
        return Err(Error::config(
            section,
            key,
            "a rectangle needs x0, x1, y0, y1",
        ));
    }
    Ok(Rect::new(v[0], v[1], v[2], v[3]))
}

fn usize_list(ini: &Ini, section: &str, key: &str) -> Result<Option<Vec<usize>>> {
    match ini.get_list(section, key)? {
        None => Ok(None),
        Some(v) => v
            .into_iter()
            .map(|x| {
                if x >= 0.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(Error::config(
                        section,
                        key,
                        format!("{x} is not a nonnegative integer"),
                    ))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Some),
    }
}

impl ExperimentConfig {
    /// Reads a configuration. Mesh files are resolved relative to `base_dir`.
    pub fn from_ini(
        kind: ExperimentKind,
        ini: &Ini,
        base_dir: Option<&Path>,
    ) -> Result<ExperimentConfig> {
        if kind != ExperimentKind::Estimates {
            ini.require_section("time")?;
        }
        let nonlinear_kind = matches!(
            kind,
            ExperimentKind::Nonlinear
                | ExperimentKind::Refinement
                | ExperimentKind::SchemeComparison
        );

        let source = match ini.get_str("mesh", "file") {
            Some(f) => {
                let path = base_dir.map_or_else(|| Path::new(f).to_path_buf(), |d| d.join(f));
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    Error::config("mesh", "file", format!("{}: {e}", path.display()))
                })?;
                MeshSource::Text(text)
            }
            None => MeshSource::Rings(ini.get_or("mesh", "rings", 8)?),
        };
        let mesh = MeshSpec {
            source,
            refine: ini.get_or("mesh", "refine", 0)?,
        };

        let (t_default, steps_default) = match kind {
            ExperimentKind::Refinement => (5.0, 500),
            ExperimentKind::SchemeComparison => (6.0, 600),
            _ => (8.0, 400),
        };
        let t_final = ini.number_or("time", "T", t_default)?;
        let steps: usize = ini.get_or("time", "steps", steps_default)?;
        let grid = TimeGrid::new(t_final, steps)
            .map_err(|e| Error::config("time", "steps", e.to_string()))?;

        let (nu_default, lambda_default) = if nonlinear_kind {
            (0.2, 1.0)
        } else {
            (0.25, 2.0)
        };
        let nu = ini.number_or("physics", "nu", nu_default)?;
        let lambda = ini.number_or("physics", "lambda", lambda_default)?;
        let varsigma = ini.number_or("physics", "varsigma", 10.0)?;
        if !(nu > 0.0) {
            return Err(Error::config("physics", "nu", "must be positive"));
        }

        let coeff = if let Some(fam) = ini.get_list("coefficients", "family")? {
            if fam.len() != 6 || fam.iter().any(|v| v.fract() != 0.0) {
                return Err(Error::config(
                    "coefficients",
                    "family",
                    "needs six integers i,j,k,l,m,n",
                ));
            }
            let f: Vec<i32> = fam.iter().map(|v| *v as i32).collect();
            let (a, b1, b2) = family_coefficients(f[0], f[1], f[2], f[3], f[4], f[5]);
            CoefficientField::new(a, b1, b2)
        } else {
            let get = |key: &str| -> Result<Expr> {
                Ok(ini
                    .get_expr("coefficients", key)?
                    .unwrap_or_else(Expr::zero))
            };
            if ini.has_section("coefficients") {
                CoefficientField::new(get("a")?, get("b1")?, get("b2")?)
            } else {
                let (a, b1, b2) = family_coefficients(2, -1, 1, -3, 5, 1);
                CoefficientField::new(a, b1, b2)
            }
        };

        let rect = match ini.get_list("actuators", "rect")? {
            Some(v) => rect_from(&v, "actuators", "rect")?,
            None => Rect::new(0.0, 0.5, 0.0, 1.0 / 3.0),
        };
        let cells = match parse_groups(ini, "actuators", "cells")? {
            None => None,
            Some(groups) => Some(
                groups
                    .iter()
                    .map(|g| rect_from(g, "actuators", "cells"))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        let internal = InternalSpec {
            rect,
            m: ini.get_or("actuators", "m", 3)?,
            n: ini.get_or("actuators", "n", 2)?,
            cells,
            unrestricted: ini.get_or(
                "actuators",
                "unrestricted",
                kind == ExperimentKind::LambdaSweep,
            )?,
            chi: ini.get_expr("actuators", "chi")?,
        };
        let arcs = match parse_groups(ini, "actuators", "arcs")? {
            None => None,
            Some(groups) => Some(
                groups
                    .iter()
                    .map(|g| {
                        if g.len() != 3 || g[2] < 1.0 || g[2].fract() != 0.0 {
                            return Err(Error::config(
                                "actuators",
                                "arcs",
                                "each arc is `theta0, theta1, frequency`",
                            ));
                        }
                        Ok(Arc {
                            theta0: g[0],
                            theta1: g[1],
                            freq: g[2] as u32,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        let boundary_default = if matches!(kind, ExperimentKind::Replay | ExperimentKind::Switching)
        {
            4
        } else {
            6
        };
        let boundary = BoundarySpec {
            count: ini.get_or("actuators", "count", boundary_default)?,
            theta0: ini.number_or("actuators", "theta0", PI)?,
            theta1: ini.number_or("actuators", "theta1", 1.25 * PI)?,
            arcs,
            scaled_pi: ini.get_or("actuators", "scaled_pi", false)?,
            model: parse_enum(
                ini,
                "actuators",
                "model",
                BoundaryModel::Consistent,
                &[
                    ("consistent", BoundaryModel::Consistent),
                    ("paper", BoundaryModel::Paper),
                ],
            )?,
        };

        let z0_default = if matches!(kind, ExperimentKind::Replay | ExperimentKind::Switching) {
            "3*(1 - x1^2 - x2^2)"
        } else {
            "sin(2*x1)*cos(x2)"
        };
        let z0 = match ini.get_expr("ic", "z0")? {
            Some(e) => e,
            None => crate::config::parse_expr(z0_default)?,
        };
        let kappa0 = ini.get_list("ic", "kappa0")?;

        let schedule = match ini.get_str("schedule", "on") {
            Some(s) => parse_schedule("schedule", "on", s)?,
            None => ControlSchedule::always(),
        };
        let schedule_variants = match ini.get_str("schedule", "variants") {
            Some(text) => text
                .split('|')
                .map(|s| parse_schedule("schedule", "variants", s))
                .collect::<Result<Vec<_>>>()?,
            None if kind == ExperimentKind::Switching && grid.t_final > 4.0 => {
                vec![
                    ControlSchedule::always(),
                    ControlSchedule::new(vec![(0.0, 3.0), (4.0, grid.t_final)])?,
                ]
            }
            None => vec![ControlSchedule::always()],
        };

        let homotopy_steps = ini.get_or("riccati", "homotopy_steps", 8)?;
        let weight = parse_enum(
            ini,
            "riccati",
            "weight",
            OutputWeight::Stiffness,
            &[
                ("stiffness", OutputWeight::Stiffness),
                ("mass", OutputWeight::Mass),
            ],
        )?;

        let arrangements = match ini.get_str("sweep", "arrangements") {
            None => vec![(1, 1), (2, 1), (2, 2), (3, 2)],
            Some(text) => text
                .split(',')
                .map(|item| {
                    let (a, b) = item.trim().split_once('x').ok_or_else(|| {
                        Error::config("sweep", "arrangements", format!("`{item}` is not `mxn`"))
                    })?;
                    let p = |s: &str| {
                        s.trim()
                            .parse::<usize>()
                            .map_err(|e| Error::config("sweep", "arrangements", e.to_string()))
                    };
                    Ok((p(a)?, p(b)?))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let counts = usize_list(ini, "sweep", "counts")?.unwrap_or_else(|| vec![1, 2, 4, 6]);
        let lambdas = ini
            .get_list("sweep", "lambdas")?
            .unwrap_or_else(|| (0..=10).map(f64::from).collect());
        let varsigmas = ini
            .get_list("sweep", "varsigmas")?
            .unwrap_or_else(|| vec![1.0, 10.0, 100.0]);
        let perturbation = ini.number_or("replay", "perturbation", 1e-3)?;

        let yhat_default = if kind == ExperimentKind::Nonlinear {
            "(2*x1^3 + x2^2)*sin(t)"
        } else {
            "(t^2 - 2*t)*x1^3*sin(x2)^2"
        };
        let yhat = match ini.get_expr("nonlinear", "yhat")? {
            Some(e) => e,
            None => crate::config::parse_expr(yhat_default)?,
        };
        let scheme_table = [
            ("extrapolation", Scheme::Extrapolation),
            ("heun", Scheme::Heun),
            ("newton", Scheme::Newton),
        ];
        let schemes = match ini.get_str("nonlinear", "scheme") {
            None if kind == ExperimentKind::SchemeComparison => {
                vec![Scheme::Extrapolation, Scheme::Heun, Scheme::Newton]
            }
            None => vec![Scheme::Extrapolation],
            Some(text) => text
                .split(',')
                .map(|s| {
                    scheme_table
                        .iter()
                        .find(|(n, _)| n.eq_ignore_ascii_case(s.trim()))
                        .map(|(_, v)| *v)
                        .ok_or_else(|| {
                            Error::config(
                                "nonlinear",
                                "scheme",
                                format!("unknown scheme `{}`", s.trim()),
                            )
                        })
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let control = parse_enum(
            ini,
            "nonlinear",
            "control",
            if kind == ExperimentKind::Nonlinear {
                ControlKind::Internal
            } else {
                ControlKind::None
            },
            &[
                ("none", ControlKind::None),
                ("internal", ControlKind::Internal),
                ("boundary", ControlKind::Boundary),
            ],
        )?;
        let v0 = match ini.get_str("nonlinear", "v0").map(str::trim) {
            None | Some("indicator") => InitialShape::Indicator(-1.0 / 3.0),
            Some("elliptic") => InitialShape::Elliptic,
            Some(_) => InitialShape::Expr(ini.get_expr("nonlinear", "v0")?.expect("present")),
        };
        let c = [
            ini.number_or("nonlinear", "c1", -2.0)?,
            ini.number_or("nonlinear", "c2", -1.0)?,
            ini.number_or("nonlinear", "c3", -3.0)?,
        ];
        let newton = NewtonOptions {
            tol: ini.number_or("nonlinear", "newton_tol", 1e-12)?,
            max_iter: ini.get_or("nonlinear", "newton_max_iter", 50)?,
            jacobian: parse_enum(
                ini,
                "nonlinear",
                "jacobian",
                JacobianMode::Exact,
                &[
                    ("exact", JacobianMode::Exact),
                    ("verbatim", JacobianMode::Verbatim),
                ],
            )?,
        };
        let epsilons = ini.get_list("nonlinear", "epsilon")?.unwrap_or_else(|| {
            if kind == ExperimentKind::Nonlinear {
                vec![0.1]
            } else {
                vec![0.0]
            }
        });
        let rho = ini
            .get_list("nonlinear", "rho")?
            .unwrap_or_else(|| vec![1.0, 1.0, 0.0, 0.5, 0.0, 0.0]);
        let nonlinear = NonlinearSpec {
            c,
            yhat,
            schemes,
            control,
            epsilons,
            v0,
            rho,
            newton,
            bisect: ini.get_or("nonlinear", "bisect", false)?,
        };

        let levels = ini.get_or("refinement", "levels", 4)?;
        let comparison_steps =
            usize_list(ini, "comparison", "steps")?.unwrap_or_else(|| vec![60, 240, 600]);

        let d = TheoryParams::default();
        let theory = TheoryParams {
            d: ini.get_or("estimates", "d", d.d)?,
            n_a: ini.number_or("estimates", "n_a", d.n_a)?,
            n_b: ini.number_or("estimates", "n_b", d.n_b)?,
            n_w: ini.number_or("estimates", "n_w", d.n_w)?,
            d_rc: ini.number_or("estimates", "d_rc", d.d_rc)?,
            d_hat: ini.number_or("estimates", "d_hat", d.d_hat)?,
            iota: ini.number_or("estimates", "iota", d.iota)?,
            chi_norm: ini.number_or("estimates", "chi_norm", d.chi_norm)?,
            domain_volume: ini.number_or("estimates", "domain_volume", d.domain_volume)?,
            actuated_volume: ini.number_or("estimates", "actuated_volume", d.actuated_volume)?,
            l_bar: ini.number_or("estimates", "l_bar", d.l_bar)?,
        };
        theory
            .validate()
            .map_err(|e| Error::config("estimates", "", e.to_string()))?;

        Ok(ExperimentConfig {
            kind,
            mesh,
            grid,
            nu,
            lambda,
            varsigma,
            coeff,
            internal,
            boundary,
            z0,
            kappa0,
            schedule,
            schedule_variants,
            homotopy_steps,
            weight,
            ceiling: ini.number_or("analysis", "ceiling", DECAY_CEILING)?,
            arrangements,
            counts,
            lambdas,
            varsigmas,
            perturbation,
            nonlinear,
            levels,
            comparison_steps,
            theory,
            export_pi: ini.get_or("output", "pi_triplets", false)?,
        })
    }
}

// ---------------------------------------------------------------------------
// Shared construction helpers

struct Context {
    mesh: Mesh,
    ops: FemOperators,
}

impl Context {
    fn new(spec: &MeshSpec) -> Result<Context> {
        let mesh = spec.build()?;
        let ops = FemOperators::assemble(&mesh);
        Ok(Context { mesh, ops })
    }

    fn internal_set(
        &self,
        spec: &InternalSpec,
        arrangement: Option<(usize, usize)>,
    ) -> Result<InternalActuatorSet> {
        let chi = spec.chi.as_ref().map(|e| self.ops.eval(e, 0.0));
        if spec.unrestricted {
            let chi = chi.unwrap_or_else(|| DVector::from_element(self.ops.n_points(), 1.0));
            return InternalActuatorSet::unrestricted(&self.ops, spec.rect, Some(&chi));
        }
        match (&spec.cells, arrangement) {
            (Some(cells), None) => {
                InternalActuatorSet::from_cells(&self.ops, cells.clone(), chi.as_ref())
            }
            (_, Some((m, n))) => {
                InternalActuatorSet::grid(&self.ops, spec.rect, m, n, chi.as_ref())
            }
            (None, None) => {
                InternalActuatorSet::grid(&self.ops, spec.rect, spec.m, spec.n, chi.as_ref())
            }
        }
    }

    fn boundary_set(
        &self,
        spec: &BoundarySpec,
        count: usize,
        varsigma: f64,
        nu: f64,
    ) -> Result<BoundaryActuatorSet> {
        let theta = self.mesh.boundary_theta();
        let set = match &spec.arcs {
            Some(arcs) => BoundaryActuatorSet::from_arcs(
                &self.ops,
                &theta,
                arcs.clone(),
                varsigma,
                nu,
                spec.scaled_pi,
            )?,
            None => BoundaryActuatorSet::standard(
                &self.ops,
                &theta,
                spec.theta0,
                spec.theta1,
                count,
                varsigma,
                nu,
                spec.scaled_pi,
            )?,
        };
        Ok(set.with_model(spec.model))
    }

    /// Expression evaluated at the nodes with zero boundary values.
    fn interior_field(&self, e: &Expr) -> DVector<f64> {
        let mut v = self.ops.eval(e, 0.0);
        let ni = self.ops.n_interior();
        v.rows_mut(ni, self.ops.n_boundary()).fill(0.0);
        v
    }

    /// `z0` with zero trace plus `sum kappa0_i Psi~_i`.
    fn boundary_initial(
        &self,
        e: &Expr,
        set: &BoundaryActuatorSet,
        kappa0: &DVector<f64>,
    ) -> DVector<f64> {
        self.interior_field(e) + &set.extensions * kappa0
    }
}

fn kappa0_for(cfg: &ExperimentConfig, m: usize) -> Result<DVector<f64>> {
    match &cfg.kappa0 {
        None => Ok(
            if matches!(cfg.kind, ExperimentKind::Replay | ExperimentKind::Switching) {
                DVector::from_element(m, 0.5)
            } else {
                DVector::zeros(m)
            },
        ),
        Some(v) if v.len() == m => Ok(DVector::from_column_slice(v)),
        Some(v) => Err(Error::config(
            "ic",
            "kappa0",
            format!("{} values for {m} boundary actuators", v.len()),
        )),
    }
}

fn linear_table(name: &str, traj: &Trajectory, cost: Option<&[f64]>) -> Table {
    let m = traj.controls.nrows();
    let mut columns: Vec<String> = ["t", "normH2", "weighted_normH2", "cost"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    columns.extend((1..=m).map(|i| format!("u_{i}")));
    if let Some(k) = &traj.kappa {
        columns.extend((1..=k.nrows()).map(|i| format!("kappa_{i}")));
    }
    let mut table = Table::new(name, columns);
    let norms = traj.norm_h2();
    let times = traj.times();
    for j in 0..times.len() {
        let mut row = vec![
            times[j],
            norms[j],
            traj.norms[j],
            cost.map_or(f64::NAN, |c| c[j]),
        ];
        row.extend(traj.controls.column(j).iter());
        if let Some(k) = &traj.kappa {
            row.extend(k.column(j).iter());
        }
        table.rows.push(row);
    }
    table
}

fn norm_series(label: &str, traj: &Trajectory) -> Series {
    Series {
        label: label.to_string(),
        x: traj.times(),
        y: traj.norm_h2(),
    }
}

fn log_plot(name: &str, title: &str, y_label: &str, series: Vec<Series>) -> Plot {
    // Zeros and infinities cannot be drawn on a log axis; drop them per point.
    let series = series
        .into_iter()
        .map(|s| {
            let (x, y) =
                s.x.iter()
                    .zip(&s.y)
                    .filter(|(_, y)| **y > 0.0 && y.is_finite())
                    .map(|(x, y)| (*x, *y))
                    .unzip();
            Series {
                label: s.label,
                x,
                y,
            }
        })
        .filter(|s| !s.x.is_empty())
        .collect();
    Plot {
        name: name.to_string(),
        title: title.to_string(),
        x_label: "t".to_string(),
        y_label: y_label.to_string(),
        log_y: true,
        series,
    }
}

fn control_plot(name: &str, title: &str, traj: &Trajectory, prefix: &str) -> Plot {
    let times = traj.times();
    let series = (0..traj.controls.nrows())
        .map(|i| Series {
            label: format!("{prefix}{}", i + 1),
            x: times.clone(),
            y: traj.controls.row(i).iter().copied().collect(),
        })
        .collect();
    Plot {
        name: name.to_string(),
        title: title.to_string(),
        x_label: "t".to_string(),
        y_label: "control".to_string(),
        log_y: false,
        series,
    }
}

fn metrics_table(rows: &[(&str, &Trajectory)], lambda: f64, ceiling: f64) -> Result<Table> {
    let mut table = Table::new(
        "metrics",
        [
            "run",
            "weighted_sup",
            "final_ratio",
            "stabilized",
            "blow_up_step",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    );
    for (i, (_, traj)) in rows.iter().enumerate() {
        let m = decay_metrics(traj, lambda, ceiling)?;
        table.rows.push(vec![
            i as f64,
            m.weighted_sup,
            m.final_ratio,
            if m.stabilized { 1.0 } else { 0.0 },
            traj.blow_up.map_or(-1.0, |j| j as f64),
        ]);
    }
    Ok(table)
}

/// Nodal actuator shapes on all points, one column per actuator.
fn shapes_table(ops: &FemOperators, shapes: &DMatrix<f64>) -> Table {
    let mut columns = vec!["x1".to_string(), "x2".to_string()];
    columns.extend((1..=shapes.ncols()).map(|i| format!("actuator_{i}")));
    let mut table = Table::new("actuators", columns);
    for (i, p) in ops.points().iter().enumerate() {
        let mut row = vec![p[0], p[1]];
        if i < shapes.nrows() {
            row.extend(shapes.row(i).iter());
        } else {
            row.extend(std::iter::repeat(0.0).take(shapes.ncols()));
        }
        table.rows.push(row);
    }
    table
}

fn riccati_stats_table(path: &RiccatiPath) -> Table {
    let mut table = Table::new(
        "riccati_steps",
        ["step", "newton_iterations", "residual"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    for (j, st) in path.stats.iter().enumerate() {
        table
            .rows
            .push(vec![j as f64, st.iterations as f64, st.residual]);
    }
    table
}

fn note_metrics(
    report: &mut Report,
    prefix: &str,
    traj: &Trajectory,
    lambda: f64,
    ceiling: f64,
) -> Result<bool> {
    let m = decay_metrics(traj, lambda, ceiling)?;
    report.note(format!("{prefix}.weighted_sup"), fmt_num(m.weighted_sup));
    report.note(format!("{prefix}.final_ratio"), fmt_num(m.final_ratio));
    report.note(format!("{prefix}.stabilized"), m.stabilized);
    if let Some(j) = traj.blow_up {
        report.note(format!("{prefix}.blow_up_step"), j);
    }
    Ok(m.stabilized)
}

/// `%.17g`-style formatting: 17 significant digits, trailing zeros removed,
/// exponent form outside `1e-4 <= |x| < 1e17`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

// ---------------------------------------------------------------------------
// Drivers

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    match cfg.kind {
        ExperimentKind::StabilizeLinearInternal => stabilize_internal(cfg),
        ExperimentKind::StabilizeLinearBoundary => stabilize_boundary(cfg),
        ExperimentKind::ActuatorSweep => actuator_sweep(cfg),
        ExperimentKind::LambdaSweep => lambda_sweep(cfg),
        ExperimentKind::VarsigmaSweep => varsigma_sweep(cfg),
        ExperimentKind::Replay => replay(cfg),
        ExperimentKind::Switching => switching(cfg),
        ExperimentKind::Nonlinear => nonlinear(cfg),
        ExperimentKind::Refinement => refinement(cfg),
        ExperimentKind::SchemeComparison => scheme_comparison(cfg),
        ExperimentKind::Estimates => estimates(cfg),
    }
}

fn setup<'a>(cfg: &'a ExperimentConfig, ctx: &'a Context, lambda: f64) -> LinearSetup<'a> {
    LinearSetup {
        ops: &ctx.ops,
        coeff: &cfg.coeff,
        nu: cfg.nu,
        lambda,
        grid: cfg.grid,
    }
}

fn internal_design(
    cfg: &ExperimentConfig,
    ctx: &Context,
    set: &InternalActuatorSet,
    lambda: f64,
) -> Result<RiccatiPath> {
    let plant = Plant::new(&ctx.ops, cfg.coeff.clone(), cfg.nu, lambda, cfg.weight)?;
    Ok(plant
        .design_internal(
            &set.r_in,
            cfg.grid.t_final,
            cfg.grid.n_t,
            cfg.homotopy_steps,
        )?
        .path)
}

fn boundary_design(
    cfg: &ExperimentConfig,
    ctx: &Context,
    set: &BoundaryActuatorSet,
    lambda: f64,
) -> Result<RiccatiPath> {
    let plant = Plant::new(&ctx.ops, cfg.coeff.clone(), cfg.nu, lambda, cfg.weight)?;
    Ok(plant
        .design_boundary(set, cfg.grid.t_final, cfg.grid.n_t, cfg.homotopy_steps)?
        .path)
}

fn stabilize_internal(cfg: &ExperimentConfig) -> Result<Report> {
    let ctx = Context::new(&cfg.mesh)?;
    let set = ctx.internal_set(&cfg.internal, None)?;
    let z0 = ctx.interior_field(&cfg.z0);
    let path = internal_design(cfg, &ctx, &set, cfg.lambda)?;
    let fb = InternalFeedback {
        set: &set,
        path: &path,
        schedule: cfg.schedule.clone(),
    };
    let closed = simulate_internal(&setup(cfg, &ctx, cfg.lambda), Some(&fb), &z0)?;
    let free = simulate_internal(&setup(cfg, &ctx, 0.0), None, &z0)?;
    let cost = cost_series(&path, &closed, None)?;

    let mut report = Report::default();
    report.note("nodes", ctx.ops.n_points());
    report.note("actuators", set.count());
    note_metrics(&mut report, "closed", &closed, cfg.lambda, cfg.ceiling)?;
    note_metrics(&mut report, "free", &free, cfg.lambda, cfg.ceiling)?;
    let free_norms = free.norm_h2();
    report.note(
        "free.final_over_initial",
        fmt_num(free_norms[cfg.grid.n_t] / free_norms[0]),
    );
    report.tables.push(metrics_table(
        &[("closed", &closed), ("free", &free)],
        cfg.lambda,
        cfg.ceiling,
    )?);
    report
        .tables
        .push(linear_table("closed_loop", &closed, Some(&cost)));
    report.tables.push(linear_table("free", &free, None));
    report.tables.push(shapes_table(&ctx.ops, &set.s_m));
    report.tables.push(riccati_stats_table(&path));
    if cfg.export_pi {
        report
            .files
            .push(("pi0.txt".into(), matrix_triplets(path.at(0))));
    }
    report.plots.push(log_plot(
        "norms",
        "Internal feedback",
        "|z|_H^2",
        vec![
            norm_series("feedback", &closed),
            norm_series("no control", &free),
        ],
    ));
    report.plots.push(control_plot(
        "controls",
        "Actuator magnitudes",
        &closed,
        "u_",
    ));
    Ok(report)
}

fn stabilize_boundary(cfg: &ExperimentConfig) -> Result<Report> {
    let ctx = Context::new(&cfg.mesh)?;
    let set = ctx.boundary_set(&cfg.boundary, cfg.boundary.count, cfg.varsigma, cfg.nu)?;
    let kappa0 = kappa0_for(cfg, set.count())?;
    let z0 = ctx.boundary_initial(&cfg.z0, &set, &kappa0);
    let path = boundary_design(cfg, &ctx, &set, cfg.lambda)?;
    let fb = BoundaryFeedback {
        path: &path,
        schedule: cfg.schedule.clone(),
    };
    let closed = simulate_boundary(&setup(cfg, &ctx, cfg.lambda), &set, Some(&fb), &z0, &kappa0)?;
    let free = simulate_boundary(&setup(cfg, &ctx, 0.0), &set, None, &z0, &kappa0)?;
    let cost = cost_series(&path, &closed, Some(&set))?;

    let mut report = Report::default();
    report.note("nodes", ctx.ops.n_points());
    report.note("actuators", set.count());
    note_metrics(&mut report, "closed", &closed, cfg.lambda, cfg.ceiling)?;
    note_metrics(&mut report, "free", &free, cfg.lambda, cfg.ceiling)?;
    let free_norms = free.norm_h2();
    report.note(
        "free.final_over_initial",
        fmt_num(free_norms[cfg.grid.n_t] / free_norms[0]),
    );
    report.tables.push(metrics_table(
        &[("closed", &closed), ("free", &free)],
        cfg.lambda,
        cfg.ceiling,
    )?);
    report
        .tables
        .push(linear_table("closed_loop", &closed, Some(&cost)));
    report.tables.push(linear_table("free", &free, None));
    report.tables.push(shapes_table(&ctx.ops, &set.extensions));
    report.tables.push(riccati_stats_table(&path));
    if cfg.export_pi {
        report
            .files
            .push(("pi0.txt".into(), matrix_triplets(path.at(0))));
    }
    report.plots.push(log_plot(
        "norms",
        "Boundary feedback",
        "|z|_H^2",
        vec![
            norm_series("feedback", &closed),
            norm_series("no control", &free),
        ],
    ));
    report.plots.push(control_plot(
        "controls",
        "Boundary control inputs",
        &closed,
        "u_",
    ));
    Ok(report)
}

fn actuator_sweep(cfg: &ExperimentConfig) -> Result<Report> {
    let ctx = Context::new(&cfg.mesh)?;
    let mut report = Report::default();
    let mut summary = Table::new(
        "sweep",
        [
            "m",
            "n",
            "actuators",
            "weighted_sup",
            "final_weighted_normH2",
            "final_cost",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    );
    let mut norms = vec![];
    let mut costs = vec![];
    let z0 = ctx.interior_field(&cfg.z0);
    for &(m, n) in &cfg.arrangements {
        let set = ctx.internal_set(&cfg.internal, Some((m, n)))?;
        let path = internal_design(cfg, &ctx, &set, cfg.lambda)?;
        let fb = InternalFeedback {
            set: &set,
            path: &path,
            schedule: cfg.schedule.clone(),
        };
        let traj = simulate_internal(&setup(cfg, &ctx, cfg.lambda), Some(&fb), &z0)?;
        let cost = cost_series(&path, &traj, None)?;
        let label = format!("{m}x{n}");
        let metrics = decay_metrics(&traj, cfg.lambda, cfg.ceiling)?;
        summary.rows.push(vec![
            m as f64,
            n as f64,
            set.count() as f64,
            metrics.weighted_sup,
            traj.norms[cfg.grid.n_t] / traj.norms[0],
            cost[cfg.grid.n_t],
        ]);
        norms.push(norm_series(&label, &traj));
        costs.push(Series {
            label: label.clone(),
            x: traj.times(),
            y: cost.clone(),
        });
        report
            .tables
            .push(linear_table(&format!("run_{label}"), &traj, Some(&cost)));
    }
    report.tables.insert(0, summary);
    report
        .plots
        .push(log_plot("norms", "Number of actuators", "|z|_H^2", norms));
    report
        .plots
        .push(log_plot("cost", "Cost (Pi z, z)", "cost", costs));
    Ok(report)
}

fn lambda_sweep(cfg: &ExperimentConfig) -> Result<Report> {
    let ctx = Context::new(&cfg.mesh)?;
    let set = ctx.internal_set(&cfg.internal, None)?;
    let z0 = ctx.interior_field(&cfg.z0);
    let mut table = Table::new(
        "m_lambda",
        vec!["lambda".into(), "m_lambda".into(), "weighted_sup".into()],
    );
    let mut norms = vec![];
    for &lambda in &cfg.lambdas {
        let path = internal_design(cfg, &ctx, &set, lambda)?;
        let fb = InternalFeedback {
            set: &set,
            path: &path,
            schedule: cfg.schedule.clone(),
        };
        let traj = simulate_internal(&setup(cfg, &ctx, lambda), Some(&fb), &z0)?;
        let m = if traj.is_finite() {
            m_lambda(&traj.norm_h2(), lambda, cfg.grid.k())?
        } else {
            f64::INFINITY
        };
        table.rows.push(vec![
            lambda,
            m,
            decay_metrics(&traj, lambda, cfg.ceiling)?.weighted_sup,
        ]);
        norms.push(norm_series(&format!("lambda={lambda}"), &traj));
    }
    let mut report = Report::default();
    let mplot = Plot {
        name: "m_lambda".into(),
        title: "Transient-bound probe".into(),
        x_label: "lambda".into(),
        y_label: "m_lambda".into(),
        log_y: false,
        series: vec![Series {
            label: "m_lambda".into(),
            x: table.column("lambda").expect("column"),
            y: table.column("m_lambda").expect("column"),
        }],
    };
    report.tables.push(table);
    report
        .plots
        .push(log_plot("norms", "Rate sweep", "|z|_H^2", norms));
    report.plots.push(mplot);
    Ok(report)
}

fn varsigma_sweep(cfg: &ExperimentConfig) -> Result<Report> {
    let ctx = Context::new(&cfg.mesh)?;
    let mut table = Table::new(
        "varsigma",
        vec![
            "varsigma".into(),
            "weighted_sup".into(),
            "final_weighted_normH2".into(),
        ],
    );
    let mut norms = vec![];
    let mut report = Report::default();
    for &sigma in &cfg.varsigmas {
        let set = ctx.boundary_set(&cfg.boundary, cfg.boundary.count, sigma, cfg.nu)?;
        let kappa0 = kappa0_for(cfg, set.count())?;
        let z0 = ctx.boundary_initial(&cfg.z0, &set, &kappa0);
        let path = boundary_design(cfg, &ctx, &set, cfg.lambda)?;
        let fb = BoundaryFeedback {
            path: &path,
            schedule: cfg.schedule.clone(),
        };
        let traj = simulate_boundary(&setup(cfg, &ctx, cfg.lambda), &set, Some(&fb), &z0, &kappa0)?;
        let metrics = decay_metrics(&traj, cfg.lambda, cfg.ceiling)?;
        table.rows.push(vec![
            sigma,
            metrics.weighted_sup,
            traj.norms[cfg.grid.n_t] / traj.norms[0],
        ]);
        let label = format!("varsigma={sigma}");
        norms.push(norm_series(&label, &traj));
        report
            .tables
            .push(linear_table(&format!("run_{sigma}"), &traj, None));
    }
    report.tables.insert(0, table);
    report
        .plots
        .push(log_plot("norms", "Extension parameter", "|z|_H^2", norms));
    Ok(report)
}

fn replay(cfg: &ExperimentConfig) -> Result<Report> {
    let ctx = Context::new(&cfg.mesh)?;
    let set = ctx.boundary_set(&cfg.boundary, cfg.boundary.count, cfg.varsigma, cfg.nu)?;
    let kappa0 = kappa0_for(cfg, set.count())?;
    let z0 = ctx.boundary_initial(&cfg.z0, &set, &kappa0);
    let path = boundary_design(cfg, &ctx, &set, cfg.lambda)?;
    let s = setup(cfg, &ctx, cfg.lambda);
    let fb = BoundaryFeedback {
        path: &path,
        schedule: cfg.schedule.clone(),
    };
    let closed = simulate_boundary(&s, &set, Some(&fb), &z0, &kappa0)?;
    let history = closed
        .kappa
        .clone()
        .ok_or_else(|| Error::dim("boundary run without kappa history"))?;
    let exact = replay_open_loop(&s, &set, &history, &z0)?;
    let perturbed_z0 = perturb_interior(&ctx.ops, &z0, cfg.perturbation);
    let open = replay_open_loop(&s, &set, &history, &perturbed_z0)?;
    let closed_perturbed = simulate_boundary(&s, &set, Some(&fb), &perturbed_z0, &kappa0)?;

    let mut report = Report::default();
    report.note("replay.bit_identical", exact.z == closed.z);
    note_metrics(&mut report, "closed", &closed, cfg.lambda, cfg.ceiling)?;
    note_metrics(
        &mut report,
        "closed_perturbed",
        &closed_perturbed,
        cfg.lambda,
        cfg.ceiling,
    )?;
    note_metrics(
        &mut report,
        "open_perturbed",
        &open,
        cfg.lambda,
        cfg.ceiling,
    )?;
    report.tables.push(metrics_table(
        &[
            ("closed", &closed),
            ("closed_perturbed", &closed_perturbed),
            ("open_perturbed", &open),
        ],
        cfg.lambda,
        cfg.ceiling,
    )?);
    report
        .tables
        .push(linear_table("closed_loop", &closed, None));
    report
        .tables
        .push(linear_table("open_loop_perturbed", &open, None));
    report.tables.push(linear_table(
        "closed_loop_perturbed",
        &closed_perturbed,
        None,
    ));
    report.plots.push(log_plot(
        "norms",
        "Feedback versus open-loop replay",
        "|z|_H^2",
        vec![
            norm_series("closed loop", &closed),
            norm_series("closed loop, perturbed z0", &closed_perturbed),
            norm_series("open loop, perturbed z0", &open),
        ],
    ));
    Ok(report)
}

/// Scales the interior values of `z0` by `1 + rel`; the trace is unchanged so
/// compatibility is preserved.
pub fn perturb_interior(ops: &FemOperators, z0: &DVector<f64>, rel: f64) -> DVector<f64> {
    let mut z = z0.clone();
    z.rows_mut(0, ops.n_interior()).scale_mut(1.0 + rel);
    z
}

fn switching(cfg: &ExperimentConfig) -> Result<Report> {
    let ctx = Context::new(&cfg.mesh)?;
    let set = ctx.boundary_set(&cfg.boundary, cfg.boundary.count, cfg.varsigma, cfg.nu)?;
    let kappa0 = kappa0_for(cfg, set.count())?;
    let z0 = ctx.boundary_initial(&cfg.z0, &set, &kappa0);
    let path = boundary_design(cfg, &ctx, &set, cfg.lambda)?;
    let s = setup(cfg, &ctx, cfg.lambda);
    let mut report = Report::default();
    let mut norms = vec![];
    for (i, schedule) in cfg.schedule_variants.iter().enumerate() {
        let fb = BoundaryFeedback {
            path: &path,
            schedule: schedule.clone(),
        };
        let traj = simulate_boundary(&s, &set, Some(&fb), &z0, &kappa0)?;
        let label = schedule_label(schedule, cfg.grid.t_final);
        report.note(format!("schedule_{i}"), &label);
        note_metrics(
            &mut report,
            &format!("schedule_{i}"),
            &traj,
            cfg.lambda,
            cfg.ceiling,
        )?;
        norms.push(norm_series(&label, &traj));
        report
            .tables
            .push(linear_table(&format!("schedule_{i}"), &traj, None));
    }
    report.plots.push(log_plot(
        "norms",
        "Switching the feedback",
        "|z|_H^2",
        norms,
    ));
    Ok(report)
}

fn schedule_label(s: &ControlSchedule, t_final: f64) -> String {
    match s.intervals() {
        [] => return "never".into(),
        [(a, b)] if *a == f64::NEG_INFINITY && *b == f64::INFINITY => return "always".into(),
        _ => {}
    }
    s.intervals()
        .iter()
        .map(|(a, b)| format!("[{}, {}]", fmt_num(*a), fmt_num(b.min(t_final))))
        .collect::<Vec<_>>()
        .join(" u ")
}

// ---------------------------------------------------------------------------
// Nonlinear drivers

/// Initial shape `v0` for nonlinear runs, as nodal values.
pub fn nonlinear_v0(ops: &FemOperators, shape: &InitialShape) -> Result<DVector<f64>> {
    Ok(match shape {
        InitialShape::Expr(e) => ops.eval(e, 0.0),
        InitialShape::Indicator(threshold) => DVector::from_iterator(
            ops.n_points(),
            ops.points()
                .iter()
                .map(|p| if p[0] < *threshold { 1.0 } else { 0.0 }),
        ),
        InitialShape::Elliptic => {
            let parse = |s: &str| crate::config::parse_expr(s).expect("built-in expression");
            let beta_r = ops.eval(&parse("sin(x1) + x2"), 0.0);
            let beta_c1 = ops.eval(&parse("2*x1*x2"), 0.0);
            let beta_c2 = ops.eval(&parse("-2*sin(x2)"), 0.0);
            let h = ops.eval(&parse("cos(3*x2)^2 + sin(x1) + 2"), 0.0);
            ops.solve_elliptic(
                0.5,
                &beta_r,
                &beta_c1,
                &beta_c2,
                &h,
                &DVector::zeros(ops.n_boundary()),
            )?
        }
    })
}

fn nonlinear_table(name: &str, traj: &NonlinearTrajectory) -> Table {
    let m = traj.kappa.as_ref().map_or(0, |k| k.nrows());
    let mut columns: Vec<String> = [
        "t",
        "normH2",
        "deviationH2",
        "err_L2_spacetime",
        "newton_iters",
        "newton_residual",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    columns.extend((1..=m).map(|i| format!("kappa_{i}")));
    let mut table = Table::new(name, columns);
    let times = traj.times();
    let k = traj.grid.k();
    let mut acc = 0.0;
    for j in 0..times.len() {
        if j > 0 {
            let (a, b) = (
                traj.deviation[j - 1].max(0.0).sqrt(),
                traj.deviation[j].max(0.0).sqrt(),
            );
            acc += k / 6.0 * (2.0 * a * a + 2.0 * b * b + 2.0 * a * b);
        }
        let mut row = vec![
            times[j],
            traj.norms[j],
            traj.deviation[j],
            acc.sqrt(),
            traj.newton_iterations[j] as f64,
            traj.newton_residuals[j],
        ];
        if let Some(kap) = &traj.kappa {
            row.extend(kap.column(j).iter());
        }
        table.rows.push(row);
    }
    table
}

struct NonlinearDesign {
    internal: Option<(InternalActuatorSet, RiccatiPath)>,
    boundary: Option<(BoundaryActuatorSet, RiccatiPath)>,
}

fn nonlinear_design(
    cfg: &ExperimentConfig,
    ctx: &Context,
    problem: &NonlinearProblem,
) -> Result<NonlinearDesign> {
    let plant = || {
        Plant::new(
            &ctx.ops,
            problem.linearization(),
            problem.nu,
            cfg.lambda,
            cfg.weight,
        )
    };
    let (t, n) = (cfg.grid.t_final, cfg.grid.n_t);
    Ok(match cfg.nonlinear.control {
        ControlKind::None => NonlinearDesign {
            internal: None,
            boundary: None,
        },
        ControlKind::Internal => {
            let set = ctx.internal_set(&cfg.internal, None)?;
            let path = plant()?
                .design_internal(&set.r_in, t, n, cfg.homotopy_steps)?
                .path;
            NonlinearDesign {
                internal: Some((set, path)),
                boundary: None,
            }
        }
        ControlKind::Boundary => {
            let set =
                ctx.boundary_set(&cfg.boundary, cfg.boundary.count, cfg.varsigma, problem.nu)?;
            let path = plant()?
                .design_boundary(&set, t, n, cfg.homotopy_steps)?
                .path;
            NonlinearDesign {
                internal: None,
                boundary: Some((set, path)),
            }
        }
    })
}

fn nonlinear_run(
    ctx: &Context,
    cfg: &ExperimentConfig,
    problem: &NonlinearProblem,
    design: &NonlinearDesign,
    run: &NonlinearRun,
    v0: &DVector<f64>,
    eps: f64,
    controlled: bool,
) -> Result<NonlinearTrajectory> {
    let yhat0 = ctx.ops.eval(&problem.yhat, 0.0);
    let mut feedback = None;
    let mut y0 = &yhat0 + v0 * eps;
    if controlled {
        if let Some((set, path)) = &design.internal {
            feedback = Some(NonlinearFeedback::Internal { set, path });
        }
        if let Some((set, path)) = &design.boundary {
            let rho = &cfg.nonlinear.rho;
            if rho.len() != set.count() {
                return Err(Error::config(
                    "nonlinear",
                    "rho",
                    format!(
                        "{} values for {} boundary actuators",
                        rho.len(),
                        set.count()
                    ),
                ));
            }
            let kappa0 = DVector::from_column_slice(rho) * eps;
            let ni = ctx.ops.n_interior();
            let mut v = v0.clone();
            v.rows_mut(ni, ctx.ops.n_boundary()).fill(0.0);
            y0 = &yhat0 + (v * eps + &set.extensions * &kappa0);
            feedback = Some(NonlinearFeedback::Boundary { set, path, kappa0 });
        }
    }
    simulate_nonlinear(&ctx.ops, problem, run, feedback.as_ref(), &y0)
}

fn problem_of(cfg: &ExperimentConfig) -> Result<NonlinearProblem> {
    let [c1, c2, c3] = cfg.nonlinear.c;
    NonlinearProblem::new(cfg.nonlinear.yhat.clone(), cfg.nu, c1, c2, c3)
}

fn nonlinear(cfg: &ExperimentConfig) -> Result<Report> {
    let ctx = Context::new(&cfg.mesh)?;
    let problem = problem_of(cfg)?;
    let design = nonlinear_design(cfg, &ctx, &problem)?;
    let v0 = nonlinear_v0(&ctx.ops, &cfg.nonlinear.v0)?;
    let scheme = cfg.nonlinear.schemes[0];
    let mut run = NonlinearRun::new(cfg.grid, scheme);
    run.newton = cfg.nonlinear.newton;
    run.schedule = cfg.schedule.clone();
    let controlled = cfg.nonlinear.control != ControlKind::None;

    let mut report = Report::default();
    let mut dev_series = vec![];
    let mut summary = Table::new(
        "epsilon",
        [
            "epsilon",
            "controlled_blow_up_step",
            "controlled_weighted_sup",
            "free_blow_up_step",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    );
    for &eps in &cfg.nonlinear.epsilons {
        let ctl = nonlinear_run(&ctx, cfg, &problem, &design, &run, &v0, eps, controlled)?;
        let free = nonlinear_run(&ctx, cfg, &problem, &design, &run, &v0, eps, false)?;
        let wsup = if ctl.blow_up.is_some() || ctl.deviation[0] == 0.0 {
            f64::INFINITY
        } else {
            ctl.weighted_deviation(cfg.lambda)
                .into_iter()
                .fold(0.0, f64::max)
        };
        let step = |t: &NonlinearTrajectory| t.blow_up.map_or(-1.0, |j| j as f64);
        summary.rows.push(vec![eps, step(&ctl), wsup, step(&free)]);
        let tag = format!("{eps}");
        report
            .tables
            .push(nonlinear_table(&format!("controlled_eps_{tag}"), &ctl));
        report
            .tables
            .push(nonlinear_table(&format!("free_eps_{tag}"), &free));
        dev_series.push(Series {
            label: format!("eps={tag}"),
            x: ctl.times(),
            y: ctl.deviation.clone(),
        });
        dev_series.push(Series {
            label: format!("eps={tag}, no control"),
            x: free.times(),
            y: free.deviation.clone(),
        });
    }
    report.tables.insert(0, summary);
    report.plots.push(log_plot(
        "deviation",
        "Distance to the reference",
        "|y - yhat|_H^2",
        dev_series,
    ));

    if cfg.nonlinear.bisect && controlled {
        let stable = |eps: f64| -> Result<bool> {
            let t = nonlinear_run(&ctx, cfg, &problem, &design, &run, &v0, eps, true)?;
            Ok(t.blow_up.is_none())
        };
        let upper = bisect_threshold(0.0, 2.0, 1e-3, stable)?;
        let lower = bisect_threshold(0.0, -2.0, 1e-3, stable)?;
        report.note("threshold.upper", fmt_num(upper));
        report.note("threshold.lower", fmt_num(lower));
    }
    Ok(report)
}

fn refinement(cfg: &ExperimentConfig) -> Result<Report> {
    let problem = problem_of(cfg)?;
    let mut mesh = cfg.mesh.build()?;
    let scheme = cfg.nonlinear.schemes[0];
    let mut table = Table::new(
        "refinement",
        ["level", "nodes", "steps", "error", "ratio"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    let mut errors = vec![];
    let mut steps = cfg.grid.n_t;
    for level in 0..cfg.levels {
        if level > 0 {
            mesh = mesh.refine();
            steps *= 2;
        }
        let ops = FemOperators::assemble(&mesh);
        let mut run = NonlinearRun::new(TimeGrid::new(cfg.grid.t_final, steps)?, scheme);
        run.newton = cfg.nonlinear.newton;
        let y0 = ops.eval(&problem.yhat, 0.0);
        let traj = simulate_nonlinear(&ops, &problem, &run, None, &y0)?;
        let err = if traj.blow_up.is_some() {
            f64::INFINITY
        } else {
            traj.error_spacetime()?
        };
        log::info!(
            "refinement level {level}: {} nodes, {steps} steps, error {err:e}",
            ops.n_points()
        );
        errors.push(err);
        table.rows.push(vec![
            (level + 1) as f64,
            ops.n_points() as f64,
            steps as f64,
            err,
            f64::NAN,
        ]);
    }
    for i in 1..errors.len() {
        let r = errors[i - 1] / errors[i];
        table.rows[i][4] = r;
    }
    let mut report = Report::default();
    let finite: Vec<f64> = errors.iter().copied().filter(|e| e.is_finite()).collect();
    if finite.len() >= 2 {
        let ratios = convergence_ratios(&finite)?;
        report.note("last_ratio", fmt_num(*ratios.last().expect("nonempty")));
    }
    report.plots.push(log_plot(
        "errors",
        "Discretization error",
        "error",
        vec![Series {
            label: "space-time error".into(),
            x: table.column("level").expect("column"),
            y: errors.clone(),
        }],
    ));
    if let Some(p) = report.plots.last_mut() {
        p.x_label = "level".into();
    }
    report.tables.push(table);
    Ok(report)
}

/// Space-time norm of the difference of two trajectories.
pub fn trajectory_discrepancy(
    ops: &FemOperators,
    a: &NonlinearTrajectory,
    b: &NonlinearTrajectory,
) -> Result<f64> {
    if a.y.shape() != b.y.shape() {
        return Err(Error::dim("trajectories on different grids"));
    }
    let norms: Vec<f64> = (0..a.y.ncols())
        .map(|j| ops.norm_h2(&(a.y.column(j) - b.y.column(j)).into_owned()))
        .collect();
    Ok(spacetime_norm2(&norms, a.grid.k())?.sqrt())
}

fn scheme_comparison(cfg: &ExperimentConfig) -> Result<Report> {
    let ctx = Context::new(&cfg.mesh)?;
    let problem = problem_of(cfg)?;
    let y0 = ctx.ops.eval(&problem.yhat, 0.0);
    let mut report = Report::default();
    let mut table = Table::new(
        "schemes",
        [
            "steps",
            "scheme",
            "blow_up_step",
            "error",
            "mean_newton_iters",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    );
    let mut pairs = Table::new(
        "discrepancy",
        ["steps", "scheme_a", "scheme_b", "discrepancy"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    let code = |s: Scheme| match s {
        Scheme::Extrapolation => 0.0,
        Scheme::Heun => 1.0,
        Scheme::Newton => 2.0,
    };
    report.note("scheme_codes", "0=extrapolation 1=heun 2=newton");
    for &steps in &cfg.comparison_steps {
        let grid = TimeGrid::new(cfg.grid.t_final, steps)?;
        let mut done: Vec<(Scheme, Option<NonlinearTrajectory>)> = vec![];
        for &scheme in &cfg.nonlinear.schemes {
            let mut run = NonlinearRun::new(grid, scheme);
            run.newton = cfg.nonlinear.newton;
            // A diverging Newton solve is recorded like a blow-up.
            let traj = match simulate_nonlinear(&ctx.ops, &problem, &run, None, &y0) {
                Ok(t) => t,
                Err(Error::NewtonDivergence(j)) => {
                    report.note(
                        format!("{scheme:?}_{steps}.newton_divergence_step").to_lowercase(),
                        j,
                    );
                    table.rows.push(vec![
                        steps as f64,
                        code(scheme),
                        j as f64,
                        f64::INFINITY,
                        f64::NAN,
                    ]);
                    done.push((scheme, None));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let err = if traj.blow_up.is_some() {
                f64::INFINITY
            } else {
                traj.error_spacetime()?
            };
            let mean = if scheme == Scheme::Newton {
                traj.mean_newton_iterations()
            } else {
                f64::NAN
            };
            table.rows.push(vec![
                steps as f64,
                code(scheme),
                traj.blow_up.map_or(-1.0, |j| j as f64),
                err,
                mean,
            ]);
            report.tables.push(nonlinear_table(
                &format!("{scheme:?}_{steps}").to_lowercase(),
                &traj,
            ));
            done.push((scheme, Some(traj)));
        }
        for a in 0..done.len() {
            for b in a + 1..done.len() {
                let d = match (&done[a].1, &done[b].1) {
                    (Some(ta), Some(tb)) if ta.blow_up.is_none() && tb.blow_up.is_none() => {
                        trajectory_discrepancy(&ctx.ops, ta, tb)?
                    }
                    _ => f64::INFINITY,
                };
                pairs
                    .rows
                    .push(vec![steps as f64, code(done[a].0), code(done[b].0), d]);
            }
        }
    }
    report.tables.insert(0, pairs);
    report.tables.insert(0, table);
    Ok(report)
}

fn estimates(cfg: &ExperimentConfig) -> Result<Report> {
    let p = &cfg.theory;
    let b = actuator_bounds(p)?;
    let (t_star, upsilon) = t_star_upsilon(p)?;
    let mut report = Report::default();
    report.note("theta(2,1,1,2)", fmt_num(theta(2.0, 1.0, 1.0, 2)?));
    report.note("T_star", fmt_num(t_star));
    report.note("Upsilon", fmt_num(upsilon));
    report.note("D_d", fmt_num(b.d_d));
    report.note("ball_volume", fmt_num(b.ball_volume));
    report.note(
        "M_eig",
        format!("{} (raw {})", b.m_eig.ceil, fmt_num(b.m_eig.raw)),
    );
    report.note(
        "M_pc",
        format!("{} (raw {})", b.m_pc.ceil, fmt_num(b.m_pc.raw)),
    );
    report.note(
        "M_simple",
        format!("{} (raw {})", b.m_simple.ceil, fmt_num(b.m_simple.raw)),
    );
    report.note("T_star_part", fmt_num(b.t_star_part));
    let mut table = Table::new(
        "bounds",
        ["quantity", "raw", "ceil"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    for (i, bound) in [b.m_eig, b.m_pc, b.m_simple].iter().enumerate() {
        table.rows.push(vec![i as f64, bound.raw, bound.ceil]);
    }
    report.note("bounds_rows", "0=M_eig 1=M_pc 2=M_simple");
    report.tables.push(table);
    Ok(report)
}

/// Dense matrix to triplet text `i j value` (1-based), one entry per line.
pub fn matrix_triplets(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                out.push_str(&format!("{} {} {}\n", i + 1, j + 1, fmt_num(v)));
            }
        }
    }
    out
}
