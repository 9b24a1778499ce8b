//! Run configuration: strict JSON with defaults, validated at parse time.

use std::path::{Path, PathBuf};

use curvlab::graph::{ExactGraph, Rectangle};
use curvlab::inequality::CampaignConfig;
use curvlab::measure::{HomotopySchedule, SURFACE_DIM};
use curvlab::newton::{JacobianScheme, NewtonOptions};
use curvlab::study::{check_refinements, RadialShape};
use curvlab::{OperatorSpec, Polynomial};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SolveMeasure,
    SolveGraph,
    VerifyInequalities,
    ConvergenceStudy,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::SolveMeasure => "solve-measure",
            Mode::SolveGraph => "solve-graph",
            Mode::VerifyInequalities => "verify-inequalities",
            Mode::ConvergenceStudy => "convergence-study",
        }
    }

    fn block(self) -> &'static str {
        match self {
            Mode::SolveMeasure => "measure",
            Mode::SolveGraph => "graph",
            Mode::VerifyInequalities => "inequalities",
            Mode::ConvergenceStudy => "study",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must agree with the mode given on the command line when present.
    #[serde(default)]
    pub mode: Option<Mode>,
    /// Overrides the campaign seed; `--seed` overrides both.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Overridden by `--out`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inequalities: Option<CampaignConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub jacobian: JacobianScheme,
    pub homotopy: HomotopyConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = NewtonOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            jacobian: d.jacobian,
            homotopy: HomotopyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomotopyConfig {
    pub dt_init: f64,
    pub dt_min: f64,
}

impl Default for HomotopyConfig {
    fn default() -> Self {
        let d = HomotopySchedule::default();
        Self { dt_init: d.dt_init, dt_min: d.dt_min }
    }
}

impl SolverConfig {
    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            jacobian: self.jacobian,
            ..NewtonOptions::default()
        }
    }

    pub fn schedule(&self) -> HomotopySchedule {
        HomotopySchedule {
            dt_init: self.homotopy.dt_init,
            dt_min: self.homotopy.dt_min,
            newton: self.newton(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(format!("solver.tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return Err("solver.max_iter must be at least 1".into());
        }
        let h = self.homotopy;
        if !(h.dt_min > 0.0 && h.dt_min <= h.dt_init && h.dt_init <= 1.0) {
            return Err(format!(
                "solver.homotopy needs 0 < dt_min <= dt_init <= 1, got dt_min = {}, dt_init = {}",
                h.dt_min, h.dt_init
            ));
        }
        Ok(())
    }
}

fn default_operator() -> OperatorSpec {
    OperatorSpec::SigmaK { k: 2 }
}

fn unit_density() -> Polynomial {
    Polynomial::constant(1.0, 3)
}

fn default_sphere_grid() -> (usize, usize) {
    (24, 48)
}

/// Prescribed curvature measure problem on a radial graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    #[serde(default = "default_operator")]
    pub operator: OperatorSpec,
    pub p: f64,
    /// Polynomial in the unit direction `(x₁, x₂, x₃)`.
    #[serde(default = "unit_density")]
    pub phi: Polynomial,
    /// `(n_θ, n_φ)`
    #[serde(default = "default_sphere_grid")]
    pub grid: (usize, usize),
}

impl MeasureConfig {
    fn validate(&self) -> Result<(), String> {
        self.operator.validate(SURFACE_DIM).map_err(|e| {
            format!("measure.operator: {e} (the surface dimension is n = {SURFACE_DIM}, so k <= n is required)")
        })?;
        if self.p == 0.0 {
            return Err("measure.p = 0 is not allowed: the support-function bound needs p != 0".into());
        }
        if !self.p.is_finite() {
            return Err(format!("measure.p must be finite, got {}", self.p));
        }
        self.phi.check_arity(3).map_err(|e| format!("measure.phi: {e}"))?;
        Ok(())
    }
}

fn default_domain() -> Rectangle {
    Rectangle::square(1.0)
}

fn default_nodes() -> usize {
    33
}

fn default_k() -> usize {
    2
}

/// Dirichlet problem for a graph over a rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    #[serde(default = "default_domain")]
    pub domain: Rectangle,
    /// Nodes per axis.
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    pub q: f64,
    /// Boundary data and Newton start.
    pub boundary: ExactGraph,
    /// `H(x₁, x₂, g)`; manufactured from `boundary` when absent.
    #[serde(default)]
    pub rhs: Option<Polynomial>,
    /// Optional sweep of the interior curvature probe.
    #[serde(default)]
    pub campaign: Option<GraphCampaign>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphCampaign {
    pub q_values: Vec<f64>,
    pub grids: Vec<usize>,
}

impl GraphConfig {
    fn validate(&self) -> Result<(), String> {
        if !(1..=2).contains(&self.k) {
            return Err(format!("graph.k = {} outside 1..=2 (k <= n with n = 2)", self.k));
        }
        if self.nodes < 5 {
            return Err(format!("graph.nodes = {} is below the minimum of 5", self.nodes));
        }
        if !self.q.is_finite() {
            return Err(format!("graph.q must be finite, got {}", self.q));
        }
        self.boundary.validate().map_err(|e| format!("graph.boundary: {e}"))?;
        if let Some(rhs) = &self.rhs {
            rhs.check_arity(3).map_err(|e| format!("graph.rhs: {e}"))?;
        }
        if let Some(c) = &self.campaign {
            if c.q_values.is_empty() || c.grids.is_empty() {
                return Err("graph.campaign needs at least one q value and one grid".into());
            }
            if self.rhs.is_none() {
                return Err("graph.campaign needs an explicit graph.rhs".into());
            }
        }
        Ok(())
    }
}

/// Grid-refinement study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StudyConfig {
    /// Principal curvatures of an ellipsoid against the closed form.
    EllipsoidCurvature { axes: [f64; 3], grids: Vec<(usize, usize)> },
    /// Support function and curvatures of a round sphere.
    ConstantField { radius: f64, grids: Vec<(usize, usize)> },
    /// Residual of the discrete structure equations.
    StructureResidual { shape: RadialShape, grids: Vec<(usize, usize)> },
    /// Measure problem solved on 2x-refined grids; differences of successive solutions.
    MeasureRefinement {
        #[serde(default = "default_operator")]
        operator: OperatorSpec,
        p: f64,
        #[serde(default = "unit_density")]
        phi: Polynomial,
        grids: Vec<(usize, usize)>,
    },
    /// Manufactured-solution recovery for the graph problem.
    GraphRecovery {
        exact: ExactGraph,
        #[serde(default = "default_domain")]
        domain: Rectangle,
        #[serde(default = "default_k")]
        k: usize,
        q: f64,
        /// Amplitude of the start perturbation, which vanishes on the boundary.
        #[serde(default)]
        bump: f64,
        node_counts: Vec<usize>,
    },
}

impl StudyConfig {
    fn validate(&self) -> Result<(), String> {
        let sphere_grids = |grids: &[(usize, usize)]| {
            if grids.is_empty() {
                return Err("study.grids must not be empty".to_string());
            }
            Ok(())
        };
        match self {
            StudyConfig::EllipsoidCurvature { axes, grids } => {
                if axes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                    return Err(format!("study.axes must be positive, got {axes:?}"));
                }
                sphere_grids(grids)
            }
            StudyConfig::ConstantField { radius, grids } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(format!("study.radius must be positive, got {radius}"));
                }
                sphere_grids(grids)
            }
            StudyConfig::StructureResidual { grids, .. } => sphere_grids(grids),
            StudyConfig::MeasureRefinement { operator, p, phi, grids } => {
                MeasureConfig { operator: *operator, p: *p, phi: phi.clone(), grid: grids.first().copied().unwrap_or((8, 16)) }
                    .validate()
                    .map_err(|e| e.replacen("measure.", "study.", 1))?;
                if grids.len() < 2 {
                    return Err("study.grids needs at least two grids for a solution-difference study".into());
                }
                check_refinements(grids).map_err(|e| format!("study.grids: {e}"))
            }
            StudyConfig::GraphRecovery { exact, k, q, node_counts, .. } => {
                exact.validate().map_err(|e| format!("study.exact: {e}"))?;
                if !(1..=2).contains(k) {
                    return Err(format!("study.k = {k} outside 1..=2 (k <= n with n = 2)"));
                }
                if !q.is_finite() {
                    return Err(format!("study.q must be finite, got {q}"));
                }
                if node_counts.is_empty() {
                    return Err("study.node_counts must not be empty".into());
                }
                Ok(())
            }
        }
    }
}

impl RunConfig {
    /// Checks that exactly one problem block is present and that it matches `mode`.
    pub fn validate(&self, mode: Mode) -> Result<(), String> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(format!("config mode {} does not match command {}", m.name(), mode.name()));
            }
        }
        let present: Vec<&str> = [
            ("measure", self.measure.is_some()),
            ("graph", self.graph.is_some()),
            ("inequalities", self.inequalities.is_some()),
            ("study", self.study.is_some()),
        ]
        .iter()
        .filter(|(_, p)| *p)
        .map(|(n, _)| *n)
        .collect();
        if present != [mode.block()] {
            return Err(format!(
                "{} expects exactly one problem block \"{}\", found {:?}",
                mode.name(),
                mode.block(),
                present
            ));
        }
        self.solver.validate()?;
        match mode {
            Mode::SolveMeasure => self.measure.as_ref().unwrap().validate(),
            Mode::SolveGraph => self.graph.as_ref().unwrap().validate(),
            Mode::VerifyInequalities => {
                let c = self.inequalities.as_ref().unwrap();
                c.cases().map(|_| ()).map_err(|e| format!("inequalities: {e}"))
            }
            Mode::ConvergenceStudy => self.study.as_ref().unwrap().validate(),
        }
    }
}

/// Reads, parses and validates a config file. Also returns the raw bytes for hashing.
pub fn parse_config(path: &Path, mode: Mode) -> Result<(RunConfig, Vec<u8>), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let cfg = parse_config_bytes(&bytes, mode)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok((cfg, bytes))
}

pub fn parse_config_bytes(bytes: &[u8], mode: Mode) -> Result<RunConfig, String> {
    let cfg: RunConfig = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    cfg.validate(mode)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_measure_config_gets_defaults() {
        let cfg = parse_config_bytes(br#"{"measure": {"p": 1.0}}"#, Mode::SolveMeasure).unwrap();
        let m = cfg.measure.unwrap();
        assert_eq!(m.operator, OperatorSpec::SigmaK { k: 2 });
        assert_eq!(m.grid, (24, 48));
        assert!(m.phi.is_constant(1.0));
        assert_eq!(cfg.solver, SolverConfig::default());
        assert_eq!(cfg.seed, None);
    }

    #[test]
    fn zero_exponent_names_the_rule() {
        let err = parse_config_bytes(br#"{"measure": {"p": 0.0}}"#, Mode::SolveMeasure).unwrap_err();
        assert!(err.contains("p != 0"), "{err}");
    }

    #[test]
    fn order_above_dimension_is_rejected() {
        let err = parse_config_bytes(
            br#"{"measure": {"p": 1.0, "operator": {"kind": "sigma_k", "k": 3}}}"#,
            Mode::SolveMeasure,
        )
        .unwrap_err();
        assert!(err.contains("k <= n"), "{err}");
        let err = parse_config_bytes(
            br#"{"inequalities": {"n_values": [3], "k_values": [4]}}"#,
            Mode::VerifyInequalities,
        )
        .unwrap_err();
        assert!(err.contains("k <= n"), "{err}");
    }

    #[test]
    fn unknown_keys_report_their_line() {
        let text = "{\n  \"measure\": {\n    \"p\": 1.0,\n    \"typo\": 3\n  }\n}";
        let err = parse_config_bytes(text.as_bytes(), Mode::SolveMeasure).unwrap_err();
        assert!(err.contains("typo") && err.contains("line 4"), "{err}");
    }

    #[test]
    fn blocks_must_match_mode() {
        let err = parse_config_bytes(br#"{"measure": {"p": 1.0}}"#, Mode::SolveGraph).unwrap_err();
        assert!(err.contains("\"graph\""), "{err}");
        let err = parse_config_bytes(
            br#"{"measure": {"p": 1.0}, "study": {"kind": "constant_field", "radius": 1.0, "grids": [[8, 16]]}}"#,
            Mode::SolveMeasure,
        )
        .unwrap_err();
        assert!(err.contains("exactly one"), "{err}");
        let err = parse_config_bytes(br#"{"mode": "solve-graph", "measure": {"p": 1.0}}"#, Mode::SolveMeasure)
            .unwrap_err();
        assert!(err.contains("does not match"), "{err}");
    }

    #[test]
    fn solver_block_is_checked() {
        let err = parse_config_bytes(br#"{"measure": {"p": 1.0}, "solver": {"tol": 0.0}}"#, Mode::SolveMeasure)
            .unwrap_err();
        assert!(err.contains("tol"), "{err}");
    }

    #[test]
    fn study_refinements_are_checked() {
        let err = parse_config_bytes(
            br#"{"study": {"kind": "measure_refinement", "p": 1.0, "grids": [[8, 16], [12, 24]]}}"#,
            Mode::ConvergenceStudy,
        )
        .unwrap_err();
        assert!(err.contains("refinement"), "{err}");
    }
}
