//! Sectioned TOML experiment files.
//!
//! ```toml
//! scenario = "radial-steady"   # radial-steady | bingham-pipe | constant
//! seed = 0
//!
//! [params]        # p, eps, delta, q, r, beta0, tau, t_end, n, components, resolution, constant_value
//! [coefficients]  # a1, ap, gamma ("identity-gamma", "diag-gamma(a,b)", "rotating-gamma(w)")
//! [forcing]       # kind = "constant" | "step"; value, after, switch_time
//! [solver]        # fields of SolverConfig
//! [diagnostics]   # cylinder_*, alpha, holder_samples, mu, nu, eps_list, delta_list, *_max
//! ```

use std::path::Path;
use std::sync::Arc;

use onepflow_core::model::{
    validate_exponents, validate_structure, ExponentReport, MetricField, SamplingPlan,
    StructureReport,
};
use onepflow_core::scenarios::{
    scenario_bingham_pipe, scenario_constant, scenario_radial_steady, PipeForcing,
};
use onepflow_core::{CoefficientModel, ForcingTerm, InnerMode, Parameters, Scenario, SolverConfig};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: String,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    params: ParamsSection,
    #[serde(default)]
    coefficients: CoefficientsSection,
    forcing: Option<ForcingSection>,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    diagnostics: DiagnosticsPlan,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsSection {
    p: Option<f64>,
    eps: Option<f64>,
    delta: Option<f64>,
    q: Option<f64>,
    r: Option<f64>,
    beta0: Option<f64>,
    tau: Option<f64>,
    t_end: Option<f64>,
    n: Option<usize>,
    components: Option<usize>,
    resolution: Option<usize>,
    constant_value: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefficientsSection {
    a1: Option<f64>,
    ap: Option<f64>,
    gamma: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForcingSection {
    kind: String,
    value: f64,
    after: Option<f64>,
    switch_time: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    inner_tol: Option<f64>,
    max_inner: Option<usize>,
    linear_tol: Option<f64>,
    damping: Option<f64>,
    mode: Option<InnerMode>,
    newton_switch: Option<f64>,
    steady_tol: Option<f64>,
    max_steps: Option<usize>,
    checkpoint_stride: Option<usize>,
}

/// What `diagnose` and the sweeps measure.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsPlan {
    pub cylinder_center: Option<Vec<f64>>,
    pub cylinder_radius: Option<f64>,
    pub cylinder_time: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_samples")]
    pub holder_samples: usize,
    pub mu: Option<f64>,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default)]
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub delta_list: Vec<f64>,
    /// Optional hard bounds; a measured value above one fails the command.
    pub sup_v_eps_max: Option<f64>,
    pub holder_max: Option<f64>,
    pub linf_error_max: Option<f64>,
}

fn default_alpha() -> f64 {
    0.5
}

fn default_samples() -> usize {
    10_000
}

fn default_nu() -> f64 {
    0.5
}

impl Default for DiagnosticsPlan {
    fn default() -> Self {
        DiagnosticsPlan {
            cylinder_center: None,
            cylinder_radius: None,
            cylinder_time: None,
            alpha: default_alpha(),
            holder_samples: default_samples(),
            mu: None,
            nu: default_nu(),
            eps_list: Vec::new(),
            delta_list: Vec::new(),
            sup_v_eps_max: None,
            holder_max: None,
            linf_error_max: None,
        }
    }
}

/// A fully validated experiment.
pub struct Experiment {
    pub scenario: Scenario,
    pub solver: SolverConfig,
    pub plan: DiagnosticsPlan,
    pub seed: u64,
    pub exponents: ExponentReport,
    pub structure: StructureReport,
}

pub fn parse_config(path: &Path, seed_override: Option<u64>) -> Result<Experiment, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text, seed_override)
}

pub fn parse_config_str(text: &str, seed_override: Option<u64>) -> Result<Experiment, CliError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let seed = seed_override.unwrap_or(file.seed);
    let ps = &file.params;

    let (p, eps, delta) = (
        ps.p.unwrap_or(2.0),
        ps.eps.unwrap_or(1e-3),
        ps.delta.unwrap_or(0.05),
    );
    let mut params = Parameters {
        p,
        eps,
        delta,
        ..Parameters::default()
    };
    macro_rules! overlay {
        ($($field:ident),*) => { $(if let Some(v) = ps.$field { params.$field = v; })* };
    }
    overlay!(q, r, beta0, tau, t_end, n, components, resolution);
    params.validate(false)?;
    let exponents = validate_exponents(&params)?;

    let resolution = params.resolution;
    let mut sc = match file.scenario.as_str() {
        "radial-steady" | "bingham-pipe" => {
            if params.n != 2 || params.components != 1 {
                return Err(CliError::Config(format!(
                    "scenario `{}` needs n = 2 and components = 1",
                    file.scenario
                )));
            }
            let mut sc = if file.scenario == "radial-steady" {
                scenario_radial_steady(p, resolution, eps, delta)?
            } else {
                scenario_bingham_pipe(PipeForcing::Constant(0.0), resolution, eps, delta)?
            };
            if ps.tau.is_none() {
                params.tau = sc.params.tau;
            }
            if ps.t_end.is_none() {
                params.t_end = sc.params.t_end;
            }
            sc.params = params.clone();
            sc
        }
        "constant" => scenario_constant(ps.constant_value.unwrap_or(0.0), &params)?,
        other => {
            return Err(CliError::Config(format!(
                "unknown scenario `{other}` (expected radial-steady, bingham-pipe or constant)"
            )))
        }
    };

    let cs = &file.coefficients;
    if cs.a1.is_some() || cs.ap.is_some() || cs.gamma.is_some() {
        let gamma = match &cs.gamma {
            Some(name) => MetricField::from_preset(name)?,
            None => MetricField::Identity,
        };
        sc.model = CoefficientModel::power_law(
            p,
            params.n,
            cs.a1.unwrap_or(1.0),
            cs.ap.unwrap_or(1.0),
            gamma,
        );
        sc.descriptor
            .push_str(&format!("|coefficients={:?}", sc.model));
    }
    let structure = validate_structure(&sc.model, p, &SamplingPlan::new(params.n, seed))?;

    if let Some(f) = &file.forcing {
        let nc = params.components;
        sc.forcing = match f.kind.as_str() {
            "constant" => ForcingTerm::constant(vec![f.value; nc]),
            "step" => {
                let (Some(after), Some(switch)) = (f.after, f.switch_time) else {
                    return Err(CliError::Config(
                        "step forcing needs `after` and `switch_time`".into(),
                    ));
                };
                let before = f.value;
                ForcingTerm::from_rule(
                    nc,
                    true,
                    Arc::new(move |_, t, out: &mut [f64]| {
                        out.fill(if t < switch { before } else { after })
                    }),
                )
            }
            other => return Err(CliError::Config(format!("unknown forcing kind `{other}`"))),
        };
        sc.descriptor.push_str(&format!("|forcing={f:?}"));
    }
    sc.validate()?;

    let s = &file.solver;
    let mut solver = SolverConfig::default();
    macro_rules! overlay_solver {
        ($($field:ident),*) => { $(if let Some(v) = s.$field { solver.$field = v; })* };
    }
    overlay_solver!(
        inner_tol,
        max_inner,
        linear_tol,
        damping,
        mode,
        newton_switch,
        steady_tol,
        max_steps,
        checkpoint_stride
    );
    solver.validate()?;

    Ok(Experiment {
        scenario: sc,
        solver,
        plan: file.diagnostics,
        seed,
        exponents,
        structure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_radial_file() {
        let e = parse_config_str(
            "scenario = \"radial-steady\"\n[params]\neps = 1e-4\nresolution = 8\n",
            None,
        )
        .unwrap();
        assert_eq!(e.scenario.params.p, 2.0);
        assert_eq!(e.scenario.params.eps, 1e-4);
        assert_eq!(e.scenario.params.tau, 10.0);
        assert_eq!(e.seed, 0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let Err(err) = parse_config_str("scenario = \"constant\"\n[params]\nfoo = 1\n", None)
        else {
            panic!("unknown key accepted");
        };
        assert!(
            matches!(err, CliError::Config(ref m) if m.contains("foo")),
            "{err}"
        );
    }

    #[test]
    fn seed_override_wins() {
        let e = parse_config_str(
            "scenario = \"constant\"\nseed = 3\n[params]\nresolution = 4\n",
            Some(9),
        )
        .unwrap();
        assert_eq!(e.seed, 9);
    }
}
