//! Experiment orchestration: spectrum, kernel, responses, Gram, synthesis
//! and verification, with artifacts named by the configuration hash.

use serde::Serialize;
use serde_json::{json, Value};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use viscoctl::grid::TimeGrid;
use viscoctl::kernel::{normalize, KernelSpec, NormalizedKernel};
use viscoctl::moment::{
    comparator_family, synthesize_with, telegraph_family, transformed_family, viscoelastic_family,
    ControlSignal, MomentProblem, SynthesisOptions, TargetState,
};
use viscoctl::riesz::{
    gram, paley_wiener_check, quadratic_closeness, SequenceFamily, DEFAULT_BLOCK,
};
use viscoctl::sim::verify;
use viscoctl::spectral::{
    compute_eigenpairs, growth_exponent, trace_diagnostics, write_eigenpairs_csv, Geometry,
    Spectrum, DEFAULT_TRACE_THRESHOLD,
};
use viscoctl::volterra::{asymptotic_residual, ModeResponse, VolterraSolver};
use viscoctl::Error;

use crate::config::{Experiment, FamilyKind, RunConfig};
use crate::error::{CliError, CliResult};

pub const DEFAULT_OUTPUT: &str = "viscoctl-out";

/// Where and under which name a run writes its files.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub hash: String,
    pub experiment: Experiment,
    pub written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path, cfg: &RunConfig, experiment: Experiment) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: cfg.hash(),
            experiment,
            written: Vec::new(),
        })
    }

    pub fn short(&self) -> &str {
        &self.hash[..12]
    }

    /// `<experiment>-<hash12><suffix>`.
    pub fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!(
            "{}-{}{}",
            self.experiment.name(),
            self.short(),
            suffix
        ))
    }

    pub fn provenance(&self) -> String {
        format!("viscoctl {} config {}", self.experiment.name(), self.hash)
    }

    fn create(&mut self, suffix: &str) -> CliResult<BufWriter<File>> {
        let p = self.path(suffix);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        let f = File::create(&p)?;
        self.written.push(p);
        Ok(BufWriter::new(f))
    }

    /// Writes `value` with `kind` and `config_hash` fields added.
    pub fn json(&mut self, suffix: &str, kind: &str, value: impl Serialize) -> CliResult<Value> {
        let mut v = serde_json::to_value(value)?;
        if let Value::Object(map) = &mut v {
            map.insert("kind".into(), json!(kind));
            map.insert("config_hash".into(), json!(self.hash));
        }
        serde_json::to_writer_pretty(self.create(suffix)?, &v)?;
        Ok(v)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub experiment: Experiment,
    pub hash: String,
    pub artifacts: Vec<PathBuf>,
    pub summary: Value,
}

/// Spectrum, grid and normalized kernel shared by the experiments.
pub struct Setup {
    pub grid: TimeGrid,
    pub kernel: NormalizedKernel,
    pub spectrum: Spectrum,
}

fn raw_spectrum(cfg: &RunConfig, count: usize) -> CliResult<Spectrum> {
    Ok(compute_eigenpairs(&cfg.domain, count, 0.0)?)
}

fn beta_max(spectrum: &Spectrum) -> f64 {
    spectrum
        .pairs
        .last()
        .map(|p| p.lambda_sq.abs().sqrt())
        .unwrap_or(1.0)
}

/// The kernel used for `family`: the configured one, or `M = 0` for the telegraph family.
pub fn kernel_for(cfg: &RunConfig, family: FamilyKind) -> KernelSpec {
    match family {
        FamilyKind::Viscoelastic => cfg.kernel_spec(),
        FamilyKind::Telegraph => KernelSpec::zero(cfg.domain.c),
    }
}

pub fn setup(cfg: &RunConfig, grid: TimeGrid, spec: &KernelSpec, count: usize) -> CliResult<Setup> {
    let kernel = normalize(spec, &grid)?;
    let spectrum = raw_spectrum(cfg, count)?.with_alpha(kernel.alpha);
    Ok(Setup {
        grid,
        kernel,
        spectrum,
    })
}

fn default_grid(cfg: &RunConfig, horizon: f64, count: usize) -> CliResult<TimeGrid> {
    let raw = raw_spectrum(cfg, count)?;
    let h = cfg.step_for(beta_max(&raw))?;
    Ok(TimeGrid::new(horizon, h)?)
}

fn responses_for(setup: &Setup, cfg: &RunConfig) -> CliResult<(VolterraSolver, Vec<ModeResponse>)> {
    let solver = VolterraSolver::new(&setup.kernel, cfg.extrapolation())?;
    let responses = solver.responses(&setup.spectrum.pairs)?;
    Ok((solver, responses))
}

/// `{Z_n Psi_n}` for the viscoelastic kind, the telegraph family otherwise.
fn build_family(
    cfg: &RunConfig,
    family: FamilyKind,
    setup: &Setup,
    responses: Option<&[ModeResponse]>,
) -> CliResult<SequenceFamily> {
    match family {
        FamilyKind::Telegraph => Ok(telegraph_family(
            &setup.spectrum,
            setup.grid,
            cfg.gamma_param(),
        )?),
        FamilyKind::Viscoelastic => {
            let r = responses
                .ok_or_else(|| CliError::Config("viscoelastic family needs responses".into()))?;
            Ok(viscoelastic_family(r, &setup.spectrum)?)
        }
    }
}

fn damping(cfg: &RunConfig, family: FamilyKind) -> f64 {
    match family {
        FamilyKind::Telegraph => cfg.domain.c,
        FamilyKind::Viscoelastic => 0.0,
    }
}

/// Runs the configured experiment, writing artifacts under `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> CliResult<RunOutcome> {
    cfg.validate()?;
    let experiment = cfg.experiment()?;
    let mut art = Artifacts::new(out, cfg, experiment)?;
    let summary = match experiment {
        Experiment::Spectrum => run_spectrum(cfg, &mut art)?,
        Experiment::Responses => run_responses(cfg, &mut art)?,
        Experiment::Gram => run_gram(cfg, &mut art)?,
        Experiment::Synthesize => run_synthesize(cfg, &mut art)?.0,
        Experiment::Verify => run_verify(cfg, &mut art)?,
        Experiment::SweepT => run_sweep(cfg, &mut art)?,
    };
    Ok(RunOutcome {
        experiment,
        hash: art.hash.clone(),
        artifacts: art.written,
        summary,
    })
}

fn run_spectrum(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<Value> {
    let spectrum = raw_spectrum(cfg, cfg.modes)?.with_alpha(
        normalize(
            &cfg.kernel_spec(),
            &TimeGrid::new(cfg.horizon, cfg.horizon / 16.0)?,
        )?
        .alpha,
    );
    let prov = art.provenance();
    write_eigenpairs_csv(art.create(".csv")?, &spectrum, Some(&prov))?;
    let traces = trace_diagnostics(&spectrum, DEFAULT_TRACE_THRESHOLD)?;
    let growth = match cfg.domain.geometry {
        Geometry::Rectangle { .. } => growth_exponent(&spectrum),
        Geometry::Interval { .. } => None,
    };
    art.json(
        ".json",
        "spectrum",
        json!({
            "count": spectrum.len(),
            "alpha": spectrum.alpha,
            "lambda_sq": spectrum.pairs.iter().map(|p| p.lambda_sq).collect::<Vec<_>>(),
            "in_j": spectrum.pairs.iter().filter(|p| p.in_j).map(|p| p.index).collect::<Vec<_>>(),
            "trace_min": traces.min,
            "trace_max": traces.max,
            "trace_flagged": traces.flagged,
            "growth_exponent": growth,
        }),
    )
}

fn run_responses(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<Value> {
    let grid = default_grid(cfg, cfg.horizon, cfg.modes)?;
    let s = setup(cfg, grid, &cfg.kernel_spec(), cfg.modes)?;
    let (_, responses) = responses_for(&s, cfg)?;
    let prov = art.provenance();
    s.kernel
        .write_csv(art.create("-kernel.csv")?, Some(&prov))?;
    for r in &responses {
        r.write_csv(art.create(&format!("/mode-{:03}.csv", r.n))?, Some(&prov))?;
    }
    let residual = asymptotic_residual(&responses).ok();
    let max_gap = responses.iter().map(|r| r.route_gap).fold(0.0, f64::max);
    art.json(
        ".json",
        "responses",
        json!({
            "horizon": grid.horizon(),
            "step": grid.step(),
            "alpha": s.kernel.alpha,
            "gamma": s.kernel.gamma,
            "modes": responses.len(),
            "max_route_gap": max_gap,
            "residual_slope": residual.as_ref().map(|r| r.slope),
            "residual": residual,
        }),
    )
}

fn run_gram(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<Value> {
    let grid = default_grid(cfg, cfg.horizon, cfg.modes)?;
    let s = setup(cfg, grid, &kernel_for(cfg, cfg.family), cfg.modes)?;
    let solved = match cfg.family {
        FamilyKind::Viscoelastic => Some(responses_for(&s, cfg)?),
        FamilyKind::Telegraph => None,
    };
    let family = build_family(
        cfg,
        cfg.family,
        &s,
        solved.as_ref().map(|(_, r)| r.as_slice()),
    )?;
    let report = gram(&family, family.max_mode())?;
    let mut extra = json!(null);
    if let Some((solver, responses)) = &solved {
        let off_j: Vec<ModeResponse> = responses.iter().filter(|r| !r.in_j).cloned().collect();
        if !off_j.is_empty() {
            let transformed = transformed_family(&off_j, &s.spectrum)?;
            let comparator = comparator_family(solver, &s.spectrum)?;
            let closeness = quadratic_closeness(&transformed, &comparator, DEFAULT_BLOCK)?;
            let betas: Vec<f64> = transformed.members.iter().map(|m| m.beta.norm()).collect();
            let pw = paley_wiener_check(&transformed, &comparator, &closeness)?;
            let prov = art.provenance();
            closeness.write_csv(art.create("-closeness.csv")?, Some(&prov))?;
            extra = json!({
                "slope": closeness.slope_against(&betas),
                "blocks_decrease": closeness.blocks_decrease(),
                "block_sums": closeness.block_sums,
                "paley_wiener": pw,
            });
        }
    }
    let last = report.last().clone();
    art.json(
        ".json",
        "gram",
        json!({
            "label": report.label,
            "horizon": grid.horizon(),
            "N": last.n,
            "m_N": last.m_n,
            "M_N": last.big_m_n,
            "condition": last.condition,
            "levels": report.levels,
            "closeness": extra,
        }),
    )
}

fn check_family_physics(cfg: &RunConfig) -> CliResult<()> {
    if cfg.family == FamilyKind::Telegraph && !cfg.kernel_spec().is_zero() {
        return Err(CliError::Config(
            "the telegraph family describes the memoryless system; set the kernel to zero or use the viscoelastic family".into(),
        ));
    }
    if cfg.family == FamilyKind::Telegraph && cfg.gamma_param() != cfg.domain.c {
        return Err(CliError::Config(
            "synthesis with the telegraph family needs gamma_param = c".into(),
        ));
    }
    Ok(())
}

struct Synthesis {
    setup: Setup,
    solver: VolterraSolver,
    responses: Vec<ModeResponse>,
    target: TargetState,
    control: Option<ControlSignal>,
}

fn synthesis_inputs(cfg: &RunConfig) -> CliResult<Synthesis> {
    check_family_physics(cfg)?;
    let k_sim = cfg.k_sim().max(cfg.truncation);
    let grid = default_grid(cfg, cfg.horizon, k_sim)?;
    let s = setup(cfg, grid, &kernel_for(cfg, cfg.family), k_sim)?;
    let (solver, responses) = responses_for(&s, cfg)?;
    let kappas: Vec<f64> = s.spectrum.pairs.iter().map(|p| p.kappa).collect();
    let target = cfg.target_state(&kappas, s.kernel.gamma)?;
    Ok(Synthesis {
        setup: s,
        solver,
        responses,
        target,
        control: None,
    })
}

fn solve_control(cfg: &RunConfig, syn: &mut Synthesis, art: &mut Artifacts) -> CliResult<Value> {
    let k = cfg.truncation;
    let family = build_family(cfg, cfg.family, &syn.setup, Some(&syn.responses[..k]))?;
    let problem = MomentProblem::new(family, &syn.target, damping(cfg, cfg.family))?;
    let options = SynthesisOptions {
        condition_cap: cfg.synthesis.condition_cap,
        min_norm_directions: cfg.synthesis.min_norm_directions,
        seed: cfg.seed,
    };
    match synthesize_with(&problem, &options) {
        Ok((control, checks)) => {
            let report = control.report(checks);
            let prov = art.provenance();
            control.write_csv(art.create("-control.csv")?, Some(&prov))?;
            let v = art.json(
                ".json",
                "synthesis",
                json!({
                    "status": "ok",
                    "family": problem.family.label,
                    "target": syn.target,
                    "report": report,
                }),
            )?;
            syn.control = Some(control);
            Ok(v)
        }
        Err(Error::NotControllable {
            horizon,
            lower,
            condition,
            cap,
        }) => {
            art.json(
                ".json",
                "synthesis",
                json!({
                    "status": "not-controllable",
                    "horizon": horizon,
                    "m_N": lower,
                    "condition": condition,
                    "cap": cap,
                }),
            )?;
            Err(Error::NotControllable {
                horizon,
                lower,
                condition,
                cap,
            }
            .into())
        }
        Err(e) => Err(e.into()),
    }
}

fn run_synthesize(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<(Value, Synthesis)> {
    let mut syn = synthesis_inputs(cfg)?;
    let v = solve_control(cfg, &mut syn, art)?;
    Ok((v, syn))
}

fn run_verify(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<Value> {
    let mut syn = synthesis_inputs(cfg)?;
    let control = match &cfg.control {
        Some(path) => {
            let f = File::open(path)
                .map_err(|e| CliError::MissingArtifact(format!("{}: {e}", path.display())))?;
            ControlSignal::read_csv(f, syn.setup.grid, syn.setup.spectrum.boundary.clone())?
        }
        None => {
            solve_control(cfg, &mut syn, art)?;
            syn.control.take().expect("synthesis stores its control")
        }
    };
    let (verdict, result) = verify(
        &syn.solver,
        &syn.responses,
        &syn.setup.spectrum,
        &control,
        &syn.target,
        cfg.k_sim(),
    )?;
    let prov = art.provenance();
    result.write_csv(art.create("-state.csv")?, Some(&prov))?;
    art.json("-verdict.json", "verdict", &verdict)
}

/// One plateau-ratio curve of the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCurve {
    pub label: String,
    pub m_n: Vec<f64>,
    pub big_m_n: Vec<f64>,
    pub ratio: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Crossing {
    pub threshold: f64,
    pub telegraph: Option<f64>,
    pub viscoelastic: Option<f64>,
    pub within_step: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub times: Vec<f64>,
    pub step: f64,
    pub ratio_modes: [usize; 2],
    pub telegraph: SweepCurve,
    pub viscoelastic: SweepCurve,
    pub crossings: Vec<Crossing>,
}

/// First sweep time from which the ratio stays at or above `threshold`.
pub fn plateau_onset(times: &[f64], ratio: &[f64], threshold: f64) -> Option<f64> {
    let mut onset = None;
    for (t, r) in times.iter().zip(ratio) {
        if *r >= threshold {
            onset.get_or_insert(*t);
        } else {
            onset = None;
        }
    }
    onset
}

fn sweep_curve(
    label: &str,
    family: &SequenceFamily,
    nodes: &[usize],
    modes: [usize; 2],
) -> CliResult<SweepCurve> {
    let mut curve = SweepCurve {
        label: label.into(),
        m_n: Vec::new(),
        big_m_n: Vec::new(),
        ratio: Vec::new(),
    };
    for &k in nodes {
        let r = gram(&family.truncate_time(k), modes[0])?;
        let hi = r.level(modes[0]).expect("level present");
        curve.m_n.push(hi.m_n);
        curve.big_m_n.push(hi.big_m_n);
        curve
            .ratio
            .push(r.lower_ratio(modes[0], modes[1]).expect("levels present"));
    }
    Ok(curve)
}

/// Telegraph and viscoelastic `m_N(T)` curves from responses computed once at `t_max`.
pub fn sweep(cfg: &RunConfig) -> CliResult<SweepResult> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep-T needs a [sweep] section".into()))?;
    let modes = sw
        .ratio_modes
        .unwrap_or([cfg.modes, (cfg.modes / 4).max(1)]);
    let delta = (sw.t_max - sw.t_min) / (sw.steps - 1) as f64;
    let raw = raw_spectrum(cfg, cfg.modes)?;
    let requested = cfg.step_for(beta_max(&raw))?;
    let h = delta / (delta / requested).ceil();
    let grid = TimeGrid::new(sw.t_max, h)?;
    let nodes: Vec<usize> = (0..sw.steps)
        .map(|i| ((sw.t_min + i as f64 * delta) / grid.step()).round() as usize)
        .collect();
    let times: Vec<f64> = nodes.iter().map(|k| grid.time(*k)).collect();

    let tele = setup(cfg, grid, &KernelSpec::zero(cfg.domain.c), cfg.modes)?;
    let tele_family = telegraph_family(&tele.spectrum, grid, cfg.gamma_param())?;
    let visco = setup(cfg, grid, &cfg.kernel_spec(), cfg.modes)?;
    let (_, responses) = responses_for(&visco, cfg)?;
    let visco_family = viscoelastic_family(&responses, &visco.spectrum)?;

    let telegraph = sweep_curve(&tele_family.label, &tele_family, &nodes, modes)?;
    let viscoelastic = sweep_curve(&visco_family.label, &visco_family, &nodes, modes)?;
    let crossings = sw
        .thresholds
        .iter()
        .map(|&threshold| {
            let a = plateau_onset(&times, &telegraph.ratio, threshold);
            let b = plateau_onset(&times, &viscoelastic.ratio, threshold);
            let within_step = match (a, b) {
                (Some(x), Some(y)) => (x - y).abs() <= delta * (1.0 + 1e-9),
                (None, None) => true,
                _ => false,
            };
            Crossing {
                threshold,
                telegraph: a,
                viscoelastic: b,
                within_step,
            }
        })
        .collect();
    Ok(SweepResult {
        times,
        step: delta,
        ratio_modes: modes,
        telegraph,
        viscoelastic,
        crossings,
    })
}

fn run_sweep(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<Value> {
    let result = sweep(cfg)?;
    let prov = art.provenance();
    let mut w = csv::Writer::from_writer(art.create(".csv")?);
    w.write_record([format!("# {prov}")])?;
    w.write_record([
        "T",
        "telegraph_m_N",
        "viscoelastic_m_N",
        "telegraph_ratio",
        "viscoelastic_ratio",
    ])?;
    for i in 0..result.times.len() {
        w.write_record([
            format!("{:.10}", result.times[i]),
            format!("{:.6e}", result.telegraph.m_n[i]),
            format!("{:.6e}", result.viscoelastic.m_n[i]),
            format!("{:.6e}", result.telegraph.ratio[i]),
            format!("{:.6e}", result.viscoelastic.ratio[i]),
        ])?;
    }
    w.flush()?;
    drop(w);
    art.json(".json", "sweep", &result)
}
