//! Augmented-Lagrangian outer loop around the manifold CG inner solver.

use std::cell::Cell;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{ambiguity_map, beam_project, isl, normalized_isl, SidelobeRegion};
use crate::comm::{audit_margins, build_constraints, MarginReport};
use crate::error::{Error, Result};
use crate::manifold::{rcg_minimize, CircleManifold, InnerStop, RcgParams, SmoothObjective};
use crate::model::{BlockDft, Dimensions, Domain, WaveformGrid};
use crate::numeric::{norm, Real};
use crate::objective::{AlmProblem, DualState, ObjectiveBreakdown};
use crate::rng::{self, tag};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Phases of the inverse DFT of a per-block matched beamformer toward the
    /// users' symbols and the sensing direction.
    Matched,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub rho: f64,
    /// Multiplies `rho` after every dual update; 1 keeps it fixed.
    pub rho_growth: f64,
    pub rho_max: f64,
    pub mu_max: f64,
    pub lambda_max: f64,
    pub delta_th: f64,
    pub max_outer: usize,
    pub inner: RcgParams,
    pub init: InitStrategy,
    /// Seed for the random initialization; defaults to the scenario seed.
    pub seed: Option<u64>,
    /// Half-widths of the sidelobe region; `None` means the whole lattice.
    pub max_delay: Option<usize>,
    pub max_doppler: Option<usize>,
    /// The step-size stop also requires every constraint to hold within
    /// these slacks; an infeasible iterate that stops moving keeps iterating.
    pub require_feasible: bool,
    pub margin_slack: f64,
    pub power_rel_slack: f64,
    /// Optional extra stop once every constraint is met within this slack.
    pub feasibility_stop: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 1.0,
            rho_growth: 1.0,
            rho_max: 1e6,
            mu_max: 1e4,
            lambda_max: 1e4,
            delta_th: 1e-4,
            max_outer: 200,
            inner: RcgParams::default(),
            init: InitStrategy::Matched,
            seed: None,
            max_delay: None,
            max_doppler: None,
            require_feasible: true,
            margin_slack: 1e-6,
            power_rel_slack: 1e-6,
            feasibility_stop: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.rho) {
            return Err(Error::Config("solver.rho must be positive".into()));
        }
        if !(self.rho_growth >= 1.0 && self.rho_growth.is_finite()) {
            return Err(Error::Config("solver.rho_growth must be at least 1".into()));
        }
        if self.rho_max.is_nan() || self.rho_max < self.rho {
            return Err(Error::Config("solver.rho_max must be at least rho".into()));
        }
        if !(self.mu_max >= 0.0 && self.lambda_max >= 0.0) {
            return Err(Error::Config("dual clamps must be non-negative".into()));
        }
        if !positive(self.delta_th) {
            return Err(Error::Config("solver.delta_th must be positive".into()));
        }
        if self.max_outer == 0 {
            return Err(Error::Config("solver.max_outer must be at least 1".into()));
        }
        if !(self.margin_slack >= 0.0 && self.power_rel_slack >= 0.0) {
            return Err(Error::Config(
                "feasibility slacks must be non-negative".into(),
            ));
        }
        if self.inner.alpha_th.is_nan() || self.inner.alpha_th < 0.0 {
            return Err(Error::Config(
                "solver.inner.alpha_th must be non-negative".into(),
            ));
        }
        self.inner.armijo.validate()
    }

    pub fn region(&self, dims: &Dimensions) -> Result<SidelobeRegion> {
        SidelobeRegion::new(
            self.max_delay.unwrap_or(dims.n_sc),
            self.max_doppler.unwrap_or(dims.n_sym),
            dims,
        )
    }
}

/// One JSON-lines trace record.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Inner {
        t: usize,
        q: usize,
        g: f64,
        isl_term: f64,
        power_penalty: f64,
        qos_penalty: f64,
        step: f64,
        grad_norm: f64,
    },
    Outer {
        t: usize,
        inner_iters: usize,
        inner_stop: InnerStop,
        delta: f64,
        g: f64,
        p_il: f64,
        min_margin: f64,
        mu: f64,
        max_lambda: f64,
        rho: f64,
    },
}

/// Quality figures recomputed from a waveform by the ambiguity and comm code.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Audit {
    pub isl: f64,
    pub normalized_isl: f64,
    pub normalized_isl_db: f64,
    pub p_il: f64,
    pub p0: f64,
    pub gamma: f64,
    pub min_margin: f64,
    pub violations: usize,
    pub modulus_deviation: f64,
}

impl Audit {
    /// Whether the waveform meets every constraint within the given slacks.
    pub fn is_feasible(&self, margin_slack: f64, power_rel_slack: f64) -> bool {
        self.min_margin >= self.gamma - margin_slack
            && self.p_il >= self.p0 * (1.0 - power_rel_slack)
    }
}

pub fn audit_waveform(
    scn: &Scenario,
    xt: &WaveformGrid,
    region: &SidelobeRegion,
) -> Result<(Audit, MarginReport)> {
    xt.expect_domain(Domain::Time)?;
    let x = BlockDft::new(scn.dims).to_frequency_domain(xt)?;
    let grid = beam_project(&x, &scn.steering())?;
    let map = ambiguity_map(&grid, region)?;
    let margins = audit_margins(&x, &build_constraints(scn))?;
    let n_isl = normalized_isl(&map);
    let audit = Audit {
        isl: isl(&map),
        normalized_isl: n_isl,
        normalized_isl_db: 10.0 * n_isl.log10(),
        p_il: map.peak(),
        p0: scn.p0,
        gamma: margins.gamma,
        min_margin: margins.min_margin,
        violations: margins.violations,
        modulus_deviation: xt.modulus_deviation(scn.radius()),
    };
    Ok((audit, margins))
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub time: WaveformGrid,
    pub frequency: WaveformGrid,
    pub outer_iters: usize,
    pub trace: Vec<TraceRecord>,
    pub audit: Audit,
    pub duals: DualState,
    pub converged: bool,
    /// Set when a non-finite value stopped the run; the waveform is then the
    /// last finite outer iterate.
    pub abort: Option<String>,
}

impl SolveResult {
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.trace {
            out.push_str(&serde_json::to_string(rec).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }
}

struct InnerObjective<'a> {
    problem: &'a AlmProblem,
    duals: &'a DualState,
    last: &'a Cell<ObjectiveBreakdown>,
}

impl SmoothObjective for InnerObjective<'_> {
    fn value(&mut self, x: &[Complex64]) -> Result<f64> {
        let b = self.problem.objective(x, self.duals)?;
        self.last.set(b);
        Ok(b.total)
    }

    fn value_and_gradient(&mut self, x: &[Complex64]) -> Result<(f64, Vec<Complex64>)> {
        let (b, g) = self.problem.objective_and_gradient(x, self.duals)?;
        self.last.set(b);
        Ok((b.total, g))
    }
}

/// Starting point on the manifold.
pub fn initial_waveform(scn: &Scenario, cfg: &SolverConfig) -> Result<Vec<Complex64>> {
    let manifold = CircleManifold::new(scn.radius(), scn.dims.n_tot())?;
    if cfg.init == InitStrategy::Matched {
        if let Ok(x) = manifold.project_point(&matched_start(scn)) {
            return Ok(x);
        }
    }
    let mut rng = rng::stream(cfg.seed.unwrap_or(scn.rng_seed), tag::INIT);
    Ok((0..scn.dims.n_tot())
        .map(|_| {
            Complex64::from_polar(
                scn.radius(),
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            )
        })
        .collect())
}

/// `F^H x_comm` with `x_comm[n, m] = sum_k s h / |h| + sqrt(K) a / sqrt(N_t)`.
fn matched_start(scn: &Scenario) -> Vec<Complex64> {
    let d = scn.dims;
    let a = scn.steering();
    let beam_scale = (d.n_users as f64).sqrt() / (d.n_tx as f64).sqrt();
    let mut x = vec![Complex64::new(0.0, 0.0); d.n_tot()];
    for m in 0..d.n_sym {
        for n in 0..d.n_sc {
            let start = d.index(m, n, 0);
            let blk = &mut x[start..start + d.n_tx];
            for (v, ap) in blk.iter_mut().zip(a.entries()) {
                *v = ap * beam_scale;
            }
            for k in 0..d.n_users {
                let h = scn.channels.get(n, k);
                let hn = norm(h);
                if hn > 0.0 {
                    let s = scn.symbols.get(n, m, k) / hn;
                    for (v, hv) in blk.iter_mut().zip(h) {
                        *v += hv * s;
                    }
                }
            }
        }
    }
    BlockDft::new(d).inverse_in_place(&mut x);
    x
}

pub fn solve(scn: &Scenario, cfg: &SolverConfig) -> Result<SolveResult> {
    scn.validate()?;
    cfg.validate()?;
    let dims = scn.dims;
    let region = cfg.region(&dims)?;
    let problem = AlmProblem::new(
        build_constraints(scn),
        scn.steering(),
        region.clone(),
        scn.p0,
    )?;
    let manifold = CircleManifold::new(scn.radius(), dims.n_tot())?;
    let mut duals = DualState::new(dims.n_constraints(), cfg.rho, cfg.mu_max, cfg.lambda_max)?;
    let mut x = initial_waveform(scn, cfg)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut abort = None;
    let mut outer_iters = 0;

    for t in 1..=cfg.max_outer {
        let last = Cell::new(ObjectiveBreakdown::default());
        let mut inner = InnerObjective {
            problem: &problem,
            duals: &duals,
            last: &last,
        };
        let run = rcg_minimize(&manifold, &mut inner, x.clone(), &cfg.inner, |it, _| {
            let b = last.get();
            trace.push(TraceRecord::Inner {
                t,
                q: it.q,
                g: it.value,
                isl_term: b.isl_term,
                power_penalty: b.power_penalty,
                qos_penalty: b.qos_penalty,
                step: it.step,
                grad_norm: it.grad_norm,
            });
        });
        let out = match run {
            Ok(out) => out,
            Err(Error::NonFinite(msg)) => {
                abort = Some(format!("outer iteration {t}: non-finite {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        outer_iters = t;
        let delta = norm(&out.x.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
        x = out.x;
        let mut next = problem.update_duals(&duals, &x)?;
        next.rho = (next.rho * cfg.rho_growth).min(cfg.rho_max);
        let values = problem.constraint_values(&x)?;
        let min_margin = values.iter().copied().fold(f64::INFINITY, f64::min);
        let p_il = problem.directional_power(&x)?;
        trace.push(TraceRecord::Outer {
            t,
            inner_iters: out.iterations,
            inner_stop: out.stop,
            delta,
            g: out.value,
            p_il,
            min_margin,
            mu: next.mu,
            max_lambda: next.max_lambda(),
            rho: duals.rho,
        });
        duals = next;
        let feasible = min_margin >= problem.constraints().gamma - cfg.margin_slack
            && p_il >= scn.p0 * (1.0 - cfg.power_rel_slack);
        if delta <= cfg.delta_th && (feasible || !cfg.require_feasible) {
            converged = true;
            break;
        }
        if let Some(slack) = cfg.feasibility_stop {
            if min_margin >= problem.constraints().gamma - slack && p_il >= scn.p0 - slack {
                converged = true;
                break;
            }
        }
    }

    let time = WaveformGrid::new(Domain::Time, dims, x)?;
    let frequency = BlockDft::new(dims).to_frequency_domain(&time)?;
    let (audit, _) = audit_waveform(scn, &time, &region)?;
    Ok(SolveResult {
        time,
        frequency,
        outer_iters,
        trace,
        audit,
        duals,
        converged,
        abort,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NTx,
    NUsers,
    NSc,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::NTx => "n_tx",
            SweepAxis::NUsers => "n_users",
            SweepAxis::NSc => "n_sc",
        }
    }

    fn code(&self) -> u64 {
        match self {
            SweepAxis::NTx => 1,
            SweepAxis::NUsers => 2,
            SweepAxis::NSc => 3,
        }
    }

    pub fn apply(&self, dims: Dimensions, value: usize) -> Result<Dimensions> {
        let mut d = dims;
        match self {
            SweepAxis::NTx => d.n_tx = value,
            SweepAxis::NUsers => d.n_users = value,
            SweepAxis::NSc => d.n_sc = value,
        }
        d.validate()?;
        Ok(d)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_tx" => Ok(SweepAxis::NTx),
            "n_users" => Ok(SweepAxis::NUsers),
            "n_sc" => Ok(SweepAxis::NSc),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}` (expected n_tx, n_users or n_sc)"
            ))),
        }
    }
}

/// Seed of one sweep point: `hash(master, axis, value, trial)`.
pub fn sweep_seed(master: u64, axis: SweepAxis, value: usize, trial: usize) -> u64 {
    rng::derive_seed(master, &[axis.code(), value as u64, trial as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: &'static str,
    pub value: usize,
    pub trial: usize,
    pub seed: u64,
    pub normalized_isl: Option<f64>,
    pub isl: Option<f64>,
    pub p_il: Option<f64>,
    pub min_margin: Option<f64>,
    pub violations: Option<usize>,
    pub outer_iters: Option<usize>,
    pub converged: bool,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    /// Mean normalized ISL per axis value over successful trials.
    pub fn means(&self) -> Vec<(usize, f64, usize)> {
        let mut values: Vec<usize> = self.rows.iter().map(|r| r.value).collect();
        values.dedup();
        values
            .into_iter()
            .map(|v| {
                let ok: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.value == v)
                    .filter_map(|r| r.normalized_isl)
                    .collect();
                let mean = ok.iter().sum::<f64>() / ok.len().max(1) as f64;
                (v, mean, ok.len())
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| Real(x).to_string()).unwrap_or_default();
        let mut out = String::from(
            "axis,value,trial,seed,normalized_isl,isl,p_il,min_margin,violations,outer_iters,converged,seconds,error\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.axis,
                r.value,
                r.trial,
                r.seed,
                opt(r.normalized_isl),
                opt(r.isl),
                opt(r.p_il),
                opt(r.min_margin),
                r.violations.map(|v| v.to_string()).unwrap_or_default(),
                r.outer_iters.map(|v| v.to_string()).unwrap_or_default(),
                r.converged,
                r.seconds,
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            ));
        }
        out
    }
}

/// Solves one scenario per `(value, trial)`, in parallel. `build` receives the
/// swept dimensions and the point seed. Failing points are recorded, not
/// propagated.
pub fn sweep<F>(
    build: F,
    base: Dimensions,
    cfg: &SolverConfig,
    axis: SweepAxis,
    values: &[usize],
    trials: usize,
    master_seed: u64,
) -> SweepTable
where
    F: Fn(Dimensions, u64) -> Result<Scenario> + Sync,
{
    let points: Vec<(usize, usize)> = values
        .iter()
        .flat_map(|&v| (0..trials).map(move |t| (v, t)))
        .collect();
    let rows = points
        .par_iter()
        .map(|&(value, trial)| {
            let seed = sweep_seed(master_seed, axis, value, trial);
            let started = std::time::Instant::now();
            let outcome = axis
                .apply(base, value)
                .and_then(|d| build(d, seed))
                .and_then(|scn| solve(&scn, cfg));
            let seconds = started.elapsed().as_secs_f64();
            let mut row = SweepRow {
                axis: axis.name(),
                value,
                trial,
                seed,
                normalized_isl: None,
                isl: None,
                p_il: None,
                min_margin: None,
                violations: None,
                outer_iters: None,
                converged: false,
                seconds,
                error: None,
            };
            match outcome {
                Ok(res) => {
                    row.normalized_isl = Some(res.audit.normalized_isl);
                    row.isl = Some(res.audit.isl);
                    row.p_il = Some(res.audit.p_il);
                    row.min_margin = Some(res.audit.min_margin);
                    row.violations = Some(res.audit.violations);
                    row.outer_iters = Some(res.outer_iters);
                    row.converged = res.converged;
                    row.error = res.abort;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect();
    SweepTable { rows }
}
