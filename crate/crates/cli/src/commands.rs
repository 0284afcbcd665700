use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use isac_waveform::ambiguity::waveform_ambiguity;
use isac_waveform::baselines::{random_cm_waveform, zc_waveform, ZcMapping};
use isac_waveform::comm::MarginReport;
use isac_waveform::config::RunConfig;
use isac_waveform::eval::{
    monte_carlo_detection, monte_carlo_rmse, range_doppler_map, DetectionSetup, Reference,
};
use isac_waveform::numeric::Real;
use isac_waveform::scenario::Scenario;
use isac_waveform::solver::{self, audit_waveform, Audit, SolveResult, SweepAxis, TraceRecord};
use isac_waveform::WaveformGrid;

use crate::manifest::{sha256_hex, OutputDir};
use crate::{BaselineKind, Common, Mapping};

/// A command failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const CONFIG: u8 = 2;
    pub const NUMERICAL: u8 = 3;
    pub const IO: u8 = 4;

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure {
            code: Self::IO,
            message: format!("{}: {e}", path.display()),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: Self::CONFIG,
            message: message.into(),
        }
    }
}

type CmdResult = Result<(), Failure>;

struct Loaded {
    text: String,
    cfg: RunConfig,
    base_dir: PathBuf,
}

fn load(common: &Common) -> Result<Loaded, Failure> {
    let path = &common.config;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let cfg = RunConfig::from_toml_with_overrides(&text, &common.overrides)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Loaded {
        text,
        cfg,
        base_dir,
    })
}

/// Hash input for the manifest: the file text plus any overrides, so two runs
/// share a config digest only when they ran the same settings.
fn config_identity(loaded: &Loaded, common: &Common) -> String {
    let mut s = loaded.text.clone();
    for ov in &common.overrides {
        s.push_str("\n# --set ");
        s.push_str(ov);
    }
    s
}

fn read_waveform(path: &Path, cfg: &RunConfig) -> Result<WaveformGrid, Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::io(path, e))?;
    WaveformGrid::from_csv(BufReader::new(file), cfg.dims).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

#[derive(Serialize)]
struct AuditFile<'a> {
    audit: &'a Audit,
    margins: &'a MarginReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<SolverSummary>,
}

#[derive(Serialize)]
struct SolverSummary {
    converged: bool,
    outer_iters: usize,
    inner_iters: usize,
    final_mu: f64,
    final_max_lambda: f64,
    final_rho: f64,
}

fn inner_iterations(trace: &[TraceRecord]) -> usize {
    trace
        .iter()
        .filter(|r| matches!(r, TraceRecord::Inner { .. }))
        .count()
}

fn summary(res: &SolveResult) -> SolverSummary {
    SolverSummary {
        converged: res.converged,
        outer_iters: res.outer_iters,
        inner_iters: inner_iterations(&res.trace),
        final_mu: res.duals.mu,
        final_max_lambda: res.duals.max_lambda(),
        final_rho: res.duals.rho,
    }
}

fn solve_checked(scn: &Scenario, cfg: &RunConfig) -> Result<SolveResult, Failure> {
    Ok(solver::solve(scn, &cfg.solver)?)
}

pub fn synthesize(common: &Common) -> CmdResult {
    let loaded = load(common)?;
    let cfg = &loaded.cfg;
    let scn = cfg.scenario(&loaded.base_dir)?;
    let res = solve_checked(&scn, cfg)?;
    let region = cfg.solver.region(&scn.dims)?;
    let (audit, margins) = audit_waveform(&scn, &res.time, &region)?;

    let mut out = OutputDir::create(
        &common.out,
        "synthesize",
        &config_identity(&loaded, common),
        cfg.seed,
    )?;
    if let Some(reason) = &res.abort {
        #[derive(Serialize)]
        struct Diagnostic<'a> {
            reason: &'a str,
            last_audit: &'a Audit,
            solver: SolverSummary,
        }
        out.write_json(
            "diagnostic.json",
            &Diagnostic {
                reason,
                last_audit: &audit,
                solver: summary(&res),
            },
        )?;
        out.write("trace.jsonl", &res.trace_jsonl())?;
        out.finish()?;
        return Err(Failure {
            code: Failure::NUMERICAL,
            message: format!("solver aborted: {reason}"),
        });
    }
    if !res.converged {
        eprintln!(
            "warning: no convergence after {} outer iterations",
            res.outer_iters
        );
    }
    out.write("waveform.csv", &res.time.to_csv())?;
    out.write_json(
        "audit.json",
        &AuditFile {
            audit: &audit,
            margins: &margins,
            solver: Some(summary(&res)),
        },
    )?;
    out.write("trace.jsonl", &res.trace_jsonl())?;
    out.finish()
}

pub fn evaluate(common: &Common, waveform: &Path, roc: bool, rmse: bool) -> CmdResult {
    let loaded = load(common)?;
    let cfg = &loaded.cfg;
    let scn = cfg.scenario(&loaded.base_dir)?;
    let xt = read_waveform(waveform, cfg)?;
    let region = cfg.solver.region(&scn.dims)?;
    let steering = scn.steering();
    let (audit, margins) = audit_waveform(&scn, &xt, &region)?;
    let map = waveform_ambiguity(&xt, &steering, &region)?;

    let reference = Reference::new(&xt, &steering)?;
    let target = cfg.eval.target;
    let rd = range_doppler_map(&reference.echo(&[target])?, &reference)?;

    let mut out = OutputDir::create(
        &common.out,
        "evaluate",
        &config_identity(&loaded, common),
        cfg.seed,
    )?;
    out.write("ambiguity.csv", &map.to_csv())?;
    out.write("margins.csv", &margins.per_symbol_csv(&scn.dims))?;
    out.write("range_doppler.csv", &rd.to_csv())?;

    #[derive(Serialize)]
    struct RangeDopplerSummary {
        target_delay: usize,
        target_doppler: usize,
        peak_delay: usize,
        peak_doppler: usize,
        peak_to_sidelobe: f64,
    }
    #[derive(Serialize)]
    struct EvalFile<'a> {
        waveform_sha256: String,
        #[serde(flatten)]
        audit: AuditFile<'a>,
        range_doppler: RangeDopplerSummary,
    }
    let waveform_text = std::fs::read(waveform).map_err(|e| Failure::io(waveform, e))?;
    out.write_json(
        "audit.json",
        &EvalFile {
            waveform_sha256: sha256_hex(&waveform_text),
            audit: AuditFile {
                audit: &audit,
                margins: &margins,
                solver: None,
            },
            range_doppler: RangeDopplerSummary {
                target_delay: target.delay,
                target_doppler: target.doppler,
                peak_delay: rd.peak.0,
                peak_doppler: rd.peak.1,
                peak_to_sidelobe: rd.peak_to_sidelobe(),
            },
        },
    )?;

    let e = &cfg.eval;
    if roc {
        let setup = DetectionSetup {
            target,
            snr_db: e.detection_snr_db.clone(),
            thresholds: e.thresholds.clone(),
            pfa_grid: e.pfa_grid.clone(),
            trials: e.trials,
            guard: e.guard,
            seed: e.seed,
        };
        let table = monte_carlo_detection(&reference, &setup)?;
        out.write("roc.csv", &table.to_csv())?;
        out.write("pd_at_pfa.csv", &table.operating_points_csv())?;
    }
    if rmse {
        let snrs: Vec<Option<f64>> = std::iter::once(None)
            .chain(e.rmse_snr_db.iter().copied().map(Some))
            .collect();
        let table = monte_carlo_rmse(&reference, target, &snrs, e.trials, e.seed)?;
        out.write("rmse.csv", &table.to_csv())?;
    }
    out.finish()
}

fn pick_axis(cli: Option<&str>, from_cfg: Option<SweepAxis>) -> Result<SweepAxis, Failure> {
    match (cli, from_cfg) {
        (Some(s), _) => Ok(s.parse()?),
        (None, Some(a)) => Ok(a),
        (None, None) => Err(Failure::config(
            "no axis given: pass --axis or add a [sweep]/[bench] table",
        )),
    }
}

pub fn sweep(
    common: &Common,
    axis: Option<&str>,
    values: Option<Vec<usize>>,
    trials: Option<usize>,
) -> CmdResult {
    let loaded = load(common)?;
    let cfg = &loaded.cfg;
    let section = cfg.sweep.as_ref();
    let axis = pick_axis(axis, section.map(|s| s.axis))?;
    let values = values
        .or_else(|| section.map(|s| s.values.clone()))
        .ok_or_else(|| Failure::config("no sweep values: pass --values or set sweep.values"))?;
    let trials = trials.or(section.map(|s| s.trials)).unwrap_or(1);
    if values.is_empty() || trials == 0 {
        return Err(Failure::config(
            "sweep needs at least one value and one trial",
        ));
    }

    let table = solver::sweep(
        |dims, seed| cfg.scenario_for(dims, seed, &loaded.base_dir),
        cfg.dims,
        &cfg.solver,
        axis,
        &values,
        trials,
        cfg.seed,
    );
    for row in table.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: {}={} trial {} failed: {}",
            row.axis,
            row.value,
            row.trial,
            row.error.as_deref().unwrap_or_default()
        );
    }
    let mut out = OutputDir::create(
        &common.out,
        "sweep",
        &config_identity(&loaded, common),
        cfg.seed,
    )?;
    out.write("sweep.csv", &table.to_csv())?;
    let mut means = String::from("value,mean_normalized_isl,successes\n");
    for (v, mean, n) in table.means() {
        means.push_str(&format!("{v},{},{n}\n", Real(mean)));
    }
    out.write("sweep_means.csv", &means)?;
    out.finish()?;
    if table.failures() == table.rows.len() {
        return Err(Failure {
            code: Failure::NUMERICAL,
            message: format!("all {} sweep points failed", table.rows.len()),
        });
    }
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Serialize)]
struct Environment {
    tool: &'static str,
    version: &'static str,
    os: &'static str,
    arch: &'static str,
    available_parallelism: usize,
    rayon_threads: usize,
    debug_assertions: bool,
}

pub fn bench(
    common: &Common,
    axis: Option<&str>,
    values: Option<Vec<usize>>,
    repetitions: Option<usize>,
) -> CmdResult {
    let loaded = load(common)?;
    let cfg = &loaded.cfg;
    let section = cfg.bench.as_ref();
    let axis = pick_axis(axis, section.map(|b| b.axis))?;
    let values = values
        .or_else(|| section.map(|b| b.values.clone()))
        .ok_or_else(|| Failure::config("no bench values: pass --values or set bench.values"))?;
    let repetitions = repetitions.or(section.map(|b| b.repetitions)).unwrap_or(3);
    if values.is_empty() {
        return Err(Failure::config("bench needs at least one value"));
    }
    if repetitions < 3 {
        return Err(Failure::config(
            "bench needs at least 3 repetitions for a median",
        ));
    }

    let mut csv = String::from(
        "axis,value,repetitions,median_seconds,median_seconds_per_outer,median_seconds_per_inner,\
         outer_iters,inner_iters,normalized_isl,waveform_sha256,numerics_identical\n",
    );
    for &value in &values {
        let dims = axis.apply(cfg.dims, value)?;
        let scn = cfg.scenario_for(dims, cfg.seed, &loaded.base_dir)?;
        let mut seconds = Vec::with_capacity(repetitions);
        let mut digests = Vec::with_capacity(repetitions);
        let mut last = None;
        for _ in 0..repetitions {
            let started = Instant::now();
            let res = solve_checked(&scn, cfg)?;
            seconds.push(started.elapsed().as_secs_f64());
            digests.push(sha256_hex(res.time.to_csv().as_bytes()));
            last = Some(res);
        }
        let res = last.expect("at least one repetition");
        let inner = inner_iterations(&res.trace).max(1);
        let outer = res.outer_iters.max(1);
        let mut per_outer: Vec<f64> = seconds.iter().map(|s| s / outer as f64).collect();
        let mut per_inner: Vec<f64> = seconds.iter().map(|s| s / inner as f64).collect();
        let identical = digests.iter().all(|d| *d == digests[0]);
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            axis.name(),
            value,
            repetitions,
            median(&mut seconds),
            Real(median(&mut per_outer)),
            Real(median(&mut per_inner)),
            res.outer_iters,
            inner,
            Real(res.audit.normalized_isl),
            digests[0],
            identical
        ));
    }

    let mut out = OutputDir::create(
        &common.out,
        "bench",
        &config_identity(&loaded, common),
        cfg.seed,
    )?;
    out.write("bench.csv", &csv)?;
    out.write_json(
        "environment.json",
        &Environment {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            available_parallelism: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
            rayon_threads: rayon::current_num_threads(),
            debug_assertions: cfg!(debug_assertions),
        },
    )?;
    out.finish()
}

pub fn baseline(
    common: &Common,
    kind: BaselineKind,
    root: u64,
    mapping: Mapping,
    seed: Option<u64>,
) -> CmdResult {
    let loaded = load(common)?;
    let cfg = &loaded.cfg;
    let scn = cfg.scenario(&loaded.base_dir)?;
    let steering = scn.steering();
    let xt = match kind {
        BaselineKind::Zc => {
            let mapping = match mapping {
                Mapping::Time => ZcMapping::Time,
                Mapping::Frequency => ZcMapping::Frequency,
            };
            zc_waveform(scn.dims, scn.p_tx, &steering, root, mapping)?
        }
        BaselineKind::Random => random_cm_waveform(scn.dims, scn.p_tx, seed.unwrap_or(cfg.seed))?,
    };
    let region = cfg.solver.region(&scn.dims)?;
    let (audit, margins) = audit_waveform(&scn, &xt, &region)?;
    let mut out = OutputDir::create(
        &common.out,
        "baseline",
        &config_identity(&loaded, common),
        seed.unwrap_or(cfg.seed),
    )?;
    out.write("waveform.csv", &xt.to_csv())?;
    out.write_json(
        "audit.json",
        &AuditFile {
            audit: &audit,
            margins: &margins,
            solver: None,
        },
    )?;
    out.finish()
}
