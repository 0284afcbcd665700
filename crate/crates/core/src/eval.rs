//! Sensing evaluation on the beam-projected receive stream: echo simulation,
//! range-Doppler processing and Monte-Carlo detection and estimation.
//!
//! The receiver sees one scalar per `(n, m)`: the transmitted beam sample
//! `c[n, m] = a^H x_{n,m}`, delayed and Doppler shifted by each target, plus
//! circular white noise. Matched processing multiplies by `conj(c)` and takes
//! a 2-D DFT, so a noiseless single target at `(l*, nu*)` produces
//! `|amp * chi(l - l*, nu - nu*)|^2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{BeamProjectedGrid, DelayDopplerTransform};
use crate::error::{Error, Result};
use crate::model::{BlockDft, Dimensions, Domain, SteeringVector, WaveformGrid};
use crate::numeric::{pairwise_sum, Real};
use crate::rng;

/// A point target on the delay-Doppler lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub delay: usize,
    pub doppler: usize,
    #[serde(default = "unit_amplitude")]
    pub amplitude: Complex64,
}

fn unit_amplitude() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

impl Target {
    pub fn unit(delay: usize, doppler: usize) -> Self {
        Target {
            delay,
            doppler,
            amplitude: unit_amplitude(),
        }
    }
}

/// Targets plus noise. `snr_db` is the per-sample SNR of a unit-amplitude
/// echo, `mean |c|^2 / noise_var`; `None` means noiseless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoModel {
    pub targets: Vec<Target>,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

/// Beam-projected transmit samples used both to synthesize and to match echoes.
#[derive(Debug, Clone)]
pub struct Reference {
    dims: Dimensions,
    c: Vec<Complex64>,
    mean_power: f64,
    transform: DelayDopplerTransform,
}

impl Reference {
    pub fn new(xt: &WaveformGrid, a: &SteeringVector) -> Result<Self> {
        let dims = *xt.dims();
        if a.len() != dims.n_tx {
            return Err(Error::DimensionMismatch {
                axis: "n_tx",
                expected: dims.n_tx,
                got: a.len(),
            });
        }
        let freq = match xt.domain() {
            Domain::Time => BlockDft::new(dims).to_frequency_domain(xt)?,
            Domain::Frequency => xt.clone(),
        };
        let c: Vec<Complex64> = freq
            .data()
            .chunks_exact(dims.n_tx)
            .map(|blk| a.project(blk))
            .collect();
        Ok(Self::from_samples(dims, c))
    }

    pub fn from_grid(g: &BeamProjectedGrid) -> Self {
        Self::from_samples(*g.dims(), g.c.clone())
    }

    fn from_samples(dims: Dimensions, c: Vec<Complex64>) -> Self {
        let w: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
        let mean_power = pairwise_sum(&w) / c.len() as f64;
        Reference {
            dims,
            c,
            mean_power,
            transform: DelayDopplerTransform::new(&dims),
        }
    }

    pub fn dims(&self) -> &Dimensions {
        &self.dims
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.c
    }

    /// `P_IL = sum |c|^2`.
    pub fn directional_power(&self) -> f64 {
        self.mean_power * self.c.len() as f64
    }

    /// Noise variance giving per-sample SNR `snr_db` for a unit echo.
    pub fn noise_variance(&self, snr_db: f64) -> f64 {
        self.mean_power / 10f64.powf(snr_db / 10.0)
    }

    fn check_target(&self, t: &Target) -> Result<()> {
        if t.delay >= self.dims.n_sc || t.doppler >= self.dims.n_sym {
            return Err(Error::invalid(format!(
                "target bin ({}, {}) outside the {}x{} lattice",
                t.delay, t.doppler, self.dims.n_sc, self.dims.n_sym
            )));
        }
        Ok(())
    }

    /// Noiseless echo `sum_t amp_t c[n,m] exp(-j2pi l n/Nc) exp(+j2pi nu m/Ns)`.
    pub fn echo(&self, targets: &[Target]) -> Result<Vec<Complex64>> {
        let (nc, ns) = (self.dims.n_sc, self.dims.n_sym);
        let mut rx = vec![Complex64::new(0.0, 0.0); nc * ns];
        for t in targets {
            self.check_target(t)?;
            for m in 0..ns {
                for n in 0..nc {
                    // integer phase reduction keeps the shift exact
                    let delay_phase = -2.0 * PI * ((t.delay * n) % nc) as f64 / nc as f64;
                    let doppler_phase = 2.0 * PI * ((t.doppler * m) % ns) as f64 / ns as f64;
                    let i = n + m * nc;
                    rx[i] += self.c[i]
                        * t.amplitude
                        * Complex64::from_polar(1.0, delay_phase + doppler_phase);
                }
            }
        }
        Ok(rx)
    }
}

fn add_noise(rx: &mut [Complex64], variance: f64, rng: &mut impl Rng) {
    let scale = (variance / 2.0).sqrt();
    for v in rx.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *v += Complex64::new(re, im) * scale;
    }
}

/// Receive grid for `model`, deterministic under `model.seed`.
pub fn simulate_echo(reference: &Reference, model: &EchoModel) -> Result<Vec<Complex64>> {
    let mut rx = reference.echo(&model.targets)?;
    if let Some(snr) = model.snr_db {
        let mut rng = rng::stream(model.seed, 0);
        add_noise(&mut rx, reference.noise_variance(snr), &mut rng);
    }
    Ok(rx)
}

/// `|S(l, nu)|^2` on the full lattice, stored at `nu * n_sc + l`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    n_sc: usize,
    n_sym: usize,
    power: Vec<f64>,
    pub peak: (usize, usize),
    pub peak_value: f64,
}

impl RangeDopplerMap {
    pub fn get(&self, l: usize, nu: usize) -> f64 {
        self.power[nu * self.n_sc + l]
    }

    pub fn values(&self) -> &[f64] {
        &self.power
    }

    /// Largest value outside a `guard`-bin ring (circular) around `(l, nu)`.
    pub fn max_outside(&self, l: usize, nu: usize, guard: usize) -> f64 {
        let mut best = 0.0f64;
        for v in 0..self.n_sym {
            for d in 0..self.n_sc {
                if circular_distance(d, l, self.n_sc) <= guard
                    && circular_distance(v, nu, self.n_sym) <= guard
                {
                    continue;
                }
                best = best.max(self.power[v * self.n_sc + d]);
            }
        }
        best
    }

    /// Peak over the largest value outside a one-bin ring around the peak.
    pub fn peak_to_sidelobe(&self) -> f64 {
        let side = self.max_outside(self.peak.0, self.peak.1, 1);
        if side == 0.0 {
            f64::INFINITY
        } else {
            self.peak_value / side
        }
    }

    /// Columns `l,nu,power,db` with `db` relative to the peak.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("l,nu,power,db\n");
        for nu in 0..self.n_sym {
            for l in 0..self.n_sc {
                let p = self.get(l, nu);
                let db = 10.0 * (p / self.peak_value).log10();
                out.push_str(&format!("{l},{nu},{},{}\n", Real(p), Real(db)));
            }
        }
        out
    }
}

fn circular_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b) % n;
    d.min(n - d)
}

/// Matched range-Doppler processing of `rx` against `reference`.
pub fn range_doppler_map(rx: &[Complex64], reference: &Reference) -> Result<RangeDopplerMap> {
    let (nc, ns) = (reference.dims.n_sc, reference.dims.n_sym);
    if rx.len() != nc * ns {
        return Err(Error::DimensionMismatch {
            axis: "receive grid",
            expected: nc * ns,
            got: rx.len(),
        });
    }
    let mut z: Vec<Complex64> = rx
        .iter()
        .zip(&reference.c)
        .map(|(r, c)| r * c.conj())
        .collect();
    // sum_{n,m} z exp(+j2pi l n/Nc) exp(-j2pi nu m/Ns) has the kernel of the
    // ambiguity adjoint with the roles of (n, m) and (l, nu) swapped
    reference.transform.adjoint_in_place(&mut z);
    let power: Vec<f64> = z.iter().map(|v| v.norm_sqr()).collect();
    let (idx, peak_value) =
        power
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            });
    Ok(RangeDopplerMap {
        n_sc: nc,
        n_sym: ns,
        power,
        peak: (idx % nc, idx / nc),
        peak_value,
    })
}

/// Per-trial detection statistics at one SNR, normalized by the expected
/// noise power of a map bin, `noise_var * P_IL`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionSamples {
    pub snr_db: f64,
    /// Statistic at the true target bin.
    pub target: Vec<f64>,
    /// Largest statistic outside the guard ring around the target.
    pub clutter: Vec<f64>,
}

impl DetectionSamples {
    pub fn pd(&self, threshold: f64) -> f64 {
        exceed_fraction(&self.target, threshold)
    }

    pub fn pfa(&self, threshold: f64) -> f64 {
        exceed_fraction(&self.clutter, threshold)
    }

    /// Smallest empirical threshold whose false-alarm rate is at most `pfa`.
    pub fn threshold_for_pfa(&self, pfa: f64) -> f64 {
        let mut sorted = self.clutter.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        // allow at most floor(pfa * n) exceedances
        let allowed = ((pfa * n as f64).floor() as usize).min(n);
        if allowed == n {
            return 0.0;
        }
        sorted[n - 1 - allowed]
    }
}

fn exceed_fraction(values: &[f64], threshold: f64) -> f64 {
    values.iter().filter(|&&v| v > threshold).count() as f64 / values.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSetup {
    pub target: Target,
    pub snr_db: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub pfa_grid: Vec<f64>,
    pub trials: usize,
    pub guard: usize,
    pub seed: u64,
}

fn trial_rng(seed: u64, snr_index: usize, trial: usize) -> rng::StreamRng {
    rng::stream(rng::derive_seed(seed, &[snr_index as u64]), trial as u64)
}

/// Draws `trials` target-present realizations and records the normalized
/// statistic at the target and the largest one elsewhere. Trials use their own
/// RNG streams, so different waveforms see the same noise draws.
pub fn detection_samples(
    reference: &Reference,
    target: Target,
    snr_db: f64,
    snr_index: usize,
    trials: usize,
    guard: usize,
    seed: u64,
) -> Result<DetectionSamples> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let clean = reference.echo(&[target])?;
    let variance = reference.noise_variance(snr_db);
    let norm = variance * reference.directional_power();
    let pairs: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, snr_index, trial);
            let mut rx = clean.clone();
            add_noise(&mut rx, variance, &mut rng);
            let map = range_doppler_map(&rx, reference).expect("grid sizes match");
            (
                map.get(target.delay, target.doppler) / norm,
                map.max_outside(target.delay, target.doppler, guard) / norm,
            )
        })
        .collect();
    let (target, clutter) = pairs.into_iter().unzip();
    Ok(DetectionSamples {
        snr_db,
        target,
        clutter,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocRow {
    pub snr_db: f64,
    pub threshold: f64,
    pub pd: f64,
    pub pfa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdAtPfa {
    pub snr_db: f64,
    pub pfa_target: f64,
    pub threshold: f64,
    pub pfa: f64,
    pub pd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocTable {
    pub rows: Vec<RocRow>,
    pub operating_points: Vec<PdAtPfa>,
}

impl RocTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("snr_db,threshold,pd,pfa\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.snr_db, r.threshold, r.pd, r.pfa
            ));
        }
        out
    }

    pub fn operating_points_csv(&self) -> String {
        let mut out = String::from("snr_db,pfa_target,threshold,pfa,pd\n");
        for r in &self.operating_points {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.snr_db, r.pfa_target, r.threshold, r.pfa, r.pd
            ));
        }
        out
    }
}

pub fn monte_carlo_detection(reference: &Reference, setup: &DetectionSetup) -> Result<RocTable> {
    let mut rows = Vec::new();
    let mut operating_points = Vec::new();
    for (si, &snr) in setup.snr_db.iter().enumerate() {
        let s = detection_samples(
            reference,
            setup.target,
            snr,
            si,
            setup.trials,
            setup.guard,
            setup.seed,
        )?;
        for &threshold in &setup.thresholds {
            rows.push(RocRow {
                snr_db: snr,
                threshold,
                pd: s.pd(threshold),
                pfa: s.pfa(threshold),
            });
        }
        for &pfa_target in &setup.pfa_grid {
            let threshold = s.threshold_for_pfa(pfa_target);
            operating_points.push(PdAtPfa {
                snr_db: snr,
                pfa_target,
                threshold,
                pfa: s.pfa(threshold),
                pd: s.pd(threshold),
            });
        }
    }
    Ok(RocTable {
        rows,
        operating_points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmseRow {
    /// `None` for the noiseless row.
    pub snr_db: Option<f64>,
    pub trials: usize,
    pub rmse_delay: f64,
    pub rmse_doppler: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseTable {
    pub rows: Vec<RmseRow>,
}

impl RmseTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("snr_db,trials,rmse_delay_bins,rmse_doppler_bins\n");
        for r in &self.rows {
            let snr = r
                .snr_db
                .map_or_else(|| "inf".to_string(), |s| s.to_string());
            out.push_str(&format!(
                "{snr},{},{},{}\n",
                r.trials, r.rmse_delay, r.rmse_doppler
            ));
        }
        out
    }
}

/// Signed circular bin error in `[-floor(n/2), ceil(n/2) - 1]`.
fn circular_error(estimate: usize, truth: usize, n: usize) -> i64 {
    let half = (n / 2) as i64;
    let raw = (estimate as i64 - truth as i64).rem_euclid(n as i64);
    (raw + half).rem_euclid(n as i64) - half
}

/// Mean squared circular error of a uniformly random guess over `n` bins.
pub fn uniform_guess_mse(n: usize) -> f64 {
    let lo = -((n / 2) as i64);
    let hi = n.div_ceil(2) as i64 - 1;
    (lo..=hi).map(|d| (d * d) as f64).sum::<f64>() / n as f64
}

/// Argmax delay and Doppler RMSE in bins for each SNR in `snr_db` (`None` is
/// noiseless).
pub fn monte_carlo_rmse(
    reference: &Reference,
    target: Target,
    snr_db: &[Option<f64>],
    trials: usize,
    seed: u64,
) -> Result<RmseTable> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let clean = reference.echo(&[target])?;
    let (nc, ns) = (reference.dims.n_sc, reference.dims.n_sym);
    let mut rows = Vec::new();
    for (si, snr) in snr_db.iter().enumerate() {
        let runs = if snr.is_some() { trials } else { 1 };
        let errors: Vec<(f64, f64)> = (0..runs)
            .into_par_iter()
            .map(|trial| {
                let mut rx = clean.clone();
                if let Some(s) = snr {
                    let mut rng = trial_rng(seed, si, trial);
                    add_noise(&mut rx, reference.noise_variance(*s), &mut rng);
                }
                let map = range_doppler_map(&rx, reference).expect("grid sizes match");
                let dl = circular_error(map.peak.0, target.delay, nc) as f64;
                let dv = circular_error(map.peak.1, target.doppler, ns) as f64;
                (dl * dl, dv * dv)
            })
            .collect();
        let (dl, dv): (Vec<f64>, Vec<f64>) = errors.into_iter().unzip();
        rows.push(RmseRow {
            snr_db: *snr,
            trials: runs,
            rmse_delay: (pairwise_sum(&dl) / runs as f64).sqrt(),
            rmse_doppler: (pairwise_sum(&dv) / runs as f64).sqrt(),
        });
    }
    Ok(RmseTable { rows })
}
