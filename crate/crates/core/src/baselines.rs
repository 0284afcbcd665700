//! Reference waveforms: a beam-aligned Zadoff-Chu radar waveform and a
//! random-phase constant-modulus control.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlockDft, Dimensions, Domain, SteeringVector, WaveformGrid};
use crate::rng::{self, tag};

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `r_p[n] = exp(-j pi p n (n + 1) / N)` for `0 <= n < N`.
pub fn zc_sequence(length: usize, root: u64) -> Result<Vec<Complex64>> {
    if length == 0 {
        return Err(Error::invalid("ZC length must be positive"));
    }
    if gcd(root, length as u64) != 1 {
        return Err(Error::invalid(format!(
            "ZC root {root} is not coprime to length {length}"
        )));
    }
    let n_len = length as u128;
    let p = root as u128 % (2 * n_len);
    Ok((0..n_len)
        .map(|n| {
            // reduce p n (n+1) mod 2N exactly before scaling, so long
            // sequences keep full phase accuracy
            let k = (p * ((n * (n + 1)) % (2 * n_len))) % (2 * n_len);
            Complex64::from_polar(1.0, -PI * k as f64 / length as f64)
        })
        .collect())
}

/// Which grid axis order the scalar sequence fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZcMapping {
    /// `xt[m, c, :] = r * a * zc[c + m n_sc]`: constant modulus for every
    /// configuration; the beam power grid is flat when `n_sym = 1` and the
    /// length is odd.
    #[default]
    Time,
    /// `x[n, m, :] = r * a * zc[n + m n_sc]`: flat beam power grid always,
    /// constant modulus in time only for some configurations, which are the
    /// only ones accepted.
    Frequency,
}

/// Radar-only ZC waveform of length `n_sym * n_sc`, phase-aligned across
/// antennas to the steering vector so the beam-projected sample is
/// `n_tx * r * zc`.
pub fn zc_waveform(
    dims: Dimensions,
    p_tx: f64,
    steering: &SteeringVector,
    root: u64,
    mapping: ZcMapping,
) -> Result<WaveformGrid> {
    dims.validate()?;
    if steering.len() != dims.n_tx {
        return Err(Error::DimensionMismatch {
            axis: "n_tx",
            expected: dims.n_tx,
            got: steering.len(),
        });
    }
    let zc = zc_sequence(dims.n_blocks(), root)?;
    let r = dims.cm_radius(p_tx);
    let mut data = Vec::with_capacity(dims.n_tot());
    for m in 0..dims.n_sym {
        for n in 0..dims.n_sc {
            let z = zc[n + m * dims.n_sc] * r;
            data.extend(steering.entries().iter().map(|ap| ap * z));
        }
    }
    match mapping {
        ZcMapping::Time => WaveformGrid::new(Domain::Time, dims, data),
        ZcMapping::Frequency => {
            let x = WaveformGrid::new(Domain::Frequency, dims, data)?;
            let xt = BlockDft::new(dims).to_time_domain(&x)?;
            let deviation = xt.modulus_deviation(r);
            if deviation > 1e-10 {
                return Err(Error::invalid(format!(
                    "frequency-mapped ZC is not constant modulus for this grid \
                     (relative deviation {deviation:.3e})"
                )));
            }
            Ok(xt)
        }
    }
}

/// i.i.d. uniform phases at modulus `sqrt(p_tx / n_tot)`.
pub fn random_cm_waveform(dims: Dimensions, p_tx: f64, seed: u64) -> Result<WaveformGrid> {
    dims.validate()?;
    let r = dims.cm_radius(p_tx);
    let mut rng = rng::stream(seed, tag::BASELINE);
    let data = (0..dims.n_tot())
        .map(|_| Complex64::from_polar(r, rng.random_range(-PI..PI)))
        .collect();
    WaveformGrid::new(Domain::Time, dims, data)
}
