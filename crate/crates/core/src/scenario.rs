//! Scenario data: dimensions, power budget, PSK frame and user channels.

use std::f64::consts::PI;
use std::io::BufRead;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dimensions, SteeringVector};
use crate::rng::{self, tag};

/// An `order`-PSK constellation.
///
/// Points sit at `offset + 2*pi*q/order`. The default offset is `pi/order`
/// for `order >= 4` (QPSK on the diagonals) and `0` for BPSK (`+1`, `-1`).
/// The safety margin is rotation invariant, so the offset only fixes which
/// symbols the generator draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Psk {
    order: u32,
    offset: f64,
}

impl Psk {
    pub fn new(order: u32) -> Result<Self> {
        if order < 2 || !order.is_power_of_two() {
            return Err(Error::invalid(format!(
                "PSK order must be a power of two >= 2, got {order}"
            )));
        }
        let offset = if order == 2 { 0.0 } else { PI / order as f64 };
        Ok(Psk { order, offset })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Half the angular width of a decision region, `pi / order`.
    pub fn phi(&self) -> f64 {
        PI / self.order as f64
    }

    pub fn point(&self, q: u32) -> Complex64 {
        Complex64::from_polar(1.0, self.offset + 2.0 * PI * q as f64 / self.order as f64)
    }

    pub fn points(&self) -> Vec<Complex64> {
        (0..self.order).map(|q| self.point(q)).collect()
    }

    /// Whether `s` is a constellation point within `tol`.
    pub fn contains(&self, s: Complex64, tol: f64) -> bool {
        (0..self.order).any(|q| (self.point(q) - s).norm() <= tol)
    }
}

/// PSK symbols `s_{n,m,k}` stored at `(m * n_sc + n) * n_users + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    dims: Dimensions,
    data: Vec<Complex64>,
}

impl SymbolFrame {
    pub fn new(dims: Dimensions, data: Vec<Complex64>) -> Result<Self> {
        let expected = dims.n_blocks() * dims.n_users;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                axis: "symbols",
                expected,
                got: data.len(),
            });
        }
        Ok(SymbolFrame { dims, data })
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize, k: usize) -> Complex64 {
        self.data[(m * self.dims.n_sc + n) * self.dims.n_users + k]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
}

/// Draws an i.i.d. uniform PSK frame, deterministic under `seed`.
pub fn random_psk_frame(dims: Dimensions, psk_order: u32, seed: u64) -> Result<SymbolFrame> {
    let psk = Psk::new(psk_order)?;
    let mut rng = rng::stream(seed, tag::SYMBOLS);
    let data = (0..dims.n_blocks() * dims.n_users)
        .map(|_| psk.point(rng.random_range(0..psk.order())))
        .collect();
    SymbolFrame::new(dims, data)
}

/// Frequency-domain user channels `h_{n,k}`, one length-`n_tx` vector per
/// (subcarrier, user), stored row `n * n_users + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channels {
    dims: Dimensions,
    data: Vec<Complex64>,
}

impl Channels {
    pub fn new(dims: Dimensions, data: Vec<Complex64>) -> Result<Self> {
        let expected = dims.n_sc * dims.n_users * dims.n_tx;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                axis: "channels",
                expected,
                got: data.len(),
            });
        }
        Ok(Channels { dims, data })
    }

    /// i.i.d. `CN(0, 1)` entries.
    pub fn rayleigh(dims: Dimensions, seed: u64) -> Self {
        let mut rng = rng::stream(seed, tag::CHANNELS);
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let data = (0..dims.n_sc * dims.n_users * dims.n_tx)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re * scale, im * scale)
            })
            .collect();
        Channels { dims, data }
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> &[Complex64] {
        let start = (n * self.dims.n_users + k) * self.dims.n_tx;
        &self.data[start..start + self.dims.n_tx]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// One row per `(n, k)` in order `n * n_users + k`, each holding
    /// interleaved `re,im` pairs for the antennas.
    pub fn from_csv(reader: impl BufRead, dims: Dimensions) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.n_sc * dims.n_users * dims.n_tx);
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let values: Vec<f64> = trimmed
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: idx + 1,
                    msg: e.to_string(),
                })?;
            if values.len() != 2 * dims.n_tx {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected {} values, found {}", 2 * dims.n_tx, values.len()),
                });
            }
            data.extend(values.chunks(2).map(|p| Complex64::new(p[0], p[1])));
        }
        Channels::new(dims, data)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.data.chunks(self.dims.n_tx) {
            let fields: Vec<String> = row
                .iter()
                .flat_map(|z| [z.re.to_string(), z.im.to_string()])
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Continuous-time OFDM parameters. Carried for axis labelling only.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OfdmTiming {
    pub subcarrier_spacing_hz: f64,
    pub cp_duration_s: f64,
}

impl OfdmTiming {
    pub fn symbol_duration_s(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz
    }

    pub fn total_symbol_duration_s(&self) -> f64 {
        self.symbol_duration_s() + self.cp_duration_s
    }

    /// Range of one delay bin in metres.
    pub fn range_bin_m(&self, n_sc: usize) -> f64 {
        299_792_458.0 / (2.0 * n_sc as f64 * self.subcarrier_spacing_hz)
    }

    /// Doppler of one bin in Hz.
    pub fn doppler_bin_hz(&self, n_sym: usize) -> f64 {
        1.0 / (n_sym as f64 * self.total_symbol_duration_s())
    }
}

/// Safety-margin threshold `sigma * sin(phi) * sqrt(Gamma)`.
pub fn safety_margin_threshold(noise_power: f64, psk: &Psk, sinr_db: f64) -> f64 {
    noise_power.sqrt() * psk.phi().sin() * 10f64.powf(sinr_db / 10.0).sqrt()
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub dims: Dimensions,
    pub p_tx: f64,
    pub p0: f64,
    pub theta0: f64,
    pub spacing: f64,
    pub psk: Psk,
    pub gamma: f64,
    pub noise_power: f64,
    pub channels: Channels,
    pub symbols: SymbolFrame,
    pub rng_seed: u64,
    pub timing: Option<OfdmTiming>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if !(self.p_tx > 0.0 && self.p_tx.is_finite()) {
            return Err(Error::invalid("p_tx must be positive"));
        }
        if !(self.p0 >= 0.0 && self.p0.is_finite()) {
            return Err(Error::invalid("p0 must be non-negative"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma must be non-negative"));
        }
        if self.noise_power.is_nan() || self.noise_power < 0.0 {
            return Err(Error::invalid("noise_power must be non-negative"));
        }
        if self.channels.dims != self.dims {
            return Err(Error::invalid("channel dimensions do not match scenario"));
        }
        if self.symbols.dims != self.dims {
            return Err(Error::invalid("symbol dimensions do not match scenario"));
        }
        if let Some(bad) = self
            .symbols
            .data
            .iter()
            .position(|s| !self.psk.contains(*s, 1e-9))
        {
            return Err(Error::invalid(format!(
                "symbol {bad} is not a {}-PSK point",
                self.psk.order()
            )));
        }
        Ok(())
    }

    pub fn steering(&self) -> SteeringVector {
        SteeringVector::new(self.theta0, self.dims.n_tx, self.spacing)
            .expect("validated scenario has a well-formed steering vector")
    }

    pub fn radius(&self) -> f64 {
        self.dims.cm_radius(self.p_tx)
    }
}
