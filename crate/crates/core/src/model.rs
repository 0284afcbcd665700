//! Index layout, block DFT and steering vector shared by every other module.
//!
//! A waveform is stored as one flat complex vector. Entry `(m, n, a)` (symbol,
//! subcarrier or time sample, antenna) lives at `m * n_sc * n_tx + n * n_tx + a`.
//! No other layout exists in the crate.

use std::fmt::Write as _;
use std::io::BufRead;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dimensions {
    pub n_tx: usize,
    pub n_sc: usize,
    pub n_sym: usize,
    pub n_users: usize,
}

impl Dimensions {
    pub fn new(n_tx: usize, n_sc: usize, n_sym: usize, n_users: usize) -> Result<Self> {
        let dims = Dimensions {
            n_tx,
            n_sc,
            n_sym,
            n_users,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_tx", self.n_tx),
            ("n_sc", self.n_sc),
            ("n_sym", self.n_sym),
            ("n_users", self.n_users),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Total number of complex entries, `n_sym * n_sc * n_tx`.
    #[inline]
    pub fn n_tot(&self) -> usize {
        self.n_sym * self.n_sc * self.n_tx
    }

    /// Number of (subcarrier, symbol) blocks.
    #[inline]
    pub fn n_blocks(&self) -> usize {
        self.n_sym * self.n_sc
    }

    /// Number of stacked QoS constraints (two per user per block).
    #[inline]
    pub fn n_constraints(&self) -> usize {
        2 * self.n_users * self.n_blocks()
    }

    /// Flat index of antenna `a` in block `(n, m)`.
    #[inline]
    pub fn index(&self, m: usize, n: usize, a: usize) -> usize {
        m * self.n_sc * self.n_tx + n * self.n_tx + a
    }

    #[inline]
    pub fn unflatten(&self, t: usize) -> (usize, usize, usize) {
        let a = t % self.n_tx;
        let n = (t / self.n_tx) % self.n_sc;
        let m = t / (self.n_tx * self.n_sc);
        (m, n, a)
    }

    /// Block index `n + m * n_sc`, which is also the offset of the block in
    /// units of `n_tx`.
    #[inline]
    pub fn block(&self, n: usize, m: usize) -> usize {
        n + m * self.n_sc
    }

    /// Per-entry modulus `sqrt(p_tx / n_tot)` of a constant-modulus waveform.
    pub fn cm_radius(&self, p_tx: f64) -> f64 {
        (p_tx / self.n_tot() as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Frequency,
    Time,
}

impl Domain {
    fn as_str(self) -> &'static str {
        match self {
            Domain::Frequency => "frequency",
            Domain::Time => "time",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveformGrid {
    domain: Domain,
    dims: Dimensions,
    data: Vec<Complex64>,
}

impl WaveformGrid {
    pub fn new(domain: Domain, dims: Dimensions, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dims.n_tot() {
            return Err(Error::DimensionMismatch {
                axis: "n_tot",
                expected: dims.n_tot(),
                got: data.len(),
            });
        }
        Ok(WaveformGrid { domain, dims, data })
    }

    pub fn zeros(domain: Domain, dims: Dimensions) -> Self {
        WaveformGrid {
            domain,
            dims,
            data: vec![Complex64::new(0.0, 0.0); dims.n_tot()],
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dims(&self) -> &Dimensions {
        &self.dims
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, m: usize, n: usize, a: usize) -> Complex64 {
        self.data[self.dims.index(m, n, a)]
    }

    /// Antenna vector of block `(n, m)`.
    pub fn block(&self, n: usize, m: usize) -> &[Complex64] {
        let start = self.dims.block(n, m) * self.dims.n_tx;
        &self.data[start..start + self.dims.n_tx]
    }

    pub fn expect_domain(&self, expected: Domain) -> Result<()> {
        if self.domain != expected {
            return Err(Error::WrongDomain {
                expected,
                got: self.domain,
            });
        }
        Ok(())
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Largest relative deviation of any entry's modulus from `radius`.
    pub fn modulus_deviation(&self, radius: f64) -> f64 {
        self.data
            .iter()
            .map(|z| (z.norm() - radius).abs() / radius)
            .fold(0.0, f64::max)
    }

    pub fn is_constant_modulus(&self, radius: f64, tolerance: f64) -> bool {
        self.domain == Domain::Time && self.modulus_deviation(radius) <= tolerance
    }

    /// CSV with a `# domain=...` header line followed by `m,n,a,re,im` rows.
    pub fn to_csv(&self) -> String {
        let d = &self.dims;
        let mut out = String::with_capacity(32 * self.data.len());
        let _ = writeln!(
            out,
            "# domain={} n_tx={} n_sc={} n_sym={}",
            self.domain.as_str(),
            d.n_tx,
            d.n_sc,
            d.n_sym
        );
        out.push_str("m,n,a,re,im\n");
        for (t, z) in self.data.iter().enumerate() {
            let (m, n, a) = d.unflatten(t);
            let _ = writeln!(out, "{m},{n},{a},{},{}", z.re, z.im);
        }
        out
    }

    /// Parses the format written by [`WaveformGrid::to_csv`]. `dims` supplies
    /// the user count, which the CSV does not carry; the other axes must agree.
    pub fn from_csv(reader: impl BufRead, dims: Dimensions) -> Result<Self> {
        let mut domain = None;
        let mut data = vec![Complex64::new(0.0, 0.0); dims.n_tot()];
        let mut seen = vec![false; dims.n_tot()];
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(header) = trimmed.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    let Some((k, v)) = kv.split_once('=') else {
                        continue;
                    };
                    let parse_usize = |v: &str| {
                        v.parse::<usize>().map_err(|e| Error::Parse {
                            line: lineno,
                            msg: format!("{k}: {e}"),
                        })
                    };
                    match k {
                        "domain" => {
                            domain = Some(match v {
                                "frequency" => Domain::Frequency,
                                "time" => Domain::Time,
                                other => {
                                    return Err(Error::Parse {
                                        line: lineno,
                                        msg: format!("unknown domain `{other}`"),
                                    })
                                }
                            })
                        }
                        "n_tx" => check_axis("n_tx", dims.n_tx, parse_usize(v)?)?,
                        "n_sc" => check_axis("n_sc", dims.n_sc, parse_usize(v)?)?,
                        "n_sym" => check_axis("n_sym", dims.n_sym, parse_usize(v)?)?,
                        _ => {}
                    }
                }
                continue;
            }
            if trimmed.starts_with("m,") {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 5 fields, found {}", fields.len()),
                });
            }
            let bad = |what: &str| Error::Parse {
                line: lineno,
                msg: format!("malformed {what}"),
            };
            let m: usize = fields[0].parse().map_err(|_| bad("m"))?;
            let n: usize = fields[1].parse().map_err(|_| bad("n"))?;
            let a: usize = fields[2].parse().map_err(|_| bad("a"))?;
            let re: f64 = fields[3].parse().map_err(|_| bad("re"))?;
            let im: f64 = fields[4].parse().map_err(|_| bad("im"))?;
            if m >= dims.n_sym || n >= dims.n_sc || a >= dims.n_tx {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("index ({m},{n},{a}) out of range"),
                });
            }
            let t = dims.index(m, n, a);
            data[t] = Complex64::new(re, im);
            seen[t] = true;
        }
        let domain = domain.ok_or(Error::Parse {
            line: 1,
            msg: "missing `# domain=` header".into(),
        })?;
        if let Some(missing) = seen.iter().position(|s| !s) {
            let (m, n, a) = dims.unflatten(missing);
            return Err(Error::Parse {
                line: 0,
                msg: format!("no row for entry ({m},{n},{a})"),
            });
        }
        WaveformGrid::new(domain, dims, data)
    }
}

fn check_axis(axis: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            axis,
            expected,
            got,
        });
    }
    Ok(())
}

/// The unitary block transform `I_{n_sym} (x) F_{n_sc} (x) I_{n_tx}`.
///
/// Only the subcarrier axis is transformed; each `(m, a)` fiber of length
/// `n_sc` gets an independent normalized DFT.
#[derive(Clone)]
pub struct BlockDft {
    dims: Dimensions,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for BlockDft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlockDft")
            .field("dims", &self.dims)
            .finish()
    }
}

impl BlockDft {
    pub fn new(dims: Dimensions) -> Self {
        let mut planner = FftPlanner::new();
        BlockDft {
            dims,
            forward: planner.plan_fft_forward(dims.n_sc),
            inverse: planner.plan_fft_inverse(dims.n_sc),
            scale: 1.0 / (dims.n_sc as f64).sqrt(),
        }
    }

    pub fn dims(&self) -> &Dimensions {
        &self.dims
    }

    /// `x <- F x` on a flat vector.
    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.apply(data, &self.forward);
    }

    /// `x <- F^H x` on a flat vector.
    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inverse);
    }

    fn apply(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let d = &self.dims;
        debug_assert_eq!(data.len(), d.n_tot());
        let (nc, nt) = (d.n_sc, d.n_tx);
        let mut fiber = vec![Complex64::new(0.0, 0.0); nc * nt];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for m in 0..d.n_sym {
            let sym = &mut data[m * nc * nt..(m + 1) * nc * nt];
            // transpose (n, a) -> (a, n) so each fiber is contiguous
            for n in 0..nc {
                for a in 0..nt {
                    fiber[a * nc + n] = sym[n * nt + a];
                }
            }
            fft.process_with_scratch(&mut fiber, &mut scratch);
            for n in 0..nc {
                for a in 0..nt {
                    sym[n * nt + a] = fiber[a * nc + n] * self.scale;
                }
            }
        }
    }

    fn check(&self, x: &WaveformGrid, expected: Domain) -> Result<()> {
        x.expect_domain(expected)?;
        check_axis("n_tx", self.dims.n_tx, x.dims.n_tx)?;
        check_axis("n_sc", self.dims.n_sc, x.dims.n_sc)?;
        check_axis("n_sym", self.dims.n_sym, x.dims.n_sym)?;
        Ok(())
    }

    pub fn to_time_domain(&self, x: &WaveformGrid) -> Result<WaveformGrid> {
        self.check(x, Domain::Frequency)?;
        let mut data = x.data.clone();
        self.inverse_in_place(&mut data);
        Ok(WaveformGrid {
            domain: Domain::Time,
            dims: x.dims,
            data,
        })
    }

    pub fn to_frequency_domain(&self, xt: &WaveformGrid) -> Result<WaveformGrid> {
        self.check(xt, Domain::Time)?;
        let mut data = xt.data.clone();
        self.forward_in_place(&mut data);
        Ok(WaveformGrid {
            domain: Domain::Frequency,
            dims: xt.dims,
            data,
        })
    }
}

/// Uniform linear array response toward `angle_rad`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub angle_rad: f64,
    pub spacing_wavelengths: f64,
    entries: Vec<Complex64>,
}

impl SteeringVector {
    pub fn new(angle_rad: f64, n_tx: usize, spacing_wavelengths: f64) -> Result<Self> {
        if n_tx == 0 {
            return Err(Error::invalid("steering vector needs at least one antenna"));
        }
        if !angle_rad.is_finite() || !spacing_wavelengths.is_finite() {
            return Err(Error::invalid("steering angle and spacing must be finite"));
        }
        let phase = 2.0 * std::f64::consts::PI * angle_rad.sin() * spacing_wavelengths;
        let entries = (0..n_tx)
            .map(|p| {
                if p == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::from_polar(1.0, phase * p as f64)
                }
            })
            .collect();
        Ok(SteeringVector {
            angle_rad,
            spacing_wavelengths,
            entries,
        })
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `a^H v`.
    #[inline]
    pub fn project(&self, v: &[Complex64]) -> Complex64 {
        self.entries.iter().zip(v).map(|(a, x)| a.conj() * x).sum()
    }
}
