//! Discrete periodic ambiguity function, integrated sidelobe level and
//! directional power.
//!
//! The beamformed per-block power `w[n, m] = |a^H x_{n,m}|^2` fully determines
//! the ambiguity:
//!
//! ```text
//! chi(l, nu) = sum_{m,n} w[n, m] exp(-j 2 pi l n / n_sc) exp(+j 2 pi nu m / n_sym)
//! ```
//!
//! so the whole delay-Doppler lattice is one 2-D FFT of a real grid. The lattice
//! is periodic in both axes and stored as `[nu * n_sc + l]` with `l`, `nu`
//! reduced modulo `n_sc`, `n_sym`.

use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::model::{BlockDft, Dimensions, Domain, SteeringVector, WaveformGrid};
use crate::numeric::{pairwise_sum, Real};

/// The set of `(l, nu) != (0, 0)` cells whose ambiguity counts as sidelobe.
///
/// Each axis covers `|l| <= max_delay - 1`. When that window would wrap onto
/// itself (`2 * max_delay - 1 >= n_sc`) the axis is clamped to the unique
/// lattice `[-floor(n_sc/2), ceil(n_sc/2) - 1]` so no bin is counted twice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SidelobeRegion {
    pub max_delay: usize,
    pub max_doppler: usize,
    n_sc: usize,
    n_sym: usize,
    delay: (i64, i64),
    doppler: (i64, i64),
}

fn axis_range(bound: usize, period: usize) -> (i64, i64) {
    if 2 * bound > period {
        let p = period as i64;
        (-(p / 2), (p + 1) / 2 - 1)
    } else {
        let b = bound as i64 - 1;
        (-b, b)
    }
}

impl SidelobeRegion {
    pub fn new(max_delay: usize, max_doppler: usize, dims: &Dimensions) -> Result<Self> {
        if max_delay == 0 || max_delay > dims.n_sc {
            return Err(Error::invalid(format!(
                "max_delay must be in 1..={}, got {max_delay}",
                dims.n_sc
            )));
        }
        if max_doppler == 0 || max_doppler > dims.n_sym {
            return Err(Error::invalid(format!(
                "max_doppler must be in 1..={}, got {max_doppler}",
                dims.n_sym
            )));
        }
        Ok(SidelobeRegion {
            max_delay,
            max_doppler,
            n_sc: dims.n_sc,
            n_sym: dims.n_sym,
            delay: axis_range(max_delay, dims.n_sc),
            doppler: axis_range(max_doppler, dims.n_sym),
        })
    }

    /// The whole lattice minus the origin.
    pub fn full(dims: &Dimensions) -> Self {
        Self::new(dims.n_sc, dims.n_sym, dims).expect("full region is always valid")
    }

    pub fn delays(&self) -> RangeInclusive<i64> {
        self.delay.0..=self.delay.1
    }

    pub fn dopplers(&self) -> RangeInclusive<i64> {
        self.doppler.0..=self.doppler.1
    }

    /// Cells in row-major `(nu, l)` order, origin excluded.
    pub fn cells(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.dopplers()
            .flat_map(move |nu| self.delays().map(move |l| (l, nu)))
            .filter(|&c| c != (0, 0))
    }

    pub fn len(&self) -> usize {
        let nl = (self.delay.1 - self.delay.0 + 1) as usize;
        let nn = (self.doppler.1 - self.doppler.0 + 1) as usize;
        nl * nn - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn lattice_index(&self, l: i64, nu: i64) -> usize {
        let lm = l.rem_euclid(self.n_sc as i64) as usize;
        let vm = nu.rem_euclid(self.n_sym as i64) as usize;
        vm * self.n_sc + lm
    }

    /// Lattice mask, `true` where the cell belongs to the region.
    pub fn lattice_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_sc * self.n_sym];
        for (l, nu) in self.cells() {
            mask[self.lattice_index(l, nu)] = true;
        }
        mask
    }

    pub fn contains(&self, l: i64, nu: i64) -> bool {
        self.lattice_mask()[self.lattice_index(l, nu)]
    }

    fn matches(&self, dims: &Dimensions) -> bool {
        self.n_sc == dims.n_sc && self.n_sym == dims.n_sym
    }
}

/// Beam-projected grid: `c[i] = a^H x_i` and `w[i] = |c[i]|^2` for block
/// `i = n + m * n_sc`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamProjectedGrid {
    dims: Dimensions,
    pub c: Vec<Complex64>,
    pub w: Vec<f64>,
}

impl BeamProjectedGrid {
    pub fn dims(&self) -> &Dimensions {
        &self.dims
    }

    pub(crate) fn from_slice(x: &[Complex64], a: &SteeringVector, dims: Dimensions) -> Self {
        let c: Vec<Complex64> = x
            .chunks_exact(dims.n_tx)
            .map(|blk| a.project(blk))
            .collect();
        let w = c.iter().map(|z| z.norm_sqr()).collect();
        BeamProjectedGrid { dims, c, w }
    }
}

pub fn beam_project(x: &WaveformGrid, a: &SteeringVector) -> Result<BeamProjectedGrid> {
    x.expect_domain(Domain::Frequency)?;
    if a.len() != x.dims().n_tx {
        return Err(Error::DimensionMismatch {
            axis: "n_tx",
            expected: x.dims().n_tx,
            got: a.len(),
        });
    }
    Ok(BeamProjectedGrid::from_slice(x.data(), a, *x.dims()))
}

/// `P_IL = sum w`, the power beamformed toward the target.
pub fn directional_power(g: &BeamProjectedGrid) -> f64 {
    pairwise_sum(&g.w)
}

/// FFT plans for the delay-Doppler lattice of one set of dimensions.
#[derive(Clone)]
pub struct DelayDopplerTransform {
    n_sc: usize,
    n_sym: usize,
    sc_fwd: Arc<dyn Fft<f64>>,
    sc_inv: Arc<dyn Fft<f64>>,
    sym_fwd: Arc<dyn Fft<f64>>,
    sym_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DelayDopplerTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DelayDopplerTransform")
            .field("n_sc", &self.n_sc)
            .field("n_sym", &self.n_sym)
            .finish()
    }
}

impl DelayDopplerTransform {
    pub fn new(dims: &Dimensions) -> Self {
        let mut planner = FftPlanner::new();
        DelayDopplerTransform {
            n_sc: dims.n_sc,
            n_sym: dims.n_sym,
            sc_fwd: planner.plan_fft_forward(dims.n_sc),
            sc_inv: planner.plan_fft_inverse(dims.n_sc),
            sym_fwd: planner.plan_fft_forward(dims.n_sym),
            sym_inv: planner.plan_fft_inverse(dims.n_sym),
        }
    }

    /// Rows of length `n_sc` through `along_sc`, then columns of length
    /// `n_sym` through `along_sym`. Unnormalized.
    fn transform(
        &self,
        grid: &mut [Complex64],
        along_sc: &Arc<dyn Fft<f64>>,
        along_sym: &Arc<dyn Fft<f64>>,
    ) {
        let (nc, ns) = (self.n_sc, self.n_sym);
        along_sc.process(grid);
        if ns > 1 {
            let mut col = vec![Complex64::new(0.0, 0.0); ns];
            for l in 0..nc {
                for v in 0..ns {
                    col[v] = grid[v * nc + l];
                }
                along_sym.process(&mut col);
                for v in 0..ns {
                    grid[v * nc + l] = col[v];
                }
            }
        }
    }

    /// Full ambiguity lattice from the power grid `w`.
    pub fn ambiguity(&self, w: &[f64]) -> Vec<Complex64> {
        let mut grid: Vec<Complex64> = w.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut grid, &self.sc_fwd, &self.sym_inv);
        grid
    }

    /// `G[n, m] = sum_{l,nu} chi(l, nu) exp(+j 2 pi l n / n_sc) exp(-j 2 pi nu m / n_sym)`,
    /// the adjoint of [`Self::ambiguity`], evaluated in place on a lattice.
    pub fn adjoint_in_place(&self, lattice: &mut [Complex64]) {
        self.transform(lattice, &self.sc_inv, &self.sym_fwd);
    }
}

/// Ambiguity over the full periodic lattice, together with the sidelobe region
/// it is evaluated on.
#[derive(Debug, Clone)]
pub struct AmbiguityMap {
    n_sc: usize,
    n_sym: usize,
    lattice: Vec<Complex64>,
    pub region: SidelobeRegion,
}

impl AmbiguityMap {
    pub fn from_lattice(
        dims: &Dimensions,
        lattice: Vec<Complex64>,
        region: SidelobeRegion,
    ) -> Result<Self> {
        if lattice.len() != dims.n_blocks() {
            return Err(Error::DimensionMismatch {
                axis: "lattice",
                expected: dims.n_blocks(),
                got: lattice.len(),
            });
        }
        if !region.matches(dims) {
            return Err(Error::invalid("sidelobe region built for other dimensions"));
        }
        Ok(AmbiguityMap {
            n_sc: dims.n_sc,
            n_sym: dims.n_sym,
            lattice,
            region,
        })
    }

    /// `chi(l, nu)` for any integer offsets (periodic).
    pub fn get(&self, l: i64, nu: i64) -> Complex64 {
        let lm = l.rem_euclid(self.n_sc as i64) as usize;
        let vm = nu.rem_euclid(self.n_sym as i64) as usize;
        self.lattice[vm * self.n_sc + lm]
    }

    pub fn peak(&self) -> f64 {
        self.lattice[0].re
    }

    pub fn lattice(&self) -> &[Complex64] {
        &self.lattice
    }

    /// CSV over the region window (origin included) with a dB column
    /// normalized to the peak.
    pub fn to_csv(&self) -> String {
        let peak2 = self.lattice[0].norm_sqr();
        let mut out = String::from("l,nu,re,im,abs2,db\n");
        for nu in self.region.dopplers() {
            for l in self.region.delays() {
                let z = self.get(l, nu);
                let abs2 = z.norm_sqr();
                let db = 10.0 * (abs2 / peak2).log10();
                let _ = writeln!(
                    out,
                    "{l},{nu},{},{},{},{}",
                    Real(z.re),
                    Real(z.im),
                    Real(abs2),
                    Real(db)
                );
            }
        }
        out
    }
}

pub fn ambiguity_map(g: &BeamProjectedGrid, region: &SidelobeRegion) -> Result<AmbiguityMap> {
    if !region.matches(&g.dims) {
        return Err(Error::invalid("sidelobe region exceeds waveform lattice"));
    }
    let transform = DelayDopplerTransform::new(&g.dims);
    let mut lattice = transform.ambiguity(&g.w);
    // the origin is the directional power; pin it to the same summation
    lattice[0] = Complex64::new(directional_power(g), 0.0);
    AmbiguityMap::from_lattice(&g.dims, lattice, region.clone())
}

/// Integrated sidelobe level over the map's region.
pub fn isl(map: &AmbiguityMap) -> f64 {
    let terms: Vec<f64> = map
        .region
        .cells()
        .map(|(l, nu)| map.get(l, nu).norm_sqr())
        .collect();
    pairwise_sum(&terms)
}

/// ISL divided by the squared mainlobe `|chi(0,0)|^2`.
pub fn normalized_isl(map: &AmbiguityMap) -> f64 {
    isl(map) / map.get(0, 0).norm_sqr()
}

/// Convenience: ambiguity of a frequency-domain waveform in one call.
/// Ambiguity map of a waveform in either domain.
pub fn waveform_ambiguity(
    x: &WaveformGrid,
    a: &SteeringVector,
    region: &SidelobeRegion,
) -> Result<AmbiguityMap> {
    match x.domain() {
        Domain::Frequency => ambiguity_map(&beam_project(x, a)?, region),
        Domain::Time => {
            let freq = BlockDft::new(*x.dims()).to_frequency_domain(x)?;
            ambiguity_map(&beam_project(&freq, a)?, region)
        }
    }
}
