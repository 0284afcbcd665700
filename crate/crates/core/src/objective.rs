//! Augmented-Lagrangian objective on the time-domain waveform.
//!
//! ```text
//! g(xt) = sum_{R_s} |chi(l,nu)|^2
//!       + rho/2 * max{p0 - P_IL + mu/rho, 0}^2
//!       + rho/2 * sum_j max{gamma - Re{h_j^H F xt} + lambda_j/rho, 0}^2
//! ```
//!
//! Gradients use the real-coordinate convention: for `f: C^n -> R` the
//! gradient `grad` satisfies `df = Re{grad^H dx}`. All three terms are assembled
//! in the frequency domain, block by block, and mapped back with one inverse
//! block DFT.

use num_complex::Complex64;
use serde::Serialize;

use crate::ambiguity::{DelayDopplerTransform, SidelobeRegion};
use crate::comm::ConstraintSystem;
use crate::error::{Error, Result};
use crate::model::{BlockDft, Dimensions, SteeringVector};
use crate::numeric::pairwise_sum;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualState {
    pub mu: f64,
    pub lambda: Vec<f64>,
    pub rho: f64,
    pub mu_max: f64,
    pub lambda_max: f64,
}

impl DualState {
    pub fn new(n_constraints: usize, rho: f64, mu_max: f64, lambda_max: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::invalid("rho must be positive"));
        }
        if !(mu_max >= 0.0 && lambda_max >= 0.0) {
            return Err(Error::invalid("dual clamps must be non-negative"));
        }
        Ok(DualState {
            mu: 0.0,
            lambda: vec![0.0; n_constraints],
            rho,
            mu_max,
            lambda_max,
        })
    }

    pub fn within_bounds(&self) -> bool {
        (0.0..=self.mu_max).contains(&self.mu)
            && self
                .lambda
                .iter()
                .all(|l| (0.0..=self.lambda_max).contains(l))
    }

    pub fn max_lambda(&self) -> f64 {
        self.lambda.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ObjectiveBreakdown {
    pub isl_term: f64,
    pub power_penalty: f64,
    pub qos_penalty: f64,
    pub total: f64,
}

/// Everything the objective needs that does not change across iterations.
#[derive(Debug, Clone)]
pub struct AlmProblem {
    dims: Dimensions,
    dft: BlockDft,
    dd: DelayDopplerTransform,
    steering: SteeringVector,
    region: SidelobeRegion,
    mask: Vec<bool>,
    constraints: ConstraintSystem,
    p0: f64,
}

/// Intermediate quantities of one evaluation at `xt`.
struct Snapshot {
    c: Vec<Complex64>,
    lattice: Vec<Complex64>,
    p_il: f64,
    qos: Vec<f64>,
}

impl AlmProblem {
    pub fn new(
        constraints: ConstraintSystem,
        steering: SteeringVector,
        region: SidelobeRegion,
        p0: f64,
    ) -> Result<Self> {
        let dims = *constraints.dims();
        if steering.len() != dims.n_tx {
            return Err(Error::DimensionMismatch {
                axis: "n_tx",
                expected: dims.n_tx,
                got: steering.len(),
            });
        }
        // validates region against the lattice
        let region = SidelobeRegion::new(region.max_delay, region.max_doppler, &dims)?;
        Ok(AlmProblem {
            dims,
            dft: BlockDft::new(dims),
            dd: DelayDopplerTransform::new(&dims),
            steering,
            mask: region.lattice_mask(),
            region,
            constraints,
            p0,
        })
    }

    pub fn dims(&self) -> &Dimensions {
        &self.dims
    }

    pub fn dft(&self) -> &BlockDft {
        &self.dft
    }

    pub fn steering(&self) -> &SteeringVector {
        &self.steering
    }

    pub fn region(&self) -> &SidelobeRegion {
        &self.region
    }

    pub fn constraints(&self) -> &ConstraintSystem {
        &self.constraints
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    fn check_len(&self, xt: &[Complex64]) -> Result<()> {
        if xt.len() != self.dims.n_tot() {
            return Err(Error::DimensionMismatch {
                axis: "n_tot",
                expected: self.dims.n_tot(),
                got: xt.len(),
            });
        }
        Ok(())
    }

    fn snapshot(&self, xt: &[Complex64]) -> Snapshot {
        let mut x = xt.to_vec();
        self.dft.forward_in_place(&mut x);
        let c: Vec<Complex64> = x
            .chunks_exact(self.dims.n_tx)
            .map(|blk| self.steering.project(blk))
            .collect();
        let w: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
        let p_il = pairwise_sum(&w);
        let lattice = self.dd.ambiguity(&w);
        let qos = self.constraints.values(&x);
        Snapshot {
            c,
            lattice,
            p_il,
            qos,
        }
    }

    fn breakdown(&self, s: &Snapshot, duals: &DualState) -> ObjectiveBreakdown {
        let isl_terms: Vec<f64> = self
            .region
            .cells()
            .map(|(l, nu)| s.lattice[self.region.lattice_index(l, nu)].norm_sqr())
            .collect();
        let isl_term = pairwise_sum(&isl_terms);
        let rho = duals.rho;
        let u = (self.p0 - s.p_il + duals.mu / rho).max(0.0);
        let power_penalty = 0.5 * rho * u * u;
        let qos_terms: Vec<f64> = s
            .qos
            .iter()
            .zip(&duals.lambda)
            .map(|(r, lam)| {
                let u = (self.constraints.gamma - r + lam / rho).max(0.0);
                u * u
            })
            .collect();
        let qos_penalty = 0.5 * rho * pairwise_sum(&qos_terms);
        ObjectiveBreakdown {
            isl_term,
            power_penalty,
            qos_penalty,
            total: isl_term + power_penalty + qos_penalty,
        }
    }

    /// `G[n, m]`: the adjoint delay-Doppler transform of chi restricted to
    /// the sidelobe region.
    fn masked_adjoint(&self, lattice: &[Complex64]) -> Vec<Complex64> {
        let mut g: Vec<Complex64> = lattice
            .iter()
            .zip(&self.mask)
            .map(|(z, &inside)| if inside { *z } else { Complex64::new(0.0, 0.0) })
            .collect();
        self.dd.adjoint_in_place(&mut g);
        g
    }

    /// Frequency-domain vector whose block `i` is `coef(i) * c_i * a`.
    fn beam_blocks(&self, c: &[Complex64], coef: impl Fn(usize) -> f64) -> Vec<Complex64> {
        let a = self.steering.entries();
        let mut out = vec![Complex64::new(0.0, 0.0); self.dims.n_tot()];
        for (i, blk) in out.chunks_exact_mut(self.dims.n_tx).enumerate() {
            let scaled = c[i] * coef(i);
            for (o, ap) in blk.iter_mut().zip(a) {
                *o = ap * scaled;
            }
        }
        out
    }

    pub fn objective(&self, xt: &[Complex64], duals: &DualState) -> Result<ObjectiveBreakdown> {
        self.check_len(xt)?;
        Ok(self.breakdown(&self.snapshot(xt), duals))
    }

    /// Objective and its real-coordinate Euclidean gradient in one pass.
    pub fn objective_and_gradient(
        &self,
        xt: &[Complex64],
        duals: &DualState,
    ) -> Result<(ObjectiveBreakdown, Vec<Complex64>)> {
        self.check_len(xt)?;
        let s = self.snapshot(xt);
        let value = self.breakdown(&s, duals);

        let g_lattice = self.masked_adjoint(&s.lattice);

        let rho = duals.rho;
        let u_power = self.p0 - s.p_il + duals.mu / rho;
        let power_coef = if u_power > 0.0 {
            -2.0 * rho * u_power
        } else {
            0.0
        };

        let mut grad = self.beam_blocks(&s.c, |i| 4.0 * g_lattice[i].re + power_coef);
        let gamma = self.constraints.gamma;
        for (j, (r, lam)) in s.qos.iter().zip(&duals.lambda).enumerate() {
            let u = gamma - r + lam / rho;
            if u > 0.0 {
                self.constraints.add_scaled(j, -rho * u, &mut grad);
            }
        }
        self.dft.inverse_in_place(&mut grad);
        Ok((value, grad))
    }

    pub fn euclidean_gradient(
        &self,
        xt: &[Complex64],
        duals: &DualState,
    ) -> Result<Vec<Complex64>> {
        Ok(self.objective_and_gradient(xt, duals)?.1)
    }

    /// Only the ISL part of the gradient, `4 Re{G} c a` mapped to time domain.
    pub fn isl_gradient(&self, xt: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(xt)?;
        let s = self.snapshot(xt);
        let g_lattice = self.masked_adjoint(&s.lattice);
        let mut grad = self.beam_blocks(&s.c, |i| 4.0 * g_lattice[i].re);
        self.dft.inverse_in_place(&mut grad);
        Ok(grad)
    }

    /// The adjoint lattice `G[n, m]` before taking the real part.
    pub fn sidelobe_adjoint(&self, xt: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(xt)?;
        Ok(self.masked_adjoint(&self.snapshot(xt).lattice))
    }

    /// `xt^H A_hat xt`, the directional power of a time-domain waveform.
    pub fn directional_power(&self, xt: &[Complex64]) -> Result<f64> {
        self.check_len(xt)?;
        Ok(self.snapshot(xt).p_il)
    }

    /// `Re{h_j^H F xt}` for every constraint.
    pub fn constraint_values(&self, xt: &[Complex64]) -> Result<Vec<f64>> {
        self.check_len(xt)?;
        let mut x = xt.to_vec();
        self.dft.forward_in_place(&mut x);
        Ok(self.constraints.values(&x))
    }

    /// Projected multiplier step at the current iterate.
    pub fn update_duals(&self, duals: &DualState, xt: &[Complex64]) -> Result<DualState> {
        self.check_len(xt)?;
        let s = self.snapshot(xt);
        let rho = duals.rho;
        let gamma = self.constraints.gamma;
        let mu = (duals.mu + rho * (self.p0 - s.p_il))
            .max(0.0)
            .min(duals.mu_max);
        let lambda = duals
            .lambda
            .iter()
            .zip(&s.qos)
            .map(|(lam, r)| (lam + rho * (gamma - r)).max(0.0).min(duals.lambda_max))
            .collect();
        Ok(DualState {
            mu,
            lambda,
            rho,
            mu_max: duals.mu_max,
            lambda_max: duals.lambda_max,
        })
    }
}
