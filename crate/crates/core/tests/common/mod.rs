//! Dense, loop-by-loop reference implementations used to check the fast paths.
//! Everything here is written straight from the defining sums and matrices,
//! sharing no code with the library beyond the data types.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use isac_waveform::ambiguity::SidelobeRegion;
use isac_waveform::comm::build_constraints;
use isac_waveform::objective::{AlmProblem, DualState};
use isac_waveform::scenario::{random_psk_frame, safety_margin_threshold, Channels, Psk, Scenario};
use isac_waveform::{Dimensions, SteeringVector};

pub type CMat = DMatrix<Complex64>;

/// Dense matrices above this many rows are refused.
pub const ORACLE_CAP: usize = 256;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn cis(phase: f64) -> Complex64 {
    Complex64::from_polar(1.0, phase)
}

pub fn random_point(n: usize, radius: f64, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::from_polar(radius, rng.random_range(-PI..PI)))
        .collect()
}

pub fn random_ambient(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

pub fn scenario(dims: Dimensions, seed: u64, p_tx: f64, p0: f64, noise_power: f64) -> Scenario {
    let psk = Psk::new(4).unwrap();
    Scenario {
        dims,
        p_tx,
        p0,
        theta0: 0.3,
        spacing: 0.5,
        psk,
        gamma: safety_margin_threshold(noise_power, &psk, 10.0),
        noise_power,
        channels: Channels::rayleigh(dims, seed),
        symbols: random_psk_frame(dims, 4, seed).unwrap(),
        rng_seed: seed,
        timing: None,
    }
}

fn check_cap(n: usize) {
    assert!(
        n <= ORACLE_CAP,
        "dense oracle of size {n} exceeds cap {ORACLE_CAP}"
    );
}

/// Flat index of `(m, n, a)`: symbol-major, then subcarrier, then antenna.
pub fn flat(d: &Dimensions, m: usize, n: usize, a: usize) -> usize {
    (m * d.n_sc + n) * d.n_tx + a
}

/// `F = I_Ns (x) W_Nc (x) I_Nt`, `W[n, k] = exp(-j2pi nk/Nc) / sqrt(Nc)`.
pub fn dense_dft(d: &Dimensions) -> CMat {
    let n_tot = d.n_tot();
    check_cap(n_tot);
    let nc = d.n_sc;
    let scale = 1.0 / (nc as f64).sqrt();
    let mut f = CMat::zeros(n_tot, n_tot);
    for m in 0..d.n_sym {
        for n in 0..nc {
            for k in 0..nc {
                let w = cis(-2.0 * PI * (n * k) as f64 / nc as f64) * scale;
                for a in 0..d.n_tx {
                    f[(flat(d, m, n, a), flat(d, m, k, a))] = w;
                }
            }
        }
    }
    f
}

/// `A~ = I_{Ns Nc} (x) a`, an `N_tot x Ns Nc` matrix.
pub fn dense_a_tilde(d: &Dimensions, a: &SteeringVector) -> CMat {
    check_cap(d.n_tot());
    let mut out = CMat::zeros(d.n_tot(), d.n_blocks());
    for m in 0..d.n_sym {
        for n in 0..d.n_sc {
            for p in 0..d.n_tx {
                out[(flat(d, m, n, p), n + m * d.n_sc)] = a.entries()[p];
            }
        }
    }
    out
}

/// `B_{l,nu} = F^H A~ diag(exp(-j2pi l n/Nc) exp(+j2pi nu m/Ns)) A~^H F`.
pub fn dense_b(l: i64, nu: i64, d: &Dimensions, a: &SteeringVector) -> CMat {
    let f = dense_dft(d);
    let at = dense_a_tilde(d, a);
    let mut diag = CMat::zeros(d.n_blocks(), d.n_blocks());
    for m in 0..d.n_sym {
        for n in 0..d.n_sc {
            let phase = -2.0 * PI * (l * n as i64) as f64 / d.n_sc as f64
                + 2.0 * PI * (nu * m as i64) as f64 / d.n_sym as f64;
            diag[(n + m * d.n_sc, n + m * d.n_sc)] = cis(phase);
        }
    }
    f.adjoint() * &at * diag * at.adjoint() * f
}

/// `A^ = B_{0,0}`, the directional power form in the time domain.
pub fn dense_a_hat(d: &Dimensions, a: &SteeringVector) -> CMat {
    dense_b(0, 0, d, a)
}

pub fn quad(x: &[Complex64], m: &CMat) -> Complex64 {
    let v = nalgebra::DVector::from_column_slice(x);
    (v.adjoint() * m * &v)[(0, 0)]
}

pub fn mat_vec(m: &CMat, x: &[Complex64]) -> Vec<Complex64> {
    let v = nalgebra::DVector::from_column_slice(x);
    (m * v).iter().copied().collect()
}

/// Triple loop: `sum_m sum_n x_{n,m}^H (a a^H) x_{n,m} e^{-j2pi ln/Nc} e^{+j2pi nu m/Ns}`
/// for a frequency-domain `x`.
pub fn chi_direct(
    x: &[Complex64],
    d: &Dimensions,
    a: &SteeringVector,
    l: i64,
    nu: i64,
) -> Complex64 {
    let nt = d.n_tx;
    let mut big_a = vec![ZERO; nt * nt];
    for p in 0..nt {
        for q in 0..nt {
            big_a[p * nt + q] = a.entries()[p] * a.entries()[q].conj();
        }
    }
    let mut acc = ZERO;
    for m in 0..d.n_sym {
        for n in 0..d.n_sc {
            let mut form = ZERO;
            for p in 0..nt {
                for q in 0..nt {
                    form += x[flat(d, m, n, p)].conj() * big_a[p * nt + q] * x[flat(d, m, n, q)];
                }
            }
            let phase = -2.0 * PI * (l * n as i64) as f64 / d.n_sc as f64
                + 2.0 * PI * (nu * m as i64) as f64 / d.n_sym as f64;
            acc += form * cis(phase);
        }
    }
    acc
}

/// The two linear QoS forms per (block, user), in constraint order, built
/// from the margin definition `Re{y} sin(phi) -/+ Im{y} cos(phi)` with
/// `y = h^H x s*`. Returns dense frequency-domain vectors `h_j` with
/// `value_j = Re{h_j^H x}`.
pub fn dense_constraints(scn: &Scenario) -> Vec<Vec<Complex64>> {
    let d = scn.dims;
    let phi = scn.psk.phi();
    let mut out = Vec::new();
    for m in 0..d.n_sym {
        for n in 0..d.n_sc {
            for k in 0..d.n_users {
                let h = scn.channels.get(n, k);
                let s = scn.symbols.get(n, m, k);
                // Re{y f} with f = sin(phi) + j cos(phi) gives Re{y} sin - Im{y} cos
                for f in [
                    Complex64::new(phi.sin(), phi.cos()),
                    Complex64::new(phi.sin(), -phi.cos()),
                ] {
                    // Re{h^H x s* f} = Re{(h s f*)^H x}
                    let mut v = vec![ZERO; d.n_tot()];
                    for p in 0..d.n_tx {
                        v[flat(&d, m, n, p)] = h[p] * s * f.conj();
                    }
                    out.push(v);
                }
            }
        }
    }
    out
}

pub fn re_inner(u: &[Complex64], v: &[Complex64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a.conj() * b).re).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct DenseBreakdown {
    pub isl: f64,
    pub power: f64,
    pub qos: f64,
}

impl DenseBreakdown {
    pub fn total(&self) -> f64 {
        self.isl + self.power + self.qos
    }
}

/// Every term of the augmented Lagrangian from dense matrices.
pub struct DenseProblem {
    pub dims: Dimensions,
    pub f: CMat,
    pub a_hat: CMat,
    pub cells: Vec<((i64, i64), CMat)>,
    pub h: Vec<Vec<Complex64>>,
    pub gamma: f64,
    pub p0: f64,
}

impl DenseProblem {
    pub fn new(scn: &Scenario, region: &SidelobeRegion) -> Self {
        let d = scn.dims;
        let a = scn.steering();
        DenseProblem {
            dims: d,
            f: dense_dft(&d),
            a_hat: dense_a_hat(&d, &a),
            cells: region
                .cells()
                .map(|(l, nu)| ((l, nu), dense_b(l, nu, &d, &a)))
                .collect(),
            h: dense_constraints(scn),
            gamma: scn.gamma,
            p0: scn.p0,
        }
    }

    pub fn qos_values(&self, xt: &[Complex64]) -> Vec<f64> {
        let x = mat_vec(&self.f, xt);
        self.h.iter().map(|h| re_inner(h, &x)).collect()
    }

    pub fn objective(&self, xt: &[Complex64], duals: &DualState) -> DenseBreakdown {
        let isl = self.cells.iter().map(|(_, b)| quad(xt, b).norm_sqr()).sum();
        let rho = duals.rho;
        let p = quad(xt, &self.a_hat).re;
        let u = (self.p0 - p + duals.mu / rho).max(0.0);
        let qos = self
            .qos_values(xt)
            .iter()
            .zip(&duals.lambda)
            .map(|(r, lam)| (self.gamma - r + lam / rho).max(0.0).powi(2))
            .sum::<f64>();
        DenseBreakdown {
            isl,
            power: 0.5 * rho * u * u,
            qos: 0.5 * rho * qos,
        }
    }

    /// `2 sum (chi B^H x + chi* B x)`, the real-coordinate ISL gradient.
    pub fn isl_gradient(&self, xt: &[Complex64]) -> Vec<Complex64> {
        let mut g = vec![ZERO; xt.len()];
        for (_, b) in &self.cells {
            let chi = quad(xt, b);
            let bh_x = mat_vec(&b.adjoint(), xt);
            let b_x = mat_vec(b, xt);
            for (gi, (u, v)) in g.iter_mut().zip(bh_x.iter().zip(&b_x)) {
                *gi += (chi * u + chi.conj() * v) * 2.0;
            }
        }
        g
    }
}

/// Periodic autocorrelation `R(l) = sum_k c[k] conj(c[(k + l) mod N])`.
pub fn periodic_acf(c: &[Complex64], l: usize) -> Complex64 {
    let n = c.len();
    (0..n).map(|k| c[k] * c[(k + l) % n].conj()).sum()
}

/// A random augmented-Lagrangian instance: a point on the manifold, a
/// scenario whose power constraint is active about half the time, and
/// random multipliers.
pub struct AlmInstance {
    pub scenario: Scenario,
    pub problem: AlmProblem,
    pub duals: DualState,
    pub xt: Vec<Complex64>,
}

pub fn alm_instance(d: Dimensions, seed: u64) -> AlmInstance {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_tx = d.n_tot() as f64 * rng.random_range(0.25..4.0);
    let r = d.cm_radius(p_tx);
    let xt = random_point(d.n_tot(), r, &mut rng);
    let p0 = rng.random_range(0.5..1.5) * d.n_tx as f64 * p_tx / 2.0;
    let scn = scenario(d, seed, p_tx, p0, rng.random_range(1e-3..1.0));
    let problem = AlmProblem::new(
        build_constraints(&scn),
        scn.steering(),
        SidelobeRegion::full(&d),
        p0,
    )
    .unwrap();
    let mut duals =
        DualState::new(d.n_constraints(), rng.random_range(0.5..5.0), 1e4, 1e4).unwrap();
    duals.mu = rng.random_range(0.0..3.0);
    for lam in &mut duals.lambda {
        *lam = rng.random_range(0.0..2.0);
    }
    AlmInstance {
        scenario: scn,
        problem,
        duals,
        xt,
    }
}
