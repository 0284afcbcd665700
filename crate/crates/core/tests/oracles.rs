//! Fast paths against the dense reference forms in `common`.

mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use isac_waveform::ambiguity::{
    ambiguity_map, beam_project, directional_power, isl, waveform_ambiguity, SidelobeRegion,
};
use isac_waveform::comm::build_constraints;
use isac_waveform::objective::{AlmProblem, DualState};
use isac_waveform::{BlockDft, Dimensions, Domain, SteeringVector, WaveformGrid};

fn rel(err: f64, scale: f64) -> f64 {
    err / scale.max(f64::MIN_POSITIVE)
}

fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn max_abs(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

fn freq_grid(d: Dimensions, rng: &mut ChaCha8Rng) -> WaveformGrid {
    WaveformGrid::new(Domain::Frequency, d, random_ambient(d.n_tot(), rng)).unwrap()
}

#[test]
fn beam_projection_matches_dense_quadratic_form() {
    let d = Dimensions::new(3, 4, 2, 1).unwrap();
    let a = SteeringVector::new(0.7, 3, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = freq_grid(d, &mut rng);
    let g = beam_project(&x, &a).unwrap();
    for m in 0..d.n_sym {
        for n in 0..d.n_sc {
            let mut form = Complex64::new(0.0, 0.0);
            for p in 0..3 {
                for q in 0..3 {
                    let a_pq = a.entries()[p] * a.entries()[q].conj();
                    form += x.get(m, n, p).conj() * a_pq * x.get(m, n, q);
                }
            }
            let w = g.w[n + m * d.n_sc];
            assert!((w - form.re).abs() < 1e-12 && form.im.abs() < 1e-12);
        }
    }
}

#[test]
fn ambiguity_matches_triple_loop_and_dense_b() {
    let d = Dimensions::new(2, 4, 3, 1).unwrap();
    let a = SteeringVector::new(-0.2, 2, 0.5).unwrap();
    let region = SidelobeRegion::full(&d);
    let f = dense_dft(&d);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let xt = random_ambient(d.n_tot(), &mut rng);
        let x = mat_vec(&f, &xt);
        let grid = WaveformGrid::new(Domain::Frequency, d, x.clone()).unwrap();
        let map = ambiguity_map(&beam_project(&grid, &a).unwrap(), &region).unwrap();
        let peak = map.peak();
        for nu in region.dopplers() {
            for l in region.delays() {
                let fast = map.get(l, nu);
                let direct = chi_direct(&x, &d, &a, l, nu);
                let dense = quad(&xt, &dense_b(l, nu, &d, &a));
                assert!(rel((fast - direct).norm(), peak) < 1e-10, "({l},{nu})");
                assert!(rel((fast - dense).norm(), peak) < 1e-8, "({l},{nu})");
            }
        }
    }
}

#[test]
fn isl_matches_brute_force_sum() {
    let d = Dimensions::new(2, 4, 2, 1).unwrap();
    let a = SteeringVector::new(0.1, 2, 0.5).unwrap();
    let region = SidelobeRegion::full(&d);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = freq_grid(d, &mut rng);
    let brute: f64 = region
        .cells()
        .map(|(l, nu)| chi_direct(x.data(), &d, &a, l, nu).norm_sqr())
        .sum();
    let fast = isl(&waveform_ambiguity(&x, &a, &region).unwrap());
    assert!(rel((fast - brute).abs(), brute) < 1e-9);
}

#[test]
fn directional_power_matches_dense_a_hat() {
    let d = Dimensions::new(3, 4, 2, 1).unwrap();
    let a = SteeringVector::new(0.4, 3, 0.5).unwrap();
    let a_hat = dense_a_hat(&d, &a);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xt = WaveformGrid::new(Domain::Time, d, random_ambient(d.n_tot(), &mut rng)).unwrap();
    let x = BlockDft::new(d).to_frequency_domain(&xt).unwrap();
    let fast = directional_power(&beam_project(&x, &a).unwrap());
    let dense = quad(xt.data(), &a_hat);
    assert!(rel((fast - dense.re).abs(), fast) < 1e-10);
    assert!(dense.im.abs() < 1e-10 * fast);
}

#[test]
fn dense_b_identities() {
    let d = Dimensions::new(2, 4, 2, 1).unwrap();
    let a = SteeringVector::new(0.25, 2, 0.5).unwrap();
    let a_hat = dense_a_hat(&d, &a);
    let f = dense_dft(&d);
    let at = dense_a_tilde(&d, &a);
    let direct = f.adjoint() * &at * at.adjoint() * &f;
    assert!((&a_hat - direct).norm() < 1e-12);
    for (l, nu) in [(1i64, 0i64), (-1, 1), (2, 1), (1, -1)] {
        let b = dense_b(l, nu, &d, &a);
        let b_neg = dense_b(-l, -nu, &d, &a);
        assert!((b_neg - b.adjoint()).norm() < 1e-12, "({l},{nu})");
    }
}

#[test]
#[should_panic(expected = "exceeds cap")]
fn dense_oracle_refuses_large_grids() {
    let d = Dimensions::new(4, 16, 8, 1).unwrap();
    let _ = dense_dft(&d);
}

fn instance(d: Dimensions, seed: u64) -> (AlmProblem, DenseProblem, DualState, Vec<Complex64>) {
    let inst = alm_instance(d, seed);
    let dense = DenseProblem::new(&inst.scenario, &SidelobeRegion::full(&d));
    (inst.problem, dense, inst.duals, inst.xt)
}

#[test]
fn objective_matches_dense_evaluation() {
    for seed in 0..6 {
        let d = Dimensions::new(2, 4, 2, 2).unwrap();
        let (problem, dense, duals, xt) = instance(d, seed);
        let fast = problem.objective(&xt, &duals).unwrap();
        let slow = dense.objective(&xt, &duals);
        assert!(rel((fast.isl_term - slow.isl).abs(), slow.isl) < 1e-8);
        assert!((fast.power_penalty - slow.power).abs() <= 1e-8 * slow.power.max(1.0));
        assert!((fast.qos_penalty - slow.qos).abs() <= 1e-8 * slow.qos.max(1.0));
        assert!(rel((fast.total - slow.total()).abs(), slow.total()) < 1e-8);
    }
}

#[test]
fn constraint_values_match_margin_forms() {
    let d = Dimensions::new(3, 4, 2, 2).unwrap();
    let (problem, dense, _, xt) = instance(d, 9);
    let fast = problem.constraint_values(&xt).unwrap();
    let slow = dense.qos_values(&xt);
    assert_eq!(fast.len(), slow.len());
    for (a, b) in fast.iter().zip(&slow) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn isl_gradient_matches_dense_assembly() {
    for seed in 0..4 {
        let d = Dimensions::new(2, 4, 2, 1).unwrap();
        let (problem, dense, _, xt) = instance(d, 20 + seed);
        let fast = problem.isl_gradient(&xt).unwrap();
        let slow = dense.isl_gradient(&xt);
        assert!(rel(max_abs_diff(&fast, &slow), max_abs(&slow)) < 1e-8);
    }
}

#[test]
fn sidelobe_adjoint_is_real_on_symmetric_regions() {
    let d = Dimensions::new(2, 8, 4, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scn = scenario(d, 5, 1.0, 0.5, 1e-2);
    for (nd, nm) in [(8, 4), (3, 2), (1, 3), (5, 1)] {
        let region = SidelobeRegion::new(nd, nm, &d).unwrap();
        let problem =
            AlmProblem::new(build_constraints(&scn), scn.steering(), region, 0.5).unwrap();
        let xt = random_point(d.n_tot(), scn.radius(), &mut rng);
        let g = problem.sidelobe_adjoint(&xt).unwrap();
        for z in &g {
            assert!(z.im.abs() <= 1e-10 * z.norm().max(1e-300), "{z}");
        }
    }
}

#[test]
fn directional_derivative_matches_gradient() {
    let d = Dimensions::new(2, 4, 2, 2).unwrap();
    let (problem, _, duals, xt) = instance(d, 31);
    let grad = problem.euclidean_gradient(&xt, &duals).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let eps = 1e-6;
    for _ in 0..5 {
        let dir = random_ambient(d.n_tot(), &mut rng);
        let shifted =
            |s: f64| -> Vec<Complex64> { xt.iter().zip(&dir).map(|(x, v)| x + v * s).collect() };
        let fp = problem.objective(&shifted(eps), &duals).unwrap().total;
        let fm = problem.objective(&shifted(-eps), &duals).unwrap().total;
        let fd = (fp - fm) / (2.0 * eps);
        let analytic = re_inner(&grad, &dir);
        assert!(
            (fd - analytic).abs() <= 1e-6 * analytic.abs().max(1.0),
            "{fd} vs {analytic}"
        );
    }
}

#[test]
fn zc_zero_doppler_cut_is_the_periodic_autocorrelation() {
    use isac_waveform::baselines::{zc_waveform, ZcMapping};
    let d = Dimensions::new(3, 7, 1, 1).unwrap();
    let a = SteeringVector::new(0.2, 3, 0.5).unwrap();
    let xt = zc_waveform(d, 1.0, &a, 3, ZcMapping::Time).unwrap();
    let c: Vec<Complex64> = (0..7)
        .map(|k| {
            (0..3)
                .map(|p| a.entries()[p].conj() * xt.get(0, k, p))
                .sum()
        })
        .collect();
    let map = waveform_ambiguity(&xt, &a, &SidelobeRegion::full(&d)).unwrap();
    for l in 0..7 {
        let acf = periodic_acf(&c, l);
        assert!((map.get(l as i64, 0) - acf).norm() < 1e-12 * map.peak());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ambiguity_is_conjugate_symmetric(seed in any::<u64>()) {
        let d = Dimensions::new(2, 5, 3, 1).unwrap();
        let a = SteeringVector::new(0.3, 2, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = waveform_ambiguity(&freq_grid(d, &mut rng), &a, &SidelobeRegion::full(&d)).unwrap();
        for nu in -2i64..=2 {
            for l in -2i64..=2 {
                prop_assert!((map.get(-l, -nu) - map.get(l, nu).conj()).norm() <= 1e-12 * map.peak());
            }
        }
        prop_assert_eq!(map.get(0, 0).im, 0.0);
    }

    #[test]
    fn isl_ignores_global_phase(seed in any::<u64>(), phase in -3.2f64..3.2) {
        let d = Dimensions::new(2, 4, 4, 1).unwrap();
        let a = SteeringVector::new(-0.4, 2, 0.5).unwrap();
        let region = SidelobeRegion::new(3, 2, &d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = freq_grid(d, &mut rng);
        let rotated: Vec<Complex64> = x.data().iter().map(|v| v * cis(phase)).collect();
        let y = WaveformGrid::new(Domain::Frequency, d, rotated).unwrap();
        let i0 = isl(&waveform_ambiguity(&x, &a, &region).unwrap());
        let i1 = isl(&waveform_ambiguity(&y, &a, &region).unwrap());
        prop_assert!((i0 - i1).abs() <= 1e-12 * i0);
    }

    #[test]
    fn penalty_grows_with_violation(seed in any::<u64>(), extra in 0.01f64..1.0) {
        let d = Dimensions::new(2, 4, 2, 1).unwrap();
        let (problem, _, duals, xt) = instance(d, seed % 1000);
        // p0 above any reachable power makes the power branch active
        let p = problem.directional_power(&xt).unwrap();
        let raised = AlmProblem::new(
            problem.constraints().clone(),
            problem.steering().clone(),
            problem.region().clone(),
            p + 1.0,
        ).unwrap();
        let higher = AlmProblem::new(
            problem.constraints().clone(),
            problem.steering().clone(),
            problem.region().clone(),
            p + 1.0 + extra,
        ).unwrap();
        let g0 = raised.objective(&xt, &duals).unwrap();
        let g1 = higher.objective(&xt, &duals).unwrap();
        prop_assert!(g1.power_penalty > g0.power_penalty);
        prop_assert_eq!(g1.isl_term, g0.isl_term);
    }
}
