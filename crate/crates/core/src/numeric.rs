/// Pairwise (cascade) summation with a fixed fan-in, so the result depends
/// only on the input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// `Re{u^H v}`, the real inner product on `C^n` viewed as `R^{2n}`.
#[inline]
pub fn real_inner(u: &[num_complex::Complex64], v: &[num_complex::Complex64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| a.re * b.re + a.im * b.im)
        .sum()
}

pub fn norm(u: &[num_complex::Complex64]) -> f64 {
    u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Shortest round-trip text for CSV cells: plain decimal for moderate
/// magnitudes, scientific notation for very small or very large ones.
#[derive(Debug, Clone, Copy)]
pub struct Real(pub f64);

impl std::fmt::Display for Real {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if a == 0.0 || !a.is_finite() || (1e-4..1e16).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}
