//! Box-wise polynomial detrending shared by DFA and MF-DFA.

/// Orthonormal polynomial basis on `s` equally spaced points.
pub(crate) struct PolyBasis {
    s: usize,
    vectors: Vec<Vec<f64>>,
}

impl PolyBasis {
    pub(crate) fn new(s: usize, order: usize) -> Self {
        let centre = (s as f64 - 1.0) / 2.0;
        let half = (s as f64 / 2.0).max(1.0);
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
        for k in 0..=order {
            let mut v: Vec<f64> = (0..s).map(|t| ((t as f64 - centre) / half).powi(k as i32)).collect();
            // Gram-Schmidt, applied twice for orthogonality at higher orders.
            for _ in 0..2 {
                for b in &vectors {
                    let c = dot(&v, b);
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let norm = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            vectors.push(v);
        }
        PolyBasis { s, vectors }
    }

    /// Mean squared residual of `y` after removing its least-squares
    /// polynomial. Returns exactly zero when the residual is at rounding level.
    pub(crate) fn residual_variance(&self, y: &[f64], scratch: &mut Vec<f64>) -> f64 {
        debug_assert_eq!(y.len(), self.s);
        scratch.clear();
        scratch.extend_from_slice(y);
        for b in &self.vectors {
            let c = dot(scratch, b);
            scratch.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let ss = dot(scratch, scratch);
        let scale = dot(y, y);
        if ss <= 1e-24 * scale {
            0.0
        } else {
            ss / self.s as f64
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared local fluctuations `F_v^2(s)` of every box.
///
/// `N_s = floor(N / s)` boxes are laid from the start of the profile; when
/// `s` does not divide `N`, another `N_s` boxes are laid from the end so the
/// whole record is covered. Boxes come out in that order.
pub(crate) fn box_variances(profile: &[f64], s: usize, order: usize) -> Vec<f64> {
    let n = profile.len();
    let ns = n / s;
    let basis = PolyBasis::new(s, order);
    let mut scratch = Vec::with_capacity(s);
    let mut out = Vec::with_capacity(2 * ns);
    for v in 0..ns {
        out.push(basis.residual_variance(&profile[v * s..(v + 1) * s], &mut scratch));
    }
    if !n.is_multiple_of(s) {
        for v in 0..ns {
            out.push(basis.residual_variance(&profile[n - (v + 1) * s..n - v * s], &mut scratch));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        let b = PolyBasis::new(500, 3);
        for i in 0..4 {
            for j in 0..4 {
                let d = dot(&b.vectors[i], &b.vectors[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-10, "{i},{j}: {d}");
            }
        }
    }

    #[test]
    fn polynomials_up_to_order_are_removed() {
        let y: Vec<f64> = (0..40).map(|t| 3.0 - 0.5 * t as f64 + 0.01 * (t * t) as f64).collect();
        let mut scratch = Vec::new();
        assert_eq!(PolyBasis::new(40, 2).residual_variance(&y, &mut scratch), 0.0);
        assert!(PolyBasis::new(40, 1).residual_variance(&y, &mut scratch) > 0.0);
    }

    #[test]
    fn order_zero_is_plain_variance() {
        let y = [1.0, 2.0, 4.0, 7.0];
        let mean = 3.5;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        let got = PolyBasis::new(4, 0).residual_variance(&y, &mut Vec::new());
        assert!((got - var).abs() < 1e-12);
    }

    #[test]
    fn both_ends_when_not_divisible() {
        let p: Vec<f64> = (0..23).map(|t| ((t * 7) % 5) as f64).collect();
        assert_eq!(box_variances(&p, 5, 1).len(), 8);
        assert_eq!(box_variances(&p[..20], 5, 1).len(), 4);
    }
}
