//! Dense Cholesky factorization used on the hot path of the GP target.
//!
//! Matrices are square, column-major, and only the lower triangle is read.

/// Diagonal regularization tried when a factorization breaks down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterSchedule {
    /// Try the matrix as given before adding any jitter.
    pub try_plain: bool,
    pub start: f64,
    pub factor: f64,
    pub max: f64,
}

impl Default for JitterSchedule {
    fn default() -> Self {
        JitterSchedule {
            try_plain: true,
            start: 1e-8,
            factor: 10.0,
            max: 1e-2,
        }
    }
}

impl JitterSchedule {
    /// Jitter always applied, starting at `start`.
    pub fn always() -> Self {
        JitterSchedule {
            try_plain: false,
            ..Default::default()
        }
    }

    fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        let plain = self.try_plain.then_some(0.0);
        let mut next = Some(self.start);
        let escalation = std::iter::from_fn(move || {
            let cur = next?;
            let following = cur * self.factor;
            next = (following <= self.max * (1.0 + 1e-12)).then_some(following);
            Some(cur)
        });
        plain.into_iter().chain(escalation)
    }
}

/// Lower Cholesky factor `L` with `A + jitter * I = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
    jitter: f64,
}

/// Factors in place. Returns `false` on a non-positive or non-finite pivot.
fn factor_in_place(a: &mut [f64], n: usize) -> bool {
    for k in 0..n {
        let (head, tail) = a.split_at_mut((k + 1) * n);
        let col_k = &mut head[k * n..];
        let pivot = col_k[k];
        if !(pivot > 0.0 && pivot.is_finite()) {
            return false;
        }
        let l_kk = pivot.sqrt();
        col_k[k] = l_kk;
        let inv = 1.0 / l_kk;
        for v in &mut col_k[k + 1..] {
            *v *= inv;
        }
        let col_k = &col_k[..];
        for j in (k + 1)..n {
            let col_j = &mut tail[(j - k - 1) * n..(j - k) * n];
            let f = col_k[j];
            for (x, y) in col_j[j..].iter_mut().zip(&col_k[j..]) {
                *x -= f * y;
            }
        }
    }
    true
}

impl Cholesky {
    /// Factors the matrix produced by `fill`, escalating jitter on failure.
    ///
    /// `fill` must write the lower triangle (including the diagonal) of an
    /// `n x n` column-major buffer. It is called again for every retry.
    pub fn factor_with<F>(n: usize, schedule: &JitterSchedule, mut fill: F) -> Option<Self>
    where
        F: FnMut(&mut [f64]),
    {
        let mut buf = vec![0.0; n * n];
        for jitter in schedule.levels() {
            fill(&mut buf);
            if jitter > 0.0 {
                for i in 0..n {
                    buf[i * n + i] += jitter;
                }
            }
            if factor_in_place(&mut buf, n) {
                return Some(Cholesky {
                    n,
                    lower: buf,
                    jitter,
                });
            }
        }
        None
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Jitter that was added to the diagonal to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Entry `L[i][j]` for `i >= j`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i >= j);
        self.lower[j * self.n + i]
    }

    /// `log det(A)` from the diagonal of `L`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n)
            .map(|i| self.lower[i * self.n + i].ln())
            .sum::<f64>()
    }

    /// Overwrites `b` with `L^{-1} b`.
    pub fn forward_solve(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let col = &self.lower[k * n..(k + 1) * n];
            let z = b[k] / col[k];
            b[k] = z;
            for (bi, l) in b[k + 1..].iter_mut().zip(&col[k + 1..]) {
                *bi -= l * z;
            }
        }
    }

    /// `y^T A^{-1} y`.
    pub fn quad_form(&self, y: &[f64]) -> f64 {
        let mut z = y.to_vec();
        self.forward_solve(&mut z);
        z.iter().map(|v| v * v).sum()
    }

    /// `L v`.
    pub fn lower_mul(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (k, vk) in v.iter().enumerate() {
            let col = &self.lower[k * n..(k + 1) * n];
            for (o, l) in out[k..].iter_mut().zip(&col[k..]) {
                *o += l * vk;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        let b = DMatrix::from_fn(n, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        });
        &b * b.transpose() + DMatrix::identity(n, n) * 0.1
    }

    fn factor(a: &DMatrix<f64>) -> Cholesky {
        let n = a.nrows();
        Cholesky::factor_with(n, &JitterSchedule::default(), |buf| {
            for j in 0..n {
                for i in j..n {
                    buf[j * n + i] = a[(i, j)];
                }
            }
        })
        .unwrap()
    }

    #[test]
    fn matches_nalgebra_lu() {
        for seed in 0..5 {
            let a = spd(7, seed);
            let ch = factor(&a);
            assert_eq!(ch.jitter(), 0.0);
            let lu = a.clone().lu();
            assert!((ch.log_det() - lu.determinant().ln()).abs() < 1e-10);
            let y: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
            let yv = DMatrix::from_column_slice(7, 1, &y);
            let exact = (yv.transpose() * a.clone().try_inverse().unwrap() * &yv)[(0, 0)];
            assert!((ch.quad_form(&y) - exact).abs() < 1e-9 * exact.abs().max(1.0));
            // L L^T v == A v
            let v: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
            let mut ltv = vec![0.0; 7];
            for j in 0..7 {
                for i in j..7 {
                    ltv[j] += ch.entry(i, j) * v[i];
                }
            }
            let llt_v = ch.lower_mul(&ltv);
            let av = &a * DMatrix::from_column_slice(7, 1, &v);
            for i in 0..7 {
                assert!((llt_v[i] - av[(i, 0)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jitter_escalates_on_singular_matrix() {
        // rank one: all ones
        let ch = Cholesky::factor_with(3, &JitterSchedule::default(), |buf| {
            for j in 0..3 {
                for i in j..3 {
                    buf[j * 3 + i] = 1.0;
                }
            }
        })
        .unwrap();
        assert!(ch.jitter() >= 1e-8 && ch.jitter() <= 1e-2);
    }

    #[test]
    fn gives_up_on_indefinite_matrix() {
        let out = Cholesky::factor_with(2, &JitterSchedule::default(), |buf| {
            buf[0] = -1.0;
            buf[1] = 0.0;
            buf[3] = -1.0;
        });
        assert!(out.is_none());
    }

    #[test]
    fn schedule_levels() {
        let levels: Vec<f64> = JitterSchedule::default().levels().collect();
        assert_eq!(levels.len(), 8);
        assert_eq!(levels[0], 0.0);
        assert!((levels[7] - 1e-2).abs() < 1e-15);
        assert_eq!(JitterSchedule::always().levels().next(), Some(1e-8));
    }
}
