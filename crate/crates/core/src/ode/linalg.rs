//! Dense LU with partial pivoting for the tiny stage systems (at most 12x12).
//!
//! Allocation-free: the implicit stepper sits in the innermost loop of every
//! sweep, so the factorization works in fixed-size stack arrays.

#[derive(Debug, Clone)]
pub(crate) struct Lu<const N: usize> {
    a: [[f64; N]; N],
    piv: [usize; N],
    n: usize,
}

impl<const N: usize> Lu<N> {
    /// Factors the leading `n x n` block of `a`. Returns `None` on a
    /// numerically singular pivot.
    pub fn factor(mut a: [[f64; N]; N], n: usize) -> Option<Self> {
        debug_assert!(n <= N);
        let mut piv = [0usize; N];
        for (k, p) in piv.iter_mut().enumerate() {
            *p = k;
        }
        for k in 0..n {
            let mut imax = k;
            let mut amax = a[k][k].abs();
            for (i, row) in a.iter().enumerate().take(n).skip(k + 1) {
                let v = row[k].abs();
                if v > amax {
                    amax = v;
                    imax = i;
                }
            }
            if !(amax > 0.0) || !amax.is_finite() {
                return None;
            }
            if imax != k {
                a.swap(k, imax);
                piv.swap(k, imax);
            }
            let pivot = a[k][k];
            for i in k + 1..n {
                let m = a[i][k] / pivot;
                a[i][k] = m;
                for j in k + 1..n {
                    a[i][j] -= m * a[k][j];
                }
            }
        }
        Some(Lu { a, piv, n })
    }

    /// Solves in place: `b` holds the right-hand side on entry and the
    /// solution on exit (leading `n` entries).
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x = [0.0f64; N];
        for i in 0..n {
            x[i] = b[self.piv[i]];
        }
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.a[i][j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.a[i][j] * x[j];
            }
            x[i] = s / self.a[i][i];
        }
        b[..n].copy_from_slice(&x[..n]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let mut a = [[0.0; 4]; 4];
        a[0] = [4.0, 1.0, 0.0, 0.0];
        a[1] = [1.0, 3.0, 1.0, 0.0];
        a[2] = [0.0, 1.0, 2.0, 0.0];
        let lu = Lu::factor(a, 3).unwrap();
        let mut b = [9.0, 10.0, 5.0, 0.0];
        lu.solve(&mut b);
        // residual check
        let x = b;
        let r0 = 4.0 * x[0] + x[1] - 9.0;
        let r1 = x[0] + 3.0 * x[1] + x[2] - 10.0;
        let r2 = x[1] + 2.0 * x[2] - 5.0;
        assert!(r0.abs() < 1e-12 && r1.abs() < 1e-12 && r2.abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_detected() {
        let mut a = [[0.0; 4]; 4];
        a[0] = [1.0, 2.0, 0.0, 0.0];
        a[1] = [2.0, 4.0, 0.0, 0.0];
        assert!(Lu::<4>::factor(a, 2).is_none());
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let mut a = [[0.0; 4]; 4];
        a[0] = [0.0, 1.0, 0.0, 0.0];
        a[1] = [1.0, 0.0, 0.0, 0.0];
        let lu = Lu::factor(a, 2).unwrap();
        let mut b = [3.0, 7.0, 0.0, 0.0];
        lu.solve(&mut b);
        assert_eq!(b[0], 7.0);
        assert_eq!(b[1], 3.0);
    }
}
