use crate::diffcore::Real;

/// Dense Cholesky factor `M = L Lᵀ` built from differentiable primitives.
#[derive(Debug, Clone)]
pub struct Cholesky<S> {
    n: usize,
    /// Row-major lower triangle.
    l: Vec<S>,
}

impl<S: Real> Cholesky<S> {
    /// Returns `None` if a pivot is not strictly positive.
    pub fn factor(m: &[S], n: usize) -> Option<Self> {
        let mut l = vec![S::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut acc = m[i * n + j];
                for k in 0..j {
                    acc -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(acc.value() > 0.0) {
                        return None;
                    }
                    l[i * n + i] = acc.sqrt();
                } else {
                    l[i * n + j] = acc / l[j * n + j];
                }
            }
        }
        Some(Cholesky { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut acc = y[i];
            for k in 0..i {
                acc -= self.l[i * n + k] * y[k];
            }
            y[i] = acc / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for k in i + 1..n {
                acc -= self.l[k * n + i] * y[k];
            }
            y[i] = acc / self.l[i * n + i];
        }
        y
    }
}

pub fn mat_vec<S: Real>(m: &[S], n: usize, x: &[S]) -> Vec<S> {
    (0..n)
        .map(|i| {
            let mut acc = S::zero();
            for j in 0..n {
                acc += m[i * n + j] * x[j];
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let m = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let ch = Cholesky::factor(&m, 3).unwrap();
        let x = ch.solve(&[1.0, 2.0, 3.0]);
        let back = mat_vec(&m, 3, &x);
        for (a, b) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        assert!(Cholesky::factor(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }
}
