//! Orthonormal 2D DCT-II on square blocks and zigzag scan orders.

/// Basis matrix of an `n`-point orthonormal DCT-II, row `k` holds frequency `k`.
#[derive(Debug, Clone)]
pub struct Dct {
    n: usize,
    basis: Vec<f64>,
}

impl Dct {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "DCT size must be positive");
        let mut basis = vec![0.0; n * n];
        let nf = n as f64;
        for k in 0..n {
            let norm = if k == 0 {
                (1.0 / nf).sqrt()
            } else {
                (2.0 / nf).sqrt()
            };
            for i in 0..n {
                basis[k * n + i] =
                    norm * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos();
            }
        }
        Self { n, basis }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// `out = B · block · Bᵀ` for a row-major `n×n` block.
    pub fn forward(&self, block: &[f64], out: &mut [f64]) {
        self.apply(block, out, false);
    }

    /// `out = Bᵀ · coeffs · B`.
    pub fn inverse(&self, coeffs: &[f64], out: &mut [f64]) {
        self.apply(coeffs, out, true);
    }

    fn apply(&self, src: &[f64], out: &mut [f64], transpose: bool) {
        let n = self.n;
        debug_assert_eq!(src.len(), n * n);
        let b = |r: usize, c: usize| {
            if transpose {
                self.basis[c * n + r]
            } else {
                self.basis[r * n + c]
            }
        };
        let mut tmp = vec![0.0; n * n];
        // rows: tmp = src · Bᵀ (or src · B)
        for y in 0..n {
            for k in 0..n {
                let mut acc = 0.0;
                for x in 0..n {
                    acc += src[y * n + x] * b(k, x);
                }
                tmp[y * n + k] = acc;
            }
        }
        // columns: out = B · tmp
        for k in 0..n {
            for x in 0..n {
                let mut acc = 0.0;
                for y in 0..n {
                    acc += b(k, y) * tmp[y * n + x];
                }
                out[k * n + x] = acc;
            }
        }
    }
}

/// Zigzag scan of an `n×n` block: entry `i` is the row-major index visited
/// `i`-th, starting at DC.
pub fn zigzag(n: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(n * n);
    for s in 0..(2 * n - 1) {
        let lo = s.saturating_sub(n - 1);
        let hi = s.min(n - 1);
        if s % 2 == 0 {
            for r in (lo..=hi).rev() {
                order.push(r * n + (s - r));
            }
        } else {
            for r in lo..=hi {
                order.push(r * n + (s - r));
            }
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        for n in [1, 4, 6, 8] {
            let d = Dct::new(n);
            let block: Vec<f64> = (0..n * n).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
            let mut c = vec![0.0; n * n];
            let mut back = vec![0.0; n * n];
            d.forward(&block, &mut c);
            d.inverse(&c, &mut back);
            for (a, b) in block.iter().zip(&back) {
                assert!((a - b).abs() < 1e-10);
            }
            let e0: f64 = block.iter().map(|v| v * v).sum();
            let e1: f64 = c.iter().map(|v| v * v).sum();
            assert!((e0 - e1).abs() < 1e-8, "Parseval");
        }
    }

    #[test]
    fn constant_block_is_pure_dc() {
        let d = Dct::new(8);
        let mut c = vec![0.0; 64];
        d.forward(&[2.0; 64], &mut c);
        assert!((c[0] - 16.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zigzag_matches_jpeg_prefix() {
        assert_eq!(&zigzag(8)[..10], &[0, 1, 8, 16, 9, 2, 3, 10, 17, 24]);
        let mut z = zigzag(6);
        z.sort();
        assert_eq!(z, (0..36).collect::<Vec<_>>());
    }
}
