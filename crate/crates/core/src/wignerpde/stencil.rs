//! Fourth-order central difference stencils with zero values outside the grid.

/// Coefficients for offsets −half..=half, unscaled (grid spacing 1).
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub coeffs: &'static [f64],
}

pub const D1: Stencil = Stencil { coeffs: &[1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0] };
pub const D2: Stencil = Stencil { coeffs: &[-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0] };
pub const D3: Stencil = Stencil { coeffs: &[1.0 / 8.0, -1.0, 13.0 / 8.0, 0.0, -13.0 / 8.0, 1.0, -1.0 / 8.0] };
pub const D5: Stencil = Stencil {
    coeffs: &[
        1.0 / 6.0,
        -3.0 / 2.0,
        13.0 / 3.0,
        -29.0 / 6.0,
        0.0,
        29.0 / 6.0,
        -13.0 / 3.0,
        3.0 / 2.0,
        -1.0 / 6.0,
    ],
};

impl Stencil {
    pub fn half(&self) -> usize {
        self.coeffs.len() / 2
    }

    /// out[j] += scale · Σ_k c_k f[j + k − half], treating f as zero off the ends.
    pub fn apply_add(&self, f: &[f64], scale: f64, out: &mut [f64]) {
        let n = f.len();
        let h = self.half();
        for (k, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let w = c * scale;
            // j + k − h in [0, n)
            let lo = h.saturating_sub(k);
            let hi = (n + h).saturating_sub(k).min(n);
            if lo >= hi {
                continue;
            }
            let src = &f[lo + k - h..hi + k - h];
            for (o, v) in out[lo..hi].iter_mut().zip(src) {
                *o += w * v;
            }
        }
    }

    /// Largest |symbol| over the Nyquist band, per unit spacing.
    pub fn spectral_radius(&self) -> f64 {
        let h = self.half() as f64;
        (0..=2000)
            .map(|s| {
                let theta = std::f64::consts::PI * s as f64 / 2000.0;
                let (mut re, mut im) = (0.0, 0.0);
                for (k, c) in self.coeffs.iter().enumerate() {
                    let phase = (k as f64 - h) * theta;
                    re += c * phase.cos();
                    im += c * phase.sin();
                }
                (re * re + im * im).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(s: &Stencil, f: &[f64], h: f64, order: i32) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        s.apply_add(f, 1.0 / h.powi(order), &mut out);
        out
    }

    #[test]
    fn stencils_are_fourth_order_on_a_smooth_function() {
        // f = sin(x): derivatives cycle through cos, −sin, −cos, sin, cos
        let exact = |order: i32, x: f64| match order.rem_euclid(4) {
            0 => x.sin(),
            1 => x.cos(),
            2 => -x.sin(),
            _ => -x.cos(),
        };
        // coarser grids for high orders keep rounding (~ε/hⁿ) below truncation
        for (s, order, n0) in [(D1, 1, 20), (D2, 2, 20), (D3, 3, 10), (D5, 5, 5)] {
            let err = |n: usize| {
                let h = 1.0 / n as f64;
                let f: Vec<f64> = (0..4 * n).map(|j| (j as f64 * h).sin()).collect();
                let d = apply(&s, &f, h, order);
                let mid = 2 * n;
                (d[mid] - exact(order, mid as f64 * h)).abs()
            };
            let ratio = err(n0) / err(2 * n0);
            assert!((ratio.log2() - 4.0).abs() < 0.3, "order {order}: ratio {ratio}");
        }
    }

    #[test]
    fn stencil_sums_vanish_for_interior_support() {
        let mut f = vec![0.0; 40];
        for (j, v) in f.iter_mut().enumerate().take(30).skip(10) {
            *v = ((j as f64) * 0.37).sin().powi(2);
        }
        for s in [D1, D2, D3, D5] {
            let d = apply(&s, &f, 1.0, 0);
            assert!(d.iter().sum::<f64>().abs() < 1e-13);
        }
    }

    #[test]
    fn spectral_radii() {
        assert!((D2.spectral_radius() - 16.0 / 3.0).abs() < 1e-9);
        assert!(D1.spectral_radius() > 1.37 && D1.spectral_radius() < 1.38);
    }
}
