//! Fourier machinery on the periodic box.
//!
//! A field on `n` nodes is identified with its trigonometric interpolant
//! `f(x) = sum_k a_k exp(i k (x - x_0))`, `x_0 = -length/2`, where the Nyquist
//! mode is read as a cosine. All exact-integration tricks (products without
//! aliasing, partial integrals across a kink) go through [`Spectrum`].

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{Field, Grid};

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        if let Some(f) = p.1.get(&(n, forward)) {
            return f.clone();
        }
        let f = if forward { p.0.plan_fft_forward(n) } else { p.0.plan_fft_inverse(n) };
        p.1.insert((n, forward), f.clone());
        f
    })
}

/// Unnormalized forward transform of real samples.
pub fn fft(values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan(buf.len(), true).process(&mut buf);
    buf
}

/// Inverse transform including the `1/n` factor; returns the real part.
pub fn ifft_real(mut coefs: Vec<Complex64>) -> Vec<f64> {
    let n = coefs.len();
    plan(n, false).process(&mut coefs);
    let s = 1.0 / n as f64;
    coefs.into_iter().map(|c| c.re * s).collect()
}

/// Signed integer mode index of FFT slot `j` (Nyquist reported as `+n/2`).
pub fn mode_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

pub fn wavenumber(j: usize, n: usize, length: f64) -> f64 {
    2.0 * PI * mode_index(j, n) as f64 / length
}

/// Apply a Fourier multiplier `m(k, is_nyquist)` to a field.
pub fn apply_multiplier(f: &Field, m: impl Fn(f64, bool) -> Complex64) -> Field {
    let g = *f.grid();
    let n = g.n();
    let mut c = fft(f.values());
    for (j, cj) in c.iter_mut().enumerate() {
        *cj *= m(wavenumber(j, n, g.length()), j == n / 2);
    }
    Field::from_vec(g, ifft_real(c))
}

/// Spectral derivative; odd orders annihilate the (cosine) Nyquist mode.
pub fn derivative(f: &Field, order: u32) -> Field {
    apply_multiplier(f, |k, nyq| {
        if nyq && order % 2 == 1 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, k).powu(order)
        }
    })
}

/// Resample the unnormalized spectrum of an `n`-point field onto `m >= n`
/// points (zero padding). The Nyquist coefficient is split evenly between
/// `+n/2` and `-n/2` so the cosine reading is preserved.
pub fn pad_spectrum(c: &[Complex64], m: usize) -> Vec<Complex64> {
    let n = c.len();
    assert!(m >= n);
    let scale = m as f64 / n as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    if m == n {
        for (o, v) in out.iter_mut().zip(c) {
            *o = v * scale;
        }
        return out;
    }
    for j in 0..n / 2 {
        out[j] = c[j] * scale;
    }
    for j in n / 2 + 1..n {
        out[m - n + j] = c[j] * scale;
    }
    let half = c[n / 2] * (0.5 * scale);
    out[n / 2] = half;
    out[m - n / 2] = half;
    out
}

/// Samples of the trigonometric interpolant of `f` on a refined grid of `m` points.
pub fn upsample(f: &Field, m: usize) -> Vec<f64> {
    ifft_real(pad_spectrum(&fft(f.values()), m))
}

/// Truncate an `m`-point spectrum back to `n` modes (dropping the n-grid Nyquist
/// content, which a product on the finer grid leaves ambiguous).
pub fn truncate_spectrum(c: &[Complex64], n: usize) -> Vec<Complex64> {
    let m = c.len();
    let scale = n as f64 / m as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n / 2 {
        out[j] = c[j] * scale;
    }
    for j in n / 2 + 1..n {
        out[j] = c[m - n + j] * scale;
    }
    out
}

/// Smallest power-of-two multiple of `n` holding a degree-`d` product exactly.
pub fn product_size(n: usize, d: usize) -> usize {
    (d.max(1) * n).next_power_of_two()
}

/// Normalized Fourier coefficients of a trigonometric polynomial on a box.
#[derive(Debug, Clone)]
pub struct Spectrum {
    length: f64,
    /// `a_k` in FFT order; `f(x) = sum a_k e^{i k (x - x0)}` with cosine Nyquist.
    coefs: Vec<Complex64>,
}

impl Spectrum {
    pub fn from_samples(length: f64, samples: &[f64]) -> Spectrum {
        let m = samples.len();
        let s = 1.0 / m as f64;
        let coefs = fft(samples).into_iter().map(|c| c * s).collect();
        Spectrum { length, coefs }
    }

    pub fn of_field(f: &Field) -> Spectrum {
        Spectrum::from_samples(f.grid().length(), f.values())
    }

    /// Exact spectrum of the pointwise product of the interpolants of `fields`.
    pub fn of_product(fields: &[&Field]) -> Spectrum {
        let g = *fields[0].grid();
        let m = product_size(g.n(), fields.len());
        Spectrum::from_samples(g.length(), &product_samples(fields, m))
    }

    pub fn len(&self) -> usize {
        self.coefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefs.is_empty()
    }

    pub fn coefs(&self) -> &[Complex64] {
        &self.coefs
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    fn k(&self, j: usize) -> f64 {
        wavenumber(j, self.coefs.len(), self.length)
    }

    /// Evaluate the interpolant at an arbitrary point.
    pub fn eval(&self, x: f64) -> f64 {
        let m = self.coefs.len();
        let s = x + 0.5 * self.length;
        let mut acc = self.coefs[0].re;
        for j in 1..m / 2 {
            let (sn, cs) = (self.k(j) * s).sin_cos();
            let a = self.coefs[j];
            // conjugate-symmetric pair j, m-j contributes 2 Re(a e^{iks})
            acc += 2.0 * (a.re * cs - a.im * sn);
        }
        acc + self.coefs[m / 2].re * (self.k(m / 2) * s).cos()
    }

    /// Evaluate the `order`-th derivative of the interpolant at a point.
    pub fn eval_derivative(&self, x: f64, order: u32) -> f64 {
        let m = self.coefs.len();
        let s = x + 0.5 * self.length;
        let mut acc = 0.0;
        for j in 1..m / 2 {
            let k = self.k(j);
            let e = Complex64::new(0.0, k * s).exp() * Complex64::new(0.0, k).powu(order);
            acc += 2.0 * (self.coefs[j] * e).re;
        }
        let kn = self.k(m / 2);
        let nyq = self.coefs[m / 2].re;
        // derivatives of a cos(k s)
        acc += match order % 4 {
            0 => nyq * kn.powi(order as i32) * (kn * s).cos(),
            1 => -nyq * kn.powi(order as i32) * (kn * s).sin(),
            2 => -nyq * kn.powi(order as i32) * (kn * s).cos(),
            _ => nyq * kn.powi(order as i32) * (kn * s).sin(),
        };
        if order == 0 {
            acc += self.coefs[0].re;
        }
        acc
    }

    /// Integral over the whole box.
    pub fn total(&self) -> f64 {
        self.coefs[0].re * self.length
    }

    /// Exact integral of the interpolant over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let m = self.coefs.len();
        let sa = a + 0.5 * self.length;
        let sb = b + 0.5 * self.length;
        let mut acc = self.coefs[0].re * (b - a);
        for j in 1..m / 2 {
            let k = self.k(j);
            let eb = Complex64::new(0.0, k * sb).exp();
            let ea = Complex64::new(0.0, k * sa).exp();
            let v = self.coefs[j] * (eb - ea) / Complex64::new(0.0, k);
            acc += 2.0 * v.re;
        }
        let kn = self.k(m / 2);
        acc + self.coefs[m / 2].re * ((kn * sb).sin() - (kn * sa).sin()) / kn
    }
}

/// Pointwise product of the interpolants of `fields`, sampled on `m` points.
pub fn product_samples(fields: &[&Field], m: usize) -> Vec<f64> {
    let mut acc = upsample(fields[0], m);
    for f in &fields[1..] {
        let s = upsample(f, m);
        for (a, b) in acc.iter_mut().zip(s) {
            *a *= b;
        }
    }
    acc
}

/// Exact integral over the box of the product of the interpolants.
pub fn product_integral(fields: &[&Field]) -> f64 {
    let g = *fields[0].grid();
    let m = product_size(g.n(), fields.len());
    let s = product_samples(fields, m);
    g.length() * s.iter().sum::<f64>() / m as f64
}

/// Integral of `left` over `[-L/2, xi]` plus `right` over `[xi, L/2]`, both exact.
pub fn split_integral(left: &Spectrum, right: &Spectrum, xi: f64) -> f64 {
    let half = 0.5 * left.length();
    left.integral(-half, xi) + right.integral(xi, half)
}

/// Barycentric trigonometric interpolation (even `n`) at a point.
///
/// Equivalent to [`Spectrum::eval`] but needs no transform, so it is the
/// cheaper choice for a handful of evaluations per field.
pub fn barycentric_eval(f: &Field, x: f64) -> f64 {
    let g = f.grid();
    let scale = PI / g.length();
    let (mut num, mut den) = (0.0, 0.0);
    for (j, &v) in f.values().iter().enumerate() {
        let t = ((x - g.node(j)) * scale).tan();
        if t.abs() < 1e-14 {
            return v;
        }
        let w = if j % 2 == 0 { 1.0 } else { -1.0 } / t;
        num += w * v;
        den += w;
    }
    num / den
}

/// Samples of a closed-form function on the `m`-point refinement of a grid.
pub fn fine_nodes(g: &Grid, m: usize) -> Vec<f64> {
    let h = g.length() / m as f64;
    (0..m).map(|j| g.left() + j as f64 * h).collect()
}

/// Random trigonometric polynomial with modes `1..=kmax` (amplitudes `~1/k`)
/// and a random mean; deterministic in `seed`.
pub fn random_band_limited(grid: Grid, kmax: usize, seed: u64) -> Field {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64, f64)> = (1..=kmax)
        .map(|k| {
            let w = 2.0 * PI * k as f64 / grid.length();
            (w, rng.gen_range(-1.0..1.0) / k as f64, rng.gen_range(-1.0..1.0) / k as f64)
        })
        .collect();
    let c0: f64 = rng.gen_range(-0.5..0.5);
    Field::from_fn(grid, |x| c0 + modes.iter().map(|(w, a, b)| a * (w * x).cos() + b * (w * x).sin()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(2.0 * PI, 32).unwrap()
    }

    #[test]
    fn derivative_orders_compose() {
        let g = Grid::new(10.0, 64).unwrap();
        let w = 2.0 * PI / 10.0;
        let f = Field::from_fn(g, |x| (3.0 * w * x).sin() + (5.0 * w * x).cos() * 0.3);
        let d1 = derivative(&f, 1);
        let d2 = derivative(&f, 2);
        let dd = derivative(&d1, 1);
        for (a, b) in d2.values().iter().zip(dd.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolant_eval_and_integral() {
        let g = grid();
        let f = Field::from_fn(g, |x| 1.0 + (2.0 * x).sin() + 0.5 * (5.0 * x).cos());
        let s = Spectrum::of_field(&f);
        let x: f64 = 0.3141;
        let exact = 1.0 + (2.0 * x).sin() + 0.5 * (5.0 * x).cos();
        assert!((s.eval(x) - exact).abs() < 1e-12);
        assert!((barycentric_eval(&f, x) - exact).abs() < 1e-12);
        let d = 2.0 * (2.0 * x).cos() - 2.5 * (5.0 * x).sin();
        assert!((s.eval_derivative(x, 1) - d).abs() < 1e-11);
        let (a, b) = (-1.0, 0.7);
        let anti = |x: f64| x - 0.5 * (2.0 * x).cos() + 0.1 * (5.0 * x).sin();
        assert!((s.integral(a, b) - (anti(b) - anti(a))).abs() < 1e-12);
        assert!((s.total() - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn nyquist_is_a_cosine() {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        // cos(8 (x - x0)) alternates +-1 on the nodes
        let f = Field::from_fn(g, |x| (8.0 * (x + PI)).cos());
        let s = Spectrum::of_field(&f);
        let x: f64 = 0.123;
        assert!((s.eval(x) - (8.0 * (x + PI)).cos()).abs() < 1e-12);
        assert!((barycentric_eval(&f, x) - (8.0 * (x + PI)).cos()).abs() < 1e-12);
        let up = upsample(&f, 64);
        for (j, v) in up.iter().enumerate() {
            let xx = -PI + j as f64 * 2.0 * PI / 64.0;
            assert!((v - (8.0 * (xx + PI)).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn products_are_exact() {
        let g = grid();
        let f = Field::from_fn(g, |x| (15.0 * x).cos());
        // trapezoid would alias cos^2(15x) modes onto the mean incorrectly only at
        // higher degree; cubic products need padding
        let cube = product_integral(&[&f, &f, &f, &f]);
        assert!((cube - 2.0 * PI * 3.0 / 8.0).abs() < 1e-12);
        let sp = Spectrum::of_product(&[&f, &f]);
        let exact = |a: f64, b: f64| 0.5 * (b - a) + ((30.0 * b).sin() - (30.0 * a).sin()) / 60.0;
        assert!((sp.integral(-0.4, 1.1) - exact(-0.4, 1.1)).abs() < 1e-12);
    }

    #[test]
    fn truncate_inverts_pad() {
        let g = grid();
        let f = Field::from_fn(g, |x| (3.0 * x).sin() + 0.2);
        let c = fft(f.values());
        let back = truncate_spectrum(&pad_spectrum(&c, 96), 32);
        let v = ifft_real(back);
        for (a, b) in v.iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
