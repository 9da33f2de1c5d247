//! Monotonic rational-quadratic spline on `[-B, B]` with identity tails.
//!
//! A spline with `K` bins is described by `K + 1` knots `(x_k, y_k)` running
//! from `(-B, -B)` to `(B, B)` and by positive slopes `δ_k` at the knots.
//! Inside bin `k`, with `w = x_{k+1} - x_k`, `h = y_{k+1} - y_k`,
//! `s = h / w` and `ξ = (x - x_k) / w`:
//!
//! ```text
//! y = y_k + h (s ξ² + δ_k ξ(1-ξ)) / (s + (δ_{k+1} + δ_k - 2s) ξ(1-ξ))
//! ```
//!
//! The boundary slopes are fixed to 1 so the map is C¹ at `±B`.
//!
//! Raw conditioner outputs are laid out as `[widths (K), heights (K),
//! interior derivatives (K-1)]`.

use crate::error::{Error, Result};
use crate::nn::{sigmoid, softplus};

/// Smallest bin width, as a fraction of the support width `2B`.
pub const MIN_BIN_WIDTH: f64 = 1e-3;
/// Smallest bin height, as a fraction of `2B`.
pub const MIN_BIN_HEIGHT: f64 = 1e-3;
/// Smallest interior knot slope.
pub const MIN_DERIVATIVE: f64 = 1e-3;

/// Shift applied inside the softplus so a raw value of 0 gives slope 1.
fn derivative_shift() -> f64 {
    (1.0 - MIN_DERIVATIVE).exp_m1().ln()
}

/// Number of raw parameters per transformed element.
pub fn raw_len(k_bins: usize) -> usize {
    3 * k_bins - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineParams {
    pub knot_x: Vec<f64>,
    pub knot_y: Vec<f64>,
    pub derivs: Vec<f64>,
    pub support_b: f64,
}

impl SplineParams {
    /// The identity spline with `k_bins` uniform bins.
    pub fn identity(k_bins: usize, support_b: f64) -> Self {
        let knots: Vec<f64> = (0..=k_bins)
            .map(|i| -support_b + 2.0 * support_b * i as f64 / k_bins as f64)
            .collect();
        Self {
            knot_x: knots.clone(),
            knot_y: knots,
            derivs: vec![1.0; k_bins + 1],
            support_b,
        }
    }

    pub fn k_bins(&self) -> usize {
        self.knot_x.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.knot_x.len();
        if k < 3 || self.knot_y.len() != k || self.derivs.len() != k {
            return Err(Error::invalid(
                "spline arrays must share length K+1 with K >= 2",
            ));
        }
        if !(self.support_b > 0.0 && self.support_b.is_finite()) {
            return Err(Error::invalid("support B must be positive and finite"));
        }
        let b = self.support_b;
        let tol = 1e-9 * b;
        for knots in [&self.knot_x, &self.knot_y] {
            if (knots[0] + b).abs() > tol || (knots[k - 1] - b).abs() > tol {
                return Err(Error::invalid("knots must run from -B to B"));
            }
            if knots.windows(2).any(|p| !(p[1] > p[0])) {
                return Err(Error::invalid("knots must strictly increase"));
            }
        }
        if self.derivs.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::invalid(
                "knot derivatives must be positive and finite",
            ));
        }
        Ok(())
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Knot positions from width/height logits: softmax, floor, scale to 2B,
/// cumulative sum from -B. The last knot is pinned to B.
fn knots_from_logits(logits: &[f64], min_frac: f64, support_b: f64) -> (Vec<f64>, Vec<f64>) {
    let k = logits.len();
    let soft = softmax(logits);
    let mut knots = Vec::with_capacity(k + 1);
    knots.push(-support_b);
    let mut acc = -support_b;
    for p in &soft[..k - 1] {
        acc += 2.0 * support_b * (min_frac + (1.0 - min_frac * k as f64) * p);
        knots.push(acc);
    }
    knots.push(support_b);
    (knots, soft)
}

fn check_raw(raw: &[f64], k_bins: usize, support_b: f64) -> Result<()> {
    if k_bins < 2 {
        return Err(Error::invalid(format!("k_bins must be >= 2, got {k_bins}")));
    }
    if !(support_b > 0.0 && support_b.is_finite()) {
        return Err(Error::invalid(format!(
            "support_b must be positive, got {support_b}"
        )));
    }
    if raw.len() != raw_len(k_bins) {
        return Err(Error::invalid(format!(
            "expected {} raw spline parameters, got {}",
            raw_len(k_bins),
            raw.len()
        )));
    }
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "raw spline parameter {i} is not finite"
        )));
    }
    Ok(())
}

struct Built {
    params: SplineParams,
    width_soft: Vec<f64>,
    height_soft: Vec<f64>,
}

fn build(raw: &[f64], k_bins: usize, support_b: f64) -> Result<Built> {
    check_raw(raw, k_bins, support_b)?;
    let (knot_x, width_soft) = knots_from_logits(&raw[..k_bins], MIN_BIN_WIDTH, support_b);
    let (knot_y, height_soft) =
        knots_from_logits(&raw[k_bins..2 * k_bins], MIN_BIN_HEIGHT, support_b);
    let shift = derivative_shift();
    let mut derivs = Vec::with_capacity(k_bins + 1);
    derivs.push(1.0);
    derivs.extend(
        raw[2 * k_bins..]
            .iter()
            .map(|r| MIN_DERIVATIVE + softplus(r + shift)),
    );
    derivs.push(1.0);
    Ok(Built {
        params: SplineParams {
            knot_x,
            knot_y,
            derivs,
            support_b,
        },
        width_soft,
        height_soft,
    })
}

/// Builds knots and slopes from `3K - 1` raw conditioner outputs.
pub fn build_spline_params(raw: &[f64], k_bins: usize, support_b: f64) -> Result<SplineParams> {
    build(raw, k_bins, support_b).map(|b| b.params)
}

/// Bin index with `knots[k] <= v < knots[k+1]`; ties go to the higher bin
/// and `v == knots[K]` lands in the last bin.
fn locate(knots: &[f64], v: f64) -> usize {
    let k = knots.len() - 1;
    knots[1..k].partition_point(|&t| t <= v)
}

/// Local quantities of one bin evaluated at a position `ξ`.
struct BinEval {
    y: f64,
    log_deriv: f64,
    /// ∂y/∂x
    dy_dx: f64,
}

struct Bin {
    xk: f64,
    w: f64,
    yk: f64,
    h: f64,
    d0: f64,
    d1: f64,
}

impl Bin {
    fn of(p: &SplineParams, k: usize) -> Self {
        Self {
            xk: p.knot_x[k],
            w: p.knot_x[k + 1] - p.knot_x[k],
            yk: p.knot_y[k],
            h: p.knot_y[k + 1] - p.knot_y[k],
            d0: p.derivs[k],
            d1: p.derivs[k + 1],
        }
    }

    fn eval(&self, xi: f64) -> BinEval {
        let s = self.h / self.w;
        let t = xi * (1.0 - xi);
        let num = self.h * (s * xi * xi + self.d0 * t);
        let den = s + (self.d0 + self.d1 - 2.0 * s) * t;
        let n = self.d1 * xi * xi + 2.0 * s * t + self.d0 * (1.0 - xi) * (1.0 - xi);
        let dy_dx = s * s * n / (den * den);
        BinEval {
            y: self.yk + num / den,
            log_deriv: 2.0 * s.ln() + n.ln() - 2.0 * den.ln(),
            dy_dx,
        }
    }

    /// Root `ξ ∈ [0, 1]` of the bin's quadratic for output `y`.
    fn solve(&self, y: f64) -> Result<f64> {
        let s = self.h / self.w;
        let dy = y - self.yk;
        let curv = self.d0 + self.d1 - 2.0 * s;
        let a = self.h * (s - self.d0) + dy * curv;
        let b = self.h * self.d0 - dy * curv;
        let c = -s * dy;
        let disc = b * b - 4.0 * a * c;
        if !(disc >= 0.0) {
            return Err(Error::numeric(
                "rqs_inverse",
                format!("negative discriminant {disc:e}; spline parameters are corrupted"),
            ));
        }
        Ok((2.0 * c / (-b - disc.sqrt())).clamp(0.0, 1.0))
    }

    /// Partials of `y` and of `ln dy/dx` at fixed `x` with respect to
    /// `(x_k, x_{k+1}, y_k, y_{k+1}, δ_k, δ_{k+1})`, plus `∂ ln(dy/dx)/∂x`.
    fn partials(&self, xi: f64) -> ([f64; 6], [f64; 6], f64) {
        let (w, h, d0, d1) = (self.w, self.h, self.d0, self.d1);
        let s = h / w;
        let t = xi * (1.0 - xi);
        let a = s * xi * xi + d0 * t;
        let den = s + (d0 + d1 - 2.0 * s) * t;
        let n = d1 * xi * xi + 2.0 * s * t + d0 * (1.0 - xi) * (1.0 - xi);
        let den2 = den * den;

        let a_xi = 2.0 * s * xi + d0 * (1.0 - 2.0 * xi);
        let den_xi = (d0 + d1 - 2.0 * s) * (1.0 - 2.0 * xi);
        let n_xi = 2.0 * d1 * xi + 2.0 * s * (1.0 - 2.0 * xi) - 2.0 * d0 * (1.0 - xi);

        // y partials in (ξ, s, h|s, δ0, δ1); ∂y/∂y_k = 1.
        let y_xi = h * (a_xi * den - a * den_xi) / den2;
        let y_s = h * (xi * xi * den - a * (1.0 - 2.0 * t)) / den2;
        let y_h = a / den;
        let y_d0 = h * t * (den - a) / den2;
        let y_d1 = -h * a * t / den2;

        // ln(dy/dx) partials.
        let l_xi = n_xi / n - 2.0 * den_xi / den;
        let l_s = 2.0 / s + 2.0 * t / n - 2.0 * (1.0 - 2.0 * t) / den;
        let l_d0 = (1.0 - xi) * (1.0 - xi) / n - 2.0 * t / den;
        let l_d1 = xi * xi / n - 2.0 * t / den;

        // ξ = (x - x_k)/w, s = h/w.
        let chain = |f_xi: f64, f_s: f64, f_h: f64, f_yk: f64, f_d0: f64, f_d1: f64| {
            let f_xk = -f_xi / w;
            let f_w = -(f_xi * xi + f_s * s) / w;
            let f_hh = f_h + f_s / w;
            [f_xk - f_w, f_w, f_yk - f_hh, f_hh, f_d0, f_d1]
        };
        (
            chain(y_xi, y_s, y_h, 1.0, y_d0, y_d1),
            chain(l_xi, l_s, 0.0, 0.0, l_d0, l_d1),
            l_xi / w,
        )
    }
}

/// Applies the spline; returns `(y, ln |dy/dx|)`. Identity outside `[-B, B]`.
pub fn rqs_forward(x_in: f64, p: &SplineParams) -> (f64, f64) {
    debug_assert!(p.validate().is_ok(), "invalid spline parameters");
    let b = p.support_b;
    if !(-b..=b).contains(&x_in) {
        return (x_in, 0.0);
    }
    let k = locate(&p.knot_x, x_in);
    let bin = Bin::of(p, k);
    let xi = ((x_in - bin.xk) / bin.w).clamp(0.0, 1.0);
    let e = bin.eval(xi);
    (e.y, e.log_deriv)
}

/// Inverts the spline; returns `(x, ln |dx/dy|)`. Identity outside `[-B, B]`.
pub fn rqs_inverse(y_in: f64, p: &SplineParams) -> Result<(f64, f64)> {
    let b = p.support_b;
    if !(-b..=b).contains(&y_in) {
        return Ok((y_in, 0.0));
    }
    let k = locate(&p.knot_y, y_in);
    let bin = Bin::of(p, k);
    let xi = bin.solve(y_in)?;
    let e = bin.eval(xi);
    Ok((bin.xk + xi * bin.w, -e.log_deriv))
}

/// Backward pass of [`rqs_inverse`] through the raw parameterization.
///
/// Given upstream gradients `gx` on the output `x` and `gld` on the
/// inverse log-derivative, accumulates into `graw` (length `3K - 1`) and
/// returns the gradient with respect to `y_in`. Also returns the forward
/// results so callers need not evaluate twice.
pub(crate) fn rqs_inverse_backward(
    y_in: f64,
    raw: &[f64],
    k_bins: usize,
    support_b: f64,
    gx: f64,
    gld: f64,
    graw: &mut [f64],
) -> Result<(f64, f64, f64)> {
    if !(-support_b..=support_b).contains(&y_in) {
        return Ok((y_in, 0.0, gx));
    }
    let built = build(raw, k_bins, support_b)?;
    let p = &built.params;
    let k = locate(&p.knot_y, y_in);
    let bin = Bin::of(p, k);
    let xi = bin.solve(y_in)?;
    let e = bin.eval(xi);
    let x = bin.xk + xi * bin.w;
    let (y_p, l_p, l_x) = bin.partials(xi);

    // x = g(y, θ) with f(g(y, θ), θ) = y; inverse log-det is -L(x, θ).
    let gx_eff = gx - gld * l_x;
    let gy = gx_eff / e.dy_dx;
    let mut g_local = [0.0; 6];
    for i in 0..6 {
        g_local[i] = -gx_eff * y_p[i] / e.dy_dx - gld * l_p[i];
    }

    let mut g_knot_x = vec![0.0; k_bins + 1];
    let mut g_knot_y = vec![0.0; k_bins + 1];
    let mut g_derivs = vec![0.0; k_bins + 1];
    g_knot_x[k] += g_local[0];
    g_knot_x[k + 1] += g_local[1];
    g_knot_y[k] += g_local[2];
    g_knot_y[k + 1] += g_local[3];
    g_derivs[k] += g_local[4];
    g_derivs[k + 1] += g_local[5];

    knot_logits_backward(
        &g_knot_x,
        &built.width_soft,
        MIN_BIN_WIDTH,
        support_b,
        &mut graw[..k_bins],
    );
    knot_logits_backward(
        &g_knot_y,
        &built.height_soft,
        MIN_BIN_HEIGHT,
        support_b,
        &mut graw[k_bins..2 * k_bins],
    );
    let shift = derivative_shift();
    for (j, g) in graw[2 * k_bins..].iter_mut().enumerate() {
        // derivs[j + 1] = floor + softplus(raw + shift)
        *g += g_derivs[j + 1] * sigmoid(raw[2 * k_bins + j] + shift);
    }
    Ok((x, -e.log_deriv, gy))
}

fn knot_logits_backward(
    g_knots: &[f64],
    soft: &[f64],
    min_frac: f64,
    support_b: f64,
    graw: &mut [f64],
) {
    let k = soft.len();
    // knots[j] = -B + Σ_{i<j} width_i for 1 <= j <= K-1; the end knots are fixed.
    let mut g_soft = vec![0.0; k];
    let mut suffix = 0.0;
    for i in (0..k - 1).rev() {
        suffix += g_knots[i + 1];
        g_soft[i] = suffix * 2.0 * support_b * (1.0 - min_frac * k as f64);
    }
    let dot: f64 = g_soft.iter().zip(soft).map(|(g, p)| g * p).sum();
    for ((g, gs), p) in graw.iter_mut().zip(&g_soft).zip(soft) {
        *g += p * (gs - dot);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_raw(rng: &mut ChaCha8Rng, k: usize, scale: f64) -> Vec<f64> {
        (0..raw_len(k))
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn bisect(y: f64, p: &SplineParams) -> f64 {
        let (mut lo, mut hi) = (-p.support_b, p.support_b);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rqs_forward(mid, p).0 < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn equal_width_logits_give_uniform_knots() {
        let mut raw = vec![0.0; raw_len(5)];
        raw[..5].fill(3.25);
        let p = build_spline_params(&raw, 5, 2.0).unwrap();
        for (i, x) in p.knot_x.iter().enumerate() {
            assert!((x - (-2.0 + 0.8 * i as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn eight_bins_on_fifteen() {
        let p = build_spline_params(&vec![0.0; raw_len(8)], 8, 15.0).unwrap();
        assert_eq!(p.knot_x.len(), 9);
        assert_eq!(p.knot_x[0], -15.0);
        assert_eq!(p.knot_x[8], 15.0);
        assert_eq!(p.derivs[0], 1.0);
        assert_eq!(p.derivs[8], 1.0);
        // zero logits give slope 1 at interior knots
        for d in &p.derivs {
            assert!((d - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_raw() {
        let mut raw = vec![0.0; raw_len(4)];
        raw[3] = f64::NAN;
        assert!(matches!(
            build_spline_params(&raw, 4, 1.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(build_spline_params(&[0.0; 5], 4, 1.0).is_err());
        assert!(build_spline_params(&[0.0; 2], 1, 1.0).is_err());
    }

    #[test]
    fn identity_spline_maps_to_itself() {
        let p = SplineParams::identity(8, 15.0);
        let (y, ld) = rqs_forward(3.7, &p);
        assert!((y - 3.7).abs() < 1e-14);
        assert!(ld.abs() < 1e-14);
        let (x, ld) = rqs_inverse(-2.5, &p).unwrap();
        assert!((x + 2.5).abs() < 1e-14);
        assert!(ld.abs() < 1e-14);
    }

    #[test]
    fn identity_tails() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = build_spline_params(&random_raw(&mut rng, 8, 2.0), 8, 15.0).unwrap();
        assert_eq!(rqs_forward(-20.0, &p), (-20.0, 0.0));
        assert_eq!(rqs_inverse(15.5, &p).unwrap(), (15.5, 0.0));
    }

    #[test]
    fn boundary_points_are_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = build_spline_params(&random_raw(&mut rng, 6, 2.0), 6, 3.0).unwrap();
            assert!((rqs_forward(3.0, &p).0 - 3.0).abs() < 1e-12);
            assert!((rqs_forward(-3.0, &p).0 + 3.0).abs() < 1e-12);
            // slope approaches 1 at the edges
            assert!(rqs_forward(3.0 - 1e-12, &p).1.abs() < 1e-6);
            assert!(rqs_forward(-3.0 + 1e-12, &p).1.abs() < 1e-6);
        }
    }

    #[test]
    fn log_derivative_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..2000 {
            let b = rng.random_range(1.0..20.0);
            let p = build_spline_params(&random_raw(&mut rng, 8, 1.5), 8, b).unwrap();
            let x = rng.random_range(-b + 2.0 * h..b - 2.0 * h);
            // keep the stencil inside one bin; the second derivative jumps at knots
            if p.knot_x.iter().any(|k| (k - x).abs() < 2.0 * h) {
                continue;
            }
            let fd = (rqs_forward(x + h, &p).0 - rqs_forward(x - h, &p).0) / (2.0 * h);
            let an = rqs_forward(x, &p).1.exp();
            // truncation is relative; roundoff of the stencil is about ε·B/h
            let tol = 1e-6 * an + f64::EPSILON * b / h;
            assert!((fd - an).abs() < tol, "fd {fd} analytic {an}");
        }
    }

    #[test]
    fn c1_at_interior_knots() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-9;
        for _ in 0..100 {
            let p = build_spline_params(&random_raw(&mut rng, 8, 1.0), 8, 5.0).unwrap();
            for k in 1..8 {
                let x = p.knot_x[k];
                let y = p.knot_y[k];
                let left = (y - rqs_forward(x - h, &p).0) / h;
                let right = (rqs_forward(x + h, &p).0 - y) / h;
                let d = p.derivs[k];
                assert!((left - d).abs() < 1e-5 * d.max(1.0), "{left} vs {d}");
                assert!((right - d).abs() < 1e-5 * d.max(1.0), "{right} vs {d}");
            }
        }
    }

    #[test]
    fn inverse_matches_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let p = build_spline_params(&random_raw(&mut rng, 8, 2.0), 8, 15.0).unwrap();
            let y = rng.random_range(-15.0..15.0);
            let x = rqs_inverse(y, &p).unwrap().0;
            assert!((x - bisect(y, &p)).abs() < 1e-8);
        }
    }

    #[test]
    fn round_trip_many_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut worst: f64 = 0.0;
        for _ in 0..100_000 {
            let k = rng.random_range(2..12);
            let b = rng.random_range(0.5..20.0);
            let p = build_spline_params(&random_raw(&mut rng, k, 2.0), k, b).unwrap();
            let x = rng.random_range(-b..=b);
            let (y, ld_f) = rqs_forward(x, &p);
            let (xr, ld_i) = rqs_inverse(y, &p).unwrap();
            // one ulp of y moves x by about ε|y|/f'(x)
            let conditioning = f64::EPSILON * y.abs() / ld_f.exp();
            worst = worst.max((xr - x).abs() / (1e-12 + 64.0 * conditioning));
            assert!((ld_f + ld_i).abs() < 1e-9, "{ld_f} {ld_i}");
        }
        assert!(
            worst < 1.0,
            "round trip error {worst} times the conditioning bound"
        );
    }

    #[test]
    fn inverse_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = 5;
        let b = 4.0;
        let (gx, gld) = (0.7, -1.3);
        let objective = |y: f64, raw: &[f64]| {
            let p = build_spline_params(raw, k, b).unwrap();
            let (x, ld) = rqs_inverse(y, &p).unwrap();
            gx * x + gld * ld
        };
        for _ in 0..200 {
            let raw = random_raw(&mut rng, k, 1.0);
            let y = rng.random_range(-b + 0.01..b - 0.01);
            let mut graw = vec![0.0; raw.len()];
            let (_, _, gy) = rqs_inverse_backward(y, &raw, k, b, gx, gld, &mut graw).unwrap();
            let h = 1e-6;
            let fd_y = (objective(y + h, &raw) - objective(y - h, &raw)) / (2.0 * h);
            assert!(
                (fd_y - gy).abs() < 1e-5 * gy.abs().max(1.0),
                "dy {fd_y} vs {gy}"
            );
            for i in 0..raw.len() {
                let mut rp = raw.clone();
                rp[i] += h;
                let up = objective(y, &rp);
                rp[i] -= 2.0 * h;
                let down = objective(y, &rp);
                let fd = (up - down) / (2.0 * h);
                assert!(
                    (fd - graw[i]).abs() < 1e-5 * graw[i].abs().max(1.0),
                    "raw {i}: {fd} vs {}",
                    graw[i]
                );
            }
        }
    }

    #[test]
    fn knots_sit_exactly_in_higher_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = build_spline_params(&random_raw(&mut rng, 6, 1.0), 6, 2.0).unwrap();
        assert_eq!(locate(&p.knot_x, p.knot_x[3]), 3);
        assert_eq!(locate(&p.knot_x, 2.0), 5);
        assert_eq!(locate(&p.knot_x, -2.0), 0);
    }

    proptest! {
        #[test]
        fn built_params_satisfy_invariants(
            raw in proptest::collection::vec(-8.0f64..8.0, raw_len(8)),
        ) {
            let p = build_spline_params(&raw, 8, 15.0).unwrap();
            prop_assert!(p.validate().is_ok());
            let total: f64 = p.knot_x.windows(2).map(|w| w[1] - w[0]).sum();
            prop_assert!((total - 30.0).abs() < 1e-8);
        }

        #[test]
        fn forward_is_strictly_monotone(
            raw in proptest::collection::vec(-5.0f64..5.0, raw_len(6)),
            a in -3.5f64..3.5,
            b in -3.5f64..3.5,
        ) {
            prop_assume!(a != b);
            let p = build_spline_params(&raw, 6, 3.0).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(rqs_forward(lo, &p).0 < rqs_forward(hi, &p).0);
        }
    }
}
