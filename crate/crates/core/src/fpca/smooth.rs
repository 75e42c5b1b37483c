//! Local linear kernel smoothers (Epanechnikov kernel).
//!
//! Both smoothers escalate the bandwidth (doubling, at most ten times) at
//! any target where the local weighted design is singular, e.g. when the
//! window holds fewer than two distinct abscissae.

use crate::error::{Error, Result};

pub const MAX_BANDWIDTH_DOUBLINGS: usize = 10;

#[inline]
pub fn epanechnikov(u: f64) -> f64 {
    let u2 = u * u;
    if u2 < 1.0 {
        0.75 * (1.0 - u2)
    } else {
        0.0
    }
}

/// Index range of `sorted` values inside `[lo, hi]`.
#[inline]
fn window(sorted: &[f64], lo: f64, hi: f64) -> (usize, usize) {
    let a = sorted.partition_point(|&t| t < lo);
    let b = sorted.partition_point(|&t| t <= hi);
    (a, b)
}

/// One-dimensional local linear fit at `x`; `None` when singular.
fn fit_1d_at(ts: &[f64], ys: &[f64], x: f64, h: f64) -> Option<f64> {
    let (a, b) = window(ts, x - h, x + h);
    if b - a < 2 {
        return None;
    }
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let (mut t0, mut t1) = (0.0, 0.0);
    for i in a..b {
        let d = ts[i] - x;
        let w = epanechnikov(d / h);
        if w <= 0.0 {
            continue;
        }
        s0 += w;
        s1 += w * d;
        s2 += w * d * d;
        t0 += w * ys[i];
        t1 += w * ys[i] * d;
    }
    let det = s0 * s2 - s1 * s1;
    if !(det > 1e-12 * s0 * s2) || s0 <= 0.0 {
        return None;
    }
    Some((s2 * t0 - s1 * t1) / det)
}

/// Local linear regression of `(ts, ys)` evaluated at each target.
/// `ts` must be sorted ascending.
pub fn local_linear_1d(ts: &[f64], ys: &[f64], targets: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    debug_assert_eq!(ts.len(), ys.len());
    debug_assert!(ts.windows(2).all(|w| w[0] <= w[1]));
    if bandwidth <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "bandwidth {bandwidth} must be positive"
        )));
    }
    let mut out = Vec::with_capacity(targets.len());
    for &x in targets {
        let mut h = bandwidth;
        let mut value = None;
        for _ in 0..=MAX_BANDWIDTH_DOUBLINGS {
            if let Some(v) = fit_1d_at(ts, ys, x, h) {
                value = Some(v);
                break;
            }
            h *= 2.0;
        }
        match value {
            Some(v) if v.is_finite() => out.push(v),
            _ => {
                return Err(Error::SmoothingFailure(format!(
                    "singular local design at t = {x} after {MAX_BANDWIDTH_DOUBLINGS} bandwidth doublings"
                )))
            }
        }
    }
    Ok(out)
}

/// Scattered raw-covariance points (s, t, value), sorted by `s`.
pub struct RawPoints {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub value: Vec<f64>,
}

impl RawPoints {
    pub fn from_unsorted(mut triples: Vec<(f64, f64, f64)>) -> Self {
        triples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut s = Vec::with_capacity(triples.len());
        let mut t = Vec::with_capacity(triples.len());
        let mut value = Vec::with_capacity(triples.len());
        for (a, b, c) in triples {
            s.push(a);
            t.push(b);
            value.push(c);
        }
        RawPoints { s, t, value }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Accumulated weighted moments for one planar local linear fit.
#[derive(Clone, Copy, Default)]
struct Moments {
    sw: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    sxy: f64,
    syy: f64,
    c0: f64,
    cx: f64,
    cy: f64,
}

impl Moments {
    #[inline]
    fn add(&mut self, w: f64, dx: f64, dy: f64, c: f64) {
        self.sw += w;
        self.sx += w * dx;
        self.sy += w * dy;
        self.sxx += w * dx * dx;
        self.sxy += w * dx * dy;
        self.syy += w * dy * dy;
        self.c0 += w * c;
        self.cx += w * c * dx;
        self.cy += w * c * dy;
    }

    /// Intercept of the plane fit, `None` when the design is singular.
    fn solve(&self) -> Option<f64> {
        let m = self;
        let det = m.sw * (m.sxx * m.syy - m.sxy * m.sxy) - m.sx * (m.sx * m.syy - m.sxy * m.sy)
            + m.sy * (m.sx * m.sxy - m.sxx * m.sy);
        let scale = m.sw * m.sxx * m.syy;
        if !(det > 1e-12 * scale) || m.sw <= 0.0 {
            return None;
        }
        let b0 = m.c0 * (m.sxx * m.syy - m.sxy * m.sxy) - m.sx * (m.cx * m.syy - m.sxy * m.cy)
            + m.sy * (m.cx * m.sxy - m.sxx * m.cy);
        let v = b0 / det;
        v.is_finite().then_some(v)
    }
}

/// Diagonal values of the covariance surface estimated from off-diagonal
/// points with a rotated fit: linear in the along-diagonal coordinate
/// `u = (s + t)/2`, quadratic in the cross-diagonal offset `w = s - t`.
///
/// A plain planar fit underestimates the surface along its diagonal ridge
/// by O(h^2) of the cross-diagonal curvature; the quadratic term removes
/// that, and the remaining along-diagonal bias matches the bias of the
/// one-dimensional diagonal smooth it is subtracted from.
pub fn diagonal_quadratic(points: &RawPoints, targets: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    if bandwidth <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "bandwidth {bandwidth} must be positive"
        )));
    }
    let mut out = Vec::with_capacity(targets.len());
    for &t in targets {
        let mut h = bandwidth;
        let mut value = None;
        for _ in 0..=MAX_BANDWIDTH_DOUBLINGS {
            if let Some(v) = fit_diagonal_at(points, t, h) {
                value = Some(v);
                break;
            }
            h *= 2.0;
        }
        match value {
            Some(v) => out.push(v),
            None => {
                return Err(Error::SmoothingFailure(format!(
                    "singular rotated design at t = {t} after {MAX_BANDWIDTH_DOUBLINGS} bandwidth doublings"
                )))
            }
        }
    }
    Ok(out)
}

fn fit_diagonal_at(points: &RawPoints, t: f64, h: f64) -> Option<f64> {
    // |u - t| <= h and |w| <= h imply t1 within 1.5h of t.
    let (a, b) = window(&points.s, t - 1.5 * h, t + 1.5 * h);
    let mut m = Moments::default();
    for i in a..b {
        let u = 0.5 * (points.s[i] + points.t[i]);
        let w = points.s[i] - points.t[i];
        let ku = epanechnikov((u - t) / h);
        if ku <= 0.0 {
            continue;
        }
        let kw = epanechnikov(w / h);
        if kw <= 0.0 {
            continue;
        }
        m.add(ku * kw, u - t, w * w, points.value[i]);
    }
    m.solve()
}

/// Planar local linear fit at a single target, scanning the s-window.
fn fit_2d_at(points: &RawPoints, s: f64, t: f64, h: f64) -> Option<f64> {
    let (a, b) = window(&points.s, s - h, s + h);
    let mut m = Moments::default();
    for i in a..b {
        let dx = points.s[i] - s;
        let kx = epanechnikov(dx / h);
        if kx <= 0.0 {
            continue;
        }
        let dy = points.t[i] - t;
        let ky = epanechnikov(dy / h);
        if ky <= 0.0 {
            continue;
        }
        m.add(kx * ky, dx, dy, points.value[i]);
    }
    m.solve()
}

/// Planar local linear smooth of scattered points, evaluated on the full
/// `grid x grid` lattice. Returns a row-major matrix: entry `(i, j)` is the
/// estimate at `(grid[i], grid[j])`.
///
/// Points are first binned to the nearest lattice cell (counts and value
/// sums); the product kernel then factorizes, so the nine local-linear
/// moments come from two separable passes over the lattice instead of one
/// pass over every (point, cell) combination. Cells whose local design is
/// singular fall back to an exact scan with bandwidth doubling.
pub fn local_linear_2d_grid(points: &RawPoints, grid: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    if bandwidth <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "bandwidth {bandwidth} must be positive"
        )));
    }
    let g = grid.len();
    let g0 = grid[0];
    let step = (grid[g - 1] - g0) / (g - 1) as f64;
    let h = bandwidth;

    // Bin weights and value sums on the lattice.
    let mut w_bin = vec![0.0f64; g * g];
    let mut c_bin = vec![0.0f64; g * g];
    let clamp_idx = |t: f64| (((t - g0) / step).round().max(0.0) as usize).min(g - 1);
    for p in 0..points.len() {
        let u = clamp_idx(points.s[p]);
        let v = clamp_idx(points.t[p]);
        w_bin[u * g + v] += 1.0;
        c_bin[u * g + v] += points.value[p];
    }

    // Pass 1 (t-direction): per source row u and target column j,
    // kernel-weighted moments in dy of the bin weights and value sums.
    let radius = (h / step).floor() as isize;
    let mut a0 = vec![0.0f64; g * g];
    let mut a1 = vec![0.0f64; g * g];
    let mut a2 = vec![0.0f64; g * g];
    let mut b0 = vec![0.0f64; g * g];
    let mut b1 = vec![0.0f64; g * g];
    for u in 0..g {
        let w_row = &w_bin[u * g..(u + 1) * g];
        let c_row = &c_bin[u * g..(u + 1) * g];
        for j in 0..g as isize {
            let (mut s_a0, mut s_a1, mut s_a2, mut s_b0, mut s_b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
            let v_lo = (j - radius).max(0) as usize;
            let v_hi = ((j + radius) as usize).min(g - 1);
            for v in v_lo..=v_hi {
                let w = w_row[v];
                let c = c_row[v];
                if w == 0.0 && c == 0.0 {
                    continue;
                }
                let dy = (v as isize - j) as f64 * step;
                let ky = epanechnikov(dy / h);
                if ky <= 0.0 {
                    continue;
                }
                s_a0 += ky * w;
                s_a1 += ky * dy * w;
                s_a2 += ky * dy * dy * w;
                s_b0 += ky * c;
                s_b1 += ky * dy * c;
            }
            let idx = u * g + j as usize;
            a0[idx] = s_a0;
            a1[idx] = s_a1;
            a2[idx] = s_a2;
            b0[idx] = s_b0;
            b1[idx] = s_b1;
        }
    }

    // Pass 2 (s-direction) assembles the full moments and solves per cell.
    let mut out = vec![f64::NAN; g * g];
    let mut retry: Vec<(usize, usize)> = Vec::new();
    for i in 0..g as isize {
        let u_lo = (i - radius).max(0) as usize;
        let u_hi = ((i + radius) as usize).min(g - 1);
        for j in 0..g {
            let mut m = Moments::default();
            for u in u_lo..=u_hi {
                let du = (u as isize - i) as f64 * step;
                let kx = epanechnikov(du / h);
                if kx <= 0.0 {
                    continue;
                }
                let idx = u * g + j;
                m.sw += kx * a0[idx];
                m.sx += kx * du * a0[idx];
                m.sxx += kx * du * du * a0[idx];
                m.sy += kx * a1[idx];
                m.sxy += kx * du * a1[idx];
                m.syy += kx * a2[idx];
                m.c0 += kx * b0[idx];
                m.cx += kx * du * b0[idx];
                m.cy += kx * b1[idx];
            }
            match m.solve() {
                Some(v) => out[i as usize * g + j] = v,
                None => retry.push((i as usize, j)),
            }
        }
    }

    // Bandwidth escalation for the handful of singular cells.
    for (i, j) in retry {
        let mut h_try = h;
        let mut value = None;
        for _ in 0..=MAX_BANDWIDTH_DOUBLINGS {
            h_try *= 2.0;
            if let Some(v) = fit_2d_at(points, grid[i], grid[j], h_try) {
                value = Some(v);
                break;
            }
        }
        match value {
            Some(v) => out[i * g + j] = v,
            None => {
                return Err(Error::SmoothingFailure(format!(
                    "singular planar design at ({}, {}) after {MAX_BANDWIDTH_DOUBLINGS} bandwidth doublings",
                    grid[i], grid[j]
                )))
            }
        }
    }
    Ok(out)
}
