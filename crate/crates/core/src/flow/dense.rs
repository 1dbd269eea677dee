//! Pyramidal dense Lucas–Kanade.
//!
//! Each pyramid level is blurred with a 5-tap binomial kernel. Starting from
//! zero flow at the coarsest level, every pixel keeps its own displacement
//! estimate; an iteration warps the second image by the current field,
//! aggregates `∇A·(B(x+d) − A(x))` over a square window, and solves the 2×2
//! normal equations against the window's structure tensor. The field is
//! doubled and resampled when moving to the next finer level.
//!
//! At the finest level the smaller eigenvalue of the window-averaged
//! structure tensor decides validity: flat regions carry no displacement
//! information and are flagged instead of guessed.

use super::plane::Plane;
use super::{FlowField, FlowParams};
use crate::error::{Error, Result};
use crate::frame::Frame;

/// Smallest side allowed at the coarsest pyramid level.
const MIN_LEVEL_SIDE: usize = 8;

/// Largest per-iteration correction, in pixels of the current level.
const MAX_STEP: f32 = 1.0;

pub fn compute_dense_flow(a: &Frame, b: &Frame, p: &FlowParams) -> Result<FlowField> {
    p.validate()?;
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::input(format!(
            "frame dimensions differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if a.width() % p.downscale != 0 || a.height() % p.downscale != 0 {
        return Err(Error::input(format!(
            "{}x{} is not divisible by downscale {}",
            a.width(),
            a.height(),
            p.downscale
        )));
    }
    let (w, h) = (a.width() / p.downscale, a.height() / p.downscale);
    let min_side = MIN_LEVEL_SIDE.max(2 * p.window_radius + 1);
    let shrink = 1usize << (p.pyramid_levels - 1);
    if w / shrink < min_side || h / shrink < min_side {
        return Err(Error::input(format!(
            "{w}x{h} at processing resolution is too small for {} pyramid levels \
             (coarsest side must be >= {min_side})",
            p.pyramid_levels
        )));
    }

    let pyr_a = pyramid(Plane::from_frame(a, p.downscale), p.pyramid_levels);
    let pyr_b = pyramid(Plane::from_frame(b, p.downscale), p.pyramid_levels);

    let mut u = Plane::zeros(pyr_a[p.pyramid_levels - 1].width, pyr_a[p.pyramid_levels - 1].height);
    let mut v = u.clone();
    let mut min_eig = Plane::zeros(0, 0);
    for level in (0..p.pyramid_levels).rev() {
        let (la, lb) = (&pyr_a[level], &pyr_b[level]);
        if u.width != la.width || u.height != la.height {
            u = upsample(&u, la.width, la.height);
            v = upsample(&v, la.width, la.height);
        }
        min_eig = refine_level(la, lb, &mut u, &mut v, p);
        u = u.median3();
        v = v.median3();
    }

    let mut field = FlowField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (du, dv) = (u.data[i], v.data[i]);
            let ok = min_eig.data[i] >= p.min_eigenvalue
                && min_eig.data[i] > 0.0
                && du.is_finite()
                && dv.is_finite();
            field.set(
                x,
                y,
                ok.then(|| (quantize(du, p.precision), quantize(dv, p.precision))),
            );
        }
    }
    Ok(field)
}

fn quantize(value: f32, step: f32) -> f32 {
    if step > 0.0 {
        // + 0.0 folds a rounded -0.0 into +0.0
        (value / step).round() * step + 0.0
    } else {
        value
    }
}

/// Blurred levels, finest first.
fn pyramid(base: Plane, levels: usize) -> Vec<Plane> {
    let mut raw = vec![base];
    for _ in 1..levels {
        let next = raw.last().unwrap().half();
        raw.push(next);
    }
    raw.iter().map(Plane::smooth).collect()
}

/// Doubles a coarse displacement field onto a finer grid.
fn upsample(coarse: &Plane, width: usize, height: usize) -> Plane {
    let sx = coarse.width as f32 / width as f32;
    let sy = coarse.height as f32 / height as f32;
    let mut out = Plane::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            let cx = (x as f32 + 0.5) * sx - 0.5;
            let cy = (y as f32 + 0.5) * sy - 0.5;
            out.data[y * width + x] = 2.0 * coarse.sample(cx, cy);
        }
    }
    out
}

/// Runs the per-level iterations in place; returns the window-averaged
/// smaller structure-tensor eigenvalue for each pixel.
fn refine_level(a: &Plane, b: &Plane, u: &mut Plane, v: &mut Plane, p: &FlowParams) -> Plane {
    let (w, h) = (a.width, a.height);
    let r = p.window_radius;
    let (gx, gy) = a.gradients();
    let mul = |l: &Plane, r: &Plane| Plane {
        width: w,
        height: h,
        data: l.data.iter().zip(&r.data).map(|(a, b)| a * b).collect(),
    };
    let sxx = mul(&gx, &gx).box_sum(r);
    let sxy = mul(&gx, &gy).box_sum(r);
    let syy = mul(&gy, &gy).box_sum(r);

    // Each pixel j contributes the linearised constraint
    // ∇A_j · d = ∇A_j · d_j − I_t(j); pixel i solves the window's least
    // squares for d directly instead of adding an increment, which keeps
    // the coupled per-pixel iteration an average rather than a sum.
    let mut rhs = Plane::zeros(w, h);
    let (wmax, hmax) = ((w - 1) as f32, (h - 1) as f32);
    for _ in 0..p.iterations {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (sx, sy) = (x as f32 + u.data[i], y as f32 + v.data[i]);
                // Samples that leave the image carry no evidence; they vote
                // for the current estimate.
                let it = if sx < 0.0 || sy < 0.0 || sx > wmax || sy > hmax {
                    0.0
                } else {
                    b.sample(sx, sy) - a.data[i]
                };
                rhs.data[i] = gx.data[i] * u.data[i] + gy.data[i] * v.data[i] - it;
            }
        }
        let hx = mul(&gx, &rhs).box_sum(r);
        let hy = mul(&gy, &rhs).box_sum(r);
        for i in 0..w * h {
            let (xx, xy, yy) = (sxx.data[i], sxy.data[i], syy.data[i]);
            let det = xx * yy - xy * xy;
            let trace = xx + yy;
            if !(det > 1e-6 * trace * trace) || det <= 0.0 {
                continue;
            }
            let nu = (yy * hx.data[i] - xy * hy.data[i]) / det;
            let nv = (xx * hy.data[i] - xy * hx.data[i]) / det;
            u.data[i] += (nu - u.data[i]).clamp(-MAX_STEP, MAX_STEP);
            v.data[i] += (nv - v.data[i]).clamp(-MAX_STEP, MAX_STEP);
        }
    }

    let mut min_eig = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let n = Plane::window_count(w, h, r, x, y);
            let (xx, xy, yy) = (sxx.data[i] / n, sxy.data[i] / n, syy.data[i] / n);
            let half_tr = 0.5 * (xx + yy);
            let disc = (0.25 * (xx - yy) * (xx - yy) + xy * xy).sqrt();
            min_eig.data[i] = (half_tr - disc).max(0.0);
        }
    }
    min_eig
}
