//! Error metrics: location MAE and similarity-aligned map fidelity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;

/// Mean Euclidean distance between paired points.
pub fn location_mae(estimates: &[Point], truth: &[Point]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::invalid(format!(
            "location MAE needs equal-length series, got {} and {}",
            estimates.len(),
            truth.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::invalid("location MAE of empty series"));
    }
    Ok(estimates.iter().zip(truth).map(|(a, b)| a.dist(*b)).sum::<f64>() / estimates.len() as f64)
}

/// Best similarity transform `truth ≈ scale · R(rotation) · source + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityFit {
    pub scale: f64,
    pub rotation_deg: f64,
    pub translation: Point,
    pub rmse: f64,
}

impl SimilarityFit {
    pub fn apply(&self, p: Point) -> Point {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        Point::new(
            self.scale * (c * p.x - s * p.y) + self.translation.x,
            self.scale * (s * p.x + c * p.y) + self.translation.y,
        )
    }
}

fn centroid(p: &[Point]) -> Point {
    let n = p.len() as f64;
    let s = p.iter().fold(Point::ORIGIN, |a, b| a + *b);
    Point::new(s.x / n, s.y / n)
}

/// True when the points span (numerically) less than two dimensions.
fn is_degenerate(p: &[Point]) -> bool {
    let c = centroid(p);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for q in p {
        let d = *q - c;
        sxx += d.x * d.x;
        syy += d.y * d.y;
        sxy += d.x * d.y;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    // smallest eigenvalue of the scatter matrix relative to the largest
    let disc = ((sxx - syy).powi(2) / 4.0 + sxy * sxy).sqrt();
    let lmax = tr / 2.0 + disc;
    let lmin = det / lmax.max(f64::MIN_POSITIVE);
    !(lmax > 0.0) || lmin <= 1e-12 * lmax
}

/// Least-squares similarity alignment of `source` onto `truth` (rotation,
/// uniform scale and translation, no reflection).
pub fn procrustes(source: &[Point], truth: &[Point]) -> Result<SimilarityFit> {
    if source.len() != truth.len() {
        return Err(Error::invalid("alignment needs paired point sets"));
    }
    if source.len() < 3 {
        return Err(Error::Degenerate(format!("alignment needs at least 3 points, got {}", source.len())));
    }
    if is_degenerate(source) || is_degenerate(truth) {
        return Err(Error::Degenerate("point set is collinear".into()));
    }
    let (cs, ct) = (centroid(source), centroid(truth));
    // treat points as complex numbers: a = Σ conj(x)·y / Σ|x|²
    let (mut re, mut im, mut norm) = (0.0, 0.0, 0.0);
    for (s, t) in source.iter().zip(truth) {
        let (x, y) = (*s - cs, *t - ct);
        re += x.x * y.x + x.y * y.y;
        im += x.x * y.y - x.y * y.x;
        norm += x.x * x.x + x.y * x.y;
    }
    let (ar, ai) = (re / norm, im / norm);
    let scale = ar.hypot(ai);
    let rotation_deg = ai.atan2(ar).to_degrees();
    let rotated_cs = Point::new(ar * cs.x - ai * cs.y, ai * cs.x + ar * cs.y);
    let mut fit = SimilarityFit { scale, rotation_deg, translation: ct - rotated_cs, rmse: 0.0 };
    let sse: f64 = source
        .iter()
        .zip(truth)
        .map(|(s, t)| {
            let p = Point::new(ar * s.x - ai * s.y, ai * s.x + ar * s.y) + fit.translation;
            let d = p - *t;
            d.x * d.x + d.y * d.y
        })
        .sum();
    fit.rmse = (sse / source.len() as f64).sqrt();
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn square_ish() -> Vec<Point> {
        vec![
            Point::new(0.0, 0.0),
            Point::new(65.0, 0.0),
            Point::new(130.0, 0.0),
            Point::new(130.0, 170.0),
            Point::new(65.0, 170.0),
            Point::new(0.0, 170.0),
            Point::new(65.0, 85.0),
        ]
    }

    /// Brute force: sweep the rotation on a fine grid and refine by golden
    /// section; scale and translation are closed-form for a fixed rotation.
    fn brute_rmse(src: &[Point], dst: &[Point]) -> (f64, f64) {
        let eval = |th: f64| {
            let (s, c) = th.sin_cos();
            let rot: Vec<Point> = src.iter().map(|p| Point::new(c * p.x - s * p.y, s * p.x + c * p.y)).collect();
            let (cr, cd) = (centroid(&rot), centroid(dst));
            let num: f64 = rot.iter().zip(dst).map(|(r, d)| (r.x - cr.x) * (d.x - cd.x) + (r.y - cr.y) * (d.y - cd.y)).sum();
            let den: f64 = rot.iter().map(|r| (r.x - cr.x).powi(2) + (r.y - cr.y).powi(2)).sum();
            let k = (num / den).max(0.0);
            let sse: f64 = rot
                .iter()
                .zip(dst)
                .map(|(r, d)| (k * (r.x - cr.x) - (d.x - cd.x)).powi(2) + (k * (r.y - cr.y) - (d.y - cd.y)).powi(2))
                .sum();
            ((sse / src.len() as f64).sqrt(), k)
        };
        let n = 3600;
        let step = std::f64::consts::TAU / n as f64;
        let best = (0..n).map(|i| i as f64 * step).min_by(|a, b| eval(*a).0.total_cmp(&eval(*b).0)).unwrap();
        let (mut lo, mut hi) = (best - step, best + step);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..100 {
            let m1 = hi - g * (hi - lo);
            let m2 = lo + g * (hi - lo);
            if eval(m1).0 < eval(m2).0 {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        eval(0.5 * (lo + hi))
    }

    #[test]
    fn mae_examples() {
        let t = square_ish();
        assert_eq!(location_mae(&t, &t).unwrap(), 0.0);
        let shifted: Vec<Point> = t.iter().map(|p| *p + Point::new(3.0, 4.0)).collect();
        assert!((location_mae(&shifted, &t).unwrap() - 5.0).abs() < 1e-12);
        assert!(location_mae(&t[..2], &t).is_err());
    }

    #[test]
    fn identity_alignment() {
        let t = square_ish();
        let f = procrustes(&t, &t).unwrap();
        assert!(f.rmse < 1e-9 && (f.scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn removes_rotation_and_scale() {
        let t = square_ish();
        let src: Vec<Point> = t.iter().map(|p| Point::new(-2.0 * p.y + 7.0, 2.0 * p.x - 3.0)).collect();
        let f = procrustes(&src, &t).unwrap();
        assert!(f.rmse < 1e-9, "{}", f.rmse);
        assert!((f.scale - 0.5).abs() < 1e-12);
        // and the other way round reports the ×2
        assert!((procrustes(&t, &src).unwrap().scale - 2.0).abs() < 1e-12);
        for (s, d) in src.iter().zip(&t) {
            assert!(f.apply(*s).dist(*d) < 1e-9);
        }
    }

    #[test]
    fn noisy_fit_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nrm = Normal::new(0.0, 2.0).unwrap();
        let t: Vec<Point> = (0..200).map(|i| Point::new((i * 37 % 130) as f64, (i * 53 % 170) as f64)).collect();
        let src: Vec<Point> = t.iter().map(|p| Point::new(p.x + nrm.sample(&mut rng), p.y + nrm.sample(&mut rng))).collect();
        let f = procrustes(&src, &t).unwrap();
        let (rmse, scale) = brute_rmse(&src, &t);
        assert!((f.rmse - rmse).abs() < 1e-9, "{} vs {}", f.rmse, rmse);
        assert!((f.scale - scale).abs() < 1e-9);
        // residual of 2 cm per axis noise after fitting 4 parameters
        let expect = 2.0 * (2.0 * (200.0 - 2.0) / 200.0f64).sqrt();
        assert!((f.rmse - expect).abs() < 0.15 * expect, "{} vs {}", f.rmse, expect);
    }

    #[test]
    fn degenerate_inputs_are_errors() {
        let line: Vec<Point> = (0..5).map(|i| Point::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(procrustes(&line, &line), Err(Error::Degenerate(_))));
        let two = &square_ish()[..2];
        assert!(matches!(procrustes(two, two), Err(Error::Degenerate(_))));
        let same = vec![Point::new(1.0, 1.0); 4];
        assert!(procrustes(&same, &same).is_err());
    }

    proptest! {
        #[test]
        fn mae_matches_recomputation(v in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0, -100.0f64..100.0, -100.0f64..100.0), 1..50)) {
            let a: Vec<Point> = v.iter().map(|q| Point::new(q.0, q.1)).collect();
            let b: Vec<Point> = v.iter().map(|q| Point::new(q.2, q.3)).collect();
            let mut acc = 0.0;
            for i in 0..a.len() {
                acc += ((a[i].x - b[i].x).powi(2) + (a[i].y - b[i].y).powi(2)).sqrt();
            }
            prop_assert!((location_mae(&a, &b).unwrap() - acc / a.len() as f64).abs() < 1e-9);
        }

        #[test]
        fn similarity_is_recovered(th in -3.1f64..3.1, s in 0.2f64..5.0, tx in -50.0f64..50.0, ty in -50.0f64..50.0) {
            let t = square_ish();
            let (sn, cs) = th.sin_cos();
            let src: Vec<Point> = t.iter().map(|p| Point::new(s * (cs * p.x - sn * p.y) + tx, s * (sn * p.x + cs * p.y) + ty)).collect();
            let f = procrustes(&src, &t).unwrap();
            prop_assert!(f.rmse < 1e-8);
            prop_assert!((f.scale * s - 1.0).abs() < 1e-9);
        }
    }
}
