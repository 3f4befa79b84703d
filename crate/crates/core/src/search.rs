//! Bracketing bisection and a Nelder-Mead simplex minimizer.

use crate::error::{Error, Result};

/// Result of a monotone bisection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracket {
    /// Largest probed point where the predicate was false.
    pub lo: f64,
    /// Smallest probed point where the predicate was true.
    pub hi: f64,
    pub probes: usize,
}

impl Bracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Locates the switch of a monotone predicate that is false at `lo` and true
/// at `hi`, until `hi - lo <= tol`. Both endpoints are probed first; a
/// predicate that does not switch is reported, never clamped.
pub fn bisect<F>(mut lo: f64, mut hi: f64, tol: f64, mut above: F) -> Result<Bracket>
where
    F: FnMut(f64) -> Result<bool>,
{
    if !(tol > 0.0) || !(lo < hi) {
        return Err(Error::OutOfRange {
            name: "bisection interval",
            value: hi - lo,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    if above(lo)? {
        return Err(Error::NoCrossing(format!("predicate already holds at lower end {lo}")));
    }
    if !above(hi)? {
        return Err(Error::NoCrossing(format!("predicate fails at upper end {hi}")));
    }
    let mut probes = 2;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        probes += 1;
        if above(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Bracket { lo, hi, probes })
}

#[derive(Clone, Debug)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Nelder-Mead minimization from `x0` with an axis-aligned initial simplex of
/// edge `step`. Stops after `max_iter` iterations or when the spread of
/// simplex values falls below `ftol`.
pub fn nelder_mead<F>(f: F, x0: &[f64], step: f64, max_iter: usize, ftol: f64) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for k in 0..n {
        let mut p = x0.to_vec();
        p[k] += step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if (vals[n] - vals[0]).abs() <= ftol * (1.0 + vals[0].abs()) {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|k| pts[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                // Shrink toward the best vertex.
                let best = pts[0].clone();
                for i in 1..=n {
                    for k in 0..n {
                        pts[i][k] = best[k] + 0.5 * (pts[i][k] - best[k]);
                    }
                    vals[i] = f(&pts[i]);
                }
            }
        }
    }
    let (ibest, &value) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty simplex");
    SimplexResult {
        x: pts[ibest].clone(),
        value,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let b = bisect(0.0, 2.0, 1e-10, |x| Ok(x * x > 2.0)).unwrap();
        assert!((b.midpoint() - 2f64.sqrt()).abs() < 1e-10);
        assert!(b.hi - b.lo <= 1e-10);
    }

    #[test]
    fn bisect_reports_missing_crossing() {
        assert!(matches!(bisect(0.0, 1.0, 1e-6, |_| Ok(false)), Err(Error::NoCrossing(_))));
        assert!(matches!(bisect(0.0, 1.0, 1e-6, |_| Ok(true)), Err(Error::NoCrossing(_))));
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(f, &[-1.2, 1.0], 0.5, 5000, 1e-16);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }
}
