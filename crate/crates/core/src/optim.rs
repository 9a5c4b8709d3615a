//! Box-constrained Nelder–Mead.
//!
//! The search runs on the unit cube; each coordinate is mapped affinely onto
//! its bounds before the objective sees it. Trial points that leave the cube
//! are reflected back at the violated face (then clamped), and the number of
//! reflections is reported.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(invalid("bounds", "lower and upper need the same, non-zero length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(invalid("bounds", "every lower bound must be finite and below its upper bound"));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.lower[i]) / (self.upper[i] - self.lower[i]))
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, v)| self.lower[i] + v * (self.upper[i] - self.lower[i]))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Stop once the simplex diameter in unit-cube coordinates drops below this.
    pub diameter_tol: f64,
    pub max_evals: usize,
    /// Edge length of the initial simplex in unit-cube coordinates.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            diameter_tol: 1e-3,
            max_evals: 500,
            initial_step: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Trial points reflected back into the bounds.
    pub reflections: usize,
    pub converged: bool,
}

struct Search<F> {
    f: F,
    bounds: Bounds,
    evals: usize,
    reflections: usize,
}

impl<F: FnMut(&[f64]) -> f64> Search<F> {
    fn eval(&mut self, u: &mut [f64]) -> f64 {
        for v in u.iter_mut() {
            if *v < 0.0 || *v > 1.0 {
                self.reflections += 1;
                if *v < 0.0 {
                    *v = -*v;
                }
                if *v > 1.0 {
                    *v = 2.0 - *v;
                }
                *v = v.clamp(0.0, 1.0);
            }
        }
        self.evals += 1;
        let y = (self.f)(&self.bounds.from_unit(u));
        if y.is_nan() {
            f64::INFINITY
        } else {
            y
        }
    }
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for a in 0..simplex.len() {
        for b in a + 1..simplex.len() {
            let s: f64 = simplex[a]
                .iter()
                .zip(&simplex[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            d = d.max(libm::sqrt(s));
        }
    }
    d
}

fn affine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b - a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Minimizes `f` over `bounds`, starting from `x0` (in original units).
/// NaN objective values count as `+∞`.
pub fn minimize<F>(f: F, x0: &[f64], bounds: &Bounds, opts: NelderMeadOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = bounds.dim();
    if x0.len() != n {
        return Err(invalid("x0", "length must match the bounds"));
    }
    if opts.max_evals == 0 || !(opts.initial_step > 0.0) {
        return Err(invalid("options", "need max_evals > 0 and initial_step > 0"));
    }
    let mut search = Search {
        f,
        bounds: bounds.clone(),
        evals: 0,
        reflections: 0,
    };
    let start: Vec<f64> = bounds.to_unit(x0).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut simplex = vec![start.clone()];
    for i in 0..n {
        let mut v = start.clone();
        v[i] += if v[i] + opts.initial_step <= 1.0 {
            opts.initial_step
        } else {
            -opts.initial_step
        };
        simplex.push(v);
    }
    let mut values = Vec::with_capacity(n + 1);
    for v in simplex.iter_mut() {
        values.push(search.eval(v));
    }
    let mut converged = false;
    loop {
        // order vertices by value, ties keep their previous order
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();
        if diameter(&simplex) < opts.diameter_tol {
            converged = true;
            break;
        }
        if search.evals >= opts.max_evals {
            break;
        }
        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let mut xr = affine(&centroid, &worst, -1.0);
        let fr = search.eval(&mut xr);
        if fr < values[0] {
            let mut xe = affine(&centroid, &worst, -2.0);
            let fe = search.eval(&mut xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (mut xc, outside) = if fr < values[n] {
            (affine(&centroid, &xr, 0.5), true)
        } else {
            (affine(&centroid, &worst, 0.5), false)
        };
        let fc = search.eval(&mut xc);
        if (outside && fc <= fr) || (!outside && fc < values[n]) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let mut v = affine(&simplex[0], &simplex[i], 0.5);
            values[i] = search.eval(&mut v);
            simplex[i] = v;
        }
    }
    Ok(Minimum {
        x: bounds.from_unit(&simplex[0]),
        value: values[0],
        evaluations: search.evals,
        reflections: search.reflections,
        converged,
    })
}
