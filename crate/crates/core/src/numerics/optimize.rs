//! Bound-constrained minimisation through smooth reparameterisation.
//!
//! Every bounded coordinate is mapped to an unconstrained one (log for a
//! half-line, scaled logistic for an interval); the search itself runs in the
//! unconstrained space with Nelder–Mead or finite-difference BFGS.

use crate::error::{Error, Result};

/// Admissible range of a single parameter. Interval ends are open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Free,
    Lower(f64),
    Upper(f64),
    Interval(f64, f64),
}

impl Bound {
    /// Unconstrained coordinate → parameter.
    pub fn to_param(self, z: f64) -> f64 {
        match self {
            Bound::Free => z,
            Bound::Lower(a) => a + z.exp(),
            Bound::Upper(b) => b - z.exp(),
            Bound::Interval(a, b) => {
                // logistic written to stay accurate in both tails
                let s = if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                };
                a + (b - a) * s
            }
        }
    }

    /// Parameter → unconstrained coordinate. The parameter must lie strictly inside.
    pub fn to_unconstrained(self, x: f64) -> f64 {
        match self {
            Bound::Free => x,
            Bound::Lower(a) => (x - a).ln(),
            Bound::Upper(b) => (b - x).ln(),
            Bound::Interval(a, b) => {
                let s = (x - a) / (b - a);
                s.ln() - (-s).ln_1p()
            }
        }
    }

    pub fn contains(self, x: f64) -> bool {
        match self {
            Bound::Free => x.is_finite(),
            Bound::Lower(a) => x > a,
            Bound::Upper(b) => x < b,
            Bound::Interval(a, b) => x > a && x < b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    NelderMead,
    Bfgs,
}

/// A minimisation problem over a box given as per-coordinate [`Bound`]s.
pub struct OptimizerProblem<F: FnMut(&[f64]) -> f64> {
    pub objective: F,
    pub bounds: Vec<Bound>,
    pub initial: Vec<f64>,
    pub tolerance: f64,
    pub max_evals: usize,
    pub method: Method,
}

impl<F: FnMut(&[f64]) -> f64> OptimizerProblem<F> {
    pub fn new(objective: F, initial: Vec<f64>, bounds: Vec<Bound>) -> Self {
        Self {
            objective,
            bounds,
            initial,
            tolerance: 1e-8,
            max_evals: 20_000,
            method: Method::NelderMead,
        }
    }

    pub fn method(mut self, m: Method) -> Self {
        self.method = m;
        self
    }

    pub fn tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn max_evals(mut self, n: usize) -> Self {
        self.max_evals = n;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub argmin: Vec<f64>,
    pub value: f64,
    /// False when `max_evals` was exhausted before the tolerance was met. A point
    /// driven toward an open bound still reports `true` once the objective stops
    /// improving by more than the tolerance.
    pub converged: bool,
    pub evals: usize,
}

struct Counted<'a, F: FnMut(&[f64]) -> f64> {
    f: &'a mut F,
    bounds: &'a [Bound],
    evals: usize,
    x: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Counted<'_, F> {
    fn eval(&mut self, z: &[f64]) -> f64 {
        self.evals += 1;
        for (i, (zi, b)) in z.iter().zip(self.bounds).enumerate() {
            self.x[i] = b.to_param(*zi);
        }
        let v = (self.f)(&self.x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Minimise the problem's objective. Returns the best point seen, which is never
/// worse than the initial point.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut problem: OptimizerProblem<F>) -> Result<OptimResult> {
    let n = problem.initial.len();
    if problem.bounds.len() != n {
        return Err(Error::LengthMismatch(problem.bounds.len(), n));
    }
    if !(problem.tolerance > 0.0) {
        return Err(Error::Domain("optimizer tolerance must be positive".into()));
    }
    for (x, b) in problem.initial.iter().zip(&problem.bounds) {
        if !b.contains(*x) {
            return Err(Error::Domain(format!("initial point {x} outside {b:?}")));
        }
    }
    let f0 = (problem.objective)(&problem.initial);
    if f0.is_nan() {
        return Err(Error::NanObjective(problem.initial.clone()));
    }
    let z0: Vec<f64> = problem
        .initial
        .iter()
        .zip(&problem.bounds)
        .map(|(x, b)| b.to_unconstrained(*x))
        .collect();
    let bounds = problem.bounds.clone();
    let mut counted = Counted {
        f: &mut problem.objective,
        bounds: &bounds,
        evals: 1,
        x: vec![0.0; n],
    };
    let (zbest, fbest, converged) = match problem.method {
        Method::NelderMead => {
            let (z, f, c) = nelder_mead(&mut counted, &z0, problem.tolerance, problem.max_evals);
            if c && counted.evals < problem.max_evals {
                // one restart from the incumbent guards against a collapsed simplex
                let (z2, f2, c2) =
                    nelder_mead(&mut counted, &z, problem.tolerance, problem.max_evals);
                if f2 <= f {
                    (z2, f2, c2)
                } else {
                    (z, f, c)
                }
            } else {
                (z, f, c)
            }
        }
        Method::Bfgs => bfgs(&mut counted, &z0, problem.tolerance, problem.max_evals),
    };
    let evals = counted.evals;
    let (argmin, value) = if fbest <= f0 {
        (
            zbest
                .iter()
                .zip(&bounds)
                .map(|(z, b)| b.to_param(*z))
                .collect(),
            fbest,
        )
    } else {
        (problem.initial.clone(), f0)
    };
    Ok(OptimResult {
        argmin,
        value,
        converged,
        evals,
    })
}

fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    obj: &mut Counted<'_, F>,
    z0: &[f64],
    tol: f64,
    max_evals: usize,
) -> (Vec<f64>, f64, bool) {
    let n = z0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(z0.to_vec());
    for i in 0..n {
        let mut p = z0.to_vec();
        let step = if p[i].abs() > 1e-3 {
            0.1 * p[i].abs().max(2.5)
        } else {
            0.25
        };
        p[i] += step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| obj.eval(p)).collect();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    let mut stall = 0;
    let mut last_best = f64::INFINITY;
    while obj.evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let fspread = values[n] - values[0];
        let xspread = simplex[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if fspread.abs() <= tol && xspread <= 1e-5_f64.max(tol.sqrt()) {
            converged = true;
            break;
        }
        if (last_best - values[0]).abs() <= tol * 1e-3 {
            stall += 1;
        } else {
            stall = 0;
        }
        last_best = values[0];
        if stall > 50 * (n + 1) && fspread.abs() <= tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for p in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let lerp = |t: f64, p: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(p)
                .map(|(c, x)| c + t * (x - c))
                .collect()
        };
        let xr = lerp(-alpha, &simplex[n]);
        let fr = obj.eval(&xr);
        if fr < values[0] {
            let xe = lerp(-gamma, &simplex[n]);
            let fe = obj.eval(&xe);
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
        let (xc, fc) = if fr < values[n] {
            let xc = lerp(-rho, &simplex[n]);
            let fc = obj.eval(&xc);
            (xc, fc)
        } else {
            let xc = lerp(rho, &simplex[n]);
            let fc = obj.eval(&xc);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            simplex[i] = best
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + sigma * (x - b))
                .collect();
            values[i] = obj.eval(&simplex[i]);
        }
    }
    let ibest = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    (simplex[ibest].clone(), values[ibest], converged)
}

fn fd_gradient<F: FnMut(&[f64]) -> f64>(obj: &mut Counted<'_, F>, z: &[f64], g: &mut [f64]) {
    let mut p = z.to_vec();
    for i in 0..z.len() {
        let h = 1e-6 * z[i].abs().max(1.0);
        p[i] = z[i] + h;
        let fp = obj.eval(&p);
        p[i] = z[i] - h;
        let fm = obj.eval(&p);
        p[i] = z[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
}

fn bfgs<F: FnMut(&[f64]) -> f64>(
    obj: &mut Counted<'_, F>,
    z0: &[f64],
    tol: f64,
    max_evals: usize,
) -> (Vec<f64>, f64, bool) {
    let n = z0.len();
    let mut z = z0.to_vec();
    let mut f = obj.eval(&z);
    let mut g = vec![0.0; n];
    fd_gradient(obj, &z, &mut g);
    let mut hinv = identity(n);
    let mut converged = false;
    while obj.evals < max_evals {
        if g.iter().any(|v| !v.is_finite()) {
            break;
        }
        let mut d: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| hinv[i][j] * g[j]).sum::<f64>())
            .collect();
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            hinv = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        if slope.abs() < 1e-300 {
            converged = true;
            break;
        }
        // backtracking Armijo line search
        let mut step = 1.0;
        let mut znew = z.clone();
        let mut fnew = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                znew[i] = z[i] + step * d[i];
            }
            fnew = obj.eval(&znew);
            if fnew <= f + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            converged = (f - fnew).abs() <= tol || step < 1e-12;
            break;
        }
        let mut gnew = vec![0.0; n];
        fd_gradient(obj, &znew, &mut gnew);
        let s: Vec<f64> = (0..n).map(|i| znew[i] - z[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gnew[i] - g[i]).collect();
        let df = f - fnew;
        z = znew;
        f = fnew;
        g = gnew;
        let gnorm = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if df.abs() <= tol && gnorm < tol.sqrt().max(1e-5) * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        if df.abs() <= tol * 1e-3 && gnorm < 1e-3 {
            converged = true;
            break;
        }
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| hinv[i][j] * y[j]).sum())
                .collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] +=
                        ((sy + yhy) * s[i] * s[j]) / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
    }
    (z, f, converged)
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Central-difference Hessian of `f` at `x` with steps 1e-4·max(|xᵢ|, 1).
pub fn hessian<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    let mut p = x.to_vec();
    let f0 = f(&p);
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        p[i] = x[i] + h[i];
        let fp = f(&p);
        p[i] = x[i] - h[i];
        let fm = f(&p);
        p[i] = x[i];
        out[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                p[i] = x[i] + si * h[i];
                p[j] = x[j] + sj * h[j];
                let v = f(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Brent's derivative-free minimisation of a scalar function on `[a, b]`.
/// Returns `(argmin, value)`.
pub fn minimize_scalar<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, xtol: f64) -> (f64, f64) {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let mut eval = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let (mut a, mut b) = (a, b);
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = eval(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let tol1 = 1e-10 * x.abs() + xtol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = eval(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}
