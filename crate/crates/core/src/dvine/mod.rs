//! Per-outcome temporal dependence: a D-vine over the periods with one copula
//! shared by every pair in a tree.
//!
//! All three measurement scales run through the same recursion. Each value
//! entering a pair copula carries its (conditional) cdf, left limit and
//! density, with `atom` marking a probability mass; the pair term is the
//! four-corner difference for two atoms, an h-function difference for one, and
//! the copula density for none.

mod fit;

pub use fit::{fit_dvine, refit_simultaneous, DVineFit, FitOptions, TreeFit};

use serde::{Deserialize, Serialize};

use crate::bicop::{BivariateCopula, CopulaFamily};
use crate::error::{Error, Result};
use crate::marginals::{Dist, Scale};
use crate::numerics::roots::find_root_increasing_tol;

/// Floor applied to conditioning probabilities and pair terms.
pub const FLOOR: f64 = 1e-300;

/// A (conditional) distribution evaluated at an observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cond {
    /// F(y | ·)
    pub cdf: f64,
    /// F(y⁻ | ·); equal to `cdf` when `y` is not an atom.
    pub left: f64,
    /// Probability of the atom, or density.
    pub dens: f64,
    pub atom: bool,
}

impl Cond {
    pub fn continuous(cdf: f64, dens: f64) -> Self {
        Self {
            cdf,
            left: cdf,
            dens,
            atom: false,
        }
    }

    pub fn atom(cdf: f64, left: f64, prob: f64) -> Self {
        Self {
            cdf,
            left,
            dens: prob,
            atom: true,
        }
    }
}

#[inline]
fn floor(x: f64, floored: &mut usize) -> f64 {
    if x < FLOOR || x.is_nan() {
        *floored += 1;
        FLOOR
    } else {
        x
    }
}

/// Joint density/mass of a pair of conditionals (`a` earlier, `b` later) under `cop`.
pub fn pair_joint(cop: &BivariateCopula, a: &Cond, b: &Cond) -> f64 {
    match (a.atom, b.atom) {
        (true, true) => {
            cop.cdf(a.cdf, b.cdf) - cop.cdf(a.left, b.cdf) - cop.cdf(a.cdf, b.left)
                + cop.cdf(a.left, b.left)
        }
        (false, true) => a.dens * (cop.h1(a.cdf, b.cdf) - cop.h1(a.cdf, b.left)),
        (true, false) => b.dens * (cop.h2(a.cdf, b.cdf) - cop.h2(a.left, b.cdf)),
        (false, false) => a.dens * b.dens * cop.pdf(a.cdf, b.cdf),
    }
}

/// f_s · f_t · c(F_s, F_t).
pub fn pair_joint_continuous(
    cop: &BivariateCopula,
    f_s: f64,
    f_t: f64,
    cdf_s: f64,
    cdf_t: f64,
) -> f64 {
    pair_joint(
        cop,
        &Cond::continuous(cdf_s, f_s),
        &Cond::continuous(cdf_t, f_t),
    )
}

/// Four-corner rectangle probability of a pair of discrete values.
pub fn pair_joint_discrete(
    cop: &BivariateCopula,
    cdf_s: f64,
    left_s: f64,
    cdf_t: f64,
    left_t: f64,
) -> f64 {
    pair_joint(
        cop,
        &Cond::atom(cdf_s, left_s, cdf_s - left_s),
        &Cond::atom(cdf_t, left_t, cdf_t - left_t),
    )
}

/// Pair term for two semi-continuous values with atoms at zero.
#[allow(clippy::too_many_arguments)]
pub fn pair_joint_semicontinuous(
    cop: &BivariateCopula,
    s_zero: bool,
    t_zero: bool,
    f_s: f64,
    f_t: f64,
    cdf_s: f64,
    cdf_t: f64,
) -> f64 {
    let c = |zero: bool, f: f64, cdf: f64| {
        if zero {
            Cond::atom(cdf, 0.0, cdf)
        } else {
            Cond::continuous(cdf, f)
        }
    };
    pair_joint(cop, &c(s_zero, f_s, cdf_s), &c(t_zero, f_t, cdf_t))
}

/// Distribution of `b` given `a` (the later value given the earlier one).
fn given_earlier(
    cop: &BivariateCopula,
    a: &Cond,
    b: &Cond,
    joint: f64,
    floored: &mut usize,
) -> Cond {
    let (cdf, left) = if a.atom {
        let d = floor(a.dens, floored);
        let cdf = (cop.cdf(a.cdf, b.cdf) - cop.cdf(a.left, b.cdf)) / d;
        let left = if b.atom {
            (cop.cdf(a.cdf, b.left) - cop.cdf(a.left, b.left)) / d
        } else {
            cdf
        };
        (cdf, left)
    } else {
        let cdf = cop.h1(a.cdf, b.cdf);
        (cdf, if b.atom { cop.h1(a.cdf, b.left) } else { cdf })
    };
    Cond {
        cdf: cdf.clamp(0.0, 1.0),
        left: left.clamp(0.0, 1.0),
        dens: joint / floor(a.dens, floored),
        atom: b.atom,
    }
}

/// Distribution of `a` given `b` (the earlier value given the later one).
fn given_later(cop: &BivariateCopula, a: &Cond, b: &Cond, joint: f64, floored: &mut usize) -> Cond {
    let (cdf, left) = if b.atom {
        let d = floor(b.dens, floored);
        let cdf = (cop.cdf(a.cdf, b.cdf) - cop.cdf(a.cdf, b.left)) / d;
        let left = if a.atom {
            (cop.cdf(a.left, b.cdf) - cop.cdf(a.left, b.left)) / d
        } else {
            cdf
        };
        (cdf, left)
    } else {
        let cdf = cop.h2(a.cdf, b.cdf);
        (cdf, if a.atom { cop.h2(a.left, b.cdf) } else { cdf })
    };
    Cond {
        cdf: cdf.clamp(0.0, 1.0),
        left: left.clamp(0.0, 1.0),
        dens: joint / floor(b.dens, floored),
        atom: a.atom,
    }
}

/// Pair term and both updated conditionals: (joint, a | b, b | a).
pub fn condition(
    cop: &BivariateCopula,
    a: &Cond,
    b: &Cond,
    floored: &mut usize,
) -> (f64, Cond, Cond) {
    let joint = floor(pair_joint(cop, a, b), floored);
    (
        joint,
        given_later(cop, a, b, joint, floored),
        given_earlier(cop, a, b, joint, floored),
    )
}

/// The conditional cdf map v ↦ F(v | a) of a later value given an earlier one.
fn map_given(cop: &BivariateCopula, a: &Cond, v: f64) -> f64 {
    if a.atom {
        ((cop.cdf(a.cdf, v) - cop.cdf(a.left, v)) / a.dens.max(FLOOR)).clamp(0.0, 1.0)
    } else {
        cop.h1(a.cdf, v)
    }
}

fn map_given_inverse(cop: &BivariateCopula, a: &Cond, p: f64) -> f64 {
    if a.atom {
        let top = map_given(cop, a, 1.0);
        find_root_increasing_tol(|v| map_given(cop, a, v), p.min(top), 0.0, 1.0, 1e-14, 1e-15)
            .unwrap_or(p)
    } else {
        cop.h1_inverse(p, a.cdf)
    }
}

/// A per-outcome D-vine: `trees[k]` joins values `k + 1` periods apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVine", into = "RawVine")]
pub struct DVineModel {
    scale: Scale,
    trees: Vec<BivariateCopula>,
    se: Vec<Option<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawTree {
    family: CopulaFamily,
    theta: f64,
    #[serde(default)]
    tau: Option<f64>,
    #[serde(default)]
    se: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawVine {
    scale: Scale,
    trees: Vec<RawTree>,
    #[serde(default)]
    truncation: Option<usize>,
}

impl TryFrom<RawVine> for DVineModel {
    type Error = Error;
    fn try_from(r: RawVine) -> Result<Self> {
        let trees = r
            .trees
            .iter()
            .map(|t| BivariateCopula::new(t.family, t.theta))
            .collect::<Result<Vec<_>>>()?;
        let mut m = DVineModel::new(r.scale, trees);
        m.se = r.trees.iter().map(|t| t.se).collect();
        if let Some(k) = r.truncation {
            m = m.truncated(k);
        }
        Ok(m)
    }
}

impl From<DVineModel> for RawVine {
    fn from(m: DVineModel) -> Self {
        RawVine {
            scale: m.scale,
            truncation: Some(m.truncation_level()),
            trees: m
                .trees
                .iter()
                .zip(&m.se)
                .map(|(c, se)| RawTree {
                    family: c.family(),
                    theta: c.theta(),
                    tau: Some(c.tau()),
                    se: *se,
                })
                .collect(),
        }
    }
}

impl DVineModel {
    pub fn new(scale: Scale, trees: Vec<BivariateCopula>) -> Self {
        let se = vec![None; trees.len()];
        Self { scale, trees, se }
    }

    /// All-independence vine with `n_trees` trees.
    pub fn independence(scale: Scale, n_trees: usize) -> Self {
        Self::new(scale, vec![BivariateCopula::independence(); n_trees])
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn trees(&self) -> &[BivariateCopula] {
        &self.trees
    }

    pub fn standard_errors(&self) -> &[Option<f64>] {
        &self.se
    }

    pub fn set_standard_errors(&mut self, se: Vec<Option<f64>>) {
        self.se = se;
        self.se.resize(self.trees.len(), None);
    }

    /// Highest tree that is not independence (0 when all are).
    pub fn truncation_level(&self) -> usize {
        self.trees
            .iter()
            .rposition(|c| !c.is_independence())
            .map_or(0, |k| k + 1)
    }

    /// Copy with every tree above `level` replaced by independence.
    pub fn truncated(&self, level: usize) -> Self {
        let mut m = self.clone();
        for k in level..m.trees.len() {
            m.trees[k] = BivariateCopula::independence();
            m.se[k] = None;
        }
        m
    }

    /// Copula joining values `lag` periods apart. Lags beyond the last tree
    /// reuse the last tree, which is what one-step-ahead prediction needs.
    pub fn copula(&self, lag: usize) -> BivariateCopula {
        match self.trees.len() {
            0 => BivariateCopula::independence(),
            n => self.trees[lag.min(n) - 1],
        }
    }

    pub fn workspace(&self) -> Workspace<'_> {
        Workspace::new(self)
    }

    /// Fills a workspace with a complete trajectory.
    pub fn evaluate(&self, traj: &[Cond]) -> Workspace<'_> {
        let mut ws = self.workspace();
        for c in traj {
            ws.push(*c);
        }
        ws
    }

    /// Trajectory drawn by conditional inversion of the given uniforms, one per period.
    pub fn simulate_with(&self, dists: &[Dist], uniforms: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        let mut out = Vec::with_capacity(dists.len());
        for (d, &u) in dists.iter().zip(uniforms) {
            let y = ws.next_quantile(d, u);
            ws.push(d.cond(y));
            out.push(y);
        }
        out
    }

    /// Log-likelihood of one trajectory.
    pub fn loglik(&self, traj: &[Cond]) -> f64 {
        self.evaluate(traj).loglik()
    }
}

/// Triangular arrays of conditionals filled period by period.
///
/// `fwd[k][s]` is period `s` given `s+1..=s+k`; `bwd[k][t − k]` is period `t`
/// given `t−k..t`, so `bwd[t][0]` is period `t` given its whole history.
#[derive(Debug, Clone)]
pub struct Workspace<'a> {
    model: &'a DVineModel,
    fwd: Vec<Vec<Cond>>,
    bwd: Vec<Vec<Cond>>,
    pair_ll: f64,
    marginal_ll: f64,
    floored: usize,
}

impl<'a> Workspace<'a> {
    pub fn new(model: &'a DVineModel) -> Self {
        Self {
            model,
            fwd: Vec::new(),
            bwd: Vec::new(),
            pair_ll: 0.0,
            marginal_ll: 0.0,
            floored: 0,
        }
    }

    /// Number of periods pushed.
    pub fn len(&self) -> usize {
        self.fwd.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends the marginal evaluation of the next period.
    pub fn push(&mut self, obs: Cond) {
        let t = self.len();
        self.fwd.push(Vec::new());
        self.bwd.push(Vec::new());
        self.marginal_ll += obs.dens.max(FLOOR).ln();
        self.fwd[0].push(obs);
        self.bwd[0].push(obs);
        let mut cur = obs;
        for k in 1..=t {
            let s = t - k;
            let left = self.fwd[k - 1][s];
            let cop = self.model.copula(k);
            let (new_left, new_cur) = if cop.is_independence() {
                (left, cur)
            } else {
                let (joint, l, c) = condition(&cop, &left, &cur, &mut self.floored);
                self.pair_ll += joint.ln() - left.dens.max(FLOOR).ln() - cur.dens.max(FLOOR).ln();
                (l, c)
            };
            debug_assert_eq!(self.fwd[k].len(), s);
            self.fwd[k].push(new_left);
            self.bwd[k].push(new_cur);
            cur = new_cur;
        }
    }

    /// Log-likelihood in product form: marginal terms plus pair-copula ratios.
    pub fn loglik(&self) -> f64 {
        self.marginal_ll + self.pair_ll
    }

    /// Conditional of period `t` given all earlier periods.
    pub fn conditional(&self, t: usize) -> Cond {
        self.bwd[t][0]
    }

    /// Σ_t ln f(y_t | history), the telescoped form of [`Workspace::loglik`].
    pub fn telescoped_loglik(&self) -> f64 {
        (0..self.len())
            .map(|t| self.conditional(t).dens.max(FLOOR).ln())
            .sum()
    }

    /// Conditioning probabilities or pair terms that hit the floor.
    pub fn floored(&self) -> usize {
        self.floored
    }

    /// Distribution of the next period at a candidate marginal evaluation.
    pub fn next_given(&self, obs: Cond) -> Cond {
        let t = self.len();
        let mut cur = obs;
        let mut floored = 0;
        for k in 1..=t {
            let cop = self.model.copula(k);
            if cop.is_independence() {
                continue;
            }
            let left = self.fwd[k - 1][t - k];
            let joint = floor(pair_joint(&cop, &left, &cur), &mut floored);
            cur = given_earlier(&cop, &left, &cur, joint, &mut floored);
        }
        cur
    }

    /// F(y | history) as a function of the marginal cdf value `v` = F(y).
    pub fn next_cdf_at(&self, v: f64) -> f64 {
        let t = self.len();
        let mut p = v;
        for k in 1..=t {
            let cop = self.model.copula(k);
            if !cop.is_independence() {
                p = map_given(&cop, &self.fwd[k - 1][t - k], p);
            }
        }
        p
    }

    /// Marginal cdf value v with `next_cdf_at(v) = p`.
    pub fn next_cdf_inverse(&self, p: f64) -> f64 {
        let t = self.len();
        let mut v = p;
        for k in (1..=t).rev() {
            let cop = self.model.copula(k);
            if !cop.is_independence() {
                v = map_given_inverse(&cop, &self.fwd[k - 1][t - k], v);
            }
        }
        v
    }

    /// Conditional cdf of the next period at `y` under the marginal `dist`.
    pub fn next_cdf(&self, dist: &Dist, y: f64) -> f64 {
        self.next_cdf_at(dist.cdf(y))
    }

    /// Conditional quantile of the next period.
    pub fn next_quantile(&self, dist: &Dist, u: f64) -> f64 {
        match dist {
            Dist::Count(d) => {
                let f = |y: i64| self.next_cdf_at(d.cdf(y));
                if f(0) >= u {
                    return 0.0;
                }
                let (mut lo, mut hi) = (0i64, 1i64);
                while f(hi) < u {
                    lo = hi;
                    if hi >= 1 << 40 || d.cdf(hi) >= 1.0 {
                        return hi as f64;
                    }
                    hi *= 2;
                }
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if f(mid) >= u {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi as f64
            }
            Dist::SemiContinuous(d) => {
                if u <= self.next_cdf_at(d.q) {
                    0.0
                } else {
                    d.quantile(self.next_cdf_inverse(u).max(d.q))
                }
            }
            Dist::Gamma(d) => d.quantile(self.next_cdf_inverse(u)),
        }
    }

    /// Conditional cdf table F(y | history) for y = 0, 1, … until it reaches
    /// 1 − `tail` or the marginal saturates.
    pub fn next_cdf_table(&self, dist: &Dist, tail: f64, max_len: usize) -> Result<Vec<f64>> {
        let d = match dist {
            Dist::Count(d) => d,
            _ => return Err(Error::Scale("cdf tables need a count marginal".into())),
        };
        let mut out = Vec::new();
        for y in 0..max_len as i64 {
            let m = d.cdf(y);
            let p = self.next_cdf_at(m);
            out.push(p);
            if p >= 1.0 - tail || m >= 1.0 {
                break;
            }
        }
        Ok(out)
    }
}
