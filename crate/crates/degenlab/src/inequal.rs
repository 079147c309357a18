//! Property testers for the sufficiency inequalities: the directional
//! localization bound, the Hardy-type degeneracy bound, the two-term split
//! with the product cutoff, and the Malgrange gradient inequality.
//!
//! Test functions are seeded random bumps (quintic smoothstep windows
//! times a low-degree trigonometric polynomial), realized on a grid with
//! analytic gradients so the inequality ratios carry no finite-difference
//! noise. Every bump is reproducible bit-for-bit from its seed.

use crate::expr::Expr;
use crate::grid::Grid;
use crate::koike::{mu, DegeneracyFamily};
use crate::profiles::{FieldError, FnField, Profile, ScalarField};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InequalError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("min of f over the support at |x| >= {s} underflowed (ln f_min = {ln_f_min})")]
    DegenerateMin { s: f64, ln_f_min: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Quintic smoothstep: 0 for t <= 0, 1 for t >= 1, monotone C^2 between.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

pub fn smoothstep_deriv(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        30.0 * t * t * (t - 1.0) * (t - 1.0)
    }
}

/// The product cutoff χ: 1 on [0, 1], 0 on [2, ∞), quintic in between.
pub fn chi(t: f64) -> f64 {
    1.0 - smoothstep(t.abs() - 1.0)
}

pub fn chi_deriv(t: f64) -> f64 {
    -smoothstep_deriv(t.abs() - 1.0) * t.signum()
}

/// Seeded compactly supported C^2 test function: product of per-axis
/// plateau windows times a low-degree trigonometric polynomial.
#[derive(Debug, Clone, Serialize)]
pub struct BumpFunction {
    pub seed: u64,
    pub m: usize,
    pub ball_radius: f64,
    pub center: Vec<f64>,
    pub half_width: f64,
    pub amplitude: f64,
    /// cos/sin coefficients per axis, degrees 1..=3.
    pub trig_cos: Vec<Vec<f64>>,
    pub trig_sin: Vec<Vec<f64>>,
}

impl BumpFunction {
    /// Draws a bump supported strictly inside B(0, ball_radius).
    pub fn random(seed: u64, m: usize, ball_radius: f64) -> BumpFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // inscribed box half-side keeps the support box inside the ball
        let box_half = ball_radius / (m as f64).sqrt();
        let half_width = rng.gen_range(0.15 * box_half..0.35 * box_half);
        let center: Vec<f64> = (0..m)
            .map(|_| {
                let slack = box_half - half_width;
                rng.gen_range(-slack..slack)
            })
            .collect();
        let amplitude = rng.gen_range(0.5..2.0);
        let trig_cos: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..3).map(|_| rng.gen_range(-0.3..0.3)).collect())
            .collect();
        let trig_sin: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..3).map(|_| rng.gen_range(-0.3..0.3)).collect())
            .collect();
        BumpFunction {
            seed,
            m,
            ball_radius,
            center,
            half_width,
            amplitude,
            trig_cos,
            trig_sin,
        }
    }

    fn window(&self, axis: usize, x: f64) -> (f64, f64) {
        let c = self.center[axis];
        let w = self.half_width;
        let half = w / 2.0;
        let u = (x - (c - w)) / half;
        let v = ((c + w) - x) / half;
        let s_u = smoothstep(u);
        let s_v = smoothstep(v);
        let d = smoothstep_deriv(u) / half * s_v - s_u * smoothstep_deriv(v) / half;
        (s_u * s_v, d)
    }

    fn trig(&self, axis: usize, x: f64) -> (f64, f64) {
        let l = self.ball_radius;
        let mut val = 1.0;
        let mut der = 0.0;
        for d in 1..=3usize {
            let k = d as f64 * std::f64::consts::PI / l;
            let (s, c) = (k * x).sin_cos();
            val += self.trig_cos[axis][d - 1] * c + self.trig_sin[axis][d - 1] * s;
            der += -self.trig_cos[axis][d - 1] * k * s + self.trig_sin[axis][d - 1] * k * c;
        }
        (val, der)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut acc = self.amplitude;
        #[allow(clippy::needless_range_loop)]
        for axis in 0..self.m {
            let (w, _) = self.window(axis, x[axis]);
            let (t, _) = self.trig(axis, x[axis]);
            acc *= w * t;
        }
        acc
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let factors: Vec<(f64, f64)> = (0..self.m)
            .map(|axis| {
                let (w, dw) = self.window(axis, x[axis]);
                let (t, dt) = self.trig(axis, x[axis]);
                (w * t, dw * t + w * dt)
            })
            .collect();
        (0..self.m)
            .map(|axis| {
                let mut g = self.amplitude;
                for (j, (val, der)) in factors.iter().enumerate() {
                    g *= if j == axis { *der } else { *val };
                }
                g
            })
            .collect()
    }

    pub fn realize(&self, grid: &Grid) -> RealizedBump {
        let nodes = grid.nodes();
        let values: Vec<f64> = nodes.iter().map(|x| self.value(x)).collect();
        let grads: Vec<Vec<f64>> = nodes.iter().map(|x| self.gradient(x)).collect();
        RealizedBump {
            seed: Some(self.seed),
            values,
            grads,
        }
    }
}

/// Node values and exact gradients of a test function on a grid.
#[derive(Debug, Clone)]
pub struct RealizedBump {
    pub seed: Option<u64>,
    pub values: Vec<f64>,
    pub grads: Vec<Vec<f64>>,
}

impl RealizedBump {
    /// Realizes an arbitrary (value, gradient) pair, for hand-built test
    /// functions like tents.
    pub fn from_fn(
        grid: &Grid,
        value: impl Fn(&[f64]) -> f64,
        gradient: impl Fn(&[f64]) -> Vec<f64>,
    ) -> RealizedBump {
        let nodes = grid.nodes();
        RealizedBump {
            seed: None,
            values: nodes.iter().map(|x| value(x)).collect(),
            grads: nodes.iter().map(|x| gradient(x)).collect(),
        }
    }
}

/// Trapezoid integrals of the bump against nodal weights.
struct BumpIntegrals<'a> {
    grid: &'a Grid,
    nodes: Vec<Vec<f64>>,
}

impl<'a> BumpIntegrals<'a> {
    fn new(grid: &'a Grid) -> Self {
        BumpIntegrals {
            grid,
            nodes: grid.nodes(),
        }
    }

    fn l2_sq(&self, bump: &RealizedBump) -> f64 {
        self.nodes
            .iter()
            .zip(&bump.values)
            .map(|(x, v)| self.grid.quad_weight(x) * v * v)
            .sum()
    }

    fn grad_sq(&self, bump: &RealizedBump) -> f64 {
        self.nodes
            .iter()
            .zip(&bump.grads)
            .map(|(x, g)| self.grid.quad_weight(x) * g.iter().map(|c| c * c).sum::<f64>())
            .sum()
    }

    fn axis_deriv_sq(&self, bump: &RealizedBump, axis: usize) -> f64 {
        self.nodes
            .iter()
            .zip(&bump.grads)
            .map(|(x, g)| self.grid.quad_weight(x) * g[axis] * g[axis])
            .sum()
    }

    fn weighted_sq(&self, bump: &RealizedBump, weight: &[f64]) -> f64 {
        self.nodes
            .iter()
            .zip(bump.values.iter().zip(weight))
            .map(|(x, (v, w))| self.grid.quad_weight(x) * w * v * v)
            .sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundAuxReport {
    pub seed: Option<u64>,
    pub tau: f64,
    pub s: f64,
    pub axis: usize,
    /// min of f over the bump support with |x| >= s.
    pub f_min: f64,
    pub lhs: f64,
    pub rhs_core: f64,
    /// lhs / rhs: the per-bump estimate of the constant.
    pub ratio: f64,
}

/// Localization bound tester:
/// `‖φ‖² <= C (1/(τ² f_min²) + s²)(‖∂_l φ‖² + ∫ τ² f² φ²)`.
pub fn check_bound_aux(
    f: &Profile,
    bump: &RealizedBump,
    tau: f64,
    s: f64,
    axis: usize,
    grid: &Grid,
) -> Result<BoundAuxReport, InequalError> {
    let ints = BumpIntegrals::new(grid);
    let nodes = &ints.nodes;
    // f on nodes, and its minimum over the support at |x| >= s (log space)
    let mut fvals = Vec::with_capacity(nodes.len());
    let mut ln_f_min = f64::INFINITY;
    let mut any_support = false;
    for (x, v) in nodes.iter().zip(&bump.values) {
        let fv = f.eval(x)?;
        fvals.push(fv * fv);
        if *v != 0.0 {
            any_support = true;
            let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            if r >= s {
                let (lf, _) = f.log_eval(x)?;
                ln_f_min = ln_f_min.min(lf);
            }
        }
    }
    if !any_support {
        // the zero test function satisfies the bound vacuously
        return Ok(BoundAuxReport {
            seed: bump.seed,
            tau,
            s,
            axis,
            f_min: f64::INFINITY,
            lhs: 0.0,
            rhs_core: 0.0,
            ratio: 0.0,
        });
    }
    if ln_f_min == f64::INFINITY {
        return Err(InequalError::Invalid(format!(
            "bump support does not reach |x| >= {s}"
        )));
    }
    if ln_f_min < f64::MIN_POSITIVE.ln() {
        return Err(InequalError::DegenerateMin { s, ln_f_min });
    }
    let f_min = ln_f_min.exp();

    let lhs = ints.l2_sq(bump);
    let energy = ints.axis_deriv_sq(bump, axis) + tau * tau * ints.weighted_sq(bump, &fvals);
    let prefactor = 1.0 / (tau * tau * f_min * f_min) + s * s;
    let rhs_core = prefactor * energy;
    let ratio = if rhs_core > 0.0 { lhs / rhs_core } else { 0.0 };
    Ok(BoundAuxReport {
        seed: bump.seed,
        tau,
        s,
        axis,
        f_min,
        lhs,
        rhs_core,
        ratio,
    })
}

/// Batch of seeded bumps; the max ratio estimates the constant. Bumps
/// whose support misses `|x| >= s` are skipped (the bound is vacuous for
/// them) and counted.
pub fn batch_bound_aux(
    f: &Profile,
    count: usize,
    base_seed: u64,
    tau: f64,
    s: f64,
    axis: usize,
    grid: &Grid,
) -> Result<(f64, Vec<BoundAuxReport>, usize), InequalError> {
    let reports: Vec<Result<BoundAuxReport, InequalError>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let bump = BumpFunction::random(base_seed + i as u64, grid.dim(), grid.radius());
            let realized = bump.realize(grid);
            check_bound_aux(f, &realized, tau, s, axis, grid)
        })
        .collect();
    let mut rows = Vec::with_capacity(count);
    let mut skipped = 0usize;
    for r in reports {
        match r {
            Ok(row) => rows.push(row),
            Err(InequalError::Invalid(_)) => skipped += 1,
            Err(other) => return Err(other),
        }
    }
    let best = rows.iter().map(|r| r.ratio).fold(0.0f64, f64::max);
    Ok((best, rows, skipped))
}

#[derive(Debug, Clone, Serialize)]
pub struct HardyReport {
    pub seed: Option<u64>,
    pub r: f64,
    pub mu: f64,
    pub lhs: f64,
    pub grad_sq: f64,
    /// lhs / (4 mu² ∫|∇φ|²); at most 1 up to grid error.
    pub ratio: f64,
}

/// Hardy-type degeneracy bound:
/// `∫_{|x|<=r} Λ φ² <= 4 μ(r, √Λ)² ∫ |∇φ|²` for φ supported in B(0, r).
pub fn check_hardy_claim(
    lam_sum: &Profile,
    bump: &RealizedBump,
    r: f64,
    grid: &Grid,
) -> Result<HardyReport, InequalError> {
    let ints = BumpIntegrals::new(grid);
    let sqrt_field = FnField {
        m: lam_sum.m,
        f: |x: &[f64]| {
            let v = lam_sum.eval(x)?;
            if v < 0.0 {
                return Err(FieldError::Invalid(format!("negative aggregate {v}")));
            }
            Ok(v.sqrt())
        },
    };
    let (mu_val, _) = mu(r, &sqrt_field)?;
    let mut lhs = 0.0;
    for (x, v) in ints.nodes.iter().zip(&bump.values) {
        let rad = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        if rad <= r + 1e-12 {
            lhs += ints.grid.quad_weight(x) * lam_sum.eval(x)? * v * v;
        } else if *v != 0.0 {
            return Err(InequalError::Invalid(format!(
                "bump not supported in B(0, {r}): nonzero at {x:?}"
            )));
        }
    }
    let grad_sq = ints.grad_sq(bump);
    let bound = 4.0 * mu_val * mu_val * grad_sq;
    let ratio = if bound > 0.0 { lhs / bound } else { 0.0 };
    Ok(HardyReport {
        seed: bump.seed,
        r,
        mu: mu_val,
        lhs,
        grad_sq,
        ratio,
    })
}

/// Batch Hardy check; returns the max ratio and the worst seed.
pub fn batch_hardy(
    lam_sum: &Profile,
    count: usize,
    base_seed: u64,
    r: f64,
    grid: &Grid,
) -> Result<(f64, Option<u64>, Vec<HardyReport>), InequalError> {
    let reports: Vec<Result<HardyReport, InequalError>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let bump = BumpFunction::random(base_seed + i as u64, grid.dim(), r);
            let realized = bump.realize(grid);
            check_hardy_claim(lam_sum, &realized, r, grid)
        })
        .collect();
    let mut rows = Vec::with_capacity(count);
    for rep in reports {
        rows.push(rep?);
    }
    let mut best = 0.0f64;
    let mut worst_seed = None;
    for row in &rows {
        if row.ratio > best {
            best = row.ratio;
            worst_seed = row.seed;
        }
    }
    Ok((best, worst_seed, rows))
}

#[derive(Debug, Clone, Serialize)]
pub struct SufficReport {
    pub seed: Option<u64>,
    pub tau: f64,
    /// Measured `(log τ)² ‖√Λ_sum φ‖² / (‖∇φ‖² + τ² ‖√Λ_prod φ‖²)`.
    pub direct_delta: f64,
    /// Upper bound on the same δ through the cutoff split.
    pub split_bound: f64,
    /// Radius of the region where the product cutoff survives.
    pub r_tau: f64,
    /// 0/0 sentinel: the bump vanished.
    pub degenerate: bool,
}

/// Two-term sufficiency split with ν = χ(τ Λ_product): evaluates the
/// measured δ(τ) directly and the bound the proof's split yields through
/// the Hardy step plus the cutoff-gradient/Malgrange step.
pub fn check_suffic(
    fam: &DegeneracyFamily,
    bump: &RealizedBump,
    tau: f64,
    grid: &Grid,
) -> Result<SufficReport, InequalError> {
    if tau < std::f64::consts::E {
        return Err(InequalError::Invalid("tau must be at least e".into()));
    }
    let ints = BumpIntegrals::new(grid);
    let nodes = &ints.nodes;
    let log_tau_sq = tau.ln().powi(2);

    // pointwise family data on nodes
    let mut lam_sum = Vec::with_capacity(nodes.len());
    let mut lam_prod = Vec::with_capacity(nodes.len());
    for x in nodes {
        let agg = fam.aggregates(x)?;
        lam_sum.push(agg.sum);
        lam_prod.push(agg.product);
    }

    let phi_sq = ints.l2_sq(bump);
    if phi_sq == 0.0 {
        return Ok(SufficReport {
            seed: bump.seed,
            tau,
            direct_delta: f64::NAN,
            split_bound: f64::NAN,
            r_tau: 0.0,
            degenerate: true,
        });
    }
    let grad_sq = ints.grad_sq(bump);
    let sum_phi = ints.weighted_sq(bump, &lam_sum);
    let prod_phi = ints.weighted_sq(bump, &lam_prod);
    let denom = grad_sq + tau * tau * prod_phi;
    let direct_delta = log_tau_sq * sum_phi / denom;

    // cutoff split: ν = χ(τ Λ_prod), survives where τ Λ_prod <= 2
    let nu: Vec<f64> = lam_prod.iter().map(|&p| chi(tau * p)).collect();
    let mut r_tau = 0.0f64;
    for (i, x) in nodes.iter().enumerate() {
        if bump.values[i] != 0.0 && tau * lam_prod[i] <= 2.0 {
            let rad = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            r_tau = r_tau.max(rad);
        }
    }

    // far term: (log τ)² ∫ Λ_sum (1-ν)² φ² against τ² ∫ Λ_prod φ²
    let mut far = 0.0;
    for (i, x) in nodes.iter().enumerate() {
        let w = ints.grid.quad_weight(x);
        far += w * lam_sum[i] * (1.0 - nu[i]).powi(2) * bump.values[i] * bump.values[i];
    }

    // near term via the Hardy step on φ_ν = ν φ supported in B(0, r_tau):
    // needs μ(r_τ, √Λ_sum) and ∫ |∇(νφ)|², with ∇ν analytic through the
    // profile gradients and the chain rule
    let split_bound = if r_tau > 0.0 {
        let sqrt_field = FnField {
            m: fam.m,
            f: |x: &[f64]| Ok(fam.aggregates(x)?.sum.max(0.0).sqrt()),
        };
        let (mu_val, _) = mu(r_tau.min(fam.radius()), &sqrt_field)?;
        let grads: Vec<Vec<Expr>> = fam.profiles.iter().map(|p| p.gradient_exprs()).collect();
        let mut grad_nu_phi_sq = 0.0;
        for (i, x) in nodes.iter().enumerate() {
            if bump.values[i] == 0.0 && bump.grads[i].iter().all(|&g| g == 0.0) {
                continue;
            }
            // ∇Λ_prod by the product rule
            let mut vals = Vec::with_capacity(fam.profiles.len());
            for p in &fam.profiles {
                vals.push(p.eval(x)?);
            }
            let mut b = crate::expr::Bindings::new();
            for (ax, c) in x.iter().enumerate() {
                b.set(&format!("x{}", ax + 1), *c);
            }
            let mut grad_prod = vec![0.0; fam.m];
            for (pi, comp_grads) in grads.iter().enumerate() {
                let mut others = 1.0;
                for (pj, v) in vals.iter().enumerate() {
                    if pj != pi {
                        others *= v;
                    }
                }
                for (gp, g_expr) in grad_prod.iter_mut().zip(comp_grads) {
                    *gp += g_expr.evaluate(&b).unwrap_or(0.0) * others;
                }
            }
            let dchi = chi_deriv(tau * lam_prod[i]) * tau;
            let w = ints.grid.quad_weight(x);
            let mut acc = 0.0;
            for (gp, bg) in grad_prod.iter().zip(&bump.grads[i]) {
                let g = dchi * gp * bump.values[i] + nu[i] * bg;
                acc += g * g;
            }
            grad_nu_phi_sq += w * acc;
        }
        let near = 4.0 * mu_val * mu_val * grad_nu_phi_sq;
        log_tau_sq * (2.0 * near + 2.0 * far) / denom
    } else {
        log_tau_sq * 2.0 * far / denom
    };

    Ok(SufficReport {
        seed: bump.seed,
        tau,
        direct_delta,
        split_bound,
        r_tau,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SufficSweep {
    pub rows: Vec<SufficReport>,
    /// Set when the measured δ(τ) fails to be nonincreasing by more than
    /// 10% somewhere along the sweep (a monitor, not an assertion).
    pub nonmonotone_flag: bool,
}

/// Worst-bump δ(τ) over a seeded batch, per τ.
pub fn suffic_sweep(
    fam: &DegeneracyFamily,
    taus: &[f64],
    bumps: usize,
    base_seed: u64,
    grid: &Grid,
) -> Result<SufficSweep, InequalError> {
    let realized: Vec<RealizedBump> = (0..bumps)
        .map(|i| BumpFunction::random(base_seed + i as u64, grid.dim(), grid.radius()).realize(grid))
        .collect();
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let per_bump: Vec<Result<SufficReport, InequalError>> = realized
            .par_iter()
            .map(|b| check_suffic(fam, b, tau, grid))
            .collect();
        let mut worst: Option<SufficReport> = None;
        for rep in per_bump {
            let rep = rep?;
            if rep.degenerate {
                continue;
            }
            let take = match &worst {
                None => true,
                Some(w) => rep.direct_delta > w.direct_delta,
            };
            if take {
                worst = Some(rep);
            }
        }
        rows.push(worst.ok_or_else(|| InequalError::Invalid("all bumps degenerate".into()))?);
    }
    let mut nonmonotone_flag = false;
    for w in rows.windows(2) {
        if w[1].direct_delta > 1.1 * w[0].direct_delta {
            nonmonotone_flag = true;
        }
    }
    Ok(SufficSweep {
        rows,
        nonmonotone_flag,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MalgrangeReport {
    /// Empirical constant sup |∇f|² / f over the admissible nodes.
    pub c: f64,
    pub argmax: Vec<f64>,
    /// Nodes skipped because f fell below the floor.
    pub skipped: usize,
}

/// Gradient inequality `|∇f|² <= C f` for smooth nonnegative f: empirical
/// constant with exact symbolic gradients; nodes with f below 1e-30 are
/// skipped and counted.
pub fn check_malgrange(f: &Profile, grid: &Grid) -> Result<MalgrangeReport, InequalError> {
    let grads = f.gradient_exprs();
    let mut c = 0.0f64;
    let mut argmax = Vec::new();
    let mut skipped = 0usize;
    for x in grid.nodes() {
        let fv = f.eval(&x)?;
        if fv < 0.0 {
            return Err(InequalError::Invalid(format!(
                "f must be nonnegative, got {fv} at {x:?}"
            )));
        }
        if fv < 1e-30 {
            skipped += 1;
            continue;
        }
        let mut b = crate::expr::Bindings::new();
        for (ax, v) in x.iter().enumerate() {
            b.set(&format!("x{}", ax + 1), *v);
        }
        let mut g2 = 0.0;
        let mut valid = true;
        for g in &grads {
            match g.evaluate(&b) {
                Ok(v) => g2 += v * v,
                Err(_) => {
                    valid = false;
                    break;
                }
            }
        }
        if !valid {
            skipped += 1;
            continue;
        }
        let ratio = g2 / fv;
        if ratio > c {
            c = ratio;
            argmax = x.clone();
        }
    }
    Ok(MalgrangeReport { c, argmax, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tent(grid: &Grid, radius: f64) -> RealizedBump {
        // φ = max(radius - |x|, 0) with slope ±1
        RealizedBump::from_fn(
            grid,
            |x| (radius - x[0].abs()).max(0.0),
            |x| {
                if x[0].abs() < radius && x[0] != 0.0 {
                    vec![-x[0].signum()]
                } else {
                    vec![0.0]
                }
            },
        )
    }

    #[test]
    fn bump_is_deterministic_and_supported() {
        let a = BumpFunction::random(42, 1, 1.0);
        let b = BumpFunction::random(42, 1, 1.0);
        assert_eq!(a.center, b.center);
        assert_eq!(a.trig_cos, b.trig_cos);
        // support inside the ball
        let g = Grid::line(1.0, 201).unwrap();
        let r = a.realize(&g);
        for (x, v) in g.nodes().iter().zip(&r.values) {
            if *v != 0.0 {
                assert!(x[0].abs() < 1.0);
            }
        }
    }

    #[test]
    fn bump_gradient_matches_fd() {
        let bump = BumpFunction::random(7, 1, 1.0);
        for x in [-0.3, 0.0, 0.11, 0.27] {
            let g = bump.gradient(&[x])[0];
            let h = 1e-6;
            let fd = (bump.value(&[x + h]) - bump.value(&[x - h])) / (2.0 * h);
            assert!((g - fd).abs() <= 1e-6 * (1.0 + g.abs()), "x={x}: g={g} fd={fd}");
        }
    }

    #[test]
    fn bound_aux_tent_oracle() {
        // f = 1, tent on (-1,1), tau = 1, s = 0.5:
        // ratio = (2/3) / ((1/1 + 0.25)(2 + 2/3)) = 0.2
        let g = Grid::line(1.0, 4001).unwrap();
        let f = Profile::constant(1.0, 1, 1.0);
        let bump = tent(&g, 1.0);
        let rep = check_bound_aux(&f, &bump, 1.0, 0.5, 0, &g).unwrap();
        assert!((rep.ratio - 0.2).abs() <= 1e-3, "ratio={}", rep.ratio);
    }

    #[test]
    fn bound_aux_zero_bump_is_vacuous() {
        let g = Grid::line(1.0, 101).unwrap();
        let f = Profile::constant(1.0, 1, 1.0);
        let zero = RealizedBump::from_fn(&g, |_| 0.0, |_| vec![0.0]);
        let rep = check_bound_aux(&f, &zero, 1.0, 0.5, 0, &g).unwrap();
        assert_eq!(rep.ratio, 0.0);

        // a nonzero bump that never reaches |x| >= s is a caller error
        let inner = tent(&g, 0.1);
        assert!(check_bound_aux(&f, &inner, 1.0, 0.5, 0, &g).is_err());
    }

    #[test]
    fn bound_aux_degenerate_min_reported() {
        let g = Grid::line(1.0, 4001).unwrap();
        let f = Profile::parse("flat", "exp(-1/abs(x1))", 1, 1.0, Some(0.0), true).unwrap();
        let bump = tent(&g, 0.01);
        // min over |x| >= 0.0005 of exp(-1/|x|) ~ e^{-2000}: underflow
        let err = check_bound_aux(&f, &bump, 10.0, 0.0005, 0, &g).unwrap_err();
        assert!(matches!(err, InequalError::DegenerateMin { .. }));
    }

    #[test]
    fn bound_aux_batch_stable_across_decades() {
        // empirical constant finite and stable for the flat exponential
        let g = Grid::line(1.0, 2001).unwrap();
        let f = Profile::parse("flat", "exp(-1/abs(x1))", 1, 1.0, Some(0.0), true).unwrap();
        let mut consts = Vec::new();
        for tau in [1e2, 1e3] {
            let env = crate::profiles::radial_envelopes(&f, &g).unwrap();
            let s = crate::koike::r_of_tau(&env, tau).unwrap();
            let (c, rows, skipped) = batch_bound_aux(&f, 50, 1000, tau, s, 0, &g).unwrap();
            assert!(rows.len() + skipped == 50 && !rows.is_empty());
            assert!(c.is_finite() && c > 0.0);
            consts.push(c);
        }
        let ratio = consts[1] / consts[0];
        assert!((0.1..10.0).contains(&ratio), "constants drifted: {consts:?}");
    }

    #[test]
    fn hardy_tent_oracle() {
        // Λ = c, tent of radius r: lhs = 2 c r³/3, bound = 8 c r³,
        // ratio = 1/12
        let g = Grid::line(1.0, 4001).unwrap();
        let lam = Profile::constant(0.7, 1, 1.0);
        let r = 0.5;
        let bump = tent(&g, r);
        let rep = check_hardy_claim(&lam, &bump, r, &g).unwrap();
        assert!(
            (rep.ratio - 1.0 / 12.0).abs() <= 1e-3,
            "ratio={}",
            rep.ratio
        );
    }

    #[test]
    fn hardy_zero_bump_gives_zero() {
        let g = Grid::line(1.0, 101).unwrap();
        let lam = Profile::constant(1.0, 1, 1.0);
        let zero = RealizedBump::from_fn(&g, |_| 0.0, |_| vec![0.0]);
        let rep = check_hardy_claim(&lam, &zero, 0.5, &g).unwrap();
        assert_eq!(rep.ratio, 0.0);
    }

    #[test]
    fn hardy_batch_never_exceeds_bound() {
        let g = Grid::line(1.0, 4001).unwrap();
        for text in ["0.8", "x1^2", "exp(-2/abs(x1))"] {
            let lam = Profile::parse("lam", text, 1, 1.0, Some(0.0), true).unwrap();
            let (worst, _, _) = batch_hardy(&lam, 100, 42, 0.5, &g).unwrap();
            assert!(worst <= 1.05, "{text}: worst ratio {worst}");
        }
    }

    #[test]
    fn hardy_scaling_covariance() {
        // φ(x/c) with r -> c r leaves the ratio invariant (within 2%)
        let g = Grid::line(1.0, 4001).unwrap();
        let lam = Profile::constant(1.0, 1, 1.0);
        let r1 = 0.3;
        let c = 2.0;
        let bump1 = tent(&g, r1);
        let bump2 = RealizedBump::from_fn(
            &g,
            |x| (r1 - (x[0] / c).abs()).max(0.0),
            |x| {
                if (x[0] / c).abs() < r1 && x[0] != 0.0 {
                    vec![-x[0].signum() / c]
                } else {
                    vec![0.0]
                }
            },
        );
        let rep1 = check_hardy_claim(&lam, &bump1, r1, &g).unwrap();
        let rep2 = check_hardy_claim(&lam, &bump2, c * r1, &g).unwrap();
        assert!(
            (rep1.ratio - rep2.ratio).abs() <= 0.02 * rep1.ratio,
            "r1={} r2={}",
            rep1.ratio,
            rep2.ratio
        );
    }

    #[test]
    fn suffic_constant_family_decays_like_logtau_over_tau_sq() {
        let lam2 = Profile::constant(1.0, 1, 1.0);
        let lam3 = Profile::constant(1.0, 1, 1.0);
        let fam = DegeneracyFamily::new(1, 3, 3, vec![lam2, lam3]).unwrap();
        let g = Grid::line(1.0, 1001).unwrap();
        let bump = BumpFunction::random(3, 1, 1.0).realize(&g);
        for tau in [10.0, 100.0, 1000.0] {
            let rep = check_suffic(&fam, &bump, tau, &g).unwrap();
            // Λ_prod = 1: δ ≈ (log τ)² (Λ_sum-mass/denominator) ~ 2 (log τ)²/τ²
            let expect_scale = tau.ln().powi(2) / (tau * tau);
            assert!(
                rep.direct_delta <= 4.0 * expect_scale,
                "tau={tau}: delta={} scale={expect_scale}",
                rep.direct_delta
            );
        }
    }

    #[test]
    fn suffic_zero_bump_sentinel() {
        let lam = Profile::constant(1.0, 1, 1.0);
        let fam = DegeneracyFamily::new(1, 2, 2, vec![lam]).unwrap();
        let g = Grid::line(1.0, 101).unwrap();
        let zero = RealizedBump::from_fn(&g, |_| 0.0, |_| vec![0.0]);
        let rep = check_suffic(&fam, &zero, 10.0, &g).unwrap();
        assert!(rep.degenerate && rep.direct_delta.is_nan());
    }

    #[test]
    fn suffic_sweep_separates_families() {
        let g = Grid::line(1.0, 1001).unwrap();
        let taus = [10.0, 100.0, 1000.0, 10000.0];
        let one = || Profile::constant(1.0, 1, 1.0);

        let holds = DegeneracyFamily::new(
            1,
            3,
            3,
            vec![
                one(),
                Profile::parse("h", "exp(-2/abs(x1)^0.5)", 1, 1.0, Some(0.0), true).unwrap(),
            ],
        )
        .unwrap();
        let fails = DegeneracyFamily::new(
            1,
            3,
            3,
            vec![
                one(),
                Profile::parse("f", "exp(-2/abs(x1))", 1, 1.0, Some(0.0), true).unwrap(),
            ],
        )
        .unwrap();

        let sweep_holds = suffic_sweep(&holds, &taus, 30, 7, &g).unwrap();
        let sweep_fails = suffic_sweep(&fails, &taus, 30, 7, &g).unwrap();
        let first_h = sweep_holds.rows.first().unwrap().direct_delta;
        let last_h = sweep_holds.rows.last().unwrap().direct_delta;
        let last_f = sweep_fails.rows.last().unwrap().direct_delta;
        // Holds family: worst-bump delta decreasing; Fails family: the
        // worst bump keeps delta from vanishing
        assert!(last_h < first_h, "holds: {first_h} -> {last_h}");
        assert!(
            last_f > 10.0 * last_h,
            "fails should dominate: {last_f} vs {last_h}"
        );
    }

    #[test]
    fn malgrange_oracles() {
        let g = Grid::line(1.0, 4001).unwrap();
        let sq = Profile::parse("sq", "x1^2", 1, 1.0, None, true).unwrap();
        let rep = check_malgrange(&sq, &g).unwrap();
        assert!((rep.c - 4.0).abs() <= 1e-6, "c={}", rep.c);

        let c = Profile::constant(3.0, 1, 1.0);
        assert_eq!(check_malgrange(&c, &g).unwrap().c, 0.0);

        let quart = Profile::parse("q", "x1^4", 1, 1.0, None, true).unwrap();
        let rep = check_malgrange(&quart, &g).unwrap();
        assert!((rep.c - 16.0).abs() <= 1e-4, "c={}", rep.c);
    }

    #[test]
    fn malgrange_square_identity() {
        // |∇(f²)|²/f² = 4 |∇f|²: C(f²) = 4 sup |∇f|² for f = x² + 1/2
        let g = Grid::line(1.0, 2001).unwrap();
        let f_sq = Profile::parse("fsq", "(x1^2 + 0.5)^2", 1, 1.0, None, true).unwrap();
        let rep = check_malgrange(&f_sq, &g).unwrap();
        // sup |∇f|² = sup (2x)² = 4 on [-1,1], so C = 16
        assert!((rep.c - 16.0).abs() <= 1e-6, "c={}", rep.c);
    }

    #[test]
    fn chi_plateaus() {
        assert_eq!(chi(0.5), 1.0);
        assert_eq!(chi(1.0), 1.0);
        assert_eq!(chi(2.0), 0.0);
        assert_eq!(chi(3.0), 0.0);
        let mid = chi(1.5);
        assert!(mid > 0.0 && mid < 1.0);
        // monotone on [1, 2]
        let mut prev = 1.0;
        for i in 0..=20 {
            let t = 1.0 + i as f64 / 20.0;
            let v = chi(t);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }
}
