//! The Koike functional `mu(t, g) = max { g(z)(t - |z|) : 0 <= |z| <= t }`,
//! pointwise degeneracy aggregates, the hypoellipticity criterion
//! classifier, and the auxiliary functions `w(tau)`, `r(tau)` used by the
//! spectral lower bound.
//!
//! The classifier evaluates the criterion sequence
//! `c_k = mu(t_k, sqrt(G)) * ln P(t_k)` on the geometric scales
//! `t_k = R * 2^-k` in log space, so that profiles like `exp(-2/|x|)` are
//! classified far below the double-precision underflow threshold.

use crate::grid::Grid;
use crate::profiles::{
    check_elliptical, radial_envelopes, FieldError, Profile, RadialEnvelope, ScalarField,
};
use serde::Serialize;
use thiserror::Error;

/// Family of degeneracy profiles λ_{m+1}..λ_p on R^m inside an n-variable
/// operator; the last profile spans indices p..n.
#[derive(Debug, Clone, Serialize)]
pub struct DegeneracyFamily {
    pub m: usize,
    pub p: usize,
    pub n: usize,
    /// Profiles for indices m+1..=p, in order.
    pub profiles: Vec<Profile>,
    /// Marker that λ_p is shared by the trailing block p..n.
    pub last_spans_tail: bool,
}

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("family shape must satisfy 1 <= m < p <= n, got m={m}, p={p}, n={n}")]
    Shape { m: usize, p: usize, n: usize },
    #[error("family needs {expected} profiles for indices {from}..={to}, got {got}")]
    Count {
        expected: usize,
        from: usize,
        to: usize,
        got: usize,
    },
    #[error("profile `{0}` has dimension {1}, family lives on R^{2}")]
    Dim(String, usize, usize),
    #[error("profile `{name}` is not elliptical: value {value} at {at:?}")]
    NotElliptical {
        name: String,
        value: f64,
        at: Vec<f64>,
    },
    #[error(
        "profile `{name}` exceeds 1 (max {max} at {at:?}); rescale it by 1/{max} to \
         restore 0 <= lambda <= 1"
    )]
    OutOfRange {
        name: String,
        max: f64,
        at: Vec<f64>,
    },
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl DegeneracyFamily {
    /// Validates shape, ellipticality and the normalization 0 <= λ <= 1 on
    /// a construction-time grid.
    pub fn new(
        m: usize,
        p: usize,
        n: usize,
        profiles: Vec<Profile>,
    ) -> Result<Self, FamilyError> {
        if !(1 <= m && m < p && p <= n) {
            return Err(FamilyError::Shape { m, p, n });
        }
        let expected = p - m;
        if profiles.len() != expected {
            return Err(FamilyError::Count {
                expected,
                from: m + 1,
                to: p,
                got: profiles.len(),
            });
        }
        let nodes = if m == 1 { 1025 } else { 65 };
        for prof in &profiles {
            if prof.m != m {
                return Err(FamilyError::Dim(prof.name.clone(), prof.m, m));
            }
            let grid = Grid::new(m, prof.radius, nodes).expect("validation grid");
            match check_elliptical(prof, &grid)? {
                crate::profiles::CheckOutcome::Holds => {}
                crate::profiles::CheckOutcome::Violation { at, value } => {
                    return Err(FamilyError::NotElliptical {
                        name: prof.name.clone(),
                        value,
                        at,
                    })
                }
                _ => unreachable!(),
            }
            let mut max = f64::NEG_INFINITY;
            let mut arg = Vec::new();
            for x in grid.nodes() {
                let v = prof.eval(&x)?;
                if v > max {
                    max = v;
                    arg = x;
                }
            }
            if max > 1.0 + 1e-12 {
                return Err(FamilyError::OutOfRange {
                    name: prof.name.clone(),
                    max,
                    at: arg,
                });
            }
        }
        Ok(DegeneracyFamily {
            m,
            p,
            n,
            profiles,
            last_spans_tail: p < n,
        })
    }

    /// Common support radius (the smallest across the family).
    pub fn radius(&self) -> f64 {
        self.profiles
            .iter()
            .map(|p| p.radius)
            .fold(f64::INFINITY, f64::min)
    }

    /// Pointwise aggregates `(sum, product, max, min)` of the λ's at `x`.
    pub fn aggregates(&self, x: &[f64]) -> Result<Aggregates, FieldError> {
        let mut sum = 0.0;
        let mut product = 1.0;
        let mut max = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        for p in &self.profiles {
            let v = p.eval(x)?;
            sum += v;
            product *= v;
            max = max.max(v);
            min = min.min(v);
        }
        Ok(Aggregates {
            sum,
            product,
            max,
            min,
        })
    }

    /// `Σ ln λ_k(x)` in log space, with a clamp flag when some λ underflows
    /// without a structural log.
    pub fn log_product(&self, x: &[f64]) -> Result<(f64, bool), FieldError> {
        let mut acc = 0.0;
        let mut clamped = false;
        for p in &self.profiles {
            let (lv, cl) = p.log_eval(x)?;
            acc += lv;
            clamped |= cl;
        }
        Ok((acc, clamped))
    }

    /// `ln min_k λ_k(x)` in log space.
    pub fn log_min(&self, x: &[f64]) -> Result<(f64, bool), FieldError> {
        let mut acc = f64::INFINITY;
        let mut clamped = false;
        for p in &self.profiles {
            let (lv, cl) = p.log_eval(x)?;
            if lv < acc {
                acc = lv;
                clamped = cl;
            }
        }
        Ok((acc, clamped))
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Aggregates {
    pub sum: f64,
    pub product: f64,
    pub max: f64,
    pub min: f64,
}

/// Directions used for shell maxima of an m-dimensional field.
fn shell_directions(m: usize) -> Vec<Vec<f64>> {
    match m {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..64)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => panic!("shell sampling supports m in {{1, 2}}"),
    }
}

fn shell_max(field: &dyn ScalarField, dirs: &[Vec<f64>], rho: f64) -> Result<f64, FieldError> {
    if rho == 0.0 {
        let origin = vec![0.0; field.dim()];
        return field.eval(&origin);
    }
    let mut best = f64::NEG_INFINITY;
    for d in dirs {
        let x: Vec<f64> = d.iter().map(|c| c * rho).collect();
        best = best.max(field.eval(&x)?);
    }
    Ok(best)
}

/// Koike functional: returns `(value, argmax_radius)` with the smallest
/// maximizing radius. The scan over `[0, t]` is refined by golden-section
/// search around the best bracket.
pub fn mu(t: f64, g: &dyn ScalarField) -> Result<(f64, f64), FieldError> {
    assert!(t > 0.0, "mu needs t > 0");
    if let Some(r) = g.support_radius() {
        assert!(
            t <= r + 1e-12,
            "mu scale t={t} exceeds the support radius {r}"
        );
    }
    let dirs = shell_directions(g.dim());
    let h = |rho: f64| -> Result<f64, FieldError> {
        Ok(shell_max(g, &dirs, rho)? * (t - rho))
    };

    const SCAN: usize = 512;
    let mut best_val = f64::NEG_INFINITY;
    let mut best_i = 0usize;
    let mut vals = Vec::with_capacity(SCAN + 1);
    for i in 0..=SCAN {
        let rho = t * i as f64 / SCAN as f64;
        let v = h(rho)?;
        vals.push(v);
        // strict improvement keeps the smallest maximizing radius
        if v > best_val * (1.0 + 1e-15) + f64::MIN_POSITIVE {
            best_val = v;
            best_i = i;
        }
    }

    // golden-section refinement on the bracket around the best sample
    let lo = t * best_i.saturating_sub(1) as f64 / SCAN as f64;
    let hi = t * (best_i + 1).min(SCAN) as f64 / SCAN as f64;
    let (mut a, mut b) = (lo, hi);
    let inv_phi = 0.618_033_988_749_894_9;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = h(c)?;
    let mut fd = h(d)?;
    for _ in 0..80 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = h(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = h(d)?;
        }
    }
    let refined_rho = 0.5 * (a + b);
    let refined_val = h(refined_rho)?;

    if refined_val > best_val {
        Ok((refined_val, refined_rho))
    } else {
        Ok((best_val, t * best_i as f64 / SCAN as f64))
    }
}

/// Which form of the criterion sequence to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CriterionForm {
    /// `mu(t, sqrt(Λ_sum)) * ln Λ_product`
    SumProduct,
    /// `mu(t, sqrt(λ_max)) * ln λ_min`
    MaxMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

/// Classifier thresholds; recorded in every report.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClassifyThresholds {
    /// |c_k| below this at the finest scales counts as vanished.
    pub eps_cls: f64,
    /// Scales fitted for the decay slope.
    pub fit_window: usize,
    /// |slope| below this with |c_k| above eps_cls means stagnation.
    pub stagnation_slope: f64,
    /// slope below this means decay.
    pub decay_slope: f64,
    /// First scale exponent and number of scales: t_k = R 2^-k, k = k0..=kmax.
    pub k0: u32,
    pub kmax: u32,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        ClassifyThresholds {
            eps_cls: 1e-2,
            fit_window: 6,
            stagnation_slope: 0.05,
            decay_slope: -0.2,
            k0: 2,
            kmax: 40,
        }
    }
}

/// One scale row of the criterion sequence.
#[derive(Debug, Clone, Serialize)]
pub struct ScaleRow {
    pub k: u32,
    pub t: f64,
    /// Koike functional of the aggregate at this scale.
    pub mu: f64,
    pub mu_argmax: f64,
    /// Log of the product-form aggregate, computed in log space.
    pub log_aggregate: f64,
    /// c_k = mu * log_aggregate.
    pub c: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FormReport {
    pub form: CriterionForm,
    pub rows: Vec<ScaleRow>,
    /// Least-squares slope of ln|c_k| over the fit window (None when the
    /// tail vanished identically).
    pub decay_slope: Option<f64>,
    pub verdict: Verdict,
}

/// Full classifier output: both criterion forms, never merged.
#[derive(Debug, Clone, Serialize)]
pub struct KoikeReport {
    pub thresholds: ClassifyThresholds,
    pub sum_product: Option<FormReport>,
    pub max_min: Option<FormReport>,
    /// Set when scales had to stop early (errors treated as resolution
    /// exhaustion, never as a verdict).
    pub resolution_exhausted: bool,
}

struct SqrtAggregate<'a> {
    family: &'a DegeneracyFamily,
    form: CriterionForm,
}

impl ScalarField for SqrtAggregate<'_> {
    fn dim(&self) -> usize {
        self.family.m
    }

    fn eval(&self, x: &[f64]) -> Result<f64, FieldError> {
        let agg = self.family.aggregates(x)?;
        let v = match self.form {
            CriterionForm::SumProduct => agg.sum,
            CriterionForm::MaxMin => agg.max,
        };
        if v < 0.0 {
            return Err(FieldError::Invalid(format!(
                "negative aggregate {v} at {x:?}"
            )));
        }
        Ok(v.sqrt())
    }

    fn support_radius(&self) -> Option<f64> {
        Some(self.family.radius())
    }
}

/// Evaluates the criterion sequence for one form.
fn classify_form(
    fam: &DegeneracyFamily,
    form: CriterionForm,
    thresholds: &ClassifyThresholds,
    exhausted: &mut bool,
) -> FormReport {
    let field = SqrtAggregate { family: fam, form };
    let radius = fam.radius();
    let dirs = shell_directions(fam.m);
    let mut rows = Vec::new();
    let mut form_exhausted = false;
    for k in thresholds.k0..=thresholds.kmax {
        let t = radius * 2f64.powi(-(k as i32));
        let mu_res = mu(t, &field);
        // worst (largest magnitude) log aggregate over the shell |x| = t
        let log_res: Result<(f64, bool), FieldError> = (|| {
            let mut worst = 0.0f64;
            let mut any = false;
            let mut clamped = false;
            for d in &dirs {
                let x: Vec<f64> = d.iter().map(|c| c * t).collect();
                let (lv, cl) = match form {
                    CriterionForm::SumProduct => fam.log_product(&x)?,
                    CriterionForm::MaxMin => fam.log_min(&x)?,
                };
                if !any || lv.abs() > worst.abs() {
                    worst = lv;
                    any = true;
                }
                clamped |= cl;
            }
            Ok((worst, clamped))
        })();
        match (mu_res, log_res) {
            (Ok((mu_v, argmax)), Ok((log_v, clamped))) => rows.push(ScaleRow {
                k,
                t,
                mu: mu_v,
                mu_argmax: argmax,
                log_aggregate: log_v,
                c: mu_v * log_v,
                clamped,
            }),
            _ => {
                *exhausted = true;
                form_exhausted = true;
                break;
            }
        }
    }
    let (slope, verdict) = decide(&rows, thresholds);
    // an exhausted scale ladder is never turned into a verdict
    let verdict = if form_exhausted {
        Verdict::Inconclusive
    } else {
        verdict
    };
    FormReport {
        form,
        rows,
        decay_slope: slope,
        verdict,
    }
}

fn decide(rows: &[ScaleRow], th: &ClassifyThresholds) -> (Option<f64>, Verdict) {
    if rows.len() < th.fit_window {
        return (None, Verdict::Inconclusive);
    }
    let finest: Vec<f64> = rows.iter().rev().take(3).map(|r| r.c.abs()).collect();
    if finest.iter().all(|&c| c < th.eps_cls) {
        // tail already vanished; slope is reported when it exists
        let slope = fit_tail_slope(rows, th.fit_window);
        return (slope, Verdict::Holds);
    }
    let slope = match fit_tail_slope(rows, th.fit_window) {
        Some(s) => s,
        None => return (None, Verdict::Inconclusive),
    };
    if slope < th.decay_slope {
        return (Some(slope), Verdict::Holds);
    }
    if slope.abs() < th.stagnation_slope && finest.iter().all(|&c| c > th.eps_cls) {
        return (Some(slope), Verdict::Fails);
    }
    (Some(slope), Verdict::Inconclusive)
}

/// Least-squares slope of ln|c_k| against k over the last `window` scales.
fn fit_tail_slope(rows: &[ScaleRow], window: usize) -> Option<f64> {
    let tail: Vec<(f64, f64)> = rows
        .iter()
        .rev()
        .take(window)
        .filter(|r| r.c.abs() > 0.0 && r.c.is_finite())
        .map(|r| (r.k as f64, r.c.abs().ln()))
        .collect();
    if tail.len() < 3 {
        return None;
    }
    Some(least_squares_slope(&tail))
}

pub(crate) fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

pub(crate) fn least_squares_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let slope = least_squares_slope(points);
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    (slope, (sy - slope * sx) / n)
}

/// Runs the classifier. Both criterion forms are computed when `form` is
/// `None`; verdicts may differ and are never merged.
pub fn classify(
    fam: &DegeneracyFamily,
    form: Option<CriterionForm>,
    thresholds: &ClassifyThresholds,
) -> KoikeReport {
    let mut exhausted = false;
    let sum_product = match form {
        None | Some(CriterionForm::SumProduct) => Some(classify_form(
            fam,
            CriterionForm::SumProduct,
            thresholds,
            &mut exhausted,
        )),
        _ => None,
    };
    let max_min = match form {
        None | Some(CriterionForm::MaxMin) => Some(classify_form(
            fam,
            CriterionForm::MaxMin,
            thresholds,
            &mut exhausted,
        )),
        _ => None,
    };
    KoikeReport {
        thresholds: *thresholds,
        sum_product,
        max_min,
        resolution_exhausted: exhausted,
    }
}

/// `w(tau) = inf_s (1/s + tau f0(s))` over the envelope's sampled range.
pub fn w_of_tau(envelope: &RadialEnvelope, tau: f64) -> f64 {
    assert!(tau > 0.0);
    let mut best = f64::INFINITY;
    for (i, &rho) in envelope.radii.iter().enumerate() {
        let v = 1.0 / rho + tau * envelope.lower[i];
        best = best.min(v);
    }
    best
}

/// Convenience wrapper computing the envelope from a grid first.
pub fn w_of_tau_profile(f: &Profile, tau: f64, grid: &Grid) -> Result<f64, FieldError> {
    let env = radial_envelopes(f, grid)?;
    Ok(w_of_tau(&env, tau))
}

#[derive(Debug, Error)]
pub enum RootError {
    #[error("no crossing: tau * f0(R) = {rhs} stays below 1/R = {lhs} on the sampled range")]
    NoCrossing { lhs: f64, rhs: f64 },
}

/// The unique root of `1/r = tau f0(r)`; bisection on the envelope query
/// (1/s decreasing, f0 nondecreasing).
pub fn r_of_tau(envelope: &RadialEnvelope, tau: f64) -> Result<f64, RootError> {
    assert!(tau > 0.0);
    let rmax = envelope.max_radius();
    let h = |s: f64| 1.0 / s - tau * envelope.lower_at(s);
    if h(rmax) > 0.0 {
        return Err(RootError::NoCrossing {
            lhs: 1.0 / rmax,
            rhs: tau * envelope.lower_at(rmax),
        });
    }
    let mut lo = envelope.radii[0] * 1e-9;
    let mut hi = rmax;
    // h(lo) > 0 always: 1/s blows up and f0 is bounded near 0
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn r_of_tau_profile(f: &Profile, tau: f64, grid: &Grid) -> Result<f64, FieldError> {
    let env = radial_envelopes(f, grid)?;
    r_of_tau(&env, tau).map_err(|e| FieldError::Invalid(e.to_string()))
}
