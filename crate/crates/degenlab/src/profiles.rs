//! Scalar degeneracy profiles λ(x) on R^m and the estimators built on them:
//! central finite differences up to fourth order, Hölder seminorms, radial
//! min/max envelopes, and the structural checks (elliptical, strongly
//! monotone).

use crate::expr::{Bindings, EvalError, Expr, VarSet};
use crate::grid::Grid;
use serde::Serialize;
use thiserror::Error;

/// Anything that can be sampled pointwise on R^m.
pub trait ScalarField {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<f64, FieldError>;
    /// Radius outside of which the field is not meant to be sampled.
    fn support_radius(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FieldError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("finite-difference stencil exits the support radius {radius} at |x| = {reach}")]
    StepTooLarge { radius: f64, reach: f64 },
    #[error("shell at radius {0} contains no grid nodes even after widening")]
    EmptyShell(f64),
    #[error("{0}")]
    Invalid(String),
}

/// A named scalar profile given by an expression in `x1..xm`.
///
/// `at0` extends profiles like `exp(-1/abs(x1))` to the origin by
/// continuity; it applies at the exact origin only.
#[derive(Debug, Clone, Serialize)]
pub struct Profile {
    pub name: String,
    pub expr: Expr,
    pub m: usize,
    pub radius: f64,
    pub at0: Option<f64>,
    pub elliptical: bool,
}

impl Profile {
    pub fn new(
        name: &str,
        expr: Expr,
        m: usize,
        radius: f64,
        at0: Option<f64>,
        elliptical: bool,
    ) -> Result<Self, FieldError> {
        let vars = VarSet::spatial(m);
        expr.check_vars(&vars)
            .map_err(|v| FieldError::Invalid(format!("undeclared variable `{v}` in profile")))?;
        if !(radius > 0.0) {
            return Err(FieldError::Invalid(format!(
                "profile support radius must be positive, got {radius}"
            )));
        }
        Ok(Profile {
            name: name.to_string(),
            expr,
            m,
            radius,
            at0,
            elliptical,
        })
    }

    pub fn parse(
        name: &str,
        text: &str,
        m: usize,
        radius: f64,
        at0: Option<f64>,
        elliptical: bool,
    ) -> Result<Self, FieldError> {
        let vars = VarSet::spatial(m);
        let expr = crate::expr::parse(text, &vars)
            .map_err(|e| FieldError::Invalid(format!("profile `{name}`: {e}")))?;
        Profile::new(name, expr, m, radius, at0, elliptical)
    }

    pub fn constant(c: f64, m: usize, radius: f64) -> Profile {
        Profile {
            name: format!("const{c}"),
            expr: Expr::Const(c),
            m,
            radius,
            at0: None,
            elliptical: c > 0.0,
        }
    }

    fn bindings(&self, x: &[f64]) -> Bindings {
        let mut b = Bindings::new();
        for (i, v) in x.iter().enumerate() {
            b.set(&format!("x{}", i + 1), *v);
        }
        b
    }

    /// Exact spatial gradient as expression trees (one per axis).
    pub fn gradient_exprs(&self) -> Vec<Expr> {
        (1..=self.m)
            .map(|i| self.expr.differentiate(&format!("x{i}")))
            .collect()
    }

    /// Structural log evaluation: `exp(g)` factors (also inside products,
    /// quotients, powers and square roots) contribute `g` directly, so that
    /// `ln λ` stays finite far below the double-precision underflow
    /// threshold. Returns `(value, clamped)`; clamped means some factor
    /// underflowed without a structural log and was floored at
    /// `ln(f64::MIN_POSITIVE)`.
    pub fn log_eval(&self, x: &[f64]) -> Result<(f64, bool), FieldError> {
        if let Some(v) = self.at0 {
            if x.iter().all(|&c| c == 0.0) {
                return if v > 0.0 {
                    Ok((v.ln(), false))
                } else {
                    Ok((f64::MIN_POSITIVE.ln(), true))
                };
            }
        }
        let b = self.bindings(x);
        match structural_log(&self.expr, &b) {
            Some(r) => Ok(r),
            None => Err(FieldError::Invalid(format!(
                "profile `{}` is not positive at {x:?}; log undefined",
                self.name
            ))),
        }
    }
}

/// Log of a positive expression value, decomposing through the structure
/// where that avoids underflow; direct evaluation otherwise. `None` means
/// the value is negative or not evaluable.
fn structural_log(e: &Expr, b: &Bindings) -> Option<(f64, bool)> {
    use crate::expr::{BinaryOp, UnaryOp};
    let structural = match e {
        Expr::Unary(UnaryOp::Exp, inner) => inner.evaluate(b).ok().map(|v| (v, false)),
        Expr::Unary(UnaryOp::Sqrt, inner) => {
            structural_log(inner, b).map(|(l, c)| (0.5 * l, c))
        }
        Expr::Binary(BinaryOp::Mul, x, y) => match (structural_log(x, b), structural_log(y, b)) {
            (Some((lx, cx)), Some((ly, cy))) => Some((lx + ly, cx || cy)),
            _ => None,
        },
        Expr::Binary(BinaryOp::Div, x, y) => match (structural_log(x, b), structural_log(y, b)) {
            (Some((lx, cx)), Some((ly, cy))) => Some((lx - ly, cx || cy)),
            _ => None,
        },
        Expr::Binary(BinaryOp::Pow, base, exp) => match exp.as_ref() {
            Expr::Const(r) => structural_log(base, b).map(|(l, c)| (r * l, c)),
            _ => None,
        },
        _ => None,
    };
    structural.or_else(|| match e.evaluate(b) {
        Ok(v) if v > 0.0 => Some((v.ln(), false)),
        Ok(v) => (v == 0.0).then_some((f64::MIN_POSITIVE.ln(), true)),
        Err(_) => None,
    })
}

impl ScalarField for Profile {
    fn dim(&self) -> usize {
        self.m
    }

    fn eval(&self, x: &[f64]) -> Result<f64, FieldError> {
        if let Some(v) = self.at0 {
            if x.iter().all(|&c| c == 0.0) {
                return Ok(v);
            }
        }
        Ok(self.expr.evaluate(&self.bindings(x))?)
    }

    fn support_radius(&self) -> Option<f64> {
        Some(self.radius)
    }
}

/// Expression over an explicit variable set, sampled as a field on R^d.
pub struct ExprField<'a> {
    pub expr: &'a Expr,
    pub vars: &'a VarSet,
}

impl ScalarField for ExprField<'_> {
    fn dim(&self) -> usize {
        self.vars.len()
    }

    fn eval(&self, x: &[f64]) -> Result<f64, FieldError> {
        let mut b = Bindings::new();
        for (name, v) in self.vars.names().iter().zip(x) {
            b.set(name, *v);
        }
        Ok(self.expr.evaluate(&b)?)
    }
}

/// Closure-backed field, mostly for tests and derived quantities.
pub struct FnField<F: Fn(&[f64]) -> Result<f64, FieldError>> {
    pub m: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> Result<f64, FieldError>> ScalarField for FnField<F> {
    fn dim(&self) -> usize {
        self.m
    }

    fn eval(&self, x: &[f64]) -> Result<f64, FieldError> {
        (self.f)(x)
    }
}

/// Multiindex of partial-derivative orders, one entry per axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn of(orders: &[u32]) -> Self {
        MultiIndex(orders.to_vec())
    }
}

/// Step size for central differences: larger for orders 3-4 where rounding
/// cancellation dominates, smaller for orders 1-2 where truncation does.
pub fn fd_step(order: u32, x: &[f64]) -> f64 {
    let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
    if order >= 3 {
        (1e-2 * r).max(2.5e-3)
    } else {
        (1e-3 * r).max(1e-4)
    }
}

// offsets (in units of h) and coefficients (in units of h^-order) of the
// second-order-accurate central stencils
fn stencil_1d(order: u32) -> Vec<(f64, f64)> {
    match order {
        0 => vec![(0.0, 1.0)],
        1 => vec![(-1.0, -0.5), (1.0, 0.5)],
        2 => vec![(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)],
        3 => vec![(-2.0, -0.5), (-1.0, 1.0), (1.0, -1.0), (2.0, 0.5)],
        4 => vec![(-2.0, 1.0), (-1.0, -4.0), (0.0, 6.0), (1.0, -4.0), (2.0, 1.0)],
        _ => panic!("finite differences implemented up to order 4"),
    }
}

/// Central-difference approximation of `D^mu f(x)`, stencil order 2.
pub fn fd_derivative(
    field: &dyn ScalarField,
    mu: &MultiIndex,
    x: &[f64],
) -> Result<f64, FieldError> {
    assert_eq!(mu.0.len(), x.len(), "multiindex/point dimension mismatch");
    assert!(mu.order() <= 4, "derivative order above 4 not supported");
    let h = fd_step(mu.order(), x);

    // tensor product of per-axis stencils
    let mut points: Vec<(Vec<f64>, f64)> = vec![(x.to_vec(), 1.0)];
    for (axis, &ord) in mu.0.iter().enumerate() {
        if ord == 0 {
            continue;
        }
        let st = stencil_1d(ord);
        let scale = h.powi(ord as i32);
        let mut next = Vec::with_capacity(points.len() * st.len());
        for (pt, coeff) in &points {
            for (off, c) in &st {
                let mut q = pt.clone();
                q[axis] += off * h;
                next.push((q, coeff * c / scale));
            }
        }
        points = next;
    }

    if let Some(radius) = field.support_radius() {
        for (pt, _) in &points {
            let reach = pt.iter().map(|c| c * c).sum::<f64>().sqrt();
            if reach > radius + 1e-12 {
                return Err(FieldError::StepTooLarge { radius, reach });
            }
        }
    }

    let mut acc = 0.0;
    for (pt, coeff) in &points {
        acc += coeff * field.eval(pt)?;
    }
    Ok(acc)
}

/// Estimator for the Hölder seminorm
/// `[f]_{alpha,delta}(x) = limsup_{y,z->x} |D^a f(y) - D^a f(z)| / |y-z|^delta`.
///
/// Pairs are sampled in windows `window * 2^-k`, k = 0..6, and the reported
/// value is the max over the two smallest windows. The estimate is a lower
/// bound of the true limsup; it detects violations, never proves bounds.
pub fn holder_seminorm(
    field: &dyn ScalarField,
    alpha: &MultiIndex,
    delta: f64,
    x: &[f64],
    window: f64,
) -> Result<f64, FieldError> {
    assert!(window > 0.0, "window must be positive");
    assert!(
        delta > 0.0 && delta <= 1.0,
        "Hölder exponent must lie in (0, 1]"
    );
    assert!(alpha.order() <= 4);
    let m = x.len();

    let deriv_at = |pt: &[f64]| -> Result<f64, FieldError> {
        if alpha.order() == 0 {
            field.eval(pt)
        } else {
            fd_derivative(field, alpha, pt)
        }
    };

    let mut best: f64 = 0.0;
    for k in 5..=6i32 {
        let w = window * 2f64.powi(-k);
        let offsets_1d: Vec<f64> = (-3..=3).map(|i| i as f64 / 3.0 * w).collect();
        let mut pts: Vec<Vec<f64>> = Vec::new();
        match m {
            1 => {
                for &o in &offsets_1d {
                    pts.push(vec![x[0] + o]);
                }
            }
            2 => {
                // coarser cross pattern to keep the pair count in check
                for &o in &offsets_1d {
                    pts.push(vec![x[0] + o, x[1]]);
                    pts.push(vec![x[0], x[1] + o]);
                    pts.push(vec![x[0] + o, x[1] + o]);
                }
            }
            _ => panic!("holder_seminorm supports m in {{1, 2}}"),
        }
        let vals: Vec<f64> = pts
            .iter()
            .map(|p| deriv_at(p))
            .collect::<Result<_, _>>()?;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let dist: f64 = pts[i]
                    .iter()
                    .zip(&pts[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if dist < 1e-14 {
                    continue;
                }
                let ratio = (vals[i] - vals[j]).abs() / dist.powf(delta);
                best = best.max(ratio);
            }
        }
    }
    Ok(best)
}

/// Radial min/max envelopes sampled at the distinct node radii of a grid.
#[derive(Debug, Clone, Serialize)]
pub struct RadialEnvelope {
    /// Increasing sample radii, strictly positive.
    pub radii: Vec<f64>,
    /// `f0(rho) = min of the profile over nodes with |x| >= rho`.
    pub lower: Vec<f64>,
    /// `g*(rho) = max of the profile over the shell |x| ~ rho`.
    pub upper: Vec<f64>,
}

impl RadialEnvelope {
    /// Envelope query `f0(s)` for arbitrary `s > 0`; `+inf` past the support.
    pub fn lower_at(&self, s: f64) -> f64 {
        // first radius >= s indexes the surviving node set
        match self
            .radii
            .binary_search_by(|r| r.partial_cmp(&s).unwrap())
        {
            Ok(i) => self.lower[i],
            Err(i) if i < self.radii.len() => self.lower[i],
            _ => f64::INFINITY,
        }
    }

    pub fn max_radius(&self) -> f64 {
        *self.radii.last().expect("envelope is never empty")
    }
}

/// Computes the radial envelopes of `p` over `grid`.
pub fn radial_envelopes(p: &dyn ScalarField, grid: &Grid) -> Result<RadialEnvelope, FieldError> {
    let nodes = grid.nodes();
    let delta = grid.spacing();
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(nodes.len());
    for x in &nodes {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        let v = p.eval(x)?;
        samples.push((r, v));
    }
    samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // distinct radii (grid radii repeat exactly in m = 1 and nearly in m = 2)
    let mut radii: Vec<f64> = Vec::new();
    for (r, _) in &samples {
        if *r > 0.0 && radii.last().is_none_or(|last| r - last > 1e-12) {
            radii.push(*r);
        }
    }
    if radii.is_empty() {
        return Err(FieldError::Invalid(
            "grid has no nodes away from the origin".into(),
        ));
    }

    // suffix minima give f0 at each radius in one pass
    let mut lower = vec![f64::INFINITY; radii.len()];
    {
        let mut si = samples.len();
        let mut running = f64::INFINITY;
        for (ri, rho) in radii.iter().enumerate().rev() {
            while si > 0 && samples[si - 1].0 >= rho - 1e-12 {
                running = running.min(samples[si - 1].1);
                si -= 1;
            }
            lower[ri] = running;
        }
    }

    let mut upper = Vec::with_capacity(radii.len());
    for &rho in &radii {
        let mut shell_max = f64::NEG_INFINITY;
        for width in [delta / 2.0, delta] {
            for (r, v) in &samples {
                if (r - rho).abs() <= width + 1e-12 {
                    shell_max = shell_max.max(*v);
                }
            }
            if shell_max > f64::NEG_INFINITY {
                break; // widened once at most
            }
        }
        if shell_max == f64::NEG_INFINITY {
            return Err(FieldError::EmptyShell(rho));
        }
        upper.push(shell_max);
    }

    // f0 is a min over shrinking sets, hence nondecreasing; guard anyway
    debug_assert!(lower.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    Ok(RadialEnvelope { radii, lower, upper })
}

/// Outcome of a structural profile check.
#[derive(Debug, Clone, Serialize)]
pub enum CheckOutcome {
    Holds,
    /// Witness pair (inner point, outer point, values) violating monotonicity.
    MonotoneCounterexample {
        inner: Vec<f64>,
        outer: Vec<f64>,
        inner_value: f64,
        outer_value: f64,
    },
    /// Point where positivity fails.
    Violation { at: Vec<f64>, value: f64 },
}

impl CheckOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, CheckOutcome::Holds)
    }
}

/// Checks `p(z) <= p(x)` whenever `|z| <= |x|`, over grid nodes, via the
/// shell reduction: the running max over inner shells must stay below the
/// min of each outer shell.
pub fn check_strong_monotone(p: &dyn ScalarField, grid: &Grid) -> Result<CheckOutcome, FieldError> {
    let nodes = grid.nodes();
    let mut samples: Vec<(f64, f64, Vec<f64>)> = Vec::with_capacity(nodes.len());
    let mut scale: f64 = 0.0;
    for x in nodes {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        let v = p.eval(&x)?;
        scale = scale.max(v.abs());
        samples.push((r, v, x));
    }
    samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let tol = 1e-12 * (1.0 + scale);

    let mut run_max = f64::NEG_INFINITY;
    let mut run_arg: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < samples.len() {
        // group one shell (equal radii up to grid noise)
        let rho = samples[i].0;
        let mut j = i;
        let mut shell_min = f64::INFINITY;
        let mut shell_min_arg = Vec::new();
        let mut shell_max = f64::NEG_INFINITY;
        let mut shell_max_arg = Vec::new();
        while j < samples.len() && samples[j].0 - rho <= 1e-12 {
            if samples[j].1 < shell_min {
                shell_min = samples[j].1;
                shell_min_arg = samples[j].2.clone();
            }
            if samples[j].1 > shell_max {
                shell_max = samples[j].1;
                shell_max_arg = samples[j].2.clone();
            }
            j += 1;
        }
        if run_max > shell_min + tol {
            return Ok(CheckOutcome::MonotoneCounterexample {
                inner: run_arg,
                outer: shell_min_arg,
                inner_value: run_max,
                outer_value: shell_min,
            });
        }
        // same-shell spread also violates the pairwise condition
        if shell_max > shell_min + tol {
            return Ok(CheckOutcome::MonotoneCounterexample {
                inner: shell_max_arg,
                outer: shell_min_arg,
                inner_value: shell_max,
                outer_value: shell_min,
            });
        }
        if shell_max > run_max {
            run_max = shell_max;
            run_arg = shell_max_arg;
        }
        i = j;
    }
    Ok(CheckOutcome::Holds)
}

/// Positivity away from the origin: `p > 0` at all nodes with `|x| >= Δ`.
///
/// Positivity is certified in log space: `exp(g)` profiles stay positive
/// even where the value underflows to `0.0` in double precision. A clamped
/// log (underflow without structural log) cannot be told apart from a true
/// zero and counts as a violation.
pub fn check_elliptical(p: &Profile, grid: &Grid) -> Result<CheckOutcome, FieldError> {
    let delta = grid.spacing();
    // scan outward so a violation is witnessed closest to the origin;
    // ties break to the lexicographically first node
    let mut nodes = grid.nodes();
    nodes.sort_by(|a, b| {
        let ra: f64 = a.iter().map(|c| c * c).sum();
        let rb: f64 = b.iter().map(|c| c * c).sum();
        ra.partial_cmp(&rb)
            .unwrap()
            .then_with(|| a.partial_cmp(b).unwrap())
    });
    for x in nodes {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        if r < delta - 1e-12 {
            continue;
        }
        match p.log_eval(&x) {
            Ok((_, false)) => {}
            Ok((_, true)) => {
                return Ok(CheckOutcome::Violation {
                    at: x.clone(),
                    value: p.eval(&x)?,
                })
            }
            Err(_) => {
                return Ok(CheckOutcome::Violation {
                    at: x.clone(),
                    value: p.eval(&x)?,
                })
            }
        }
    }
    Ok(CheckOutcome::Holds)
}
