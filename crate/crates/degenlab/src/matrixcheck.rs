//! Structural hypothesis checkers for matrix functions A(x): two-sided
//! quadratic-form comparability, subordinaticity, quasiconformality of the
//! trailing block, the diagonal/off-diagonal differential estimates, and
//! verification of candidate sum-of-squares decompositions.
//!
//! "≲" statements are operationalized as empirical constants over a sample
//! grid, reported and compared against a configurable cap; the checkers
//! report "consistent at this resolution" or a concrete witness, never a
//! proof.

use crate::expr::{Bindings, Expr, VarSet};
use crate::grid::Grid;
use crate::linalg::{asymmetry, max_abs, pencil_extremes, rank_one_dominance, PencilOutcome};
use crate::profiles::{holder_seminorm, FieldError, FnField, MultiIndex};
use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

/// Default cap for empirical "bounded by a constant" checks.
pub const DEFAULT_CAP: f64 = 1e3;

/// Bound below which both sides of a ratio count as underflowed.
const RATIO_FLOOR: f64 = 1e-280;

/// Symmetric matrix function with expression entries, stored upper
/// triangular (1-indexed slots `a[k][j]`, k <= j).
#[derive(Debug, Clone, Serialize)]
pub struct SymbolicMatrix {
    pub size: usize,
    pub vars: VarSet,
    entries: Vec<Option<Expr>>,
}

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("entry index ({0}, {1}) out of range for size {2}")]
    Index(usize, usize, usize),
    #[error("entry ({k}, {j}): {msg}")]
    Entry { k: usize, j: usize, msg: String },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("matrix asymmetric at {at:?}: defect {defect}")]
    Asymmetric { at: Vec<f64>, defect: f64 },
    #[error("matrix sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("{0}")]
    Shape(String),
}

impl SymbolicMatrix {
    pub fn zero(size: usize, nvars: usize) -> Self {
        SymbolicMatrix {
            size,
            vars: VarSet::spatial(nvars),
            entries: vec![None; size * (size + 1) / 2],
        }
    }

    fn slot(&self, k: usize, j: usize) -> Result<usize, MatrixError> {
        if k == 0 || j == 0 || k > self.size || j > self.size {
            return Err(MatrixError::Index(k, j, self.size));
        }
        let (a, b) = if k <= j { (k - 1, j - 1) } else { (j - 1, k - 1) };
        // row-major upper triangle
        Ok(a * self.size - a * (a + 1) / 2 + b)
    }

    pub fn set(&mut self, k: usize, j: usize, e: Expr) -> Result<(), MatrixError> {
        e.check_vars(&self.vars).map_err(|v| MatrixError::Entry {
            k,
            j,
            msg: format!("undeclared variable `{v}`"),
        })?;
        let s = self.slot(k, j)?;
        self.entries[s] = Some(e);
        Ok(())
    }

    pub fn set_parse(&mut self, k: usize, j: usize, text: &str) -> Result<(), MatrixError> {
        let e = crate::expr::parse(text, &self.vars).map_err(|err| MatrixError::Entry {
            k,
            j,
            msg: err.to_string(),
        })?;
        self.set(k, j, e)
    }

    pub fn entry(&self, k: usize, j: usize) -> Option<&Expr> {
        self.slot(k, j).ok().and_then(|s| self.entries[s].as_ref())
    }

    /// Variables that actually occur in some entry.
    pub fn active_vars(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in self.entries.iter().flatten() {
            for v in e.free_vars() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    fn bindings(&self, x: &[f64]) -> Bindings {
        let mut b = Bindings::new();
        for (i, name) in self.vars.names().iter().enumerate() {
            b.set(name, x.get(i).copied().unwrap_or(0.0));
        }
        b
    }

    /// Evaluates the full symmetric matrix at `x` (padded with zeros when
    /// `x` is shorter than the variable list).
    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<f64>, MatrixError> {
        let b = self.bindings(x);
        let mut m = DMatrix::zeros(self.size, self.size);
        for k in 1..=self.size {
            for j in k..=self.size {
                if let Some(e) = self.entry(k, j) {
                    let v = e.evaluate(&b).map_err(|err| MatrixError::Entry {
                        k,
                        j,
                        msg: err.to_string(),
                    })?;
                    m[(k - 1, j - 1)] = v;
                    m[(j - 1, k - 1)] = v;
                }
            }
        }
        Ok(m)
    }

    /// Entrywise partial derivative with respect to spatial axis `axis`
    /// (1-indexed).
    pub fn derivative(&self, axis: usize) -> SymbolicMatrix {
        let var = format!("x{axis}");
        let entries = self
            .entries
            .iter()
            .map(|e| e.as_ref().map(|e| e.differentiate(&var)))
            .collect();
        SymbolicMatrix {
            size: self.size,
            vars: self.vars.clone(),
            entries,
        }
    }
}

/// Matrix function with the Grushin block structure metadata (m, p, n).
#[derive(Debug, Clone, Serialize)]
pub struct GrushinMatrix {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub mat: SymbolicMatrix,
}

impl GrushinMatrix {
    pub fn new(n: usize, m: usize, p: usize) -> Result<Self, MatrixError> {
        if !(1 <= m && m < p && p <= n + 1) {
            return Err(MatrixError::Shape(format!(
                "need 1 <= m < p <= n+1, got m={m}, p={p}, n={n}"
            )));
        }
        Ok(GrushinMatrix {
            n,
            m,
            p,
            mat: SymbolicMatrix::zero(n, n),
        })
    }

    /// Checks evaluated symmetry on a subsample of grid nodes.
    pub fn check_symmetry(&self, grid: &Grid) -> Result<(), MatrixError> {
        for x in grid.nodes().iter().step_by(17) {
            let m = self.mat.eval(x)?;
            let defect = asymmetry(&m);
            if defect > 1e-12 {
                return Err(MatrixError::Asymmetric {
                    at: x.clone(),
                    defect,
                });
            }
        }
        Ok(())
    }
}

/// Parameter pack for the differential estimates; `delta_prime` is derived,
/// never user-set.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EstimateParams {
    pub epsilon: f64,
    pub delta: f64,
    pub delta2: f64,
}

impl EstimateParams {
    pub fn new(epsilon: f64, delta: f64, delta2: f64) -> Result<Self, MatrixError> {
        if !(0.25..1.0).contains(&epsilon) {
            return Err(MatrixError::Shape(format!(
                "epsilon must lie in [1/4, 1), got {epsilon}"
            )));
        }
        if !(delta > 0.0 && delta < delta2 && delta2 < 0.5) {
            return Err(MatrixError::Shape(format!(
                "need 0 < delta < delta2 < 1/2, got delta={delta}, delta2={delta2}"
            )));
        }
        Ok(EstimateParams {
            epsilon,
            delta,
            delta2,
        })
    }

    pub fn delta_prime(&self) -> f64 {
        2.0 * self.delta * (1.0 + self.delta) / (2.0 + self.delta)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparabilityWitness {
    pub at: Vec<f64>,
    pub direction: Vec<f64>,
    pub a_form: f64,
}

#[derive(Debug, Error)]
pub enum ComparabilityError {
    #[error("B is not positive semidefinite at {at:?} (min eigenvalue {min_eig})")]
    NotPsd { at: Vec<f64>, min_eig: f64 },
    #[error("A does not vanish on a null direction of B at {}", .0.at.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "))]
    Counterexample(Box<ComparabilityWitness>),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Two-sided comparability constants: the best `(beta, alpha)` with
/// `beta ξᵀBξ <= ξᵀAξ <= alpha ξᵀBξ` over all sample nodes.
pub fn comparability(
    a: &SymbolicMatrix,
    b: &SymbolicMatrix,
    sample: &Grid,
) -> Result<(f64, f64), ComparabilityError> {
    if a.size != b.size {
        return Err(MatrixError::SizeMismatch(a.size, b.size).into());
    }
    let mut beta = f64::INFINITY;
    let mut alpha = f64::NEG_INFINITY;
    for x in sample.nodes() {
        let am = a.eval(&x)?;
        let bm = b.eval(&x)?;
        match pencil_extremes(&am, &bm) {
            PencilOutcome::Eigs { min, max } => {
                beta = beta.min(min);
                alpha = alpha.max(max);
            }
            PencilOutcome::NullMismatch { direction, a_form } => {
                return Err(ComparabilityError::Counterexample(Box::new(
                    ComparabilityWitness {
                        at: x,
                        direction,
                        a_form,
                    },
                )));
            }
            PencilOutcome::NotPsd { min_eig } => {
                return Err(ComparabilityError::NotPsd { at: x, min_eig });
            }
            PencilOutcome::ZeroRange => continue,
        }
    }
    Ok((beta, alpha))
}

/// Optional check of A against its own diagonal frozen at the degenerate
/// slice (trailing variables zeroed): comparability constants when they
/// exist. This is an extra diagnostic, not an assumption any other check
/// relies on.
pub fn check_diagonal_comparability(
    a: &GrushinMatrix,
    sample: &Grid,
) -> Result<(f64, f64), ComparabilityError> {
    let mut diag = SymbolicMatrix::zero(a.n, a.mat.vars.len());
    for k in 1..=a.n {
        if let Some(e) = a.mat.entry(k, k) {
            // freeze the variables beyond the degeneracy block at zero
            let mut frozen = e.clone();
            for axis in (a.m + 1)..=a.mat.vars.len() {
                frozen = substitute_zero(&frozen, &format!("x{axis}"));
            }
            diag.set(k, k, frozen.fold_constants())?;
        }
    }
    comparability(&a.mat, &diag, sample)
}

fn substitute_zero(e: &Expr, var: &str) -> Expr {
    use crate::expr::{BinaryOp as B, NaryOp as N, UnaryOp as U};
    match e {
        Expr::Const(_) => e.clone(),
        Expr::Var(name) => {
            if name == var {
                Expr::Const(0.0)
            } else {
                e.clone()
            }
        }
        Expr::Unary(op, inner) => {
            let op: U = *op;
            Expr::Unary(op, Box::new(substitute_zero(inner, var)))
        }
        Expr::Binary(op, x, y) => {
            let op: B = *op;
            Expr::Binary(
                op,
                Box::new(substitute_zero(x, var)),
                Box::new(substitute_zero(y, var)),
            )
        }
        Expr::Nary(op, args) => {
            let op: N = *op;
            Expr::Nary(op, args.iter().map(|x| substitute_zero(x, var)).collect())
        }
        Expr::Norm(vars) => {
            // a zeroed variable drops out of the norm block
            let kept: Vec<String> = vars.iter().filter(|v| *v != var).cloned().collect();
            if kept.is_empty() {
                Expr::Const(0.0)
            } else {
                Expr::Norm(kept)
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum SubordinateError {
    #[error(
        "range mismatch at {at:?}: dA/dx{axis} moves a null direction of A \
         (quadratic form {form})"
    )]
    RangeMismatch {
        at: Vec<f64>,
        axis: usize,
        form: f64,
    },
    #[error("A is not positive semidefinite at {at:?} (min eigenvalue {min_eig})")]
    NotPsd { at: Vec<f64>, min_eig: f64 },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Smallest C with `(∂A/∂x_k)ᵀ(∂A/∂x_k) ≼ C A(x)` over all samples and
/// axes; the matrix analogue of the Malgrange constant.
pub fn check_subordinate(a: &SymbolicMatrix, sample: &Grid) -> Result<f64, SubordinateError> {
    let axes = a.vars.len();
    let derivs: Vec<SymbolicMatrix> = (1..=axes).map(|k| a.derivative(k)).collect();
    let mut best = 0.0f64;
    for x in sample.nodes() {
        let am = a.eval(&x)?;
        for (axis, d) in derivs.iter().enumerate() {
            let dm = d.eval(&x)?;
            let gram = dm.transpose() * &dm;
            match pencil_extremes(&gram, &am) {
                PencilOutcome::Eigs { max, .. } => best = best.max(max),
                PencilOutcome::NullMismatch { a_form, .. } => {
                    return Err(SubordinateError::RangeMismatch {
                        at: x,
                        axis: axis + 1,
                        form: a_form,
                    });
                }
                PencilOutcome::NotPsd { min_eig } => {
                    return Err(SubordinateError::NotPsd { at: x, min_eig });
                }
                PencilOutcome::ZeroRange => continue,
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasiconformalReport {
    /// Max over samples of (largest eigenvalue / smallest eigenvalue),
    /// taken where the largest eigenvalue exceeds the floor.
    pub max_ratio: f64,
    pub violation: Option<QuasiViolation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasiViolation {
    pub at: Vec<f64>,
    pub reason: String,
}

/// Eigenvalue comparability of a symmetric block: nonnegative eigenvalues
/// with bounded mutual ratio.
pub fn check_quasiconformal(
    q: &SymbolicMatrix,
    sample: &Grid,
    ratio_cap: f64,
    floor: f64,
) -> Result<QuasiconformalReport, MatrixError> {
    let mut max_ratio = 1.0f64;
    for x in sample.nodes() {
        let qm = q.eval(&x)?;
        let se = qm.symmetric_eigen();
        let min = se.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = se
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if min < -1e-10 {
            return Ok(QuasiconformalReport {
                max_ratio,
                violation: Some(QuasiViolation {
                    at: x,
                    reason: format!("negative eigenvalue {min}"),
                }),
            });
        }
        if max > floor {
            let ratio = if min > 0.0 { max / min } else { f64::INFINITY };
            if ratio > ratio_cap {
                return Ok(QuasiconformalReport {
                    max_ratio: max_ratio.max(ratio),
                    violation: Some(QuasiViolation {
                        at: x,
                        reason: format!("eigenvalue ratio {ratio} exceeds cap {ratio_cap}"),
                    }),
                });
            }
            max_ratio = max_ratio.max(ratio);
        }
    }
    Ok(QuasiconformalReport {
        max_ratio,
        violation: None,
    })
}

/// Which exponent regime an entry was checked against. The two
/// off-diagonal index ranges use different diagonal minima; both are
/// implemented literally and reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EntryRegime {
    Diagonal,
    /// k < j <= p-1: min over s <= j.
    OffDiagUpTo,
    /// k <= p-1 < j: min over s <= k.
    OffDiagTail,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRow {
    pub k: usize,
    pub j: usize,
    pub mu: Vec<u32>,
    pub regime: EntryRegime,
    pub exponent: f64,
    /// sup over samples of |D^mu a| / rhs.
    pub empirical_constant: f64,
    pub argmax: Vec<f64>,
    pub flagged: bool,
    /// Samples skipped because both sides underflowed.
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeminormRow {
    pub k: usize,
    pub j: usize,
    pub mu: Vec<u32>,
    /// Hölder seminorm estimate [a]_{mu, 2 delta}, max over probe points.
    pub estimate: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffEstimateReport {
    pub params: EstimateParams,
    pub cap: f64,
    pub rows: Vec<EstimateRow>,
    pub seminorm_rows: Vec<SeminormRow>,
}

impl DiffEstimateReport {
    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged) || self.seminorm_rows.iter().any(|r| r.flagged)
    }
}

fn positive_part(t: f64) -> f64 {
    if t > 0.0 {
        t
    } else {
        0.0
    }
}

/// Multiindices over `nvars` axes with `lo <= |mu| <= hi`.
pub fn multiindices(nvars: usize, lo: u32, hi: u32) -> Vec<Vec<u32>> {
    fn rec(cur: &mut Vec<u32>, axis: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
        if axis == cur.len() {
            if remaining == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for v in 0..=remaining {
            cur[axis] = v;
            rec(cur, axis + 1, remaining - v, out);
        }
        cur[axis] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0u32; nvars];
    for total in lo..=hi {
        rec(&mut cur, 0, total, &mut out);
    }
    out
}

fn diag_min(m: &SymbolicMatrix, from: usize, to: usize, b: &Bindings) -> Result<f64, MatrixError> {
    let mut best = f64::INFINITY;
    for s in from..=to {
        let v = match m.entry(s, s) {
            Some(e) => e.evaluate(b).map_err(|e| MatrixError::Entry {
                k: s,
                j: s,
                msg: e.to_string(),
            })?,
            None => 0.0,
        };
        best = best.min(v);
    }
    Ok(best)
}

fn full_multiindex(mu_axes: &[u32], axes: &[usize], nvars: usize) -> Vec<u32> {
    let mut full = vec![0u32; nvars];
    for (ai, &count) in mu_axes.iter().enumerate() {
        full[axes[ai] - 1] = count;
    }
    full
}

/// Empirical constants for the diagonal and off-diagonal differential
/// estimates. Derivatives are exact (symbolic); samples exclude a ball of
/// radius Δ around the origin where the profiles are not smooth.
pub fn check_differential_estimates(
    a: &GrushinMatrix,
    params: &EstimateParams,
    sample: &Grid,
    cap: f64,
) -> Result<DiffEstimateReport, MatrixError> {
    let n = a.n;
    let p = a.p;
    let eps = params.epsilon;
    let dprime = params.delta_prime();
    let d2 = params.delta2;

    // derivatives taken along the variables the entries actually use
    let active = a.mat.active_vars();
    let axes: Vec<usize> = active
        .iter()
        .filter_map(|v| v.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()))
        .collect();
    let nodes: Vec<Vec<f64>> = sample
        .nodes()
        .into_iter()
        .filter(|x| {
            let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            r >= sample.spacing() - 1e-12
        })
        .collect();

    let mut rows = Vec::new();
    let mut seminorm_rows = Vec::new();

    let mut jobs: Vec<(usize, usize, EntryRegime)> = Vec::new();
    for k in 1..p {
        jobs.push((k, k, EntryRegime::Diagonal));
    }
    for k in 1..p {
        for j in (k + 1)..=n {
            if j < p {
                jobs.push((k, j, EntryRegime::OffDiagUpTo));
            } else {
                jobs.push((k, j, EntryRegime::OffDiagTail));
            }
        }
    }

    for (k, j, regime) in jobs {
        let entry = match a.mat.entry(k, j) {
            Some(e) => e.clone(),
            None => continue, // identically zero entries pass trivially
        };
        if axes.is_empty() {
            continue;
        }
        let lo = if matches!(regime, EntryRegime::Diagonal) {
            1
        } else {
            0
        };
        for mu_axes in multiindices(axes.len(), lo, 4) {
            let order: u32 = mu_axes.iter().sum();
            let exponent = match regime {
                EntryRegime::Diagonal => positive_part(1.0 - order as f64 * eps) + dprime,
                _ => positive_part(0.5 + (2.0 - order as f64) * eps) + d2,
            };
            let mut deriv = entry.clone();
            for (ai, &count) in mu_axes.iter().enumerate() {
                let var = format!("x{}", axes[ai]);
                for _ in 0..count {
                    deriv = deriv.differentiate(&var);
                }
            }
            let mut emp = 0.0f64;
            let mut argmax = Vec::new();
            let mut skipped = 0usize;
            for x in &nodes {
                let b = a.mat.bindings(x);
                let dv = match deriv.evaluate(&b) {
                    Ok(v) => v.abs(),
                    Err(_) => {
                        skipped += 1;
                        continue;
                    }
                };
                let base = match regime {
                    EntryRegime::Diagonal => match a.mat.entry(k, k) {
                        Some(e) => e.evaluate(&b).map_err(|e| MatrixError::Entry {
                            k,
                            j: k,
                            msg: e.to_string(),
                        })?,
                        None => 0.0,
                    },
                    EntryRegime::OffDiagUpTo => diag_min(&a.mat, 1, j, &b)?,
                    EntryRegime::OffDiagTail => diag_min(&a.mat, 1, k, &b)?,
                };
                if base < 0.0 {
                    return Err(MatrixError::Entry {
                        k,
                        j,
                        msg: format!("negative diagonal base {base} at {x:?}"),
                    });
                }
                let rhs = base.powf(exponent);
                if rhs < RATIO_FLOOR {
                    if dv < RATIO_FLOOR {
                        skipped += 1;
                    } else {
                        emp = f64::INFINITY;
                        argmax = x.clone();
                    }
                    continue;
                }
                let ratio = dv / rhs;
                if ratio > emp {
                    emp = ratio;
                    argmax = x.clone();
                }
            }
            rows.push(EstimateRow {
                k,
                j,
                mu: full_multiindex(&mu_axes, &axes, a.mat.vars.len()),
                regime,
                exponent,
                empirical_constant: emp,
                argmax,
                flagged: !(emp <= cap),
                skipped,
            });
        }

        // fourth-order Hölder rows [a]_{mu, 2 delta} <~ 1
        let holder_delta = (2.0 * params.delta).min(1.0);
        for mu_axes in multiindices(axes.len(), 4, 4) {
            let mut worst = 0.0f64;
            let entry_for_field = entry.clone();
            let vars = a.mat.vars.clone();
            let axes_c = axes.clone();
            let field = FnField {
                m: axes.len(),
                f: move |reduced: &[f64]| {
                    let mut b = Bindings::new();
                    for name in vars.names() {
                        b.set(name, 0.0);
                    }
                    for (idx, &ax) in axes_c.iter().enumerate() {
                        b.set(&format!("x{ax}"), reduced[idx]);
                    }
                    Ok(entry_for_field.evaluate(&b)?)
                },
            };
            for &r in &[0.1, 0.3, 0.6] {
                let mut pt = vec![0.0; axes.len()];
                pt[0] = r;
                if let Ok(est) =
                    holder_seminorm(&field, &MultiIndex(mu_axes.clone()), holder_delta, &pt, 0.05)
                {
                    worst = worst.max(est);
                }
            }
            seminorm_rows.push(SeminormRow {
                k,
                j,
                mu: full_multiindex(&mu_axes, &axes, a.mat.vars.len()),
                estimate: worst,
                flagged: !(worst <= cap),
            });
        }
    }

    Ok(DiffEstimateReport {
        params: *params,
        cap,
        rows,
        seminorm_rows,
    })
}

/// Candidate sum-of-squares decomposition
/// `A = Σ_k Σ_i X_{k,i} X_{k,i}ᵀ + blockdiag(0, Q_p)`.
#[derive(Debug, Clone, Serialize)]
pub struct SosDecomposition {
    /// Vectors grouped by diagonal slot k (1 <= k <= p-1); each is an
    /// n-vector of expressions.
    pub vectors: Vec<(usize, Vec<Expr>)>,
    /// Trailing quasiconformal block of size (n-p+1), absent when p = n+1.
    pub qp: Option<SymbolicMatrix>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichRow {
    pub k: usize,
    /// Best empirical c with c·a_kk e_k⊗e_k below the middle form.
    pub lower_c: f64,
    /// Best empirical C with the middle form below C times the trailing
    /// diagonal form.
    pub upper_c: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothnessRow {
    pub k: usize,
    pub i: usize,
    pub component: usize,
    pub estimate: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SosReport {
    /// Max-norm of A - Σ XXᵀ - blockdiag(0, Q_p) over samples.
    pub residual: f64,
    pub residual_argmax: Vec<f64>,
    pub sandwich: Vec<SandwichRow>,
    /// Comparability constants of Q_p against a_pp I, when Q_p is present.
    pub qp_comparability: Option<(f64, f64)>,
    /// Second-order Hölder consistency of each vector component.
    pub smoothness: Vec<SmoothnessRow>,
    pub cap: f64,
}

/// Verifies a candidate decomposition: exact residual, the two-sided
/// quadratic-form sandwich per slot, comparability of the trailing block
/// against a_pp I, and C^{2,delta} consistency of the vectors.
pub fn verify_sos(
    a: &GrushinMatrix,
    cand: &SosDecomposition,
    sample: &Grid,
    params: &EstimateParams,
    cap: f64,
) -> Result<SosReport, MatrixError> {
    let n = a.n;
    let p = a.p;
    for (k, comps) in &cand.vectors {
        if *k == 0 || *k >= p {
            return Err(MatrixError::Shape(format!(
                "vector slot k={k} outside 1..={}",
                p - 1
            )));
        }
        if comps.len() != n {
            return Err(MatrixError::Shape(format!(
                "vector in slot {k} has {} components, matrix has n={n}",
                comps.len()
            )));
        }
    }
    if let Some(q) = &cand.qp {
        let want = n + 1 - p;
        if q.size != want {
            return Err(MatrixError::Shape(format!(
                "Q_p block is {}x{}, expected {want}x{want}",
                q.size, q.size
            )));
        }
    } else if p <= n {
        return Err(MatrixError::Shape(
            "matrix has a trailing block (p <= n) but no Q_p was supplied".into(),
        ));
    }

    let vars = &a.mat.vars;
    let eval_vec = |comps: &[Expr], x: &[f64]| -> Result<nalgebra::DVector<f64>, MatrixError> {
        let mut b = Bindings::new();
        for (i, name) in vars.names().iter().enumerate() {
            b.set(name, x.get(i).copied().unwrap_or(0.0));
        }
        let mut v = nalgebra::DVector::zeros(comps.len());
        for (i, e) in comps.iter().enumerate() {
            v[i] = e.evaluate(&b).map_err(|err| MatrixError::Entry {
                k: 0,
                j: i + 1,
                msg: err.to_string(),
            })?;
        }
        Ok(v)
    };

    let nodes = sample.nodes();
    let mut residual = 0.0f64;
    let mut residual_argmax = Vec::new();

    let ks: Vec<usize> = (1..p).collect();
    let mut lower: Vec<f64> = vec![f64::INFINITY; ks.len()];
    let mut upper: Vec<f64> = vec![0.0; ks.len()];
    let mut skipped: Vec<usize> = vec![0; ks.len()];

    for x in &nodes {
        let am = a.mat.eval(x)?;
        let mut sum = DMatrix::zeros(n, n);
        let mut z: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n, n); ks.len()];
        for (k, comps) in &cand.vectors {
            let v = eval_vec(comps, x)?;
            let outer = &v * v.transpose();
            sum += &outer;
            z[*k - 1] += &outer;
        }
        if let Some(q) = &cand.qp {
            let qm = q.eval(x)?;
            for i in 0..q.size {
                for j in 0..q.size {
                    sum[(p - 1 + i, p - 1 + j)] += qm[(i, j)];
                }
            }
        }
        let diff = &am - &sum;
        let r = max_abs(&diff);
        if r > residual {
            residual = r;
            residual_argmax = x.clone();
        }

        // sandwich: c a_kk e_k⊗e_k ≼ Z_k Z_kᵀ + Σ_{m>k} a_mm e_m⊗e_m
        //                          ≼ C Σ_{m>=k} a_mm e_m⊗e_m
        for (ki, &k) in ks.iter().enumerate() {
            let akk = am[(k - 1, k - 1)];
            let mut mid = &z[ki] * z[ki].transpose();
            let mut right = DMatrix::zeros(n, n);
            for mm in k..=n {
                let d = am[(mm - 1, mm - 1)];
                if mm > k {
                    mid[(mm - 1, mm - 1)] += d;
                }
                right[(mm - 1, mm - 1)] = d;
            }
            if akk <= RATIO_FLOOR {
                skipped[ki] += 1;
                continue;
            }
            let c = rank_one_dominance(&mid, k - 1, akk);
            lower[ki] = lower[ki].min(c);
            match pencil_extremes(&mid, &right) {
                PencilOutcome::Eigs { max, .. } => upper[ki] = upper[ki].max(max),
                _ => skipped[ki] += 1,
            }
        }
    }

    let qp_comparability = match &cand.qp {
        Some(q) => {
            let mut app_block = SymbolicMatrix::zero(q.size, a.mat.vars.len());
            let app = a.mat.entry(p, p).cloned().unwrap_or(Expr::Const(0.0));
            for i in 1..=q.size {
                app_block.set(i, i, app.clone())?;
            }
            match comparability(q, &app_block, sample) {
                Ok(pair) => Some(pair),
                Err(ComparabilityError::Matrix(e)) => return Err(e),
                Err(_) => None,
            }
        }
        None => None,
    };

    // C^{2,delta} consistency: second-derivative Hölder estimate per
    // component; the origin probe is the one that catches kinks
    let active = a.mat.active_vars();
    let axes: Vec<usize> = active
        .iter()
        .filter_map(|v| v.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()))
        .collect();
    let mut smoothness = Vec::new();
    if !axes.is_empty() {
        let mus = multiindices(axes.len(), 2, 2);
        let mut slot_counter: std::collections::BTreeMap<usize, usize> = Default::default();
        for (k, comps) in &cand.vectors {
            let count = slot_counter.entry(*k).or_insert(0);
            *count += 1;
            let index_i = *count;
            for (ci, comp) in comps.iter().enumerate() {
                if comp.free_vars().is_empty() {
                    continue;
                }
                let comp_c = comp.clone();
                let vars_c = a.mat.vars.clone();
                let axes_c = axes.clone();
                let field = FnField {
                    m: axes.len(),
                    f: move |reduced: &[f64]| {
                        let mut b = Bindings::new();
                        for name in vars_c.names() {
                            b.set(name, 0.0);
                        }
                        for (idx, &ax) in axes_c.iter().enumerate() {
                            b.set(&format!("x{ax}"), reduced[idx]);
                        }
                        Ok(comp_c.evaluate(&b)?)
                    },
                };
                let mut worst = 0.0f64;
                for &r in &[0.0, 0.1, 0.4] {
                    let mut pt = vec![0.0; axes.len()];
                    pt[0] = r;
                    for mu in &mus {
                        if let Ok(est) =
                            holder_seminorm(&field, &MultiIndex(mu.clone()), params.delta, &pt, 0.05)
                        {
                            worst = worst.max(est);
                        }
                    }
                }
                smoothness.push(SmoothnessRow {
                    k: *k,
                    i: index_i,
                    component: ci + 1,
                    estimate: worst,
                    flagged: !(worst <= cap),
                });
            }
        }
    }

    Ok(SosReport {
        residual,
        residual_argmax,
        sandwich: ks
            .iter()
            .enumerate()
            .map(|(ki, &k)| SandwichRow {
                k,
                lower_c: lower[ki],
                upper_c: upper[ki],
                skipped: skipped[ki],
            })
            .collect(),
        qp_comparability,
        smoothness,
        cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::line(1.0, 201).unwrap()
    }

    fn diag_matrix(n: usize, texts: &[&str]) -> SymbolicMatrix {
        let mut m = SymbolicMatrix::zero(n, 1);
        for (i, t) in texts.iter().enumerate() {
            m.set_parse(i + 1, i + 1, t).unwrap();
        }
        m
    }

    #[test]
    fn comparability_identical_matrices() {
        let a = diag_matrix(2, &["1", "x1^2"]);
        let (beta, alpha) = comparability(&a, &a, &grid()).unwrap();
        assert!((beta - 1.0).abs() < 1e-10 && (alpha - 1.0).abs() < 1e-10);
    }

    #[test]
    fn comparability_scaled_identity() {
        let a = diag_matrix(2, &["2", "2"]);
        let b = diag_matrix(2, &["1", "1"]);
        let (beta, alpha) = comparability(&a, &b, &grid()).unwrap();
        assert!((beta - 2.0).abs() < 1e-10 && (alpha - 2.0).abs() < 1e-10);
    }

    #[test]
    fn comparability_rank_one_vs_diag() {
        // A = [[1, x], [x, x^2]] vs B = diag(1, x^2): pencil eigenvalues
        // are {0, 2} at every x != 0 (closed form)
        let mut a = SymbolicMatrix::zero(2, 1);
        a.set_parse(1, 1, "1").unwrap();
        a.set_parse(1, 2, "x1").unwrap();
        a.set_parse(2, 2, "x1^2").unwrap();
        let b = diag_matrix(2, &["1", "x1^2"]);
        let (beta, alpha) = comparability(&a, &b, &grid()).unwrap();
        assert!(beta.abs() < 1e-10, "beta={beta}");
        assert!((alpha - 2.0).abs() < 1e-10, "alpha={alpha}");
    }

    #[test]
    fn comparability_rejects_indefinite_reference() {
        let a = diag_matrix(2, &["1", "1"]);
        let mut b = SymbolicMatrix::zero(2, 1);
        b.set_parse(1, 1, "1").unwrap();
        b.set_parse(2, 2, "-1").unwrap();
        assert!(matches!(
            comparability(&a, &b, &grid()),
            Err(ComparabilityError::NotPsd { .. })
        ));
    }

    #[test]
    fn comparability_null_direction_witness() {
        // B kills e2 everywhere, A does not: a counterexample direction
        let a = diag_matrix(2, &["1", "1"]);
        let b = diag_matrix(2, &["1", "0"]);
        match comparability(&a, &b, &grid()) {
            Err(ComparabilityError::Counterexample(w)) => {
                assert!(w.direction[1].abs() > 0.9);
            }
            other => panic!("expected counterexample, got {other:?}"),
        }
    }

    #[test]
    fn subordinate_range_mismatch_witness() {
        // A = (x, 1)(x, 1)^T is rank one with a null direction that the
        // derivative moves at every x: a witness must be reported
        let mut a = SymbolicMatrix::zero(2, 1);
        a.set_parse(1, 1, "x1^2").unwrap();
        a.set_parse(1, 2, "x1").unwrap();
        a.set_parse(2, 2, "1").unwrap();
        match check_subordinate(&a, &grid()) {
            Err(SubordinateError::RangeMismatch { form, .. }) => {
                assert!(form.abs() > 1e-6, "the moved form should be sizable, got {form}");
            }
            other => panic!("expected range mismatch, got {other:?}"),
        }
    }

    #[test]
    fn subordinate_malgrange_case() {
        // A = diag(1, x^2): C = sup (2x)^2/x^2 = 4
        let a = diag_matrix(2, &["1", "x1^2"]);
        let c = check_subordinate(&a, &grid()).unwrap();
        assert!((c - 4.0).abs() <= 1e-8, "c={c}");
    }

    #[test]
    fn subordinate_constant_matrix() {
        let a = diag_matrix(2, &["3", "5"]);
        let c = check_subordinate(&a, &grid()).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn subordinate_quartic() {
        // A = diag(1, x^4): (4x^3)^2 = 16 x^2 * x^4 -> C = 16 on [-1, 1]
        let a = diag_matrix(2, &["1", "x1^4"]);
        let c = check_subordinate(&a, &grid()).unwrap();
        assert!((c - 16.0).abs() <= 1e-8, "c={c}");
    }

    #[test]
    fn quasiconformal_scalar_multiple() {
        let q = diag_matrix(2, &["x1^2", "x1^2"]);
        let r = check_quasiconformal(&q, &grid(), 100.0, 1e-12).unwrap();
        assert!(r.violation.is_none());
        assert!((r.max_ratio - 1.0).abs() < 1e-9);

        let q2 = diag_matrix(2, &["x1^2", "2*x1^2"]);
        let r2 = check_quasiconformal(&q2, &grid(), 100.0, 1e-12).unwrap();
        assert!(r2.violation.is_none());
        assert!((r2.max_ratio - 2.0).abs() < 1e-9);
    }

    #[test]
    fn quasiconformal_unbounded_ratio_flagged() {
        let q = diag_matrix(2, &["x1^2", "x1^4"]);
        let r = check_quasiconformal(&q, &grid(), 100.0, 1e-12).unwrap();
        assert!(r.violation.is_some());
    }

    #[test]
    fn differential_estimates_constant_diag_passes() {
        let mut a = GrushinMatrix::new(2, 1, 2).unwrap();
        a.mat.set_parse(1, 1, "1").unwrap();
        a.mat.set_parse(2, 2, "1").unwrap();
        let params = EstimateParams::new(0.25, 0.05, 0.1).unwrap();
        let report = check_differential_estimates(&a, &params, &grid(), DEFAULT_CAP).unwrap();
        for row in &report.rows {
            assert!(!row.flagged, "row {row:?}");
            assert!(row.empirical_constant <= 1e-12);
        }
    }

    #[test]
    fn differential_estimates_flag_bad_offdiagonal() {
        // a_12 = x^2 with a_11 = a_22 = x^2: at |mu| = 0 the bound needs
        // (x^2)^(1+delta2) >= x^2, which fails near 0 like x^(-0.2)
        let mut a = GrushinMatrix::new(3, 1, 4).unwrap();
        a.mat.set_parse(1, 1, "x1^2").unwrap();
        a.mat.set_parse(2, 2, "x1^2").unwrap();
        a.mat.set_parse(3, 3, "x1^2").unwrap();
        a.mat.set_parse(1, 2, "x1^2").unwrap();
        let params = EstimateParams::new(0.25, 0.05, 0.1).unwrap();
        let report =
            check_differential_estimates(&a, &params, &Grid::line(1.0, 2001).unwrap(), 2.0)
                .unwrap();
        let bad = report
            .rows
            .iter()
            .find(|r| r.k == 1 && r.j == 2 && r.mu.iter().sum::<u32>() == 0)
            .unwrap();
        assert!(
            bad.empirical_constant > 2.0,
            "expected unbounded ratio, got {}",
            bad.empirical_constant
        );
        assert!(bad.flagged);
    }

    #[test]
    fn differential_estimates_flat_exponential_bounded() {
        // diagonal exp(-2/|x|): |a'| = a * 2/x^2 vs a^(3/4 + delta'):
        // ratio = 2 a^(1/4 - delta') / x^2, bounded away from 0
        let mut a = GrushinMatrix::new(2, 1, 3).unwrap();
        a.mat.set_parse(1, 1, "1").unwrap();
        a.mat.set_parse(2, 2, "exp(-2/abs(x1))").unwrap();
        let params = EstimateParams::new(0.25, 0.01, 0.1).unwrap();
        let g = Grid::line(1.0, 201).unwrap();
        let report = check_differential_estimates(&a, &params, &g, DEFAULT_CAP).unwrap();
        let first = report
            .rows
            .iter()
            .find(|r| r.k == 2 && r.j == 2 && r.mu.iter().sum::<u32>() == 1)
            .unwrap();
        // dense-scan oracle over the node range [Delta, 1]
        let e = 0.75 + params.delta_prime();
        let mut oracle = 0.0f64;
        for i in 0..=100_000 {
            let x = g.spacing() + (1.0 - g.spacing()) * i as f64 / 100_000.0;
            let aval = (-2.0 / x).exp();
            if aval == 0.0 {
                continue;
            }
            let ratio = (aval * 2.0 / (x * x)) / aval.powf(e);
            oracle = oracle.max(ratio);
        }
        assert!(
            (first.empirical_constant - oracle).abs() <= 0.05 * oracle,
            "emp={} oracle={oracle}",
            first.empirical_constant
        );
        assert!(!first.flagged);
    }

    #[test]
    fn sos_exact_diagonal_decomposition() {
        // A = diag(1, x^4) = e1 e1^T + (x^2 e2)(x^2 e2)^T
        let mut a = GrushinMatrix::new(2, 1, 3).unwrap();
        a.mat.set_parse(1, 1, "1").unwrap();
        a.mat.set_parse(2, 2, "x1^4").unwrap();
        let vars = VarSet::spatial(1);
        let one = crate::expr::parse("1", &vars).unwrap();
        let zero = Expr::Const(0.0);
        let xsq = crate::expr::parse("x1^2", &vars).unwrap();
        let cand = SosDecomposition {
            vectors: vec![(1, vec![one, zero.clone()]), (2, vec![zero, xsq])],
            qp: None,
        };
        let params = EstimateParams::new(0.25, 0.05, 0.1).unwrap();
        let report = verify_sos(&a, &cand, &grid(), &params, DEFAULT_CAP).unwrap();
        assert!(report.residual <= 1e-12, "residual={}", report.residual);
        assert!(report.smoothness.iter().all(|s| !s.flagged));
    }

    #[test]
    fn sos_rank_one_cross_term() {
        // A = [[1, x], [x, x^2]] = (e1 + x e2)(e1 + x e2)^T
        let mut a = GrushinMatrix::new(2, 1, 3).unwrap();
        a.mat.set_parse(1, 1, "1").unwrap();
        a.mat.set_parse(1, 2, "x1").unwrap();
        a.mat.set_parse(2, 2, "x1^2").unwrap();
        let vars = VarSet::spatial(1);
        let cand = SosDecomposition {
            vectors: vec![(
                1,
                vec![
                    crate::expr::parse("1", &vars).unwrap(),
                    crate::expr::parse("x1", &vars).unwrap(),
                ],
            )],
            qp: None,
        };
        let params = EstimateParams::new(0.25, 0.05, 0.1).unwrap();
        let report = verify_sos(&a, &cand, &grid(), &params, DEFAULT_CAP).unwrap();
        assert!(report.residual <= 1e-12, "residual={}", report.residual);
    }

    #[test]
    fn sos_flags_kinked_vector() {
        // A = diag(1, x^2) with X2 = |x| e2: residual 0 but |x| is not C^2
        let mut a = GrushinMatrix::new(2, 1, 3).unwrap();
        a.mat.set_parse(1, 1, "1").unwrap();
        a.mat.set_parse(2, 2, "x1^2").unwrap();
        let vars = VarSet::spatial(1);
        let cand = SosDecomposition {
            vectors: vec![
                (1, vec![crate::expr::parse("1", &vars).unwrap(), Expr::Const(0.0)]),
                (
                    2,
                    vec![
                        Expr::Const(0.0),
                        crate::expr::parse("abs(x1)", &vars).unwrap(),
                    ],
                ),
            ],
            qp: None,
        };
        let params = EstimateParams::new(0.25, 0.05, 0.1).unwrap();
        let report = verify_sos(&a, &cand, &grid(), &params, DEFAULT_CAP).unwrap();
        assert!(report.residual <= 1e-12);
        let kinked = report
            .smoothness
            .iter()
            .find(|s| s.k == 2)
            .expect("smoothness row for the |x| component");
        assert!(
            kinked.flagged,
            "kink must be flagged, estimate={}",
            kinked.estimate
        );
    }

    #[test]
    fn sos_residual_invariant_under_rotation() {
        // rotating a pair of vectors within one slot keeps Σ XX^T
        let mut a = GrushinMatrix::new(2, 1, 3).unwrap();
        a.mat.set_parse(1, 1, "1 + x1^2").unwrap();
        a.mat.set_parse(2, 2, "x1^2").unwrap();
        let vars = VarSet::spatial(1);
        let e1 = vec![crate::expr::parse("1", &vars).unwrap(), Expr::Const(0.0)];
        let xe1 = vec![crate::expr::parse("x1", &vars).unwrap(), Expr::Const(0.0)];
        let xe2 = vec![Expr::Const(0.0), crate::expr::parse("x1", &vars).unwrap()];
        let params = EstimateParams::new(0.25, 0.05, 0.1).unwrap();

        let plain = SosDecomposition {
            vectors: vec![(1, e1.clone()), (1, xe1.clone()), (2, xe2.clone())],
            qp: None,
        };
        let r0 = verify_sos(&a, &plain, &grid(), &params, DEFAULT_CAP)
            .unwrap()
            .residual;

        let (c, s) = (0.6f64, 0.8f64);
        let rot_a: Vec<Expr> = e1
            .iter()
            .zip(&xe1)
            .map(|(u, v)| {
                Expr::Const(c)
                    .mul(u.clone())
                    .add(Expr::Const(s).mul(v.clone()))
            })
            .collect();
        let rot_b: Vec<Expr> = e1
            .iter()
            .zip(&xe1)
            .map(|(u, v)| {
                Expr::Const(-s)
                    .mul(u.clone())
                    .add(Expr::Const(c).mul(v.clone()))
            })
            .collect();
        let rotated = SosDecomposition {
            vectors: vec![(1, rot_a), (1, rot_b), (2, xe2)],
            qp: None,
        };
        let r1 = verify_sos(&a, &rotated, &grid(), &params, DEFAULT_CAP)
            .unwrap()
            .residual;
        assert!(r0 <= 1e-12 && r1 <= 1e-12, "r0={r0} r1={r1}");
    }

    #[test]
    fn sos_with_quasiconformal_block() {
        // A = diag(1, x^2, x^2), p = 2: X_1 = e1, Q_p = x^2 I_2
        let mut a = GrushinMatrix::new(3, 1, 2).unwrap();
        a.mat.set_parse(1, 1, "1").unwrap();
        a.mat.set_parse(2, 2, "x1^2").unwrap();
        a.mat.set_parse(3, 3, "x1^2").unwrap();
        let vars = VarSet::spatial(1);
        let mut qp = SymbolicMatrix::zero(2, 1);
        qp.set_parse(1, 1, "x1^2").unwrap();
        qp.set_parse(2, 2, "x1^2").unwrap();
        let cand = SosDecomposition {
            vectors: vec![(
                1,
                vec![
                    crate::expr::parse("1", &vars).unwrap(),
                    Expr::Const(0.0),
                    Expr::Const(0.0),
                ],
            )],
            qp: Some(qp),
        };
        let params = EstimateParams::new(0.25, 0.05, 0.1).unwrap();
        let report = verify_sos(&a, &cand, &grid(), &params, DEFAULT_CAP).unwrap();
        assert!(report.residual <= 1e-12);
        let (beta, alpha) = report.qp_comparability.unwrap();
        assert!((beta - 1.0).abs() < 1e-9 && (alpha - 1.0).abs() < 1e-9);
    }

    #[test]
    fn diagonal_comparability_of_rank_one_block() {
        // A = [[1, x], [x, x^2]] depends on x1 = x̃ only; freezing the
        // trailing variables changes nothing, and A vs diag(1, x^2) has
        // pencil eigenvalues {0, 2}
        let mut a = GrushinMatrix::new(2, 1, 3).unwrap();
        a.mat.set_parse(1, 1, "1").unwrap();
        a.mat.set_parse(1, 2, "x1").unwrap();
        a.mat.set_parse(2, 2, "x1^2").unwrap();
        let (beta, alpha) = check_diagonal_comparability(&a, &grid()).unwrap();
        assert!(beta.abs() < 1e-10 && (alpha - 2.0).abs() < 1e-10);

        // trailing-variable dependence is frozen at zero
        let mut b = GrushinMatrix::new(2, 1, 2).unwrap();
        b.mat.vars = VarSet::spatial(2);
        b.mat.set_parse(1, 1, "1 + x2^2").unwrap();
        b.mat.set_parse(2, 2, "1").unwrap();
        let g2 = Grid::new(2, 1.0, 33).unwrap();
        let (beta, alpha) = check_diagonal_comparability(&b, &g2).unwrap();
        // frozen diagonal is diag(1, 1); A ranges up to diag(2, 1)
        assert!((beta - 1.0).abs() < 1e-10, "beta={beta}");
        assert!(alpha >= 1.9, "alpha={alpha}");
    }

    #[test]
    fn estimate_params_derived_delta() {
        let p = EstimateParams::new(0.25, 0.2, 0.3).unwrap();
        let expect = 2.0 * 0.2 * 1.2 / 2.2;
        assert!((p.delta_prime() - expect).abs() < 1e-15);
        assert!(EstimateParams::new(0.1, 0.2, 0.3).is_err());
        assert!(EstimateParams::new(0.25, 0.3, 0.2).is_err());
    }
}
