//! Sharpness engine: the degenerate generalized eigenproblem
//! `(-Δ + f²η²) v = λ h² v` on a ball with Dirichlet boundary, the
//! eigenvalue growth scan in η, eigenfunction mass concentration, the
//! derivative-ratio contradiction against the a priori estimate for
//! hypoelliptic operators, and the positive-direction lower bound via the
//! envelope function w(τ).
//!
//! The stiffness form is the 3-point (m=1) / 5-point (m=2) Laplacian with
//! Dirichlet rows excluded; the mass matrix is diagonal and may be
//! singular (h vanishing at the origin). Inverse power iteration applies
//! the mass forward only, so singular mass needs no flooring.

use crate::grid::Grid;
use crate::koike::{least_squares_fit, w_of_tau};
use crate::profiles::{radial_envelopes, FieldError, Profile, ScalarField};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("mass form vanishes identically; no eigenvalue to compute")]
    ZeroMass,
    #[error("iteration did not converge in {max_iter} steps (last lambda {lambda})")]
    NotConverged { max_iter: usize, lambda: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Guard below which a Rayleigh denominator is treated as vanished.
const DENOM_GUARD: f64 = 1e-300;

enum Stiffness {
    Tridiag {
        diag: Vec<f64>,
        off: f64,
    },
    Stencil2d {
        nx: usize,
        /// grid node (i + j*nx) -> interior index
        index: Vec<Option<usize>>,
        /// interior index -> (i, j)
        cells: Vec<(usize, usize)>,
        pot: Vec<f64>,
        inv_h2: f64,
    },
}

/// Assembled eigenproblem `K v = λ M v`.
pub struct EigenProblem {
    pub m: usize,
    pub radius: f64,
    pub eta: f64,
    stiffness: Stiffness,
    /// Diagonal mass h(x_i)^2 on interior nodes.
    pub mass: Vec<f64>,
    /// Interior node coordinates.
    pub coords: Vec<Vec<f64>>,
    /// Quadrature weight per interior node (Δ^m).
    pub quad_w: f64,
}

impl EigenProblem {
    pub fn size(&self) -> usize {
        self.mass.len()
    }

    pub fn apply_k(&self, v: &[f64], out: &mut [f64]) {
        match &self.stiffness {
            Stiffness::Tridiag { diag, off, .. } => {
                let n = v.len();
                for i in 0..n {
                    let mut acc = diag[i] * v[i];
                    if i > 0 {
                        acc += off * v[i - 1];
                    }
                    if i + 1 < n {
                        acc += off * v[i + 1];
                    }
                    out[i] = acc;
                }
            }
            Stiffness::Stencil2d {
                nx,
                index,
                cells,
                pot,
                inv_h2,
                ..
            } => {
                for (ii, &(i, j)) in cells.iter().enumerate() {
                    let mut acc = (4.0 * inv_h2 + pot[ii]) * v[ii];
                    let neighbor = |gi: isize, gj: isize| -> f64 {
                        if gi < 0 || gj < 0 || gi as usize >= *nx || gj as usize >= *nx {
                            return 0.0;
                        }
                        match index[gi as usize + gj as usize * nx] {
                            Some(k) => v[k],
                            None => 0.0,
                        }
                    };
                    acc -= inv_h2
                        * (neighbor(i as isize - 1, j as isize)
                            + neighbor(i as isize + 1, j as isize)
                            + neighbor(i as isize, j as isize - 1)
                            + neighbor(i as isize, j as isize + 1));
                    out[ii] = acc;
                }
            }
        }
    }

    /// Applies the shifted operator `(K - sigma M) v`.
    fn apply_shifted(&self, sigma: f64, v: &[f64], out: &mut [f64]) {
        self.apply_k(v, out);
        if sigma != 0.0 {
            for i in 0..v.len() {
                out[i] -= sigma * self.mass[i] * v[i];
            }
        }
    }

    /// LU pivots of the shifted tridiagonal matrix; `None` when a pivot is
    /// not positive (the shift crossed the spectrum).
    fn factor_shifted(&self, sigma: f64) -> Option<Vec<f64>> {
        match &self.stiffness {
            Stiffness::Tridiag { diag, off } => {
                let n = diag.len();
                let mut pivots = Vec::with_capacity(n);
                let mut prev = diag[0] - sigma * self.mass[0];
                if prev <= 0.0 {
                    return None;
                }
                pivots.push(prev);
                for (d, mass) in diag.iter().zip(&self.mass).skip(1) {
                    let piv = d - sigma * mass - off * off / prev;
                    if piv <= 0.0 {
                        return None;
                    }
                    pivots.push(piv);
                    prev = piv;
                }
                Some(pivots)
            }
            // 2D path solves iteratively; a positive preconditioner stands
            // in for the factorization feasibility check
            Stiffness::Stencil2d { pot, inv_h2, .. } => {
                let mut inv_diag = Vec::with_capacity(pot.len());
                for (p, mass) in pot.iter().zip(&self.mass) {
                    let d = 4.0 * inv_h2 + p - sigma * mass;
                    if d <= 0.0 {
                        return None;
                    }
                    inv_diag.push(1.0 / d);
                }
                Some(inv_diag)
            }
        }
    }

    /// Solves `(K - sigma M) y = b` with the factorization data from
    /// [`EigenProblem::factor_shifted`]. `None` signals an indefinite
    /// shifted operator detected mid-solve (2D conjugate gradients).
    fn solve_shifted(&self, sigma: f64, factor: &[f64], b: &[f64]) -> Option<Vec<f64>> {
        match &self.stiffness {
            Stiffness::Tridiag { off, .. } => {
                let n = b.len();
                let pivots = factor;
                let mut y = vec![0.0; n];
                y[0] = b[0];
                for i in 1..n {
                    y[i] = b[i] - off / pivots[i - 1] * y[i - 1];
                }
                let mut x = vec![0.0; n];
                x[n - 1] = y[n - 1] / pivots[n - 1];
                for i in (0..n - 1).rev() {
                    x[i] = (y[i] - off * x[i + 1]) / pivots[i];
                }
                Some(x)
            }
            Stiffness::Stencil2d { .. } => {
                let inv_diag = factor;
                let n = b.len();
                let mut x = vec![0.0; n];
                let mut r = b.to_vec();
                let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(ri, d)| ri * d).collect();
                let mut p = z.clone();
                let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
                let b_norm: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                let tol = 1e-13 * b_norm.max(DENOM_GUARD);
                let mut kp = vec![0.0; n];
                for _ in 0..(8 * n) {
                    self.apply_shifted(sigma, &p, &mut kp);
                    let pkp: f64 = p.iter().zip(&kp).map(|(a, b)| a * b).sum();
                    if pkp <= 0.0 {
                        // not positive definite at this shift
                        return None;
                    }
                    let alpha = rz / pkp;
                    for i in 0..n {
                        x[i] += alpha * p[i];
                        r[i] -= alpha * kp[i];
                    }
                    let r_norm: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if r_norm <= tol {
                        break;
                    }
                    for i in 0..n {
                        z[i] = r[i] * inv_diag[i];
                    }
                    let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
                    let beta = rz_new / rz;
                    rz = rz_new;
                    for i in 0..n {
                        p[i] = z[i] + beta * p[i];
                    }
                }
                Some(x)
            }
        }
    }

    /// Solves `K y = b` (unshifted).
    pub fn solve_k(&self, b: &[f64]) -> Vec<f64> {
        let factor = self
            .factor_shifted(0.0)
            .expect("unshifted stiffness is positive definite");
        self.solve_shifted(0.0, &factor, b)
            .expect("unshifted solve cannot break down")
    }

    /// L²(B) norm under the grid quadrature.
    pub fn quad_norm(&self, v: &[f64]) -> f64 {
        (v.iter().map(|x| x * x).sum::<f64>() * self.quad_w).sqrt()
    }
}

/// Assembles the Dirichlet problem on B(0, a) for coefficients f, h.
pub fn assemble(
    f: &Profile,
    h: &Profile,
    a: f64,
    eta: f64,
    grid: &Grid,
) -> Result<EigenProblem, SpectralError> {
    if grid.radius() + 1e-12 < a {
        return Err(SpectralError::Invalid(format!(
            "grid radius {} does not cover the ball radius {a}",
            grid.radius()
        )));
    }
    let m = grid.dim();
    let n = grid.nodes_per_axis();
    let dx = grid.spacing();
    let inv_h2 = 1.0 / (dx * dx);
    match m {
        1 => {
            // interior nodes of [-a, a]
            let mut coords = Vec::new();
            for i in 0..n {
                let x = grid.axis_coord(i);
                if x > -a + dx / 2.0 && x < a - dx / 2.0 {
                    coords.push(vec![x]);
                }
            }
            let mut diag = Vec::with_capacity(coords.len());
            let mut mass = Vec::with_capacity(coords.len());
            for x in &coords {
                let fv = f.eval(x)?;
                let hv = h.eval(x)?;
                diag.push(2.0 * inv_h2 + fv * fv * eta * eta);
                mass.push(hv * hv);
            }
            let off = -inv_h2;
            Ok(EigenProblem {
                m,
                radius: a,
                eta,
                stiffness: Stiffness::Tridiag { diag, off },
                mass,
                coords,
                quad_w: dx,
            })
        }
        2 => {
            let mut index = vec![None; n * n];
            let mut cells = Vec::new();
            let mut coords = Vec::new();
            for j in 0..n {
                for i in 0..n {
                    let x = grid.axis_coord(i);
                    let y = grid.axis_coord(j);
                    if x.hypot(y) < a - dx / 2.0 {
                        index[i + j * n] = Some(cells.len());
                        cells.push((i, j));
                        coords.push(vec![x, y]);
                    }
                }
            }
            if cells.is_empty() {
                return Err(SpectralError::Invalid("no interior nodes in the ball".into()));
            }
            let mut pot = Vec::with_capacity(cells.len());
            let mut mass = Vec::with_capacity(cells.len());
            for x in &coords {
                let fv = f.eval(x)?;
                let hv = h.eval(x)?;
                pot.push(fv * fv * eta * eta);
                mass.push(hv * hv);
            }
            Ok(EigenProblem {
                m,
                radius: a,
                eta,
                stiffness: Stiffness::Stencil2d {
                    nx: n,
                    index,
                    cells,
                    pot,
                    inv_h2,
                },
                mass,
                coords,
                quad_w: dx * dx,
            })
        }
        _ => Err(SpectralError::Invalid("eigenproblems support m in {1, 2}".into())),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenResult {
    pub lambda0: f64,
    /// Eigenvector on interior nodes, normalized to unit L²(B) quadrature
    /// norm.
    pub v0: Vec<f64>,
    pub iterations: usize,
    /// ||K v - λ M v||₂ at exit.
    pub residual: f64,
}

/// Smallest generalized eigenvalue by safeguarded shifted inverse power
/// iteration on `(K - σM)⁻¹M`. The mass matrix is only ever applied
/// forward, so h vanishing on part of the ball needs no regularization.
///
/// The shift trails the Rayleigh estimate by a residual-sized margin; the
/// Rayleigh quotient never falls below the smallest pencil eigenvalue, and
/// a shift that crosses the spectrum loses positive definiteness of
/// `K - σM`, which the factorization detects, triggering a backoff. This
/// keeps the iteration fast when the pencil gap is small relative to λ
/// (elliptic coefficients at large η).
pub fn smallest_eigen(prob: &EigenProblem) -> Result<EigenResult, SpectralError> {
    let n = prob.size();
    if prob.mass.iter().all(|&v| v == 0.0) {
        return Err(SpectralError::ZeroMass);
    }
    let max_iter = 100_000;
    let mut v = vec![1.0; n];
    let nv = prob.quad_norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut sigma = 0.0f64;
    let mut safe_sigma = 0.0f64;
    let mut factor = prob
        .factor_shifted(0.0)
        .expect("unshifted stiffness is positive definite");

    let mut lambda_prev = f64::INFINITY;
    let mut kv = vec![0.0; n];
    for iter in 1..=max_iter {
        let w: Vec<f64> = v.iter().zip(&prob.mass).map(|(a, b)| a * b).collect();
        let y = match prob.solve_shifted(sigma, &factor, &w) {
            Some(y) => y,
            None => {
                // indefiniteness surfaced mid-solve: retreat halfway
                sigma = 0.5 * (sigma + safe_sigma);
                factor = match prob.factor_shifted(sigma) {
                    Some(f) => f,
                    None => {
                        sigma = safe_sigma;
                        prob.factor_shifted(sigma).expect("safe shift factors")
                    }
                };
                continue;
            }
        };
        let ny = prob.quad_norm(&y);
        if !(ny > DENOM_GUARD) {
            return Err(SpectralError::NotConverged {
                max_iter: iter,
                lambda: lambda_prev,
            });
        }
        let vnew: Vec<f64> = y.iter().map(|x| x / ny).collect();
        prob.apply_k(&vnew, &mut kv);
        let num: f64 = vnew.iter().zip(&kv).map(|(a, b)| a * b).sum();
        let den: f64 = vnew
            .iter()
            .zip(&prob.mass)
            .map(|(a, b)| a * a * b)
            .sum();
        if den.abs() < DENOM_GUARD {
            return Err(SpectralError::NotConverged {
                max_iter: iter,
                lambda: lambda_prev,
            });
        }
        let lambda = num / den;
        let kn: f64 = kv.iter().map(|x| x * x).sum::<f64>().sqrt();
        let res: f64 = kv
            .iter()
            .zip(vnew.iter().zip(&prob.mass))
            .map(|(k, (vi, mi))| {
                let r = k - lambda * vi * mi;
                r * r
            })
            .sum::<f64>()
            .sqrt();

        let close = (lambda - lambda_prev).abs() <= 1e-12 * lambda.abs();
        lambda_prev = lambda;
        v = vnew;
        if close && res <= 1e-8 * kn {
            // fix the sign for reproducibility: first sizable entry positive
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-290) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            return Ok(EigenResult {
                lambda0: lambda,
                v0: v,
                iterations: iter,
                residual: res,
            });
        }

        // advance the shift toward λ, margin ~ the residual scale
        let mass_scale = den.sqrt() / prob.quad_norm(&v).max(DENOM_GUARD);
        let margin = 2.0 * res / mass_scale.max(1e-6) + 1e-9 * lambda.abs();
        let cand = lambda - margin;
        if cand > sigma {
            let mut trial = cand;
            let mut ok = false;
            for _ in 0..64 {
                if let Some(f) = prob.factor_shifted(trial) {
                    safe_sigma = sigma;
                    sigma = trial;
                    factor = f;
                    ok = true;
                    break;
                }
                trial = 0.5 * (trial + sigma);
            }
            if !ok {
                // stay at the current (working) shift
                factor = prob.factor_shifted(sigma).expect("current shift factors");
            }
        }
    }
    Err(SpectralError::NotConverged {
        max_iter,
        lambda: lambda_prev,
    })
}

/// Quadrature mass of v₀² inside the concentric ball of radius
/// `ratio * a`.
pub fn mass_fraction(prob: &EigenProblem, res: &EigenResult, ratio: f64) -> f64 {
    let cut = ratio * prob.radius;
    let mut acc = 0.0;
    for (x, v) in prob.coords.iter().zip(&res.v0) {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        if r <= cut + 1e-12 {
            acc += v * v;
        }
    }
    acc * prob.quad_w
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesRow {
    pub eta: f64,
    pub lambda0: f64,
    pub mass_half: f64,
    pub iterations: usize,
    /// Degeneracy scale b with f(b) = 1/η, for radially monotone f.
    pub b_scale: Option<f64>,
}

/// λ₀(1, η) over an η sweep with the growth fits used by the sharpness
/// argument.
#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleSeries {
    pub rows: Vec<SeriesRow>,
    /// Least-squares slope of λ₀ against (ln η)².
    pub c1: f64,
    /// Growth exponent q in λ₀ ∝ (ln η)^q.
    pub q: f64,
    /// Goodness of the q-fit; low values mean the power-law model in ln η
    /// does not describe the data (e.g. elliptic coefficients).
    pub q_r2: f64,
    pub q_meaningful: bool,
}

/// Solves the eigenproblem for every η (in parallel, assembled in η
/// order) and fits the eigenvalue growth.
pub fn lambda0_scan(
    f: &Profile,
    h: &Profile,
    a: f64,
    etas: &[f64],
    grid: &Grid,
) -> Result<CounterexampleSeries, SpectralError> {
    if etas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SpectralError::Invalid("etas must be strictly increasing".into()));
    }
    if etas.first().copied().unwrap_or(0.0) < std::f64::consts::E {
        return Err(SpectralError::Invalid("etas must be >= e for the log fits".into()));
    }
    let results: Vec<Result<SeriesRow, SpectralError>> = etas
        .par_iter()
        .map(|&eta| {
            let prob = assemble(f, h, a, eta, grid)?;
            let res = smallest_eigen(&prob)?;
            let mass_half = mass_fraction(&prob, &res, 0.5);
            Ok(SeriesRow {
                eta,
                lambda0: res.lambda0,
                mass_half,
                iterations: res.iterations,
                b_scale: invert_radial(f, 1.0 / eta),
            })
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }

    // lambda0 ~ C1 (ln eta)^2
    let pts1: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.eta.ln().powi(2), r.lambda0))
        .collect();
    let (c1, _) = least_squares_fit(&pts1);

    // ln lambda0 ~ q ln ln eta + const
    let pts2: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.lambda0 > 0.0)
        .map(|r| (r.eta.ln().ln(), r.lambda0.ln()))
        .collect();
    let (q, q_icept) = least_squares_fit(&pts2);
    let mean_y = pts2.iter().map(|p| p.1).sum::<f64>() / pts2.len().max(1) as f64;
    let ss_tot: f64 = pts2.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = pts2
        .iter()
        .map(|p| (p.1 - q * p.0 - q_icept).powi(2))
        .sum();
    let q_r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    Ok(CounterexampleSeries {
        rows,
        c1,
        q,
        q_r2,
        q_meaningful: q_r2 >= 0.98,
    })
}

/// Inverts a radially monotone profile: the radius b with f(b) = target.
/// None when f is not radially monotone on [0, R] at scan resolution.
fn invert_radial(f: &Profile, target: f64) -> Option<f64> {
    if f.m != 1 {
        return None;
    }
    let samples = 4096;
    let mut prev = f.eval(&[0.0]).or_else(|_| f.eval(&[1e-12])).ok()?;
    let mut vals = Vec::with_capacity(samples + 1);
    vals.push(prev);
    for i in 1..=samples {
        let r = f.radius * i as f64 / samples as f64;
        let v = f.eval(&[r]).ok()?;
        if v < prev - 1e-12 {
            return None;
        }
        vals.push(v);
        prev = v;
    }
    if target < vals[0] || target > vals[samples] {
        return None;
    }
    let mut lo = 0.0;
    let mut hi = f.radius;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        match f.eval(&[mid]) {
            Ok(v) if v < target => lo = mid,
            Ok(_) => hi = mid,
            Err(_) => return None,
        }
    }
    Some(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Serialize)]
pub struct HoshiroRow {
    pub eta: f64,
    /// ln of the ratio (k-th y-derivative mass over V') / (solution mass
    /// bound over V); kept in log space since both sides overflow for
    /// elliptic coefficients.
    pub ln_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HoshiroReport {
    pub k: u32,
    pub delta: f64,
    pub rows: Vec<HoshiroRow>,
    /// Fitted growth exponent of the ratio in η.
    pub exponent: f64,
    /// The a priori estimate forces a bounded ratio; unbounded growth for
    /// k above sqrt(C1) δ certifies the contradiction.
    pub threshold: f64,
    pub contradiction: bool,
}

/// Ratio of the derivative mass of `u_n(x, y, t) = e^{iyη + sqrt(λ₀) t} v₀`
/// over the inner box against the a priori bound over the outer box. The
/// y- and t-integrals are analytic; only the x-mass uses the grid.
pub fn hoshiro_ratio(series: &CounterexampleSeries, k: u32, delta: f64) -> HoshiroReport {
    let mut rows = Vec::with_capacity(series.rows.len());
    for r in &series.rows {
        let lam = r.lambda0.max(f64::MIN_POSITIVE);
        let s = lam.sqrt() * delta; // sqrt(λ₀) δ
        // numerator: η^{2k} · mass(½B) · π · ∫_0^{δ/2} e^{2 sqrt(λ) t} dt
        //          = η^{2k} · mass · π · (e^s - 1) / (2 sqrt(λ))
        let ln_int = s + (-(-s).exp_m1()).ln() - (2.0 * lam.sqrt()).ln();
        let ln_num =
            2.0 * k as f64 * r.eta.ln() + r.mass_half.max(f64::MIN_POSITIVE).ln()
                + std::f64::consts::PI.ln()
                + ln_int;
        // denominator bound: e^{2 sqrt(λ) δ}
        let ln_den = 2.0 * s;
        rows.push(HoshiroRow {
            eta: r.eta,
            ln_ratio: ln_num - ln_den,
        });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.eta.ln(), r.ln_ratio)).collect();
    let (exponent, _) = least_squares_fit(&pts);
    let threshold = series.c1.max(0.0).sqrt() * delta;
    HoshiroReport {
        k,
        delta,
        rows,
        exponent,
        threshold,
        contradiction: exponent > 0.0 && (k as f64) > threshold,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundRow {
    pub tau: f64,
    pub w: f64,
    pub lambda0: f64,
    /// Empirical constant C with λ₀ >= w(τ)²/C.
    pub c_emp: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundReport {
    pub rows: Vec<LowerBoundRow>,
    pub c_max: f64,
}

/// Checks λ₀(a, τ) against the envelope lower bound w(τ)²/C with h ≡ 1.
pub fn lowerbound_check(
    f: &Profile,
    taus: &[f64],
    a: f64,
    grid: &Grid,
) -> Result<LowerBoundReport, SpectralError> {
    let env = radial_envelopes(f, grid)?;
    let one = Profile::constant(1.0, grid.dim(), f.radius);
    let mut rows = Vec::with_capacity(taus.len());
    let mut c_max = 0.0f64;
    for &tau in taus {
        let w = w_of_tau(&env, tau);
        let prob = assemble(f, &one, a, tau, grid)?;
        let res = smallest_eigen(&prob)?;
        let c_emp = w * w / res.lambda0;
        c_max = c_max.max(c_emp);
        rows.push(LowerBoundRow {
            tau,
            w,
            lambda0: res.lambda0,
            c_emp,
        });
    }
    Ok(LowerBoundReport { rows, c_max })
}

/// Log-spaced η values, the default sweep of the sharpness experiments.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    (0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
        .collect()
}
