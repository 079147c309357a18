//! Seeded random expression generators for the acceptance checks: a
//! kink-free family for derivative/finite-difference agreement and a full
//! grammar-shaped family for printer round trips.

use degenlab::expr::{parse, Bindings, Expr, VarSet};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Smooth expression away from kinks: +, -, *, / (positive denominators),
/// exp/log/sqrt of positive arguments, integer and real powers.
fn smooth_expr(rng: &mut ChaCha8Rng, depth: u32) -> Expr {
    if depth == 0 {
        return match rng.gen_range(0..3) {
            0 => Expr::var("x1"),
            1 => Expr::var("x2"),
            _ => Expr::Const(rng.gen_range(0.3..2.5)),
        };
    }
    match rng.gen_range(0..9) {
        0 => smooth_expr(rng, depth - 1).add(smooth_expr(rng, depth - 1)),
        1 => smooth_expr(rng, depth - 1).sub(smooth_expr(rng, depth - 1)),
        2 => smooth_expr(rng, depth - 1).mul(smooth_expr(rng, depth - 1)),
        3 => smooth_expr(rng, depth - 1).div(positive_expr(rng, depth - 1)),
        4 => Expr::Const(rng.gen_range(0.1..0.4))
            .mul(smooth_expr(rng, depth - 1))
            .exp(),
        5 => positive_expr(rng, depth - 1).log(),
        6 => positive_expr(rng, depth - 1).sqrt(),
        7 => smooth_expr(rng, depth - 1).pow(rng.gen_range(2..4) as f64),
        _ => positive_expr(rng, depth - 1).pow([0.5, 1.5, 2.5][rng.gen_range(0..3)]),
    }
}

/// Expression guaranteed positive wherever it evaluates.
fn positive_expr(rng: &mut ChaCha8Rng, depth: u32) -> Expr {
    if depth == 0 {
        return Expr::Const(rng.gen_range(0.5..3.0));
    }
    match rng.gen_range(0..4) {
        0 => Expr::Const(rng.gen_range(0.5..2.0)).add(smooth_expr(rng, depth - 1).pow(2.0)),
        1 => Expr::Const(rng.gen_range(0.1..0.4))
            .mul(smooth_expr(rng, depth - 1))
            .exp(),
        2 => positive_expr(rng, depth - 1).add(positive_expr(rng, depth - 1)),
        _ => positive_expr(rng, depth - 1).mul(positive_expr(rng, depth - 1)),
    }
}

/// Derivative vs central finite differences with step h = 1e-5 (1 + |x|),
/// at random non-singular points; returns how many expressions were
/// checked. Expressions whose oracle is numerically unstable at the drawn
/// point (detected by comparing the h and h/2 stencils against the
/// required resolution) are redrawn, never skipped silently.
pub fn check_fd_agreement(count: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < count {
        attempts += 1;
        assert!(
            attempts < 100 * count,
            "generator failed to produce enough stable expressions"
        );
        let e = smooth_expr(&mut rng, 3);
        let var = if rng.gen_bool(0.5) { "x1" } else { "x2" };
        if !e.contains_var(var) {
            continue;
        }
        let x1 = rng.gen_range(0.4..1.7);
        let x2 = rng.gen_range(0.4..1.7);
        let point = Bindings::of(&[("x1", x1), ("x2", x2)]);
        let value = match e.evaluate(&point) {
            Ok(v) if v.is_finite() && v.abs() <= 1e3 => v,
            _ => continue,
        };
        let _ = value;
        let d = e.differentiate(var);
        let sym = match d.evaluate(&point) {
            Ok(v) if v.is_finite() && v.abs() <= 1e4 => v,
            _ => continue,
        };
        let x0 = if var == "x1" { x1 } else { x2 };
        let h = 1e-5 * (1.0 + x0.abs());
        let eval_at = |xv: f64| -> Option<f64> {
            let b = if var == "x1" {
                Bindings::of(&[("x1", xv), ("x2", x2)])
            } else {
                Bindings::of(&[("x1", x1), ("x2", xv)])
            };
            e.evaluate(&b).ok().filter(|v| v.is_finite())
        };
        let fd_with = |step: f64| -> Option<f64> {
            Some((eval_at(x0 + step)? - eval_at(x0 - step)?) / (2.0 * step))
        };
        let (fd, fd_half) = match (fd_with(h), fd_with(h / 2.0)) {
            (Some(a), Some(b)) => (a, b),
            _ => continue,
        };
        // oracle self-consistency: the two stencils must agree well below
        // the tolerance being tested, otherwise the point is too stiff
        if (fd - fd_half).abs() > 0.1e-6 * (1.0 + sym.abs()) {
            continue;
        }
        let rel = (sym - fd).abs() / (1.0 + sym.abs());
        assert!(
            rel <= 1e-6,
            "derivative mismatch: d/d{var} of `{e}` at ({x1}, {x2}): sym={sym} fd={fd} rel={rel}"
        );
        checked += 1;
    }
    checked
}

/// Grammar-shaped expression over the full node set, as the parser could
/// have produced it (nonnegative literals, explicit unary minus).
fn grammar_expr(rng: &mut ChaCha8Rng, depth: u32) -> Expr {
    if depth == 0 {
        return match rng.gen_range(0..3) {
            0 => Expr::var("x1"),
            1 => Expr::var("x2"),
            _ => Expr::Const(rng.gen_range(0.0..9.5)),
        };
    }
    match rng.gen_range(0..13) {
        0 => grammar_expr(rng, depth - 1).add(grammar_expr(rng, depth - 1)),
        1 => grammar_expr(rng, depth - 1).sub(grammar_expr(rng, depth - 1)),
        2 => grammar_expr(rng, depth - 1).mul(grammar_expr(rng, depth - 1)),
        3 => grammar_expr(rng, depth - 1).div(grammar_expr(rng, depth - 1)),
        4 => grammar_expr(rng, depth - 1).neg(),
        5 => grammar_expr(rng, depth - 1).exp(),
        6 => grammar_expr(rng, depth - 1).log(),
        7 => grammar_expr(rng, depth - 1).abs(),
        8 => grammar_expr(rng, depth - 1).sqrt(),
        9 => {
            let exponent = [2.0, 3.0, -2.0, 0.5, 1.5][rng.gen_range(0..5)];
            grammar_expr(rng, depth - 1).pow(exponent)
        }
        10 => Expr::min_of(vec![
            grammar_expr(rng, depth - 1),
            grammar_expr(rng, depth - 1),
            grammar_expr(rng, depth - 1),
        ]),
        11 => Expr::max_of(vec![
            grammar_expr(rng, depth - 1),
            grammar_expr(rng, depth - 1),
        ]),
        _ => {
            if rng.gen_bool(0.5) {
                Expr::norm_of(&["x1", "x2"])
            } else {
                Expr::Unary(
                    degenlab::expr::UnaryOp::Pos,
                    Box::new(grammar_expr(rng, depth - 1)),
                )
            }
        }
    }
}

/// Print -> parse -> structural equality; returns the number checked.
pub fn check_round_trip(count: usize, seed: u64) -> usize {
    let vars = VarSet::spatial(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let depth = 1 + (i % 4) as u32;
        let e = grammar_expr(&mut rng, depth);
        let printed = e.to_string();
        let reparsed = parse(&printed, &vars)
            .unwrap_or_else(|err| panic!("printed form failed to parse: `{printed}`: {err}"));
        assert_eq!(e, reparsed, "round trip changed the tree for `{printed}`");
    }
    count
}
