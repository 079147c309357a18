//! Expression mini-language for profiles, matrix entries, symbols and test
//! functions.
//!
//! Expressions are immutable trees over a declared [`VarSet`]. The module
//! provides exact symbolic differentiation, IEEE double evaluation, a
//! canonical printer and an infix parser (see [`parse`]). Kinked nodes
//! (`abs`, `min`, `max`, `pos`) differentiate to `sign`-selector forms that
//! are valid away from the kink set; `sign(0)` evaluates to `0`.

mod parse;
mod print;

pub use parse::{parse, ParseError};

use serde::Serialize;
use std::fmt;
use thiserror::Error;

/// Role of a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarRole {
    Spatial,
    Frequency,
    Parameter,
}

/// Ordered set of declared variable names with disjoint roles.
#[derive(Debug, Clone, Serialize)]
pub struct VarSet {
    names: Vec<String>,
    roles: Vec<VarRole>,
}

impl VarSet {
    pub fn new(vars: &[(&str, VarRole)]) -> Result<Self, VarSetError> {
        let mut names = Vec::with_capacity(vars.len());
        let mut roles = Vec::with_capacity(vars.len());
        for (name, role) in vars {
            if names.iter().any(|n| n == name) {
                return Err(VarSetError::Duplicate(name.to_string()));
            }
            names.push(name.to_string());
            roles.push(*role);
        }
        Ok(VarSet { names, roles })
    }

    /// Spatial variables `x1..xm` only; the common case for profiles.
    pub fn spatial(m: usize) -> Self {
        let names: Vec<String> = (1..=m).map(|i| format!("x{i}")).collect();
        VarSet {
            names,
            roles: vec![VarRole::Spatial; m],
        }
    }

    /// `x1..xm` spatial plus `xi1..xim` frequency, for symbol calculus.
    pub fn phase_space(m: usize) -> Self {
        let mut names: Vec<String> = (1..=m).map(|i| format!("x{i}")).collect();
        names.extend((1..=m).map(|i| format!("xi{i}")));
        let mut roles = vec![VarRole::Spatial; m];
        roles.extend(vec![VarRole::Frequency; m]);
        VarSet { names, roles }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn with_role(&self, role: VarRole) -> Vec<&str> {
        self.names
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| **r == role)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum VarSetError {
    #[error("duplicate variable name `{0}`")]
    Duplicate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Abs,
    Sqrt,
    /// Positive part `[t]+ = max(t, 0)`.
    Pos,
    /// Sign with `sign(0) = 0`; produced by differentiation of kinks.
    Sign,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Abs => "abs",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Pos => "pos",
            UnaryOp::Sign => "sign",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NaryOp {
    Min,
    Max,
}

/// Expression tree node. Constructed by [`parse`] or the builder methods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Expr {
    Const(f64),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Nary(NaryOp, Vec<Expr>),
    /// Euclidean norm of a list of declared variables.
    Norm(Vec<String>),
}

/// Variable bindings for evaluation. Linear scan; expression var sets are
/// tiny so this beats hashing in the hot loops.
#[derive(Debug, Clone, Default)]
pub struct Bindings {
    pairs: Vec<(String, f64)>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: &str, value: f64) {
        if let Some(p) = self.pairs.iter_mut().find(|(n, _)| n == name) {
            p.1 = value;
        } else {
            self.pairs.push((name.to_string(), value));
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.pairs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn of(pairs: &[(&str, f64)]) -> Self {
        Bindings {
            pairs: pairs.iter().map(|(n, v)| (n.to_string(), *v)).collect(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("domain error: {op} of {value} in `{node}`")]
    Domain {
        op: &'static str,
        value: f64,
        node: String,
    },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
}

// the arithmetic builders are chainable constructors, not operator impls
#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn add(self, rhs: Expr) -> Expr {
        Expr::Binary(BinaryOp::Add, Box::new(self), Box::new(rhs))
    }

    pub fn sub(self, rhs: Expr) -> Expr {
        Expr::Binary(BinaryOp::Sub, Box::new(self), Box::new(rhs))
    }

    pub fn mul(self, rhs: Expr) -> Expr {
        Expr::Binary(BinaryOp::Mul, Box::new(self), Box::new(rhs))
    }

    pub fn div(self, rhs: Expr) -> Expr {
        Expr::Binary(BinaryOp::Div, Box::new(self), Box::new(rhs))
    }

    pub fn pow(self, exponent: f64) -> Expr {
        Expr::Binary(
            BinaryOp::Pow,
            Box::new(self),
            Box::new(Expr::Const(exponent)),
        )
    }

    pub fn neg(self) -> Expr {
        Expr::Unary(UnaryOp::Neg, Box::new(self))
    }

    pub fn exp(self) -> Expr {
        Expr::Unary(UnaryOp::Exp, Box::new(self))
    }

    pub fn log(self) -> Expr {
        Expr::Unary(UnaryOp::Log, Box::new(self))
    }

    pub fn abs(self) -> Expr {
        Expr::Unary(UnaryOp::Abs, Box::new(self))
    }

    pub fn sqrt(self) -> Expr {
        Expr::Unary(UnaryOp::Sqrt, Box::new(self))
    }

    pub fn min_of(args: Vec<Expr>) -> Expr {
        Expr::Nary(NaryOp::Min, args)
    }

    pub fn max_of(args: Vec<Expr>) -> Expr {
        Expr::Nary(NaryOp::Max, args)
    }

    pub fn norm_of(vars: &[&str]) -> Expr {
        Expr::Norm(vars.iter().map(|s| s.to_string()).collect())
    }

    /// True when `var` occurs anywhere in the tree.
    pub fn contains_var(&self, var: &str) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(name) => name == var,
            Expr::Unary(_, e) => e.contains_var(var),
            Expr::Binary(_, a, b) => a.contains_var(var) || b.contains_var(var),
            Expr::Nary(_, args) => args.iter().any(|e| e.contains_var(var)),
            Expr::Norm(vars) => vars.iter().any(|v| v == var),
        }
    }

    /// All variable names occurring in the tree, in first-occurrence order.
    pub fn free_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                if !out.iter().any(|n| n == name) {
                    out.push(name.clone());
                }
            }
            Expr::Unary(_, e) => e.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Nary(_, args) => args.iter().for_each(|e| e.collect_vars(out)),
            Expr::Norm(vars) => {
                for v in vars {
                    if !out.iter().any(|n| n == v) {
                        out.push(v.clone());
                    }
                }
            }
        }
    }

    /// IEEE double evaluation. Division by zero, `log` of a non-positive
    /// argument, `sqrt` of a negative argument and real powers of negative
    /// bases are [`EvalError::Domain`].
    pub fn evaluate(&self, point: &Bindings) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(name) => point
                .get(name)
                .ok_or_else(|| EvalError::UnboundVariable(name.clone())),
            Expr::Unary(op, e) => {
                let v = e.evaluate(point)?;
                match op {
                    UnaryOp::Neg => Ok(-v),
                    UnaryOp::Exp => Ok(v.exp()),
                    UnaryOp::Log => {
                        if v <= 0.0 {
                            Err(self.domain_error("log", v))
                        } else {
                            Ok(v.ln())
                        }
                    }
                    UnaryOp::Abs => Ok(v.abs()),
                    UnaryOp::Sqrt => {
                        if v < 0.0 {
                            Err(self.domain_error("sqrt", v))
                        } else {
                            Ok(v.sqrt())
                        }
                    }
                    UnaryOp::Pos => Ok(if v > 0.0 { v } else { 0.0 }),
                    UnaryOp::Sign => Ok(if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }),
                }
            }
            Expr::Binary(op, a, b) => {
                let x = a.evaluate(point)?;
                let y = b.evaluate(point)?;
                match op {
                    BinaryOp::Add => Ok(x + y),
                    BinaryOp::Sub => Ok(x - y),
                    BinaryOp::Mul => Ok(x * y),
                    BinaryOp::Div => {
                        if y == 0.0 {
                            Err(self.domain_error("division by", y))
                        } else {
                            Ok(x / y)
                        }
                    }
                    BinaryOp::Pow => eval_pow(self, x, y),
                }
            }
            Expr::Nary(op, args) => {
                let mut acc = match op {
                    NaryOp::Min => f64::INFINITY,
                    NaryOp::Max => f64::NEG_INFINITY,
                };
                for e in args {
                    let v = e.evaluate(point)?;
                    acc = match op {
                        NaryOp::Min => acc.min(v),
                        NaryOp::Max => acc.max(v),
                    };
                }
                Ok(acc)
            }
            Expr::Norm(vars) => {
                let mut s = 0.0;
                for v in vars {
                    let x = point
                        .get(v)
                        .ok_or_else(|| EvalError::UnboundVariable(v.clone()))?;
                    s += x * x;
                }
                Ok(s.sqrt())
            }
        }
    }

    fn domain_error(&self, op: &'static str, value: f64) -> EvalError {
        EvalError::Domain {
            op,
            value,
            node: self.to_string(),
        }
    }

    /// Exact symbolic derivative with respect to `var`.
    ///
    /// Subtrees free of `var` differentiate to zero without being walked.
    /// The only simplification applied afterwards is constant folding.
    pub fn differentiate(&self, var: &str) -> Expr {
        self.deriv(var).fold_constants()
    }

    fn deriv(&self, var: &str) -> Expr {
        if !self.contains_var(var) {
            return Expr::Const(0.0);
        }
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(name) => {
                if name == var {
                    Expr::Const(1.0)
                } else {
                    Expr::Const(0.0)
                }
            }
            Expr::Unary(op, e) => {
                let de = e.deriv(var);
                let inner = e.as_ref().clone();
                match op {
                    UnaryOp::Neg => de.neg(),
                    UnaryOp::Exp => inner.exp().mul(de),
                    UnaryOp::Log => de.div(inner),
                    // sign(inner) * inner'; valid away from the kink, 0 on it
                    UnaryOp::Abs => Expr::Unary(UnaryOp::Sign, Box::new(inner)).mul(de),
                    UnaryOp::Sqrt => de.div(Expr::Const(2.0).mul(inner.sqrt())),
                    // indicator {inner > 0} * inner'
                    UnaryOp::Pos => Expr::Unary(
                        UnaryOp::Sign,
                        Box::new(Expr::Unary(UnaryOp::Pos, Box::new(inner))),
                    )
                    .mul(de),
                    UnaryOp::Sign => Expr::Const(0.0),
                }
            }
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.as_ref(), b.as_ref());
                match op {
                    BinaryOp::Add => match (a.contains_var(var), b.contains_var(var)) {
                        (true, false) => a.deriv(var),
                        (false, true) => b.deriv(var),
                        _ => a.deriv(var).add(b.deriv(var)),
                    },
                    BinaryOp::Sub => match (a.contains_var(var), b.contains_var(var)) {
                        (true, false) => a.deriv(var),
                        (false, true) => b.deriv(var).neg(),
                        _ => a.deriv(var).sub(b.deriv(var)),
                    },
                    BinaryOp::Mul => match (a.contains_var(var), b.contains_var(var)) {
                        (true, false) => a.deriv(var).mul(b.clone()),
                        (false, true) => a.clone().mul(b.deriv(var)),
                        _ => a
                            .deriv(var)
                            .mul(b.clone())
                            .add(a.clone().mul(b.deriv(var))),
                    },
                    BinaryOp::Div => {
                        if !b.contains_var(var) {
                            a.deriv(var).div(b.clone())
                        } else {
                            // (a'b - ab') / b^2
                            a.deriv(var)
                                .mul(b.clone())
                                .sub(a.clone().mul(b.deriv(var)))
                                .div(b.clone().pow(2.0))
                        }
                    }
                    BinaryOp::Pow => {
                        match b {
                            Expr::Const(r) => {
                                // r * a^(r-1) * a'
                                Expr::Const(*r)
                                    .mul(a.clone().pow(r - 1.0))
                                    .mul(a.deriv(var))
                            }
                            _ => {
                                // general a^b = exp(b log a)
                                let val = a.clone().pow_expr(b.clone());
                                let bracket = b
                                    .deriv(var)
                                    .mul(a.clone().log())
                                    .add(b.clone().mul(a.deriv(var)).div(a.clone()));
                                val.mul(bracket)
                            }
                        }
                    }
                }
            }
            Expr::Nary(op, args) => {
                // sum of branch derivatives gated by strict-extremum selectors;
                // all selectors vanish on ties, matching sign(0) = 0
                let mut terms: Vec<Expr> = Vec::new();
                for (i, arg) in args.iter().enumerate() {
                    if !arg.contains_var(var) {
                        continue;
                    }
                    let others: Vec<Expr> =
                        args.iter()
                            .enumerate()
                            .filter(|(j, _)| *j != i)
                            .map(|(_, e)| e.clone())
                            .collect();
                    let selector = if others.is_empty() {
                        Expr::Const(1.0)
                    } else {
                        let rest = Expr::Nary(*op, others);
                        let margin = match op {
                            NaryOp::Min => rest.sub(arg.clone()),
                            NaryOp::Max => arg.clone().sub(rest),
                        };
                        Expr::Unary(
                            UnaryOp::Sign,
                            Box::new(Expr::Unary(UnaryOp::Pos, Box::new(margin))),
                        )
                    };
                    terms.push(selector.mul(arg.deriv(var)));
                }
                terms
                    .into_iter()
                    .reduce(|acc, t| acc.add(t))
                    .unwrap_or(Expr::Const(0.0))
            }
            Expr::Norm(vars) => {
                if vars.iter().any(|v| v == var) {
                    // v / norm(...); undefined at the origin of the norm block
                    Expr::var(var).div(Expr::Norm(vars.clone()))
                } else {
                    Expr::Const(0.0)
                }
            }
        }
    }

    fn pow_expr(self, rhs: Expr) -> Expr {
        Expr::Binary(BinaryOp::Pow, Box::new(self), Box::new(rhs))
    }

    /// Folds constant subtrees and the domain-safe identities
    /// `e+0`, `e-0`, `1*e`, `e*1`, `e/1`, `e^1`, `neg(const)`.
    /// `0*e` folds only when `e` is total (no partial node anywhere), so
    /// folding never changes the domain of definition.
    pub fn fold_constants(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Norm(_) => self.clone(),
            Expr::Unary(op, e) => {
                let e = e.fold_constants();
                if let Expr::Const(c) = e {
                    let probe = Expr::Unary(*op, Box::new(Expr::Const(c)));
                    if let Ok(v) = probe.evaluate(&Bindings::new()) {
                        return Expr::Const(v);
                    }
                }
                Expr::Unary(*op, Box::new(e))
            }
            Expr::Binary(op, a, b) => {
                let a = a.fold_constants();
                let b = b.fold_constants();
                if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
                    let probe =
                        Expr::Binary(*op, Box::new(Expr::Const(*x)), Box::new(Expr::Const(*y)));
                    if let Ok(v) = probe.evaluate(&Bindings::new()) {
                        return Expr::Const(v);
                    }
                }
                match (op, &a, &b) {
                    (BinaryOp::Add, Expr::Const(z), _) if *z == 0.0 => return b,
                    (BinaryOp::Add, _, Expr::Const(z)) if *z == 0.0 => return a,
                    (BinaryOp::Sub, _, Expr::Const(z)) if *z == 0.0 => return a,
                    (BinaryOp::Mul, Expr::Const(o), _) if *o == 1.0 => return b,
                    (BinaryOp::Mul, _, Expr::Const(o)) if *o == 1.0 => return a,
                    (BinaryOp::Mul, Expr::Const(z), e) if *z == 0.0 && e.is_total() => {
                        return Expr::Const(0.0)
                    }
                    (BinaryOp::Mul, e, Expr::Const(z)) if *z == 0.0 && e.is_total() => {
                        return Expr::Const(0.0)
                    }
                    (BinaryOp::Div, _, Expr::Const(o)) if *o == 1.0 => return a,
                    (BinaryOp::Pow, _, Expr::Const(o)) if *o == 1.0 => return a,
                    _ => {}
                }
                Expr::Binary(*op, Box::new(a), Box::new(b))
            }
            Expr::Nary(op, args) => {
                let args: Vec<Expr> = args.iter().map(|e| e.fold_constants()).collect();
                if args.iter().all(|e| matches!(e, Expr::Const(_))) {
                    let probe = Expr::Nary(*op, args.clone());
                    if let Ok(v) = probe.evaluate(&Bindings::new()) {
                        return Expr::Const(v);
                    }
                }
                Expr::Nary(*op, args)
            }
        }
    }

    /// True when evaluation cannot raise a domain error at any point.
    fn is_total(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Norm(_) => true,
            Expr::Unary(op, e) => {
                !matches!(op, UnaryOp::Log | UnaryOp::Sqrt) && e.is_total()
            }
            Expr::Binary(op, a, b) => match op {
                BinaryOp::Div | BinaryOp::Pow => false,
                _ => a.is_total() && b.is_total(),
            },
            Expr::Nary(_, args) => args.iter().all(|e| e.is_total()),
        }
    }

    /// Checks that every variable in the tree is declared in `vars`.
    pub fn check_vars(&self, vars: &VarSet) -> Result<(), String> {
        for name in self.free_vars() {
            if !vars.contains(&name) {
                return Err(name);
            }
        }
        Ok(())
    }
}

fn eval_pow(node: &Expr, base: f64, exponent: f64) -> Result<f64, EvalError> {
    let is_int = exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64;
    if is_int {
        let n = exponent as i32;
        if base == 0.0 && n < 0 {
            return Err(EvalError::Domain {
                op: "zero to negative power",
                value: base,
                node: node.to_string(),
            });
        }
        Ok(base.powi(n))
    } else {
        // real exponent: restricted to positive bases (a^r = exp(r log a))
        if base < 0.0 {
            return Err(EvalError::Domain {
                op: "real power of negative base",
                value: base,
                node: node.to_string(),
            });
        }
        if base == 0.0 && exponent < 0.0 {
            return Err(EvalError::Domain {
                op: "zero to negative power",
                value: base,
                node: node.to_string(),
            });
        }
        Ok(base.powf(exponent))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print::write_expr(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vs1() -> VarSet {
        VarSet::spatial(1)
    }

    fn vs2() -> VarSet {
        VarSet::spatial(2)
    }

    #[test]
    fn parse_shapes_match_grammar() {
        let e = parse("exp(-1/abs(x1))", &vs1()).unwrap();
        let expected = Expr::Const(1.0)
            .div(Expr::var("x1").abs())
            .neg()
            .exp();
        assert_eq!(e, expected);

        let e = parse("x1^2 + x2^2", &vs2()).unwrap();
        let expected = Expr::var("x1").pow(2.0).add(Expr::var("x2").pow(2.0));
        assert_eq!(e, expected);
    }

    #[test]
    fn parse_reports_position_of_unbalanced_paren() {
        let err = parse("exp(", &vs1()).unwrap_err();
        match err {
            ParseError::Syntax { pos, .. } => assert_eq!(pos, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_undeclared_variable() {
        let err = parse("x1 + y", &vs1()).unwrap_err();
        assert!(matches!(err, ParseError::UnknownVariable { .. }));
    }

    #[test]
    fn evaluate_basics() {
        let e = parse("x1*x2", &vs2()).unwrap();
        let v = e
            .evaluate(&Bindings::of(&[("x1", 3.0), ("x2", 4.0)]))
            .unwrap();
        assert_eq!(v, 12.0);

        let e = parse("exp(-1/abs(x1))", &vs1()).unwrap();
        let v = e.evaluate(&Bindings::of(&[("x1", 0.5)])).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-15);

        let e = parse("log(x1)", &vs1()).unwrap();
        let err = e.evaluate(&Bindings::of(&[("x1", 0.0)])).unwrap_err();
        assert!(matches!(err, EvalError::Domain { op: "log", .. }));
    }

    #[test]
    fn evaluate_unbound_variable() {
        let e = parse("x1 + x2", &vs2()).unwrap();
        let err = e.evaluate(&Bindings::of(&[("x1", 1.0)])).unwrap_err();
        assert_eq!(err, EvalError::UnboundVariable("x2".into()));
    }

    #[test]
    fn derivative_power_rule() {
        let e = parse("x1^2", &vs1()).unwrap();
        let d = e.differentiate("x1");
        assert_eq!(d, Expr::Const(2.0).mul(Expr::var("x1")));
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let e = parse("7", &vs1()).unwrap();
        assert_eq!(e.differentiate("x1"), Expr::Const(0.0));
    }

    #[test]
    fn derivative_exp_reciprocal_matches_fd() {
        // d/dx exp(-1/x) = exp(-1/x)/x^2
        let e = parse("exp(-1/x1)", &vs1()).unwrap();
        let d = e.differentiate("x1");
        for x in [0.5, 1.0, 2.0] {
            let b = Bindings::of(&[("x1", x)]);
            let sym = d.evaluate(&b).unwrap();
            let h = 1e-5 * (1.0 + x.abs());
            let fp = e.evaluate(&Bindings::of(&[("x1", x + h)])).unwrap();
            let fm = e.evaluate(&Bindings::of(&[("x1", x - h)])).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (sym - fd).abs() / (1.0 + sym.abs()) <= 1e-6,
                "x={x}: sym={sym} fd={fd}"
            );
            let exact = (-1.0f64 / x).exp() / (x * x);
            assert!((sym - exact).abs() <= 1e-12 * exact.abs());
        }
    }

    #[test]
    fn derivative_linearity_is_structural() {
        let f = parse("exp(x1)", &vs1()).unwrap();
        let g = parse("x1^3", &vs1()).unwrap();
        let combo = Expr::Const(2.5)
            .mul(f.clone())
            .add(Expr::Const(-3.0).mul(g.clone()));
        let lhs = combo.differentiate("x1");
        let rhs = Expr::Const(2.5)
            .mul(f.differentiate("x1"))
            .add(Expr::Const(-3.0).mul(g.differentiate("x1")))
            .fold_constants();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn abs_derivative_uses_sign_selector() {
        let e = parse("abs(x1)", &vs1()).unwrap();
        let d = e.differentiate("x1");
        assert_eq!(d.evaluate(&Bindings::of(&[("x1", 2.0)])).unwrap(), 1.0);
        assert_eq!(d.evaluate(&Bindings::of(&[("x1", -2.0)])).unwrap(), -1.0);
        // sign(0) = 0 at the kink
        assert_eq!(d.evaluate(&Bindings::of(&[("x1", 0.0)])).unwrap(), 0.0);
    }

    #[test]
    fn min_derivative_selects_active_branch() {
        let e = parse("min(x1, x1^2)", &vs1()).unwrap();
        let d = e.differentiate("x1");
        // x > 1: min = x, d = 1
        assert_eq!(d.evaluate(&Bindings::of(&[("x1", 2.0)])).unwrap(), 1.0);
        // 0 < x < 1: min = x^2, d = 2x
        assert_eq!(d.evaluate(&Bindings::of(&[("x1", 0.4)])).unwrap(), 0.8);
        // tie at x = 1: selectors vanish
        assert_eq!(d.evaluate(&Bindings::of(&[("x1", 1.0)])).unwrap(), 0.0);
    }

    #[test]
    fn norm_derivative() {
        let e = Expr::norm_of(&["x1", "x2"]);
        let d = e.differentiate("x1");
        let v = d
            .evaluate(&Bindings::of(&[("x1", 3.0), ("x2", 4.0)]))
            .unwrap();
        assert!((v - 0.6).abs() < 1e-15);
    }

    #[test]
    fn pos_part_eval_and_derivative() {
        let e = parse("pos(x1 - 1)", &vs1()).unwrap();
        assert_eq!(e.evaluate(&Bindings::of(&[("x1", 3.0)])).unwrap(), 2.0);
        assert_eq!(e.evaluate(&Bindings::of(&[("x1", 0.5)])).unwrap(), 0.0);
        let d = e.differentiate("x1");
        assert_eq!(d.evaluate(&Bindings::of(&[("x1", 3.0)])).unwrap(), 1.0);
        assert_eq!(d.evaluate(&Bindings::of(&[("x1", 0.5)])).unwrap(), 0.0);
    }

    #[test]
    fn fold_does_not_hide_domain_errors() {
        // 0 * (1/x1) must not fold to 0: the original errors at x1 = 0
        let e = Expr::Const(0.0).mul(Expr::Const(1.0).div(Expr::var("x1")));
        let folded = e.fold_constants();
        assert!(folded
            .evaluate(&Bindings::of(&[("x1", 0.0)]))
            .is_err());
    }
}
