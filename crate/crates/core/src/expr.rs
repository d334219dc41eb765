//! Symbolic expression trees.
//!
//! Text grammar (stable):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := number | variable | func '(' expr ')' | '(' expr ')'
//! func   := cos | sin | exp | log10 | abs
//! variable := 'x' digits            (zero-based feature index)
//! number := ['-'] digits ['.' digits] [('e' | 'E') ['+' | '-'] digits]
//! ```
//!
//! [`Expression::to_text`] parenthesizes every binary node, so parsing its
//! output reproduces the tree exactly.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryOp {
    Cos,
    Sin,
    Exp,
    Log10,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 5] = [Self::Cos, Self::Sin, Self::Exp, Self::Log10, Self::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Self::Cos => "cos",
            Self::Sin => "sin",
            Self::Exp => "exp",
            Self::Log10 => "log10",
            Self::Abs => "abs",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == s)
    }

    /// NaN marks an invalid result.
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        let y = match self {
            Self::Cos => x.cos(),
            Self::Sin => x.sin(),
            Self::Exp => x.exp(),
            Self::Log10 => {
                if x <= T::zero() {
                    return T::nan();
                }
                x.log10()
            }
            Self::Abs => x.abs(),
        };
        if y.is_finite() {
            y
        } else {
            T::nan()
        }
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 4] = [Self::Add, Self::Sub, Self::Mul, Self::Div];

    pub fn symbol(self) -> char {
        match self {
            Self::Add => '+',
            Self::Sub => '-',
            Self::Mul => '*',
            Self::Div => '/',
        }
    }

    /// NaN marks an invalid result.
    #[inline]
    pub fn apply<T: Scalar>(self, a: T, b: T) -> T {
        let y = match self {
            Self::Add => a + b,
            Self::Sub => a - b,
            Self::Mul => a * b,
            Self::Div => {
                if b == T::zero() {
                    return T::nan();
                }
                a / b
            }
        };
        if y.is_finite() {
            y
        } else {
            T::nan()
        }
    }
}

/// Operators the search may use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSet {
    pub unary: Vec<UnaryOp>,
    pub binary: Vec<BinaryOp>,
}

impl Default for OperatorSet {
    /// `{cos, sin, exp, log10, abs, +, -, *, /}`.
    fn default() -> Self {
        Self {
            unary: UnaryOp::ALL.to_vec(),
            binary: BinaryOp::ALL.to_vec(),
        }
    }
}

impl OperatorSet {
    /// The smaller unary set without `exp`.
    pub fn without_exp() -> Self {
        Self {
            unary: vec![UnaryOp::Cos, UnaryOp::Sin, UnaryOp::Log10, UnaryOp::Abs],
            binary: BinaryOp::ALL.to_vec(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.unary.is_empty() && self.binary.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expression<T> {
    Constant(T),
    Variable(usize),
    Unary(UnaryOp, Box<Expression<T>>),
    Binary(BinaryOp, Box<Expression<T>>, Box<Expression<T>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("row {row} has {got} features, expected {expected}")]
    FeatureCount {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("expression references x{index} but rows only have {features} features")]
    VariableOutOfRange { index: usize, features: usize },
    #[error("non-finite constant")]
    NonFiniteConstant,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

impl<T: Scalar> Expression<T> {
    pub fn constant(v: T) -> Self {
        Self::Constant(v)
    }

    pub fn var(index: usize) -> Self {
        Self::Variable(index)
    }

    pub fn unary(op: UnaryOp, child: Self) -> Self {
        Self::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, left: Self, right: Self) -> Self {
        Self::Binary(op, Box::new(left), Box::new(right))
    }

    /// Total node count: constants, variables and operators count 1 each.
    pub fn complexity(&self) -> usize {
        match self {
            Self::Constant(_) | Self::Variable(_) => 1,
            Self::Unary(_, c) => 1 + c.complexity(),
            Self::Binary(_, l, r) => 1 + l.complexity() + r.complexity(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Self::Constant(_) | Self::Variable(_) => 1,
            Self::Unary(_, c) => 1 + c.depth(),
            Self::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    /// Largest variable index plus one (0 for variable-free trees).
    pub fn feature_span(&self) -> usize {
        match self {
            Self::Constant(_) => 0,
            Self::Variable(i) => i + 1,
            Self::Unary(_, c) => c.feature_span(),
            Self::Binary(_, l, r) => l.feature_span().max(r.feature_span()),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant(_))
    }

    pub fn all_constants_finite(&self) -> bool {
        match self {
            Self::Constant(v) => v.is_finite(),
            Self::Variable(_) => true,
            Self::Unary(_, c) => c.all_constants_finite(),
            Self::Binary(_, l, r) => l.all_constants_finite() && r.all_constants_finite(),
        }
    }

    /// Constants in pre-order.
    pub fn constants(&self) -> Vec<T> {
        let mut out = Vec::new();
        self.collect_constants(&mut out);
        out
    }

    fn collect_constants(&self, out: &mut Vec<T>) {
        match self {
            Self::Constant(v) => out.push(*v),
            Self::Variable(_) => {}
            Self::Unary(_, c) => c.collect_constants(out),
            Self::Binary(_, l, r) => {
                l.collect_constants(out);
                r.collect_constants(out);
            }
        }
    }

    /// Copy with constants replaced, in pre-order, from `values`.
    pub fn with_constants(&self, values: &[T]) -> Self {
        let mut it = values.iter().copied();
        let out = self.replace_constants(&mut it);
        debug_assert!(it.next().is_none(), "too many constants supplied");
        out
    }

    fn replace_constants(&self, it: &mut impl Iterator<Item = T>) -> Self {
        match self {
            Self::Constant(v) => Self::Constant(it.next().unwrap_or(*v)),
            Self::Variable(i) => Self::Variable(*i),
            Self::Unary(op, c) => Self::unary(*op, c.replace_constants(it)),
            Self::Binary(op, l, r) => {
                let l = l.replace_constants(it);
                Self::binary(*op, l, r.replace_constants(it))
            }
        }
    }

    /// Pre-order node `idx`.
    pub fn node(&self, idx: usize) -> Option<&Self> {
        let mut counter = idx;
        self.find(&mut counter)
    }

    fn find(&self, counter: &mut usize) -> Option<&Self> {
        if *counter == 0 {
            return Some(self);
        }
        *counter -= 1;
        match self {
            Self::Constant(_) | Self::Variable(_) => None,
            Self::Unary(_, c) => c.find(counter),
            Self::Binary(_, l, r) => l.find(counter).or_else(|| r.find(counter)),
        }
    }

    /// Copy with pre-order node `idx` replaced by `sub`.
    pub fn replace_node(&self, idx: usize, sub: Self) -> Self {
        let mut counter = idx;
        let mut sub = Some(sub);
        self.replace_at(&mut counter, &mut sub)
    }

    fn replace_at(&self, counter: &mut usize, sub: &mut Option<Self>) -> Self {
        if sub.is_none() {
            return self.clone();
        }
        if *counter == 0 {
            return sub.take().expect("checked above");
        }
        *counter -= 1;
        match self {
            Self::Constant(_) | Self::Variable(_) => self.clone(),
            Self::Unary(op, c) => Self::unary(*op, c.replace_at(counter, sub)),
            Self::Binary(op, l, r) => {
                let l = l.replace_at(counter, sub);
                Self::binary(*op, l, r.replace_at(counter, sub))
            }
        }
    }

    /// Depth of pre-order node `idx` (root has depth 1).
    pub fn node_depth(&self, idx: usize) -> Option<usize> {
        fn walk<T>(e: &Expression<T>, counter: &mut usize, d: usize) -> Option<usize> {
            if *counter == 0 {
                return Some(d);
            }
            *counter -= 1;
            match e {
                Expression::Constant(_) | Expression::Variable(_) => None,
                Expression::Unary(_, c) => walk(c, counter, d + 1),
                Expression::Binary(_, l, r) => {
                    walk(l, counter, d + 1).or_else(|| walk(r, counter, d + 1))
                }
            }
        }
        let mut counter = idx;
        walk(self, &mut counter, 1)
    }

    /// Evaluates one row; `None` marks an invalid value.
    pub fn eval_row(&self, row: &[T]) -> Option<T> {
        let v = self.eval_raw(row);
        v.is_finite().then_some(v)
    }

    fn eval_raw(&self, row: &[T]) -> T {
        match self {
            Self::Constant(v) => *v,
            Self::Variable(i) => row.get(*i).copied().unwrap_or_else(T::nan),
            Self::Unary(op, c) => op.apply(c.eval_raw(row)),
            Self::Binary(op, l, r) => op.apply(l.eval_raw(row), r.eval_raw(row)),
        }
    }

    /// Pointwise evaluation. Invalid rows (division by zero, log of a
    /// non-positive value, overflow) come back as `None`.
    pub fn evaluate<R: AsRef<[T]>>(&self, rows: &[R]) -> Result<Vec<Option<T>>, ExprError> {
        let expected = rows.first().map_or(0, |r| r.as_ref().len());
        for (i, r) in rows.iter().enumerate() {
            let got = r.as_ref().len();
            if got != expected {
                return Err(ExprError::FeatureCount {
                    row: i,
                    got,
                    expected,
                });
            }
        }
        let span = self.feature_span();
        if !rows.is_empty() && span > expected {
            return Err(ExprError::VariableOutOfRange {
                index: span - 1,
                features: expected,
            });
        }
        Ok(rows.iter().map(|r| self.eval_row(r.as_ref())).collect())
    }

    /// Column-wise evaluation used by the search. `columns[j][i]` is feature `j`
    /// of row `i`; invalid rows are NaN. Variables must be in range.
    pub fn eval_columns(&self, columns: &[Vec<T>], n_rows: usize) -> Vec<T> {
        match self {
            Self::Constant(v) => vec![*v; n_rows],
            Self::Variable(i) => columns[*i].clone(),
            Self::Unary(op, c) => {
                let mut v = c.eval_columns(columns, n_rows);
                for x in v.iter_mut() {
                    *x = op.apply(*x);
                }
                v
            }
            Self::Binary(op, l, r) => {
                let mut a = l.eval_columns(columns, n_rows);
                let b = r.eval_columns(columns, n_rows);
                for (x, &y) in a.iter_mut().zip(&b) {
                    *x = op.apply(*x, y);
                }
                a
            }
        }
    }

    /// Collapses constant-only subtrees whose value is valid, and removes
    /// `* 1`, `/ 1`, `+ 0` and `- 0`. Values on valid rows are unchanged and
    /// complexity never grows.
    pub fn fold_constants(&self) -> Self {
        match self {
            Self::Constant(_) | Self::Variable(_) => self.clone(),
            Self::Unary(op, c) => {
                let c = c.fold_constants();
                if let Self::Constant(v) = c {
                    let y = op.apply(v);
                    if y.is_finite() {
                        return Self::Constant(y);
                    }
                }
                Self::unary(*op, c)
            }
            Self::Binary(op, l, r) => {
                let l = l.fold_constants();
                let r = r.fold_constants();
                if let (Self::Constant(a), Self::Constant(b)) = (&l, &r) {
                    let y = op.apply(*a, *b);
                    if y.is_finite() {
                        return Self::Constant(y);
                    }
                }
                let is = |e: &Self, k: T| matches!(e, Self::Constant(v) if *v == k);
                match op {
                    BinaryOp::Mul if is(&l, T::one()) => r,
                    BinaryOp::Mul if is(&r, T::one()) => l,
                    BinaryOp::Div if is(&r, T::one()) => l,
                    BinaryOp::Add if is(&l, T::zero()) => r,
                    BinaryOp::Add | BinaryOp::Sub if is(&r, T::zero()) => l,
                    _ => Self::binary(*op, l, r),
                }
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_text(&mut s);
        s
    }

    fn write_text(&self, s: &mut String) {
        match self {
            Self::Constant(v) => s.push_str(&format_constant(*v)),
            Self::Variable(i) => {
                s.push('x');
                s.push_str(&i.to_string());
            }
            Self::Unary(op, c) => {
                s.push_str(op.name());
                s.push('(');
                c.write_text(s);
                s.push(')');
            }
            Self::Binary(op, l, r) => {
                s.push('(');
                l.write_text(s);
                s.push(' ');
                s.push(op.symbol());
                s.push(' ');
                r.write_text(s);
                s.push(')');
            }
        }
    }

    /// Same structure as [`to_text`](Self::to_text) with constants rounded to
    /// 5 significant digits, for tables.
    pub fn to_display_text(&self) -> String {
        match self {
            Self::Constant(v) => format!("{}", round_sig(v.as_f64(), 5)),
            Self::Variable(i) => format!("x{i}"),
            Self::Unary(op, c) => format!("{}({})", op.name(), c.to_display_text()),
            Self::Binary(op, l, r) => format!(
                "({} {} {})",
                l.to_display_text(),
                op.symbol(),
                r.to_display_text()
            ),
        }
    }

    pub fn parse_text(s: &str) -> Result<Self, ParseError> {
        Parser::new(s).parse()
    }
}

fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - mag);
    (x * scale).round() / scale
}

/// Fixed notation with at least nine significant digits when the magnitude
/// allows, scientific otherwise; always an exact round trip.
pub fn format_constant<T: Scalar>(v: T) -> String {
    let roundtrips = |s: &str| s.parse::<T>().ok() == Some(v);
    let a = v.abs().as_f64();
    if a == 0.0 {
        return "0.00000000".to_string();
    }
    let exp10 = a.log10().floor() as i32;
    if (-4..15).contains(&exp10) {
        for sig in 9..=17 {
            let decimals = (sig - 1 - exp10).max(0) as usize;
            let s = format!("{v:.decimals$}");
            if roundtrips(&s) {
                return s;
            }
        }
    }
    let s = format!("{v:.8e}");
    if roundtrips(&s) {
        return s;
    }
    format!("{v:e}")
}

impl<T: Scalar> fmt::Display for Expression<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl<T: Scalar> std::str::FromStr for Expression<T> {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_text(s)
    }
}

impl<T: Scalar> Serialize for Expression<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_text())
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Expression<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::parse_text(&s).map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        }
    }

    fn err<X>(&self, pos: usize, msg: impl Into<String>) -> Result<X, ParseError> {
        Err(ParseError {
            pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        match self.peek() {
            Some(b) if b == c => {
                self.pos += 1;
                Ok(())
            }
            Some(b) => self.err(self.pos, format!("expected '{}', found '{}'", c as char, b as char)),
            None => self.err(self.pos, format!("expected '{}', found end of input", c as char)),
        }
    }

    fn parse<T: Scalar>(mut self) -> Result<Expression<T>, ParseError> {
        let e = self.expr()?;
        if let Some(b) = self.peek() {
            return self.err(self.pos, format!("unexpected '{}'", b as char));
        }
        Ok(e)
    }

    fn expr<T: Scalar>(&mut self) -> Result<Expression<T>, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinaryOp::Add,
                Some(b'-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expression::binary(op, lhs, rhs);
        }
    }

    fn term<T: Scalar>(&mut self) -> Result<Expression<T>, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinaryOp::Mul,
                Some(b'/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expression::binary(op, lhs, rhs);
        }
    }

    fn factor<T: Scalar>(&mut self) -> Result<Expression<T>, ParseError> {
        match self.peek() {
            None => self.err(self.pos, "unexpected end of input"),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(b) if b == b'-' || b == b'.' || b.is_ascii_digit() => self.number(),
            Some(b) if b.is_ascii_alphabetic() => self.ident(),
            Some(b) => self.err(self.pos, format!("unexpected '{}'", b as char)),
        }
    }

    fn number<T: Scalar>(&mut self) -> Result<Expression<T>, ParseError> {
        let start = self.pos;
        let mut i = self.pos;
        let b = self.bytes;
        if i < b.len() && b[i] == b'-' {
            i += 1;
        }
        let digits_start = i;
        while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
            i += 1;
        }
        if i == digits_start {
            return self.err(start, "expected a number after '-'");
        }
        if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
            let mut j = i + 1;
            if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                j += 1;
            }
            let exp_digits = j;
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            if j > exp_digits {
                i = j;
            }
        }
        let text = &self.src[start..i];
        match text.parse::<T>() {
            Ok(v) if v.is_finite() => {
                self.pos = i;
                Ok(Expression::Constant(v))
            }
            _ => self.err(start, format!("invalid number '{text}'")),
        }
    }

    fn ident<T: Scalar>(&mut self) -> Result<Expression<T>, ParseError> {
        let start = self.pos;
        let mut i = self.pos;
        while i < self.bytes.len() && (self.bytes[i].is_ascii_alphanumeric() || self.bytes[i] == b'_') {
            i += 1;
        }
        let name = &self.src[start..i];
        self.pos = i;
        if let Some(op) = UnaryOp::from_name(name) {
            self.expect(b'(')?;
            let arg = self.expr()?;
            self.expect(b')')?;
            return Ok(Expression::unary(op, arg));
        }
        if let Some(idx) = name.strip_prefix('x') {
            if !idx.is_empty() && idx.bytes().all(|c| c.is_ascii_digit()) {
                if let Ok(i) = idx.parse::<usize>() {
                    return Ok(Expression::Variable(i));
                }
            }
        }
        self.err(start, format!("unknown identifier '{name}'"))
    }
}

/// Size and depth caps for generated trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeLimits {
    pub max_size: usize,
    pub max_depth: usize,
}

impl Default for TreeLimits {
    fn default() -> Self {
        Self {
            max_size: 10,
            max_depth: 10,
        }
    }
}

impl TreeLimits {
    pub fn admits<T: Scalar>(&self, e: &Expression<T>) -> bool {
        e.complexity() <= self.max_size && e.depth() <= self.max_depth
    }
}

/// Random leaf: a feature with probability 1/2 (when features exist), else a
/// constant uniform in `[-2, 2]`.
pub fn random_leaf<T: Scalar, R: Rng + ?Sized>(rng: &mut R, feature_count: usize) -> Expression<T> {
    if feature_count > 0 && rng.random_bool(0.5) {
        Expression::Variable(rng.random_range(0..feature_count))
    } else {
        Expression::Constant(T::lit(rng.random_range(-2.0..=2.0)))
    }
}

/// Random tree with at most `limits.max_size` nodes and `limits.max_depth` levels.
///
/// A target size is drawn uniformly from `1..=max_size` and filled top-down.
pub fn random_expr<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    limits: TreeLimits,
    feature_count: usize,
    ops: &OperatorSet,
) -> Expression<T> {
    let max_size = limits.max_size.max(1);
    let target = rng.random_range(1..=max_size);
    grow(rng, target, limits.max_depth.max(1), feature_count, ops)
}

fn grow<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    budget: usize,
    depth_left: usize,
    feature_count: usize,
    ops: &OperatorSet,
) -> Expression<T> {
    let can_unary = budget >= 2 && depth_left >= 2 && !ops.unary.is_empty();
    let can_binary = budget >= 3 && depth_left >= 2 && !ops.binary.is_empty();
    match (can_unary, can_binary) {
        (false, false) => random_leaf(rng, feature_count),
        (true, false) => unary_node(rng, budget, depth_left, feature_count, ops),
        (false, true) => binary_node(rng, budget, depth_left, feature_count, ops),
        (true, true) => {
            if rng.random_bool(0.35) {
                unary_node(rng, budget, depth_left, feature_count, ops)
            } else {
                binary_node(rng, budget, depth_left, feature_count, ops)
            }
        }
    }
}

fn unary_node<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    budget: usize,
    depth_left: usize,
    feature_count: usize,
    ops: &OperatorSet,
) -> Expression<T> {
    let op = ops.unary[rng.random_range(0..ops.unary.len())];
    Expression::unary(op, grow(rng, budget - 1, depth_left - 1, feature_count, ops))
}

fn binary_node<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    budget: usize,
    depth_left: usize,
    feature_count: usize,
    ops: &OperatorSet,
) -> Expression<T> {
    let op = ops.binary[rng.random_range(0..ops.binary.len())];
    let left_budget = rng.random_range(1..=budget - 2);
    let left = grow(rng, left_budget, depth_left - 1, feature_count, ops);
    let right = grow(rng, budget - 1 - left_budget, depth_left - 1, feature_count, ops);
    Expression::binary(op, left, right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    type E = Expression<f64>;

    fn x0() -> E {
        E::var(0)
    }
    fn c(v: f64) -> E {
        E::constant(v)
    }

    #[test]
    fn evaluate_examples() {
        let e = E::unary(UnaryOp::Cos, x0());
        assert_eq!(e.evaluate(&[vec![0.0]]).unwrap(), vec![Some(1.0)]);
        let e = E::binary(BinaryOp::Div, x0(), x0());
        assert_eq!(e.evaluate(&[vec![0.0], vec![2.0]]).unwrap(), vec![None, Some(1.0)]);
        let e = E::unary(UnaryOp::Log10, E::unary(UnaryOp::Abs, x0()));
        let v = e.evaluate(&[vec![-10.0]]).unwrap()[0].unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        let e = E::unary(UnaryOp::Exp, x0());
        assert_eq!(e.evaluate(&[vec![1e4]]).unwrap(), vec![None]);
    }

    #[test]
    fn evaluate_checks_shapes() {
        let e = E::binary(BinaryOp::Add, x0(), E::var(1));
        assert!(matches!(
            e.evaluate(&[vec![1.0, 2.0], vec![1.0]]),
            Err(ExprError::FeatureCount { row: 1, .. })
        ));
        assert!(matches!(
            e.evaluate(&[vec![1.0]]),
            Err(ExprError::VariableOutOfRange { index: 1, .. })
        ));
    }

    #[test]
    fn complexity_examples() {
        assert_eq!(c(0.9599).complexity(), 1);
        assert_eq!(E::binary(BinaryOp::Add, x0(), c(1.0)).complexity(), 3);
        // 0.53076 * sin(sin(0.12336 * x0 + x1))
        let inner = E::binary(
            BinaryOp::Add,
            E::binary(BinaryOp::Mul, c(0.12336), x0()),
            E::var(1),
        );
        let e = E::binary(
            BinaryOp::Mul,
            c(0.53076),
            E::unary(UnaryOp::Sin, E::unary(UnaryOp::Sin, inner)),
        );
        assert_eq!(e.complexity(), 9);
        let parsed: E = "0.53076 * sin(sin(0.12336 * x0 + x1))".parse().unwrap();
        assert_eq!(parsed, e);
    }

    #[test]
    fn text_examples() {
        assert_eq!(c(0.9599).to_text(), "0.959900000");
        assert_eq!(c(2.0).to_text(), "2.00000000");
        let err = E::parse_text("arccos(x0)").unwrap_err();
        assert_eq!(err.pos, 0);
        assert!(err.msg.contains("arccos"));
        let err = E::parse_text("(x0 + ").unwrap_err();
        assert_eq!(err.pos, 6);
        assert!(E::parse_text("x0 ) ").is_err());
        assert!(E::parse_text("cos x0").is_err());
    }

    #[test]
    fn text_precision_and_negatives() {
        for v in [1e-20, -3.25e12, 0.1 + 0.2, -0.0012345678901, 123456.789, 7e300] {
            let s = format_constant(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        let e = E::binary(BinaryOp::Sub, c(-1.5), E::binary(BinaryOp::Mul, c(-2.0), x0()));
        assert_eq!(E::parse_text(&e.to_text()).unwrap(), e);
    }

    #[test]
    fn fold_examples() {
        let e = E::binary(BinaryOp::Mul, E::binary(BinaryOp::Add, c(2.0), c(3.0)), x0());
        assert_eq!(e.fold_constants(), E::binary(BinaryOp::Mul, c(5.0), x0()));

        let e = E::binary(BinaryOp::Add, E::unary(UnaryOp::Log10, c(-1.0)), x0());
        assert_eq!(e.fold_constants(), e);

        let e = E::binary(
            BinaryOp::Mul,
            E::unary(UnaryOp::Cos, c(0.0)),
            E::unary(UnaryOp::Cos, x0()),
        );
        let folded = e.fold_constants();
        assert_eq!(folded, E::unary(UnaryOp::Cos, x0()));
        let grid: Vec<Vec<f64>> = (0..100).map(|i| vec![-3.0 + 0.06 * i as f64]).collect();
        assert_eq!(e.evaluate(&grid).unwrap(), folded.evaluate(&grid).unwrap());
    }

    #[test]
    fn random_expr_examples() {
        let ops = OperatorSet::default();
        let one = TreeLimits {
            max_size: 1,
            max_depth: 10,
        };
        let mut rng = stream(1, &[]);
        for _ in 0..200 {
            let e: E = random_expr(&mut rng, one, 2, &ops);
            assert!(matches!(e, E::Constant(_) | E::Variable(_)));
        }
        let a: E = random_expr(&mut stream(9, &[3]), TreeLimits::default(), 2, &ops);
        let b: E = random_expr(&mut stream(9, &[3]), TreeLimits::default(), 2, &ops);
        assert_eq!(a, b);
        let mut rng = stream(2, &[]);
        for _ in 0..10_000 {
            let e: E = random_expr(&mut rng, TreeLimits::default(), 2, &ops);
            assert!(e.complexity() <= 10);
            assert!(e.depth() <= 10);
        }
    }

    #[test]
    fn node_editing() {
        let e: E = "(cos(x0) + (2.0 * x1))".parse().unwrap();
        assert_eq!(e.node(0), Some(&e));
        assert_eq!(e.node(2), Some(&x0()));
        assert_eq!(e.node(4), Some(&c(2.0)));
        assert_eq!(e.node(6), None);
        assert_eq!(e.node_depth(4), Some(3));
        let r = e.replace_node(3, x0());
        assert_eq!(r.to_text(), "(cos(x0) + x0)");
        assert_eq!(e.constants(), vec![2.0]);
        assert_eq!(e.with_constants(&[4.0]).constants(), vec![4.0]);
    }

    #[test]
    fn single_precision_trees() {
        let e: Expression<f32> = "(0.5 * cos(x0))".parse().unwrap();
        let v = e.eval_row(&[0.0f32]).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(Expression::<f32>::parse_text(&e.to_text()).unwrap(), e);
    }

    #[test]
    fn serde_uses_text() {
        let e: E = "(x0 / 3.0)".parse().unwrap();
        let j = serde_json::to_string(&e).unwrap();
        assert_eq!(j, "\"(x0 / 3.00000000)\"");
        let back: E = serde_json::from_str(&j).unwrap();
        assert_eq!(back, e);
    }

    proptest! {
        #[test]
        fn text_round_trip(seed in any::<u64>()) {
            let mut rng = stream(seed, &[]);
            let e: E = random_expr(&mut rng, TreeLimits { max_size: 15, max_depth: 8 }, 3, &OperatorSet::default());
            prop_assert_eq!(E::parse_text(&e.to_text()).unwrap(), e);
        }

        #[test]
        fn folding_preserves_values(seed in any::<u64>()) {
            let mut rng = stream(seed, &[1]);
            let e: E = random_expr(&mut rng, TreeLimits::default(), 1, &OperatorSet::default());
            let f = e.fold_constants();
            prop_assert!(f.complexity() <= e.complexity());
            for i in 0..25 {
                let x = -2.0 + 0.17 * i as f64;
                if let Some(a) = e.eval_row(&[x]) {
                    let b = f.eval_row(&[x]);
                    prop_assert!(b.is_some());
                    let b = b.unwrap();
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
                }
            }
        }
    }
}
