//! Test functions `ψ(v, x)` from a small closed grammar.
//!
//! ```text
//! expr   := term (('+' | '*') term)*        '*' binds tighter than '+'
//! term   := number '*' term                 scaling
//!         | number                          constant
//!         | 'ind(v:' interval ';x:' box ')' indicator of I × Λ
//!         | 'vnorm^' int                    |v|^p
//!         | 'lin(' vector ')'               ⟨h, v⟩
//!         | 'xbox(' box ')'                 1_Λ(x)
//!         | '(' expr ')'
//! box    := interval ('x' interval)*
//! ```
//!
//! Whitespace is insignificant and numbers are plain decimals with an
//! optional leading minus sign.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{dot, norm, MarkAnnulus, PositionWindow};
use crate::error::{Error, Result};
use crate::intensity::{self, sphere_area, AngularRule, IntensitySpec};
use crate::sum::CompensatedSum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FunctionSpec {
    Const(f64),
    /// `1_I(v) 1_Λ(x)`.
    IndicatorPhase {
        marks: MarkAnnulus,
        window: PositionWindow,
    },
    /// `|v|^p`.
    RadialMark(u32),
    /// `⟨h, v⟩`.
    LinearMark(Vec<f64>),
    /// `1_Λ(x)`.
    PositionBump(PositionWindow),
    Sum(Box<FunctionSpec>, Box<FunctionSpec>),
    Product(Box<FunctionSpec>, Box<FunctionSpec>),
    Scale(f64, Box<FunctionSpec>),
}

impl FunctionSpec {
    pub fn indicator(marks: MarkAnnulus, window: PositionWindow) -> Self {
        FunctionSpec::IndicatorPhase { marks, window }
    }

    pub fn scale(self, c: f64) -> Self {
        FunctionSpec::Scale(c, Box::new(self))
    }

    pub fn plus(self, other: FunctionSpec) -> Self {
        FunctionSpec::Sum(Box::new(self), Box::new(other))
    }

    pub fn times(self, other: FunctionSpec) -> Self {
        FunctionSpec::Product(Box::new(self), Box::new(other))
    }

    pub fn evaluate(&self, v: &[f64], x: &[f64]) -> f64 {
        use FunctionSpec::*;
        match self {
            Const(c) => *c,
            IndicatorPhase { marks, window } => {
                if marks.contains(v) && window.contains(x) {
                    1.0
                } else {
                    0.0
                }
            }
            RadialMark(p) => norm(v).powi(*p as i32),
            LinearMark(h) => dot(h, v),
            PositionBump(window) => {
                if window.contains(x) {
                    1.0
                } else {
                    0.0
                }
            }
            Sum(a, b) => a.evaluate(v, x) + b.evaluate(v, x),
            Product(a, b) => a.evaluate(v, x) * b.evaluate(v, x),
            Scale(c, a) => c * a.evaluate(v, x),
        }
    }

    /// True when the value depends on the velocity argument.
    pub fn depends_on_marks(&self) -> bool {
        use FunctionSpec::*;
        match self {
            Const(_) | PositionBump(_) => false,
            IndicatorPhase { .. } | RadialMark(_) | LinearMark(_) => true,
            Sum(a, b) | Product(a, b) => a.depends_on_marks() || b.depends_on_marks(),
            Scale(_, a) => a.depends_on_marks(),
        }
    }

    /// Fails if any leaf has a dimension other than `d`.
    pub fn check_dim(&self, d: usize) -> Result<()> {
        use FunctionSpec::*;
        let found = match self {
            Const(_) | RadialMark(_) => return Ok(()),
            IndicatorPhase { window, .. } | PositionBump(window) => window.dim(),
            LinearMark(h) => h.len(),
            Sum(a, b) | Product(a, b) => {
                a.check_dim(d)?;
                return b.check_dim(d);
            }
            Scale(_, a) => return a.check_dim(d),
        };
        if found == d {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: d, found })
        }
    }

    /// Conservative range `[lo, hi]` of `f` on the phase window of `sigma`,
    /// by interval arithmetic over the tree.
    pub fn range_on(&self, sigma: &IntensitySpec) -> (f64, f64) {
        use FunctionSpec::*;
        let (eps, rmax) = (sigma.marks.eps(), sigma.marks.rmax());
        match self {
            Const(c) => (*c, *c),
            IndicatorPhase { .. } | PositionBump(_) => (0.0, 1.0),
            RadialMark(p) => (eps.powi(*p as i32), rmax.powi(*p as i32)),
            LinearMark(h) => {
                let m = norm(h) * rmax;
                (-m, m)
            }
            Sum(a, b) => {
                let (a0, a1) = a.range_on(sigma);
                let (b0, b1) = b.range_on(sigma);
                (a0 + b0, a1 + b1)
            }
            Product(a, b) => {
                let (a0, a1) = a.range_on(sigma);
                let (b0, b1) = b.range_on(sigma);
                let c = [a0 * b0, a0 * b1, a1 * b0, a1 * b1];
                (
                    c.iter().copied().fold(f64::INFINITY, f64::min),
                    c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                )
            }
            Scale(c, a) => {
                let (a0, a1) = a.range_on(sigma);
                if *c >= 0.0 {
                    (c * a0, c * a1)
                } else {
                    (c * a1, c * a0)
                }
            }
        }
    }

    /// Upper bound on `|f|` over the phase window of `sigma`.
    pub fn sup_abs_on(&self, sigma: &IntensitySpec) -> f64 {
        let (lo, hi) = self.range_on(sigma);
        lo.abs().max(hi.abs())
    }

    fn collect_windows<'a>(&'a self, out: &mut Vec<&'a PositionWindow>) {
        use FunctionSpec::*;
        match self {
            IndicatorPhase { window, .. } | PositionBump(window) => out.push(window),
            Sum(a, b) | Product(a, b) => {
                a.collect_windows(out);
                b.collect_windows(out);
            }
            Scale(_, a) => a.collect_windows(out),
            _ => {}
        }
    }

    fn collect_radii(&self, out: &mut Vec<f64>) {
        use FunctionSpec::*;
        match self {
            IndicatorPhase { marks, .. } => {
                out.push(marks.eps());
                out.push(marks.rmax());
            }
            Sum(a, b) | Product(a, b) => {
                a.collect_radii(out);
                b.collect_radii(out);
            }
            Scale(_, a) => a.collect_radii(out),
            _ => {}
        }
    }

    fn monomials(&self) -> Vec<Monomial> {
        use FunctionSpec::*;
        match self {
            Const(c) => vec![Monomial::constant(*c)],
            IndicatorPhase { marks, window } => vec![Monomial {
                marks: vec![*marks],
                windows: vec![window.clone()],
                ..Monomial::constant(1.0)
            }],
            RadialMark(p) => vec![Monomial {
                radial_power: *p,
                ..Monomial::constant(1.0)
            }],
            LinearMark(h) => vec![Monomial {
                linear: vec![h.clone()],
                ..Monomial::constant(1.0)
            }],
            PositionBump(w) => vec![Monomial {
                windows: vec![w.clone()],
                ..Monomial::constant(1.0)
            }],
            Sum(a, b) => {
                let mut out = a.monomials();
                out.extend(b.monomials());
                out
            }
            Product(a, b) => {
                let left = a.monomials();
                let right = b.monomials();
                let mut out = Vec::with_capacity(left.len() * right.len());
                for l in &left {
                    for r in &right {
                        out.push(l.times(r));
                    }
                }
                out
            }
            Scale(c, a) => {
                let mut out = a.monomials();
                for m in out.iter_mut() {
                    m.coef *= c;
                }
                out
            }
        }
    }
}

/// `c · |v|^P · Π⟨h_j, v⟩ · Π 1_{I_k}(v) · Π 1_{Λ_l}(x)`.
#[derive(Debug, Clone)]
struct Monomial {
    coef: f64,
    radial_power: u32,
    linear: Vec<Vec<f64>>,
    marks: Vec<MarkAnnulus>,
    windows: Vec<PositionWindow>,
}

impl Monomial {
    fn constant(coef: f64) -> Self {
        Monomial {
            coef,
            radial_power: 0,
            linear: Vec::new(),
            marks: Vec::new(),
            windows: Vec::new(),
        }
    }

    fn times(&self, other: &Monomial) -> Monomial {
        let cat = |a: &[Vec<f64>], b: &[Vec<f64>]| a.iter().chain(b).cloned().collect();
        Monomial {
            coef: self.coef * other.coef,
            radial_power: self.radial_power + other.radial_power,
            linear: cat(&self.linear, &other.linear),
            marks: self.marks.iter().chain(&other.marks).copied().collect(),
            windows: self.windows.iter().chain(&other.windows).cloned().collect(),
        }
    }
}

/// Sum over perfect matchings of `Π ⟨h_a, h_b⟩`.
fn pairing_sum(hs: &[&[f64]]) -> f64 {
    match hs.len() {
        0 => 1.0,
        n if n % 2 == 1 => 0.0,
        _ => {
            let first = hs[0];
            let mut total = 0.0;
            for j in 1..hs.len() {
                let rest: Vec<&[f64]> = hs[1..]
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i + 1 != j)
                    .map(|(_, h)| *h)
                    .collect();
                total += dot(first, hs[j]) * pairing_sum(&rest);
            }
            total
        }
    }
}

/// `∫ Π_j ⟨h_j, u⟩ dS(u)` over the unit sphere or its `u_1 > 0` half.
fn angular_product_integral(d: usize, linear: &[Vec<f64>], one_sided: bool) -> f64 {
    let k = linear.len();
    if k.is_multiple_of(2) {
        // uniform moments: E[Π⟨h_j,u⟩] = Σ_pairings Π⟨h_a,h_b⟩ / (d(d+2)…(d+k-2));
        // even products are symmetric under u ↦ -u, so the half sphere gets half
        let refs: Vec<&[f64]> = linear.iter().map(|h| h.as_slice()).collect();
        let denom: f64 = (0..k / 2).map(|i| (d + 2 * i) as f64).product();
        let full = sphere_area(d) * pairing_sum(&refs) / denom;
        if one_sided {
            0.5 * full
        } else {
            full
        }
    } else if !one_sided {
        0.0
    } else {
        let rule = AngularRule::new(d, true);
        rule.directions
            .iter()
            .zip(&rule.weights)
            .map(|(u, w)| w * linear.iter().map(|h| dot(h, u)).product::<f64>())
            .sum()
    }
}

/// `∫_{I×Λ} f(v, x) λ(dv) m(dx)` for a grammar function.
///
/// Expands `f` into monomials; each factorizes into a position part (volume
/// of a box intersection, exact) and a mark part (radial quadrature times an
/// exact angular moment).
pub fn integrate_sigma(f: &FunctionSpec, sigma: &IntensitySpec) -> Result<f64> {
    f.check_dim(sigma.d())?;
    let d = sigma.d();
    let mut total = CompensatedSum::new();
    for m in f.monomials() {
        if m.coef == 0.0 {
            continue;
        }
        let mut window = Some(sigma.window.clone());
        for w in &m.windows {
            window = window.and_then(|cur| cur.intersect(w));
        }
        let volume = window.map_or(0.0, |w| w.volume());
        if volume == 0.0 {
            continue;
        }
        let mut lo = sigma.marks.eps();
        let mut hi = sigma.marks.rmax();
        let mut one_sided = sigma.marks.is_one_sided();
        for mk in &m.marks {
            lo = lo.max(mk.eps());
            hi = hi.min(mk.rmax());
            one_sided |= mk.is_one_sided();
        }
        if lo >= hi {
            continue;
        }
        let angular = angular_product_integral(d, &m.linear, one_sided);
        if angular == 0.0 {
            continue;
        }
        let power = m.radial_power + m.linear.len() as u32;
        let radial = intensity::radial_integral(&sigma.law, power, lo, hi)?;
        total.add(m.coef * volume * angular * radial);
    }
    Ok(total.value())
}

/// `∫_{I×Λ} T(f(v, x)) λ(dv) m(dx)` for a pointwise transform `T`.
///
/// The window is cut into cells on which every box indicator of `f` is
/// constant; on each cell the mark integral is done by
/// [`intensity::integrate_marks`] at the cell center.
pub fn integrate_sigma_transformed<T>(
    f: &FunctionSpec,
    sigma: &IntensitySpec,
    transform: T,
) -> Result<f64>
where
    T: Fn(f64) -> f64,
{
    f.check_dim(sigma.d())?;
    let mut windows = Vec::new();
    f.collect_windows(&mut windows);
    let mut radii = Vec::new();
    f.collect_radii(&mut radii);
    let cells = position_cells(&sigma.window, &windows);
    let mut total = CompensatedSum::new();
    for (center, volume) in cells {
        if volume == 0.0 {
            continue;
        }
        let mark_integral = intensity::integrate_marks(&sigma.law, &sigma.marks, &radii, |v| {
            transform(f.evaluate(v, &center))
        })?;
        total.add(volume * mark_integral);
    }
    Ok(total.value())
}

/// Splits `base` along every face of `windows`; returns (center, volume).
pub(crate) fn position_cells(
    base: &PositionWindow,
    windows: &[&PositionWindow],
) -> Vec<(Vec<f64>, f64)> {
    let d = base.dim();
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let (lo, hi) = (base.lower()[k], base.upper()[k]);
            let mut cuts = vec![lo, hi];
            for w in windows {
                for c in [w.lower()[k], w.upper()[k]] {
                    if c > lo && c < hi {
                        cuts.push(c);
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            cuts
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; d];
    if axes.iter().any(|a| a.len() < 2) {
        return out;
    }
    loop {
        let mut center = Vec::with_capacity(d);
        let mut volume = 1.0;
        for k in 0..d {
            let (a, b) = (axes[k][idx[k]], axes[k][idx[k] + 1]);
            center.push(0.5 * (a + b));
            volume *= b - a;
        }
        out.push((center, volume));
        let mut k = 0;
        loop {
            if k == d {
                return out;
            }
            idx[k] += 1;
            if idx[k] + 1 < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// rendering

fn write_interval(f: &mut fmt::Formatter<'_>, a: f64, b: f64) -> fmt::Result {
    write!(f, "[{a},{b}]")
}

fn write_box(f: &mut fmt::Formatter<'_>, w: &PositionWindow) -> fmt::Result {
    for (k, (a, b)) in w.lower().iter().zip(w.upper()).enumerate() {
        if k > 0 {
            write!(f, "x")?;
        }
        write_interval(f, *a, *b)?;
    }
    Ok(())
}

impl FunctionSpec {
    fn fmt_factor(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use FunctionSpec::*;
        match self {
            Const(c) => write!(f, "({c})"),
            Sum(..) | Product(..) => write!(f, "({self})"),
            _ => write!(f, "{self}"),
        }
    }
}

impl fmt::Display for FunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use FunctionSpec::*;
        match self {
            Const(c) => write!(f, "{c}"),
            IndicatorPhase { marks, window } => {
                write!(f, "ind(v:")?;
                write_interval(f, marks.eps(), marks.rmax())?;
                write!(f, "; x:")?;
                write_box(f, window)?;
                write!(f, ")")
            }
            RadialMark(p) => write!(f, "vnorm^{p}"),
            LinearMark(h) => {
                write!(f, "lin(")?;
                for (i, c) in h.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ")")
            }
            PositionBump(w) => {
                write!(f, "xbox(")?;
                write_box(f, w)?;
                write!(f, ")")
            }
            Sum(a, b) => {
                write!(f, "{a} + ")?;
                match **b {
                    Sum(..) => write!(f, "({b})"),
                    _ => write!(f, "{b}"),
                }
            }
            Product(a, b) => {
                match **a {
                    Sum(..) | Const(_) => write!(f, "({a})")?,
                    _ => write!(f, "{a}")?,
                }
                write!(f, " * ")?;
                b.fmt_factor(f)
            }
            Scale(c, a) => {
                write!(f, "{c}*")?;
                a.fmt_factor(f)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// parsing

/// Parses a function from its textual form.
pub fn parse_function(text: &str) -> Result<FunctionSpec> {
    let mut p = Parser { src: text, pos: 0 };
    let f = p.expr()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(f)
}

impl std::str::FromStr for FunctionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_function(s)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn syntax(&self, message: &str) -> Error {
        Error::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_tok(&mut self) -> Option<char> {
        self.skip_ws();
        self.peek()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek_tok() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.syntax(&format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<FunctionSpec> {
        let mut lhs = self.product()?;
        while self.eat('+') {
            let rhs = self.product()?;
            lhs = lhs.plus(rhs);
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<FunctionSpec> {
        let mut lhs = self.term()?;
        while self.eat('*') {
            let rhs = self.term()?;
            lhs = lhs.times(rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<FunctionSpec> {
        match self.peek_tok() {
            None => Err(self.syntax("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some(c) if c == '-' || c == '.' || c.is_ascii_digit() => {
                let c = self.number()?;
                if self.eat('*') {
                    Ok(self.term()?.scale(c))
                } else {
                    Ok(FunctionSpec::Const(c))
                }
            }
            Some(c) if c.is_ascii_alphabetic() => self.leaf(),
            Some(_) => Err(self.syntax("expected a term")),
        }
    }

    fn ident(&mut self) -> (usize, &str) {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
            self.pos += 1;
        }
        (start, &self.src[start..self.pos])
    }

    fn keyword(&mut self, word: &str) -> Result<()> {
        let (start, id) = self.ident();
        if id == word {
            Ok(())
        } else {
            self.pos = start;
            Err(self.syntax(&format!("expected `{word}`")))
        }
    }

    fn leaf(&mut self) -> Result<FunctionSpec> {
        let (start, id) = self.ident();
        match id {
            "ind" => {
                self.expect('(')?;
                self.keyword("v")?;
                self.expect(':')?;
                let at = self.pos;
                let (eps, rmax) = self.interval()?;
                let marks = MarkAnnulus::new(eps, rmax).map_err(|e| Error::Syntax {
                    offset: at,
                    message: e.to_string(),
                })?;
                self.expect(';')?;
                self.keyword("x")?;
                self.expect(':')?;
                let window = self.boxed()?;
                self.expect(')')?;
                Ok(FunctionSpec::IndicatorPhase { marks, window })
            }
            "vnorm" => {
                self.expect('^')?;
                self.skip_ws();
                let s = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                let p = self.src[s..self.pos].parse::<u32>().map_err(|_| Error::Syntax {
                    offset: s,
                    message: "expected a nonnegative integer power".into(),
                })?;
                Ok(FunctionSpec::RadialMark(p))
            }
            "lin" => {
                self.expect('(')?;
                let mut h = vec![self.number()?];
                while self.eat(',') {
                    h.push(self.number()?);
                }
                self.expect(')')?;
                Ok(FunctionSpec::LinearMark(h))
            }
            "xbox" => {
                self.expect('(')?;
                let window = self.boxed()?;
                self.expect(')')?;
                Ok(FunctionSpec::PositionBump(window))
            }
            other => Err(Error::UnknownSymbol {
                offset: start,
                symbol: other.to_string(),
            }),
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some('-') {
            self.pos += 1;
        }
        let digits = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        let text = &self.src[start..self.pos];
        if self.pos == digits || text.matches('.').count() > 1 {
            self.pos = start;
            return Err(self.syntax("expected a decimal number"));
        }
        text.parse::<f64>().map_err(|_| Error::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })
    }

    fn interval(&mut self) -> Result<(f64, f64)> {
        self.expect('[')?;
        let a = self.number()?;
        self.expect(',')?;
        let b = self.number()?;
        self.expect(']')?;
        Ok((a, b))
    }

    fn boxed(&mut self) -> Result<PositionWindow> {
        let start = self.pos;
        let (a, b) = self.interval()?;
        let mut lower = vec![a];
        let mut upper = vec![b];
        while self.peek_tok() == Some('x') {
            self.pos += 1;
            let (a, b) = self.interval()?;
            lower.push(a);
            upper.push(b);
        }
        PositionWindow::new(lower, upper).map_err(|e| Error::Syntax {
            offset: start,
            message: e.to_string(),
        })
    }
}
