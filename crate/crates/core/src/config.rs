//! Finite marked configurations, vector-valued discrete measures and the
//! reflection map between them.
//!
//! A configuration is a finite set of marked points `(v, x)` with pairwise
//! distinct positions ("pinpointed"). Its reflection is the measure
//! `η = Σ v_x δ_x`. Only finite restrictions to compact windows are ever
//! represented.
//!
//! Position windows are half-open boxes `[lower, upper)`, so adjacent
//! windows partition space exactly. Mark annuli are closed in `|v|`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Replaces `-0.0` by `0.0` so that total ordering agrees with `==`.
fn canonical(mut v: Vec<f64>) -> Vec<f64> {
    for c in v.iter_mut() {
        if *c == 0.0 {
            *c = 0.0;
        }
    }
    v
}

/// A velocity-position pair with nonzero velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedPoint {
    velocity: Vec<f64>,
    position: Vec<f64>,
}

impl MarkedPoint {
    pub fn new(velocity: Vec<f64>, position: Vec<f64>) -> Result<Self> {
        if velocity.len() != position.len() {
            return Err(Error::DimensionMismatch {
                expected: position.len(),
                found: velocity.len(),
            });
        }
        if position.is_empty() {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        check_finite(&velocity, "velocity")?;
        check_finite(&position, "position")?;
        let position = canonical(position);
        if velocity.iter().all(|c| *c == 0.0) {
            return Err(Error::ZeroVelocity(position));
        }
        Ok(MarkedPoint { velocity, position })
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn position(&self) -> &[f64] {
        &self.position
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }

    /// Euclidean norm of the velocity.
    pub fn speed(&self) -> f64 {
        norm(&self.velocity)
    }
}

/// Axis-aligned half-open box `Λ = [lower, upper)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionWindow {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PositionWindow {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        check_finite(&lower, "window")?;
        check_finite(&upper, "window")?;
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::InvalidParameter(format!(
                "window lower {lower:?} exceeds upper {upper:?}"
            )));
        }
        Ok(PositionWindow {
            lower: canonical(lower),
            upper: canonical(upper),
        })
    }

    /// The unit cube `[0, 1)^d`.
    pub fn unit(d: usize) -> Self {
        PositionWindow {
            lower: vec![0.0; d],
            upper: vec![1.0; d],
        }
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Lebesgue volume `m(Λ)`.
    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(c, (l, u))| *l <= *c && *c < *u)
    }

    /// Intersection with another box; `None` when it is empty or the
    /// dimensions differ. Degenerate (zero-volume) intersections are kept.
    pub fn intersect(&self, other: &PositionWindow) -> Option<PositionWindow> {
        if self.dim() != other.dim() {
            return None;
        }
        let lower: Vec<f64> = self
            .lower
            .iter()
            .zip(&other.lower)
            .map(|(a, b)| a.max(*b))
            .collect();
        let upper: Vec<f64> = self
            .upper
            .iter()
            .zip(&other.upper)
            .map(|(a, b)| a.min(*b))
            .collect();
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return None;
        }
        Some(PositionWindow { lower, upper })
    }

    /// Volume of the intersection with `other`.
    pub fn overlap_volume(&self, other: &PositionWindow) -> f64 {
        self.intersect(other).map_or(0.0, |w| w.volume())
    }
}

/// Compact mark set `I = {v : eps ≤ |v| ≤ rmax}`, optionally restricted to
/// the half-space `v_1 > 0` ("one-sided").
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkAnnulus {
    eps: f64,
    rmax: f64,
    one_sided: bool,
}

impl MarkAnnulus {
    pub fn new(eps: f64, rmax: f64) -> Result<Self> {
        if !(eps.is_finite() && rmax.is_finite()) {
            return Err(Error::NonFinite("mark annulus"));
        }
        if !(eps > 0.0 && eps <= rmax) {
            return Err(Error::InvalidParameter(format!(
                "mark annulus needs 0 < eps <= rmax, got eps={eps}, rmax={rmax}"
            )));
        }
        Ok(MarkAnnulus {
            eps,
            rmax,
            one_sided: false,
        })
    }

    /// Annulus restricted to velocities with positive first component.
    pub fn one_sided(eps: f64, rmax: f64) -> Result<Self> {
        Ok(MarkAnnulus {
            one_sided: true,
            ..Self::new(eps, rmax)?
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn rmax(&self) -> f64 {
        self.rmax
    }

    pub fn is_one_sided(&self) -> bool {
        self.one_sided
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        let r = norm(v);
        self.eps <= r && r <= self.rmax && (!self.one_sided || v.first().is_some_and(|c| *c > 0.0))
    }

    /// Radial intersection `[max eps, min rmax]`, if nonempty.
    pub fn radial_intersection(&self, other: &MarkAnnulus) -> Option<(f64, f64)> {
        let lo = self.eps.max(other.eps);
        let hi = self.rmax.min(other.rmax);
        (lo <= hi).then_some((lo, hi))
    }
}

/// A phase-space box `I × Λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub marks: MarkAnnulus,
    pub window: PositionWindow,
}

impl PhaseBox {
    pub fn new(marks: MarkAnnulus, window: PositionWindow) -> Self {
        PhaseBox { marks, window }
    }

    pub fn contains(&self, p: &MarkedPoint) -> bool {
        self.window.contains(p.position()) && self.marks.contains(p.velocity())
    }

    /// True when the two boxes share a set of positive phase-space volume.
    pub fn overlaps(&self, other: &PhaseBox) -> bool {
        let radial = self
            .marks
            .radial_intersection(&other.marks)
            .is_some_and(|(lo, hi)| hi > lo);
        // one-sided and two-sided annuli always share the v_1 > 0 half
        radial && self.window.overlap_volume(&other.window) > 0.0
    }
}

/// A pinpointed finite configuration, sorted lexicographically by position.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FiniteConfiguration {
    points: Vec<MarkedPoint>,
}

impl FiniteConfiguration {
    pub fn empty() -> Self {
        FiniteConfiguration::default()
    }

    /// Sorts the points canonically and checks pinpointedness.
    pub fn new(mut points: Vec<MarkedPoint>) -> Result<Self> {
        if let Some(first) = points.first() {
            let d = first.dim();
            if let Some(p) = points.iter().find(|p| p.dim() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: p.dim(),
                });
            }
        }
        points.sort_by(|a, b| lex_cmp(&a.position, &b.position));
        if let Some(w) = points.windows(2).find(|w| w[0].position == w[1].position) {
            return Err(Error::DuplicatePosition(w[0].position.clone()));
        }
        Ok(FiniteConfiguration { points })
    }

    /// Builds from `(velocity, position)` pairs.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<f64>, Vec<f64>)>,
    {
        let points = pairs
            .into_iter()
            .map(|(v, x)| MarkedPoint::new(v, x))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    /// Caller guarantees the points are already canonical (sorted, distinct).
    pub(crate) fn from_sorted_unchecked(points: Vec<MarkedPoint>) -> Self {
        debug_assert!(points
            .windows(2)
            .all(|w| lex_cmp(&w[0].position, &w[1].position) == Ordering::Less));
        FiniteConfiguration { points }
    }

    pub fn points(&self) -> &[MarkedPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MarkedPoint> {
        self.points.iter()
    }

    /// Sub-configuration selected by the bits of `mask` (bit `i` ↔ point `i`).
    pub fn subset(&self, mask: u64) -> FiniteConfiguration {
        let points = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, p)| p.clone())
            .collect();
        FiniteConfiguration::from_sorted_unchecked(points)
    }

    pub fn contains_position(&self, x: &[f64]) -> bool {
        self.points
            .binary_search_by(|p| lex_cmp(&p.position, x))
            .is_ok()
    }

    /// Adds a point, failing if its position is already occupied.
    pub fn with_point(&self, p: MarkedPoint) -> Result<FiniteConfiguration> {
        let idx = match self.points.binary_search_by(|q| lex_cmp(&q.position, &p.position)) {
            Ok(_) => return Err(Error::DuplicatePosition(p.position)),
            Err(i) => i,
        };
        if let Some(q) = self.points.first() {
            if q.dim() != p.dim() {
                return Err(Error::DimensionMismatch {
                    expected: q.dim(),
                    found: p.dim(),
                });
            }
        }
        let mut points = self.points.clone();
        points.insert(idx, p);
        Ok(FiniteConfiguration { points })
    }

    /// Union of two configurations with disjoint supports.
    pub fn union(&self, other: &FiniteConfiguration) -> Result<FiniteConfiguration> {
        let mut points = self.points.clone();
        points.extend(other.points.iter().cloned());
        Self::new(points)
    }

    /// `⟨ψ, γ⟩ = Σ_{(v,x)∈γ} ψ(v, x)`.
    pub fn pairing<F: Fn(&MarkedPoint) -> f64>(&self, f: F) -> f64 {
        self.points.iter().map(f).sum()
    }

    pub fn reflect(&self) -> VectorDiscreteMeasure {
        reflect(self)
    }
}

/// Position key with a total order consistent with `==` (no NaN, no `-0.0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PositionKey(Vec<f64>);

impl Eq for PositionKey {}

impl PartialOrd for PositionKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PositionKey {
    fn cmp(&self, other: &Self) -> Ordering {
        lex_cmp(&self.0, &other.0)
    }
}

/// `η = Σ v_x δ_x` with finitely many atoms, all velocities nonzero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VectorDiscreteMeasure {
    atoms: BTreeMap<PositionKey, Vec<f64>>,
}

impl VectorDiscreteMeasure {
    pub fn zero() -> Self {
        VectorDiscreteMeasure::default()
    }

    /// Builds from `(position, velocity)` atoms.
    pub fn from_atoms<I>(atoms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<f64>, Vec<f64>)>,
    {
        let config = FiniteConfiguration::from_pairs(atoms.into_iter().map(|(x, v)| (v, x)))?;
        Ok(reflect(&config))
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Atoms in canonical position order.
    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.atoms.iter().map(|(k, v)| (k.0.as_slice(), v.as_slice()))
    }

    /// The support `τ(η)`.
    pub fn support(&self) -> impl Iterator<Item = &[f64]> {
        self.atoms.keys().map(|k| k.0.as_slice())
    }

    pub fn velocity_at(&self, x: &[f64]) -> Option<&[f64]> {
        self.atoms
            .get(&PositionKey(canonical(x.to_vec())))
            .map(|v| v.as_slice())
    }

    /// Sub-measure on the atoms selected by `mask` in canonical order.
    pub fn submeasure(&self, mask: u64) -> VectorDiscreteMeasure {
        let atoms = self
            .atoms
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, (k, v))| (k.clone(), v.clone()))
            .collect();
        VectorDiscreteMeasure { atoms }
    }

    /// `⟨h ⊗ φ, η⟩ = Σ_{x∈τ(η)} φ(x) ⟨h, v_x⟩`.
    pub fn pair_linear<F: Fn(&[f64]) -> f64>(&self, h: &[f64], phi: F) -> f64 {
        self.atoms().map(|(x, v)| phi(x) * dot(h, v)).sum()
    }

    pub fn unreflect(&self) -> FiniteConfiguration {
        unreflect(self)
    }
}

/// Reflection map: one atom `v_x` at each position `x` of `γ`.
pub fn reflect(gamma: &FiniteConfiguration) -> VectorDiscreteMeasure {
    let atoms = gamma
        .points
        .iter()
        .map(|p| (PositionKey(p.position.clone()), p.velocity.clone()))
        .collect();
    VectorDiscreteMeasure { atoms }
}

/// Inverse of [`reflect`].
pub fn unreflect(eta: &VectorDiscreteMeasure) -> FiniteConfiguration {
    let points = eta
        .atoms
        .iter()
        .map(|(k, v)| MarkedPoint {
            velocity: v.clone(),
            position: k.0.clone(),
        })
        .collect();
    FiniteConfiguration::from_sorted_unchecked(points)
}

/// Local velocity functional `V_Λ(γ) = Σ_{x∈τ(γ)∩Λ} |v_x|`.
pub fn local_velocity(gamma: &FiniteConfiguration, window: &PositionWindow) -> f64 {
    gamma
        .iter()
        .filter(|p| window.contains(p.position()))
        .map(MarkedPoint::speed)
        .sum()
}

/// Keeps the atoms with `x ∈ Λ` and `v_x ∈ I`.
pub fn project(
    eta: &VectorDiscreteMeasure,
    window: &PositionWindow,
    marks: &MarkAnnulus,
) -> VectorDiscreteMeasure {
    let atoms = eta
        .atoms
        .iter()
        .filter(|(k, v)| window.contains(&k.0) && marks.contains(v))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    VectorDiscreteMeasure { atoms }
}

/// Checks pinpointedness and sorts canonically.
pub fn validate_pinpointed(points: Vec<MarkedPoint>) -> Result<FiniteConfiguration> {
    FiniteConfiguration::new(points)
}

/// CSV header for a `d`-dimensional configuration: `x_1,..,x_d,v_1,..,v_d`.
pub fn csv_header(d: usize) -> String {
    let xs = (1..=d).map(|i| format!("x_{i}"));
    let vs = (1..=d).map(|i| format!("v_{i}"));
    xs.chain(vs).collect::<Vec<_>>().join(",")
}

pub(crate) fn write_point_row(out: &mut String, p: &MarkedPoint) {
    let mut first = true;
    for c in p.position().iter().chain(p.velocity()) {
        if !first {
            out.push(',');
        }
        first = false;
        let _ = write!(out, "{c}");
    }
    out.push('\n');
}

/// Serializes a configuration as CSV, one marked point per row.
pub fn to_csv(gamma: &FiniteConfiguration, d: usize) -> String {
    let mut out = csv_header(d);
    out.push('\n');
    for p in gamma.iter() {
        write_point_row(&mut out, p);
    }
    out
}

/// Parses the format written by [`to_csv`].
pub fn from_csv(text: &str) -> Result<FiniteConfiguration> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Csv {
        line: 1,
        message: "missing header".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.is_empty() || !cols.len().is_multiple_of(2) {
        return Err(Error::Csv {
            line: 1,
            message: format!("expected 2d columns, found {}", cols.len()),
        });
    }
    let d = cols.len() / 2;
    if header.trim() != csv_header(d) {
        return Err(Error::Csv {
            line: 1,
            message: format!("expected header `{}`", csv_header(d)),
        });
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Csv {
                line: i + 1,
                message: e.to_string(),
            })?;
        if values.len() != 2 * d {
            return Err(Error::Csv {
                line: i + 1,
                message: format!("expected {} fields, found {}", 2 * d, values.len()),
            });
        }
        let (x, v) = values.split_at(d);
        points.push(MarkedPoint::new(v.to_vec(), x.to_vec())?);
    }
    FiniteConfiguration::new(points)
}
