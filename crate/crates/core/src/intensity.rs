//! Singular velocity laws `λ(dv) = |v|^{-α} e^{-|v|^β} dv` and the product
//! intensity `σ = λ ⊗ m` restricted to a compact phase window `I × Λ`.
//!
//! `λ` has infinite total mass whenever `α ≥ d`, so masses and samplers only
//! exist on annuli `eps ≤ |v| ≤ rmax` with `eps > 0`. Moments of order
//! `n ≥ 1` are finite over all of `ℝ^d \ {0}`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{norm, MarkAnnulus, PositionWindow};
use crate::error::{Error, Result};
use crate::quadrature::{self, GaussLegendre, Tolerance};
use crate::sum::CompensatedSum;

/// Number of log-spaced nodes in the tabulated radial CDF.
pub const CDF_NODES: usize = 4096;
/// Target accuracy of the inverse-CDF search, in CDF units.
pub const CDF_TOLERANCE: f64 = 1e-12;

/// `|v|^{-α} e^{-|v|^β}` on `ℝ^d \ {0}`, with `α ∈ [d, d+1)` and `β > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityLaw {
    d: usize,
    alpha: f64,
    beta: f64,
}

impl VelocityLaw {
    pub fn new(d: usize, alpha: f64, beta: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::NonFinite("velocity law"));
        }
        let df = d as f64;
        if !(alpha >= df && alpha < df + 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in [{df}, {}), got {alpha}",
                df + 1.0
            )));
        }
        if beta <= 0.0 {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        Ok(VelocityLaw { d, alpha, beta })
    }

    /// The Maxwell-type example `α = d`, `β = 2`.
    pub fn maxwell(d: usize) -> Self {
        VelocityLaw {
            d,
            alpha: d as f64,
            beta: 2.0,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Lebesgue density `|v|^{-α} e^{-|v|^β}` as a function of `r = |v|`.
    pub fn density(&self, r: f64) -> f64 {
        r.powf(-self.alpha) * (-r.powf(self.beta)).exp()
    }

    /// Radial density `r^{d-1-α} e^{-r^β}` (density of `|v|` up to the
    /// angular factor).
    pub fn radial_density(&self, r: f64) -> f64 {
        self.radial_moment_density(0, r)
    }

    fn radial_moment_density(&self, n: u32, r: f64) -> f64 {
        r.powf(self.d as f64 - 1.0 + n as f64 - self.alpha) * (-r.powf(self.beta)).exp()
    }
}

/// Surface area `s_{d-1}` of the unit sphere in `ℝ^d` (`s_0 = 2`).
pub fn sphere_area(d: usize) -> f64 {
    match d {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (d as f64 - 2.0) * sphere_area(d - 2),
    }
}

/// Angular measure of the mark set: full sphere or the `v_1 > 0` half.
pub fn angular_measure(d: usize, marks: &MarkAnnulus) -> f64 {
    if marks.is_one_sided() {
        0.5 * sphere_area(d)
    } else {
        sphere_area(d)
    }
}

/// Integration domain for velocity moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentDomain {
    Annulus(MarkAnnulus),
    /// All of `ℝ^d \ {0}`.
    Full,
}

/// `λ(I) = s_{d-1} ∫_eps^rmax r^{d-1-α} e^{-r^β} dr`.
pub fn lambda_mass(law: &VelocityLaw, marks: &MarkAnnulus) -> Result<f64> {
    lambda_moment(law, 0, MomentDomain::Annulus(*marks))
}

/// `∫ |v|^n λ(dv)` over an annulus or the full space.
pub fn lambda_moment(law: &VelocityLaw, n: u32, domain: MomentDomain) -> Result<f64> {
    match domain {
        MomentDomain::Annulus(marks) => {
            let radial = radial_integral(law, n, marks.eps(), marks.rmax())?;
            Ok(angular_measure(law.d, &marks) * radial)
        }
        MomentDomain::Full => {
            if n == 0 {
                return Err(Error::DivergentMoment(0));
            }
            let p = law.d as f64 + n as f64 - law.alpha;
            if p <= 0.0 {
                return Err(Error::DivergentMoment(n));
            }
            // t = r^β: ∫_0^∞ r^{p-1} e^{-r^β} dr = (1/β) ∫_0^∞ t^{s-1} e^{-t} dt
            let s = p / law.beta;
            let value = if s < 1.0 {
                // u = t^s removes the endpoint singularity:
                // ∫ t^{s-1} e^{-t} dt = (1/s) ∫ e^{-u^{1/s}} du, u^{1/s} ≤ 745
                let upper = 745f64.powf(s);
                let est = quadrature::integrate(
                    |u: f64| (-u.powf(1.0 / s)).exp(),
                    0.0,
                    upper,
                    &[1.0f64.min(upper)],
                    Tolerance::default(),
                )?;
                est.value / s
            } else {
                // smooth with a peak at s - 1; beyond the upper limit the
                // integrand is below e^{-700} relative to the peak
                let upper = 2.0 * s + 800.0;
                let breaks = [0.5 * s, s, 2.0 * s, 4.0 * s, 8.0 * s];
                let est = quadrature::integrate(
                    |t: f64| ((s - 1.0) * t.ln() - t).exp(),
                    0.0,
                    upper,
                    &breaks,
                    Tolerance::default(),
                )?;
                est.value
            };
            Ok(sphere_area(law.d) * value / law.beta)
        }
    }
}

/// `∫_a^b r^{d-1+n-α} e^{-r^β} dr` for `0 < a ≤ b`.
pub fn radial_integral(law: &VelocityLaw, n: u32, a: f64, b: f64) -> Result<f64> {
    if a >= b {
        return Ok(0.0);
    }
    // geometric breakpoints keep the near-singular end well resolved
    let mut breaks = Vec::new();
    let mut r = a * 2.0;
    while r < b {
        breaks.push(r);
        r *= 2.0;
    }
    let est = quadrature::integrate(
        |r| law.radial_moment_density(n, r),
        a,
        b,
        &breaks,
        Tolerance::default(),
    )?;
    Ok(est.value)
}

/// `σ = λ ⊗ m` restricted to the phase window `I × Λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensitySpec {
    pub law: VelocityLaw,
    pub marks: MarkAnnulus,
    pub window: PositionWindow,
}

impl IntensitySpec {
    pub fn new(law: VelocityLaw, marks: MarkAnnulus, window: PositionWindow) -> Result<Self> {
        if window.dim() != law.d() {
            return Err(Error::DimensionMismatch {
                expected: law.d(),
                found: window.dim(),
            });
        }
        Ok(IntensitySpec { law, marks, window })
    }

    pub fn d(&self) -> usize {
        self.law.d()
    }

    pub fn sigma_mass(&self) -> Result<f64> {
        sigma_mass(self)
    }
}

/// `σ(I × Λ) = m(Λ) · λ(I)`.
pub fn sigma_mass(sigma: &IntensitySpec) -> Result<f64> {
    let vol = sigma.window.volume();
    if vol == 0.0 {
        return Ok(0.0);
    }
    Ok(vol * lambda_mass(&sigma.law, &sigma.marks)?)
}

/// Quadrature rule on the unit sphere (or its `u_1 > 0` half) whose weights
/// sum to the angular measure.
#[derive(Debug, Clone)]
pub struct AngularRule {
    pub directions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl AngularRule {
    /// Tensor rule in hyperspherical coordinates: Gauss-Legendre in the polar
    /// angles, trapezoid in the periodic azimuth.
    pub fn new(d: usize, one_sided: bool) -> Self {
        match d {
            1 => {
                if one_sided {
                    AngularRule {
                        directions: vec![vec![1.0]],
                        weights: vec![1.0],
                    }
                } else {
                    AngularRule {
                        directions: vec![vec![1.0], vec![-1.0]],
                        weights: vec![1.0, 1.0],
                    }
                }
            }
            _ => {
                let polar_nodes = match d {
                    2 | 3 => 32,
                    4 => 20,
                    _ => 12,
                };
                let azimuth_nodes = 2 * polar_nodes;
                let gl = GaussLegendre::new(polar_nodes);
                // (angle, weight) lists for each coordinate angle
                let mut axes: Vec<Vec<(f64, f64)>> = Vec::new();
                let polar = |lo: f64, hi: f64, power: i32| -> Vec<(f64, f64)> {
                    let c = 0.5 * (lo + hi);
                    let h = 0.5 * (hi - lo);
                    gl.nodes
                        .iter()
                        .zip(&gl.weights)
                        .map(|(x, w)| {
                            let t = c + h * x;
                            (t, w * h * t.sin().powi(power))
                        })
                        .collect()
                };
                for k in 0..d - 2 {
                    let power = (d - 2 - k) as i32;
                    let hi = if k == 0 && one_sided { PI / 2.0 } else { PI };
                    axes.push(polar(0.0, hi, power));
                }
                if d == 2 && one_sided {
                    axes.push(polar(-PI / 2.0, PI / 2.0, 0));
                } else {
                    let step = 2.0 * PI / azimuth_nodes as f64;
                    axes.push((0..azimuth_nodes).map(|i| (i as f64 * step, step)).collect());
                }
                let mut directions = Vec::new();
                let mut weights = Vec::new();
                let mut idx = vec![0usize; axes.len()];
                loop {
                    let mut u = vec![0.0; d];
                    let mut w = 1.0;
                    let mut s = 1.0;
                    for (k, axis) in axes.iter().enumerate() {
                        let (t, wt) = axis[idx[k]];
                        w *= wt;
                        u[k] = s * t.cos();
                        s *= t.sin();
                    }
                    u[d - 1] = s;
                    directions.push(u);
                    weights.push(w);
                    let mut k = 0;
                    loop {
                        if k == axes.len() {
                            return AngularRule { directions, weights };
                        }
                        idx[k] += 1;
                        if idx[k] < axes[k].len() {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                    }
                }
            }
        }
    }
}

/// `∫_I g(v) λ(dv)` for a general integrand: adaptive in the radius (split
/// at `radial_breaks`), tensor rule over directions.
pub fn integrate_marks<G>(
    law: &VelocityLaw,
    marks: &MarkAnnulus,
    radial_breaks: &[f64],
    g: G,
) -> Result<f64>
where
    G: Fn(&[f64]) -> f64,
{
    let (a, b) = (marks.eps(), marks.rmax());
    if a >= b {
        return Ok(0.0);
    }
    let rule = AngularRule::new(law.d(), marks.is_one_sided());
    let mut v = vec![0.0; law.d()];
    let mut breaks: Vec<f64> = radial_breaks.to_vec();
    let mut r = a * 2.0;
    while r < b {
        breaks.push(r);
        r *= 2.0;
    }
    let est = quadrature::integrate(
        |r| {
            let mut acc = CompensatedSum::new();
            let mut scale = 0.0;
            for (u, w) in rule.directions.iter().zip(&rule.weights) {
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi = r * ui;
                }
                let t = w * g(&v);
                scale += t.abs();
                acc.add(t);
            }
            // a sum that cancels to within roundoff is zero
            let s = acc.value();
            let s = if s.abs() <= 64.0 * f64::EPSILON * scale { 0.0 } else { s };
            law.radial_density(r) * s
        },
        a,
        b,
        &breaks,
        Tolerance::default(),
    )?;
    Ok(est.value)
}

/// Tabulated, normalized CDF of `|v|` on `[eps, rmax]`.
#[derive(Debug, Clone)]
pub struct RadialTable {
    law: VelocityLaw,
    nodes: Vec<f64>,
    cdf: Vec<f64>,
    total: f64,
    gl: GaussLegendre,
}

impl RadialTable {
    pub fn new(law: &VelocityLaw, marks: &MarkAnnulus) -> Self {
        let (eps, rmax) = (marks.eps(), marks.rmax());
        let gl = GaussLegendre::new(8);
        if eps == rmax {
            return RadialTable {
                law: *law,
                nodes: vec![eps],
                cdf: vec![1.0],
                total: 0.0,
                gl,
            };
        }
        let ratio = (rmax / eps).ln();
        let mut nodes: Vec<f64> = (0..CDF_NODES)
            .map(|i| eps * (ratio * i as f64 / (CDF_NODES - 1) as f64).exp())
            .collect();
        nodes[0] = eps;
        nodes[CDF_NODES - 1] = rmax;
        let mut cdf = Vec::with_capacity(CDF_NODES);
        let mut acc = CompensatedSum::new();
        cdf.push(0.0);
        for w in nodes.windows(2) {
            acc.add(gl.integrate(w[0], w[1], |r| law.radial_density(r)));
            cdf.push(acc.value());
        }
        let total = acc.value();
        for c in cdf.iter_mut() {
            *c /= total;
        }
        *cdf.last_mut().unwrap() = 1.0;
        RadialTable {
            law: *law,
            nodes,
            cdf,
            total,
            gl,
        }
    }

    /// Unnormalized radial mass `∫_eps^rmax r^{d-1-α} e^{-r^β} dr`.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn support(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    fn partial(&self, i: usize, r: f64) -> f64 {
        self.cdf[i] + self.gl.integrate(self.nodes[i], r, |s| self.law.radial_density(s)) / self.total
    }

    /// Normalized CDF of `|v|` at `r`.
    pub fn cdf(&self, r: f64) -> f64 {
        let (lo, hi) = self.support();
        if r <= lo || self.total == 0.0 {
            return if r < lo { 0.0 } else if self.total == 0.0 { 1.0 } else { 0.0 };
        }
        if r >= hi {
            return 1.0;
        }
        let i = self.nodes.partition_point(|x| *x <= r) - 1;
        self.partial(i, r)
    }

    /// Inverse CDF: the radius with `F(r) = u`, located by a bracketed
    /// Newton search within the tabulated interval.
    pub fn quantile(&self, u: f64) -> f64 {
        let (lo, hi) = self.support();
        if self.total == 0.0 || u <= 0.0 {
            return lo;
        }
        if u >= 1.0 {
            return hi;
        }
        let i = (self.cdf.partition_point(|c| *c <= u) - 1).min(self.nodes.len() - 2);
        let (mut a, mut b) = (self.nodes[i], self.nodes[i + 1]);
        let (ca, cb) = (self.cdf[i], self.cdf[i + 1]);
        let mut r = if cb > ca {
            a + (b - a) * (u - ca) / (cb - ca)
        } else {
            a
        };
        for _ in 0..100 {
            let f = self.partial(i, r) - u;
            if f.abs() <= CDF_TOLERANCE {
                break;
            }
            if f > 0.0 {
                b = r;
            } else {
                a = r;
            }
            let slope = self.law.radial_density(r) / self.total;
            let newton = r - f / slope;
            r = if newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            if b - a <= f64::EPSILON * b {
                break;
            }
        }
        r
    }
}

/// Draws velocities from `λ` restricted to an annulus and normalized.
#[derive(Debug, Clone)]
pub struct VelocitySampler {
    d: usize,
    one_sided: bool,
    table: RadialTable,
}

impl VelocitySampler {
    pub fn new(law: &VelocityLaw, marks: &MarkAnnulus) -> Self {
        VelocitySampler {
            d: law.d(),
            one_sided: marks.is_one_sided(),
            table: RadialTable::new(law, marks),
        }
    }

    pub fn table(&self) -> &RadialTable {
        &self.table
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let r = self.table.quantile(u);
        let mut dir = self.direction(rng);
        for c in dir.iter_mut() {
            *c *= r;
        }
        dir
    }

    /// Uniform direction on the sphere (or on the `u_1 > 0` half).
    fn direction<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        if self.d == 1 {
            let positive = self.one_sided || rng.random::<bool>();
            return vec![if positive { 1.0 } else { -1.0 }];
        }
        loop {
            let mut u: Vec<f64> = (0..self.d).map(|_| StandardNormal.sample(rng)).collect();
            let n = norm(&u);
            if n == 0.0 || (self.one_sided && u[0] == 0.0) {
                continue;
            }
            for c in u.iter_mut() {
                *c /= n;
            }
            if self.one_sided {
                u[0] = u[0].abs();
            }
            return u;
        }
    }
}

/// One velocity draw. Builds the CDF table on every call; reuse a
/// [`VelocitySampler`] for repeated draws.
pub fn sample_velocity<R: Rng + ?Sized>(
    law: &VelocityLaw,
    marks: &MarkAnnulus,
    rng: &mut R,
) -> Vec<f64> {
    VelocitySampler::new(law, marks).sample(rng)
}
