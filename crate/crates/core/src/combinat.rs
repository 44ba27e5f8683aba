//! Exact K-calculus on finite configurations.
//!
//! `(KG)(γ) = Σ_{ξ⊆γ} G(ξ)`, its Möbius inverse
//! `(K⁻¹F)(γ) = Σ_{ξ⊆γ} (-1)^{|γ∖ξ|} F(ξ)`, the ⋆-convolution with
//! `K(G₁⋆G₂) = KG₁·KG₂`, and coherent states `e(f, γ) = Π_{p∈γ} f(p)`.
//!
//! Subsets of an `n`-point configuration are bitmasks over its canonical
//! point order. Sums run in fixed-size blocks of masks, each accumulated with
//! compensated summation and merged in block order, so the result does not
//! depend on how blocks are spread over worker threads.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::config::{dot, FiniteConfiguration, MarkedPoint, VectorDiscreteMeasure};
use crate::error::{Error, Result};
use crate::function::FunctionSpec;
use crate::sum::CompensatedSum;

/// Largest configuration accepted by subset enumeration (`2^n` terms).
pub const SUBSET_BUDGET: usize = 25;
/// Largest configuration accepted by the ⋆-convolution (`3^n` terms).
pub const TRIPARTITION_BUDGET: usize = 15;

const BLOCK_BITS: u32 = 12;

/// Function-class tags. Metadata only; nothing is enforced at runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FunctionClass {
    /// Bounded with local support.
    BoundedLocalSupport,
    /// Bounded with bounded support.
    BoundedBoundedSupport,
    /// Bounded support with compact marks.
    CompactMarks,
    #[default]
    Unrestricted,
}

/// Bound `|G(ξ)| ≤ c · r^{|ξ|}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthBound {
    pub c: f64,
    pub r: f64,
}

impl GrowthBound {
    pub fn uniform(c: f64) -> Self {
        GrowthBound { c, r: 1.0 }
    }
}

type ConfigFn = dyn Fn(&FiniteConfiguration) -> f64 + Send + Sync;
type PointFn = dyn Fn(&MarkedPoint) -> f64 + Send + Sync;

#[derive(Clone)]
enum Kind {
    General(Arc<ConfigFn>),
    /// `γ ↦ Π_{p∈γ} f(p)`.
    Product(Arc<PointFn>),
}

/// A real function on finite configurations.
#[derive(Clone)]
pub struct ConfigurationFunction {
    kind: Kind,
    class: FunctionClass,
    growth: Option<GrowthBound>,
}

impl fmt::Debug for ConfigurationFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            Kind::General(_) => "general",
            Kind::Product(_) => "product",
        };
        f.debug_struct("ConfigurationFunction")
            .field("kind", &kind)
            .field("class", &self.class)
            .field("growth", &self.growth)
            .finish()
    }
}

impl ConfigurationFunction {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&FiniteConfiguration) -> f64 + Send + Sync + 'static,
    {
        ConfigurationFunction {
            kind: Kind::General(Arc::new(f)),
            class: FunctionClass::default(),
            growth: None,
        }
    }

    /// Product-form function `γ ↦ Π_{p∈γ} f(p)`.
    pub fn product<F>(f: F) -> Self
    where
        F: Fn(&MarkedPoint) -> f64 + Send + Sync + 'static,
    {
        ConfigurationFunction {
            kind: Kind::Product(Arc::new(f)),
            class: FunctionClass::BoundedLocalSupport,
            growth: None,
        }
    }

    /// Coherent state (Lebesgue-Poisson exponent) `e(f)` of a grammar
    /// function.
    pub fn coherent(f: FunctionSpec) -> Self {
        Self::product(move |p| f.evaluate(p.velocity(), p.position()))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c).with_growth(GrowthBound::uniform(c.abs()))
    }

    /// `1_{ξ = ∅}`.
    pub fn empty_indicator() -> Self {
        Self::new(|g| if g.is_empty() { 1.0 } else { 0.0 })
            .with_class(FunctionClass::BoundedBoundedSupport)
            .with_growth(GrowthBound::uniform(1.0))
    }

    /// `1_{|ξ| = k}`.
    pub fn size_indicator(k: usize) -> Self {
        Self::new(move |g| if g.len() == k { 1.0 } else { 0.0 })
            .with_class(FunctionClass::BoundedBoundedSupport)
            .with_growth(GrowthBound::uniform(1.0))
    }

    pub fn with_class(mut self, class: FunctionClass) -> Self {
        self.class = class;
        self
    }

    pub fn with_growth(mut self, growth: GrowthBound) -> Self {
        self.growth = Some(growth);
        self
    }

    pub fn class(&self) -> FunctionClass {
        self.class
    }

    pub fn growth(&self) -> Option<GrowthBound> {
        self.growth
    }

    pub fn evaluate(&self, gamma: &FiniteConfiguration) -> f64 {
        match &self.kind {
            Kind::General(f) => f(gamma),
            Kind::Product(f) => gamma.iter().map(|p| f(p)).product(),
        }
    }

    /// `a·self + b·other`.
    pub fn linear_combination(&self, a: f64, other: &ConfigurationFunction, b: f64) -> Self {
        let (f, g) = (self.clone(), other.clone());
        Self::new(move |x| a * f.evaluate(x) + b * g.evaluate(x))
    }

    /// `ξ ↦ G(ξ ∪ {p})` for `p ∉ ξ`.
    pub fn shifted(&self, p: MarkedPoint) -> Self {
        let g = self.clone();
        Self::new(move |xi| match xi.with_point(p.clone()) {
            Ok(ext) => g.evaluate(&ext),
            Err(_) => f64::NAN,
        })
    }

    /// Composition with the reflection map, as a function on measures.
    pub fn to_cone(&self) -> ConeFunction {
        let g = self.clone();
        ConeFunction::new(move |eta| g.evaluate(&eta.unreflect())).with_class(self.class)
    }
}

/// A real function on finite vector-valued discrete measures.
#[derive(Clone)]
pub struct ConeFunction {
    f: Arc<dyn Fn(&VectorDiscreteMeasure) -> f64 + Send + Sync>,
    class: FunctionClass,
}

impl fmt::Debug for ConeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConeFunction").field("class", &self.class).finish()
    }
}

impl ConeFunction {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&VectorDiscreteMeasure) -> f64 + Send + Sync + 'static,
    {
        ConeFunction {
            f: Arc::new(f),
            class: FunctionClass::default(),
        }
    }

    pub fn with_class(mut self, class: FunctionClass) -> Self {
        self.class = class;
        self
    }

    pub fn class(&self) -> FunctionClass {
        self.class
    }

    pub fn evaluate(&self, eta: &VectorDiscreteMeasure) -> f64 {
        (self.f)(eta)
    }

    /// Composition with the inverse reflection, as a configuration function.
    pub fn to_configuration(&self) -> ConfigurationFunction {
        let g = self.clone();
        ConfigurationFunction::new(move |gamma| g.evaluate(&gamma.reflect())).with_class(self.class)
    }
}

fn check_budget(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        Err(Error::BudgetExceeded { size: n, limit })
    } else {
        Ok(())
    }
}

fn default_chunks() -> usize {
    rayon::current_num_threads().max(1)
}

/// `Σ_{mask < 2^n} term(mask)`, blockwise compensated and merged in block
/// order; `chunks` only controls how blocks are grouped for parallel work.
pub(crate) fn subset_sum<F>(n: usize, chunks: usize, term: F) -> f64
where
    F: Fn(u64) -> f64 + Sync,
{
    let total: u64 = 1 << n;
    let block = 1u64 << BLOCK_BITS.min(n as u32);
    let n_blocks = total / block;
    let block_sum = |b: u64| {
        let mut acc = CompensatedSum::new();
        for mask in b * block..(b + 1) * block {
            acc.add(term(mask));
        }
        acc.value()
    };
    let partials: Vec<f64> = if n_blocks == 1 {
        vec![block_sum(0)]
    } else {
        let chunks = chunks.clamp(1, n_blocks as usize) as u64;
        let per = n_blocks.div_ceil(chunks);
        (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let lo = (c * per).min(n_blocks);
                let hi = ((c + 1) * per).min(n_blocks);
                (lo..hi).map(block_sum).collect::<Vec<_>>()
            })
            .collect()
    };
    partials.into_iter().collect::<CompensatedSum>().value()
}

/// `(KG)(γ) = Σ_{ξ⊆γ} G(ξ)`, including `ξ = ∅`.
pub fn k_transform(g: &ConfigurationFunction, gamma: &FiniteConfiguration) -> Result<f64> {
    k_transform_with_chunks(g, gamma, default_chunks())
}

pub fn k_transform_with_chunks(
    g: &ConfigurationFunction,
    gamma: &FiniteConfiguration,
    chunks: usize,
) -> Result<f64> {
    let n = gamma.len();
    check_budget(n, SUBSET_BUDGET)?;
    match &g.kind {
        Kind::Product(f) => {
            let factors: Vec<f64> = gamma.iter().map(|p| f(p)).collect();
            Ok(product_k_transform(&factors))
        }
        Kind::General(_) => Ok(subset_sum(n, chunks, |mask| g.evaluate(&gamma.subset(mask)))),
    }
}

/// `Σ_{S} Π_{i∈S} f_i` in Gray-code order, updating the running product by
/// one factor per step. Zero factors are counted rather than multiplied in.
fn product_k_transform(factors: &[f64]) -> f64 {
    let n = factors.len();
    let mut acc = CompensatedSum::new();
    let mut included = vec![false; n];
    let mut prod = 1.0;
    let mut zeros = 0usize;
    acc.add(1.0);
    for k in 1u64..(1u64 << n) {
        let i = k.trailing_zeros() as usize;
        let f = factors[i];
        included[i] = !included[i];
        if f == 0.0 {
            if included[i] {
                zeros += 1;
            } else {
                zeros -= 1;
            }
        } else if included[i] {
            prod *= f;
        } else {
            prod /= f;
        }
        acc.add(if zeros > 0 { 0.0 } else { prod });
    }
    acc.value()
}

/// `(K⁻¹F)(γ) = Σ_{ξ⊆γ} (-1)^{|γ∖ξ|} F(ξ)`.
pub fn k_inverse(f: &ConfigurationFunction, gamma: &FiniteConfiguration) -> Result<f64> {
    let n = gamma.len();
    check_budget(n, SUBSET_BUDGET)?;
    Ok(subset_sum(n, default_chunks(), |mask| {
        let sign = if (n as u32 - mask.count_ones()).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        sign * f.evaluate(&gamma.subset(mask))
    }))
}

/// `(G₁⋆G₂)(γ) = Σ_{(ξ₁,ξ₂,ξ₃)} G₁(ξ₁∪ξ₂) G₂(ξ₂∪ξ₃)` over ordered
/// tripartitions of `γ` with possibly empty parts.
pub fn star_convolution(
    g1: &ConfigurationFunction,
    g2: &ConfigurationFunction,
    gamma: &FiniteConfiguration,
) -> Result<f64> {
    let n = gamma.len();
    check_budget(n, TRIPARTITION_BUDGET)?;
    let full: u64 = (1 << n) - 1;
    let t1: Vec<f64> = (0..=full).map(|m| g1.evaluate(&gamma.subset(m))).collect();
    let t2: Vec<f64> = (0..=full).map(|m| g2.evaluate(&gamma.subset(m))).collect();
    // a = ξ₁ ∪ ξ₂, s = ξ₂ ⊆ a, b = ξ₂ ∪ ξ₃ = (full ∖ a) ∪ s
    Ok(subset_sum(n, default_chunks(), |a| {
        let rest = full & !a;
        let mut acc = CompensatedSum::new();
        let mut s = a;
        loop {
            acc.add(t1[a as usize] * t2[(rest | s) as usize]);
            if s == 0 {
                break;
            }
            s = (s - 1) & a;
        }
        acc.value()
    }))
}

/// `e(f, γ) = Π_{(v,x)∈γ} f(v, x)`.
pub fn coherent_state(f: &FunctionSpec, gamma: &FiniteConfiguration) -> f64 {
    gamma
        .iter()
        .map(|p| f.evaluate(p.velocity(), p.position()))
        .product()
}

/// Cone coherent state `Π_{x∈τ(η)} ⟨h, v_x⟩ φ(x)`.
pub fn coherent_state_cone(h: &[f64], phi: &FunctionSpec, eta: &VectorDiscreteMeasure) -> f64 {
    eta.atoms().map(|(x, v)| dot(h, v) * phi.evaluate(v, x)).product()
}

/// The cone coherent state as a [`ConeFunction`].
pub fn coherent_cone_function(h: Vec<f64>, phi: FunctionSpec) -> ConeFunction {
    ConeFunction::new(move |eta| coherent_state_cone(&h, &phi, eta))
        .with_class(FunctionClass::BoundedLocalSupport)
}

/// `(K G)(η) = Σ_{ξ ≤ η} G(ξ)` over sub-measures (subsets of atoms).
pub fn k_transform_cone(g: &ConeFunction, eta: &VectorDiscreteMeasure) -> Result<f64> {
    let n = eta.len();
    check_budget(n, SUBSET_BUDGET)?;
    Ok(subset_sum(n, default_chunks(), |mask| g.evaluate(&eta.submeasure(mask))))
}

/// K-transform on the whole subset lattice of an `n`-element ground set:
/// `out[M] = Σ_{S⊆M} values[S]`, with `values.len() == 2^n`.
pub fn k_transform_table(values: &[f64]) -> Result<Vec<f64>> {
    let len = values.len();
    if !len.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "subset table length {len} is not a power of two"
        )));
    }
    let n = len.trailing_zeros() as usize;
    check_budget(n, SUBSET_BUDGET)?;
    Ok((0..len as u64)
        .into_par_iter()
        .map(|m| {
            let mut acc = CompensatedSum::new();
            let mut s = m;
            loop {
                acc.add(values[s as usize]);
                if s == 0 {
                    break;
                }
                s = (s - 1) & m;
            }
            acc.value()
        })
        .collect())
}
