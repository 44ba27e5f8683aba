//! Exact checks of the Lebesgue-Poisson identities on a finite ground set.
//!
//! A continuum intensity `σ` is replaced by weights `w_i` on finitely many
//! atoms, and `∫ G d𝓛_σ` by `Σ_{ξ⊆S} w(ξ) G(ξ)` with `w(ξ) = Π_{i∈ξ} w_i`.
//! The identities then become exact combinatorial statements, checked by
//! enumerating both sides along independent routes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::combinat::{k_transform_table, ConfigurationFunction};
use crate::config::{FiniteConfiguration, MarkedPoint};
use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

/// Ground-set size limit for [`oracle_lp_sum`].
pub const LP_SUM_BUDGET: usize = 20;
/// Ground-set size limit for the identity verifiers.
pub const IDENTITY_BUDGET: usize = 12;
/// Absolute tolerance for the exact identities.
pub const EXACT_TOLERANCE: f64 = 1e-12;

/// Weighted atoms standing in for `σ`, optionally with Bernoulli inclusion
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundSet {
    atoms: FiniteConfiguration,
    weights: Vec<f64>,
    inclusion: Option<Vec<f64>>,
}

impl GroundSet {
    /// `weights[i]` belongs to `atoms[i]`; pairs are re-sorted canonically.
    pub fn new(atoms: Vec<MarkedPoint>, weights: Vec<f64>) -> Result<Self> {
        Self::build(atoms, weights, None)
    }

    pub fn with_inclusion(
        atoms: Vec<MarkedPoint>,
        weights: Vec<f64>,
        inclusion: Vec<f64>,
    ) -> Result<Self> {
        Self::build(atoms, weights, Some(inclusion))
    }

    fn build(
        atoms: Vec<MarkedPoint>,
        weights: Vec<f64>,
        inclusion: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = atoms.len();
        if weights.len() != n || inclusion.as_ref().is_some_and(|p| p.len() != n) {
            return Err(Error::InvalidParameter(
                "ground set needs one weight (and probability) per atom".into(),
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("ground-set weights must be positive".into()));
        }
        if let Some(p) = &inclusion {
            if p.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
                return Err(Error::InvalidParameter(
                    "inclusion probabilities must lie in (0, 1)".into(),
                ));
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        let config = FiniteConfiguration::new(atoms.clone())?;
        order.sort_by_key(|&i| {
            config
                .points()
                .iter()
                .position(|p| p.position() == atoms[i].position())
                .expect("atom present")
        });
        let weights = order.iter().map(|&i| weights[i]).collect();
        let inclusion = inclusion.map(|p| order.iter().map(|&i| p[i]).collect());
        Ok(GroundSet {
            atoms: config,
            weights,
            inclusion,
        })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &FiniteConfiguration {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn inclusion(&self) -> Option<&[f64]> {
        self.inclusion.as_deref()
    }

    pub fn subset(&self, mask: u64) -> FiniteConfiguration {
        self.atoms.subset(mask)
    }

    fn weight_table(&self) -> Vec<f64> {
        product_table(&self.weights)
    }
}

/// `table[mask] = Π_{i∈mask} values[i]`.
fn product_table(values: &[f64]) -> Vec<f64> {
    let mut table = vec![1.0; 1 << values.len()];
    for (i, v) in values.iter().enumerate() {
        let bit = 1usize << i;
        for m in 0..bit {
            table[bit | m] = table[m] * v;
        }
    }
    table
}

fn check_budget(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        Err(Error::BudgetExceeded { size: n, limit })
    } else {
        Ok(())
    }
}

/// Both sides of an identity instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_diff: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        IdentityCheck {
            lhs,
            rhs,
            abs_diff: (lhs - rhs).abs(),
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.abs_diff <= tol
    }
}

/// Discrete Lebesgue-Poisson integral `Σ_{ξ⊆S} w(ξ) G(ξ)`.
pub fn oracle_lp_sum(g: &ConfigurationFunction, ground: &GroundSet) -> Result<f64> {
    check_budget(ground.len(), LP_SUM_BUDGET)?;
    let w = ground.weight_table();
    Ok(w.iter()
        .enumerate()
        .map(|(m, wm)| wm * g.evaluate(&ground.subset(m as u64)))
        .collect::<CompensatedSum>()
        .value())
}

/// First Minlos identity on a ground set:
/// `Σ_{ξ₁∩ξ₂=∅} w(ξ₁)w(ξ₂) G(ξ₁∪ξ₂) H(ξ₁,ξ₂) = Σ_η w(η) G(η) Σ_{ξ⊆η} H(ξ, η∖ξ)`.
///
/// The left side walks ternary assignments (in `ξ₁`, in `ξ₂`, in neither);
/// the right side walks `η` and its submasks.
pub fn verify_minlos_1<H>(
    g: &ConfigurationFunction,
    h: H,
    ground: &GroundSet,
) -> Result<IdentityCheck>
where
    H: Fn(&FiniteConfiguration, &FiniteConfiguration) -> f64,
{
    let n = ground.len();
    check_budget(n, IDENTITY_BUDGET)?;
    let w = ground.weight_table();
    let gt: Vec<f64> = (0..1u64 << n).map(|m| g.evaluate(&ground.subset(m))).collect();

    let mut lhs = CompensatedSum::new();
    let mut digits = vec![0u8; n];
    loop {
        let (mut m1, mut m2) = (0u64, 0u64);
        for (i, d) in digits.iter().enumerate() {
            match d {
                1 => m1 |= 1 << i,
                2 => m2 |= 1 << i,
                _ => {}
            }
        }
        let hv = h(&ground.subset(m1), &ground.subset(m2));
        lhs.add(w[m1 as usize] * w[m2 as usize] * gt[(m1 | m2) as usize] * hv);
        let mut k = 0;
        while k < n && digits[k] == 2 {
            digits[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
        digits[k] += 1;
    }

    let mut rhs = CompensatedSum::new();
    for eta in 0..1u64 << n {
        let mut inner = CompensatedSum::new();
        let mut s = eta;
        loop {
            inner.add(h(&ground.subset(s), &ground.subset(eta & !s)));
            if s == 0 {
                break;
            }
            s = (s - 1) & eta;
        }
        rhs.add(w[eta as usize] * gt[eta as usize] * inner.value());
    }
    Ok(IdentityCheck::new(lhs.value(), rhs.value()))
}

/// Second Minlos identity on a ground set:
/// `Σ_η w(η) Σ_{p∈η} H(η, p) = Σ_η w(η) Σ_{p∉η} w_p H(η ∪ {p}, p)`.
pub fn verify_minlos_2<H>(h: H, ground: &GroundSet) -> Result<IdentityCheck>
where
    H: Fn(&FiniteConfiguration, &MarkedPoint) -> f64,
{
    let n = ground.len();
    check_budget(n, IDENTITY_BUDGET)?;
    let w = ground.weight_table();
    let points = ground.atoms().points();
    let mut lhs = CompensatedSum::new();
    let mut rhs = CompensatedSum::new();
    for eta in 0..1u64 << n {
        let sub = ground.subset(eta);
        for (i, p) in points.iter().enumerate() {
            if eta >> i & 1 == 1 {
                lhs.add(w[eta as usize] * h(&sub, p));
            } else {
                let ext = ground.subset(eta | 1 << i);
                rhs.add(w[eta as usize] * ground.weights[i] * h(&ext, p));
            }
        }
    }
    Ok(IdentityCheck::new(lhs.value(), rhs.value()))
}

/// K-duality for independent Bernoulli inclusion, whose correlation function
/// is `k(ξ) = Π_{i∈ξ} π_i`:
/// `Σ_ξ G(ξ) k(ξ) = Σ_γ P(γ) (KG)(γ)`.
pub fn verify_bernoulli_duality(
    g: &ConfigurationFunction,
    ground: &GroundSet,
) -> Result<IdentityCheck> {
    let n = ground.len();
    check_budget(n, IDENTITY_BUDGET)?;
    let pi = ground.inclusion().ok_or_else(|| {
        Error::InvalidParameter("Bernoulli duality needs inclusion probabilities".into())
    })?;
    let gt: Vec<f64> = (0..1u64 << n).map(|m| g.evaluate(&ground.subset(m))).collect();
    let corr = product_table(pi);
    let lhs: f64 = gt
        .iter()
        .zip(&corr)
        .map(|(a, b)| a * b)
        .collect::<CompensatedSum>()
        .value();

    let kg = k_transform_table(&gt)?;
    let mut rhs = CompensatedSum::new();
    for (gamma, k) in kg.iter().enumerate() {
        let p: f64 = pi
            .iter()
            .enumerate()
            .map(|(i, q)| if gamma >> i & 1 == 1 { *q } else { 1.0 - q })
            .product();
        rhs.add(p * k);
    }
    Ok(IdentityCheck::new(lhs, rhs.value()))
}

// ---------------------------------------------------------------------------
// random instances

pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_point(h: u64, p: &MarkedPoint) -> u64 {
    p.position()
        .iter()
        .chain(p.velocity())
        .fold(h, |h, c| splitmix(h ^ c.to_bits()))
}

fn hash_config(h: u64, g: &FiniteConfiguration) -> u64 {
    g.iter().fold(splitmix(h ^ 0x51), hash_point)
}

fn unit_value(h: u64) -> f64 {
    // top 53 bits → [-1, 1)
    (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// Pseudo-random function with values in `[-1, 1)`, determined by `seed`
/// and the marked points of its argument.
pub fn random_configuration_function(seed: u64) -> ConfigurationFunction {
    ConfigurationFunction::new(move |g| unit_value(hash_config(splitmix(seed), g)))
        .with_growth(crate::combinat::GrowthBound::uniform(1.0))
}

/// Pseudo-random pair function `H(ξ₁, ξ₂)` in `[-1, 1)`.
pub fn random_pair_function(
    seed: u64,
) -> impl Fn(&FiniteConfiguration, &FiniteConfiguration) -> f64 + Send + Sync + Clone {
    move |a, b| unit_value(hash_config(hash_config(splitmix(seed ^ 0xa5a5), a), b))
}

/// Pseudo-random function `H(η, p)` in `[-1, 1)`.
pub fn random_point_function(
    seed: u64,
) -> impl Fn(&FiniteConfiguration, &MarkedPoint) -> f64 + Send + Sync + Clone {
    move |eta, p| unit_value(hash_point(hash_config(splitmix(seed ^ 0x5a5a), eta), p))
}

/// Random ground set of `n` atoms in `d = 1` with weights in `(0.05, 1]`
/// and, if requested, inclusion probabilities in `(0.05, 0.95)`.
pub fn random_ground_set<R: Rng + ?Sized>(rng: &mut R, n: usize, with_inclusion: bool) -> GroundSet {
    let mut atoms = Vec::with_capacity(n);
    while atoms.len() < n {
        let x: f64 = rng.random();
        let v: f64 = rng.random_range(0.1..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        if atoms.iter().all(|p: &MarkedPoint| p.position()[0] != x) {
            atoms.push(MarkedPoint::new(vec![v], vec![x]).expect("nonzero velocity"));
        }
    }
    let weights = (0..n).map(|_| 1.0 - 0.95 * rng.random::<f64>()).collect();
    if with_inclusion {
        let pi = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        GroundSet::with_inclusion(atoms, weights, pi).expect("valid ground set")
    } else {
        GroundSet::new(atoms, weights).expect("valid ground set")
    }
}

/// Which identity a [`ExactRow`] checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identity {
    Minlos1,
    Minlos2,
    BernoulliDuality,
}

impl Identity {
    pub fn name(self) -> &'static str {
        match self {
            Identity::Minlos1 => "minlos_1",
            Identity::Minlos2 => "minlos_2",
            Identity::BernoulliDuality => "bernoulli_duality",
        }
    }
}

/// One verified identity instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactRow {
    pub identity: Identity,
    pub instance_seed: u64,
    pub check: IdentityCheck,
    pub pass: bool,
}

/// Seed of instance `i` under master seed `seed`.
pub fn instance_seed(seed: u64, i: u64) -> u64 {
    splitmix(splitmix(seed) ^ i)
}

/// Random instances of all three identities: Minlos on `|S| ≤ 8`, Bernoulli
/// duality on `|S| ≤ 12`. One row per identity per instance.
pub fn exact_suite(seed: u64, instances: usize) -> Result<Vec<ExactRow>> {
    let mut rows = Vec::with_capacity(3 * instances);
    for i in 0..instances as u64 {
        let s = instance_seed(seed, i);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let n = rng.random_range(0..=8);
        let ground = random_ground_set(&mut rng, n, false);
        let g = random_configuration_function(rng.random());
        let h = random_pair_function(rng.random());
        let check = verify_minlos_1(&g, h, &ground)?;
        rows.push(ExactRow {
            identity: Identity::Minlos1,
            instance_seed: s,
            check,
            pass: check.passes(EXACT_TOLERANCE),
        });

        let n = rng.random_range(0..=8);
        let ground = random_ground_set(&mut rng, n, false);
        let h = random_point_function(rng.random());
        let check = verify_minlos_2(h, &ground)?;
        rows.push(ExactRow {
            identity: Identity::Minlos2,
            instance_seed: s,
            check,
            pass: check.passes(EXACT_TOLERANCE),
        });

        let n = rng.random_range(0..=IDENTITY_BUDGET);
        let ground = random_ground_set(&mut rng, n, true);
        let g = random_configuration_function(rng.random());
        let check = verify_bernoulli_duality(&g, &ground)?;
        rows.push(ExactRow {
            identity: Identity::BernoulliDuality,
            instance_seed: s,
            check,
            pass: check.passes(EXACT_TOLERANCE),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::FunctionSpec;

    fn two_atoms() -> Vec<MarkedPoint> {
        vec![
            MarkedPoint::new(vec![1.0], vec![0.2]).unwrap(),
            MarkedPoint::new(vec![-1.0], vec![0.6]).unwrap(),
        ]
    }

    #[test]
    fn lp_sum_examples() {
        let ground = GroundSet::new(two_atoms(), vec![1.0, 1.0]).unwrap();
        let one = ConfigurationFunction::constant(1.0);
        assert_eq!(oracle_lp_sum(&one, &ground).unwrap(), 4.0);
        let size = ConfigurationFunction::new(|g| g.len() as f64);
        assert_eq!(oracle_lp_sum(&size, &ground).unwrap(), 4.0);
        let empty = GroundSet::new(vec![], vec![]).unwrap();
        assert_eq!(oracle_lp_sum(&ConfigurationFunction::constant(7.5), &empty).unwrap(), 7.5);
    }

    #[test]
    fn minlos_examples() {
        let ground = GroundSet::new(two_atoms(), vec![1.0, 1.0]).unwrap();
        let size = ConfigurationFunction::new(|g| g.len() as f64);
        let c = verify_minlos_1(&size, |_, _| 1.0, &ground).unwrap();
        assert_eq!((c.lhs, c.rhs), (12.0, 12.0));
        let c = verify_minlos_1(&size, |_, _| 0.0, &ground).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));

        let c = verify_minlos_2(|_, _| 1.0, &ground).unwrap();
        assert_eq!((c.lhs, c.rhs), (4.0, 4.0));
        let c = verify_minlos_2(|_, _| 0.0, &ground).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
    }

    #[test]
    fn bernoulli_examples() {
        let atoms = two_atoms();
        let a = atoms[0].clone();
        let ground = GroundSet::with_inclusion(atoms, vec![1.0, 1.0], vec![0.5, 0.25]).unwrap();
        let single = ConfigurationFunction::new(move |g| {
            if g.len() == 1 && g.points()[0] == a {
                1.0
            } else {
                0.0
            }
        });
        let c = verify_bernoulli_duality(&single, &ground).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.5, 0.5));
        let c = verify_bernoulli_duality(&ConfigurationFunction::constant(1.0), &ground).unwrap();
        assert!((c.lhs - 1.875).abs() < 1e-15 && (c.rhs - 1.875).abs() < 1e-15);

        let empty = GroundSet::with_inclusion(vec![], vec![], vec![]).unwrap();
        let c = verify_bernoulli_duality(&ConfigurationFunction::constant(3.0), &empty).unwrap();
        assert_eq!((c.lhs, c.rhs), (3.0, 3.0));
    }

    #[test]
    fn weights_follow_their_atoms() {
        let atoms = vec![
            MarkedPoint::new(vec![1.0], vec![0.9]).unwrap(),
            MarkedPoint::new(vec![1.0], vec![0.1]).unwrap(),
        ];
        let ground = GroundSet::new(atoms, vec![0.3, 0.7]).unwrap();
        assert_eq!(ground.weights(), &[0.7, 0.3]);
        assert_eq!(ground.atoms().points()[0].position(), &[0.1]);
    }

    #[test]
    fn coherent_lp_sum_is_a_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 0..10 {
            let ground = random_ground_set(&mut rng, n, false);
            let f = FunctionSpec::LinearMark(vec![0.8]).plus(FunctionSpec::Const(0.1));
            let lhs = oracle_lp_sum(&ConfigurationFunction::coherent(f.clone()), &ground).unwrap();
            let rhs: f64 = ground
                .atoms()
                .iter()
                .zip(ground.weights())
                .map(|(p, w)| 1.0 + w * f.evaluate(p.velocity(), p.position()))
                .product();
            assert!((lhs - rhs).abs() <= 1e-12, "n={n}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn invalid_ground_sets() {
        assert!(GroundSet::new(two_atoms(), vec![1.0]).is_err());
        assert!(GroundSet::new(two_atoms(), vec![1.0, 0.0]).is_err());
        assert!(GroundSet::with_inclusion(two_atoms(), vec![1.0, 1.0], vec![0.5, 1.0]).is_err());
        let ground = GroundSet::new(two_atoms(), vec![1.0, 1.0]).unwrap();
        assert!(verify_bernoulli_duality(&ConfigurationFunction::constant(1.0), &ground).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ground = random_ground_set(&mut rng, 13, true);
        let one = ConfigurationFunction::constant(1.0);
        assert!(matches!(
            verify_bernoulli_duality(&one, &ground),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn random_functions_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ground = random_ground_set(&mut rng, 4, false);
        let g = random_configuration_function(77);
        let g2 = random_configuration_function(77);
        let sub = ground.subset(0b1011);
        assert_eq!(g.evaluate(&sub), g2.evaluate(&sub));
        assert_ne!(g.evaluate(&sub), random_configuration_function(78).evaluate(&sub));
    }

    #[test]
    fn small_suite_passes() {
        let rows = exact_suite(3, 20).unwrap();
        assert_eq!(rows.len(), 60);
        assert!(rows.iter().all(|r| r.pass), "{:?}", rows.iter().find(|r| !r.pass));
    }
}
