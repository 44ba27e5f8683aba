//! The Monte Carlo identity suite run by `cone-lab verify-mc`.

use std::fmt::Write as _;

use crate::combinat::ConfigurationFunction;
use crate::config::{FiniteConfiguration, MarkAnnulus, MarkedPoint, PhaseBox, PositionWindow};
use crate::error::Result;
use crate::estimators::{
    correlation_density_mc, estimate_functional, factorial_moment_mc, k_duality_check,
    kappa_position_mc, z_check_with_retry, CorrelationTable, FunctionalKind, MCResult,
    TiltDensity, Verdict, DEFAULT_CELLS_PER_AXIS, RETRY_TAG, Z_FAIL, Z_PASS,
};
use crate::function::FunctionSpec;
use crate::intensity::IntensitySpec;
use crate::mc::McSettings;

/// Header shared by `estimate` and `verify-mc`.
pub const MC_CSV_HEADER: &str = "quantity,kind,estimate,std_error,closed_form,z_score,n_samples,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub quantity: String,
    pub kind: &'static str,
    pub result: MCResult,
    /// Seed that produced `result` (a derived seed after a retry).
    pub seed: u64,
    pub verdict: Verdict,
}

impl SuiteRow {
    pub fn csv_line(&self) -> String {
        mc_csv_line(&self.quantity, self.kind, &self.result, self.seed)
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One CSV line (without newline) in the [`MC_CSV_HEADER`] layout.
pub fn mc_csv_line(quantity: &str, kind: &str, r: &MCResult, seed: u64) -> String {
    format!(
        "{quantity},{kind},{},{},{},{},{},{seed}",
        r.estimate,
        r.std_error,
        opt(r.closed_form),
        opt(r.z_score),
        r.n_samples
    )
}

/// Renders rows with the header, LF line endings.
pub fn suite_csv(rows: &[SuiteRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{MC_CSV_HEADER}").unwrap();
    for r in rows {
        writeln!(out, "{}", r.csv_line()).unwrap();
    }
    out
}

/// Splits the window in two halves along the first axis.
pub fn halves(window: &PositionWindow) -> (PositionWindow, PositionWindow) {
    let mid = 0.5 * (window.lower()[0] + window.upper()[0]);
    let mut left_upper = window.upper().to_vec();
    left_upper[0] = mid;
    let mut right_lower = window.lower().to_vec();
    right_lower[0] = mid;
    (
        PositionWindow::new(window.lower().to_vec(), left_upper).expect("valid half"),
        PositionWindow::new(right_lower, window.upper().to_vec()).expect("valid half"),
    )
}

/// Two points at 1/4 and 3/4 of the first axis, centered in the others,
/// with velocity of mid-annulus speed along the first axis.
pub fn reference_gamma0(sigma: &IntensitySpec) -> Result<FiniteConfiguration> {
    let w = &sigma.window;
    let d = sigma.d();
    let speed = 0.5 * (sigma.marks.eps() + sigma.marks.rmax());
    let mut v = vec![0.0; d];
    v[0] = speed;
    let point = |t: f64| {
        let x: Vec<f64> = (0..d)
            .map(|j| {
                let s = if j == 0 { t } else { 0.5 };
                w.lower()[j] + s * (w.upper()[j] - w.lower()[j])
            })
            .collect();
        MarkedPoint::new(v.clone(), x)
    };
    FiniteConfiguration::new(vec![point(0.25)?, point(0.75)?])
}

fn unit_vector(d: usize) -> Vec<f64> {
    let mut h = vec![0.0; d];
    h[0] = 1.0;
    h
}

struct Suite<'a> {
    settings: &'a McSettings,
    rows: Vec<SuiteRow>,
    tag: u64,
}

impl Suite<'_> {
    fn next_settings(&mut self) -> McSettings {
        self.tag += 1;
        self.settings.derive(self.tag)
    }

    fn check<F>(&mut self, quantity: &str, kind: &'static str, run: F) -> Result<()>
    where
        F: Fn(&McSettings) -> Result<MCResult>,
    {
        let settings = self.next_settings();
        let (result, used, verdict) = z_check_with_retry(&settings, run)?;
        self.rows.push(SuiteRow {
            quantity: quantity.to_string(),
            kind,
            result,
            seed: used.seed,
            verdict,
        });
        Ok(())
    }

    fn table<F>(&mut self, quantity: &str, run: F) -> Result<()>
    where
        F: Fn(&McSettings) -> Result<CorrelationTable>,
    {
        let settings = self.next_settings();
        let first = run(&settings)?;
        let retry_settings = settings.derive(RETRY_TAG);
        let mut retry: Option<CorrelationTable> = None;
        for (i, cell) in first.entries.iter().enumerate() {
            let z = cell.result.z_score.map_or(0.0, f64::abs);
            let (result, seed, verdict) = if z <= Z_PASS {
                (cell.result, settings.seed, Verdict::Pass)
            } else if z > Z_FAIL {
                (cell.result, settings.seed, Verdict::Fail)
            } else {
                if retry.is_none() {
                    retry = Some(run(&retry_settings)?);
                }
                let again = retry.as_ref().expect("just computed").entries[i].result;
                let ok = again.z_score.map_or(0.0, f64::abs) <= Z_PASS;
                let verdict = if ok { Verdict::PassOnRetry } else { Verdict::Fail };
                (again, retry_settings.seed, verdict)
            };
            let label = cell
                .cells
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(":");
            self.rows.push(SuiteRow {
                quantity: format!("{quantity}[{label}]"),
                kind: "kappa",
                result,
                seed,
                verdict,
            });
        }
        Ok(())
    }
}

/// Runs every Monte Carlo identity against its closed form for the given
/// intensity. Test functions are built from the intensity's own annulus and
/// window; each quantity uses its own derived seed.
pub fn mc_suite(sigma: &IntensitySpec, settings: &McSettings, n_max: usize) -> Result<Vec<SuiteRow>> {
    let d = sigma.d();
    let ind = FunctionSpec::indicator(sigma.marks, sigma.window.clone());
    let h = unit_vector(d);
    let mut suite = Suite {
        settings,
        rows: Vec::new(),
        tag: 0,
    };

    let laplace = ind.clone().scale(-0.5);
    suite.check("laplace", "functional", |s| {
        estimate_functional(FunctionalKind::Laplace, &laplace, None, sigma, s)
    })?;
    let campbell = FunctionSpec::RadialMark(1).times(FunctionSpec::PositionBump(sigma.window.clone()));
    suite.check("campbell", "functional", |s| {
        estimate_functional(FunctionalKind::Campbell, &campbell, None, sigma, s)
    })?;
    let phi = ind.clone().scale(0.2);
    suite.check("bogoliubov", "functional", |s| {
        estimate_functional(FunctionalKind::Bogoliubov, &phi, None, sigma, s)
    })?;
    let cone_phi = FunctionSpec::PositionBump(sigma.window.clone()).scale(0.5);
    suite.check("cone_laplace", "functional", |s| {
        estimate_functional(FunctionalKind::ConeLaplace, &cone_phi, Some(&h), sigma, s)
    })?;

    let (left, right) = halves(&sigma.window);
    let a = PhaseBox::new(sigma.marks, left);
    let b = PhaseBox::new(sigma.marks, right);
    suite.check("factorial_n1", "factorial_moment", |s| {
        factorial_moment_mc(std::slice::from_ref(&a), sigma, s)
    })?;
    let pair = [a.clone(), b];
    suite.check("factorial_n2", "factorial_moment", |s| factorial_moment_mc(&pair, sigma, s))?;

    let coherent = ConfigurationFunction::coherent(phi.clone());
    suite.check("k_duality", "k_duality", |s| k_duality_check(&coherent, sigma, s, n_max))?;

    let gamma0 = reference_gamma0(sigma)?;
    let tilt = TiltDensity::new(phi.clone(), sigma)?;
    suite.check("correlation_density", "correlation_density", |s| {
        correlation_density_mc(&gamma0, &tilt, sigma, s)
    })?;
    let flat = TiltDensity::new(FunctionSpec::Const(0.0), sigma)?;
    suite.check("correlation_density_trivial", "correlation_density", |s| {
        correlation_density_mc(&gamma0, &flat, sigma, s)
    })?;

    let symmetric = IntensitySpec::new(
        sigma.law,
        MarkAnnulus::new(sigma.marks.eps(), sigma.marks.rmax())?,
        sigma.window.clone(),
    )?;
    suite.table("kappa1_symmetric", |s| {
        kappa_position_mc(1, &h, DEFAULT_CELLS_PER_AXIS, &symmetric, s)
    })?;
    let one_sided = IntensitySpec::new(
        sigma.law,
        MarkAnnulus::one_sided(sigma.marks.eps(), sigma.marks.rmax())?,
        sigma.window.clone(),
    )?;
    suite.table("kappa1_one_sided", |s| {
        kappa_position_mc(1, &h, DEFAULT_CELLS_PER_AXIS, &one_sided, s)
    })?;
    Ok(suite.rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::VelocityLaw;

    #[test]
    fn halves_split_the_first_axis() {
        let w = PositionWindow::new(vec![0.0, 1.0], vec![2.0, 3.0]).unwrap();
        let (l, r) = halves(&w);
        assert_eq!(l.upper(), &[1.0, 3.0]);
        assert_eq!(r.lower(), &[1.0, 1.0]);
        assert_eq!(l.volume() + r.volume(), w.volume());
    }

    #[test]
    fn gamma0_lies_in_the_phase_window() {
        let sigma = IntensitySpec::new(
            VelocityLaw::maxwell(2),
            MarkAnnulus::new(0.5, 2.0).unwrap(),
            PositionWindow::unit(2),
        )
        .unwrap();
        let g = reference_gamma0(&sigma).unwrap();
        assert_eq!(g.len(), 2);
        for p in g.iter() {
            assert!(sigma.window.contains(p.position()));
            assert!(sigma.marks.contains(p.velocity()));
        }
    }

    #[test]
    fn csv_line_leaves_missing_fields_empty() {
        let r = MCResult {
            estimate: 0.5,
            std_error: 0.25,
            n_samples: 4,
            closed_form: None,
            z_score: None,
        };
        assert_eq!(mc_csv_line("q", "k", &r, 9), "q,k,0.5,0.25,,,4,9");
    }
}
