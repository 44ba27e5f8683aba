//! Run configuration: flat `key = value` text with `[section]` headers.
//!
//! ```text
//! [intensity]
//! d = 1
//! alpha = 1
//! beta = 2
//! eps = 0.5
//! rmax = 2
//! box_lower = 0
//! box_upper = 1
//! # one_sided = true     keeps only velocities with v_1 > 0
//!
//! [run]
//! seed = 42
//! n_samples = 100000
//! chunks = 4
//! n_max = 12
//!
//! [functions]
//! psi = -0.5*ind(v:[0.5,2]; x:[0,1])
//! h = 1
//!
//! [output]
//! csv = results.csv
//! manifest = manifest.jsonl
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. Vectors are comma
//! separated. `CONELAB_CHUNKS` in the environment overrides `run.chunks`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use conelab::intensity::IntensitySpec;
use conelab::{Error, MarkAnnulus, McSettings, PositionWindow, Result, VelocityLaw};

pub const CHUNKS_ENV: &str = "CONELAB_CHUNKS";

const SECTIONS: [&str; 4] = ["intensity", "run", "functions", "output"];
const INTENSITY_KEYS: [&str; 8] = [
    "d", "alpha", "beta", "eps", "rmax", "box_lower", "box_upper", "one_sided",
];
const RUN_KEYS: [&str; 4] = ["seed", "n_samples", "chunks", "n_max"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub seed: u64,
    pub n_samples: usize,
    pub chunks: usize,
    pub n_max: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            seed: 0,
            n_samples: 100_000,
            chunks: 1,
            n_max: 12,
        }
    }
}

impl RunSettings {
    pub fn mc(&self) -> McSettings {
        McSettings::new(self.n_samples, self.seed).with_chunks(self.chunks)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sigma: IntensitySpec,
    pub run: RunSettings,
    pub functions: BTreeMap<String, String>,
    pub output: BTreeMap<String, PathBuf>,
}

type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn parse_sections(text: &str) -> Result<Sections> {
    let mut out = Sections::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| invalid(format!("config line {line_no}: {message}"));
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| bad(format!("malformed section header `{line}`")))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(bad(format!("unknown section `{name}`")));
            }
            out.entry(name.to_string()).or_default();
            current = Some(name.to_string());
            continue;
        }
        let section = current
            .as_ref()
            .ok_or_else(|| bad("key outside of any section".into()))?;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected `key = value`, found `{line}`")))?;
        let key = key.trim();
        let known: &[&str] = match section.as_str() {
            "intensity" => &INTENSITY_KEYS,
            "run" => &RUN_KEYS,
            _ => &[],
        };
        if !known.is_empty() && !known.contains(&key) {
            return Err(bad(format!("unknown key `{key}` in [{section}]")));
        }
        let entry = out.get_mut(section).expect("section registered");
        if entry.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(bad(format!("duplicate key `{key}` in [{section}]")));
        }
    }
    Ok(out)
}

fn invalid(msg: String) -> Error {
    Error::InvalidParameter(msg)
}

fn get<'a>(sections: &'a Sections, section: &str, key: &str) -> Option<&'a str> {
    sections.get(section)?.get(key).map(String::as_str)
}

fn require<'a>(sections: &'a Sections, section: &str, key: &str) -> Result<&'a str> {
    get(sections, section, key).ok_or_else(|| invalid(format!("missing `{key}` in [{section}]")))
}

fn number<T: std::str::FromStr>(raw: &str, key: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| invalid(format!("`{key}` is not a valid number: `{raw}`")))
}

pub fn parse_vector(raw: &str, key: &str) -> Result<Vec<f64>> {
    raw.split(',').map(|s| number(s.trim(), key)).collect()
}

fn parse_bool(raw: &str, key: &str) -> Result<bool> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(format!("`{key}` must be true or false, not `{raw}`"))),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let s = parse_sections(text)?;
        let d: usize = number(require(&s, "intensity", "d")?, "d")?;
        let alpha: f64 = number(require(&s, "intensity", "alpha")?, "alpha")?;
        let beta: f64 = number(require(&s, "intensity", "beta")?, "beta")?;
        let eps: f64 = number(require(&s, "intensity", "eps")?, "eps")?;
        let rmax: f64 = number(require(&s, "intensity", "rmax")?, "rmax")?;
        let lower = parse_vector(require(&s, "intensity", "box_lower")?, "box_lower")?;
        let upper = parse_vector(require(&s, "intensity", "box_upper")?, "box_upper")?;
        let one_sided = match get(&s, "intensity", "one_sided") {
            Some(raw) => parse_bool(raw, "one_sided")?,
            None => false,
        };
        let law = VelocityLaw::new(d, alpha, beta)?;
        let marks = if one_sided {
            MarkAnnulus::one_sided(eps, rmax)?
        } else {
            MarkAnnulus::new(eps, rmax)?
        };
        let sigma = IntensitySpec::new(law, marks, PositionWindow::new(lower, upper)?)?;

        let mut run = RunSettings::default();
        if let Some(raw) = get(&s, "run", "seed") {
            run.seed = number(raw, "seed")?;
        }
        if let Some(raw) = get(&s, "run", "n_samples") {
            run.n_samples = number(raw, "n_samples")?;
        }
        if let Some(raw) = get(&s, "run", "chunks") {
            run.chunks = number(raw, "chunks")?;
        }
        if let Some(raw) = get(&s, "run", "n_max") {
            run.n_max = number(raw, "n_max")?;
        }
        if run.n_samples == 0 || run.chunks == 0 {
            return Err(invalid("n_samples and chunks must be at least 1".into()));
        }

        let functions = s.get("functions").cloned().unwrap_or_default();
        let output = s
            .get("output")
            .map(|m| m.iter().map(|(k, v)| (k.clone(), PathBuf::from(v))).collect())
            .unwrap_or_default();
        Ok(RunConfig {
            sigma,
            run,
            functions,
            output,
        })
    }

    /// Applies the `CONELAB_CHUNKS` override, if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(CHUNKS_ENV) {
            let chunks: usize = number(raw.trim(), CHUNKS_ENV)?;
            if chunks == 0 {
                return Err(invalid(format!("{CHUNKS_ENV} must be at least 1")));
            }
            self.run.chunks = chunks;
        }
        Ok(())
    }
}
