//! Run configuration: a `key = value` text file plus overrides.
//!
//! Lines starting with `#` and blank lines are ignored. Keys and defaults:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `N` | 64 | sites per axis |
//! | `a` | 0.1 | lattice spacing |
//! | `m` | 1 | particle mass |
//! | `dtau` | `a^2/4` | timestep |
//! | `potential` | `harmonic` | `free`, `coulomb`, `harmonic`, `dodecahedron`, `file` |
//! | `depth` | -100 | dodecahedron well depth |
//! | `potential_file` | | potential file for `potential = file` |
//! | `tol` | 1e-6 | relative change between checks that counts as converged |
//! | `check_freq` | 100 | steps between checks |
//! | `snap_freq` | `10 * check_freq` | steps between snapshots (0 disables) |
//! | `max_snapshots` | 4 | snapshots retained (most recent) |
//! | `max_steps` | 1000000 | step budget per stage |
//! | `polish_steps` | `10 * check_freq` | further steps per excited state |
//! | `excited_count` | 0 | excited states extracted from snapshots |
//! | `symmetry` | | comma-separated constraints such as `Az,Sx` |
//! | `workers` | 1 | slab count `M` (must divide every `N`) |
//! | `transport` | `inproc` | `inproc` or `tcp` |
//! | `endpoints` | | comma-separated `host:port`, one per rank (tcp) |
//! | `timeout_secs` | 120 | transport receive timeout |
//! | `seed` | 1 | random initial field seed |
//! | `initial` | | wavefunction file used instead of a random start |
//! | `bootstrap` | | comma-separated coarse `N` values run before `N` |
//! | `carry` | 1 | coefficients of ground, first excited, ... carried between stages |
//! | `output_dir` | | directory for observables, wavefunctions and summary |

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::evolve::{self, EvolveParams};
use crate::lattice::LatticeSpec;
use crate::potential::Potential;
use crate::states::SymmetryConstraint;

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialChoice {
    Free,
    Coulomb,
    Harmonic,
    Dodecahedron { depth: f64 },
    File(PathBuf),
}

impl PotentialChoice {
    /// The analytic potential, if this is not a file.
    pub fn analytic(&self) -> Option<Potential<f64>> {
        Some(match self {
            Self::Free => Potential::Free,
            Self::Coulomb => Potential::Coulomb,
            Self::Harmonic => Potential::Harmonic,
            Self::Dodecahedron { depth } => Potential::Dodecahedron { depth: *depth },
            Self::File(_) => return None,
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Free => "free",
            Self::Coulomb => "coulomb",
            Self::Harmonic => "harmonic",
            Self::Dodecahedron { .. } => "dodecahedron",
            Self::File(_) => "file",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportChoice {
    InProc,
    Tcp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub a: f64,
    pub m: f64,
    pub dtau: Option<f64>,
    pub potential: PotentialChoice,
    pub tol: f64,
    pub check_freq: u64,
    pub snap_freq: Option<u64>,
    pub max_snapshots: usize,
    pub max_steps: u64,
    pub polish_steps: Option<u64>,
    pub excited_count: usize,
    pub symmetry: Vec<SymmetryConstraint>,
    pub workers: usize,
    pub transport: TransportChoice,
    pub endpoints: Vec<SocketAddr>,
    pub timeout_secs: f64,
    pub seed: u64,
    pub initial: Option<PathBuf>,
    pub bootstrap: Vec<usize>,
    pub carry: Vec<f64>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 64,
            a: 0.1,
            m: 1.0,
            dtau: None,
            potential: PotentialChoice::Harmonic,
            tol: 1e-6,
            check_freq: 100,
            snap_freq: None,
            max_snapshots: 4,
            max_steps: 1_000_000,
            polish_steps: None,
            excited_count: 0,
            symmetry: Vec::new(),
            workers: 1,
            transport: TransportChoice::InProc,
            endpoints: Vec::new(),
            timeout_secs: 120.0,
            seed: 1,
            initial: None,
            bootstrap: Vec::new(),
            carry: vec![1.0],
            output_dir: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

impl RunConfig {
    /// Parses `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut depth = None;
        let mut file = None;
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            config.apply(k.trim(), v.trim(), &mut depth, &mut file)?;
        }
        config.finish_potential(depth, file)?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides in order.
    pub fn with_overrides<'s>(mut self, overrides: impl IntoIterator<Item = &'s str>) -> Result<Self> {
        let mut depth = None;
        let mut file = None;
        if let PotentialChoice::Dodecahedron { depth: d } = self.potential {
            depth = Some(d);
        }
        if let PotentialChoice::File(ref p) = self.potential {
            file = Some(p.clone());
        }
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("override {o:?}: expected key=value")))?;
            self.apply(k.trim(), v.trim(), &mut depth, &mut file)?;
        }
        self.finish_potential(depth, file)?;
        Ok(self)
    }

    fn apply(&mut self, key: &str, v: &str, depth: &mut Option<f64>, file: &mut Option<PathBuf>) -> Result<()> {
        match key {
            "N" | "n" => self.n = parse(key, v)?,
            "a" => self.a = parse(key, v)?,
            "m" => self.m = parse(key, v)?,
            "dtau" => self.dtau = Some(parse(key, v)?),
            "potential" => {
                self.potential = match v.to_ascii_lowercase().as_str() {
                    "free" => PotentialChoice::Free,
                    "coulomb" => PotentialChoice::Coulomb,
                    "harmonic" => PotentialChoice::Harmonic,
                    "dodecahedron" => PotentialChoice::Dodecahedron { depth: -100.0 },
                    "file" => PotentialChoice::File(PathBuf::new()),
                    _ => return Err(Error::Config(format!("unknown potential {v:?}"))),
                }
            }
            "depth" => *depth = Some(parse(key, v)?),
            "potential_file" => *file = Some(PathBuf::from(v)),
            "tol" => self.tol = parse(key, v)?,
            "check_freq" => self.check_freq = parse(key, v)?,
            "snap_freq" => self.snap_freq = Some(parse(key, v)?),
            "max_snapshots" => self.max_snapshots = parse(key, v)?,
            "max_steps" => self.max_steps = parse(key, v)?,
            "polish_steps" => self.polish_steps = Some(parse(key, v)?),
            "excited_count" => self.excited_count = parse(key, v)?,
            "symmetry" => self.symmetry = list(key, v)?,
            "workers" | "M" => self.workers = parse(key, v)?,
            "transport" => {
                self.transport = match v.to_ascii_lowercase().as_str() {
                    "inproc" => TransportChoice::InProc,
                    "tcp" => TransportChoice::Tcp,
                    _ => return Err(Error::Config(format!("unknown transport {v:?}"))),
                }
            }
            "endpoints" => self.endpoints = list(key, v)?,
            "timeout_secs" => self.timeout_secs = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "initial" => self.initial = (!v.is_empty()).then(|| PathBuf::from(v)),
            "bootstrap" => self.bootstrap = list(key, v)?,
            "carry" => self.carry = list(key, v)?,
            "output_dir" => self.output_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    fn finish_potential(&mut self, depth: Option<f64>, file: Option<PathBuf>) -> Result<()> {
        match &mut self.potential {
            PotentialChoice::Dodecahedron { depth: d } => {
                if let Some(v) = depth {
                    *d = v;
                }
            }
            PotentialChoice::File(p) => {
                if let Some(f) = file {
                    *p = f;
                }
                if p.as_os_str().is_empty() {
                    return Err(Error::Config("potential = file needs potential_file".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn dtau(&self) -> f64 {
        self.dtau.unwrap_or(self.a * self.a / 4.0)
    }

    pub fn spec(&self) -> Result<LatticeSpec<f64>> {
        LatticeSpec::new(self.n, self.a, self.m, self.dtau())
    }

    /// Lattice of every stage, coarsest first, at fixed box length; the
    /// timestep scales with `a^2` from the configured value.
    pub fn stage_specs(&self) -> Result<Vec<LatticeSpec<f64>>> {
        let fine = self.spec()?;
        let length = fine.length();
        self.bootstrap
            .iter()
            .copied()
            .chain(std::iter::once(self.n))
            .map(|n| {
                if n == self.n {
                    return Ok(fine);
                }
                let a = length / n as f64;
                LatticeSpec::new(n, a, self.m, self.dtau() * (a / self.a).powi(2))
            })
            .collect()
    }

    pub fn evolve_params(&self) -> EvolveParams<f64> {
        EvolveParams {
            tol: self.tol,
            check_freq: self.check_freq,
            snap_freq: self.snap_freq.unwrap_or(10 * self.check_freq),
            max_snapshots: self.max_snapshots,
            max_steps: self.max_steps,
            constraints: self.symmetry.clone(),
            polish_steps: self.polish_steps.unwrap_or(10 * self.check_freq),
            divergence_grace: 32,
        }
    }

    /// Checks everything that can be checked before a run starts.
    pub fn validate(&self) -> Result<()> {
        let specs = self.stage_specs()?;
        for s in &specs {
            evolve::check_stability(s)?;
            if s.n() % self.workers.max(1) != 0 || self.workers == 0 {
                return Err(Error::IndivisiblePartition { n: s.n(), m: self.workers });
            }
        }
        self.evolve_params().validate()?;
        if self.bootstrap.windows(2).any(|w| w[0] >= w[1]) || self.bootstrap.last().is_some_and(|&b| b >= self.n) {
            return Err(Error::Config("bootstrap sizes must increase strictly and stay below N".into()));
        }
        if !self.bootstrap.is_empty() && matches!(self.potential, PotentialChoice::File(_)) {
            return Err(Error::Config("a potential file fixes N; it cannot be combined with bootstrap".into()));
        }
        if self.carry.is_empty() || self.carry.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("carry needs at least one finite coefficient".into()));
        }
        if self.transport == TransportChoice::Tcp && self.endpoints.len() != self.workers {
            return Err(Error::Config(format!(
                "tcp transport needs one endpoint per worker ({} endpoints, {} workers)",
                self.endpoints.len(),
                self.workers
            )));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::Config("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    /// The configuration as `key = value` text that [`RunConfig::parse`] reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |xs: Vec<String>| xs.join(",");
        let _ = writeln!(s, "N = {}", self.n);
        let _ = writeln!(s, "a = {:?}", self.a);
        let _ = writeln!(s, "m = {:?}", self.m);
        let _ = writeln!(s, "dtau = {:?}", self.dtau());
        let _ = writeln!(s, "potential = {}", self.potential.name());
        match &self.potential {
            PotentialChoice::Dodecahedron { depth } => {
                let _ = writeln!(s, "depth = {depth:?}");
            }
            PotentialChoice::File(p) => {
                let _ = writeln!(s, "potential_file = {}", p.display());
            }
            _ => {}
        }
        let p = self.evolve_params();
        let _ = writeln!(s, "tol = {:?}", self.tol);
        let _ = writeln!(s, "check_freq = {}", p.check_freq);
        let _ = writeln!(s, "snap_freq = {}", p.snap_freq);
        let _ = writeln!(s, "max_snapshots = {}", p.max_snapshots);
        let _ = writeln!(s, "max_steps = {}", p.max_steps);
        let _ = writeln!(s, "polish_steps = {}", p.polish_steps);
        let _ = writeln!(s, "excited_count = {}", self.excited_count);
        let _ = writeln!(s, "symmetry = {}", join(self.symmetry.iter().map(|c| c.to_string()).collect()));
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(
            s,
            "transport = {}",
            if self.transport == TransportChoice::Tcp { "tcp" } else { "inproc" }
        );
        let _ = writeln!(s, "endpoints = {}", join(self.endpoints.iter().map(|e| e.to_string()).collect()));
        let _ = writeln!(s, "timeout_secs = {:?}", self.timeout_secs);
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(p) = &self.initial {
            let _ = writeln!(s, "initial = {}", p.display());
        }
        let _ = writeln!(s, "bootstrap = {}", join(self.bootstrap.iter().map(|n| n.to_string()).collect()));
        let _ = writeln!(s, "carry = {}", join(self.carry.iter().map(|c| format!("{c:?}")).collect()));
        if let Some(p) = &self.output_dir {
            let _ = writeln!(s, "output_dir = {}", p.display());
        }
        s
    }
}
