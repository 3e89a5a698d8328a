//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::control::Variant;
use crate::error::{Error, Result};
use crate::mesh::GeometrySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    RateVsN,
    RateVsDofs,
    SourceId,
    DirichletControl,
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rate_vs_n" => Ok(ExperimentKind::RateVsN),
            "rate_vs_dofs" => Ok(ExperimentKind::RateVsDofs),
            "source_id" => Ok(ExperimentKind::SourceId),
            "dirichlet_control" => Ok(ExperimentKind::DirichletControl),
            _ => Err(Error::Config(format!("unknown experiment kind '{s}'"))),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::RateVsN => "rate_vs_n",
            ExperimentKind::RateVsDofs => "rate_vs_dofs",
            ExperimentKind::SourceId => "source_id",
            ExperimentKind::DirichletControl => "dirichlet_control",
        })
    }
}

/// Where `kappa` is supported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaSpec {
    /// One on the whole truncated exterior.
    Exterior,
    /// One on the control support.
    Control,
    /// The given value on the control support.
    Value(f64),
}

impl FromStr for KappaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exterior" => Ok(KappaSpec::Exterior),
            "control" => Ok(KappaSpec::Control),
            v => match v.parse::<f64>() {
                Ok(x) if x > 0.0 && x.is_finite() => Ok(KappaSpec::Value(x)),
                _ => Err(Error::Config(format!("kappa must be exterior, control or a positive number, got '{v}'"))),
            },
        }
    }
}

/// Reference solution for the penalization study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// Discrete Dirichlet solution by elimination on the same mesh.
    Dirichlet,
    /// Closed-form benchmark solution.
    Exact,
}

impl FromStr for Reference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(Reference::Dirichlet),
            "exact" => Ok(Reference::Exact),
            _ => Err(Error::Config(format!("reference must be dirichlet or exact, got '{s}'"))),
        }
    }
}

/// Pass/fail thresholds evaluated by `check`. Unset entries are skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Thresholds {
    pub slope_min: Option<f64>,
    pub slope_max: Option<f64>,
    /// Largest relative deviation of any error curve from the one at the
    /// largest penalty, at every mesh level.
    pub n_stability: Option<f64>,
    /// `||z||` non-decreasing as `xi` decreases.
    pub monotone_xi: bool,
    /// Norms at `xi <= saturation_xi` agree to `saturation_tol`.
    pub saturation_xi: Option<f64>,
    pub saturation_tol: Option<f64>,
    /// `||z(s_max)|| <= ratio_max ||z(s_min)||` at every shared `xi`.
    pub ratio_max: Option<f64>,
    /// Relative control error at the smallest `s` and `xi`.
    pub recovery_max: Option<f64>,
    /// Tracking error at the smallest `s` below that at the largest.
    pub tracking_order: bool,
    /// Every tracking error below the uncontrolled baseline.
    pub below_baseline: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub geometry: String,
    pub s: Vec<f64>,
    pub n: Vec<f64>,
    pub xi: Vec<f64>,
    pub kappa: Option<KappaSpec>,
    pub variant: Variant,
    pub noise_std: f64,
    pub seed: u64,
    pub dofs: Vec<usize>,
    pub refinements: usize,
    pub reference: Reference,
    pub lower_bound: Option<f64>,
    pub tol: f64,
    pub opt_tol: f64,
    pub max_iter: usize,
    pub output: Option<PathBuf>,
    pub workers: usize,
    pub thresholds: Thresholds,
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse '{}'", t.trim()))))
        .collect()
}

fn one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

impl ExperimentConfig {
    /// Defaults for the given kind and geometry.
    pub fn new(kind: ExperimentKind, geometry: &str) -> Self {
        let one_dim = geometry.starts_with("interval");
        ExperimentConfig {
            kind,
            geometry: geometry.to_string(),
            s: vec![0.5],
            n: vec![1e5],
            xi: vec![1e-8],
            kappa: None,
            variant: Variant::DirichletViaRobin,
            noise_std: if kind == ExperimentKind::SourceId { 0.02 } else { 0.0 },
            seed: 0,
            dofs: vec![if one_dim { 500 } else { 3000 }],
            refinements: 3,
            reference: Reference::Dirichlet,
            lower_bound: Some(0.0),
            tol: 1e-10,
            opt_tol: 1e-8,
            max_iter: 500,
            output: None,
            workers: 1,
            thresholds: Thresholds::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_lines(text).map_err(|(line, msg)| Error::Config(format!("line {line}: {msg}")))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse_lines(&text).map_err(|(line, msg)| Error::Parse { path: path.to_path_buf(), line, msg })
    }

    fn parse_lines(text: &str) -> std::result::Result<Self, (usize, String)> {
        let mut pairs = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or((k + 1, format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if pairs.iter().any(|(p, _, _): &(String, String, usize)| *p == key) {
                return Err((k + 1, format!("duplicate key '{key}'")));
            }
            pairs.push((key, value, k + 1));
        }
        let find = |name: &str| pairs.iter().find(|(k, _, _)| k == name);
        let (kind, geometry) = match (find("kind"), find("geometry")) {
            (Some((_, kv, kl)), Some((_, gv, _))) => (kv.parse::<ExperimentKind>().map_err(|e| (*kl, e.to_string()))?, gv.clone()),
            (None, _) => return Err((0, "missing key 'kind'".into())),
            (_, None) => return Err((0, "missing key 'geometry'".into())),
        };
        let mut cfg = Self::new(kind, &geometry);
        for (key, value, line) in &pairs {
            cfg.set(key, value).map_err(|e| (*line, e.to_string()))?;
        }
        cfg.validate().map_err(|e| (0, e.to_string()))?;
        Ok(cfg)
    }

    /// Sets one key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let th = &mut self.thresholds;
        match key {
            "kind" => self.kind = v.parse()?,
            "geometry" => self.geometry = v.to_string(),
            "s" => self.s = list(key, v)?,
            "n" => self.n = list(key, v)?,
            "xi" => self.xi = list(key, v)?,
            "kappa" => self.kappa = Some(v.parse()?),
            "variant" => self.variant = v.parse()?,
            "noise_std" => self.noise_std = one(key, v)?,
            "seed" => self.seed = one(key, v)?,
            "dofs" => self.dofs = list(key, v)?,
            "refinements" => self.refinements = one(key, v)?,
            "reference" => self.reference = v.parse()?,
            "lower_bound" => self.lower_bound = if v == "none" { None } else { Some(one(key, v)?) },
            "tol" => self.tol = one(key, v)?,
            "opt_tol" => self.opt_tol = one(key, v)?,
            "max_iter" => self.max_iter = one(key, v)?,
            "output" => self.output = Some(PathBuf::from(v)),
            "workers" => self.workers = one(key, v)?,
            "check.slope_min" => th.slope_min = Some(one(key, v)?),
            "check.slope_max" => th.slope_max = Some(one(key, v)?),
            "check.n_stability" => th.n_stability = Some(one(key, v)?),
            "check.monotone_xi" => th.monotone_xi = one(key, v)?,
            "check.saturation_xi" => th.saturation_xi = Some(one(key, v)?),
            "check.saturation_tol" => th.saturation_tol = Some(one(key, v)?),
            "check.ratio_max" => th.ratio_max = Some(one(key, v)?),
            "check.recovery_max" => th.recovery_max = Some(one(key, v)?),
            "check.tracking_order" => th.tracking_order = one(key, v)?,
            "check.below_baseline" => th.below_baseline = one(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let spec = self.geometry_spec()?;
        if self.s.is_empty() || self.s.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
            return bad(format!("every s must lie in (0, 1): {:?}", self.s));
        }
        if self.n.is_empty() || self.n.iter().any(|&n| !(n >= 1.0)) {
            return bad(format!("every n must be >= 1: {:?}", self.n));
        }
        if self.xi.is_empty() || self.xi.iter().any(|&x| !(x >= 0.0)) {
            return bad(format!("every xi must be >= 0: {:?}", self.xi));
        }
        if self.dofs.is_empty() || self.dofs.iter().any(|&d| d < 3) {
            return bad("dofs must list positive targets".into());
        }
        if !(self.noise_std >= 0.0) || !(self.tol > 0.0) || !(self.opt_tol > 0.0) || self.workers == 0 {
            return bad("noise_std, tol, opt_tol and workers must be positive".into());
        }
        let controlled = matches!(self.kind, ExperimentKind::SourceId | ExperimentKind::DirichletControl);
        let has_control = match &spec {
            GeometrySpec::Interval { control, .. } => !control.is_empty(),
            GeometrySpec::DiskInDisk { control_annulus, .. } => control_annulus.is_some(),
            GeometrySpec::SquareInDisk { control_frame, .. } => control_frame.is_some(),
            GeometrySpec::PolygonInDisk { control, .. } => control.is_some(),
        };
        if controlled && !has_control {
            return bad(format!("geometry '{}' has no control support", self.geometry));
        }
        if !controlled && !matches!(self.geometry.as_str(), "interval" | "disk") {
            return bad(format!("rate studies need a benchmark geometry (interval or disk), got '{}'", self.geometry));
        }
        Ok(())
    }

    pub fn geometry_spec(&self) -> Result<GeometrySpec> {
        GeometrySpec::from_name(&self.geometry)
    }

    /// `kappa` support, defaulting to the whole exterior for rate studies
    /// and to the control support otherwise.
    pub fn kappa_spec(&self) -> KappaSpec {
        self.kappa.unwrap_or(match self.kind {
            ExperimentKind::RateVsN | ExperimentKind::RateVsDofs => KappaSpec::Exterior,
            _ => KappaSpec::Control,
        })
    }

    /// Target dof counts of the mesh levels: `dofs` as given when it lists
    /// several, otherwise `refinements` levels doubling up to `dofs`.
    pub fn mesh_targets(&self) -> Vec<usize> {
        if self.dofs.len() > 1 {
            return self.dofs.clone();
        }
        let top = self.dofs[0];
        (0..self.refinements).rev().map(|k| (top >> k).max(3)).collect()
    }

    /// The effective configuration as `key = value` lines, defaults
    /// included.
    pub fn echo(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
        }
        let opt = |v: Option<f64>| v.map(|x| x.to_string());
        let kappa = match self.kappa_spec() {
            KappaSpec::Exterior => "exterior".to_string(),
            KappaSpec::Control => "control".to_string(),
            KappaSpec::Value(v) => v.to_string(),
        };
        let reference = match self.reference {
            Reference::Dirichlet => "dirichlet",
            Reference::Exact => "exact",
        };
        let th = &self.thresholds;
        let mut lines = vec![
            ("kind", Some(self.kind.to_string())),
            ("geometry", Some(self.geometry.clone())),
            ("s", Some(join(&self.s))),
            ("n", Some(join(&self.n))),
            ("xi", Some(join(&self.xi))),
            ("kappa", Some(kappa)),
            ("variant", Some(self.variant.to_string())),
            ("noise_std", Some(self.noise_std.to_string())),
            ("seed", Some(self.seed.to_string())),
            ("dofs", Some(join(&self.dofs))),
            ("refinements", Some(self.refinements.to_string())),
            ("reference", Some(reference.to_string())),
            ("lower_bound", Some(self.lower_bound.map_or("none".to_string(), |v| v.to_string()))),
            ("tol", Some(self.tol.to_string())),
            ("opt_tol", Some(self.opt_tol.to_string())),
            ("max_iter", Some(self.max_iter.to_string())),
            ("workers", Some(self.workers.to_string())),
            ("check.slope_min", opt(th.slope_min)),
            ("check.slope_max", opt(th.slope_max)),
            ("check.n_stability", opt(th.n_stability)),
            ("check.saturation_xi", opt(th.saturation_xi)),
            ("check.saturation_tol", opt(th.saturation_tol)),
            ("check.ratio_max", opt(th.ratio_max)),
            ("check.recovery_max", opt(th.recovery_max)),
        ];
        lines.push(("check.monotone_xi", th.monotone_xi.then(|| "true".to_string())));
        lines.push(("check.tracking_order", th.tracking_order.then(|| "true".to_string())));
        lines.push(("check.below_baseline", th.below_baseline.then(|| "true".to_string())));
        let mut out = String::new();
        for (k, v) in lines {
            if let Some(v) = v {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}
