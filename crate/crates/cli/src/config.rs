//! Flat `key = value` experiment files. A `[section]` line prefixes the keys
//! below it, so `[panel]` followed by `seed = 3` sets `panel.seed`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use bruijn_regret::{Engine, ExpertPanel, HistoryState, Payoff};

/// Every key the parser accepts.
pub const KEYS: &[&str] = &[
    "panel.file",
    "panel.family",
    "panel.n",
    "panel.d",
    "panel.denominator",
    "panel.values",
    "panel.seed",
    "payoff.spec",
    "sweep.horizons",
    "sweep.probes",
    "engine.name",
    "engine.quad_order",
    "engine.f_grid",
    "value.horizon",
    "value.day",
    "value.x",
    "value.state",
    "simulate.horizon",
    "simulate.investor",
    "simulate.market",
    "simulate.runs",
    "simulate.x0",
    "simulate.state",
    "simulate.block_k",
    "local.k_max",
    "local.eps",
    "local.hessian",
    "local.gradient",
    "local.f_grid",
    "output.dir",
    "output.timing",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub enum PanelSource {
    File(PathBuf),
    /// Two experts predicting `+1` and `-1` on every history.
    Static { d: usize },
    Constant { d: usize, values: Vec<f64> },
    Random { n: usize, d: usize, denominator: u32, seed: u64 },
}

impl PanelSource {
    pub fn load(&self) -> Result<ExpertPanel> {
        Ok(match self {
            PanelSource::File(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExpertPanel::parse(&text)?
            }
            PanelSource::Static { d } => ExpertPanel::constant(*d, &[1.0, -1.0])?,
            PanelSource::Constant { d, values } => ExpertPanel::constant(*d, values)?,
            PanelSource::Random { n, d, denominator, seed } => ExpertPanel::random_grid(*n, *d, *denominator, *seed)?,
        })
    }
}

/// A probe point `(x, t)`; `x = None` means the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub x: Option<Vec<f64>>,
    pub t: f64,
}

impl Probe {
    pub fn point(&self, n: usize) -> Result<Vec<f64>> {
        match &self.x {
            None => Ok(vec![0.0; n]),
            Some(x) if x.len() == n => Ok(x.clone()),
            Some(x) => bail!("probe has {} coordinates for {n} experts", x.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockRule {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub panel: PanelSource,
    pub payoff: Payoff,
    pub horizons: Vec<usize>,
    pub probes: Vec<Probe>,
    /// `None` picks an engine per query.
    pub engine: Option<Engine>,
    pub quad_order: Option<usize>,
    pub f_grid: f64,
    pub value_horizon: usize,
    pub value_day: usize,
    pub value_x: Option<Vec<f64>>,
    pub value_state: Option<String>,
    pub sim_horizon: usize,
    pub investor: String,
    pub market: String,
    pub runs: usize,
    pub sim_x0: Option<Vec<f64>>,
    pub sim_state: Option<String>,
    pub block_k: BlockRule,
    pub local_k_max: usize,
    pub local_eps: Vec<f64>,
    pub local_hessian: Option<Vec<Vec<f64>>>,
    pub local_gradient: Option<Vec<f64>>,
    pub local_f_grid: f64,
    pub out_dir: PathBuf,
    pub timing: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            panel: PanelSource::Static { d: 1 },
            payoff: Payoff::Max,
            horizons: vec![64, 128, 256, 512, 1024, 2048, 4096],
            probes: vec![Probe { x: None, t: 0.0 }],
            engine: None,
            quad_order: None,
            f_grid: 1e-3,
            value_horizon: 10,
            value_day: 1,
            value_x: None,
            value_state: None,
            sim_horizon: 10,
            investor: "exact".into(),
            market: "exhaustive".into(),
            runs: 1,
            sim_x0: None,
            sim_state: None,
            block_k: BlockRule::Auto,
            local_k_max: 10,
            local_eps: vec![1e-2, 1e-3, 1e-4],
            local_hessian: None,
            local_gradient: None,
            local_f_grid: 1e-3,
            out_dir: PathBuf::from("out"),
            timing: false,
            seed: 0,
        }
    }
}

/// Split a config file into `section.key -> value`.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut section = String::new();
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
        let key = if section.is_empty() { k.trim().to_string() } else { format!("{section}.{}", k.trim()) };
        if !KEYS.contains(&key.as_str()) {
            bail!("line {}: unknown key `{key}`", i + 1);
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            bail!("line {}: `{key}` given twice", i + 1);
        }
    }
    Ok(out)
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| anyhow!("`{p}`: {e}")))
        .collect()
}

/// `x_1,...,x_n @ t` entries separated by `;`. An empty point is the origin.
fn parse_probes(s: &str) -> Result<Vec<Probe>> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (x, t) = p.split_once('@').ok_or_else(|| anyhow!("probe `{p}` needs `@ t`"))?;
            let x = x.trim();
            Ok(Probe { x: if x.is_empty() { None } else { Some(parse_list(x)?) }, t: t.trim().parse()? })
        })
        .collect()
}

fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';').map(parse_list).collect()
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base)
    }

    /// Parse config text; relative panel paths resolve against `base`.
    pub fn from_text(text: &str, base: &Path) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let mut cfg = Self::default();
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let num = |k: &str| -> Result<Option<u64>> {
            get(k).map(|v| v.parse::<u64>().with_context(|| format!("{k} = {v}"))).transpose()
        };
        if let Some(seed) = num("seed")? {
            cfg.seed = seed;
        }
        let d = num("panel.d")?.unwrap_or(1) as usize;
        cfg.panel = match (get("panel.file"), get("panel.family")) {
            (Some(_), Some(_)) => bail!("give either panel.file or panel.family"),
            (Some(file), None) => PanelSource::File(base.join(file)),
            (None, None) | (None, Some("static")) => PanelSource::Static { d },
            (None, Some("constant")) => PanelSource::Constant {
                d,
                values: parse_list(get("panel.values").ok_or_else(|| anyhow!("panel.values is required"))?)?,
            },
            (None, Some("random")) => PanelSource::Random {
                n: num("panel.n")?.unwrap_or(2) as usize,
                d,
                denominator: num("panel.denominator")?.unwrap_or(4) as u32,
                seed: num("panel.seed")?.unwrap_or(cfg.seed),
            },
            (None, Some(other)) => bail!("unknown panel family `{other}`"),
        };
        if let Some(s) = get("payoff.spec") {
            cfg.payoff = s.parse()?;
        }
        if let Some(s) = get("sweep.horizons") {
            cfg.horizons = parse_list(s)?;
        }
        if let Some(s) = get("sweep.probes") {
            cfg.probes = parse_probes(s)?;
        }
        if let Some(s) = get("engine.name") {
            cfg.engine = if s == "auto" { None } else { Some(s.parse()?) };
        }
        if let Some(v) = num("engine.quad_order")? {
            cfg.quad_order = (v > 0).then_some(v as usize);
        }
        if let Some(s) = get("engine.f_grid") {
            cfg.f_grid = s.parse()?;
        }
        if let Some(v) = num("value.horizon")? {
            cfg.value_horizon = v as usize;
        }
        if let Some(v) = num("value.day")? {
            cfg.value_day = v as usize;
        }
        if let Some(s) = get("value.x") {
            cfg.value_x = Some(parse_list(s)?);
        }
        cfg.value_state = get("value.state").map(String::from);
        if let Some(v) = num("simulate.horizon")? {
            cfg.sim_horizon = v as usize;
        }
        if let Some(s) = get("simulate.investor") {
            cfg.investor = s.to_string();
        }
        if let Some(s) = get("simulate.market") {
            cfg.market = s.to_string();
        }
        if let Some(v) = num("simulate.runs")? {
            cfg.runs = v as usize;
        }
        if let Some(s) = get("simulate.x0") {
            cfg.sim_x0 = Some(parse_list(s)?);
        }
        cfg.sim_state = get("simulate.state").map(String::from);
        if let Some(s) = get("simulate.block_k") {
            cfg.block_k = if s == "auto" { BlockRule::Auto } else { BlockRule::Fixed(s.parse()?) };
        }
        if let Some(v) = num("local.k_max")? {
            cfg.local_k_max = v as usize;
        }
        if let Some(s) = get("local.eps") {
            cfg.local_eps = parse_list(s)?;
        }
        if let Some(s) = get("local.hessian") {
            cfg.local_hessian = Some(parse_matrix(s)?);
        }
        if let Some(s) = get("local.gradient") {
            cfg.local_gradient = Some(parse_list(s)?);
        }
        if let Some(s) = get("local.f_grid") {
            cfg.local_f_grid = s.parse()?;
        }
        if let Some(s) = get("output.dir") {
            cfg.out_dir = base.join(s);
        }
        if let Some(s) = get("output.timing") {
            cfg.timing = s.parse()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let PanelSource::File(p) = &self.panel {
            if !p.is_file() {
                bail!("panel file {} does not exist", p.display());
            }
        }
        if self.horizons.iter().any(|&n| n < 2) {
            bail!("sweep horizons must be at least 2");
        }
        for (name, v) in [("engine.f_grid", self.f_grid), ("local.f_grid", self.local_f_grid)] {
            if !(v > 0.0) {
                bail!("{name} must be positive");
            }
        }
        if self.local_eps.iter().any(|e| !(*e > 0.0)) {
            bail!("local.eps entries must be positive");
        }
        if self.probes.iter().any(|p| !(0.0..=1.0).contains(&p.t)) {
            bail!("probe times must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn state(&self, text: Option<&str>, panel: &ExpertPanel) -> Result<HistoryState> {
        match text {
            Some(s) => {
                let m: HistoryState = s.parse()?;
                if m.window() != panel.window() {
                    bail!("state {s} does not match window {}", panel.window());
                }
                Ok(m)
            }
            None => Ok(panel.states()[0]),
        }
    }
}
