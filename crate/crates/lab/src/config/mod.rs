//! Typed experiment configuration on top of [`syntax`].
//!
//! Every key is known to the schema; anything else is an error. Optional
//! keys stay `None` in the typed model so that serializing a parsed file
//! writes back exactly the keys it had.

pub mod syntax;

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;

use syntax::{format_value, parse_document, Diagnostic, Entry, Pos, Spanned, Value};

pub const SCHEMA_VERSION: i64 = 1;

/// All diagnostics found in one document, sorted by position.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError(pub Vec<Diagnostic>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, d) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    E4,
    E5,
}

impl ExperimentId {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::E1 => "E1",
            ExperimentId::E2 => "E2",
            ExperimentId::E3 => "E3",
            ExperimentId::E4 => "E4",
            ExperimentId::E5 => "E5",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "E1" => ExperimentId::E1,
            "E2" => ExperimentId::E2,
            "E3" => ExperimentId::E3,
            "E4" => ExperimentId::E4,
            "E5" => ExperimentId::E5,
            _ => return None,
        })
    }
}

/// Hopping amplitude for one displacement; spin-diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct Hop {
    pub shift: Vec<i64>,
    pub amp: f64,
    pub amp_im: Option<f64>,
}

/// One contribution to a site-dependent on-site field. Directions are 1-based.
#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    Uniform {
        value: f64,
    },
    /// `value·(−1)^{Σ coordinates}`
    Staggered {
        value: f64,
    },
    Linear {
        direction: usize,
        value: f64,
    },
    Quadratic {
        direction: usize,
        value: f64,
    },
    Site {
        site: Vec<i64>,
        value: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub distance: u64,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Flux {
    pub value: f64,
    pub hop: usize,
    pub gauge: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeConfig {
    pub sizes: Vec<usize>,
    pub closed: Option<usize>,
    pub spin: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub particles: usize,
    pub mu: Option<f64>,
    pub hopping: Vec<Hop>,
    pub onsite: Vec<Field>,
    pub density: Vec<Pair>,
    pub flux: Option<Flux>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BridgeName {
    Exponential,
    Quintic,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PatchConfig {
    pub lowest: Option<usize>,
    pub window: Option<(f64, f64)>,
    pub gap_floor: Option<f64>,
    pub g_tilde: Option<f64>,
    pub bridge: Option<BridgeName>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProfileConfig {
    Linear { slope: f64, offset: f64 },
    Constant { value: f64 },
    Bump { center: f64, width: f64, height: f64 },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PerturbationConfig {
    pub direction: Option<usize>,
    pub profile: Option<ProfileConfig>,
    pub hopping: Vec<Hop>,
    pub onsite: Vec<Field>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservablesConfig {
    /// Sites (coordinate tuples) whose occupation is measured.
    pub density: Vec<Vec<i64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub epsilon: Vec<f64>,
    pub n: Vec<usize>,
    pub time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SwitchConfig {
    Smoothstep { order: usize },
    ExpBump,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingConfig {
    pub duration: f64,
    pub epsilon: Vec<f64>,
    pub order: usize,
    pub kinds: Vec<SwitchConfig>,
    pub end_time: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrategyName {
    Jet,
    FiniteDifference,
    Auto,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriveConfig {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpacetimeConfig {
    pub epsilon: f64,
    pub order: usize,
    pub delta: Option<f64>,
    pub times: Vec<f64>,
    pub flat_times: Vec<f64>,
    pub strategy: Option<StrategyName>,
    pub drive: Option<DriveConfig>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HallConfig {
    pub twist: Option<usize>,
    pub order: Option<usize>,
    pub shift: Option<f64>,
    /// The model is symmetric enough that both conductivities must vanish.
    pub control: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChecksConfig {
    pub random_operators: Option<usize>,
    pub monomial_roundtrips: Option<usize>,
    pub bound_instances: Option<usize>,
    pub energy_shift: Option<f64>,
    pub identity_epsilon: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodName {
    Magnus4,
    Rk4,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntegratorConfig {
    pub method: Option<MethodName>,
    pub step: Option<f64>,
    pub reunitarize_every: Option<usize>,
    pub self_check: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TolerancesConfig {
    /// Step-halving tolerance of the propagator.
    pub self_convergence: Option<f64>,
    /// Time step of finite-difference derivatives.
    pub fd_step: Option<f64>,
    /// Flux step of the finite-difference `∂_α P`.
    pub alpha_step: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<String>,
    pub timings: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub schema_version: i64,
    pub experiments: Vec<ExperimentId>,
    pub seed: Option<u64>,
    pub lattice: LatticeConfig,
    pub model: ModelConfig,
    pub patch: PatchConfig,
    pub perturbation: PerturbationConfig,
    pub observables: ObservablesConfig,
    pub sweep: SweepConfig,
    pub switching: Option<SwitchingConfig>,
    pub spacetime: Option<SpacetimeConfig>,
    pub hall: Option<HallConfig>,
    pub checks: ChecksConfig,
    pub integrator: IntegratorConfig,
    pub tolerances: TolerancesConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn dim(&self) -> usize {
        self.lattice.sizes.len()
    }

    pub fn closed(&self) -> usize {
        self.lattice.closed.unwrap_or(0)
    }

    pub fn spin(&self) -> usize {
        self.lattice.spin.unwrap_or(1)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn runs(&self, e: ExperimentId) -> bool {
        self.experiments.contains(&e)
    }
}

// ---------------------------------------------------------------------------
// reading

type Diags = RefCell<Vec<Diagnostic>>;

fn report(d: &Diags, pos: Pos, msg: impl Into<String>) {
    d.borrow_mut().push(Diagnostic::new(pos, msg));
}

/// Keyed access to a set of entries that remembers which keys were used.
struct Reader<'a> {
    entries: Vec<(&'a str, Pos, &'a Spanned)>,
    used: RefCell<Vec<bool>>,
    /// Where "missing key" diagnostics point.
    anchor: Pos,
    prefix: String,
    diags: &'a Diags,
}

impl<'a> Reader<'a> {
    fn new(entries: Vec<(&'a str, Pos, &'a Spanned)>, anchor: Pos, prefix: &str, diags: &'a Diags) -> Self {
        let n = entries.len();
        Reader {
            entries,
            used: RefCell::new(vec![false; n]),
            anchor,
            prefix: prefix.to_string(),
            diags,
        }
    }

    fn full(&self, key: &str) -> String {
        format!("{}{}", self.prefix, key)
    }

    fn raw(&self, key: &str) -> Option<&'a Spanned> {
        let k = self.entries.iter().position(|(name, _, _)| *name == key)?;
        self.used.borrow_mut()[k] = true;
        Some(self.entries[k].2)
    }

    fn opt<T>(&self, key: &str, conv: impl Fn(&Spanned, &str, &Diags) -> Option<T>) -> Option<T> {
        let v = self.raw(key)?;
        conv(v, &self.full(key), self.diags)
    }

    fn req<T>(&self, key: &str, conv: impl Fn(&Spanned, &str, &Diags) -> Option<T>) -> Option<T> {
        match self.raw(key) {
            Some(v) => conv(v, &self.full(key), self.diags),
            None => {
                report(
                    self.diags,
                    self.anchor,
                    format!("missing required key '{}'", self.full(key)),
                );
                None
            }
        }
    }

    fn list<T>(&self, key: &str, item: impl Fn(&Spanned, &str, &Diags) -> Option<T>) -> Vec<T> {
        self.opt(key, |v, k, d| Some(as_list(v, k, d, &item)))
            .unwrap_or_default()
    }

    fn finish(self) {
        let used = self.used.borrow();
        for (k, (name, pos, _)) in self.entries.iter().enumerate() {
            if !used[k] {
                report(self.diags, *pos, format!("unknown key '{}{}'", self.prefix, name));
            }
        }
    }
}

fn mismatch(v: &Spanned, key: &str, want: &str, d: &Diags) {
    report(d, v.pos, format!("'{key}' must be {want}, found {}", v.value.kind()));
}

fn as_f64(v: &Spanned, key: &str, d: &Diags) -> Option<f64> {
    match v.value {
        Value::Float(x) => Some(x),
        Value::Int(i) => Some(i as f64),
        _ => {
            mismatch(v, key, "a number", d);
            None
        }
    }
}

fn as_i64(v: &Spanned, key: &str, d: &Diags) -> Option<i64> {
    match v.value {
        Value::Int(i) => Some(i),
        _ => {
            mismatch(v, key, "an integer", d);
            None
        }
    }
}

fn as_usize(v: &Spanned, key: &str, d: &Diags) -> Option<usize> {
    let i = as_i64(v, key, d)?;
    if i < 0 {
        report(d, v.pos, format!("'{key}' must be non-negative"));
        return None;
    }
    Some(i as usize)
}

fn as_positive(v: &Spanned, key: &str, d: &Diags) -> Option<f64> {
    let x = as_f64(v, key, d)?;
    if !(x > 0.0) {
        report(d, v.pos, format!("'{key}' must be positive"));
        return None;
    }
    Some(x)
}

fn as_epsilon(v: &Spanned, key: &str, d: &Diags) -> Option<f64> {
    let x = as_f64(v, key, d)?;
    if !(x > 0.0 && x <= 1.0) {
        report(d, v.pos, "epsilon must be in (0,1]");
        return None;
    }
    Some(x)
}

fn as_bool(v: &Spanned, key: &str, d: &Diags) -> Option<bool> {
    match v.value {
        Value::Bool(b) => Some(b),
        _ => {
            mismatch(v, key, "a boolean", d);
            None
        }
    }
}

fn as_str<'a>(v: &'a Spanned, key: &str, d: &Diags) -> Option<&'a str> {
    match &v.value {
        Value::Str(s) => Some(s),
        _ => {
            mismatch(v, key, "a string", d);
            None
        }
    }
}

fn as_list<T>(v: &Spanned, key: &str, d: &Diags, item: impl Fn(&Spanned, &str, &Diags) -> Option<T>) -> Vec<T> {
    match &v.value {
        Value::List(items) => items
            .iter()
            .enumerate()
            .filter_map(|(k, it)| item(it, &format!("{key}[{k}]"), d))
            .collect(),
        _ => {
            mismatch(v, key, "a list", d);
            vec![]
        }
    }
}

fn as_table<'a>(v: &'a Spanned, key: &str, d: &'a Diags) -> Option<Reader<'a>> {
    match &v.value {
        Value::Table(entries) => Some(Reader::new(
            entries.iter().map(|e| (e.key.as_str(), e.pos, &e.value)).collect(),
            v.pos,
            &format!("{key}."),
            d,
        )),
        _ => {
            mismatch(v, key, "a table", d);
            None
        }
    }
}

fn one_of<T: Copy>(v: &Spanned, key: &str, d: &Diags, choices: &[(&str, T)]) -> Option<T> {
    let s = as_str(v, key, d)?;
    match choices.iter().find(|(name, _)| *name == s) {
        Some((_, t)) => Some(*t),
        None => {
            let names: Vec<&str> = choices.iter().map(|(n, _)| *n).collect();
            report(
                d,
                v.pos,
                format!("'{key}' must be one of {}, found \"{s}\"", names.join(", ")),
            );
            None
        }
    }
}

fn kind_of<'a>(t: &Reader<'a>, key: &str) -> Option<&'a str> {
    let v = t.raw("kind");
    match v {
        None => {
            report(t.diags, t.anchor, format!("'{key}' needs a 'kind'"));
            None
        }
        Some(v) => as_str(v, &t.full("kind"), t.diags),
    }
}

fn read_hop(v: &Spanned, key: &str, d: &Diags) -> Option<Hop> {
    let t = as_table(v, key, d)?;
    let shift = t.req("shift", |v, k, d| Some(as_list(v, k, d, as_i64)));
    let amp = t.req("amp", as_f64);
    let amp_im = t.opt("amp_im", as_f64);
    t.finish();
    Some(Hop {
        shift: shift?,
        amp: amp?,
        amp_im,
    })
}

fn read_field(v: &Spanned, key: &str, d: &Diags) -> Option<Field> {
    let t = as_table(v, key, d)?;
    let kind = kind_of(&t, key);
    let value = t.req("value", as_f64);
    let out = match kind? {
        "uniform" => Field::Uniform { value: value? },
        "staggered" => Field::Staggered { value: value? },
        "linear" | "quadratic" => {
            let direction = t.req("direction", as_usize)?;
            if kind == Some("linear") {
                Field::Linear {
                    direction,
                    value: value?,
                }
            } else {
                Field::Quadratic {
                    direction,
                    value: value?,
                }
            }
        }
        "site" => Field::Site {
            site: t.req("site", |v, k, d| Some(as_list(v, k, d, as_i64)))?,
            value: value?,
        },
        other => {
            report(
                d,
                v.pos,
                format!("unknown field kind \"{other}\" (uniform, staggered, linear, quadratic, site)"),
            );
            return None;
        }
    };
    t.finish();
    Some(out)
}

fn read_pair(v: &Spanned, key: &str, d: &Diags) -> Option<Pair> {
    let t = as_table(v, key, d)?;
    let distance = t.req("distance", as_usize);
    let w = t.req("w", as_f64);
    t.finish();
    Some(Pair {
        distance: distance? as u64,
        w: w?,
    })
}

fn read_flux(v: &Spanned, key: &str, d: &Diags) -> Option<Flux> {
    let t = as_table(v, key, d)?;
    let value = t.req("value", as_f64);
    let hop = t.req("hop", as_usize);
    let gauge = t.req("gauge", as_usize);
    t.finish();
    Some(Flux {
        value: value?,
        hop: hop?,
        gauge: gauge?,
    })
}

fn read_profile(v: &Spanned, key: &str, d: &Diags) -> Option<ProfileConfig> {
    let t = as_table(v, key, d)?;
    let out = match kind_of(&t, key)? {
        "linear" => ProfileConfig::Linear {
            slope: t.req("slope", as_f64)?,
            offset: t.opt("offset", as_f64).unwrap_or(0.0),
        },
        "constant" => ProfileConfig::Constant {
            value: t.req("value", as_f64)?,
        },
        "bump" => ProfileConfig::Bump {
            center: t.req("center", as_f64)?,
            width: t.req("width", as_positive)?,
            height: t.req("height", as_f64)?,
        },
        other => {
            report(
                d,
                v.pos,
                format!("unknown profile kind \"{other}\" (linear, constant, bump)"),
            );
            return None;
        }
    };
    t.finish();
    Some(out)
}

fn read_switch(v: &Spanned, key: &str, d: &Diags) -> Option<SwitchConfig> {
    let t = as_table(v, key, d)?;
    let out = match kind_of(&t, key)? {
        "smoothstep" => SwitchConfig::Smoothstep {
            order: t.req("order", as_usize)?,
        },
        "exp_bump" => SwitchConfig::ExpBump,
        other => {
            report(
                d,
                v.pos,
                format!("unknown switching kind \"{other}\" (smoothstep, exp_bump)"),
            );
            return None;
        }
    };
    t.finish();
    Some(out)
}

fn read_drive(v: &Spanned, key: &str, d: &Diags) -> Option<DriveConfig> {
    let t = as_table(v, key, d)?;
    let amplitude = t.req("amplitude", as_f64);
    let omega = t.req("omega", as_f64);
    let phase = t.req("phase", as_f64);
    t.finish();
    Some(DriveConfig {
        amplitude: amplitude?,
        omega: omega?,
        phase: phase?,
    })
}

fn read_window(v: &Spanned, key: &str, d: &Diags) -> Option<(f64, f64)> {
    let xs = as_list(v, key, d, as_f64);
    if xs.len() != 2 || xs[0] > xs[1] {
        report(d, v.pos, format!("'{key}' must be [lo, hi] with lo <= hi"));
        return None;
    }
    Some((xs[0], xs[1]))
}

fn read_experiment(v: &Spanned, key: &str, d: &Diags) -> Option<ExperimentId> {
    let s = as_str(v, key, d)?;
    let e = ExperimentId::parse(s);
    if e.is_none() {
        report(d, v.pos, format!("unknown experiment \"{s}\" (E1 to E5)"));
    }
    e
}

const SECTIONS: &[&str] = &[
    "lattice",
    "model",
    "patch",
    "perturbation",
    "observables",
    "sweep",
    "switching",
    "spacetime",
    "hall",
    "checks",
    "integrator",
    "tolerances",
    "output",
];

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let doc = parse_document(text).map_err(ConfigError)?;
    let diags: Diags = RefCell::new(vec![]);
    let cfg = read_config(&doc, &diags);
    let mut diags = diags.into_inner();
    if let Some(cfg) = &cfg {
        if diags.is_empty() {
            validate(cfg, &doc, &mut diags);
        }
    }
    diags.sort_by_key(|d| d.pos);
    match cfg {
        Some(cfg) if diags.is_empty() => Ok(cfg),
        _ => {
            if diags.is_empty() {
                diags.push(Diagnostic::new(Pos { line: 1, col: 1 }, "invalid configuration"));
            }
            Err(ConfigError(diags))
        }
    }
}

fn read_config(doc: &[Entry], diags: &Diags) -> Option<ExperimentConfig> {
    let top = Pos { line: 1, col: 1 };
    // Split dotted keys into their section; unknown sections are reported
    // as unknown keys.
    let mut groups: BTreeMap<&str, Vec<(&str, Pos, &Spanned)>> = BTreeMap::new();
    let mut root = vec![];
    for e in doc {
        match e.key.split_once('.') {
            Some((sec, rest)) if SECTIONS.contains(&sec) => {
                groups.entry(sec).or_default().push((rest, e.pos, &e.value))
            }
            _ => root.push((e.key.as_str(), e.pos, &e.value)),
        }
    }
    let section = |name: &str| {
        let entries = groups.get(name).cloned().unwrap_or_default();
        let anchor = entries.first().map(|e| e.1).unwrap_or(top);
        Reader::new(entries, anchor, &format!("{name}."), diags)
    };

    let r = Reader::new(root, top, "", diags);
    let schema_version = r.req("schema_version", as_i64);
    if let (Some(v), Some(raw)) = (schema_version, r.raw("schema_version")) {
        if v != SCHEMA_VERSION {
            report(
                diags,
                raw.pos,
                format!("unsupported schema_version {v} (expected {SCHEMA_VERSION})"),
            );
        }
    }
    let experiments = r.req("experiments", |v, k, d| Some(as_list(v, k, d, read_experiment)));
    let seed = r.opt("seed", as_usize).map(|s| s as u64);
    r.finish();

    let s = section("lattice");
    let lattice = (|| {
        Some(LatticeConfig {
            sizes: s.req("sizes", |v, k, d| Some(as_list(v, k, d, as_usize)))?,
            closed: s.opt("closed", as_usize),
            spin: s.opt("spin", as_usize),
        })
    })();
    s.finish();

    let s = section("model");
    let model = (|| {
        let particles = s.req("particles", as_usize);
        let mu = s.opt("mu", as_f64);
        let hopping = s.list("hopping", read_hop);
        let onsite = s.list("onsite", read_field);
        let density = s.list("density", read_pair);
        let flux = s.opt("flux", read_flux);
        Some(ModelConfig {
            particles: particles?,
            mu,
            hopping,
            onsite,
            density,
            flux,
        })
    })();
    s.finish();

    let s = section("patch");
    let patch = PatchConfig {
        lowest: s.opt("lowest", as_usize),
        window: s.opt("window", read_window),
        gap_floor: s.opt("gap_floor", as_positive),
        g_tilde: s.opt("g_tilde", as_positive),
        bridge: s.opt("bridge", |v, k, d| {
            one_of(
                v,
                k,
                d,
                &[
                    ("exponential", BridgeName::Exponential),
                    ("quintic", BridgeName::Quintic),
                ],
            )
        }),
    };
    s.finish();

    let s = section("perturbation");
    let perturbation = PerturbationConfig {
        direction: s.opt("direction", as_usize),
        profile: s.opt("profile", read_profile),
        hopping: s.list("hopping", read_hop),
        onsite: s.list("onsite", read_field),
    };
    s.finish();

    let s = section("observables");
    let observables = ObservablesConfig {
        density: s.list("density", |v, k, d| Some(as_list(v, k, d, as_i64))),
    };
    s.finish();

    let s = section("sweep");
    let sweep = (|| {
        let epsilon = s.req("epsilon", |v, k, d| Some(as_list(v, k, d, as_epsilon)));
        let n = s.req("n", |v, k, d| Some(as_list(v, k, d, as_usize)));
        let time = s.opt("time", as_positive);
        Some(SweepConfig {
            epsilon: epsilon?,
            n: n?,
            time,
        })
    })();
    s.finish();

    let switching = if groups.contains_key("switching") {
        let s = section("switching");
        let out = (|| {
            let duration = s.req("duration", as_positive);
            let epsilon = s.req("epsilon", |v, k, d| Some(as_list(v, k, d, as_epsilon)));
            let order = s.req("order", as_usize);
            let kinds = s.req("kinds", |v, k, d| Some(as_list(v, k, d, read_switch)));
            let end_time = s.opt("end_time", as_positive);
            Some(SwitchingConfig {
                duration: duration?,
                epsilon: epsilon?,
                order: order?,
                kinds: kinds?,
                end_time,
            })
        })();
        s.finish();
        out
    } else {
        None
    };

    let spacetime = if groups.contains_key("spacetime") {
        let s = section("spacetime");
        let out = (|| {
            let epsilon = s.req("epsilon", as_epsilon);
            let order = s.req("order", as_usize);
            let delta = s.opt("delta", as_f64);
            let times = s.req("times", |v, k, d| Some(as_list(v, k, d, as_f64)));
            let flat_times = s.list("flat_times", as_f64);
            let strategy = s.opt("strategy", |v, k, d| {
                one_of(
                    v,
                    k,
                    d,
                    &[
                        ("jet", StrategyName::Jet),
                        ("finite_difference", StrategyName::FiniteDifference),
                        ("auto", StrategyName::Auto),
                    ],
                )
            });
            let drive = s.opt("drive", read_drive);
            Some(SpacetimeConfig {
                epsilon: epsilon?,
                order: order?,
                delta,
                times: times?,
                flat_times,
                strategy,
                drive,
            })
        })();
        s.finish();
        out
    } else {
        None
    };

    let hall = if groups.contains_key("hall") {
        let s = section("hall");
        let out = HallConfig {
            twist: s.opt("twist", as_usize),
            order: s.opt("order", as_usize),
            shift: s.opt("shift", as_f64),
            control: s.opt("control", as_bool),
        };
        s.finish();
        Some(out)
    } else {
        None
    };

    let s = section("checks");
    let checks = ChecksConfig {
        random_operators: s.opt("random_operators", as_usize),
        monomial_roundtrips: s.opt("monomial_roundtrips", as_usize),
        bound_instances: s.opt("bound_instances", as_usize),
        energy_shift: s.opt("energy_shift", as_f64),
        identity_epsilon: s.opt("identity_epsilon", as_epsilon),
    };
    s.finish();

    let s = section("integrator");
    let integrator = IntegratorConfig {
        method: s.opt("method", |v, k, d| {
            one_of(v, k, d, &[("magnus4", MethodName::Magnus4), ("rk4", MethodName::Rk4)])
        }),
        step: s.opt("step", as_positive),
        reunitarize_every: s.opt("reunitarize_every", as_usize),
        self_check: s.opt("self_check", as_bool),
    };
    s.finish();

    let s = section("tolerances");
    let tolerances = TolerancesConfig {
        self_convergence: s.opt("self_convergence", as_positive),
        fd_step: s.opt("fd_step", as_positive),
        alpha_step: s.opt("alpha_step", as_positive),
    };
    s.finish();

    let s = section("output");
    let output = OutputConfig {
        dir: s.opt("dir", |v, k, d| as_str(v, k, d).map(str::to_string)),
        timings: s.opt("timings", as_bool),
    };
    s.finish();

    Some(ExperimentConfig {
        schema_version: schema_version?,
        experiments: experiments?,
        seed,
        lattice: lattice?,
        model: model?,
        patch,
        perturbation,
        observables,
        sweep: sweep?,
        switching,
        spacetime,
        hall,
        checks,
        integrator,
        tolerances,
        output,
    })
}

/// Cross-field checks that need the whole typed model.
fn validate(cfg: &ExperimentConfig, doc: &[Entry], diags: &mut Vec<Diagnostic>) {
    let at = |key: &str| {
        doc.iter()
            .find(|e| e.key == key)
            .map(|e| e.value.pos)
            .unwrap_or(Pos { line: 1, col: 1 })
    };
    let mut err = |key: &str, msg: String| diags.push(Diagnostic::new(at(key), msg));
    let d = cfg.dim();

    if cfg.experiments.is_empty() {
        err("experiments", "at least one experiment is required".into());
    }
    if d == 0 {
        err("lattice.sizes", "lattice needs at least one direction".into());
    }
    if cfg.closed() > d {
        err(
            "lattice.closed",
            format!("{} closed directions on a {d}-dimensional lattice", cfg.closed()),
        );
    }
    for (j, &m) in cfg.lattice.sizes.iter().enumerate() {
        if m < 2 {
            err(
                "lattice.sizes",
                format!("direction {} has size {m}, need at least 2", j + 1),
            );
        } else if j < cfg.closed() && m % 2 != 0 {
            err(
                "lattice.sizes",
                format!("closed direction {} needs an even size, got {m}", j + 1),
            );
        }
    }
    if cfg.spin() == 0 {
        err("lattice.spin", "spin multiplicity must be at least 1".into());
    }
    let modes = cfg.lattice.sizes.iter().product::<usize>() * cfg.spin();
    if modes > 62 {
        err("lattice.sizes", format!("{modes} modes exceed the supported 62"));
    }
    if cfg.model.particles == 0 || cfg.model.particles >= modes {
        err(
            "model.particles",
            format!("particle number must lie strictly between 0 and {modes}"),
        );
    }
    let dir_ok = |j: usize| (1..=d).contains(&j);
    let check_fields = |key: &str, fields: &[Field], err: &mut dyn FnMut(&str, String)| {
        for f in fields {
            match f {
                Field::Linear { direction, .. } | Field::Quadratic { direction, .. } if !dir_ok(*direction) => {
                    err(key, format!("direction {direction} outside 1..={d}"))
                }
                Field::Site { site, .. } if site.len() != d => err(key, format!("site {site:?} needs {d} coordinates")),
                _ => {}
            }
        }
    };
    let check_hops = |key: &str, hops: &[Hop], err: &mut dyn FnMut(&str, String)| {
        for h in hops {
            if h.shift.len() != d {
                err(key, format!("shift {:?} needs {d} components", h.shift));
            }
        }
    };
    check_hops("model.hopping", &cfg.model.hopping, &mut err);
    check_fields("model.onsite", &cfg.model.onsite, &mut err);
    check_hops("perturbation.hopping", &cfg.perturbation.hopping, &mut err);
    check_fields("perturbation.onsite", &cfg.perturbation.onsite, &mut err);
    for p in &cfg.model.density {
        if p.distance == 0 {
            err("model.density", "density-density distance must be at least 1".into());
        }
    }
    if let Some(f) = &cfg.model.flux {
        if !dir_ok(f.hop) || !dir_ok(f.gauge) || f.hop == f.gauge {
            err("model.flux", format!("flux needs two distinct directions in 1..={d}"));
        }
    }
    if let Some(j) = cfg.perturbation.direction {
        if !dir_ok(j) {
            err("perturbation.direction", format!("direction {j} outside 1..={d}"));
        }
    }
    if cfg.patch.lowest.is_some() && cfg.patch.window.is_some() {
        err(
            "patch.window",
            "give either patch.lowest or patch.window, not both".into(),
        );
    }
    if cfg.patch.lowest == Some(0) {
        err("patch.lowest", "patch needs at least one state".into());
    }
    for site in &cfg.observables.density {
        if site.len() != d {
            err("observables.density", format!("site {site:?} needs {d} coordinates"));
        }
    }
    if cfg.sweep.epsilon.is_empty() {
        err("sweep.epsilon", "epsilon sweep is empty".into());
    }
    if cfg.sweep.n.is_empty() || cfg.sweep.n.contains(&0) {
        err("sweep.n", "orders must be a non-empty list of positive integers".into());
    }
    let needs_perturbation = [ExperimentId::E1, ExperimentId::E2, ExperimentId::E3, ExperimentId::E5]
        .iter()
        .any(|&e| cfg.runs(e));
    if needs_perturbation && cfg.perturbation.profile.is_none() {
        err("experiments", "E1, E2, E3 and E5 need perturbation.profile".into());
    }
    if (cfg.runs(ExperimentId::E2) || cfg.runs(ExperimentId::E3)) && cfg.observables.density.is_empty() {
        err(
            "experiments",
            "E2 and E3 need at least one entry in observables.density".into(),
        );
    }
    if cfg.runs(ExperimentId::E3) {
        match &cfg.switching {
            None => err("experiments", "E3 needs a switching section".into()),
            Some(s) => {
                if s.kinds.len() != 2 {
                    err(
                        "switching.kinds",
                        format!("exactly two switchings are compared, got {}", s.kinds.len()),
                    );
                }
                if s.epsilon.is_empty() {
                    err("switching.epsilon", "epsilon sweep is empty".into());
                }
                if s.order == 0 {
                    err("switching.order", "order must be positive".into());
                }
            }
        }
        if cfg.spacetime.is_none() {
            err("experiments", "E3 needs a spacetime section".into());
        }
    }
    if let Some(st) = &cfg.spacetime {
        if st.order == 0 {
            err("spacetime.order", "order must be positive".into());
        }
    }
    if cfg.runs(ExperimentId::E4) {
        let twist = cfg.hall.as_ref().and_then(|h| h.twist).unwrap_or(1);
        if !dir_ok(twist) || twist > cfg.closed() {
            err(
                "experiments",
                format!("E4 twists along direction {twist}, which must be closed"),
            );
        }
        if d < 2 {
            err("experiments", "E4 needs a transverse open direction".into());
        }
    }
}

// ---------------------------------------------------------------------------
// writing

fn sp(value: Value) -> Spanned {
    Spanned {
        pos: Pos { line: 0, col: 0 },
        value,
    }
}

fn float(x: f64) -> Spanned {
    sp(Value::Float(x))
}

fn int(i: usize) -> Spanned {
    sp(Value::Int(i as i64))
}

fn string(s: &str) -> Spanned {
    sp(Value::Str(s.to_string()))
}

fn list<T>(xs: &[T], f: impl Fn(&T) -> Spanned) -> Spanned {
    sp(Value::List(xs.iter().map(f).collect()))
}

fn table(entries: Vec<(&str, Spanned)>) -> Spanned {
    sp(Value::Table(
        entries
            .into_iter()
            .map(|(k, v)| Entry {
                key: k.to_string(),
                pos: v.pos,
                value: v,
            })
            .collect(),
    ))
}

fn ints(xs: &[i64]) -> Spanned {
    list(xs, |&i| sp(Value::Int(i)))
}

fn hop_value(h: &Hop) -> Spanned {
    let mut e = vec![("shift", ints(&h.shift)), ("amp", float(h.amp))];
    if let Some(im) = h.amp_im {
        e.push(("amp_im", float(im)));
    }
    table(e)
}

fn field_value(f: &Field) -> Spanned {
    match f {
        Field::Uniform { value } => table(vec![("kind", string("uniform")), ("value", float(*value))]),
        Field::Staggered { value } => table(vec![("kind", string("staggered")), ("value", float(*value))]),
        Field::Linear { direction, value } => table(vec![
            ("kind", string("linear")),
            ("direction", int(*direction)),
            ("value", float(*value)),
        ]),
        Field::Quadratic { direction, value } => table(vec![
            ("kind", string("quadratic")),
            ("direction", int(*direction)),
            ("value", float(*value)),
        ]),
        Field::Site { site, value } => table(vec![
            ("kind", string("site")),
            ("site", ints(site)),
            ("value", float(*value)),
        ]),
    }
}

fn profile_value(p: &ProfileConfig) -> Spanned {
    match p {
        ProfileConfig::Linear { slope, offset } => table(vec![
            ("kind", string("linear")),
            ("slope", float(*slope)),
            ("offset", float(*offset)),
        ]),
        ProfileConfig::Constant { value } => table(vec![("kind", string("constant")), ("value", float(*value))]),
        ProfileConfig::Bump { center, width, height } => table(vec![
            ("kind", string("bump")),
            ("center", float(*center)),
            ("width", float(*width)),
            ("height", float(*height)),
        ]),
    }
}

fn switch_value(s: &SwitchConfig) -> Spanned {
    match s {
        SwitchConfig::Smoothstep { order } => table(vec![("kind", string("smoothstep")), ("order", int(*order))]),
        SwitchConfig::ExpBump => table(vec![("kind", string("exp_bump"))]),
    }
}

/// Collects `key = value` lines grouped by section.
struct Writer {
    groups: Vec<Vec<String>>,
}

impl Writer {
    fn group(&mut self) {
        self.groups.push(vec![]);
    }

    fn put(&mut self, key: &str, v: Spanned) {
        self.groups
            .last_mut()
            .expect("group opened")
            .push(format!("{key} = {}", format_value(&v.value)));
    }

    fn opt<T>(&mut self, key: &str, v: &Option<T>, f: impl Fn(&T) -> Spanned) {
        if let Some(v) = v {
            self.put(key, f(v));
        }
    }

    fn nonempty<T>(&mut self, key: &str, xs: &[T], f: impl Fn(&T) -> Spanned) {
        if !xs.is_empty() {
            self.put(key, list(xs, f));
        }
    }

    fn finish(self) -> String {
        let blocks: Vec<String> = self
            .groups
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(|g| g.join("\n") + "\n")
            .collect();
        blocks.join("\n")
    }
}

/// Canonical text of a configuration: fixed key order, one blank line
/// between sections, no comments.
pub fn serialize_config(cfg: &ExperimentConfig) -> String {
    let mut w = Writer { groups: vec![] };
    w.group();
    w.put("schema_version", sp(Value::Int(cfg.schema_version)));
    w.put("experiments", list(&cfg.experiments, |e| string(e.name())));
    w.opt("seed", &cfg.seed, |&s| sp(Value::Int(s as i64)));

    w.group();
    w.put("lattice.sizes", list(&cfg.lattice.sizes, |&m| int(m)));
    w.opt("lattice.closed", &cfg.lattice.closed, |&c| int(c));
    w.opt("lattice.spin", &cfg.lattice.spin, |&s| int(s));

    w.group();
    let m = &cfg.model;
    w.put("model.particles", int(m.particles));
    w.opt("model.mu", &m.mu, |&x| float(x));
    w.nonempty("model.hopping", &m.hopping, hop_value);
    w.nonempty("model.onsite", &m.onsite, field_value);
    w.nonempty("model.density", &m.density, |p| {
        table(vec![("distance", int(p.distance as usize)), ("w", float(p.w))])
    });
    w.opt("model.flux", &m.flux, |f| {
        table(vec![
            ("value", float(f.value)),
            ("hop", int(f.hop)),
            ("gauge", int(f.gauge)),
        ])
    });

    w.group();
    let p = &cfg.patch;
    w.opt("patch.lowest", &p.lowest, |&k| int(k));
    w.opt("patch.window", &p.window, |&(lo, hi)| list(&[lo, hi], |&x| float(x)));
    w.opt("patch.gap_floor", &p.gap_floor, |&x| float(x));
    w.opt("patch.g_tilde", &p.g_tilde, |&x| float(x));
    w.opt("patch.bridge", &p.bridge, |b| {
        string(match b {
            BridgeName::Exponential => "exponential",
            BridgeName::Quintic => "quintic",
        })
    });

    w.group();
    let q = &cfg.perturbation;
    w.opt("perturbation.direction", &q.direction, |&j| int(j));
    w.opt("perturbation.profile", &q.profile, profile_value);
    w.nonempty("perturbation.hopping", &q.hopping, hop_value);
    w.nonempty("perturbation.onsite", &q.onsite, field_value);

    w.group();
    w.nonempty("observables.density", &cfg.observables.density, |s| ints(s));

    w.group();
    w.put("sweep.epsilon", list(&cfg.sweep.epsilon, |&x| float(x)));
    w.put("sweep.n", list(&cfg.sweep.n, |&n| int(n)));
    w.opt("sweep.time", &cfg.sweep.time, |&x| float(x));

    if let Some(s) = &cfg.switching {
        w.group();
        w.put("switching.duration", float(s.duration));
        w.put("switching.epsilon", list(&s.epsilon, |&x| float(x)));
        w.put("switching.order", int(s.order));
        w.put("switching.kinds", list(&s.kinds, switch_value));
        w.opt("switching.end_time", &s.end_time, |&x| float(x));
    }

    if let Some(s) = &cfg.spacetime {
        w.group();
        w.put("spacetime.epsilon", float(s.epsilon));
        w.put("spacetime.order", int(s.order));
        w.opt("spacetime.delta", &s.delta, |&x| float(x));
        w.put("spacetime.times", list(&s.times, |&x| float(x)));
        w.nonempty("spacetime.flat_times", &s.flat_times, |&x| float(x));
        w.opt("spacetime.strategy", &s.strategy, |s| {
            string(match s {
                StrategyName::Jet => "jet",
                StrategyName::FiniteDifference => "finite_difference",
                StrategyName::Auto => "auto",
            })
        });
        w.opt("spacetime.drive", &s.drive, |d| {
            table(vec![
                ("amplitude", float(d.amplitude)),
                ("omega", float(d.omega)),
                ("phase", float(d.phase)),
            ])
        });
    }

    if let Some(h) = &cfg.hall {
        w.group();
        w.opt("hall.twist", &h.twist, |&j| int(j));
        w.opt("hall.order", &h.order, |&n| int(n));
        w.opt("hall.shift", &h.shift, |&x| float(x));
        w.opt("hall.control", &h.control, |&b| sp(Value::Bool(b)));
    }

    w.group();
    let c = &cfg.checks;
    w.opt("checks.random_operators", &c.random_operators, |&k| int(k));
    w.opt("checks.monomial_roundtrips", &c.monomial_roundtrips, |&k| int(k));
    w.opt("checks.bound_instances", &c.bound_instances, |&k| int(k));
    w.opt("checks.energy_shift", &c.energy_shift, |&x| float(x));
    w.opt("checks.identity_epsilon", &c.identity_epsilon, |&x| float(x));

    w.group();
    let i = &cfg.integrator;
    w.opt("integrator.method", &i.method, |m| {
        string(match m {
            MethodName::Magnus4 => "magnus4",
            MethodName::Rk4 => "rk4",
        })
    });
    w.opt("integrator.step", &i.step, |&x| float(x));
    w.opt("integrator.reunitarize_every", &i.reunitarize_every, |&k| int(k));
    w.opt("integrator.self_check", &i.self_check, |&b| sp(Value::Bool(b)));

    w.group();
    let t = &cfg.tolerances;
    w.opt("tolerances.self_convergence", &t.self_convergence, |&x| float(x));
    w.opt("tolerances.fd_step", &t.fd_step, |&x| float(x));
    w.opt("tolerances.alpha_step", &t.alpha_step, |&x| float(x));

    w.group();
    w.opt("output.dir", &cfg.output.dir, |s| string(s));
    w.opt("output.timings", &cfg.output.timings, |&b| sp(Value::Bool(b)));

    w.finish()
}

/// Drop comment-only lines and trailing comments, for comparisons with
/// [`serialize_config`] output.
pub fn strip_comments(text: &str) -> String {
    let mut out = String::new();
    for line in text.lines() {
        let t = line.trim_start();
        if t.starts_with('#') {
            continue;
        }
        let mut in_str = false;
        let mut prev = ' ';
        let mut cut = line.len();
        for (k, c) in line.char_indices() {
            if c == '"' && prev != '\\' {
                in_str = !in_str;
            }
            if c == '#' && !in_str {
                cut = k;
                break;
            }
            prev = c;
        }
        out.push_str(line[..cut].trim_end());
        out.push('\n');
    }
    // Collapse the blank runs that removed comment blocks leave behind.
    let mut collapsed = String::new();
    let mut blank = true;
    for line in out.lines() {
        if line.is_empty() {
            if !blank {
                collapsed.push('\n');
            }
            blank = true;
        } else {
            collapsed.push_str(line);
            collapsed.push('\n');
            blank = false;
        }
    }
    while collapsed.ends_with("\n\n") {
        collapsed.pop();
    }
    collapsed
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "schema_version = 1
experiments = [\"E1\"]

lattice.sizes = [8]

model.particles = 4
model.hopping = [{shift = [1], amp = -1.0}, {shift = [-1], amp = -1.0}]

perturbation.profile = {kind = \"linear\", slope = 1.0, offset = 0.0}

sweep.epsilon = [0.02, 0.04]
sweep.n = [1]
";

    #[test]
    fn minimal_round_trip_is_byte_identical() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(serialize_config(&cfg), MINIMAL);
        assert_eq!(cfg.spin(), 1);
        assert_eq!(cfg.closed(), 0);
    }

    #[test]
    fn misspelled_key_is_one_diagnostic() {
        let text = MINIMAL.replace("model.particles", "model.particle");
        let err = parse_config(&text).unwrap_err();
        let unknown: Vec<_> = err.0.iter().filter(|d| d.message.contains("unknown key")).collect();
        assert_eq!(unknown.len(), 1);
        assert!(unknown[0].message.contains("model.particle'"));
        assert_eq!(unknown[0].pos, Pos { line: 6, col: 1 });
    }

    #[test]
    fn zero_epsilon_is_rejected() {
        let text = MINIMAL.replace("[0.02, 0.04]", "[0.0, 0.04]");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].message, "epsilon must be in (0,1]");
        assert_eq!(err.0[0].pos, Pos { line: 11, col: 18 });
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let err = parse_config(&MINIMAL.replace("[0.02, 0.04]", "[]")).unwrap_err();
        assert!(err.0[0].message.contains("sweep is empty"), "{err}");
    }

    #[test]
    fn type_mismatch_and_missing_key() {
        let text = MINIMAL.replace("model.particles = 4", "model.particles = \"four\"");
        let err = parse_config(&text).unwrap_err();
        assert!(err.0[0].message.contains("must be an integer, found string"), "{err}");
        let err = parse_config(&MINIMAL.replace("sweep.n = [1]\n", "")).unwrap_err();
        assert!(err.0[0].message.contains("missing required key 'sweep.n'"), "{err}");
    }

    #[test]
    fn unknown_table_key_points_inside_the_table() {
        let text = MINIMAL.replace("amp = -1.0}, {", "amp = -1.0, phase = 0.1}, {");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert!(err.0[0].message.contains("model.hopping[0].phase"), "{err}");
        assert_eq!(err.0[0].pos.line, 7);
    }

    #[test]
    fn closed_direction_must_be_even() {
        let text = MINIMAL.replace("lattice.sizes = [8]", "lattice.sizes = [7]\nlattice.closed = 1");
        let err = parse_config(&text).unwrap_err();
        assert!(err.0[0].message.contains("even"), "{err}");
    }

    #[test]
    fn comments_are_stripped_for_comparison() {
        let text = format!(
            "# reference chain\n{}",
            MINIMAL.replace("sweep.n = [1]", "sweep.n = [1]  # orders")
        );
        assert_eq!(strip_comments(&text), MINIMAL);
    }
}
