use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::Value;

use moduli_core::coeffring::{parse_rational, rat_int};
use moduli_core::kernels::Perturbed;
use moduli_core::tqft::{bundled_su2, su2_level};
use moduli_core::trengine::{is_stable, stable_range};
use moduli_core::{CoeffElem, EvenPoly, FrobeniusAlgebra, InitialData, KernelFamily, MomentSpec};

use crate::Failure;

#[derive(Parser, Debug)]
#[command(name = "moduli", version, about = "Volume polynomials of moduli spaces of bordered surfaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    /// JSON file with default settings; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// mirzakhani, kontsevich, beta:P/Q, inline JSON or a kernel file
    #[arg(long, global = true)]
    pub kernel: Option<String>,
    /// a single cell, e.g. 1,2
    #[arg(long, global = true, conflicts_with = "max_complexity")]
    pub gn: Option<String>,
    /// all stable cells with 2g-2+n up to this bound
    #[arg(long, global = true)]
    pub max_complexity: Option<u32>,
    /// formal[:TAG], indicator:H, exponential:R, zero, or JSON
    #[arg(long, global = true)]
    pub twist: Option<String>,
    /// print floating values instead of exact coefficients
    #[arg(long, global = true)]
    pub numeric: bool,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// length cutoff for curve sums
    #[arg(long, global = true)]
    pub cutoff: Option<f64>,
    /// Fenchel-Nielsen coordinates: LENGTH,TWIST or BOUNDARY,LENGTH,TWIST
    #[arg(long = "fn", global = true, allow_hyphen_values = true)]
    pub fn_coords: Option<String>,
    /// boundary length of the one-holed torus
    #[arg(long, global = true)]
    pub boundary: Option<f64>,
    /// modular data file (su2_kN.json names fall back to bundled data)
    #[arg(long, global = true, conflicts_with = "level")]
    pub data: Option<String>,
    /// su(2) level, used instead of a data file
    #[arg(long, global = true)]
    pub level: Option<usize>,
    /// comma separated label indices or names
    #[arg(long, global = true)]
    pub labels: Option<String>,
    /// oracle-triangle, airy, symmetry, scaling, moments, mcshane, tqft or all
    #[arg(long, global = true)]
    pub suite: Option<String>,
    /// index window for relation checks
    #[arg(long, global = true)]
    pub window: Option<u32>,
    #[arg(long, global = true)]
    pub rel_tol: Option<f64>,
    #[arg(long, global = true)]
    pub abs_tol: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Volume polynomials
    Volumes,
    /// Psi-class intersection numbers
    Psi,
    /// Twisted volume polynomials
    Twist,
    /// Stable graphs with automorphism orders
    Graphs,
    /// Partial sums of the McShane identity on a one-holed torus
    Mcshane,
    /// Ranks of conformal block bundles
    Verlinde,
    /// Lie algebra relations of the Airy tensors
    AiryCheck,
    /// Run validation suites
    Verify,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Deserialize, Default, Debug)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    command: Option<Command>,
    kernel: Option<Value>,
    gn: Option<Value>,
    max_complexity: Option<u32>,
    twist: Option<Value>,
    numeric: Option<bool>,
    format: Option<Format>,
    output: Option<PathBuf>,
    cutoff: Option<f64>,
    #[serde(rename = "fn")]
    fn_coords: Option<Value>,
    boundary: Option<f64>,
    data: Option<String>,
    level: Option<usize>,
    labels: Option<Value>,
    suite: Option<Value>,
    window: Option<u32>,
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    OracleTriangle,
    Airy,
    Symmetry,
    Scaling,
    Moments,
    Mcshane,
    Tqft,
}

impl Suite {
    pub const ALL: [Suite; 7] =
        [Suite::OracleTriangle, Suite::Airy, Suite::Symmetry, Suite::Scaling, Suite::Moments, Suite::Mcshane, Suite::Tqft];

    pub fn name(self) -> &'static str {
        match self {
            Suite::OracleTriangle => "oracle-triangle",
            Suite::Airy => "airy",
            Suite::Symmetry => "symmetry",
            Suite::Scaling => "scaling",
            Suite::Moments => "moments",
            Suite::Mcshane => "mcshane",
            Suite::Tqft => "tqft",
        }
    }
}

/// Kernel family, possibly with explicit perturbations of its tensors.
#[derive(Clone)]
pub struct KernelChoice {
    pub family: KernelFamily,
    pub perturbed: Option<Arc<Perturbed<CoeffElem>>>,
}

impl KernelChoice {
    pub fn data(&self) -> Arc<dyn InitialData<CoeffElem>> {
        match &self.perturbed {
            Some(p) => p.clone(),
            None => Arc::new(self.family.clone()),
        }
    }

    pub fn id(&self) -> String {
        self.data().id()
    }
}

pub struct RunConfig {
    pub command: Command,
    pub kernel: KernelChoice,
    /// `None` when no range was given; commands pick their own default.
    cells: Option<Vec<(u32, usize)>>,
    pub max_complexity: Option<u32>,
    pub twist: MomentSpec,
    pub numeric: bool,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
    pub cutoff: f64,
    pub fn_coords: Option<Vec<f64>>,
    pub boundary: Option<f64>,
    data: Option<String>,
    level: Option<usize>,
    labels: Option<Vec<String>>,
    pub suites: Vec<Suite>,
    pub window: u32,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self, Failure> {
        let file = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                serde_json::from_str::<FileConfig>(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let command = cli.command.or(file.command).ok_or_else(|| invalid("no command given"))?;

        let kernel = match (&cli.kernel, &file.kernel) {
            (Some(s), _) => parse_kernel_str(s)?,
            (None, Some(Value::String(s))) => parse_kernel_str(s)?,
            (None, Some(v)) => parse_kernel_json(v)?,
            (None, None) => KernelChoice { family: KernelFamily::Mirzakhani, perturbed: None },
        };

        let (gn, maxc) = if cli.gn.is_some() || cli.max_complexity.is_some() {
            (cli.gn.map(Value::String), cli.max_complexity)
        } else {
            if file.gn.is_some() && file.max_complexity.is_some() {
                return Err(invalid("config sets both gn and max-complexity"));
            }
            (file.gn, file.max_complexity)
        };
        let cells = match (&gn, maxc) {
            (Some(v), _) => {
                let nums = number_list(v, "gn")?;
                if nums.len() != 2 || nums.iter().any(|x| *x < 0.0 || x.fract() != 0.0) {
                    return Err(invalid("gn takes two non-negative integers g,n"));
                }
                let (g, n) = (nums[0] as u32, nums[1] as usize);
                if !is_stable(g, n) {
                    return Err(invalid(format!("({g},{n}) is not a stable type with boundary")));
                }
                Some(vec![(g, n)])
            }
            (None, Some(c)) => Some(stable_range(c)),
            (None, None) => None,
        };

        let twist = match (&cli.twist, &file.twist) {
            (Some(s), _) => parse_twist_str(s)?,
            (None, Some(Value::String(s))) => parse_twist_str(s)?,
            (None, Some(v)) => MomentSpec::from_json(v).map_err(|e| invalid(e.to_string()))?,
            (None, None) => MomentSpec::Formal { tag: 0 },
        };

        let fn_coords = match (&cli.fn_coords, &file.fn_coords) {
            (Some(s), _) => Some(number_list(&Value::String(s.clone()), "fn")?),
            (None, Some(v)) => Some(number_list(v, "fn")?),
            (None, None) => None,
        };
        if let Some(c) = &fn_coords {
            if c.len() != 2 && c.len() != 3 {
                return Err(invalid("fn takes LENGTH,TWIST or BOUNDARY,LENGTH,TWIST"));
            }
        }

        let (data, level) = if cli.data.is_some() || cli.level.is_some() {
            (cli.data, cli.level)
        } else {
            (file.data, file.level)
        };

        let labels = match (&cli.labels, &file.labels) {
            (Some(s), _) => Some(split_list(s)),
            (None, Some(Value::String(s))) => Some(split_list(s)),
            (None, Some(Value::Array(a))) => Some(
                a.iter()
                    .map(|x| match x {
                        Value::String(s) => Ok(s.clone()),
                        Value::Number(n) => Ok(n.to_string()),
                        _ => Err(invalid("labels must be numbers or names")),
                    })
                    .collect::<Result<_, _>>()?,
            ),
            (None, Some(_)) => return Err(invalid("labels must be a list")),
            (None, None) => None,
        };

        let suite_spec = match (&cli.suite, &file.suite) {
            (Some(s), _) => split_list(s),
            (None, Some(Value::String(s))) => split_list(s),
            (None, Some(Value::Array(a))) => a.iter().filter_map(Value::as_str).map(str::to_string).collect(),
            (None, Some(_)) => return Err(invalid("suite must be a name or list of names")),
            (None, None) => vec!["all".to_string()],
        };
        let mut suites = Vec::new();
        for s in &suite_spec {
            if s == "all" {
                suites.extend(Suite::ALL);
                continue;
            }
            let found = Suite::ALL.iter().find(|x| x.name() == s).ok_or_else(|| invalid(format!("unknown suite {s}")))?;
            suites.push(*found);
        }
        let mut seen = Vec::new();
        suites.retain(|s| {
            let fresh = !seen.contains(s);
            seen.push(*s);
            fresh
        });

        let cutoff = cli.cutoff.or(file.cutoff).unwrap_or(25.0);
        if !(cutoff >= 0.0 && cutoff.is_finite()) {
            return Err(invalid("cutoff must be a non-negative number"));
        }
        let boundary = cli.boundary.or(file.boundary);
        let rel_tol = cli.rel_tol.or(file.rel_tol).unwrap_or(1e-9);
        let abs_tol = cli.abs_tol.or(file.abs_tol).unwrap_or(1e-3);
        if !(rel_tol > 0.0 && abs_tol > 0.0) {
            return Err(invalid("tolerances must be positive"));
        }

        Ok(RunConfig {
            command,
            kernel,
            cells,
            max_complexity: maxc,
            twist,
            numeric: cli.numeric || file.numeric.unwrap_or(false),
            format: cli.format.or(file.format),
            output: cli.output.or(file.output),
            cutoff,
            fn_coords,
            boundary,
            data,
            level,
            labels,
            suites,
            window: cli.window.or(file.window).unwrap_or(3),
            rel_tol,
            abs_tol,
        })
    }

    pub fn cells_or(&self, default_complexity: u32) -> Vec<(u32, usize)> {
        self.cells.clone().unwrap_or_else(|| stable_range(default_complexity))
    }

    pub fn has_range(&self) -> bool {
        self.cells.is_some()
    }

    pub fn algebra(&self) -> Result<FrobeniusAlgebra, Failure> {
        if let Some(k) = self.level {
            return su2_level(k).map_err(|e| invalid(e.to_string()));
        }
        let name = self.data.as_deref().ok_or_else(|| invalid("verlinde needs --data or --level"))?;
        let path = Path::new(name);
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{name}: {e}")))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| invalid(format!("{name}: {e}")))?;
            return FrobeniusAlgebra::from_modular_json(&v).map_err(|e| invalid(format!("{name}: {e}")));
        }
        let file = path.file_name().and_then(|s| s.to_str()).unwrap_or("");
        let level = file.strip_prefix("su2_k").and_then(|s| s.strip_suffix(".json")).and_then(|s| s.parse::<usize>().ok());
        match level {
            Some(k) => bundled_su2(k).map_err(|e| invalid(e.to_string())),
            None => Err(invalid(format!("{name}: no such file"))),
        }
    }

    /// Label indices as given, resolved against the algebra's label names.
    pub fn labels(&self, alg: &FrobeniusAlgebra) -> Result<Option<Vec<usize>>, Failure> {
        let Some(raw) = &self.labels else { return Ok(None) };
        raw.iter()
            .map(|s| {
                if let Some(i) = alg.labels.iter().position(|l| l == s) {
                    return Ok(i);
                }
                match s.parse::<usize>() {
                    Ok(i) if i < alg.dim() => Ok(i),
                    _ => Err(invalid(format!("unknown label {s}"))),
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

fn number_list(v: &Value, what: &str) -> Result<Vec<f64>, Failure> {
    let bad = || invalid(format!("{what}: expected a comma separated list of numbers"));
    match v {
        Value::String(s) => s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect(),
        Value::Array(a) => a.iter().map(|x| x.as_f64().ok_or_else(bad)).collect(),
        _ => Err(bad()),
    }
}

fn parse_kernel_str(s: &str) -> Result<KernelChoice, Failure> {
    let plain = |family| Ok(KernelChoice { family, perturbed: None });
    match s {
        "mirzakhani" => return plain(KernelFamily::Mirzakhani),
        "kontsevich" => return plain(KernelFamily::Kontsevich),
        _ => {}
    }
    if let Some(b) = s.strip_prefix("beta:") {
        let beta = parse_rational(b).map_err(|e| invalid(e.to_string()))?;
        return plain(KernelFamily::beta_scaled(beta).map_err(|e| invalid(e.to_string()))?);
    }
    let text = if s.trim_start().starts_with('{') {
        s.to_string()
    } else {
        std::fs::read_to_string(s).map_err(|e| invalid(format!("kernel {s}: {e}")))?
    };
    let v: Value = serde_json::from_str(&text).map_err(|e| invalid(format!("kernel {s}: {e}")))?;
    parse_kernel_json(&v)
}

fn parse_kernel_json(v: &Value) -> Result<KernelChoice, Failure> {
    let family = KernelFamily::from_json(v).map_err(|e| invalid(e.to_string()))?;
    let perturbed = match v.get("perturb") {
        None => None,
        Some(p) => Some(Arc::new(parse_perturbation(&family, p)?)),
    };
    Ok(KernelChoice { family, perturbed })
}

fn parse_coeff(v: &Value) -> Result<CoeffElem, Failure> {
    let c = v.get("coeff").ok_or_else(|| invalid("perturbation entry needs coeff"))?;
    let pi2 = v.get("pi2").and_then(Value::as_u64).unwrap_or(0) as u32;
    match c {
        Value::String(s) => Ok(CoeffElem::term(pi2, parse_rational(s).map_err(|e| invalid(e.to_string()))?)),
        Value::Number(n) if n.is_i64() => Ok(CoeffElem::term(pi2, rat_int(n.as_i64().unwrap()))),
        other => CoeffElem::from_json(other).map_err(|e| invalid(e.to_string())),
    }
}

fn parse_entries(p: &Value, key: &str, nvars: usize) -> Result<Vec<(Value, EvenPoly)>, Failure> {
    let Some(list) = p.get(key) else { return Ok(Vec::new()) };
    let list = list.as_array().ok_or_else(|| invalid(format!("perturb.{key} must be a list")))?;
    list.iter()
        .map(|e| {
            let d: Vec<u32> = e
                .get("d")
                .and_then(Value::as_array)
                .ok_or_else(|| invalid(format!("perturb.{key} entry needs d")))?
                .iter()
                .map(|x| x.as_u64().map(|x| x as u32).ok_or_else(|| invalid("exponents must be non-negative integers")))
                .collect::<Result<_, _>>()?;
            if d.len() != nvars {
                return Err(invalid(format!("perturb.{key}: d must have {nvars} entries")));
            }
            Ok((e.clone(), EvenPoly::monomial(d, parse_coeff(e)?)))
        })
        .collect()
}

fn index(e: &Value, name: &str) -> Result<u32, Failure> {
    e.get(name)
        .and_then(Value::as_u64)
        .map(|x| x as u32)
        .ok_or_else(|| invalid(format!("perturbation entry needs index {name}")))
}

fn accumulate(slot: &mut Option<EvenPoly>, p: EvenPoly) {
    *slot = Some(match slot.take() {
        Some(q) => q.checked_add(&p).expect("same variable count"),
        None => p,
    });
}

fn parse_perturbation(family: &KernelFamily, p: &Value) -> Result<Perturbed<CoeffElem>, Failure> {
    let mut out = Perturbed::new(Arc::new(family.clone()));
    if let Some(obj) = p.as_object() {
        if let Some(k) = obj.keys().find(|k| !["pants", "torus", "b", "c"].contains(&k.as_str())) {
            return Err(invalid(format!("unknown perturbation {k}")));
        }
    } else {
        return Err(invalid("perturb must be an object"));
    }
    for (_, poly) in parse_entries(p, "pants", 3)? {
        accumulate(&mut out.pants, poly);
    }
    for (_, poly) in parse_entries(p, "torus", 1)? {
        accumulate(&mut out.torus, poly);
    }
    for (e, poly) in parse_entries(p, "b", 2)? {
        let k = index(&e, "k")?;
        let mut slot = out.b.remove(&k);
        accumulate(&mut slot, poly);
        out.b.insert(k, slot.unwrap());
    }
    for (e, poly) in parse_entries(p, "c", 1)? {
        let key = (index(&e, "j")?, index(&e, "k")?);
        let mut slot = out.c.remove(&key);
        accumulate(&mut slot, poly);
        out.c.insert(key, slot.unwrap());
    }
    Ok(out)
}

fn parse_twist_str(s: &str) -> Result<MomentSpec, Failure> {
    let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
    let rational = || parse_rational(arg).map_err(|e| invalid(format!("twist {s}: {e}")));
    match kind {
        "zero" => Ok(MomentSpec::Zero),
        "formal" => {
            let tag = if arg.is_empty() { 0 } else { arg.parse().map_err(|_| invalid(format!("twist {s}: bad tag")))? };
            Ok(MomentSpec::Formal { tag })
        }
        "indicator" => MomentSpec::indicator(rational()?).map_err(|e| invalid(e.to_string())),
        "exponential" => MomentSpec::exponential(rational()?).map_err(|e| invalid(e.to_string())),
        _ => {
            let text = if s.trim_start().starts_with('{') {
                s.to_string()
            } else {
                std::fs::read_to_string(s).map_err(|_| invalid(format!("unknown twist {s}")))?
            };
            let v: Value = serde_json::from_str(&text).map_err(|e| invalid(format!("twist: {e}")))?;
            MomentSpec::from_json(&v).map_err(|e| invalid(e.to_string()))
        }
    }
}
