//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde_json::{json, Value};

use crate::cartan::{
    build_cartan_split, build_decomposition_sequence, check_cartan_conditions, default_sequence, enumerate_t_choices,
    shell_enumeration, DecompositionSequence,
};
use crate::error::Error;
use crate::generator::{lambda_basis, Label, Site, SiteStructure};
use crate::json::{
    factorization_to_json, generators_from_file_json, generators_json, matrix_from_json, qa_from_json, qa_to_json,
    sequence_from_json, to_pretty, CartanSplitJson,
};
use crate::kak::{recursive_decompose, word_basis, Factorization};
use crate::linalg::unitarity_error;
use crate::partition::{
    build_quotient_algebra, format_label, intrinsic_quotient_algebra, parse_label, AbelianSpace, QuotientAlgebra,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Partition,
    Splits,
    MaximalAbelian,
    Decompose,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Json,
    Table,
}

/// Quotient algebras, Cartan decompositions and KAK factorizations of su(N).
#[derive(Debug, Clone, Parser)]
#[command(name = "cartan-kak", version)]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    /// Dimension N of su(N).
    #[arg(long)]
    pub dim: Option<usize>,
    /// `intrinsic` or a JSON file listing the center generators.
    #[arg(long, default_value = "intrinsic")]
    pub center: String,
    /// `default` or a decomposition-sequence JSON file.
    #[arg(long, default_value = "default")]
    pub sequence: String,
    /// Selector of a single split, or of the level-1 split of the default sequence.
    #[arg(long)]
    pub choice_bits: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Shell depth for maximal-abelian enumeration.
    #[arg(long, default_value_t = 2)]
    pub shells: usize,
}

/// Outcome classes mapped onto exit codes 1, 2 and 3.
#[derive(Debug)]
pub enum Failure {
    Verification(String),
    Invalid(String),
    Decomposition(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Invalid(_) => 2,
            Failure::Decomposition(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Verification(m) | Failure::Invalid(m) | Failure::Decomposition(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Decomposition { .. } | Error::CannotExtend(_) => Failure::Decomposition(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args`, runs the command and returns the exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 2;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    run(&cfg, out, err)
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter("CARTAN_KAK_LOG").write_style("CARTAN_KAK_LOG_STYLE");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

pub fn run(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    log::debug!("running {:?}", cfg.command);
    let res = match cfg.command {
        Command::Partition => cmd_partition(cfg, out),
        Command::Splits => cmd_splits(cfg, out),
        Command::MaximalAbelian => cmd_maximal_abelian(cfg, out),
        Command::Decompose => cmd_decompose(cfg, out, err),
        Command::Verify => cmd_verify(cfg, out),
    };
    match res {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

/// Writes to `--output` through a temporary file, or to `out`.
fn emit(cfg: &RunConfig, out: &mut dyn Write, text: &str) -> Outcome {
    match &cfg.output {
        Some(path) => {
            let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let io = |e: std::io::Error| Failure::Invalid(format!("{}: {e}", path.display()));
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
            tmp.write_all(text.as_bytes()).map_err(io)?;
            tmp.persist(path).map_err(|e| io(e.error))?;
            Ok(())
        }
        None => out.write_all(text.as_bytes()).map_err(|e| Failure::Invalid(e.to_string())),
    }
}

fn require_dim(cfg: &RunConfig) -> Result<usize, Failure> {
    match cfg.dim {
        Some(n) if n >= 2 => Ok(n),
        Some(n) => Err(Failure::Invalid(format!("--dim must be at least 2, got {n}"))),
        None => Err(Failure::Invalid("--dim is required".into())),
    }
}

fn parse_bits(s: &str) -> Result<usize, Failure> {
    Ok(parse_label(s)?)
}

/// Quotient algebra from `--input`, or built from `--dim` and `--center`.
fn load_qa(cfg: &RunConfig) -> Result<QuotientAlgebra, Failure> {
    if let (Some(path), Command::Splits | Command::Verify) = (&cfg.input, cfg.command) {
        let qa = qa_from_json(&read(path)?)?;
        if let Some(n) = cfg.dim {
            if n != qa.dim {
                return Err(Error::DimensionMismatch(qa.dim, n).into());
            }
        }
        return Ok(qa);
    }
    let n = require_dim(cfg)?;
    if cfg.center == "intrinsic" {
        return Ok(intrinsic_quotient_algebra(n)?);
    }
    let gens = generators_from_file_json(&read(Path::new(&cfg.center))?)?;
    if let Some(g) = gens.iter().find(|g| g.dim != n) {
        return Err(Error::DimensionMismatch(g.dim, n).into());
    }
    let words = gens.iter().all(|g| matches!(g.label, Label::Tensor(_)));
    let center = AbelianSpace::unchecked(n, gens, false, None);
    let basis = if words { SiteStructure::default_for(n).word_generators() } else { lambda_basis(n) };
    Ok(build_quotient_algebra(&center, &basis)?)
}

fn site_symbol(s: &Site) -> String {
    match (s.dim, s.index) {
        (_, 0) => "I".into(),
        (2, k) => format!("σ{k}"),
        (3, k) => format!("μ{k}"),
        (d, k) => format!("s{d}_{k}"),
    }
}

fn word_name(w: &[Site]) -> String {
    w.iter().map(site_symbol).collect()
}

/// Names of a space's generators, as site words when the space is spanned by them.
fn space_names(space: &AbelianSpace, sites: &SiteStructure) -> Vec<String> {
    if space.generators.iter().all(|g| matches!(g.label, Label::Tensor(_))) {
        return space.generators.iter().map(|g| word_name(g.label.tensor_word().expect("tensor"))).collect();
    }
    match word_basis(space, sites) {
        Ok(ws) => ws.iter().map(|(w, _)| word_name(w)).collect(),
        Err(_) => space.generators.iter().map(|g| g.label.to_string()).collect(),
    }
}

pub fn qa_table(qa: &QuotientAlgebra) -> String {
    let sites = SiteStructure::default_for(qa.dim);
    let mut rows: Vec<[String; 3]> = vec![["label".into(), "W".into(), "Ŵ".into()]];
    for (k, pr) in qa.pairs.iter().enumerate() {
        let label = pr.binary_label.map(|z| format_label(z, qa.p)).unwrap_or_else(|| format!("#{}", k + 1));
        rows.push([label, space_names(&pr.w, &sites).join(", "), space_names(&pr.w_hat, &sites).join(", ")]);
    }
    let width = |c: usize| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0);
    let (w0, w1) = (width(0), width(1));
    let mut s = String::new();
    let _ = writeln!(s, "su({}) quotient algebra, p = {}", qa.dim, qa.p);
    let _ = writeln!(s, "center: {}", space_names(&qa.center, &sites).join(", "));
    for r in &rows {
        let pad1 = w1 - r[1].chars().count();
        let _ = writeln!(s, "{:<w0$}  {}{}  {}", r[0], r[1], " ".repeat(pad1), r[2]);
    }
    s
}

fn cmd_partition(cfg: &RunConfig, out: &mut dyn Write) -> Outcome {
    let qa = load_qa(cfg)?;
    log::info!("su({}) quotient algebra with {} pairs", qa.dim, qa.pairs.len());
    let text = match cfg.format {
        Format::Json => qa_to_json(&qa),
        Format::Table => qa_table(&qa),
    };
    emit(cfg, out, &text)
}

fn cmd_splits(cfg: &RunConfig, out: &mut dyn Write) -> Outcome {
    let qa = load_qa(cfg)?;
    let choices = match &cfg.choice_bits {
        Some(b) => vec![parse_bits(b)?],
        None => enumerate_t_choices(&qa)?,
    };
    let sites = SiteStructure::default_for(qa.dim);
    let mut items = Vec::new();
    let mut table = format!("su({}) Cartan splits\nchoice  t  |  p  (max residual)\n", qa.dim);
    for c in choices {
        let split = build_cartan_split(&qa, c)?;
        let rep = check_cartan_conditions(&split);
        let mut v = serde_json::to_value(CartanSplitJson::from_split(&split)).expect("serializable");
        v["conditions"] = json!({"tt": rep.tt, "tp": rep.tp, "pp": rep.pp, "trace": rep.trace});
        items.push(v);
        let names = |spaces: &[AbelianSpace]| {
            spaces.iter().map(|sp| space_names(sp, &sites).join(" ")).collect::<Vec<_>>().join("; ")
        };
        let _ = writeln!(table, "{}  {}  |  {}  ({:.1e})", split.choice_string(), names(&split.t), names(&split.p_part), rep.max());
    }
    let text = match cfg.format {
        Format::Json => to_pretty(&json!({"dim": qa.dim, "p": qa.p, "splits": items})),
        Format::Table => table,
    };
    emit(cfg, out, &text)
}

fn cmd_maximal_abelian(cfg: &RunConfig, out: &mut dyn Write) -> Outcome {
    let n = require_dim(cfg)?;
    let en = shell_enumeration(n, cfg.shells)?;
    let sites = SiteStructure::default_for(n);
    let text = match cfg.format {
        Format::Json => {
            let members: Vec<Value> = en
                .members
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    json!({
                        "shell": en.shell[k],
                        "neighbors": en.neighbors[k].as_ref().map(|s| s.len()),
                        "generators": generators_json(&m.generators),
                    })
                })
                .collect();
            to_pretty(&json!({
                "dim": n,
                "shells": cfg.shells,
                "count": en.members.len(),
                "new_per_shell": en.new_per_shell,
                "members": members,
            }))
        }
        Format::Table => {
            let mut s = format!("su({n}) maximal abelian subalgebras: {} found\n", en.members.len());
            let _ = writeln!(s, "new per shell: {:?}", en.new_per_shell);
            for (k, m) in en.members.iter().enumerate() {
                let nb = en.neighbors[k].as_ref().map(|x| x.len().to_string()).unwrap_or_else(|| "-".into());
                let _ = writeln!(s, "{:>3}  shell {}  neighbors {:>2}  {}", k + 1, en.shell[k], nb, space_names(m, &sites).join(", "));
            }
            s
        }
    };
    emit(cfg, out, &text)
}

fn load_sequence(cfg: &RunConfig, n: usize) -> Result<DecompositionSequence, Failure> {
    if cfg.sequence != "default" {
        let qa = load_qa(&RunConfig { dim: Some(n), ..cfg.clone() })?;
        return Ok(sequence_from_json(&read(Path::new(&cfg.sequence))?, &qa)?);
    }
    match (&cfg.choice_bits, cfg.center.as_str()) {
        (None, "intrinsic") => Ok(default_sequence(n)?),
        (bits, _) => {
            let qa = load_qa(&RunConfig { dim: Some(n), ..cfg.clone() })?;
            let mut choices = vec![0; qa.p];
            if let Some(b) = bits {
                choices[0] = parse_bits(b)?;
            }
            Ok(build_decomposition_sequence(&qa, &choices, &[])?)
        }
    }
}

pub fn factorization_table(f: &Factorization) -> String {
    let mut s = format!(
        "dim {}  global phase {:+.6}{:+.6}i  reconstruction error {:.3e}\n",
        f.dim, f.global_phase.re, f.global_phase.im, f.reconstruction_error
    );
    let _ = writeln!(s, "tree  #   locality  angle                 generator");
    for g in &f.factors {
        let name = g.generator.label.tensor_word().map(word_name).unwrap_or_else(|| g.generator.label.to_string());
        let _ = writeln!(s, "{}  {:<2}  {:<8}  {:+.17}  {}", g.tree_index, g.ordinal, g.locality.as_str(), g.angle, name);
    }
    s
}

fn cmd_decompose(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let path = cfg.input.as_ref().ok_or_else(|| Failure::Invalid("--input is required".into()))?;
    let u = matrix_from_json(&read(path)?)?;
    let n = u.nrows();
    if let Some(d) = cfg.dim {
        if d != n {
            return Err(Error::DimensionMismatch(n, d).into());
        }
    }
    if n < 2 {
        return Err(Failure::Invalid("matrix dimension must be at least 2".into()));
    }
    let dev = unitarity_error(&u);
    if dev > 1e-9 {
        return Err(Error::NotUnitary(dev).into());
    }
    let seq = load_sequence(cfg, n)?;
    let f = recursive_decompose(&u, &seq, cfg.seed)?;
    log::info!("{} factors over {} blocks", f.factors.len(), f.block_count);
    let text = match cfg.format {
        Format::Json => factorization_to_json(&f),
        Format::Table => factorization_table(&f),
    };
    emit(cfg, out, &text)?;
    let summary = format!(
        "factors: {} (local {}, nonlocal {}), reconstruction error {:.3e}\n",
        f.factors.len(),
        f.local_count(),
        f.nonlocal_count(),
        f.reconstruction_error
    );
    let sink: &mut dyn Write = if cfg.output.is_some() { out } else { err };
    let _ = sink.write_all(summary.as_bytes());
    if f.reconstruction_error < 1e-8 {
        Ok(())
    } else {
        Err(Failure::Decomposition(format!("reconstruction error {:e} exceeds 1e-8", f.reconstruction_error)))
    }
}

fn cmd_verify(cfg: &RunConfig, out: &mut dyn Write) -> Outcome {
    let qa = match &cfg.input {
        Some(_) => load_qa(cfg)?,
        None => load_qa(&RunConfig { command: Command::Partition, ..cfg.clone() })?,
    };
    let mut spaces: Vec<(String, &AbelianSpace)> = vec![("C".into(), &qa.center)];
    for (k, pr) in qa.pairs.iter().enumerate() {
        let tag = pr.binary_label.map(|z| format_label(z, qa.p)).unwrap_or_else(|| format!("#{}", k + 1));
        spaces.push((format!("W{tag}"), &pr.w));
        spaces.push((format!("Ŵ{tag}"), &pr.w_hat));
    }
    let nonabelian: Vec<Value> = spaces
        .iter()
        .filter_map(|(name, sp)| {
            sp.first_noncommuting().map(|(a, b)| {
                json!({"space": name, "left": sp.generators[a].label.to_string(), "right": sp.generators[b].label.to_string()})
            })
        })
        .collect();
    let count: usize = qa.center.len() + qa.pairs.iter().map(|p| p.w.len() + p.w_hat.len()).sum::<usize>();
    let expected = qa.dim * qa.dim - 1;
    let closure = crate::partition::verify_closure(&qa);
    let mut passed = nonabelian.is_empty() && closure.passed() && count == expected;
    let mut cartan = Vec::new();
    if closure.passed() && qa.is_labeled() {
        for c in 0..(1usize << qa.p) {
            let entry = match build_cartan_split(&qa, c) {
                Ok(split) => {
                    let r = check_cartan_conditions(&split);
                    json!({"choice_bits": split.choice_string(), "tt": r.tt, "tp": r.tp, "pp": r.pp, "trace": r.trace, "passed": true})
                }
                Err(e) => {
                    passed = false;
                    json!({"choice_bits": format_label(c, qa.p), "passed": false, "reason": e.to_string()})
                }
            };
            cartan.push(entry);
        }
    }
    let violations: Vec<Value> = closure
        .violations
        .iter()
        .map(|v| json!({"left": v.left, "right": v.right, "expected": v.expected, "residual": v.residual}))
        .collect();
    let report = json!({
        "dim": qa.dim,
        "p": qa.p,
        "generator_count": count,
        "expected_generator_count": expected,
        "nonabelian_spaces": nonabelian,
        "closure": {"checked": closure.checked, "max_residual": closure.max_residual, "violations": violations},
        "cartan": cartan,
        "passed": passed,
    });
    let text = match cfg.format {
        Format::Json => to_pretty(&report),
        Format::Table => {
            let mut s = format!(
                "su({}) verification: {}\ngenerators {}/{}  closure checked {}  max residual {:.3e}\n",
                qa.dim,
                if passed { "passed" } else { "FAILED" },
                count,
                expected,
                closure.checked,
                closure.max_residual
            );
            for v in &closure.violations {
                let _ = writeln!(s, "  [{}, {}] should lie in {} (residual {:.3e})", v.left, v.right, v.expected, v.residual);
            }
            for v in &nonabelian {
                let _ = writeln!(s, "  {} is not abelian: {} vs {}", v["space"], v["left"], v["right"]);
            }
            s
        }
    };
    emit(cfg, out, &text)?;
    if passed {
        Ok(())
    } else {
        let first = closure
            .violations
            .first()
            .map(|v| format!("[{}, {}] leaves {}", v.left, v.right, v.expected))
            .or_else(|| nonabelian.first().map(|v| format!("{} is not abelian", v["space"])))
            .unwrap_or_else(|| "structure check failed".into());
        Err(Failure::Verification(first))
    }
}
