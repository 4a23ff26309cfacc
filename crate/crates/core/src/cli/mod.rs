//! The `ldvd` subcommands as library functions: `run`, `params`, `plot`
//! and `verify`. Each returns a [`CliError`] carrying the process exit code.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use crate::checkpoint::save_params;
use crate::config::{DataSource, ExperimentConfig};
use crate::error::Error;
use crate::gan::{train, RunArtifacts, RunSeeds};
use crate::lipschitz::LipschitzKind;
use crate::metrics::{evaluate_generator, real_feature_stats, write_metrics_csv, EvalSummary, FeatureStats, Surrogate};
use crate::nn::presets::{self, Discriminator};
use crate::nn::{NetSpec, Shape};
use crate::report::{
    gradnorms_svg, losses_svg, read_gradnorms, read_losses, read_spectra, spectra_svg, spectra_k, write_gradnorms,
    write_losses, write_spectra, write_svc_audit,
};
use crate::video::{LdvdDirDataset, Prefetch, SynthDataset};
use crate::{verify, worker_threads};

/// A failed command and its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad config, unknown preset, missing input: exit 2.
    Usage(String),
    /// Training hit a non-finite value: exit 3.
    Numerical(String),
    /// Anything else, including failed verification: exit 1.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Failed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => CliError::Usage(e.to_string()),
            Error::NonFinite(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

const BUNDLED: &[(&str, &str)] = &[
    ("tgan-vs-tganf-curvature", include_str!("../../configs/tgan-vs-tganf-curvature.ini")),
    ("svc-vs-none", include_str!("../../configs/svc-vs-none.ini")),
    ("saturating-loss", include_str!("../../configs/saturating-loss.ini")),
    ("smoke", include_str!("../../configs/smoke.ini")),
];

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|b| b.0).collect()
}

pub fn bundled_config(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|b| b.0 == name).map(|b| b.1)
}

/// A config file path, or the name of a bundled config. Spec files in a
/// config file resolve against its directory.
pub fn resolve_config(arg: &str) -> CliResult<(ExperimentConfig, Option<PathBuf>)> {
    let path = Path::new(arg);
    if path.is_file() {
        let cfg = ExperimentConfig::load(path)?;
        return Ok((cfg, path.parent().map(Path::to_path_buf)));
    }
    match bundled_config(arg) {
        Some(text) => Ok((ExperimentConfig::parse(text)?, None)),
        None => Err(CliError::Usage(format!(
            "no config file {arg:?} and no bundled config of that name; bundled configs: {}",
            bundled_names().join(", ")
        ))),
    }
}

/// One trained discriminator variant.
#[derive(Clone, Debug)]
pub struct VariantSummary {
    pub name: String,
    pub dir: PathBuf,
    pub iterations: usize,
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub variants: Vec<VariantSummary>,
}

struct Variant {
    name: String,
    spec: NetSpec,
    kind: LipschitzKind,
}

fn data_shape(cfg: &ExperimentConfig) -> Shape {
    Shape::new(cfg.data.frames, cfg.data.size, cfg.data.size, cfg.data.channels)
}

fn variants(cfg: &ExperimentConfig, base: Option<&Path>) -> CliResult<Vec<Variant>> {
    let mut nets = Vec::new();
    for name in &cfg.discriminator.presets {
        let spec = if presets::is_toy(name) {
            presets::toy(name, Some(data_shape(cfg)), cfg.discriminator.width)
        } else {
            match presets::lookup(name) {
                Ok(Discriminator::Single(s)) => Ok(s),
                Ok(Discriminator::Pair { .. }) => {
                    return Err(CliError::Usage(format!(
                        "discriminator.presets: {name:?} is an image + video pair; train its members separately"
                    )))
                }
                Err(e) => Err(e),
            }
        }
        .map_err(|e| CliError::Usage(format!("discriminator.presets: {e}")))?;
        nets.push((name.clone(), spec));
    }
    for path in cfg.spec_paths(base) {
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("discriminator.spec_files: {}: {e}", path.display())))?;
        let spec = NetSpec::from_text(&text)
            .map_err(|e| CliError::Usage(format!("discriminator.spec_files: {}: {e}", path.display())))?;
        let stem = path.file_stem().map_or("spec".into(), |s| s.to_string_lossy().into_owned());
        nets.push((stem, spec));
    }
    if nets.is_empty() {
        return Err(CliError::Usage("discriminator: no presets or spec files given".into()));
    }
    let kinds = &cfg.lipschitz.kinds;
    let mut out = Vec::new();
    for (name, spec) in nets {
        for &kind in kinds {
            let name = if kinds.len() > 1 {
                format!("{name}-{}", kind.as_str())
            } else {
                name.clone()
            };
            if out.iter().any(|v: &Variant| v.name == name) {
                return Err(CliError::Usage(format!("discriminator: variant {name:?} listed twice")));
            }
            out.push(Variant {
                name,
                spec: spec.clone(),
                kind,
            });
        }
    }
    Ok(out)
}

fn open_data(cfg: &ExperimentConfig, base: Option<&Path>, seed: u64) -> CliResult<Prefetch> {
    Ok(match cfg.data.source {
        DataSource::Synth => Prefetch::new(SynthDataset::new(cfg.synth_config(seed))?, 2),
        DataSource::Dir => {
            let dir = match base {
                Some(b) if Path::new(&cfg.data.dir).is_relative() => b.join(&cfg.data.dir),
                _ => PathBuf::from(&cfg.data.dir),
            };
            let ds = LdvdDirDataset::open(&dir, cfg.preprocess_config(), cfg.data.batch, seed)
                .map_err(|e| CliError::Usage(format!("data.dir: {}: {e}", dir.display())))?;
            Prefetch::new(ds, 2)
        }
    })
}

/// Train every discriminator variant named by the config against the same
/// generator initialization, data stream and seed, writing one directory of
/// artifacts per variant under `out`.
pub fn cmd_run(config: &str, out: &Path, seed_override: Option<u64>) -> CliResult<RunSummary> {
    let (mut cfg, base) = resolve_config(config)?;
    if let Some(s) = seed_override {
        cfg.train.seed = s;
    }
    let seed = cfg.train.seed;
    let seeds = RunSeeds::from_seed(seed);
    let variants = variants(&cfg, base.as_deref())?;
    fs::create_dir_all(out).map_err(|e| CliError::Usage(format!("--out {}: {e}", out.display())))?;
    fs::write(out.join("config.ini"), cfg.canonical()).map_err(Error::from)?;

    let metrics = if cfg.metrics.enabled {
        let ext = Surrogate::bundled()?;
        if ext.input_shape() != data_shape(&cfg) {
            return Err(CliError::Usage(format!(
                "metrics.enabled: the feature extractor expects {} clips but the data yields {}",
                ext.input_shape(),
                data_shape(&cfg)
            )));
        }
        let mut real = open_data(&cfg, base.as_deref(), seeds.data ^ 0x4ea1)?;
        let stats = real_feature_stats(&ext, &mut real, cfg.metrics.real_samples)?;
        Some((ext, stats))
    } else {
        None
    };

    let mut summary = RunSummary {
        out_dir: out.to_path_buf(),
        seed,
        variants: Vec::new(),
    };
    for v in &variants {
        let dir = out.join(&v.name);
        fs::create_dir_all(dir.join("checkpoints")).map_err(Error::from)?;
        let mut data = open_data(&cfg, base.as_deref(), seeds.data)?;
        let tcfg = cfg.train_config(v.kind, seed, worker_threads());
        let run = train(&tcfg, cfg.generator_config(), &v.spec, &mut data).map_err(|e| match e {
            Error::Config { .. } | Error::NonFinite(_) => CliError::from(e),
            e => CliError::Usage(format!("{}: {e}", v.name)),
        })?;
        let eval = match (&metrics, &run.failure) {
            (Some((ext, stats)), None) => Some(eval_run(&run, ext, stats, &cfg, seed)?),
            _ => None,
        };
        write_variant(&dir, &v.name, &run, cfg.analysis.k, eval)?;
        summary.variants.push(VariantSummary {
            name: v.name.clone(),
            dir,
            iterations: run.losses.len(),
            failure: run
                .failure
                .as_ref()
                .map(|f| format!("iteration {}: {} (last good iteration {})", f.iteration, f.message, f.last_good)),
        });
    }
    let failed: Vec<String> = summary
        .variants
        .iter()
        .filter_map(|v| v.failure.as_ref().map(|f| format!("{}: {f}", v.name)))
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Numerical(format!("non-finite values during training\n{}", failed.join("\n"))));
    }
    Ok(summary)
}

fn eval_run(
    run: &RunArtifacts,
    ext: &Surrogate,
    stats: &FeatureStats,
    cfg: &ExperimentConfig,
    seed: u64,
) -> CliResult<EvalSummary> {
    Ok(evaluate_generator(&run.generator, ext, stats, &cfg.eval_config(seed))?)
}

fn write_variant(dir: &Path, name: &str, run: &RunArtifacts, k: usize, eval: Option<EvalSummary>) -> CliResult<()> {
    write_losses(&dir.join("losses.csv"), &run.losses)?;
    write_spectra(&dir.join("spectra.csv"), &run.spectra, k)?;
    write_gradnorms(&dir.join("gradnorms.csv"), &run.gradnorms)?;
    write_svc_audit(&dir.join("svc_audit.csv"), &run.svc_audit)?;
    let rows: Vec<(String, EvalSummary)> = eval.into_iter().map(|e| (name.to_string(), e)).collect();
    write_metrics_csv(fs::File::create(dir.join("metrics.csv")).map_err(Error::from)?, &rows)?;
    for c in &run.checkpoints {
        save_params(dir.join(format!("checkpoints/g_{:06}.ldps", c.iteration)), &c.generator)?;
        save_params(dir.join(format!("checkpoints/d_{:06}.ldps", c.iteration)), &c.discriminator)?;
    }
    let failure = dir.join("failure.txt");
    match &run.failure {
        Some(f) => fs::write(
            &failure,
            format!(
                "iteration = {}\nlast_good = {}\nmessage = {}\n",
                f.iteration, f.last_good, f.message
            ),
        )
        .map_err(Error::from)?,
        None if failure.exists() => fs::remove_file(&failure).map_err(Error::from)?,
        None => {}
    }
    for fig in Figure::ALL {
        render(dir, name, fig)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    Spectra,
    Gradnorms,
    Losses,
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::Spectra, Figure::Gradnorms, Figure::Losses];

    pub fn as_str(self) -> &'static str {
        match self {
            Figure::Spectra => "spectra",
            Figure::Gradnorms => "gradnorms",
            Figure::Losses => "losses",
        }
    }

    pub fn parse(s: &str) -> Option<Figure> {
        Figure::ALL.into_iter().find(|f| f.as_str() == s)
    }

    fn csv(self) -> &'static str {
        match self {
            Figure::Spectra => "spectra.csv",
            Figure::Gradnorms => "gradnorms.csv",
            Figure::Losses => "losses.csv",
        }
    }
}

fn render(dir: &Path, title: &str, fig: Figure) -> CliResult<PathBuf> {
    let csv = dir.join(fig.csv());
    if !csv.is_file() {
        return Err(CliError::Usage(format!("missing {}", csv.display())));
    }
    let svg = match fig {
        Figure::Spectra => spectra_svg(&read_spectra(&csv)?, spectra_k(&csv)?, &format!("{title}: top eigenvalues of the D-loss Hessian")),
        Figure::Gradnorms => gradnorms_svg(&read_gradnorms(&csv)?, &format!("{title}: gradient norm per node")),
        Figure::Losses => losses_svg(&read_losses(&csv)?, &format!("{title}: losses")),
    };
    let path = dir.join(format!("{}.svg", fig.as_str()));
    fs::write(&path, svg).map_err(Error::from)?;
    Ok(path)
}

/// Directories holding run artifacts: `dir` itself, or its variant
/// subdirectories in name order.
fn variant_dirs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let is_variant = |d: &Path| Figure::ALL.iter().any(|f| d.join(f.csv()).is_file());
    if is_variant(dir) {
        return Ok(vec![dir.to_path_buf()]);
    }
    let entries = fs::read_dir(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && is_variant(p))
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(CliError::Usage(format!("no run artifacts under {}", dir.display())));
    }
    Ok(out)
}

/// Render one figure (or all three) for a run directory; returns the SVG
/// paths written.
pub fn cmd_plot(run_dir: &Path, figure: Option<Figure>) -> CliResult<Vec<PathBuf>> {
    let figs = figure.map_or(Figure::ALL.to_vec(), |f| vec![f]);
    let mut out = Vec::new();
    for dir in variant_dirs(run_dir)? {
        let title = dir.file_name().map_or(String::new(), |s| s.to_string_lossy().into_owned());
        for &f in &figs {
            out.push(render(&dir, &title, f)?);
        }
    }
    Ok(out)
}

fn family_baseline(name: &str) -> Option<&'static str> {
    if name.starts_with("tgan") {
        Some("tgan-d")
    } else if name.starts_with("mocogan") {
        Some("mocogan-d")
    } else if name.starts_with("toy") {
        Some("toy-3d")
    } else if name.starts_with("tiny") {
        Some("tiny-3d")
    } else {
        None
    }
}

fn resolve_disc(arg: &str) -> CliResult<(String, Discriminator)> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(Error::from)?;
        let spec = NetSpec::from_text(&text).map_err(|e| CliError::Usage(format!("{arg}: {e}")))?;
        return Ok((spec.name.clone(), Discriminator::Single(spec)));
    }
    presets::lookup(arg)
        .map(|d| (arg.to_string(), d))
        .map_err(|e| CliError::Usage(e.to_string()))
}

/// Per-layer parameter table, total, and reduction against `baseline`
/// (by default the family's full 3D discriminator).
pub fn cmd_params(spec: &str, baseline: Option<&str>) -> CliResult<String> {
    let (name, disc) = resolve_disc(spec)?;
    let mut o = String::new();
    for net in disc.nets() {
        let _ = writeln!(o, "{} (input {})", net.name, net.input);
        let _ = writeln!(o, "  {:<14} {:<16} {:<16} {:>12}", "layer", "kind", "output", "params");
        for row in net.layer_counts()? {
            let _ = writeln!(
                o,
                "  {:<14} {:<16} {:<16} {:>12}",
                row.name,
                row.kind.as_str(),
                row.output.to_string(),
                row.params
            );
        }
        let _ = writeln!(o, "  {:<48} {:>12}", "subtotal", net.count_params()?);
    }
    let total = disc.count_params()?;
    let _ = writeln!(o, "total {total} ({:.1}M)", presets::round_millions(total));
    let base = baseline.map(str::to_string).or_else(|| family_baseline(&name).map(str::to_string));
    if let Some(b) = base {
        let (_, bd) = resolve_disc(&b)?;
        let bc = bd.count_params()?;
        let _ = writeln!(
            o,
            "reduction vs {b} ({bc}): {:.2}%",
            presets::reduction_percent(bc, total)
        );
    }
    Ok(o)
}

/// Run the oracle suite; the report is returned either way, and failures
/// also name the failing checks.
pub fn cmd_verify(seed: u64) -> (String, CliResult<()>) {
    let checks = verify::run_all(seed);
    let mut o = String::new();
    for c in &checks {
        let _ = writeln!(o, "{} {:<34} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let _ = writeln!(o, "\nparameter counts (millions, rounded to 0.1M)");
    let _ = writeln!(o, "  {:<26} {:<30} {:>6} {:>12} {:>8}", "preset", "network", "published", "computed", "");
    match presets::conformance_table() {
        Ok(rows) => {
            for r in rows {
                let _ = writeln!(
                    o,
                    "  {:<26} {:<30} {:>6.1} {:>12} {:>8}",
                    r.preset,
                    r.label,
                    r.published_millions,
                    r.computed,
                    if r.matches() { "ok" } else { "MISMATCH" }
                );
            }
        }
        Err(e) => {
            let _ = writeln!(o, "  error: {e}");
        }
    }
    let _ = writeln!(o, "\nparameter reduction against the 3D baseline (%)");
    if let Ok(rows) = presets::reduction_table() {
        for r in rows {
            let _ = writeln!(
                o,
                "  {:<12} {:<18} vs {:<10} published {:>6.2} computed {:>6.2}",
                r.label, r.variant, r.base, r.published_percent, r.computed_percent
            );
        }
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let res = if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("failed checks: {}", failed.join(", "))))
    };
    (o, res)
}
