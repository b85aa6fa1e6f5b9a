//! Subcommand bodies and the run-directory layout.

use std::fs;
use std::path::{Path, PathBuf};

use paretorec::data::{leave_one_out, load_tsv, save_tsv, synthesize, Dataset, Holdout, Manifest, SynthConfig, Target};
use paretorec::eval::{
    overhead_report, rank_targets, summarize, weight_trajectory_report, write_json, AttentionStats, EvalConfig,
    Outcome, StrataTable, OVERHEAD_WARMUP,
};
use paretorec::model::{checkpoint, EncoderState};
use paretorec::pareto::{read_step_log, write_step_log};
use paretorec::train::{
    attention_stats, sweep_static_weights, test_report, train as fit, train_unvalidated, write_validation_log, Method,
    ModelScorer, TrainConfig,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// A failed command: a one-line message and its exit code.
#[derive(Debug)]
pub enum Failure {
    Config { field: String, reason: String },
    Runtime(String),
}

impl Failure {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Failure::Config { field: field.into(), reason: reason.into() }
    }

    pub fn code(&self) -> u8 {
        match self {
            Failure::Config { .. } => 3,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn line(&self) -> String {
        let one = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
        match self {
            Failure::Config { field, reason } => format!("error kind=config field={field} reason=\"{}\"", one(reason)),
            Failure::Runtime(m) => format!("error kind=runtime reason=\"{}\"", one(m)),
        }
    }
}

impl From<paretorec::Error> for Failure {
    fn from(e: paretorec::Error) -> Self {
        match e {
            paretorec::Error::Config { field, reason } => Failure::Config { field, reason },
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn runtime(context: &str, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{context}: {e}"))
}

pub const CONFIG_FILE: &str = "config.resolved.toml";
const LAYOUT: [&str; 4] = ["data", "checkpoints", "logs", "reports"];

/// Fixed layout of a run directory.
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    /// Creates the layout. An existing run directory is only reused with `force`,
    /// which clears the layout entries and leaves anything else in place.
    pub fn create(root: &Path, force: bool) -> Result<Self, Failure> {
        let taken = LAYOUT.iter().any(|d| root.join(d).exists()) || root.join(CONFIG_FILE).exists();
        if taken && !force {
            return Err(Failure::config("out", format!("{} already holds a run; pass --force to replace it", root.display())));
        }
        if taken {
            for d in LAYOUT {
                let p = root.join(d);
                if p.exists() {
                    fs::remove_dir_all(&p)?;
                }
            }
            let c = root.join(CONFIG_FILE);
            if c.exists() {
                fs::remove_file(c)?;
            }
        }
        for d in LAYOUT {
            fs::create_dir_all(root.join(d))?;
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn open(root: &Path) -> Result<Self, Failure> {
        if !root.join(CONFIG_FILE).exists() {
            return Err(Failure::Runtime(format!("{} is not a run directory (no {CONFIG_FILE})", root.display())));
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, sub: &str, file: &str) -> PathBuf {
        self.root.join(sub).join(file)
    }

    fn write_config<T: Serialize>(&self, cfg: &T) -> Result<(), Failure> {
        let text = toml::to_string(cfg).map_err(|e| runtime("serializing config", e))?;
        fs::write(self.root.join(CONFIG_FILE), text)?;
        Ok(())
    }

    fn label(&self) -> String {
        self.root.file_name().map_or_else(|| self.root.display().to_string(), |n| n.to_string_lossy().into_owned())
    }
}

/// Reads a TOML (by extension) or JSON config; unknown or mistyped keys are
/// reported with their path.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| runtime(&format!("reading {}", path.display()), e))?;
    let is_toml = path.extension().map_or(true, |e| e != "json");
    let parsed: Result<T, (String, String)> = if is_toml {
        let de = toml::Deserializer::new(&text);
        serde_path_to_error::deserialize(de).map_err(|e| (e.path().to_string(), e.inner().message().to_string()))
    } else {
        let mut de = serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| (e.path().to_string(), e.inner().to_string()))
    };
    parsed.map_err(|(field, reason)| Failure::config(if field == "." { "config".into() } else { field }, reason))
}

fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> paretorec::Result<()>) -> Result<(), Failure> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn synth_config(path: &Option<PathBuf>, seed: Option<u64>) -> Result<SynthConfig, Failure> {
    let mut cfg: SynthConfig = match path {
        Some(p) => load_config(p)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train_config(path: &Option<PathBuf>, seed: Option<u64>, threads: usize) -> Result<TrainConfig, Failure> {
    let mut cfg: TrainConfig = match path {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.eval.threads = threads;
    cfg.validate()?;
    Ok(cfg)
}

pub fn generate(cfg: SynthConfig, dir: &RunDir) -> Result<(), Failure> {
    let (data, truth) = synthesize(&cfg)?;
    dir.write_config(&cfg)?;
    save_tsv(&dir.path("data", "interactions.tsv"), &data)?;
    write_file(&dir.path("data", "manifest.json"), |b| write_json(b, &Manifest::describe(&data, Some(&cfg))))?;
    write_file(&dir.path("data", "ground_truth.json"), |b| write_json(b, &truth))?;
    println!("{} users, {} interactions -> {}", data.sequences.len(), data.interactions(), dir.root.display());
    Ok(())
}

/// Loads a dataset from a TSV file or from the `data/` of a run directory,
/// using the stored catalog when there is one.
pub fn load_data(path: &Path) -> Result<(Dataset, PathBuf), Failure> {
    let tsv = if path.is_dir() {
        let nested = path.join("data").join("interactions.tsv");
        if nested.exists() {
            nested
        } else {
            path.join("interactions.tsv")
        }
    } else {
        path.to_path_buf()
    };
    if !tsv.exists() {
        return Err(Failure::Runtime(format!("no dataset at {}", path.display())));
    }
    let manifest = tsv.with_file_name("manifest.json");
    let catalog = if manifest.exists() {
        let text = fs::read_to_string(&manifest)?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| runtime(&format!("reading {}", manifest.display()), e))?;
        Some(m.catalog)
    } else {
        None
    };
    Ok((load_tsv(&tsv, catalog.as_ref())?, tsv))
}

/// Copies the dataset into the run so later commands need only the run directory.
fn store_data(data: &Dataset, dir: &RunDir) -> Result<(), Failure> {
    save_tsv(&dir.path("data", "interactions.tsv"), data)?;
    write_file(&dir.path("data", "manifest.json"), |b| write_json(b, &Manifest::describe(data, None)))
}

fn write_report(dir: &Path, stem: &str, report: &paretorec::eval::EvalReport) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    write_file(&dir.join(format!("{stem}.json")), |b| write_json(b, report))?;
    write_file(&dir.join(format!("{stem}.csv")), |b| report.write_csv(b))
}

pub fn train(cfg: TrainConfig, data_path: &Path, dir: &RunDir) -> Result<(), Failure> {
    let (data, _) = load_data(data_path)?;
    let out = fit(&cfg, &data)?;
    dir.write_config(&out.config)?;
    store_data(&data, dir)?;
    out.save_checkpoint(&dir.path("checkpoints", "model.ckpt"))?;
    write_file(&dir.path("logs", "steps.csv"), |b| write_step_log(b, &out.log))?;
    write_file(&dir.path("logs", "validation.csv"), |b| write_validation_log(b, &out.validation))?;
    let report = test_report(&[&out], &data)?;
    write_report(&dir.root.join("reports"), "test", &report)?;
    println!(
        "{}: {} steps, best step {}, validation NDCG@10 {:.4}, test Recall@10 {:.4}",
        out.config.method.label(),
        out.steps,
        out.best_step,
        out.best_validation,
        report.macro_recall(10)
    );
    Ok(())
}

/// A trained run: its resolved config, best state and stored dataset.
struct Loaded {
    cfg: TrainConfig,
    state: EncoderState,
}

fn load_run(root: &Path) -> Result<Loaded, Failure> {
    let dir = RunDir::open(root)?;
    let cfg: TrainConfig = load_config(&dir.root.join(CONFIG_FILE))?;
    let (state, _) = checkpoint::load(&dir.path("checkpoints", "model.ckpt"))?;
    Ok(Loaded { cfg, state })
}

/// One scorer for the given runs and the domains it can answer for.
fn scorer_for(runs: &[Loaded], num_domains: usize) -> Result<(ModelScorer, Vec<usize>), Failure> {
    let singles: Vec<(usize, EncoderState)> = runs
        .iter()
        .filter_map(|r| match r.cfg.method {
            Method::SingleDomain { domain } => Some((domain, r.state.clone())),
            _ => None,
        })
        .collect();
    match (singles.len(), runs.len()) {
        (0, 1) => Ok((ModelScorer::cross_domain(runs[0].cfg.method.label(), runs[0].state.clone()), (0..num_domains).collect())),
        (n, m) if n == m => {
            let covered = singles.iter().map(|s| s.0).collect();
            Ok((ModelScorer::single_domain("single-domain", singles), covered))
        }
        _ => Err(Failure::config("run", "pass one cross-domain run or only single-domain runs")),
    }
}

fn outcomes(scorer: &ModelScorer, covered: &[usize], data: &Dataset, holdout: Holdout, cfg: &EvalConfig) -> Result<Vec<Outcome>, Failure> {
    let split = leave_one_out(&data.sequences);
    let targets: Vec<Target<'_>> =
        split.targets(holdout).into_iter().filter(|t| covered.contains(&t.target.domain)).collect();
    Ok(rank_targets(scorer, &targets, &data.catalog, cfg)?)
}

pub fn evaluate(
    runs: &[PathBuf],
    config: Option<&Path>,
    holdout: &str,
    out: Option<&Path>,
    seed: Option<u64>,
    threads: usize,
) -> Result<(), Failure> {
    let loaded: Vec<Loaded> = runs.iter().map(|r| load_run(r)).collect::<Result<_, _>>()?;
    let mut cfg = match config {
        Some(p) => load_config(p)?,
        None => loaded[0].cfg.eval.clone(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.threads = threads;
    cfg.validate()?;
    let (data, _) = load_data(&runs[0])?;
    let (scorer, covered) = scorer_for(&loaded, data.catalog.num_domains())?;
    let which = if holdout == "valid" { Holdout::Valid } else { Holdout::Test };
    let outs = outcomes(&scorer, &covered, &data, which, &cfg)?;
    use paretorec::eval::Scorer;
    let report = summarize(&scorer.name(), &outs, &data.catalog, &cfg);
    let dir = out.map_or_else(|| runs[0].join("reports"), Path::to_path_buf);
    write_report(&dir, &format!("eval_{holdout}"), &report)?;
    let ks = report.ks.iter().map(|k| format!("R@{k} {:.4}", report.macro_recall(*k)));
    println!("{} on {} {holdout} targets: {}", report.model, report.overall.targets, ks.collect::<Vec<_>>().join(", "));
    Ok(())
}

pub fn strata(single: &[PathBuf], cross: &Path, k: usize, out: Option<&Path>, threads: usize) -> Result<(), Failure> {
    if k == 0 {
        return Err(Failure::config("k", "must be positive"));
    }
    let singles: Vec<Loaded> = single.iter().map(|r| load_run(r)).collect::<Result<_, _>>()?;
    let crossed = load_run(cross)?;
    if matches!(crossed.cfg.method, Method::SingleDomain { .. }) {
        return Err(Failure::config("cross", "expected a cross-domain run"));
    }
    let (data, _) = load_data(cross)?;
    let domains = data.catalog.num_domains();
    let mut cfg = crossed.cfg.eval.clone();
    cfg.threads = threads;
    let (s_scorer, covered) = scorer_for(&singles, domains)?;
    if covered.len() != domains || singles.iter().any(|r| !matches!(r.cfg.method, Method::SingleDomain { .. })) {
        return Err(Failure::config("single", format!("need one single-domain run for each of {domains} domains")));
    }
    let s_out = outcomes(&s_scorer, &covered, &data, Holdout::Test, &cfg)?;
    let (c_scorer, all) = scorer_for(std::slice::from_ref(&crossed), domains)?;
    let c_out = outcomes(&c_scorer, &all, &data, Holdout::Test, &cfg)?;
    let split = leave_one_out(&data.sequences);
    let mut attention: Vec<(usize, AttentionStats)> = Vec::new();
    for t in split.targets(Holdout::Test) {
        if let Some(a) = attention_stats(&crossed.state, t.history, t.target.domain)? {
            attention.push((t.user, a));
        }
    }
    let table = StrataTable::build(&s_out, &c_out, &attention, k)?;
    let dir = out.map_or_else(|| cross.join("reports"), Path::to_path_buf);
    fs::create_dir_all(&dir)?;
    write_file(&dir.join("strata.csv"), |b| table.write_csv(b))?;
    write_file(&dir.join("strata.json"), |b| write_json(b, &table))?;
    for r in &table.rows {
        println!("{:<14} users {:>5}  a_cd {:.4} ± {:.4}", r.stratum.label(), r.users, r.mean_cross, r.sd_cross);
    }
    Ok(())
}

pub fn trajectory(runs: &[PathBuf], window: usize, out: &Path) -> Result<(), Failure> {
    if window == 0 {
        return Err(Failure::config("window", "must be positive"));
    }
    let mut logs = Vec::new();
    for r in runs {
        let dir = RunDir::open(r)?;
        let path = dir.path("logs", "steps.csv");
        let file = fs::File::open(&path).map_err(|e| runtime(&format!("reading {}", path.display()), e))?;
        logs.push((dir.label(), read_step_log(file)?));
    }
    let report = weight_trajectory_report(&logs, window)?;
    fs::create_dir_all(out)?;
    write_file(&out.join("trajectory.csv"), |b| report.write_csv(b))?;
    write_file(&out.join("trajectory_summary.csv"), |b| report.write_summary_csv(b))?;
    for r in &report.runs {
        println!("{}: final-20% mean alpha2 {:.4}", r.label, r.tail_mean);
    }
    Ok(())
}

pub fn sweep(cfg: TrainConfig, data_path: &Path, weights: &[f64], dir: &RunDir) -> Result<(), Failure> {
    if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Failure::config("weights", format!("{w} outside [0, 1]")));
    }
    let (data, _) = load_data(data_path)?;
    let grid: Vec<(f64, f64)> = weights.iter().map(|&w| (1.0 - w, w)).collect();
    let points = sweep_static_weights(&cfg, &data, &grid)?;
    dir.write_config(&cfg)?;
    store_data(&data, dir)?;
    write_file(&dir.path("reports", "sweep.json"), |b| write_json(b, &points))?;
    let mut w = csv::Writer::from_path(dir.path("reports", "sweep.csv")).map_err(|e| runtime("sweep.csv", e))?;
    w.write_record(["alpha_rec", "alpha_cd", "best_step", "best_validation", "recall10", "ndcg10"])
        .map_err(|e| runtime("sweep.csv", e))?;
    for p in &points {
        let r10 = p.report.macro_recall(10);
        let n10 = p.report.macro_ndcg(10);
        w.write_record([
            p.alpha_rec.to_string(),
            p.alpha_cd.to_string(),
            p.best_step.to_string(),
            p.best_validation.to_string(),
            r10.to_string(),
            n10.to_string(),
        ])
        .map_err(|e| runtime("sweep.csv", e))?;
        println!("alpha_cd {:<6} Recall@10 {r10:.4} NDCG@10 {n10:.4}", p.alpha_cd);
    }
    w.flush()?;
    Ok(())
}

pub fn bench(cfg: TrainConfig, data_path: &Path, steps: usize, ib_tokens: usize, dir: &RunDir) -> Result<(), Failure> {
    if steps < OVERHEAD_WARMUP + 200 {
        return Err(Failure::config("steps", format!("need at least {} steps", OVERHEAD_WARMUP + 200)));
    }
    let (data, _) = load_data(data_path)?;
    let mut base = TrainConfig { max_steps: steps, method: Method::NaiveCrossDomain, ..cfg };
    base.model.ib_tokens = 0;
    let naive = train_unvalidated(&base, &data)?;
    let auto = train_unvalidated(&TrainConfig { method: Method::Autocdsr, ..base.clone() }, &data)?;
    let mut others = vec![auto.timed_run()];
    if ib_tokens > 0 {
        let mut plus = TrainConfig { method: Method::AutocdsrPlus, ..base.clone() };
        plus.model.ib_tokens = ib_tokens;
        others.push(train_unvalidated(&plus, &data)?.timed_run());
    }
    let report = overhead_report(&naive.timed_run(), &others, OVERHEAD_WARMUP)?;
    dir.write_config(&base)?;
    store_data(&data, dir)?;
    write_file(&dir.path("logs", "steps.csv"), |b| write_step_log(b, &auto.log))?;
    write_file(&dir.path("reports", "overhead.json"), |b| write_json(b, &report))?;
    write_file(&dir.path("reports", "overhead.csv"), |b| report.write_csv(b))?;
    for r in &report.rows {
        println!("{:<20} {:>8.2} it/s  overhead {:+.1}%", r.label, r.iterations_per_second, r.overhead_percent);
    }
    Ok(())
}
