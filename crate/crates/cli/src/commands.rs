use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use tooldesk_core::catalog::{load_corpus, load_lexicon, write_corpus, Corpus, RenderingId, Split, Tier};
use tooldesk_core::cotrain::{initial_models, read_manifest, run_pipeline, RunFile};
use tooldesk_core::encoder::EncoderParams;
use tooldesk_core::eval::{
    emit_ksweep, emit_report, evaluate, paired_bootstrap, read_scores, write_scores, Metric, MetricReport,
    PerQueryScore, ReportFormat,
};
use tooldesk_core::index::build_index;
use tooldesk_core::rewriter::{GeneratorPolicy, PromptTemplate, RemoteConfig, RemoteRewriter, Rewriter};
use tooldesk_core::rng::rng_from;

use crate::{AblationFlag, Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] tooldesk_core::Error),
    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: tooldesk_core::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn input<T>(path: &Path, r: tooldesk_core::Result<T>) -> Result<T> {
    r.map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let run = cli.config.as_deref().map(RunFile::load).transpose()?;
    match &cli.command {
        Command::Ingest { corpus } => ingest(cli, run.as_ref(), corpus.as_deref()),
        Command::Run { rounds, ablation } => run_cmd(cli, run, *rounds, ablation),
        Command::Eval {
            encoder,
            policy,
            remote_endpoint,
            remote_model,
            corpus,
            ks,
            k_sweep,
        } => {
            let rewriter = match (policy, remote_endpoint) {
                (Some(p), _) => RewriterChoice::Policy(p.clone()),
                (None, Some(url)) => RewriterChoice::Remote {
                    endpoint: url.clone(),
                    model: remote_model.clone(),
                },
                (None, None) => RewriterChoice::None,
            };
            eval_cmd(cli, run.as_ref(), encoder, rewriter, corpus.as_deref(), ks, *k_sweep)
        }
        Command::Ci {
            a,
            b,
            resamples,
            metric,
            k,
            split,
        } => ci_cmd(cli, a, b, *resamples, metric, *k, split.as_deref()),
        Command::Report { runs } => report_cmd(cli, runs),
    }
}

fn out_dir(cli: &Cli, default: impl Into<PathBuf>) -> Result<PathBuf> {
    let dir = cli.out_dir.clone().unwrap_or_else(|| default.into());
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    Ok(dir)
}

fn corpus_path(flag: Option<&Path>, run: Option<&RunFile>) -> Result<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| run.map(|r| r.data.corpus.clone()))
        .ok_or_else(|| usage("no corpus given: pass --corpus or a --config run file"))
}

fn ingest(cli: &Cli, run: Option<&RunFile>, corpus: Option<&Path>) -> Result<()> {
    let path = corpus_path(corpus, run)?;
    let corpus = input(&path, load_corpus(&path))?;
    let dir = out_dir(cli, "store")?;
    write_corpus(&corpus, dir.join("corpus.jsonl"))?;
    let mut summary = serde_json::to_string_pretty(&corpus.summary()).expect("summary serializes");
    summary.push('\n');
    let sp = dir.join("summary.json");
    fs::write(&sp, &summary).map_err(io(&sp))?;
    print!("{summary}");
    Ok(())
}

fn run_cmd(cli: &Cli, run: Option<RunFile>, rounds: Option<usize>, ablation: &[AblationFlag]) -> Result<()> {
    let mut run = run.ok_or_else(|| usage("`run` needs --config <run file>"))?;
    let cfg = &mut run.pipeline;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(r) = rounds {
        cfg.rounds = r;
    }
    for flag in ablation {
        match flag {
            AblationFlag::SkipS1b => cfg.ablation.skip_s1b = true,
            AblationFlag::FreezeEncoder => cfg.ablation.freeze_encoder = true,
            AblationFlag::FreezeRewriter => cfg.ablation.freeze_rewriter = true,
        }
    }
    cfg.validate()?;
    let corpus = input(&run.data.corpus, load_corpus(&run.data.corpus))?;
    let lexicon = input(&run.data.lexicon, load_lexicon(&run.data.lexicon))?;
    let dir = out_dir(cli, format!("runs/{}-seed{}", cfg.ablation.label(), cfg.seed))?;

    let resolved = toml::to_string(&run).map_err(|e| usage(format!("cannot serialize run file: {e}")))?;
    let run_toml = dir.join("run.toml");
    match fs::read_to_string(&run_toml) {
        Ok(existing) if existing != resolved => {
            return Err(usage(format!(
                "{} already holds a different run; choose another --out-dir",
                dir.display()
            )))
        }
        Ok(_) => log::info!("resuming run in {}", dir.display()),
        Err(_) => fs::write(&run_toml, &resolved).map_err(io(&run_toml))?,
    }

    let (theta0, psi0) = initial_models(&corpus, &lexicon, &run.pipeline)?;
    let outcome = run_pipeline(theta0, psi0, &corpus, &run.pipeline, Some(&dir))?;
    println!("{:<8} {:>10} {:>10}", "stage", "standard", "vague");
    for p in &outcome.trajectory {
        println!(
            "{:<8} {:>10} {:>10}",
            p.stage,
            fmt_mean(p.report.tier_average(Metric::Ndcg, Split::EvalStandard, 5)),
            fmt_mean(p.report.tier_average(Metric::Ndcg, Split::EvalVague, 5)),
        );
    }
    println!("run directory: {}", dir.display());
    Ok(())
}

fn fmt_mean(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

enum RewriterChoice {
    None,
    Policy(PathBuf),
    Remote { endpoint: String, model: String },
}

fn write_eval(dir: &Path, name: &str, report: &MetricReport, scores: &[PerQueryScore], k_sweep: bool) -> Result<()> {
    emit_report(report, ReportFormat::Csv, dir.join(format!("{name}.csv")))?;
    emit_report(report, ReportFormat::Json, dir.join(format!("{name}.json")))?;
    write_scores(scores, dir.join(format!("{name}.scores.jsonl")))?;
    if k_sweep {
        emit_ksweep(report, dir.join(format!("{name}.ksweep.csv")))?;
    }
    println!(
        "{name:<14} NDCG@5 standard {} vague {}",
        fmt_mean(report.tier_average(Metric::Ndcg, Split::EvalStandard, 5)),
        fmt_mean(report.tier_average(Metric::Ndcg, Split::EvalVague, 5)),
    );
    Ok(())
}

fn eval_queries(corpus: &Corpus) -> Vec<tooldesk_core::catalog::QueryExample> {
    corpus.queries.iter().filter(|q| q.split != Split::Train).cloned().collect()
}

fn eval_cmd(
    cli: &Cli,
    run: Option<&RunFile>,
    encoder: &Path,
    rewriter: RewriterChoice,
    corpus: Option<&Path>,
    ks: &[usize],
    k_sweep: bool,
) -> Result<()> {
    let path = corpus_path(corpus, run)?;
    let corpus = input(&path, load_corpus(&path))?;
    let params = input(encoder, EncoderParams::load(encoder))?;
    let rewriter: Option<Box<dyn Rewriter>> = match rewriter {
        RewriterChoice::None => None,
        RewriterChoice::Policy(p) => Some(Box::new(input(&p, GeneratorPolicy::load(&p))?)),
        RewriterChoice::Remote { endpoint, model } => {
            let cfg = RemoteConfig {
                endpoint,
                model,
                ..RemoteConfig::default()
            };
            Some(Box::new(RemoteRewriter::new(cfg, PromptTemplate::hyde())))
        }
    };
    let index = build_index(&params, &corpus.tools, RenderingId::INDEX)?;
    let queries = eval_queries(&corpus);
    let dir = out_dir(cli, "eval")?;
    let seed = cli.seed.unwrap_or(0);

    let (report, scores) = evaluate(&params, None, &index, &queries, ks, &mut rng_from(seed))?;
    write_eval(&dir, "encoder_only", &report, &scores, k_sweep)?;
    if let Some(rw) = rewriter.as_deref() {
        let (report, scores) = evaluate(&params, Some(rw), &index, &queries, ks, &mut rng_from(seed))?;
        write_eval(&dir, "with_rewriter", &report, &scores, k_sweep)?;
    }
    Ok(())
}

fn select_scores(
    path: &Path,
    metric: Metric,
    k: usize,
    split: Option<Split>,
) -> Result<Vec<(String, f64)>> {
    input(path, read_scores(path))?
        .into_iter()
        .filter(|s| split.is_none_or(|sp| s.split == sp))
        .map(|s| {
            s.value(metric, k)
                .map(|v| (s.query_id.clone(), v))
                .ok_or_else(|| usage(format!("{}: query `{}` has no {metric}@{k}", path.display(), s.query_id)))
        })
        .collect()
}

fn ci_cmd(
    cli: &Cli,
    a: &Path,
    b: &Path,
    resamples: usize,
    metric: &str,
    k: usize,
    split: Option<&str>,
) -> Result<()> {
    let metric: Metric = metric.parse()?;
    let split: Option<Split> = split.map(str::parse).transpose()?;
    let x = select_scores(a, metric, k, split)?;
    let y = select_scores(b, metric, k, split)?;
    let seed = cli.seed.unwrap_or(0);
    let result = paired_bootstrap(&x, &y, resamples, seed)?;
    let dir = out_dir(cli, "ci")?;
    let mut text = serde_json::to_string_pretty(&result).expect("result serializes");
    text.push('\n');
    let path = dir.join("ci.json");
    fs::write(&path, &text).map_err(io(&path))?;
    print!("{text}");
    Ok(())
}

/// `stage -> split -> tier -> value` from a trajectory CSV, stages in file order.
type Trajectory = Vec<(String, BTreeMap<(String, String), String>)>;

fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    let mut out: Trajectory = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(usage(format!("{}: line {}: expected 4 fields", path.display(), i + 1)));
        }
        if out.last().is_none_or(|(s, _)| s != f[0]) {
            out.push((f[0].to_string(), BTreeMap::new()));
        }
        let cells = &mut out.last_mut().expect("just pushed").1;
        cells.insert((f[1].to_string(), f[2].to_string()), f[3].to_string());
    }
    Ok(out)
}

fn report_cmd(cli: &Cli, runs: &[PathBuf]) -> Result<()> {
    let splits = [Split::EvalStandard, Split::EvalVague];
    let tiers: Vec<String> = Tier::ALL.iter().map(|t| t.to_string()).chain(["avg".to_string()]).collect();
    let mut header = vec!["run".to_string(), "ablation".into(), "seed".into(), "stage".into()];
    for s in splits {
        header.extend(tiers.iter().map(|t| format!("{s}_{t}")));
    }
    let mut rows = vec![header.join(",")];
    for dir in runs {
        let m = input(dir, read_manifest(dir))?;
        let rel = m
            .trajectory
            .as_ref()
            .ok_or_else(|| usage(format!("{}: run has no trajectory yet (last good stage: {:?})", dir.display(), m.last_good_stage)))?;
        let traj = read_trajectory(&dir.join(rel))?;
        println!("{} [{}; seed {}; {} rounds]", dir.display(), m.ablation_label, m.seed, m.rounds);
        println!("  {:<8} {:>10} {:>10}", "stage", "standard", "vague");
        for (stage, cells) in &traj {
            let get = |s: Split| cells.get(&(s.to_string(), "avg".to_string())).cloned().unwrap_or_default();
            let short = |v: String| v.parse::<f64>().map(|x| format!("{x:.4}")).unwrap_or_else(|_| "-".into());
            println!("  {stage:<8} {:>10} {:>10}", short(get(Split::EvalStandard)), short(get(Split::EvalVague)));
        }
        if let Some((stage, cells)) = traj.last() {
            let mut row = vec![dir.display().to_string(), m.ablation_label.clone(), m.seed.to_string(), stage.clone()];
            for s in splits {
                row.extend(
                    tiers
                        .iter()
                        .map(|t| cells.get(&(s.to_string(), t.clone())).cloned().unwrap_or_default()),
                );
            }
            rows.push(row.join(","));
        }
    }
    let out = out_dir(cli, "report")?;
    let path = out.join("summary.csv");
    rows.push(String::new());
    fs::write(&path, rows.join("\n")).map_err(io(&path))?;
    println!("wrote {}", path.display());
    Ok(())
}
