//! `necsuf` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 negative prediction,
//! 3 backend failure, 4 input too short, 5 suite schema error, 6 bind failure.

use std::fs;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use necsuf_core::backends::server::{self, ServeError, StubServerState};
use necsuf_core::backends::{Infiller, Predictor, RemoteInfiller, RemotePredictor, Selection, StubClassifier, StubInfiller, StubMode};
use necsuf_core::harness::{
    build_corpus, evaluate, expand, hypothesis_summary, CorpusManifest, CorpusStore, FunctionalSuite, HarnessError,
};
use necsuf_core::report::{
    export_scores, export_suite, render_html, render_hypothesis_table, render_suite_table, render_terminal, Channel,
    HeatmapSpec, LabelNames,
};
use necsuf_core::sampler::SamplerError;
use necsuf_core::{explain, BackendError, ExplainError, NeighborhoodConfig, ScoringMode};

const EXIT_USAGE: u8 = 1;
const EXIT_NEGATIVE: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_TOO_SHORT: u8 = 4;
const EXIT_SCHEMA: u8 = 5;
const EXIT_BIND: u8 = 6;

#[derive(Debug, Parser)]
#[command(name = "necsuf", version, about = "Necessity and sufficiency explanations for text classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Explain the positive prediction for one text.
    Explain {
        text: String,
        #[arg(long, value_enum, default_value_t = ChannelArg::Both)]
        channel: ChannelArg,
        /// Display name of the positive class in HTML evidence.
        #[arg(long, default_value = "hateful")]
        positive_name: String,
        /// Display name of the negative class in HTML evidence.
        #[arg(long, default_value = "non-hateful")]
        negative_name: String,
    },
    /// Build (or reuse) a perturbation corpus for a functional suite and
    /// evaluate every classifier against it.
    Suite {
        /// Suite file; the bundled mini-suite when omitted.
        suite: Option<PathBuf>,
    },
    /// Serve the wire protocol backed by the stub classifier and infiller.
    StubServe {
        #[arg(long, default_value = "127.0.0.1:8780")]
        listen: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ChannelArg {
    Necessity,
    Sufficiency,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Infill,
    #[value(name = "mask_token")]
    MaskToken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ColorArg {
    Auto,
    Always,
    Never,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, global = true, env = "NECSUF_PREDICTOR_URL")]
    predictor_url: Option<String>,
    #[arg(long, global = true, env = "NECSUF_INFILLER_URL")]
    infiller_url: Option<String>,
    /// hate_like, abuse_like or identity_trigger; repeat to compare several.
    #[arg(long, global = true, value_parser = parse_stub_mode)]
    stub_classifier: Vec<StubMode>,
    /// Stub infiller lexicon, one infill per line.
    #[arg(long, global = true)]
    stub_lexicon: Option<PathBuf>,
    /// Perturbations per token.
    #[arg(long, global = true, default_value_t = 100)]
    budget: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Infill)]
    mode: ModeArg,
    #[arg(long, global = true)]
    baseline_subtraction: bool,
    /// Give every masked token its own slot.
    #[arg(long, global = true)]
    no_merge: bool,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = ColorArg::Auto)]
    color: ColorArg,
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn parse_stub_mode(s: &str) -> Result<StubMode, String> {
    s.parse()
}

/// A predictor and the identifier it is reported under.
type NamedPredictor = (String, Box<dyn Predictor>);

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl std::fmt::Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_USAGE, e)
    }
}

impl From<BackendError> for Failure {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Config(_) => Failure::new(EXIT_USAGE, e),
            _ => Failure::new(EXIT_BACKEND, e),
        }
    }
}

impl From<SamplerError> for Failure {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::TooShort { .. } => Failure::new(EXIT_TOO_SHORT, e),
            _ => Failure::new(EXIT_USAGE, e),
        }
    }
}

impl From<ExplainError> for Failure {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::NegativePrediction => Failure::new(EXIT_NEGATIVE, e),
            ExplainError::Backend(b) => b.into(),
            ExplainError::Sampler(s) => s.into(),
            other => Failure::new(EXIT_USAGE, other),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::SuiteSchema(_) | HarnessError::PlaceholderResolution { .. } => Failure::new(EXIT_SCHEMA, e),
            HarnessError::Backend(b) => b.into(),
            HarnessError::Sampler(s) => s.into(),
            HarnessError::Explain(x) => x.into(),
            other => Failure::new(EXIT_USAGE, other),
        }
    }
}

impl RunArgs {
    fn neighborhood(&self) -> NeighborhoodConfig {
        NeighborhoodConfig {
            target_per_token: self.budget,
            seed: self.seed,
            merge_consecutive: !self.no_merge,
            scoring_mode: match self.mode {
                ModeArg::Infill => ScoringMode::Infill,
                ModeArg::MaskToken => ScoringMode::MaskToken,
            },
            baseline_subtraction: self.baseline_subtraction,
            ..Default::default()
        }
    }

    fn color(&self) -> bool {
        match self.color {
            ColorArg::Always => true,
            ColorArg::Never => false,
            ColorArg::Auto => std::env::var_os("NO_COLOR").is_none() && std::io::stdout().is_terminal(),
        }
    }

    fn stub_infiller(&self) -> Result<(StubInfiller, String), Failure> {
        match &self.stub_lexicon {
            None => Ok((StubInfiller::bundled(), "stub:bundled".into())),
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))?;
                let entries: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
                let g = StubInfiller::new(&entries, Selection::Random)?;
                Ok((g, format!("stub:lexicon:{}", entries.join("|"))))
            }
        }
    }

    /// The infiller and a description of it for the corpus manifest.
    fn infiller(&self) -> Result<(Box<dyn Infiller>, String), Failure> {
        if self.mode == ModeArg::MaskToken {
            if self.infiller_url.is_some() || self.stub_lexicon.is_some() {
                warn!("mask_token mode ignores the configured infiller");
            }
            return Ok((Box::new(StubInfiller::bundled()), "mask_token".into()));
        }
        match &self.infiller_url {
            Some(url) => {
                if self.stub_lexicon.is_some() {
                    return Err(Failure::new(EXIT_USAGE, "give either --infiller-url or --stub-lexicon, not both"));
                }
                Ok((Box::new(RemoteInfiller::new(url)?), format!("remote:{url}")))
            }
            None => {
                let (g, desc) = self.stub_infiller()?;
                Ok((Box::new(g), desc))
            }
        }
    }

    /// All configured predictors with their identifiers.
    fn predictors(&self) -> Result<Vec<NamedPredictor>, Failure> {
        let mut out: Vec<NamedPredictor> = Vec::new();
        if let Some(url) = &self.predictor_url {
            out.push((format!("remote:{url}"), Box::new(RemotePredictor::new(url)?)));
        }
        for &mode in &self.stub_classifier {
            if !out.iter().any(|(id, _)| *id == mode.to_string()) {
                out.push((mode.to_string(), Box::new(StubClassifier::bundled(mode))));
            }
        }
        if out.is_empty() {
            return Err(Failure::new(
                EXIT_USAGE,
                "no predictor: give --predictor-url (or NECSUF_PREDICTOR_URL) or --stub-classifier",
            ));
        }
        Ok(out)
    }

    fn single_predictor(&self) -> Result<NamedPredictor, Failure> {
        let mut all = self.predictors()?;
        if all.len() > 1 {
            return Err(Failure::new(EXIT_USAGE, "explain takes exactly one predictor"));
        }
        Ok(all.remove(0))
    }

    fn out_dir(&self) -> Result<Option<&Path>, Failure> {
        if let Some(dir) = &self.out {
            fs::create_dir_all(dir)?;
        }
        Ok(self.out.as_deref())
    }
}

fn log_run(cfg: &NeighborhoodConfig) {
    info!("seed={} config_hash={}", cfg.seed, cfg.hash());
}

fn cmd_explain(
    run: &RunArgs,
    text: &str,
    channel: ChannelArg,
    names: LabelNames,
) -> Result<(), Failure> {
    let cfg = run.neighborhood();
    log_run(&cfg);
    let (_, predictor) = run.single_predictor()?;
    let (infiller, desc) = run.infiller()?;
    info!("infiller={desc}");
    let e = explain::<f64>(text, predictor.as_ref(), infiller.as_ref(), &cfg)?;
    let d = &e.diagnostics;
    info!(
        "{} perturbations, plan seed {}, {} resample calls, {} truncated, {} preservation violations, {} duplicates of the original",
        e.corpus.len(),
        e.plan_seed,
        d.resample_calls,
        d.truncated,
        d.preservation_violations,
        d.original_duplicates
    );
    if d.degenerate_renders > 0 {
        warn!("{} masked renders received near-identical infills", d.degenerate_renders);
    }

    let spec = HeatmapSpec {
        channel: match channel {
            ChannelArg::Necessity => Channel::Necessity,
            ChannelArg::Sufficiency => Channel::Sufficiency,
            ChannelArg::Both => Channel::Both,
        },
        color: run.color(),
        ..HeatmapSpec::new(&e.doc, &e.scores)
    };
    print!("{}", render_terminal(&spec));
    if let Some(baseline) = e.scores.baseline_value {
        println!("baseline {baseline:.4} subtracted from sufficiency");
    }

    if let Some(dir) = run.out_dir()? {
        let json = export_scores(&e.doc, &e.scores).map_err(|err| Failure::new(EXIT_USAGE, err))?;
        fs::write(dir.join("explanation.json"), json)?;
        let html = render_html(&HeatmapSpec { color: false, ..spec }, &e.corpus, &names);
        fs::write(dir.join("explanation.html"), html)?;
        info!("wrote {}", dir.display());
    }
    Ok(())
}

fn cmd_suite(run: &RunArgs, suite_path: Option<&Path>) -> Result<(), Failure> {
    let suite = match suite_path {
        Some(p) => FunctionalSuite::load(p).map_err(|e| match e {
            HarnessError::Io(io) => Failure::new(EXIT_USAGE, format!("{}: {io}", p.display())),
            other => other.into(),
        })?,
        None => FunctionalSuite::bundled(),
    };
    let cases = expand(&suite)?;
    let cfg = run.neighborhood();
    log_run(&cfg);
    let predictors = run.predictors()?;
    let (infiller, desc) = run.infiller()?;

    let out = run.out_dir()?;
    let corpus_path = match (&run.corpus, out) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join("corpus.jsonl"),
        (None, None) => PathBuf::from("corpus.jsonl"),
    };
    let explicit: Vec<_> = cases.iter().filter(|c| c.is_explicit()).cloned().collect();
    let manifest = CorpusManifest::new(&suite.hash(), &desc, &cfg);
    let mut store = CorpusStore::open_or_create(&corpus_path, manifest)?;
    let built = build_corpus(&explicit, infiller.as_ref(), &cfg, &mut store)?;
    if built.new_instances == 0 {
        info!("corpus reused: {} ({} instances)", corpus_path.display(), store.len());
    } else {
        info!(
            "corpus extended: {} new instances for {} cases, {} cases reused, {} total",
            built.new_instances,
            built.new_cases,
            built.reused_cases,
            store.len()
        );
    }

    let mut reports = Vec::new();
    for (id, predictor) in &predictors {
        let report = evaluate(id, &cases, &store, predictor.as_ref(), &cfg)?;
        print!("{}", render_suite_table(&report));
        println!();
        if let Some(dir) = out {
            let name = id.replace(|c: char| !c.is_ascii_alphanumeric() && c != '_', "_");
            fs::write(
                dir.join(format!("report-{name}.json")),
                export_suite(&report).map_err(|e| Failure::new(EXIT_USAGE, e))?,
            )?;
        }
        reports.push(report);
    }
    let summary = hypothesis_summary(&reports);
    print!("{}", render_hypothesis_table(&summary));
    if let Some(dir) = out {
        let json = serde_json::to_string_pretty(&summary).map_err(|e| Failure::new(EXIT_USAGE, e))?;
        fs::write(dir.join("hypotheses.json"), json)?;
    }
    Ok(())
}

fn cmd_stub_serve(run: &RunArgs, listen: &str) -> Result<(), Failure> {
    if run.stub_classifier.len() > 1 {
        return Err(Failure::new(EXIT_USAGE, "stub-serve takes at most one --stub-classifier"));
    }
    let mode = run.stub_classifier.first().copied().unwrap_or(StubMode::HateLike);
    let (infiller, desc) = run.stub_infiller()?;
    let state = Arc::new(StubServerState::new(StubClassifier::bundled(mode), infiller));
    let result = server::run_until_signal(listen, state.clone(), |addr| {
        info!("stub server ({mode}, {desc}) listening on http://{addr}");
    });
    let (p, i, f) = state.counts();
    info!("served {p} predict and {i} infill requests, {f} failed");
    match result {
        Ok(()) => Ok(()),
        Err(e @ ServeError::Bind { .. }) => Err(Failure::new(EXIT_BIND, e)),
        Err(e) => Err(Failure::new(EXIT_USAGE, e)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.run.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match &cli.command {
        Command::Explain {
            text,
            channel,
            positive_name,
            negative_name,
        } => cmd_explain(
            &cli.run,
            text,
            *channel,
            LabelNames {
                positive: positive_name.clone(),
                negative: negative_name.clone(),
            },
        ),
        Command::Suite { suite } => cmd_suite(&cli.run, suite.as_deref()),
        Command::StubServe { listen } => cmd_stub_serve(&cli.run, listen),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
