//! The `heval` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Parser, Subcommand, ValueEnum};
use heval_core::analysis::analyze;
use heval_core::dedup::DEFAULT_AUTO_ACCEPT;
use heval_core::model::{IssueId, MasterId, ProposalId};
use heval_core::triage::{CodeTarget, DecisionKind};
use heval_core::{HeuristicId, Severity};

use crate::config::{list_providers, ProviderDescriptor};
use crate::error::{HevalError, Result};
use crate::gateway::{Gateway, ProviderError};
use crate::pipeline::{self, DedupOptions, EvaluateOptions};
use crate::reliability::{self, ReliabilityPlan};
use crate::report::{self, Format, ReportData, ReportSpec, Section};
use crate::server::{self, AppState};
use crate::store::Store;

const CLI_ACTOR: &str = "cli";
const DEFAULT_PORT: u16 = 8765;

#[derive(Debug, Parser)]
#[command(name = "heval", version, about = "Heuristic evaluation with language models")]
struct Cli {
    /// Project directory.
    #[arg(long, short = 'p', global = true, default_value = ".")]
    project: PathBuf,
    /// Print errors as JSON objects on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a project.
    Init {
        #[arg(long)]
        name: String,
        /// Directory to create; defaults to --project.
        dir: Option<PathBuf>,
    },
    /// Add a user task from screenshots.
    Ingest {
        #[arg(long, conflicts_with = "scenario_file", required_unless_present = "scenario_file")]
        scenario: Option<String>,
        #[arg(long)]
        scenario_file: Option<PathBuf>,
        /// One per image, in order.
        #[arg(long = "caption")]
        captions: Vec<String>,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Run one synthetic evaluation.
    Evaluate {
        #[arg(long)]
        provider: String,
        #[arg(long)]
        account: Option<String>,
        /// Comma separated task indices.
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<u32>,
        /// Drop the "at least two issues per heuristic" line.
        #[arg(long)]
        no_floor: bool,
        #[arg(long)]
        system: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Import a human evaluator's issues.
    ImportHuman { file: PathBuf },
    /// Propose duplicate groups and master links.
    Dedup {
        #[arg(long, default_value_t = heval_core::dedup::DEFAULT_GROUP_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_AUTO_ACCEPT)]
        auto_accept: f64,
        /// Ask this provider whether candidate pairs match.
        #[arg(long)]
        judge: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Record triage decisions or start the triage service.
    Triage {
        #[arg(long, global = true, default_value = CLI_ACTOR)]
        actor: String,
        #[arg(long, global = true)]
        expected_version: Option<u64>,
        #[command(subcommand)]
        action: TriageAction,
    },
    /// Print coverage figures.
    Analyze {
        #[arg(long)]
        json: bool,
    },
    /// Write a report under reports/.
    Report {
        #[arg(long, default_value = "md")]
        format: Format,
        /// Comma separated; defaults to all.
        #[arg(long, value_delimiter = ',')]
        sections: Vec<Section>,
        #[arg(long)]
        include_severity0: bool,
        #[arg(long, default_value_t = DEFAULT_AUTO_ACCEPT)]
        auto_accept: f64,
    },
    /// Repeated runs and their consistency.
    Reliability {
        #[command(subcommand)]
        action: ReliabilityAction,
    },
    /// List configured providers.
    Providers {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum TriageAction {
    AutoAccept {
        #[arg(long, default_value_t = DEFAULT_AUTO_ACCEPT)]
        threshold: f64,
    },
    Serve {
        /// Address to listen on; defaults to loopback.
        #[arg(long)]
        bind: Option<IpAddr>,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value_t = DEFAULT_AUTO_ACCEPT)]
        auto_accept: f64,
    },
    Confirm {
        proposal: String,
        #[arg(long)]
        canonical: Option<String>,
    },
    Reject {
        proposal: String,
    },
    Severity {
        master: String,
        rating: i64,
    },
    Heuristic {
        #[arg(value_enum)]
        target: TargetKind,
        id: String,
        heuristic: i64,
    },
    Promote {
        issue: String,
        #[arg(long)]
        severity: i64,
        #[arg(long)]
        heuristic: Option<i64>,
        #[arg(long)]
        across_screen: bool,
        #[arg(long)]
        description: Option<String>,
    },
    Link {
        issue: String,
        master: String,
    },
    AcrossScreen {
        master: String,
        #[arg(action = clap::ArgAction::Set)]
        value: bool,
    },
    /// Apply a JSON array of decisions.
    Apply { file: PathBuf },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TargetKind {
    Issue,
    Master,
}

#[derive(Debug, Subcommand)]
enum ReliabilityAction {
    Run {
        plan: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    Summary {
        #[arg(long, default_value_t = DEFAULT_AUTO_ACCEPT)]
        auto_accept: f64,
    },
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 on a failed command, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let json_errors = cli.json_errors;
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            if json_errors {
                let body = serde_json::json!({"error": e.code(), "message": e.to_string()});
                eprintln!("{body}");
            } else {
                eprintln!("error: {e}");
            }
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let root = cli.project;
    match cli.command {
        Command::Init { name, dir } => {
            let dir = dir.unwrap_or(root);
            let store = Store::init(&dir, &name)?;
            println!("created project {} ({})", name, store.state().app_id);
        }
        Command::Ingest { scenario, scenario_file, captions, images } => {
            let scenario = match (scenario, scenario_file) {
                (Some(s), _) => s,
                (None, Some(f)) => std::fs::read_to_string(&f).map_err(crate::error::io_at(&f))?,
                (None, None) => unreachable!("clap requires one"),
            };
            let mut store = open_writable(&root)?;
            let index = store.ingest_task(&scenario, &images, &captions)?;
            println!("task {index}: {} screens", images.len());
        }
        Command::Evaluate { provider, account, tasks, no_floor, system, config } => {
            let mut store = open_writable(&root)?;
            let gateway = gateway(&store, config.as_deref(), &provider)?;
            let options = EvaluateOptions {
                tasks,
                account,
                at_least_two_floor: !no_floor,
                system_message: system,
            };
            let s = pipeline::evaluate(&mut store, &gateway, &options)?;
            println!(
                "{}: {:?}, {} issues, {} exchanges, {} parser warnings, {} truncated batches",
                s.run_id, s.status, s.issues, s.exchanges, s.warnings, s.truncated_batches
            );
        }
        Command::ImportHuman { file } => {
            let mut store = open_writable(&root)?;
            let run = crate::import::import_human(&mut store, &file)?;
            println!("{}: {} issues from {}", run.run_id, run.issues.len(), run.evaluator.label);
        }
        Command::Dedup { threshold, auto_accept, judge, config } => {
            let mut store = open_writable(&root)?;
            let judge = judge.map(|name| gateway(&store, config.as_deref(), &name)).transpose()?;
            let s = pipeline::dedup(&mut store, DedupOptions { threshold, auto_accept }, judge.as_ref())?;
            println!(
                "{} duplicate proposals, {} master link candidates ({} auto-acceptable)",
                s.proposals_added, s.link_candidates, s.auto_acceptable_links
            );
        }
        Command::Triage { actor, expected_version, action } => triage(&root, &actor, expected_version, action)?,
        Command::Analyze { json } => {
            let store = Store::open_read_only(&root)?;
            print_warnings(&store);
            let snap = analyze(store.state());
            if json {
                println!("{}", serde_json::to_string_pretty(&snap).expect("snapshot serializes"));
            } else {
                print_analysis(&snap);
            }
        }
        Command::Report { format, sections, include_severity0, auto_accept } => {
            let store = Store::open_read_only(&root)?;
            print_warnings(&store);
            let sections = if sections.is_empty() { Section::ALL.to_vec() } else { sections };
            let spec = ReportSpec { sections, format, include_severity0 };
            let data = ReportData::new(store.state(), auto_accept);
            let path = report::write_report(store.root(), &data, &spec, Utc::now())?;
            println!("{}", path.display());
        }
        Command::Reliability { action } => match action {
            ReliabilityAction::Run { plan, config } => {
                let plan = ReliabilityPlan::load(&plan)?;
                let mut store = open_writable(&root)?;
                let mut gateways = BTreeMap::new();
                for name in &plan.providers {
                    gateways.insert(name.clone(), gateway(&store, config.as_deref(), name)?);
                }
                let out = reliability::execute_plan(&mut store, &plan, &gateways, Utc::now())?;
                for s in &out.runs {
                    println!("{}: {:?}, {} issues", s.run_id, s.status, s.issues);
                }
                println!(
                    "{} runs, {} already done, {} not yet due",
                    out.runs.len(),
                    out.already_done,
                    out.not_due
                );
                for e in &out.errors {
                    eprintln!("warning: {e}");
                }
            }
            ReliabilityAction::Summary { auto_accept } => {
                let store = Store::open_read_only(&root)?;
                print_warnings(&store);
                let rows = reliability::summarize_reliability(store.state(), auto_accept);
                println!("{}", serde_json::to_string_pretty(&rows).expect("summary serializes"));
            }
        },
        Command::Providers { config } => {
            let path = config.unwrap_or_else(|| root.join("providers.toml"));
            for p in list_providers(&path)? {
                let auth = p.auth_env_var.as_deref().unwrap_or("-");
                let accounts: Vec<_> = p.accounts.keys().map(String::as_str).collect();
                println!(
                    "{}\t{:?}\t{}\tkey: {}\taccounts: {}",
                    p.name,
                    p.kind,
                    p.model_id,
                    auth,
                    if accounts.is_empty() { "-".into() } else { accounts.join(",") }
                );
            }
        }
    }
    Ok(())
}

fn triage(root: &Path, actor: &str, expected: Option<u64>, action: TriageAction) -> Result<()> {
    let kind = match action {
        TriageAction::AutoAccept { threshold } => {
            let mut store = open_writable(root)?;
            let s = pipeline::auto_accept(&mut store, threshold)?;
            println!(
                "{} groups and {} links confirmed, {} skipped",
                s.groups_confirmed, s.links_confirmed, s.skipped
            );
            return Ok(());
        }
        TriageAction::Serve { bind, port, auto_accept } => {
            let store = open_writable(root)?;
            let ip = bind.unwrap_or(IpAddr::V4(Ipv4Addr::LOCALHOST));
            if !ip.is_loopback() {
                eprintln!("warning: serving on {ip}; the triage service has no authentication");
            }
            let app = AppState::new(store, auto_accept);
            return server::serve(app, SocketAddr::new(ip, port), |addr| {
                println!("listening on http://{addr}");
                let _ = std::io::stdout().flush();
            });
        }
        TriageAction::Apply { file } => {
            let mut store = open_writable(root)?;
            let n = store.apply_file(&file, actor)?;
            println!("{n} decisions applied, master version {}", store.state().master_version);
            return Ok(());
        }
        TriageAction::Confirm { proposal, canonical } => DecisionKind::ConfirmGroup {
            proposal_id: ProposalId::new(proposal),
            canonical: canonical.map(IssueId::new),
        },
        TriageAction::Reject { proposal } => DecisionKind::RejectGroup {
            proposal_id: ProposalId::new(proposal),
        },
        TriageAction::Severity { master, rating } => DecisionKind::CodeSeverity {
            master_id: MasterId::new(master),
            rating: Severity::new(rating)?,
        },
        TriageAction::Heuristic { target, id, heuristic } => DecisionKind::CodeHeuristic {
            target: match target {
                TargetKind::Issue => CodeTarget::Issue(IssueId::new(id)),
                TargetKind::Master => CodeTarget::Master(MasterId::new(id)),
            },
            heuristic_id: HeuristicId::new(heuristic)?,
        },
        TriageAction::Promote { issue, severity, heuristic, across_screen, description } => {
            DecisionKind::PromoteToMaster {
                issue_id: IssueId::new(issue),
                coded_severity: Severity::new(severity)?,
                heuristic_id: heuristic.map(HeuristicId::new).transpose()?,
                across_screen,
                description,
            }
        }
        TriageAction::Link { issue, master } => DecisionKind::ConfirmMasterLink {
            issue_id: IssueId::new(issue),
            master_id: MasterId::new(master),
        },
        TriageAction::AcrossScreen { master, value } => DecisionKind::MarkAcrossScreen {
            master_id: MasterId::new(master),
            across_screen: value,
        },
    };
    let mut store = open_writable(root)?;
    let d = store.apply(actor, kind, expected)?;
    println!(
        "decision {} ({}) recorded, master version {}",
        d.decision_id,
        d.kind.name(),
        store.state().master_version
    );
    Ok(())
}

fn open_writable(root: &Path) -> Result<Store> {
    let store = Store::open(root)?;
    print_warnings(&store);
    Ok(store)
}

fn print_warnings(store: &Store) {
    for w in store.warnings() {
        eprintln!("warning: {w}");
    }
}

fn gateway(store: &Store, config: Option<&Path>, name: &str) -> Result<Gateway> {
    let path = config.map(Path::to_path_buf).unwrap_or_else(|| store.providers_path());
    let desc: ProviderDescriptor = list_providers(&path)?
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| HevalError::Provider(ProviderError::UnknownProvider(name.to_string())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Gateway::for_descriptor(desc, &base))
}

fn print_analysis(snap: &heval_core::analysis::AnalysisSnapshot) {
    println!(
        "{}: master version {}, {} entries ({} severity 0)",
        snap.name, snap.master_version, snap.master_entries, snap.severity_zero_entries
    );
    for r in &snap.runs {
        let cov = r.coverage.as_ref().map_or_else(|| "-".to_string(), |c| c.cell());
        println!(
            "{}\t{}\t{:?}\t{} issues\tcoverage {}\tduplicates {}",
            r.run_id,
            r.evaluator.label,
            r.status,
            r.issue_count,
            cov,
            r.duplicates.duplicate_count
        );
    }
    for u in &snap.unions {
        let cov = u.coverage.as_ref().map_or_else(|| "-".to_string(), |c| c.cell());
        println!("union {:?} ({} runs)\tcoverage {}", u.kind, u.run_ids.len(), cov);
    }
    println!(
        "open: {} proposals, {} link candidates",
        snap.open_triage.proposals, snap.open_triage.link_candidates
    );
}
