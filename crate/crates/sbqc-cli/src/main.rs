use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use sbqc::blindness::blindness_test;
use sbqc::format;
use sbqc::masking::{cost_report, CostReport, MaskingPlan};
use sbqc::merge::verify_merger;
use sbqc::nogo;
use sbqc::pattern::{measurement_order, verify_gflow, MeasurementPattern, Octant};
use sbqc::protocol::{reference_run, sbqc_run, ubqc_run, Message, ProtocolInstance, Transcript};
use sbqc::sim::{run_pattern, OutcomeSource, Preparation, StateVector};

#[derive(Parser)]
#[command(name = "sbqc", version, about = "Selectively blind quantum computing toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the g-flow conditions of a pattern file
    Verify {
        #[arg(long)]
        pattern: PathBuf,
    },
    /// Check that a merger embeds both patterns and respects both orders
    MergeVerify {
        #[command(flatten)]
        source: InstanceSource,
    },
    /// Synthesize a masking plan and print the per-node table
    Plan {
        #[command(flatten)]
        source: InstanceSource,
    },
    /// Print the qubit cost report for an instance
    Cost {
        #[command(flatten)]
        source: InstanceSource,
    },
    /// Execute the selectively blind protocol and check the result
    Run {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 0)]
        choice: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Execute the fully blind single-pattern protocol
    UbqcRun {
        #[arg(long)]
        pattern: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare transcript distributions across the two choices
    Blindness {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// No-go demonstrations
    #[command(subcommand)]
    Nogo(NogoCmd),
    /// Run a pattern (or instance) and print the final state amplitudes
    DumpState {
        #[arg(long, conflicts_with = "instance")]
        pattern: Option<PathBuf>,
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        choice: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(clap::Args)]
#[group(required = false, multiple = true)]
struct InstanceSource {
    /// instance file bundling both patterns and the merger
    #[arg(long, conflicts_with_all = ["u0", "u1", "merger"])]
    instance: Option<PathBuf>,
    #[arg(long, requires_all = ["u1", "merger"])]
    u0: Option<PathBuf>,
    #[arg(long)]
    u1: Option<PathBuf>,
    #[arg(long)]
    merger: Option<PathBuf>,
}

#[derive(Subcommand)]
enum NogoCmd {
    /// Separability scan of the candidate expansion isometry
    Scan {
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        /// write the full deviation grid as CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Differential attack on correlated angle keys
    Attack {
        #[arg(long, value_enum, default_value_t = KeyRuleArg::Identity)]
        f: KeyRuleArg,
        /// octant of the constant key, for --f constant
        #[arg(long, default_value_t = 0)]
        constant: i64,
        /// also run a Monte-Carlo estimate with this many samples
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Key-guessing probability and the key length needed to beat n^-c
    Bound {
        #[arg(long, default_value_t = 8)]
        theta: u32,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 2)]
        c: u32,
        /// also print the guessing probability for this key length
        #[arg(long)]
        m: Option<u32>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KeyRuleArg {
    Identity,
    Constant,
    Independent,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_pattern(path: &Path) -> Result<MeasurementPattern> {
    format::parse_pattern(&read(path)?).with_context(|| path.display().to_string())
}

fn load_instance(src: &InstanceSource) -> Result<ProtocolInstance> {
    if let Some(path) = &src.instance {
        return format::parse_instance(&read(path)?).with_context(|| path.display().to_string());
    }
    match (&src.u0, &src.u1, &src.merger) {
        (Some(p0), Some(p1), Some(pm)) => {
            let u0 = load_pattern(p0)?;
            let u1 = load_pattern(p1)?;
            let merger =
                format::parse_merger(&read(pm)?).with_context(|| pm.display().to_string())?;
            Ok(ProtocolInstance {
                u0,
                u1,
                merger,
                input_spec: Default::default(),
                inputs: Default::default(),
            })
        }
        _ => bail!("pass --instance FILE or all of --u0, --u1, --merger"),
    }
}

fn enum_name<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).unwrap().as_str().unwrap().to_owned()
}

fn print_transcript(t: &Transcript) {
    for m in t {
        match m {
            Message::Prepared { node } => println!("prepared {node}"),
            Message::MeasureAt { node, delta } => {
                println!("measure {node} delta {}pi/4", delta.k())
            }
            Message::Outcome { node, bit } => println!("outcome {node} {bit}"),
            Message::OutputsReturned { nodes } => {
                let names: Vec<String> = nodes.iter().map(|n| n.to_string()).collect();
                println!("outputs {}", names.join(" "));
            }
        }
    }
}

fn print_plan_table(inst: &ProtocolInstance, plan: &MaskingPlan) {
    println!("{:<6} {:<20} {:<14} cone", "node", "class", "rule");
    for &v in inst.merger.graph.nodes() {
        let cone = if plan.cone_generators.contains(&v) { "*" } else { "-" };
        println!(
            "{:<6} {:<20} {:<14} {}",
            v,
            enum_name(&plan.class(v)),
            enum_name(&plan.rule(v)),
            cone
        );
    }
}

fn print_cost(cost: &CostReport) {
    println!("qubits_sent: {}", cost.qubits_sent);
    for (class, n) in &cost.by_class {
        println!("  {}: {}", enum_name(class), n);
    }
    println!("outputs_returned: {}", cost.outputs_returned);
    println!("baseline_ubqc_cost: {}", cost.baseline_ubqc_cost);
}

fn print_state(state: &StateVector) {
    let names: Vec<String> = state.labels().iter().map(|l| l.to_string()).collect();
    println!("qubits: {}", names.join(" "));
    for (i, a) in state.amplitudes().iter().enumerate() {
        println!("|{:0width$b}>  {:+.9}  {:+.9}", i, a.re, a.im, width = state.num_qubits());
    }
}

fn plus_inputs(pattern: &MeasurementPattern) -> Result<StateVector> {
    let mut state = StateVector::empty();
    for &i in &pattern.graph.inputs {
        state.prepare(i, Preparation::PlusTheta(Octant::new(0)))?;
    }
    Ok(state)
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Verify { pattern } => {
            let p = load_pattern(&pattern)?;
            let report = verify_gflow(&p);
            if report.ok() {
                println!("gflow: ok");
                Ok(0)
            } else {
                for v in &report.violations {
                    println!("gflow violation: {v}");
                }
                Ok(1)
            }
        }
        Cmd::MergeVerify { source } => {
            let inst = load_instance(&source)?;
            let report = verify_merger(&inst.merger, &inst.u0, &inst.u1);
            if report.ok() {
                println!("merger: ok");
                Ok(0)
            } else {
                for v in &report.violations {
                    println!("merger violation: {v:?}");
                }
                Ok(1)
            }
        }
        Cmd::Plan { source } => {
            let inst = load_instance(&source)?;
            let plan = inst.plan()?;
            print_plan_table(&inst, &plan);
            print_cost(&cost_report(&plan, &inst.merger));
            Ok(0)
        }
        Cmd::Cost { source } => {
            let inst = load_instance(&source)?;
            let plan = inst.plan()?;
            print_cost(&cost_report(&plan, &inst.merger));
            Ok(0)
        }
        Cmd::Run { instance, choice, seed } => {
            if choice > 1 {
                bail!("--choice must be 0 or 1");
            }
            let inst = format::parse_instance(&read(&instance)?)?;
            let run = sbqc_run(&inst, choice, seed)?;
            print_transcript(&run.transcript);
            let reference = reference_run(&inst, choice, &run.true_outcomes)?;
            let fidelity = run.output.fidelity(&reference)?;
            println!("fidelity: {fidelity:.9}");
            Ok(if fidelity >= 1.0 - 1e-9 { 0 } else { 1 })
        }
        Cmd::UbqcRun { pattern, seed } => {
            let p = load_pattern(&pattern)?;
            let run = ubqc_run(&p, &plus_inputs(&p)?, seed)?;
            print_transcript(&run.transcript);
            let forced: Vec<u8> = measurement_order(&p)?
                .iter()
                .map(|v| run.true_outcomes[v])
                .collect();
            let (reference, _) =
                run_pattern(&p, &plus_inputs(&p)?, &mut OutcomeSource::forced(forced))?;
            let fidelity = run.output.fidelity(&reference)?;
            println!("fidelity: {fidelity:.9}");
            Ok(if fidelity >= 1.0 - 1e-9 { 0 } else { 1 })
        }
        Cmd::Blindness { instance, trials, seed } => {
            let inst = format::parse_instance(&read(&instance)?)?;
            let plan = inst.plan()?;
            let v = blindness_test(&inst, &plan, trials, seed)?;
            println!("comparison: {}", if v.joint { "joint" } else { "pairwise" });
            println!("tv: {:.6}", v.tv);
            println!("threshold: {:.6}", v.threshold);
            let min_p = v.per_node.iter().map(|u| u.p_value).fold(1.0, f64::min);
            println!("uniformity_min_p: {min_p:.6}");
            println!("blindness: {}", if v.pass { "ok" } else { "FAIL" });
            Ok(if v.pass { 0 } else { 1 })
        }
        Cmd::Nogo(NogoCmd::Scan { resolution, out }) => {
            let report = nogo::separability_scan(resolution);
            println!("resolution: {}", report.resolution);
            println!("max_on_zero_set: {:.3e}", report.max_on_zero_set);
            println!("min_off_zero_set: {:.3e}", report.min_off_zero_set);
            println!("rank: {}", report.rank);
            println!("isometry_defect: {:.3e}", report.max_isometry_defect);
            println!(
                "zero_set: {}",
                if report.zero_set_matches { "matches analytic condition" } else { "MISMATCH" }
            );
            if let Some(path) = out {
                let mut csv = String::from("theta,delta,deviation\n");
                let r = report.resolution as f64;
                for (ti, row) in report.deviation.iter().enumerate() {
                    for (di, dev) in row.iter().enumerate() {
                        let theta = 2.0 * std::f64::consts::PI * ti as f64 / r;
                        let delta = 2.0 * std::f64::consts::PI * di as f64 / r;
                        csv.push_str(&format!("{theta:.9},{delta:.9},{dev:.12e}\n"));
                    }
                }
                fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(if report.zero_set_matches && report.rank <= 3 { 0 } else { 1 })
        }
        Cmd::Nogo(NogoCmd::Attack { f, constant, samples, seed }) => {
            let rule = match f {
                KeyRuleArg::Identity => nogo::KeyRule::Identity,
                KeyRuleArg::Constant => nogo::KeyRule::Constant(Octant::new(constant)),
                KeyRuleArg::Independent => nogo::KeyRule::Independent,
            };
            let report = nogo::correlated_key_attack(rule);
            println!("rule: {}", report.rule.describe());
            println!("enumerated: {}", report.enumerated);
            println!("accuracy: {:.6}", report.accuracy);
            println!("mi_bits: {:.6}", report.mi_bits);
            for (diff, secrets) in &report.relation {
                let names: Vec<String> = secrets.iter().map(|s| s.to_string()).collect();
                println!("delta_diff {diff}pi/4 -> phi_diff mod pi in {{{}}}", names.join(", "));
            }
            if let Some(n) = samples {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                let est = nogo::sampled_attack(rule, n, &mut rng);
                println!("sampled_accuracy: {:.6}", est.accuracy);
                println!("sampled_mi_bits: {:.6}", est.mi_bits);
            }
            Ok(0)
        }
        Cmd::Nogo(NogoCmd::Bound { theta, n, c, m }) => {
            let needed = nogo::min_m(theta, n, c);
            println!("min_m: {needed}");
            let (num, den) = nogo::guess_probability(theta, needed);
            println!("guess_probability at min_m: {num}/{den}");
            if let Some(m) = m {
                let (num, den) = nogo::guess_probability(theta, m);
                println!("guess_probability at m={m}: {num}/{den}");
            }
            Ok(0)
        }
        Cmd::DumpState { pattern, instance, choice, seed } => match (pattern, instance) {
            (Some(path), None) => {
                let p = load_pattern(&path)?;
                let (state, outcomes) = run_pattern(
                    &p,
                    &plus_inputs(&p)?,
                    &mut OutcomeSource::seeded(seed),
                )?;
                let bits: Vec<String> =
                    outcomes.iter().map(|(v, s)| format!("{v}:{s}")).collect();
                println!("outcomes: {}", bits.join(" "));
                print_state(&state);
                Ok(0)
            }
            (None, Some(path)) => {
                if choice > 1 {
                    bail!("--choice must be 0 or 1");
                }
                let inst = format::parse_instance(&read(&path)?)?;
                let run = sbqc_run(&inst, choice, seed)?;
                let bits: Vec<String> =
                    run.true_outcomes.iter().map(|(v, s)| format!("{v}:{s}")).collect();
                println!("outcomes: {}", bits.join(" "));
                print_state(&run.output);
                Ok(0)
            }
            _ => bail!("pass exactly one of --pattern or --instance"),
        },
    }
}
