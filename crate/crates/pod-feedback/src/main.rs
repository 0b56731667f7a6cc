//! `podfb`: inspect feedback for a pod auction instance, simulate bidding
//! dynamics, run batch experiments, generate synthetic instances, and verify
//! the structural properties of the implementation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pod_feedback::assignment::{verify_lattice_and_extremes, AssignmentInstance};
use pod_feedback::coalitional::{vcg_feedback, CoalitionalOracle};
use pod_feedback::dynamics::{
    run, DynamicsConfig, EpsilonRule, InitialTargets, Policy,
};
use pod_feedback::feedback::{
    bicore_feedback, bicore_membership, bicore_membership_oracle, core_feedback, CoreSide,
};
use pod_feedback::generator::{generate_instance, GeneratorParams};
use pod_feedback::model::{AuctionInstance, Money};
use pod_feedback::report::{report_to_csv, run_batch, trace_to_csv};
use pod_feedback::solver::{classify_agents, solve_constrained, SolveConstraints};

#[derive(Parser)]
#[command(name = "podfb", about = "Minimum-bid-to-win feedback for video pod auctions", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Vcg,
    Core,
    Bicore,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Policy {
        match p {
            PolicyArg::Vcg => Policy::Vcg,
            PolicyArg::Core => Policy::Core,
            PolicyArg::Bicore => Policy::Bicore,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Values,
    Random,
}

#[derive(Args)]
struct SimFlags {
    #[arg(long, value_enum, default_value = "core")]
    policy: PolicyArg,
    #[arg(long, value_enum, default_value = "values")]
    init: InitArg,
    /// seed for random initial profit targets
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// fixed bid increment in micro-units (default: a tenth of each value)
    #[arg(long)]
    epsilon: Option<i64>,
    #[arg(long, default_value_t = 20)]
    max_rounds: usize,
}

impl SimFlags {
    fn config(&self) -> DynamicsConfig {
        DynamicsConfig {
            max_rounds: self.max_rounds,
            epsilon: match self.epsilon {
                Some(e) => EpsilonRule::Fixed(Money(e)),
                None => EpsilonRule::ValueFraction,
            },
            ..DynamicsConfig::default()
        }
    }

    fn init(&self) -> InitialTargets {
        match self.init {
            InitArg::Values => InitialTargets::FromValues,
            InitArg::Random => InitialTargets::RandomTargets(self.seed),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute feedback for one instance under a policy
    Feedback {
        /// instance JSON file
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "vcg")]
        policy: PolicyArg,
        /// write machine-readable JSON here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the bidding dynamics on one instance
    Simulate {
        instance: PathBuf,
        #[command(flatten)]
        sim: SimFlags,
        /// output prefix: writes <out>.json and <out>.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a batch experiment over generated instances
    Batch {
        /// generator params JSON (defaults used when omitted)
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        instances: u64,
        /// comma-separated subset of vcg,core,bicore
        #[arg(long, value_delimiter = ',', default_values_t = ["vcg".to_string(), "core".to_string(), "bicore".to_string()])]
        policies: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// worker threads (default: all cores)
        #[arg(long)]
        jobs: Option<usize>,
        /// output prefix: writes <out>.json and <out>.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit synthetic instances as JSON
    Generate {
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// directory to write instance files into (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the structural verification suites
    Verify {
        #[arg(long, default_value_t = 50)]
        instances: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

struct CmdError {
    code: u8,
    message: String,
}

fn input_err(message: impl ToString) -> CmdError {
    CmdError {
        code: 2,
        message: message.to_string(),
    }
}

fn check_err(message: impl ToString) -> CmdError {
    CmdError {
        code: 3,
        message: message.to_string(),
    }
}

fn load_instance(path: &PathBuf) -> Result<AuctionInstance, CmdError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    AuctionInstance::parse(&text).map_err(input_err)
}

fn load_params(path: &Option<PathBuf>, seed: u64) -> Result<GeneratorParams, CmdError> {
    let mut params = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| input_err(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(input_err)?
        }
        None => GeneratorParams::default(),
    };
    params.seed = seed;
    Ok(params)
}

fn money_str(r: &num::BigRational) -> String {
    // micro-units to currency units with 6 decimals
    let f = r.to_f64().unwrap_or(f64::NAN) / 1e6;
    format!("{f:.6}")
}

fn write_out(path: &PathBuf, contents: &str) -> Result<(), CmdError> {
    std::fs::write(path, contents).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn dispatch(cmd: Command) -> Result<(), CmdError> {
    match cmd {
        Command::Feedback {
            instance,
            policy,
            out,
        } => {
            let inst = load_instance(&instance)?;
            let bids = inst.bid_profile();
            let statuses = classify_agents(&inst, &bids);
            let fv = match Policy::from(policy) {
                Policy::Vcg => vcg_feedback(&inst, &bids),
                Policy::Core => {
                    let w = core_feedback(&inst, &bids, CoreSide::Winners);
                    let l = core_feedback(&inst, &bids, CoreSide::Losers);
                    pod_feedback::coalitional::FeedbackVector {
                        discounts: w.discounts,
                        raises: l.raises,
                        seller_payoff: w.seller_payoff,
                    }
                }
                Policy::Bicore => bicore_feedback(&inst, &bids),
            };
            let optimal = solve_constrained(&inst, &bids, &SolveConstraints::none())
                .value()
                .ok_or_else(|| check_err("unconstrained solve failed"))?;
            println!("optimal value: {optimal}");
            for (i, agent) in inst.agents.iter().enumerate() {
                println!(
                    "{:<12} {:<13} discount {:>14}  raise {:>14}",
                    agent.id,
                    format!("{:?}", statuses[i]),
                    money_str(&fv.discounts[i]),
                    money_str(&fv.raises[i]),
                );
            }
            println!("seller payoff: {}", money_str(&fv.seller_payoff));
            if let Some(path) = out {
                let doc = serde_json::json!({
                    "optimal_value_micro": optimal.micro(),
                    "statuses": statuses.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>(),
                    "discounts": fv.discounts.iter().map(money_str).collect::<Vec<_>>(),
                    "raises": fv.raises.iter().map(money_str).collect::<Vec<_>>(),
                    "seller_payoff": money_str(&fv.seller_payoff),
                });
                write_out(&path, &serde_json::to_string_pretty(&doc).expect("serializable"))?;
            }
            Ok(())
        }
        Command::Simulate { instance, sim, out } => {
            let inst = load_instance(&instance)?;
            let trace = run(&inst, sim.policy.into(), &sim.config(), sim.init());
            println!(
                "outcome: {:?} after {} rounds, efficiency {:.2}%",
                trace.outcome,
                trace.rounds.len(),
                trace.efficiency_percent
            );
            if let Some(prefix) = out {
                let json = serde_json::to_string_pretty(&trace).expect("serializable");
                write_out(&prefix.with_extension("json"), &json)?;
                write_out(&prefix.with_extension("csv"), &trace_to_csv(&trace))?;
            }
            Ok(())
        }
        Command::Batch {
            params,
            instances,
            policies,
            seed,
            jobs,
            out,
        } => {
            let params = load_params(&params, seed)?;
            let policies: Vec<Policy> = policies
                .iter()
                .map(|p| match p.as_str() {
                    "vcg" => Ok(Policy::Vcg),
                    "core" => Ok(Policy::Core),
                    "bicore" => Ok(Policy::Bicore),
                    other => Err(input_err(format!("unknown policy: {other}"))),
                })
                .collect::<Result<_, _>>()?;
            let config = DynamicsConfig::default();
            let report = if let Some(n) = jobs {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(input_err)?;
                pool.install(|| run_batch(&params, instances, &policies, &config))
            } else {
                run_batch(&params, instances, &policies, &config)
            }
            .map_err(check_err)?;
            let csv = report_to_csv(&report);
            print!("{csv}");
            if let Some(prefix) = out {
                write_out(
                    &prefix.with_extension("json"),
                    &serde_json::to_string_pretty(&report).expect("serializable"),
                )?;
                write_out(&prefix.with_extension("csv"), &csv)?;
            }
            Ok(())
        }
        Command::Generate {
            params,
            count,
            seed,
            out,
        } => {
            let params = load_params(&params, seed)?;
            for k in 0..count {
                let inst = generate_instance(&params, k).map_err(check_err)?;
                let json = inst.to_json();
                match &out {
                    Some(dir) => {
                        std::fs::create_dir_all(dir)
                            .map_err(|e| input_err(format!("{}: {e}", dir.display())))?;
                        write_out(&dir.join(format!("instance_{k:05}.json")), &json)?;
                    }
                    None => println!("{json}"),
                }
            }
            Ok(())
        }
        Command::Verify { instances, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // assignment lattice suite
            for k in 0..instances {
                let n = rng.gen_range(2..=4);
                let m = rng.gen_range(1..=n);
                let bids = (0..n)
                    .map(|_| {
                        (0..m)
                            .map(|_| Money(rng.gen_range(1..=10_000_000)))
                            .collect()
                    })
                    .collect();
                let inst = AssignmentInstance::new(bids).map_err(check_err)?;
                let report = verify_lattice_and_extremes(&inst, 4, &mut rng);
                if !report.ok() {
                    return Err(check_err(format!(
                        "assignment check failed on instance {k}: {}",
                        report.violations.join("; ")
                    )));
                }
            }
            // joint membership: LP inequalities vs exhaustive re-solve oracle
            let params = GeneratorParams {
                seed,
                ..GeneratorParams::default()
            };
            for k in 0..instances {
                let inst = generate_instance(&params, k).map_err(check_err)?;
                let bids = inst.bid_profile();
                let fv = bicore_feedback(&inst, &bids);
                let lp = bicore_membership(&inst, &bids, &fv);
                let oracle = bicore_membership_oracle(&inst, &bids, &fv).map_err(check_err)?;
                if !lp || !oracle {
                    return Err(check_err(format!(
                        "joint policy point rejected on generated instance {k}"
                    )));
                }
                // the VCG vector must agree between both membership checks
                let vcg = vcg_feedback(&inst, &bids);
                let lp_v = bicore_membership(&inst, &bids, &vcg);
                let or_v = bicore_membership_oracle(&inst, &bids, &vcg).map_err(check_err)?;
                if lp_v != or_v {
                    return Err(check_err(format!(
                        "membership disagreement on generated instance {k}"
                    )));
                }
                let _ = CoalitionalOracle::new(&inst, &bids).grand_value();
            }
            println!("verify: all checks passed ({instances} assignment + {instances} pod instances)");
            Ok(())
        }
    }
}
