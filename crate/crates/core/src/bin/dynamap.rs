use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dynamap::cost::{build_cost_graph, HwConfig};
use dynamap::dse::{
    baseline_plan, dataflow_table, optimize_with_baselines, run_dynamap, search_array_dims, utilization_report,
    AlgoPolicy, DataflowPolicy, FusionMode, RunOptions, SearchOptions, TauMode,
};
use dynamap::kernels::verify_kernels;
use dynamap::layout::{ltu_stream, LtuConfig};
use dynamap::model::{load_model, validate, LayerMeta};
use dynamap::{Error, Result};

/// Latency-optimal convolution algorithm mapping for systolic-array CNN
/// accelerators.
#[derive(Parser)]
#[command(name = "dynamap", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Auto,
    Im2col,
    Kn2row,
    Winograd,
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    /// Fusion-aware solve, then fuse.
    On,
    /// Solve on unfused costs, then fuse.
    Post,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataflowArg {
    Auto,
    NsOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum TauArg {
    Sum,
    Min,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transform {
    Toeplitz,
    WinogradScatter,
    WinogradGather,
    Identity,
}

#[derive(clap::Args)]
struct FlowArgs {
    /// Model description (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Device profile (JSON).
    #[arg(long)]
    device: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    dataflow_policy: DataflowArg,
    /// Restrict the search to square arrays.
    #[arg(long)]
    square_array: bool,
    #[arg(long, value_enum, default_value = "on")]
    fusion: FusionArg,
    #[arg(long, value_enum, default_value = "sum")]
    tau: TauArg,
    /// Worker threads for the shape scan.
    #[arg(long)]
    jobs: Option<usize>,
}

impl FlowArgs {
    fn options(&self, policy: AlgoPolicy) -> RunOptions {
        RunOptions {
            search: SearchOptions {
                tau: match self.tau {
                    TauArg::Sum => TauMode::Sum,
                    TauArg::Min => TauMode::Min,
                },
                dataflow: match self.dataflow_policy {
                    DataflowArg::Auto => DataflowPolicy::Auto,
                    DataflowArg::NsOnly => DataflowPolicy::NsOnly,
                },
                square: self.square_array,
                jobs: self.jobs,
            },
            policy,
            fusion: match self.fusion {
                FusionArg::On => FusionMode::Aware,
                FusionArg::Post => FusionMode::Post,
                FusionArg::Off => FusionMode::Off,
            },
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validate a model.
    Validate { model: PathBuf },
    /// Search the array shape, solve the algorithm mapping and write a plan.
    Optimize {
        #[command(flatten)]
        flow: FlowArgs,
        /// Plan output path.
        #[arg(long, short)]
        out: PathBuf,
        /// Per-layer CSV output path.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Utilization report output path.
        #[arg(long)]
        util: Option<PathBuf>,
        /// Fix the algorithm policy instead of solving for it.
        #[arg(long, value_enum, default_value = "auto")]
        algo: AlgoArg,
    },
    /// Evaluate one fixed-algorithm baseline.
    Baseline {
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long, value_enum)]
        algo: AlgoArg,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Check the convolution algorithms against the direct oracle.
    VerifyKernels {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Dump a layout-transformation address stream as CSV.
    Layout {
        #[arg(long, value_enum)]
        transform: Transform,
        /// Input height and width.
        #[arg(long, default_value_t = 4)]
        h: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long, default_value_t = 0)]
        pad: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        r: usize,
    },
    /// Report whether the model's cost graph is series-parallel.
    SpCheck { model: PathBuf },
}

fn policy_of(a: AlgoArg) -> AlgoPolicy {
    match a {
        AlgoArg::Auto => AlgoPolicy::Dynamic,
        AlgoArg::Im2col => AlgoPolicy::Im2colOnly,
        AlgoArg::Kn2row => AlgoPolicy::Kn2rowApplied,
        AlgoArg::Winograd => AlgoPolicy::WinoApplied,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn reference_pct(model: &str) -> Option<[f64; 3]> {
    match model {
        "googlenet" => Some([67.5, 78.0, 22.0]),
        "inception_v4" => Some([86.0, 61.0, 17.0]),
        _ => None,
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Validate { model } => {
            let g = load_model(&model)?;
            let diags = validate(&g);
            for d in &diags {
                eprintln!("{d}");
            }
            if diags.is_empty() {
                println!(
                    "{}: ok ({} layers, {} conv, conv depth {})",
                    g.name,
                    g.len(),
                    g.conv_indices().len(),
                    g.conv_depth()
                );
            }
            Ok(diags.is_empty())
        }
        Cmd::Optimize {
            flow,
            out,
            csv,
            util,
            algo,
        } => {
            let g = load_model(&flow.model)?;
            let hw = HwConfig::load(&flow.device)?;
            let opts = flow.options(policy_of(algo));
            let plan = if opts.policy == AlgoPolicy::Dynamic {
                optimize_with_baselines(&g, &hw, &opts)?.0
            } else {
                run_dynamap(&g, &hw, &opts)?
            };
            write(&out, &plan.to_json())?;
            if let Some(p) = csv {
                write(&p, &plan.to_csv())?;
            }
            if let Some(p) = util {
                let rep = utilization_report(&g, &plan, &hw, opts.search.tau)?;
                write(
                    &p,
                    &(serde_json::to_string_pretty(&rep).expect("report serializes") + "\n"),
                )?;
            }
            println!(
                "{}: array {}x{}, total {:.4} ms ({:.0} cycles), {} fused edges",
                g.name,
                plan.dse.p_sa1,
                plan.dse.p_sa2,
                plan.total_ms,
                plan.total_cycles,
                plan.fused_edges.len()
            );
            let reference = reference_pct(&g.name);
            for (i, b) in plan.baselines.iter().enumerate() {
                let note = reference.map_or(String::new(), |r| format!(" (reference {:.1}%)", r[i]));
                println!(
                    "  vs {:<15} {:.4} ms, improvement {:.1}%{note}",
                    b.policy, b.total_ms, b.improvement_pct
                );
            }
            Ok(true)
        }
        Cmd::Baseline { flow, algo, out } => {
            let policy = policy_of(algo);
            if policy == AlgoPolicy::Dynamic {
                return Err(Error::Domain("baseline needs a fixed --algo".into()));
            }
            let g = load_model(&flow.model)?;
            let hw = HwConfig::load(&flow.device)?;
            let opts = flow.options(policy);
            let dse = search_array_dims(&g, &hw, &opts.search)?;
            let plan = baseline_plan(&g, &hw, &dse, policy, opts.fusion)?;
            if let Some(p) = out {
                write(&p, &plan.to_json())?;
            }
            println!(
                "{} {}: array {}x{}, total {:.4} ms ({:.0} cycles)",
                g.name,
                policy.name(),
                dse.p_sa1,
                dse.p_sa2,
                plan.total_ms,
                plan.total_cycles
            );
            Ok(true)
        }
        Cmd::VerifyKernels {
            seed,
            trials,
            inject_fault,
        } => {
            let rep = verify_kernels(seed, trials, inject_fault);
            println!(
                "{} trials ({} winograd): max |im2col - direct| = {}, max |kn2row - direct| = {}, max winograd rel. error = {:e}",
                rep.trials, rep.winograd_trials, rep.max_abs_im2col, rep.max_abs_kn2row, rep.max_rel_winograd
            );
            for f in &rep.failures {
                eprintln!("FAIL {f}");
            }
            Ok(rep.passed())
        }
        Cmd::Layout {
            transform,
            h,
            k,
            stride,
            pad,
            m,
            r,
        } => {
            let layer = LayerMeta::square(1, 1, h, k, stride, pad);
            let cfg = match transform {
                Transform::Toeplitz => LtuConfig::toeplitz(&layer)?,
                Transform::WinogradScatter => LtuConfig::winograd_scatter(&layer, m, r)?,
                Transform::WinogradGather => LtuConfig::winograd_gather(&layer, m, r)?,
                Transform::Identity => LtuConfig::identity(h * h),
            };
            println!("b,d");
            for t in ltu_stream(cfg) {
                println!("{t}");
            }
            Ok(true)
        }
        Cmd::SpCheck { model } => {
            let g = load_model(&model)?;
            let hw = HwConfig::default().with_array(16, 16);
            let psi = dataflow_table(&g, &hw, DataflowPolicy::NsOnly)?;
            let cg = build_cost_graph(&g, &hw, &psi)?;
            let inst = cg.to_pbqp();
            let (ok, trace) = inst.is_series_parallel();
            println!(
                "{}: {} cost-graph vertices, {} edges, {} reductions",
                g.name,
                inst.len(),
                inst.edges.len(),
                trace.steps.len()
            );
            if ok {
                println!("series-parallel");
            } else {
                let err = dynamap::pbqp::solve_sp(&inst).expect_err("not series-parallel");
                eprintln!("{err}");
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
