//! Command-line driver for layer-wise kernel network experiments: training,
//! cross-validated benchmarks, the monotone-risk simulation, kernel matrix
//! dumps, and bandwidth sweeps. All commands are deterministic given the
//! config and seed.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kernet::data::{self, Dataset};
use kernet::dump;
use kernet::error::{Error, Result};
use kernet::kernel;
use kernet::network::{self, MetricsRecord, Network, RunConfig};
use kernet::report;
use kernet::sigma::{self, SearchOptions};
use kernet::simulate;

#[derive(Parser)]
#[command(
    name = "kernet",
    about = "Layer-wise kernel networks with closed-form weights",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Generator {
    Adversarial,
    Random,
    Spiral,
}

#[derive(Args)]
struct DataSource {
    /// CSV file with numeric features and a categorical label column
    #[arg(long, conflicts_with = "generator")]
    data: Option<PathBuf>,
    /// Synthetic dataset generator
    #[arg(long, value_enum)]
    generator: Option<Generator>,
    /// Label column name (CSV with header only; defaults to the last column)
    #[arg(long)]
    label_column: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write it with its per-layer metrics table
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        source: DataSource,
        /// Output directory (network.json, metrics.csv)
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed and seeds the generator
        #[arg(long)]
        seed: Option<u64>,
    },
    /// k-fold cross-validation benchmark with an aggregated report
    Benchmark {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        source: DataSource,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Report file (JSON); per-fold timings go to <out>.times.txt
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Exact-kernel simulation of the decreasing-σ schedule plus the
    /// two-layer small-σ construction
    SimulateThm1 {
        #[command(flatten)]
        source: DataSource,
        /// Output directory (trace.csv, projections.csv, two_layer.csv)
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dump a kernel matrix (class-contiguous) as CSV and grayscale PGM
    DumpKernel {
        /// Trained network file
        #[arg(long)]
        network: PathBuf,
        #[command(flatten)]
        source: DataSource,
        /// 0 = raw-input Gaussian kernel, l >= 1 = activation kernel of layer l
        #[arg(long)]
        layer: usize,
        /// Output directory (kernel.csv, kernel.pgm)
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Table of both bandwidth objectives over a dense log grid
    SigmaSweep {
        #[command(flatten)]
        source: DataSource,
        /// Output CSV; optimizer marks in columns, summary at <out>.summary.json
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn resolve_dataset(source: &DataSource, seed: u64) -> Result<(Dataset, String)> {
    match (&source.data, source.generator) {
        (Some(path), None) => {
            let ds = data::load_csv(path, source.label_column.as_deref())?;
            Ok((ds, format!("csv:{}", path.display())))
        }
        (None, Some(gen)) => {
            let (ds, name) = match gen {
                Generator::Adversarial => (data::gen_adversarial(40, 0.01, seed)?, "adversarial"),
                Generator::Random => (data::gen_random(80, 2, seed)?, "random"),
                Generator::Spiral => (data::gen_spiral(100, 3, 1.75, 0.1, seed)?, "spiral"),
            };
            Ok((ds, format!("generator:{name}(seed={seed})")))
        }
        _ => Err(Error::Config(
            "exactly one of --data or --generator is required".into(),
        )),
    }
}

fn load_run_config(path: Option<&PathBuf>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => config::load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn metrics_csv(history: &[MetricsRecord]) -> String {
    let mut out = String::from("layer,hsic,scatter_ratio,csr,mse,ce,train_acc,sigma,width,improved\n");
    for r in history {
        let improved = r
            .improved
            .map(|b| b.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.layer,
            fmt_opt(r.hsic_norm),
            fmt_opt(r.scatter_ratio),
            fmt_opt(r.csr),
            fmt_opt(r.mse),
            fmt_opt(r.ce),
            fmt_opt(r.train_accuracy),
            r.sigma,
            r.width,
            improved
        );
    }
    out
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train {
            config,
            source,
            out,
            seed,
        } => {
            let cfg = load_run_config(config.as_ref(), seed)?;
            let (ds, _) = resolve_dataset(&source, seed.unwrap_or(cfg.seed))?;
            print_warnings(&ds.warnings);
            let net = network::train(&ds, &cfg)?;
            print_warnings(&net.warnings);
            std::fs::create_dir_all(&out)?;
            net.save(&out.join("network.json"))?;
            std::fs::write(out.join("metrics.csv"), metrics_csv(&net.history))?;
            let last = net.history.last().expect("at least one layer");
            println!(
                "trained {} layers; final hsic {}",
                net.layers.len(),
                fmt_opt(last.hsic_norm)
            );
            Ok(())
        }
        Command::Benchmark {
            config,
            source,
            folds,
            out,
            seed,
        } => {
            let cfg = load_run_config(config.as_ref(), seed)?;
            let (ds, source_name) = resolve_dataset(&source, seed.unwrap_or(cfg.seed))?;
            print_warnings(&ds.warnings);
            let (rep, seconds) = report::run_benchmark(&ds, &cfg, folds, &source_name)?;
            rep.save(&out)?;
            let mut times = String::new();
            for (i, s) in seconds.iter().enumerate() {
                let _ = writeln!(times, "fold {i}: {s:.3} s");
            }
            let _ = writeln!(times, "total: {:.3} s", seconds.iter().sum::<f64>());
            std::fs::write(times_path(&out), times)?;
            for (name, agg) in &rep.aggregates {
                println!("{name}: {:.4} +/- {:.4} (n={})", agg.mean, agg.std, agg.count);
            }
            Ok(())
        }
        Command::SimulateThm1 { source, out, seed } => {
            let seed = seed.unwrap_or(0);
            let (ds, source_name) = resolve_dataset(&source, seed)?;
            print_warnings(&ds.warnings);
            std::fs::create_dir_all(&out)?;
            let trace = simulate::simulate_decay(&ds, &simulate::SimulateOptions::default())?;

            let mut trace_csv = String::from("layer,sigma,hsic,improved\n");
            for l in &trace.layers {
                let _ = writeln!(trace_csv, "{},{},{},{}", l.layer, l.sigma, l.hsic, l.improved);
            }
            std::fs::write(out.join("trace.csv"), trace_csv)?;

            let mut proj = String::from("layer,sample,label,value\n");
            for l in &trace.layers {
                for (i, v) in l.projection.iter().enumerate() {
                    let _ = writeln!(proj, "{},{},{},{}", l.layer, i, ds.labels[i], v);
                }
            }
            std::fs::write(out.join("projections.csv"), proj)?;

            let two = simulate::simulate_two_layer(&ds, 1e-5)?;
            let mut two_csv = String::from("sample,label,layer1,layer2\n");
            for i in 0..ds.n() {
                let _ = writeln!(
                    two_csv,
                    "{},{},{},{}",
                    i, ds.labels[i], two.layer1[i], two.layer2[i]
                );
            }
            std::fs::write(out.join("two_layer.csv"), two_csv)?;

            // the schedule's contract: flagged layers strictly increase H
            let mut prev = trace.initial_hsic;
            for l in &trace.layers {
                if l.improved && l.hsic <= prev {
                    return Err(Error::DegenerateInput(format!(
                        "layer {} flagged improved but hsic did not increase",
                        l.layer
                    )));
                }
                prev = l.hsic;
            }
            println!(
                "{source_name}: {} layers, final hsic {:.4}, target reached: {}",
                trace.layers.len(),
                trace.layers.last().map(|l| l.hsic).unwrap_or(f64::NAN),
                trace.reached_target
            );
            println!(
                "two-layer sigma=1e-5: hsic {:.4}, separable: {}",
                two.hsic, two.separable
            );
            Ok(())
        }
        Command::DumpKernel {
            network,
            source,
            layer,
            out,
            seed,
        } => {
            let net = Network::load(&network)?;
            let (ds, _) = resolve_dataset(&source, seed.unwrap_or(net.config.seed))?;
            print_warnings(&ds.warnings);
            let k = dump::kernel_at_layer(&net, ds.x.view(), layer)?;
            let (ordered, _) = dump::ordered_kernel(k.view(), &ds.labels);
            std::fs::create_dir_all(&out)?;
            dump::write_kernel_csv(&out.join("kernel.csv"), ordered.view())?;
            dump::write_kernel_pgm(&out.join("kernel.pgm"), ordered.view())?;
            let (within, cross) = dump::block_means(k.view(), &ds.labels);
            println!("layer {layer}: within-class mean {within:.4}, cross-class mean {cross:.4}");
            Ok(())
        }
        Command::SigmaSweep {
            source,
            out,
            grid,
            seed,
        } => {
            let seed = seed.unwrap_or(0);
            let (ds, source_name) = resolve_dataset(&source, seed)?;
            print_warnings(&ds.warnings);
            sweep(&ds, &out, grid, &source_name)
        }
    }
}

fn times_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".times.txt");
    out.with_file_name(name)
}

/// Rise-then-fall test on a sampled curve: exactly one sign change in the
/// discrete differences, from positive to negative.
fn single_interior_peak(values: &[Option<f64>]) -> bool {
    let present: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    if present.len() < 3 {
        return false;
    }
    let scale = present.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut signs = Vec::new();
    for pair in present.windows(2) {
        let d = pair[1] - pair[0];
        if d.abs() > 1e-9 * scale {
            let s = d.signum();
            if signs.last() != Some(&s) {
                signs.push(s);
            }
        }
    }
    signs == vec![1.0, -1.0]
}

fn sweep(ds: &Dataset, out: &Path, grid: usize, source_name: &str) -> Result<()> {
    if grid < 3 {
        return Err(Error::Config("--grid must be at least 3".into()));
    }
    let gamma = kernel::gamma_matrix(ds.y.view())?;
    let m = sigma::median_pairwise_distance(ds.x.view())
        .ok_or_else(|| Error::DegenerateInput("all samples coincide".into()))?;
    let (lo, hi) = (1e-2 * m, 1e2 * m);
    let step = (hi / lo).ln() / (grid - 1) as f64;
    let sigmas: Vec<f64> = (0..grid).map(|i| (lo.ln() + step * i as f64).exp()).collect();
    let separation: Vec<Option<f64>> = sigmas
        .iter()
        .map(|&s| sigma::separation_objective(ds.x.view(), &ds.pair_sets, s).ok())
        .collect();
    let hsic: Vec<Option<f64>> = sigmas
        .iter()
        .map(|&s| {
            kernel::gaussian_kernel(ds.x.view(), s)
                .and_then(|k| kernel::hsic_normalized_vs_gamma(k.view(), &gamma))
                .ok()
        })
        .collect();
    let opts = SearchOptions::default();
    let sep_opt = sigma::optimize_sigma_separation(ds.x.view(), &ds.pair_sets, &opts)?;
    let hsic_opt = sigma::optimize_sigma_hsic_input(ds.x.view(), &gamma, &opts)?;
    let nearest = |target: f64| -> usize {
        sigmas
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let da = (a.ln() - target.ln()).abs();
                let db = (b.ln() - target.ln()).abs();
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap()
    };
    let sep_mark = nearest(sep_opt.sigma);
    let hsic_mark = nearest(hsic_opt.sigma);

    let mut csv = String::from("sigma,separation,hsic,sep_best,hsic_best\n");
    for i in 0..grid {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            sigmas[i],
            fmt_opt(separation[i]),
            fmt_opt(hsic[i]),
            u8::from(i == sep_mark),
            u8::from(i == hsic_mark)
        );
    }
    std::fs::write(out, csv)?;

    let summary = serde_json::json!({
        "data_source": source_name,
        "grid_points": grid,
        "bracket": [lo, hi],
        "separation": {
            "sigma": sep_opt.sigma,
            "objective": sep_opt.objective,
            "evaluations": sep_opt.evaluations,
            "single_interior_peak": single_interior_peak(&separation),
        },
        "hsic": {
            "sigma": hsic_opt.sigma,
            "objective": hsic_opt.objective,
            "evaluations": hsic_opt.evaluations,
            "single_interior_peak": single_interior_peak(&hsic),
        },
    });
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    std::fs::write(
        out.with_file_name(name),
        serde_json::to_string_pretty(&summary).map_err(|e| Error::Serde(e.to_string()))? + "\n",
    )?;
    println!(
        "separation: sigma {:.6} objective {:.6}; hsic: sigma {:.6} objective {:.6}",
        sep_opt.sigma, sep_opt.objective, hsic_opt.sigma, hsic_opt.objective
    );
    Ok(())
}
