//! `esrp`: run scenarios, seed batches and parameter sweeps, or query the
//! link budget directly.
//!
//! Exit status: 0 on success, 1 for bad input (arguments, config files,
//! invalid scenarios), 2 when a run or an output write fails.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use esrp_core::config::load_config;
use esrp_core::linkbudget::{self, PathlossModel, PowerDbm, PowerMw};
use esrp_core::metrics::{self, AggregateRow, MetricsRecord};
use esrp_core::sim::{self, Scenario};
use esrp_core::sweep::{run_sweep, SweepAxis};
use esrp_core::{Link, Modulation, Radio};

#[derive(Parser, Debug)]
#[command(name = "esrp", version, about = "Secure power-aware WSN routing simulator")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scenario file; defaults apply to every key it leaves out.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for a single run (overrides SEED in the config).
    #[arg(long, value_name = "N", conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Sweep axis, e.g. node_count=100,200 or tx_power=10,15. Repeatable.
    #[arg(long, value_name = "AXIS=V1,V2,...")]
    sweep: Vec<String>,
    /// Inclusive seed range, e.g. 1..10.
    #[arg(long, value_name = "N1..N2")]
    seeds: Option<String>,
    /// CSV output: the run row for a single run, per-configuration
    /// mean/stddev rows for a sweep.
    #[arg(long, value_name = "CSV_PATH")]
    out: Option<PathBuf>,
    /// Per-run CSV of a sweep.
    #[arg(long, value_name = "CSV_PATH")]
    runs_out: Option<PathBuf>,
    /// JSON-lines event trace of a single run.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Desk calculations on the radio model.
    Linkbudget {
        #[command(subcommand)]
        calc: Calc,
    },
}

#[derive(Args, Debug, Clone)]
struct RadioArgs {
    /// Antenna height of both ends, m.
    #[arg(long, default_value_t = 1.5)]
    height: f64,
    /// Carrier frequency, Hz.
    #[arg(long, default_value_t = 2.4e9)]
    frequency: f64,
    /// Antenna gain of both ends, dB.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    gain: f64,
}

impl RadioArgs {
    fn radio(&self) -> Radio {
        Radio {
            antenna_height_tx: self.height,
            antenna_height_rx: self.height,
            antenna_gain_tx: self.gain,
            antenna_gain_rx: self.gain,
            frequency: self.frequency,
            ..Radio::default()
        }
    }
}

#[derive(Subcommand, Debug)]
enum Calc {
    /// Maximum range at which the received power meets the threshold.
    Range {
        /// Transmit power, dBm.
        #[arg(long, allow_negative_numbers = true)]
        tx: f64,
        /// Receive threshold, dBm.
        #[arg(long, allow_negative_numbers = true)]
        threshold: f64,
        /// Free-space propagation instead of two-ray.
        #[arg(long)]
        free_space: bool,
        #[command(flatten)]
        radio: RadioArgs,
    },
    /// Two-ray range from linear powers in mW.
    RangeMw {
        #[arg(long)]
        pt: f64,
        #[arg(long)]
        pr: f64,
        #[arg(long, default_value_t = 1.5)]
        height: f64,
    },
    /// Two-ray received power at a distance.
    RxPower {
        #[arg(long, allow_negative_numbers = true)]
        tx: f64,
        /// Distance, m.
        #[arg(long, allow_negative_numbers = true)]
        distance: f64,
        #[command(flatten)]
        radio: RadioArgs,
    },
    /// Eb/N0 QPSK needs for a bit error rate.
    Ebn0 {
        #[arg(long, allow_negative_numbers = true)]
        ber: f64,
    },
    /// Minimum transmit power for a BER target over a two-ray link.
    Ptx {
        #[arg(long, allow_negative_numbers = true)]
        ber: f64,
        #[arg(long, allow_negative_numbers = true)]
        distance: f64,
        /// Data rate, bit/s.
        #[arg(long, default_value_t = 2e6)]
        rate: f64,
        /// Bits per symbol (2 for QPSK).
        #[arg(long, default_value_t = 2)]
        bits: u32,
        #[command(flatten)]
        radio: RadioArgs,
    },
    /// Minimum detectable signal.
    Mds {
        /// Required SNR, dB.
        #[arg(long, allow_negative_numbers = true)]
        snr: f64,
        /// Noise figure, dB.
        #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
        noise_figure: f64,
        /// Noise bandwidth, Hz.
        #[arg(long, default_value_t = 2e6, allow_negative_numbers = true)]
        bandwidth: f64,
    },
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

type Outcome = Result<(), Failure>;

fn config<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Some(Command::Linkbudget { calc }) => linkbudget_cmd(&calc),
        None => run_cmd(&cli.run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}

fn parse_seed_range(s: &str) -> anyhow::Result<Vec<u64>> {
    let (a, b) = s.split_once("..").ok_or_else(|| anyhow!("--seeds expects N1..N2, got {s:?}"))?;
    let a: u64 = a.trim().parse().with_context(|| format!("bad start seed in {s:?}"))?;
    let b: u64 = b.trim().trim_start_matches('=').parse().with_context(|| format!("bad end seed in {s:?}"))?;
    if b < a {
        return Err(anyhow!("--seeds range {s:?} is empty"));
    }
    Ok((a..=b).collect())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
        .map_err(runtime)
}

fn run_cmd(args: &RunArgs) -> Outcome {
    let mut base = match &args.config {
        Some(p) => load_config(p).with_context(|| format!("in {}", p.display())).map_err(config)?,
        None => Scenario::default(),
    };
    if let Some(seed) = args.seed {
        base.seed = seed;
    }
    let axes = args
        .sweep
        .iter()
        .map(|s| s.parse::<SweepAxis>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(config)?;
    let seeds = args.seeds.as_deref().map(parse_seed_range).transpose().map_err(config)?;
    if axes.is_empty() && seeds.is_none() {
        single_run(&base, args)
    } else {
        if args.trace.is_some() {
            return Err(config(anyhow!("--trace records a single run; drop --sweep/--seeds or --trace")));
        }
        let seeds = seeds.unwrap_or_else(|| vec![base.seed]);
        sweep_cmd(&base, &axes, &seeds, args)
    }
}

fn single_run(s: &Scenario, args: &RunArgs) -> Outcome {
    let traced = args.trace.is_some();
    let out = if traced { sim::run_traced(s) } else { sim::run(s) };
    let out = out.map_err(|e| if e.is_config_error() { config(e) } else { runtime(e) })?;
    if let Some(path) = &args.trace {
        let mut w = create(path)?;
        for line in &out.trace {
            writeln!(w, "{line}").map_err(runtime)?;
        }
        w.flush().map_err(runtime)?;
    }
    if let Some(path) = &args.out {
        metrics::write_runs_csv(create(path)?, std::slice::from_ref(&out.metrics)).map_err(runtime)?;
    }
    print_run(&out.metrics).map_err(runtime)
}

fn sweep_cmd(base: &Scenario, axes: &[SweepAxis], seeds: &[u64], args: &RunArgs) -> Outcome {
    let result = run_sweep(base, axes, seeds).map_err(|e| if e.is_config_error() { config(e) } else { runtime(e) })?;
    if let Some(path) = &args.out {
        metrics::write_aggregate_csv(create(path)?, &result.rows).map_err(runtime)?;
    }
    if let Some(path) = &args.runs_out {
        metrics::write_runs_csv(create(path)?, &result.runs).map_err(runtime)?;
    }
    print_rows(&result.rows).map_err(runtime)
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| metrics::NA.to_string(), |x| format!("{x:.prec$}"))
}

fn print_run(m: &MetricsRecord) -> io::Result<()> {
    let mut o = io::stdout().lock();
    writeln!(o, "nodes {}  tx {} dBm  payload {} B  seed {}", m.node_count, m.tx_power_dbm, m.payload_bytes, m.seed)?;
    writeln!(o, "sent {}  received {}  pdr {}", m.sent, m.received, opt(m.pdr_f64(), 4))?;
    writeln!(o, "throughput {:.4} pkt/s  mean delay {} s", m.throughput_pps, opt(m.mean_delay_s, 6))?;
    writeln!(o, "energy total {:.4} mWh  per node {:.6} mWh", m.total_energy_mwh, m.mean_energy_mwh)?;
    writeln!(
        o,
        "discoveries {}  rerr at source {}  notifications {}  convictions {}  mac drops {}",
        m.discoveries, m.rerr_at_source, m.notifications, m.convictions, m.mac_drops
    )
}

fn print_rows(rows: &[AggregateRow]) -> io::Result<()> {
    let mut o = io::stdout().lock();
    writeln!(o, "{:>6} {:>6} {:>7} {:>5} {:>8} {:>12} {:>12} {:>14}", "nodes", "tx", "payload", "runs", "pdr", "pkt/s", "delay_s", "mWh/node")?;
    for r in rows {
        writeln!(
            o,
            "{:>6} {:>6} {:>7} {:>5} {:>8} {:>12.4} {:>12} {:>14.6}{}",
            r.node_count,
            r.tx_power_dbm,
            r.payload_bytes,
            r.runs,
            opt(r.pdr_mean, 4),
            r.throughput_mean,
            opt(r.delay_mean, 6),
            r.energy_per_node_mean,
            if r.duplicate_seeds { "  duplicate seeds" } else { "" }
        )?;
    }
    Ok(())
}

fn linkbudget_cmd(calc: &Calc) -> Outcome {
    let line = match calc {
        Calc::Range { tx, threshold, free_space, radio } => {
            let params = radio.radio().with_tx_power(*tx).with_rx_threshold(*threshold);
            let model = if *free_space { PathlossModel::FreeSpace } else { PathlossModel::TwoRay };
            let d = linkbudget::max_range(&params, model).map_err(config)?;
            format!("{d:.3} m")
        }
        Calc::RangeMw { pt, pr, height } => {
            let d = linkbudget::two_ray_range_mw(*pt, *pr, *height, *height).map_err(config)?;
            format!("{d:.3} m")
        }
        Calc::RxPower { tx, distance, radio } => {
            let params = radio.radio().with_tx_power(*tx);
            let p: PowerMw<f64> = linkbudget::two_ray_rx_power(&params, *distance).map_err(config)?;
            let dbm: PowerDbm<f64> = p.to_dbm().map_err(config)?;
            format!("{:.4} dBm ({:.6e} mW)", dbm.0, p.0)
        }
        Calc::Ebn0 { ber } => {
            let e = linkbudget::required_ebn0(*ber).map_err(config)?;
            format!("{e:.4} ({:.2} dB)", linkbudget::linear_to_db(e))
        }
        Calc::Ptx { ber, distance, rate, bits, radio } => {
            let params = radio.radio();
            let modulation = Modulation::new(*bits, *rate, params.noise_density()).map_err(config)?;
            let link = Link::two_ray(&params, *distance).map_err(config)?;
            let watts = linkbudget::optimal_tx_power(&modulation, &link, *ber).map_err(config)?;
            let dbm = linkbudget::mw_to_dbm(PowerMw(watts * 1e3)).map_err(config)?;
            format!("{:.4} dBm ({watts:.6e} W)", dbm.0)
        }
        Calc::Mds { snr, noise_figure, bandwidth } => {
            let params = Radio { noise_figure: *noise_figure, noise_bandwidth: *bandwidth, ..Radio::default() };
            let mds = linkbudget::minimum_detectable_signal(&params, *snr).map_err(config)?;
            format!("{:.4} dBm", mds.0)
        }
    };
    println!("{line}");
    Ok(())
}
