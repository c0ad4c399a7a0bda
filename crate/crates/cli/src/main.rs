use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coarse_sketch::bench::{
    run_experiment, EstimatorParams, ExperimentConfig, ExperimentResult, SourceSpec,
};
use coarse_sketch::hard::{
    gen_augdisj, gen_augindex_l0, gen_coin_stream, gen_disj, gen_pw11, CoinMode, CoinStreamSpec,
};
use coarse_sketch::l0::L0Profile;
use coarse_sketch::lp_large::InnerKind;
use coarse_sketch::stream::TurnstileStream;
use coarse_sketch::SketchError;

#[derive(Parser)]
#[command(name = "coarse-sketch", version, about = "Turnstile sketch experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or estimator flags.
    Run(RunArgs),
    /// Write a hard-instance stream in the text stream format.
    Gen(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rough ℓ₀ with the given constant profile.
    #[arg(long, value_name = "PROFILE")]
    l0_profile: Option<L0Profile>,
    /// ℓ_p for p ≤ 2 (AMS at p = 2).
    #[arg(long, value_name = "P")]
    fp: Option<f64>,
    /// ℓ_p for p > 2 through the ℓ_q reduction.
    #[arg(long, value_name = "P")]
    lp: Option<f64>,
    /// Cascaded (p, q)-norm, given as `p,q`.
    #[arg(long, value_name = "P,Q", value_delimiter = ',')]
    cascaded: Option<Vec<f64>>,
    /// Heavy hitters with parameter k.
    #[arg(long, value_name = "K")]
    hh: Option<u64>,
    /// Schatten-p norm.
    #[arg(long, value_name = "P")]
    schatten: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Level count for the rough ℓ₀ sketch.
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    inner: Option<InnerKind>,
    /// Dimension of the generated input.
    #[arg(long)]
    n: Option<u64>,
    /// Stream file (matrix file for matrix estimators) used for every trial.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Coin,
    Disj,
    Augdisj,
    Augindex,
    Pw11,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Plain,
    Bounded,
    RandomOrder,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    kind: Kind,
    #[arg(long, default_value_t = 1 << 14)]
    n: u64,
    /// Players (disj, augdisj).
    #[arg(long, default_value_t = 14)]
    s: usize,
    /// Layers (augdisj).
    #[arg(long, default_value_t = 4)]
    r: usize,
    /// Plant the all-ones column (disj).
    #[arg(long)]
    yes: bool,
    /// Coin flips (coin).
    #[arg(long, default_value_t = 1_000_000)]
    len: u64,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, value_enum, default_value_t = Mode::Plain)]
    mode: Mode,
    /// Support parameter (pw11).
    #[arg(long, default_value_t = 64)]
    k: usize,
    /// Quantization bits (pw11).
    #[arg(long, default_value_t = 10)]
    bits: i32,
    /// Level parameter, a multiple of 8 (augindex).
    #[arg(long, default_value_t = 16)]
    t: u32,
    /// Alice's bits as a 0/1 string of length t/8 (augindex).
    #[arg(long, default_value = "10")]
    u: String,
    /// 1-based query index (augindex).
    #[arg(long, default_value_t = 2)]
    query: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn shortcut_config(a: &RunArgs) -> Result<ExperimentConfig, SketchError> {
    let mut params = EstimatorParams {
        alpha: a.alpha,
        eps: a.eps,
        t: a.t,
        inner: a.inner,
        ..EstimatorParams::default()
    };
    let file = a.input.clone();
    let vector_source = |default: SourceSpec| match &file {
        Some(path) => SourceSpec::File { path: path.clone() },
        None => default,
    };
    let matrix_source = |default: SourceSpec| match &file {
        Some(path) => SourceSpec::MatrixFile { path: path.clone() },
        None => default,
    };
    let chosen = [
        a.l0_profile.is_some(),
        a.fp.is_some(),
        a.lp.is_some(),
        a.cascaded.is_some(),
        a.hh.is_some(),
        a.schatten.is_some(),
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    if chosen != 1 {
        return Err(SketchError::InvalidParameter(
            "give --config or exactly one of --l0-profile, --fp, --lp, --cascaded, --hh, --schatten"
                .into(),
        ));
    }
    let (estimator, source) = if let Some(profile) = a.l0_profile {
        params.profile = Some(profile);
        let n = a.n.unwrap_or(1 << 16);
        ("l0-rough", vector_source(SourceSpec::Planted { n, l0: n / 16, m: 8, churn: 0 }))
    } else if let Some(p) = a.fp {
        params.p = Some(p);
        let n = a.n.unwrap_or(10_000);
        let id = if p == 2.0 { "ams" } else { "pstable" };
        (id, vector_source(SourceSpec::Random { n, m: 100 }))
    } else if let Some(p) = a.lp {
        params.p = Some(p);
        let n = a.n.unwrap_or(4096);
        ("lp-large", vector_source(SourceSpec::Random { n, m: 100 }))
    } else if let Some(pq) = &a.cascaded {
        if pq.len() != 2 {
            return Err(SketchError::InvalidParameter("--cascaded takes p,q".into()));
        }
        params.p = Some(pq[0]);
        params.q = Some(pq[1]);
        let n = a.n.unwrap_or(64);
        ("cascaded", matrix_source(SourceSpec::MatrixRandom { rows: n, cols: n, m: 100 }))
    } else if let Some(k) = a.hh {
        params.k = Some(k);
        let n = a.n.unwrap_or(1 << 14);
        ("heavy", vector_source(SourceSpec::PlantedHeavy { n, k, m: 10 }))
    } else {
        params.p = a.schatten;
        let n = a.n.unwrap_or(128);
        ("schatten", matrix_source(SourceSpec::MatrixRandom { rows: n, cols: n, m: 10 }))
    };
    Ok(ExperimentConfig {
        estimator: estimator.into(),
        params,
        source,
        trials: 200,
        seed: 0,
        output: None,
    })
}

fn run(a: RunArgs) -> Result<ExperimentResult, SketchError> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::from_toml(&fs::read_to_string(path)?)?,
        None => shortcut_config(&a)?,
    };
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.output.is_some() {
        cfg.output = a.output.clone();
    }
    let result = run_experiment(&cfg)?;
    let csv = result.to_csv();
    match &cfg.output {
        Some(path) => fs::write(path, csv)?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    eprintln!(
        "{}: success rate {:.3} over {} trials, floor {:.3}: {}",
        cfg.estimator,
        result.success_rate(),
        result.rows.len(),
        result.floor,
        if result.passed() { "PASS" } else { "FAIL" }
    );
    Ok(result)
}

fn gen(a: GenArgs) -> Result<(), SketchError> {
    let text = match a.kind {
        Kind::Coin => {
            let mode = match a.mode {
                Mode::Plain => CoinMode::Plain,
                Mode::Bounded => CoinMode::BoundedDeletion,
                Mode::RandomOrder => CoinMode::RandomOrder,
            };
            gen_coin_stream(&CoinStreamSpec::new(a.len, a.beta, mode), a.seed)?.to_text()
        }
        Kind::Disj => {
            let d = gen_disj(a.n as usize, a.s, a.yes, a.seed)?;
            let mut s = TurnstileStream::new(a.n, a.s as u64);
            for row in &d.bits {
                for (i, &b) in row.iter().enumerate() {
                    if b == 1 {
                        s.push(i as u64, 1);
                    }
                }
            }
            format!("# disj yes={} planted={}\n{}", d.yes, d.planted, s.to_text())
        }
        Kind::Augdisj => {
            let inst = gen_augdisj(a.n as usize, a.s, a.r, a.seed)?;
            format!(
                "# augdisj T={} yes={} planted={}\n{}",
                inst.t,
                inst.yes(),
                inst.planted(),
                inst.protocol_stream().to_text()
            )
        }
        Kind::Augindex => {
            let u: Vec<bool> = a
                .u
                .chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    _ => Err(SketchError::InvalidParameter(format!("bad bit {c:?} in --u"))),
                })
                .collect::<Result<_, _>>()?;
            let inst = gen_augindex_l0(&u, a.query, a.n, a.t)?;
            format!(
                "# augindex first probe after {} updates\n{}",
                inst.alice.len() + inst.bob_clear.len(),
                inst.second_probe().to_text()
            )
        }
        Kind::Pw11 => {
            let inst = gen_pw11(a.n as usize, a.k, a.seed)?;
            let support: Vec<String> = inst.support.iter().map(|i| i.to_string()).collect();
            format!(
                "# pw11 support {}\n{}",
                support.join(","),
                inst.quantized_stream(a.bits).to_text()
            )
        }
    };
    match a.output {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a).map(|r| r.passed()),
        Command::Gen(a) => gen(a).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
