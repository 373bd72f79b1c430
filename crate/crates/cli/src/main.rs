use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qseries::data::LagMode;
use qseries::experiment::{
    cmd_compare, cmd_generate, cmd_run, compare, load_result, write_comparison, ExperimentConfig, ModelKind,
};
use qseries::{Error, ErrorClass, Execution};

/// Quantum and classical recurrent forecasters on synthetic monthly series.
#[derive(Parser, Debug)]
#[command(name = "qseries", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic GP + HMM corpus.
    Generate(Common),
    /// Train and evaluate one model over the configured seeds.
    Run(Common),
    /// Run a model and its quantum/classical counterpart, or compare two result directories.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Two existing run directories (or result.json files) to compare instead.
        #[arg(num_args = 2, value_names = ["A", "B"])]
        results: Vec<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// lstm, qlstm, rc, qrc, nn-rc or nn-qrc.
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    /// univariate or multivariate.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<LagMode>,
    /// Window length in months.
    #[arg(long)]
    lag: Option<usize>,
    /// Steps ahead of the window's last month.
    #[arg(long)]
    horizon: Option<usize>,
    /// Seed list, repeatable or comma separated. For `generate`, the first seed is the corpus seed.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Corpus CSV used by `run` and `compare`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write reservoir state traces.
    #[arg(long)]
    dump_trace: bool,
    /// Run seeds sequentially.
    #[arg(long)]
    sequential: bool,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<LagMode, String> {
    match s {
        "univariate" => Ok(LagMode::Univariate),
        "multivariate" => Ok(LagMode::Multivariate),
        _ => Err(format!("unknown mode {s:?} (expected univariate or multivariate)")),
    }
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(m) = self.model {
            cfg.model = m;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(k) = self.lag {
            cfg.lag = k;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if !self.seed.is_empty() {
            cfg.seeds = self.seed.clone();
        }
        if let Some(d) = &self.data {
            cfg.data = d.clone();
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.dump_trace |= self.dump_trace;
        Ok(cfg)
    }

    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate(common) => {
            let cfg = common.resolve()?;
            let mut corpus = cfg.corpus.clone();
            if let Some(&s) = common.seed.first() {
                corpus.seed = s;
            }
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("corpus"));
            for p in cmd_generate(&corpus, &out, common.exec())? {
                println!("wrote {}", p.display());
            }
        }
        Command::Run(common) => {
            let cfg = common.resolve()?;
            let r = cmd_run(&cfg, common.exec())?;
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{}: {} params, test RMSE {:.4} ± {:.4} (persistence {:.4}), pseudo-accuracy {:.4}; results in {}",
                r.model,
                r.n_params,
                r.summary.test_rmse.mean,
                r.summary.test_rmse.std,
                r.summary.persistence_test_rmse.mean,
                r.summary.test_pseudo_accuracy.mean,
                cfg.out.display()
            );
        }
        Command::Compare { common, results } => {
            let cmp = if results.len() == 2 {
                let a = load_result(&results[0])?;
                let b = load_result(&results[1])?;
                let cmp = compare(&a, &b);
                let out = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
                write_comparison(&out, &cmp)?;
                cmp
            } else {
                cmd_compare(&common.resolve()?, common.exec())?
            };
            print!("{}", cmp.to_markdown());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            })
        }
    }
}
