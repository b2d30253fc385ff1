use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stratvar::config::{self, Study, StudyConfigFile};
use stratvar::design::{Design, DEFAULT_ENUMERATION_CAP};
use stratvar::montecarlo::{run_study, shrinkage_diagnostics, StudyKind};
use stratvar::shrinkage::DEFAULT_TRUNCATION_MARGIN;
use stratvar::{io as csvio, theory, Error};

#[derive(Parser)]
#[command(
    name = "stratvar",
    version,
    about = "Variance estimation studies for one-unit-per-stratum designs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a population file and its per-stratum summary sidecar.
    Generate {
        #[command(flatten)]
        source: Source,
        /// Which expanded study to generate (0-based).
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Closed-form bias, variance-of-variance, MSE and design effect for a population file.
    Theory {
        population: PathBuf,
        #[arg(long, value_enum, default_value_t = DesignArg::Both)]
        design: DesignArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fill oracle columns when full enumeration needs at most this many samples.
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        oracle_cap: u64,
        /// Skip the enumeration oracle.
        #[arg(long)]
        no_oracle: bool,
    },
    /// Run the studies of a config or preset and write the report CSV.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        replications: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write per-replication estimates to this path.
        #[arg(long)]
        raw_dump: Option<PathBuf>,
        /// Write per-group EB/CEB diagnostics to this path (rmse sweeps only).
        #[arg(long)]
        shrinkage_dump: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TRUNCATION_MARGIN)]
        shrinkage_e: f64,
    },
    /// Embedded study presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    Show { name: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignArg {
    OnePerStratum,
    TwoPerStratum,
    Both,
}

impl DesignArg {
    fn designs(self) -> Vec<Design> {
        match self {
            DesignArg::OnePerStratum => vec![Design::OnePerStratum],
            DesignArg::TwoPerStratum => vec![Design::TwoPerStratum],
            DesignArg::Both => vec![Design::OnePerStratum, Design::TwoPerStratum],
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Io(_) => 3,
        Error::DesignInfeasible(_) | Error::OracleInfeasible { .. } => 4,
        Error::Parse { .. } => 5,
        _ => 1,
    }
}

fn load(source: &Source) -> stratvar::Result<StudyConfigFile> {
    match (&source.config, &source.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)?;
            StudyConfigFile::from_toml_str(&text).map_err(|e| {
                Error::Config(format!(
                    "{}: {}",
                    path.display(),
                    e.to_string().trim_start_matches("configuration error: ")
                ))
            })
        }
        (None, Some(name)) => config::preset(name),
        (None, None) => Err(Error::Config("one of --config or --preset is required".into())),
    }
}

fn create(path: &Path) -> stratvar::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn output(path: Option<&Path>) -> stratvar::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.csv"))
}

fn run(cli: Cli) -> stratvar::Result<()> {
    match cli.command {
        Command::Generate {
            source,
            index,
            out,
            seed,
        } => {
            let mut cfg = load(&source)?;
            if let Some(s) = seed {
                cfg.simulation.seed = s;
            }
            let studies = cfg.studies()?;
            let study: &Study = studies.get(index).ok_or_else(|| {
                Error::Config(format!(
                    "--index {index} out of range; config expands to {} studies",
                    studies.len()
                ))
            })?;
            let pop = study.config.population.generate()?;
            let mut w = create(&out)?;
            csvio::write_population(&mut w, &pop, &study.header_lines())?;
            w.flush()?;
            let mut w = create(&sidecar_path(&out))?;
            csvio::write_summary(&mut w, &pop)?;
            w.flush()?;
        }
        Command::Theory {
            population,
            design,
            out,
            oracle_cap,
            no_oracle,
        } => {
            let file = csvio::read_population(File::open(&population)?)?;
            let cap = (!no_oracle).then_some(oracle_cap);
            let report = theory::theory_report(&file.population, &design.designs(), cap)?;
            let comments: Vec<String> = file.comments.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let mut w = output(out.as_deref())?;
            csvio::write_theory(&mut w, &report, &comments)?;
            w.flush()?;
        }
        Command::Simulate {
            source,
            seed,
            workers,
            replications,
            out,
            raw_dump,
            shrinkage_dump,
            shrinkage_e,
        } => {
            let mut cfg = load(&source)?;
            if let Some(s) = seed {
                cfg.simulation.seed = s;
            }
            if let Some(w) = workers {
                cfg.simulation.workers = w;
            }
            if let Some(r) = replications {
                cfg.simulation.replications = r;
            }
            if raw_dump.is_some() {
                cfg.output.raw_dump = true;
            }
            let studies = cfg.studies()?;
            if shrinkage_dump.is_some() && cfg.simulation.study != StudyKind::RmseSweep {
                return Err(Error::Config("--shrinkage-dump needs an rmse_sweep study".into()));
            }
            let mut comments = vec![format!("seed={}", cfg.simulation.seed)];
            for s in &studies {
                comments.extend(
                    s.header_lines()
                        .into_iter()
                        .skip(2)
                        .map(|l| format!("{}: {l}", s.config.name)),
                );
            }
            let reports = studies
                .iter()
                .map(|s| run_study(&s.config))
                .collect::<stratvar::Result<Vec<_>>>()?;
            let out_path = out.or_else(|| cfg.output.path.as_ref().map(PathBuf::from));
            let mut w = output(out_path.as_deref())?;
            csvio::write_report(&mut w, &reports, &comments)?;
            w.flush()?;
            if let Some(path) = raw_dump {
                let mut w = create(&path)?;
                csvio::write_raw(&mut w, &reports, &comments)?;
                w.flush()?;
            }
            if let Some(path) = shrinkage_dump {
                let blocks = studies
                    .iter()
                    .map(|s| Ok((s.config.name.clone(), shrinkage_diagnostics(&s.config, shrinkage_e)?)))
                    .collect::<stratvar::Result<Vec<_>>>()?;
                let mut c = comments.clone();
                c.push(format!("e={shrinkage_e}"));
                let mut w = create(&path)?;
                csvio::write_shrinkage(&mut w, &blocks, &c)?;
                w.flush()?;
            }
        }
        Command::Presets { action } => {
            let mut w = BufWriter::new(io::stdout().lock());
            match action {
                PresetAction::List => {
                    for name in config::preset_names() {
                        writeln!(w, "{name}")?;
                    }
                }
                PresetAction::Show { name } => {
                    let src = config::preset_source(&name)
                        .ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
                    w.write_all(src.as_bytes())?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stratvar: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
