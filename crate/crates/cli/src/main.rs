use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scatterloc::config::{FrameDtype, RunConfig};
use scatterloc::io::{
    cmd_bench, cmd_evaluate, cmd_reconstruct, cmd_simulate, exit_code, rerun, ReconstructInputs, RunManifest,
    MANIFEST_FILE,
};
use scatterloc::{Error, Result};

/// Joint refractive-index reconstruction and emitter localization.
#[derive(Parser)]
#[command(name = "scatterloc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML). The desk protocol is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (evaluate: output JSON file).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dtype {
    F64,
    U32,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a phantom, emitters and noisy biplane frames.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Sample type of the frame file (default from the config).
        #[arg(long, value_enum)]
        frame_dtype: Option<Dtype>,
    },
    /// Reconstruct volume and emitters from a frame file.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        frames: PathBuf,
        /// Background file; estimated from the frames when omitted.
        #[arg(long)]
        backgrounds: Option<PathBuf>,
        /// Emitter CSV used instead of the localizer.
        #[arg(long)]
        positions: Option<PathBuf>,
        /// Keep the provided emitters fixed and reconstruct the volume only.
        #[arg(long, requires = "positions")]
        frozen_positions: bool,
    },
    /// Compare a reconstruction directory against a truth directory.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        recon: PathBuf,
    },
    /// Run the init-only / joint / true-position comparison.
    Bench {
        #[command(flatten)]
        common: Common,
    },
    /// Run a command again from its manifest.
    Rerun {
        /// Manifest file, or the output directory holding it.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            writeln!(
                buf,
                "level={} module={} msg={:?}",
                record.level(),
                record.module_path().unwrap_or("-"),
                record.args().to_string()
            )
        })
        .init();
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn load_config(common: &Common) -> Result<RunConfig> {
    set_threads(common.threads)?;
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn report_manifest(m: &RunManifest, out: &Path) -> i32 {
    let path = out.join(MANIFEST_FILE);
    match &m.error {
        Some(e) => log::error!("run finished with errors: {e} manifest={}", path.display()),
        None => log::info!("run finished manifest={}", path.display()),
    }
    println!("{}", path.display());
    m.exit_code
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate { common, frame_dtype } => {
            let config = load_config(&common)?;
            let dtype = frame_dtype.map(|d| match d {
                Dtype::F64 => FrameDtype::F64,
                Dtype::U32 => FrameDtype::U32,
            });
            let m = cmd_simulate(&config, dtype, &common.out)?;
            Ok(report_manifest(&m, &common.out))
        }
        Command::Reconstruct {
            common,
            frames,
            backgrounds,
            positions,
            frozen_positions,
        } => {
            let config = load_config(&common)?;
            let inputs = ReconstructInputs {
                frames,
                backgrounds,
                positions,
                frozen_positions,
            };
            let m = cmd_reconstruct(&config, &inputs, &common.out)?;
            Ok(report_manifest(&m, &common.out))
        }
        Command::Evaluate { common, truth, recon } => {
            let config = load_config(&common)?;
            let e = cmd_evaluate(&config, &truth, &recon, &common.out)?;
            println!("{}", serde_json::to_string(&e).map_err(Error::from)?);
            Ok(0)
        }
        Command::Bench { common } => {
            let config = load_config(&common)?;
            let (report, m) = cmd_bench(&config, &common.out)?;
            for arm in &report.arms {
                log::info!(
                    "arm={} ssim={:?} rmse_3d_um={:?} error={:?}",
                    arm.name,
                    arm.ssim,
                    arm.rmse_3d_um,
                    arm.error
                );
            }
            Ok(report_manifest(&m, &common.out))
        }
        Command::Rerun { manifest, out, threads } => {
            set_threads(threads)?;
            let path = if manifest.is_dir() { manifest.join(MANIFEST_FILE) } else { manifest };
            let m = rerun(&RunManifest::load(&path)?, &out)?;
            Ok(report_manifest(&m, &out))
        }
    }
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
