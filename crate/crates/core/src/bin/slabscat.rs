use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slabscat::cli::{self, Loaded};
use slabscat::sbr::RssMode;

#[derive(Parser)]
#[command(name = "slabscat", version, about = "Rough-slab scattering, model fitting and indoor ray tracing")]
struct Args {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random height profile.
    GenSurface {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the FDTD solver on a flat or rough slab.
    Fdtd {
        #[arg(long)]
        config: PathBuf,
        /// Average over the configured number of realizations.
        #[arg(long)]
        ensemble: bool,
        /// Steady-state tolerance on the probe phasors.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Fit scattering models to pattern files.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Relative MSE margin within which the simpler family wins.
        #[arg(long)]
        parsimony: Option<f64>,
        /// Diffuse-to-specular peak ratio from which a hybrid model is kept.
        #[arg(long)]
        diffuse_ratio: Option<f64>,
        /// Widest half-power beam (deg) still counted as specular.
        #[arg(long)]
        specular_max_fwhm: Option<f64>,
    },
    /// Trace a scene onto a receiver grid.
    Raytrace {
        #[arg(long)]
        config: PathBuf,
        /// flat, attenuation-only or with-diffuse.
        #[arg(long)]
        mode: Option<RssMode>,
    },
    /// Run the built-in oracle suite.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report here.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        tmm_tolerance_db: Option<f64>,
        #[arg(long)]
        friis_tolerance_db: Option<f64>,
        #[arg(long)]
        passivity_limit: Option<f64>,
        #[arg(long)]
        sidelobe_min_db: Option<f64>,
    },
}

fn run(args: Args) -> slabscat::Result<bool> {
    if let Some(j) = args.jobs {
        if j == 0 {
            return Err(slabscat::Error::invalid("jobs", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| slabscat::Error::Config(e.to_string()))?;
    }
    match args.command {
        Command::GenSurface { config } => {
            let out = cli::cmd_gen_surface(&Loaded::from_file(&config)?)?;
            println!("{}", out.display());
        }
        Command::Fdtd { config, ensemble, tolerance } => {
            let mut run: Loaded<cli::FdtdConfig> = Loaded::from_file(&config)?;
            if let Some(t) = tolerance {
                run.config.numerics.tolerance = t;
            }
            let out = cli::cmd_fdtd(&run, ensemble)?;
            println!(
                "specular |R| {:.6} |T| {:.6}",
                out.reflection.specular(),
                out.transmission.specular()
            );
            for p in out.written {
                println!("{}", p.display());
            }
        }
        Command::Fit { config, parsimony, diffuse_ratio, specular_max_fwhm } => {
            let mut run: Loaded<cli::FitConfig> = Loaded::from_file(&config)?;
            let f = &mut run.config.fit;
            f.parsimony = parsimony.unwrap_or(f.parsimony);
            f.diffuse_ratio = diffuse_ratio.unwrap_or(f.diffuse_ratio);
            f.specular_max_fwhm_deg = specular_max_fwhm.unwrap_or(f.specular_max_fwhm_deg);
            let set = cli::cmd_fit(&run)?;
            for e in &set.entries {
                println!("{} {} {}", e.model.kind.as_str(), e.theta_i_deg, e.model.family().code());
            }
        }
        Command::Raytrace { config, mode } => {
            let map = cli::cmd_raytrace(&Loaded::from_file(&config)?, mode)?;
            let reached = map.rss_dbm.iter().filter(|v| v.is_finite()).count();
            println!("{reached}/{} receivers reached", map.rss_dbm.len());
        }
        Command::Validate {
            config,
            output,
            tmm_tolerance_db,
            friis_tolerance_db,
            passivity_limit,
            sidelobe_min_db,
        } => {
            let mut run: Loaded<cli::ValidateConfig> = match config {
                Some(p) => Loaded::from_file(&p)?,
                None => Loaded::from_text(String::new(), PathBuf::new())?,
            };
            let c = &mut run.config;
            c.tmm_tolerance_db = tmm_tolerance_db.unwrap_or(c.tmm_tolerance_db);
            c.friis_tolerance_db = friis_tolerance_db.unwrap_or(c.friis_tolerance_db);
            c.passivity_limit = passivity_limit.unwrap_or(c.passivity_limit);
            c.sidelobe_min_db = sidelobe_min_db.unwrap_or(c.sidelobe_min_db);
            let report = cli::cmd_validate(&run, output.as_deref())?;
            print!("{}", report.to_text());
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e))
        }
    }
}
