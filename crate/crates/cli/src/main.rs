use std::process::ExitCode;

use clap::Parser;
use spmrf_cli::args::{Cli, Command};
use spmrf_cli::commands::{self, CALIBRATION_FILE};
use spmrf_cli::output::{sig4, write_json};
use spmrf_cli::Result;

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(args) => {
            let cfg = args.resolve()?;
            let fit = commands::fit(&cfg)?;
            print!("{}", commands::fit_report(&cfg, &fit));
            println!(
                "ESS per CPU second: min {}, mean {}",
                sig4(fit.summary.min_ess_per_sec),
                sig4(fit.summary.mean_ess_per_sec)
            );
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Calibrate(args) => {
            let report = match args.upper {
                Some(upper) => {
                    let k = spmrf_cli::config::parse_order(args.data.order.unwrap_or(1))?;
                    let alpha = args.data.alpha.unwrap_or(spmrf::calibrate::DEFAULT_ALPHA);
                    commands::calibrate_direct(upper, args.sigma_ref, args.omega2, args.n, k, alpha)?
                }
                None => {
                    let fit = spmrf_cli::args::FitArgs {
                        config: None,
                        data: args.data,
                        prior: None,
                        zeta: None,
                        sigma_scale: None,
                        formulation: None,
                        sampler: Default::default(),
                        out: None,
                        draws: false,
                    };
                    commands::calibrate_data(&fit.resolve()?)?
                }
            };
            print!("{}", report.render());
            if let Some(dir) = args.out {
                std::fs::create_dir_all(&dir)?;
                write_json(&dir.join(CALIBRATION_FILE), &report)?;
            }
        }
        Command::Simulate(args) => {
            if args.sweep_zeta {
                let (cfg, priors) = args.sweep()?;
                let fits = commands::sweep(&cfg, &priors, &args.zetas)?;
                for f in &fits {
                    let gamma = f.fit.summary.param("gamma").map_or(f64::NAN, |g| g.median);
                    println!("{} zeta {}: gamma median {}, divergences {}", f.prior, f.zeta, sig4(gamma), f.fit.summary.divergences);
                }
                println!("wrote {}", cfg.out_dir.display());
            } else {
                let cfg = args.study()?;
                let report = commands::simulate(&cfg)?;
                println!("scenario,prior,fits,failures,mad,mciw,masv,tmasv");
                for s in &report.summaries {
                    println!(
                        "{},{},{},{},{},{},{},{}",
                        s.scenario,
                        s.prior,
                        s.fits,
                        s.failures,
                        sig4(s.mad.mean),
                        sig4(s.mciw.mean),
                        sig4(s.masv.mean),
                        sig4(s.tmasv)
                    );
                }
                println!("wrote {}", cfg.out_dir.display());
            }
        }
        Command::Changepoint(args) => {
            let out = args.out.unwrap_or_else(|| args.fit_dir.clone());
            let (cp, order2) = commands::changepoint(&args.fit_dir, &out, args.link_scale)?;
            if order2 {
                eprintln!("warning: change points of an order-2 fit locate the steepest descent, not a jump");
            }
            println!("mode {}, quartiles [{}, {}], IQR {}", sig4(cp.mode), sig4(cp.q25), sig4(cp.q75), sig4(cp.iqr));
            println!("wrote {}", out.display());
        }
        Command::Diagnose(args) => {
            let s = commands::diagnose(&args.draws, &args.out)?;
            println!("parameters {}, max R-hat {}", s.params.len(), sig4(s.max_rhat));
            println!("wrote {}", args.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
