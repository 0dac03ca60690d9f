use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use linelab::harness::{run, RunConfig};
use linelab::metrics::{abs_error_image, psnr, ssim};
use linelab::{save_lineset, synth_lineset, Image, SynthKind};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "linelab", version, about = "Transparent line rendering laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render every configured technique along the flight path.
    Render {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare two PPM or PFM images.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Also write the inverted absolute error image here.
        #[arg(long)]
        error_map: Option<PathBuf>,
    },
    /// Write a synthetic line set.
    Synth {
        #[arg(long)]
        kind: SynthKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lines: Option<usize>,
        #[arg(long)]
        verts: Option<usize>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Render { config } => {
            let cfg = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let report = run(&cfg)?;
            println!(
                "{} frames, {} rows written to {}",
                report.frames,
                report.rows.len(),
                report.csv.display()
            );
        }
        Command::Metrics {
            reference,
            test,
            error_map,
        } => {
            let r = Image::load(&reference).with_context(|| format!("reading {}", reference.display()))?;
            let t = Image::load(&test).with_context(|| format!("reading {}", test.display()))?;
            println!("psnr_db {:.4}", psnr(&t, &r)?);
            match ssim(&t, &r) {
                Ok((mean, _)) => println!("ssim {mean:.6}"),
                Err(e) => println!("ssim n/a ({e})"),
            }
            if let Some(p) = error_map {
                abs_error_image(&t, &r)?.save_ppm(&p)?;
            }
        }
        Command::Synth {
            kind,
            seed,
            out,
            lines,
            verts,
        } => {
            let (def_lines, def_verts) = match kind {
                SynthKind::GridRods => (16, 16),
                SynthKind::HelixBundle => (200, 64),
                SynthKind::VortexStreamlines => (500, 64),
            };
            let set = synth_lineset(kind, seed, lines.unwrap_or(def_lines), verts.unwrap_or(def_verts))?;
            save_lineset(&set, &out).with_context(|| format!("writing {}", out.display()))?;
            println!("{} polylines, {} vertices", set.polylines.len(), set.vertices.len());
        }
    }
    Ok(())
}
