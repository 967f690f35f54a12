use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use obbfuse::annotations::{read_label_file, Modality};
use obbfuse::render::{render_overlay, OverlayStyle};

use crate::Status;

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    #[arg(long, value_name = "PATH")]
    pub image: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub labels: PathBuf,
    /// SVG output path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

pub fn run(args: &RenderArgs) -> Result<Status> {
    // The modality tag does not affect drawing.
    let labels = read_label_file(&args.labels, Modality::Fused)?;
    let svg = render_overlay(&args.image, labels.records(), &OverlayStyle::default())?;
    fs::write(&args.out, svg).with_context(|| format!("cannot write {}", args.out.display()))?;
    println!("rendered {} boxes to {}", labels.len(), args.out.display());
    Ok(Status::Success)
}
