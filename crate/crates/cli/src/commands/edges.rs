use std::path::PathBuf;

use anyhow::{ensure, Result};
use clap::Args;

use obbfuse::edgeops::{mge, DEFAULT_EPS};
use obbfuse::render::{export_edge_map, load_image_tensor};

use crate::Status;

#[derive(Debug, Clone, Args)]
pub struct EdgesArgs {
    #[arg(long, value_name = "PATH")]
    pub image: PathBuf,
    /// Output file: 16-bit PNG if it ends in `.png`, 16-bit PGM otherwise.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Stabilizer added under the square root.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
}

pub fn run(args: &EdgesArgs) -> Result<Status> {
    ensure!(args.eps.is_finite() && args.eps >= 0.0, "--eps must be finite and non-negative");
    let image = load_image_tensor(&args.image)?;
    let edges = mge(&image, args.eps)?;
    export_edge_map(&edges, &args.out)?;
    println!("wrote {}x{} edge map to {}", image.width(), image.height(), args.out.display());
    Ok(Status::Success)
}
