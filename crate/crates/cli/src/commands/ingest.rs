//! `fair ingest-visa`: reorganizes the official VisA tree into the
//! MVTec-style layout the rest of the tooling expects.

use clap::Args;
use std::path::PathBuf;

use fair_core::Result;

use crate::dataset::ingest_visa;

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// VisA root (must contain split_csv/1cls.csv).
    #[arg(long)]
    pub src: PathBuf,
    /// Output root for the reorganized categories.
    #[arg(long)]
    pub dst: PathBuf,
    /// Restrict ingestion to one category.
    #[arg(long)]
    pub category: Option<String>,
}

pub fn run(args: &IngestArgs) -> Result<i32> {
    let copied = ingest_visa(&args.src, &args.dst, args.category.as_deref())?;
    eprintln!("copied {copied} files into {}", args.dst.display());
    Ok(0)
}
