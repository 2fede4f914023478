//! `fair analyze`: frequency-domain diagnostics as CSV + PNG artifacts.
//!
//! Subcommands: `transfer` (H(D) curves), `impulse` (spatial impulse
//! responses and their ringing), `ringing` (filtered sample images per
//! family), `energy` (radial energy distribution), `freq-bias` (normal vs.
//! anomalous restoration similarity curves for a trained model).

use clap::{Args, Subcommand};
use std::path::{Path, PathBuf};

use fair_core::freqfilter::{
    energy_profile, highpass, impulse_response, make_transfer, oscillation_energy,
    radial_similarity, FilterFamily, FilterSpec, SimilarityMode,
};
use fair_core::imagecore::Image;
use fair_core::pipeline::Inference;
use fair_core::Result;

use crate::plot::{array_png, line_plot, write_csv};

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(subcommand)]
    pub cmd: AnalyzeCmd,
}

fn parse_family(s: &str) -> std::result::Result<FilterFamily, String> {
    match s.to_ascii_lowercase().as_str() {
        "ideal" => Ok(FilterFamily::Ideal),
        "gaussian" => Ok(FilterFamily::Gaussian),
        "butterworth" => Ok(FilterFamily::Butterworth),
        other => Err(format!("unknown family {other:?} (ideal|gaussian|butterworth)")),
    }
}

#[derive(Subcommand, Debug)]
pub enum AnalyzeCmd {
    /// Transfer-function curve H(D) of one filter family.
    Transfer {
        #[arg(long, value_parser = parse_family)]
        family: FilterFamily,
        #[arg(long)]
        d0: f64,
        /// Butterworth order.
        #[arg(long, default_value_t = 2)]
        n: u32,
        /// Frequency-plane size the curve is sampled for.
        #[arg(long, default_value_t = 256)]
        dims: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spatial impulse responses of all three families (ringing comparison).
    Impulse {
        #[arg(long)]
        d0: f64,
        #[arg(long, default_value_t = 2)]
        n: u32,
        #[arg(long, default_value_t = 256)]
        dims: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// High-pass filters a sample image with all three families.
    Ringing {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        d0: f64,
        #[arg(long, default_value_t = 2)]
        n: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Radial energy distribution of an image.
    Energy {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 64)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normal-vs-anomalous radial similarity curves for a trained model.
    FreqBias {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        normal: PathBuf,
        #[arg(long)]
        anomalous: PathBuf,
        #[arg(long, default_value_t = 64)]
        bins: usize,
        /// Compare magnitude spectra instead of complex coefficients.
        #[arg(long)]
        magnitude: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn spec_for(family: FilterFamily, d0: f64, n: u32) -> Result<FilterSpec> {
    FilterSpec::new(family, d0, n)
}

fn family_name(f: FilterFamily) -> &'static str {
    match f {
        FilterFamily::Ideal => "ideal",
        FilterFamily::Gaussian => "gaussian",
        FilterFamily::Butterworth => "butterworth",
    }
}

const ALL_FAMILIES: [FilterFamily; 3] =
    [FilterFamily::Ideal, FilterFamily::Butterworth, FilterFamily::Gaussian];

fn transfer(family: FilterFamily, d0: f64, n: u32, dims: usize, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let spec = spec_for(family, d0, n)?;
    let d_max = (2.0f64).sqrt() * dims as f64 / 2.0;
    let rows: Vec<(f64, f64)> = (0..=d_max.ceil() as usize)
        .map(|d| (d as f64, spec.response_at(d as f64)))
        .collect();
    let name = family_name(family);
    write_csv(&out.join(format!("transfer_{name}.csv")), "bin_center,value", &rows)?;
    line_plot(
        &out.join(format!("transfer_{name}.png")),
        &format!("{name} high-pass transfer (D0={d0})"),
        "D(u,v)",
        "H",
        &[(name, rows)],
    )?;
    Ok(())
}

fn impulse(d0: f64, n: u32, dims: usize, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let lobe = dims as f64 / d0;
    let mut energies = Vec::new();
    let mut profiles = Vec::new();
    for family in ALL_FAMILIES {
        let spec = spec_for(family, d0, n)?;
        let resp = impulse_response(&spec, (dims, dims));
        let name = family_name(family);
        array_png(&resp, &out.join(format!("impulse_{name}.png")))?;
        // Radial profile along the central row, rightward from the center.
        let cy = dims / 2;
        let profile: Vec<(f64, f64)> = (0..dims / 2)
            .map(|r| (r as f64, resp[[cy, dims / 2 + r]]))
            .collect();
        write_csv(&out.join(format!("impulse_{name}.csv")), "bin_center,value", &profile)?;
        profiles.push((name, profile));
        energies.push((family, oscillation_energy(&resp, lobe)));
    }
    line_plot(
        &out.join("impulse_profiles.png"),
        &format!("impulse responses (D0={d0})"),
        "radius (px)",
        "h",
        &profiles
            .iter()
            .map(|(n, p)| (*n, p.clone()))
            .collect::<Vec<_>>(),
    )?;
    let mut text = String::from("family,oscillation_energy\n");
    for (family, e) in energies {
        text.push_str(&format!("{},{e}\n", family_name(family)));
    }
    std::fs::write(out.join("ringing_energy.csv"), text)?;
    Ok(())
}

fn ringing(image: &Path, d0: f64, n: u32, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let img = Image::open(image)?;
    for family in ALL_FAMILIES {
        let spec = spec_for(family, d0, n)?;
        let filtered = highpass(&img, &spec);
        // Luma of the signed output, normalized for display.
        let (h, w, c) = filtered.dim();
        let mut plane = ndarray::Array2::zeros((h, w));
        for y in 0..h {
            for x in 0..w {
                let mut v = 0.0;
                for ch in 0..c {
                    v += filtered[[y, x, ch]];
                }
                plane[[y, x]] = v / c as f64;
            }
        }
        array_png(&plane, &out.join(format!("highpass_{}.png", family_name(family))))?;
    }
    Ok(())
}

fn energy(image: &Path, bins: usize, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let img = Image::open(image)?;
    let profile = energy_profile(&img, bins)?;
    let total: f64 = profile.iter().map(|b| b.value).sum();
    let rows: Vec<(f64, f64)> = profile
        .iter()
        .map(|b| (b.center, if total > 0.0 { b.value / total } else { 0.0 }))
        .collect();
    write_csv(&out.join("energy.csv"), "bin_center,value", &rows)?;
    line_plot(
        &out.join("energy.png"),
        "radial energy share",
        "D(u,v)",
        "share",
        &[("energy", rows)],
    )?;
    Ok(())
}

fn freq_bias(
    ckpt: &Path,
    normal: &Path,
    anomalous: &Path,
    bins: usize,
    magnitude: bool,
    out: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let inference = Inference::load(ckpt)?;
    let mode = if magnitude {
        SimilarityMode::Magnitude
    } else {
        SimilarityMode::Complex
    };
    let mean_curve = |dir: &Path| -> Result<Vec<(f64, f64)>> {
        let images = fair_core::pipeline::load_images_dir(dir)?;
        let mut acc: Vec<(f64, f64, usize)> = Vec::new();
        for (_, img) in &images {
            let (input, restored) = inference.restore(img)?;
            let curve = radial_similarity(&input, &restored, bins, mode)?;
            if acc.is_empty() {
                acc = curve.iter().map(|b| (b.center, 0.0, 0)).collect();
            }
            for (slot, b) in acc.iter_mut().zip(curve.iter()) {
                if b.count > 0 && b.value.is_finite() {
                    slot.1 += b.value;
                    slot.2 += 1;
                }
            }
        }
        Ok(acc
            .into_iter()
            .filter(|(_, _, n)| *n > 0)
            .map(|(c, s, n)| (c, s / n as f64))
            .collect())
    };
    let normal_curve = mean_curve(normal)?;
    let anomalous_curve = mean_curve(anomalous)?;
    write_csv(&out.join("freq_bias_normal.csv"), "bin_center,value", &normal_curve)?;
    write_csv(&out.join("freq_bias_anomalous.csv"), "bin_center,value", &anomalous_curve)?;
    line_plot(
        &out.join("freq_bias.png"),
        "restoration similarity vs. frequency",
        "D(u,v)",
        "cosine similarity",
        &[("normal", normal_curve), ("anomalous", anomalous_curve)],
    )?;
    Ok(())
}

pub fn run(args: &AnalyzeArgs) -> Result<i32> {
    match &args.cmd {
        AnalyzeCmd::Transfer { family, d0, n, dims, out } => transfer(*family, *d0, *n, *dims, out)?,
        AnalyzeCmd::Impulse { d0, n, dims, out } => impulse(*d0, *n, *dims, out)?,
        AnalyzeCmd::Ringing { image, d0, n, out } => ringing(image, *d0, *n, out)?,
        AnalyzeCmd::Energy { image, bins, out } => energy(image, *bins, out)?,
        AnalyzeCmd::FreqBias { ckpt, normal, anomalous, bins, magnitude, out } => {
            freq_bias(ckpt, normal, anomalous, *bins, *magnitude, out)?
        }
    }
    Ok(0)
}
