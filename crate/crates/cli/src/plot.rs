//! Rendering helpers: line plots, anomaly heatmap overlays, raw map dumps.
//!
//! Display normalization happens only here; raw map values are persisted
//! separately (as `.npy`) so presentation never touches metrics.

use ndarray::Array2;
use plotters::prelude::*;
use std::io::Write;
use std::path::Path;
use std::sync::LazyLock;

use fair_core::imagecore::Image;
use fair_core::{Error, Result};

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::data(format!("plot rendering: {e}"))
}

/// Text rendering needs a registered font; charts degrade to label-free
/// when none of the usual system fonts is present.
static FONT_AVAILABLE: LazyLock<bool> = LazyLock::new(|| {
    let candidates = [
        "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
        "/usr/share/fonts/TTF/DejaVuSans.ttf",
        "/usr/share/fonts/dejavu/DejaVuSans.ttf",
        "/Library/Fonts/Arial Unicode.ttf",
    ];
    for path in candidates {
        if let Ok(bytes) = std::fs::read(path) {
            let leaked: &'static [u8] = Box::leak(bytes.into_boxed_slice());
            if plotters::style::register_font("sans-serif", FontStyle::Normal, leaked).is_ok() {
                return true;
            }
        }
    }
    false
});

/// Renders one or more named series as a line chart.
pub fn line_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, Vec<(f64, f64)>)],
) -> Result<()> {
    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().copied())
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    if points.is_empty() {
        return Err(Error::invalid_argument("nothing to plot"));
    }
    let (mut x_min, mut x_max, mut y_min, mut y_max) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &points {
        x_min = x_min.min(*x);
        x_max = x_max.max(*x);
        y_min = y_min.min(*y);
        y_max = y_max.max(*y);
    }
    if x_min == x_max {
        x_max += 1.0;
    }
    if y_min == y_max {
        y_max += 1.0;
    }
    let pad = (y_max - y_min) * 0.05;

    let with_text = *FONT_AVAILABLE;
    let root = BitMapBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut builder = ChartBuilder::on(&root);
    if with_text {
        builder
            .caption(title, ("sans-serif", 22))
            .x_label_area_size(40)
            .y_label_area_size(56);
    }
    let mut chart = builder
        .margin(12)
        .build_cartesian_2d(x_min..x_max, (y_min - pad)..(y_max + pad))
        .map_err(plot_err)?;
    let mut mesh = chart.configure_mesh();
    if with_text {
        mesh.x_desc(x_label).y_desc(y_label);
    } else {
        mesh.disable_axes();
    }
    mesh.draw().map_err(plot_err)?;
    let palette = [&BLUE, &RED, &GREEN, &MAGENTA, &CYAN, &BLACK];
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = palette[i % palette.len()];
        chart
            .draw_series(LineSeries::new(
                pts.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).copied(),
                color,
            ))
            .map_err(plot_err)?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    if series.len() > 1 && with_text {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}

fn jet(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let r = (1.5 - (4.0 * t - 3.0).abs()).clamp(0.0, 1.0);
    let g = (1.5 - (4.0 * t - 2.0).abs()).clamp(0.0, 1.0);
    let b = (1.5 - (4.0 * t - 1.0).abs()).clamp(0.0, 1.0);
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}

/// Blends a per-image min-max-normalized heatmap over the input (display
/// only; raw values are saved separately).
pub fn heatmap_overlay(img: &Image, map: &Array2<f64>, path: &Path) -> Result<()> {
    let (h, w) = map.dim();
    if (img.height(), img.width()) != (h, w) {
        return Err(Error::invalid_argument("overlay dimension mismatch"));
    }
    let min = map.iter().copied().fold(f64::INFINITY, f64::min);
    let max = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = (max - min).max(1e-12);
    let mut out = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let heat = jet((map[[y, x]] - min) / range);
            let mut px = [0u8; 3];
            for c in 0..3 {
                let base = if img.channels() == 3 {
                    img.data()[[y, x, c]]
                } else {
                    img.data()[[y, x, 0]]
                };
                px[c] = ((base * 0.5 + heat[c] as f64 / 255.0 * 0.5) * 255.0).round() as u8;
            }
            out.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    out.save(path)?;
    Ok(())
}

/// Renders a signed 2D array as a min-max normalized grayscale PNG.
pub fn array_png(map: &Array2<f64>, path: &Path) -> Result<()> {
    let (h, w) = map.dim();
    let min = map.iter().copied().fold(f64::INFINITY, f64::min);
    let max = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = (max - min).max(1e-12);
    let mut out = image::GrayImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let v = ((map[[y, x]] - min) / range * 255.0).round() as u8;
            out.put_pixel(x as u32, y as u32, image::Luma([v]));
        }
    }
    out.save(path)?;
    Ok(())
}

/// Writes a 2D array as a little-endian f32 `.npy` (format version 1.0).
pub fn save_npy(map: &Array2<f64>, path: &Path) -> Result<()> {
    let (h, w) = map.dim();
    let header_body = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': ({h}, {w}), }}");
    // Header (incl. magic and length field) must pad to a multiple of 64.
    let base_len = 10 + header_body.len() + 1;
    let padding = (64 - base_len % 64) % 64;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(b"\x93NUMPY\x01\x00")?;
    let header_len = (header_body.len() + padding + 1) as u16;
    file.write_all(&header_len.to_le_bytes())?;
    file.write_all(header_body.as_bytes())?;
    file.write_all(&vec![b' '; padding])?;
    file.write_all(b"\n")?;
    for v in map.iter() {
        file.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Writes `(x, value)` rows as a two-column CSV.
pub fn write_csv(path: &Path, header: &str, rows: &[(f64, f64)]) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for (x, v) in rows {
        text.push_str(&format!("{x},{v}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}
