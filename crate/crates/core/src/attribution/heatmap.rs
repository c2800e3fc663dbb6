use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::IMAGE_SIDE;
use crate::error::{FfError, Result};

fn check_square(map: &[f64]) -> Result<()> {
    if map.len() != IMAGE_SIDE * IMAGE_SIDE {
        return Err(FfError::Shape(format!(
            "expected {} values, got {}",
            IMAGE_SIDE * IMAGE_SIDE,
            map.len()
        )));
    }
    Ok(())
}

/// Blue (negative) to white (zero) to red (positive), scaled to `±max|map|`.
pub fn diverging_rgb(map: &[f64]) -> Vec<[u8; 3]> {
    let max = map.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    map.iter()
        .map(|&v| {
            if max == 0.0 || v == 0.0 {
                return [255, 255, 255];
            }
            let fade = (255.0 * (1.0 - (v.abs() / max).min(1.0))).round() as u8;
            if v > 0.0 {
                [255, fade, fade]
            } else {
                [fade, fade, 255]
            }
        })
        .collect()
}

/// Binary PPM (`P6`) of a 28x28 signed map.
pub fn heatmap_ppm(map: &[f64]) -> Result<Vec<u8>> {
    check_square(map)?;
    let mut out = format!("P6\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n").into_bytes();
    for px in diverging_rgb(map) {
        out.extend_from_slice(&px);
    }
    Ok(out)
}

/// Binary PGM (`P5`) of a 28x28 image with values in `[0, 1]`.
pub fn grayscale_pgm(image: &[f64]) -> Result<Vec<u8>> {
    check_square(image)?;
    let mut out = format!("P5\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n").into_bytes();
    out.extend(image.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

/// 28 comma-separated rows; values round-trip exactly.
pub fn map_csv(map: &[f64]) -> Result<String> {
    check_square(map)?;
    let mut out = String::new();
    for row in map.chunks(IMAGE_SIDE) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_map_csv(text: &str) -> Result<Vec<f64>> {
    let values = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .flat_map(|l| l.split(','))
        .map(|v| v.trim().parse::<f64>().map_err(|e| FfError::Format(format!("bad map value '{v}': {e}"))))
        .collect::<Result<Vec<_>>>()?;
    check_square(&values)?;
    Ok(values)
}

/// Writes `<stem>.ppm` and `<stem>.csv` into `dir`.
pub fn render_heatmap(map: &[f64], dir: &Path, stem: &str) -> Result<()> {
    let ppm = dir.join(format!("{stem}.ppm"));
    let csv = dir.join(format!("{stem}.csv"));
    let mut f = fs::File::create(&ppm).map_err(|e| FfError::io(&ppm, e))?;
    f.write_all(&heatmap_ppm(map)?).map_err(|e| FfError::io(&ppm, e))?;
    fs::write(&csv, map_csv(map)?).map_err(|e| FfError::io(&csv, e))
}
