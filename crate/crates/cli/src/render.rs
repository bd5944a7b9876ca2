//! Grayscale heatmaps in binary PGM (P5).

use thiserror::Error;

use attrql_core::attribution::{grid_dims, AttributionMap, AttributionResult};

/// Gray level of the one-pixel column between maps of a pair or group.
pub const DIVIDER: u8 = 128;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("shape {0:?} has no 2-D interpretation")]
    NotSpatial(Vec<usize>),
}

/// Pixels of one map at input resolution, row-major. Each pixel is
/// `round(255 * |v| / max|v|)`, where `v` is the channel value of largest
/// magnitude at that pixel; an all-zero map is black.
pub fn map_pixels(map: &AttributionMap) -> Result<(usize, usize, Vec<u8>), RenderError> {
    let (channels, h, w) = grid_dims(map.shape()).ok_or_else(|| RenderError::NotSpatial(map.shape().to_vec()))?;
    let plane = h * w;
    let magnitude: Vec<f64> = (0..plane)
        .map(|p| (0..channels).map(|c| map.values()[c * plane + p].abs()).fold(0.0, f64::max))
        .collect();
    let max = magnitude.iter().copied().fold(0.0, f64::max);
    let pixels = magnitude
        .iter()
        .map(|m| if max > 0.0 { (255.0 * m / max).round() as u8 } else { 0 })
        .collect();
    Ok((h, w, pixels))
}

/// PGM bytes for a result; the maps of a pair or group sit side by side.
pub fn render_pgm(result: &AttributionResult) -> Result<Vec<u8>, RenderError> {
    let panels = result.maps().into_iter().map(map_pixels).collect::<Result<Vec<_>, _>>()?;
    let (h, w) = (panels[0].0, panels[0].1);
    let width = panels.len() * w + panels.len() - 1;
    let mut out = format!("P5\n{width} {h}\n255\n").into_bytes();
    for r in 0..h {
        for (i, (_, _, pixels)) in panels.iter().enumerate() {
            if i > 0 {
                out.push(DIVIDER);
            }
            out.extend_from_slice(&pixels[r * w..(r + 1) * w]);
        }
    }
    Ok(out)
}
