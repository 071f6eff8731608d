//! Heightmap images for inspecting packed containers.

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::container::{close_pairs, ContainerState};
use crate::properties::AvoidanceMatrix;

fn intensity(h: i32, height: i32) -> u8 {
    ((255.0 * f64::from(h) / f64::from(height)).round()).clamp(0.0, 255.0) as u8
}

/// One pixel per cell, brightness proportional to height.
pub fn render(state: &ContainerState) -> GrayImage {
    let hm = state.heightmap();
    GrayImage::from_fn(state.width() as u32, state.length() as u32, |x, y| {
        Luma([intensity(hm.get(x as usize, y as usize), state.height())])
    })
}

/// Heightmap with fragile footprints tinted blue and footprints of objects
/// in a close avoidance pair tinted red.
pub fn render_annotated(state: &ContainerState, avoidance: &AvoidanceMatrix, avoid_distance: i32) -> RgbImage {
    let gray = render(state);
    let mut img = RgbImage::from_fn(gray.width(), gray.height(), |x, y| {
        let v = gray.get_pixel(x, y)[0];
        Rgb([v, v, v])
    });
    let mut flagged = vec![false; state.placed().len()];
    for (i, j) in close_pairs(state, avoidance, avoid_distance) {
        flagged[i] = true;
        flagged[j] = true;
    }
    for (i, p) in state.placed().iter().enumerate() {
        if !p.properties.fragile && !flagged[i] {
            continue;
        }
        for ((x, y), _, _) in p.column_spans() {
            let px = img.get_pixel_mut(x as u32, y as u32);
            if flagged[i] {
                px[0] = px[0].max(200);
            }
            if p.properties.fragile {
                px[2] = px[2].max(200);
            }
        }
    }
    img
}
