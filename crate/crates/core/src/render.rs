//! Indexed-colour frames, PNG stills and GIF animations.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::gif::{GifEncoder, Repeat};
use image::{Delay, Frame, ImageFormat, Rgb, RgbImage, RgbaImage};

use crate::config::EnvConfig;
use crate::error::{Error, Result};
use crate::grid::{CellType, Environment, AIR_NUTRIENT, EARTH_NUTRIENT};

/// Brightness steps used for Earth and Air.
pub const NUTRIENT_LEVELS: usize = 8;

const FIXED: [(CellType, [u8; 3]); 8] = [
    (CellType::Void, [12, 12, 16]),
    (CellType::Immovable, [70, 70, 78]),
    (CellType::Sun, [250, 220, 90]),
    (CellType::OutOfBounds, [255, 0, 255]),
    (CellType::AgentUnspecialized, [200, 200, 200]),
    (CellType::AgentRoot, [190, 100, 30]),
    (CellType::AgentLeaf, [40, 170, 60]),
    (CellType::AgentFlower, [235, 90, 200]),
];

const EARTH_DARK: [u8; 3] = [58, 38, 22];
const EARTH_BRIGHT: [u8; 3] = [176, 128, 72];
const AIR_DARK: [u8; 3] = [26, 36, 62];
const AIR_BRIGHT: [u8; 3] = [150, 200, 250];

const EARTH_BASE: u8 = FIXED.len() as u8;
const AIR_BASE: u8 = EARTH_BASE + NUTRIENT_LEVELS as u8;

fn lerp(a: [u8; 3], b: [u8; 3], t: f64) -> [u8; 3] {
    let mut out = [0; 3];
    for i in 0..3 {
        out[i] = (a[i] as f64 + (b[i] as f64 - a[i] as f64) * t).round() as u8;
    }
    out
}

/// The full palette; frame bytes index into it.
pub fn palette() -> Vec<[u8; 3]> {
    let mut p: Vec<[u8; 3]> = FIXED.iter().map(|(_, c)| *c).collect();
    let t = |i: usize| i as f64 / (NUTRIENT_LEVELS - 1) as f64;
    p.extend((0..NUTRIENT_LEVELS).map(|i| lerp(EARTH_DARK, EARTH_BRIGHT, t(i))));
    p.extend((0..NUTRIENT_LEVELS).map(|i| lerp(AIR_DARK, AIR_BRIGHT, t(i))));
    p
}

fn level(amount: f64, max: f64) -> u8 {
    if max <= 0.0 {
        return 0;
    }
    let x = (amount / max).clamp(0.0, 1.0);
    (x * (NUTRIENT_LEVELS - 1) as f64).round() as u8
}

/// Palette index of one cell.
pub fn cell_index(kind: CellType, state: &[f64], max_nutrient: f64) -> u8 {
    match kind {
        CellType::Earth => EARTH_BASE + level(state[EARTH_NUTRIENT], max_nutrient),
        CellType::Air => AIR_BASE + level(state[AIR_NUTRIENT], max_nutrient),
        k => FIXED.iter().position(|(t, _)| *t == k).unwrap() as u8,
    }
}

/// Row-major palette indices of the whole grid.
pub fn frame_indices(env: &Environment, config: &EnvConfig) -> Vec<u8> {
    (0..env.len())
        .map(|i| cell_index(env.type_at(i), env.state_at(i), config.max_nutrient_cell))
        .collect()
}

/// Expand indices into an RGB image, each cell drawn as a `scale × scale` block.
pub fn indices_to_image(indices: &[u8], width: usize, height: usize, scale: u32) -> RgbImage {
    let pal = palette();
    let scale = scale.max(1);
    RgbImage::from_fn(width as u32 * scale, height as u32 * scale, |x, y| {
        let i = (y / scale) as usize * width + (x / scale) as usize;
        Rgb(pal[indices[i] as usize])
    })
}

pub fn render_frame(env: &Environment, config: &EnvConfig) -> RgbImage {
    indices_to_image(&frame_indices(env, config), env.width(), env.height(), 1)
}

pub fn write_png(path: &Path, image: &RgbImage) -> Result<()> {
    image
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Write frames as a looping GIF, `delay_ms` apart.
pub fn write_gif(
    path: &Path,
    frames: &[Vec<u8>],
    width: usize,
    height: usize,
    scale: u32,
    delay_ms: u32,
) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut enc = GifEncoder::new(file);
    let io = |e: image::ImageError| Error::Io(std::io::Error::other(e));
    enc.set_repeat(Repeat::Infinite).map_err(io)?;
    for f in frames {
        let rgb = indices_to_image(f, width, height, scale);
        let rgba = RgbaImage::from_fn(rgb.width(), rgb.height(), |x, y| {
            let p = rgb.get_pixel(x, y).0;
            image::Rgba([p[0], p[1], p[2], 255])
        });
        enc.encode_frame(Frame::from_parts(rgba, 0, 0, Delay::from_numer_denom_ms(delay_ms, 1)))
            .map_err(io)?;
    }
    Ok(())
}
