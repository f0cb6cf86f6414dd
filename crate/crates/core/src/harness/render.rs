use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::denoiser::TokenSequence;
use crate::error::{LadrError, Result};

/// Fixed 16-colour palette; token `v` uses entry `v % 16`.
pub const PALETTE: [[u8; 3]; 16] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [128, 0, 0],
    [255, 255, 255],
];

pub fn palette_color(token: u32) -> [u8; 3] {
    PALETTE[token as usize % PALETTE.len()]
}

/// Binary PPM (P6) bytes with one pixel per token.
pub fn render_grid(tokens: &TokenSequence, height: usize, width: usize) -> Result<Vec<u8>> {
    if tokens.len() != height * width {
        return Err(LadrError::InvalidInput(format!(
            "{} tokens do not fill a {height}x{width} image",
            tokens.len()
        )));
    }
    if !tokens.is_fully_decoded() {
        return Err(LadrError::InvalidInput(
            "cannot render a sequence that still holds mask tokens".into(),
        ));
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.reserve(tokens.len() * 3);
    for &t in tokens.tokens() {
        out.extend_from_slice(&palette_color(t));
    }
    Ok(out)
}

pub fn write_ppm(path: impl AsRef<Path>, tokens: &TokenSequence, height: usize, width: usize) -> Result<()> {
    let bytes = render_grid(tokens, height, width)?;
    let path = path.as_ref();
    let io = |e| LadrError::io(path.display().to_string(), e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    out.write_all(&bytes).map_err(io)?;
    out.flush().map_err(io)
}
