use std::path::Path;

use anyhow::{Context, Result};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use spc_rdh::SceneImage;

/// Reads an 8-bit grayscale PGM (P2 or P5) as a normalised scene.
pub fn read_pgm(path: &Path) -> Result<SceneImage> {
    let img = image::ImageReader::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .with_guessed_format()?
        .decode()
        .with_context(|| format!("decoding {}", path.display()))?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    Ok(SceneImage::from_u8(w as usize, h as usize, gray.as_raw())?)
}

/// Writes a binary (P5) PGM.
pub fn write_pgm(path: &Path, img: &SceneImage) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let enc = PnmEncoder::new(std::io::BufWriter::new(file)).with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
    enc.write_image(&img.to_u8(), img.width() as u32, img.height() as u32, ExtendedColorType::L8)?;
    Ok(())
}
