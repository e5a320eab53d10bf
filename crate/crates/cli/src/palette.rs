//! Fixed prediction palette and indexed PNG output.

use crate::CliError;
use hsiseg_core::{LabelMap, IGNORE_ID};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

/// Colors of class ids 0..19; higher ids reuse them cyclically.
pub const BASE_COLORS: [[u8; 3]; 19] = [
    [128, 64, 128],
    [244, 35, 232],
    [70, 70, 70],
    [102, 102, 156],
    [190, 153, 153],
    [153, 153, 153],
    [250, 170, 30],
    [220, 220, 0],
    [107, 142, 35],
    [152, 251, 152],
    [70, 130, 180],
    [220, 20, 60],
    [255, 0, 0],
    [0, 0, 142],
    [0, 0, 70],
    [0, 60, 100],
    [0, 80, 100],
    [0, 0, 230],
    [119, 11, 32],
];

/// Color of the ignore id.
pub const IGNORE_COLOR: [u8; 3] = [0, 0, 0];

/// The full 256-entry palette.
pub fn palette() -> Vec<u8> {
    (0..=255u8)
        .flat_map(|i| if i == IGNORE_ID { IGNORE_COLOR } else { BASE_COLORS[i as usize % BASE_COLORS.len()] })
        .collect()
}

/// Writes `labels` as an 8-bit indexed PNG whose pixel values are the raw
/// class ids.
pub fn write_label_png(path: &Path, labels: &LabelMap) -> Result<(), CliError> {
    let file = File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), labels.width() as u32, labels.height() as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_palette(palette());
    let png_err = |e: png::EncodingError| CliError::input(format!("{}: {e}", path.display()));
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(labels.labels()).map_err(png_err)?;
    w.finish().map_err(png_err)?;
    Ok(())
}

/// Reads back the raw ids of an indexed PNG written by [`write_label_png`].
pub fn read_label_png(path: &Path) -> Result<LabelMap, CliError> {
    let dec = png::Decoder::new(std::io::BufReader::new(File::open(path)?));
    let bad = |e: png::DecodingError| CliError::input(format!("{}: {e}", path.display()));
    let mut reader = dec.read_info().map_err(bad)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Indexed || info.bit_depth != png::BitDepth::Eight {
        return Err(CliError::input(format!("{}: not an 8-bit indexed image", path.display())));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(w * h)];
    let frame = reader.next_frame(&mut buf).map_err(bad)?;
    buf.truncate(frame.buffer_size());
    Ok(LabelMap::new(h, w, buf)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_has_256_entries_and_distinct_base_colors() {
        let p = palette();
        assert_eq!(p.len(), 256 * 3);
        let mut seen = BASE_COLORS.to_vec();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 19);
        assert_eq!(&p[255 * 3..], &IGNORE_COLOR);
    }

    #[test]
    fn png_round_trip_keeps_raw_ids() {
        let dir = tempfile::tempdir().unwrap();
        let labels = LabelMap::new(3, 5, vec![0, 1, 2, 18, 19, 255, 7, 7, 7, 0, 1, 2, 3, 4, 5]).unwrap();
        let path = dir.path().join("x.png");
        write_label_png(&path, &labels).unwrap();
        assert_eq!(read_label_png(&path).unwrap(), labels);
    }
}
