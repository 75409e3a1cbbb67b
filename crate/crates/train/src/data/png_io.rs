use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use asp_core::Image;

use super::DataError;

/// Decodes an 8-bit PNG as RGB in `[-1, 1]`; gray and alpha channels are expanded or dropped.
pub fn read_png(path: &Path) -> Result<Image, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| DataError::decode(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| DataError::decode(path, "image too large"))?];
    let info = reader.next_frame(&mut buf).map_err(|e| DataError::decode(path, e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let bytes = &buf[..info.buffer_size()];
    let src_channels = info.color_type.samples();
    let mut data = Vec::with_capacity(w * h * 3);
    for px in bytes.chunks(src_channels) {
        let rgb = match src_channels {
            1 | 2 => [px[0]; 3],
            _ => [px[0], px[1], px[2]],
        };
        data.extend(rgb.iter().map(|&v| from_u8(v)));
    }
    Image::new(h, w, 3, data).map_err(|e| DataError::decode(path, e))
}

/// Width and height from the PNG header without decoding pixels.
pub fn png_dimensions(path: &Path) -> Result<(usize, usize), DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let reader = png::Decoder::new(BufReader::new(file)).read_info().map_err(|e| DataError::decode(path, e))?;
    let info = reader.info();
    Ok((info.height as usize, info.width as usize))
}

pub fn write_png(path: &Path, image: &Image) -> Result<(), DataError> {
    let (h, w, c) = image.shape();
    let bytes: Vec<u8> = image.data().iter().map(|&v| to_u8(v)).collect();
    write_png_bytes(path, w, h, c, &bytes)
}

pub fn write_png_bytes(path: &Path, width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<(), DataError> {
    let color = match channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        c => return Err(DataError::decode(path, format!("cannot write {c}-channel PNG"))),
    };
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| DataError::decode(path, e))?;
    writer.write_image_data(bytes).map_err(|e| DataError::decode(path, e))?;
    writer.finish().map_err(|e| DataError::decode(path, e))
}

#[inline]
pub fn from_u8(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

#[inline]
pub fn to_u8(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}
