//! PNG and JSON file formats for images, masks and polygon labels.

use std::path::Path;

use image::{ColorType, DynamicImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use super::{BinaryMask, GrayImage, ImagingError, Polygon};

#[derive(Serialize, Deserialize)]
struct PolygonFile {
    polygons: Vec<Polygon>,
}

pub fn save_gray_png(img: &GrayImage, path: &Path) -> Result<(), ImagingError> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec()).expect("buffer size");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Loads a PNG as 8-bit gray; color images are averaged over RGB.
pub fn load_gray_png(path: &Path) -> Result<GrayImage, ImagingError> {
    let dynamic = image::open(path)?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let data = match dynamic.color() {
        ColorType::L8 => dynamic.into_luma8().into_raw(),
        ColorType::L16 | ColorType::La8 | ColorType::La16 => dynamic.to_luma8().into_raw(),
        _ => dynamic
            .to_rgb8()
            .pixels()
            .map(|p| ((p[0] as u16 + p[1] as u16 + p[2] as u16 + 1) / 3) as u8)
            .collect(),
    };
    GrayImage::new(w, h, data)
}

pub fn save_mask_png(mask: &BinaryMask, path: &Path) -> Result<(), ImagingError> {
    let data = mask.bits().iter().map(|b| if *b { 255 } else { 0 }).collect();
    save_gray_png(&GrayImage::new(mask.width(), mask.height(), data)?, path)
}

/// Loads a {0, 255} mask PNG; any other value is an error.
pub fn load_mask_png(path: &Path) -> Result<BinaryMask, ImagingError> {
    let dynamic: DynamicImage = image::open(path)?;
    let gray = dynamic.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let mut bits = Vec::with_capacity(w * h);
    for v in gray.into_raw() {
        match v {
            0 => bits.push(false),
            255 => bits.push(true),
            other => {
                return Err(ImagingError::Dimensions(format!("mask {} holds value {other}", path.display())));
            }
        }
    }
    BinaryMask::from_bits(w, h, bits)
}

pub fn save_polygons(polygons: &[Polygon], path: &Path) -> Result<(), ImagingError> {
    let text = serde_json::to_string(&PolygonFile { polygons: polygons.to_vec() })?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_polygons(path: &Path) -> Result<Vec<Polygon>, ImagingError> {
    let file: PolygonFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    for p in &file.polygons {
        p.validate()?;
    }
    Ok(file.polygons)
}

/// Loads an image with its paired mask, failing when their sizes differ.
pub fn load_image_with_mask(image: &Path, mask: &Path) -> Result<(GrayImage, BinaryMask), ImagingError> {
    let img = load_gray_png(image)?;
    let m = load_mask_png(mask)?;
    if m.width() != img.width() || m.height() != img.height() {
        return Err(ImagingError::Dimensions(format!(
            "mask {}x{} does not match image {}x{}",
            m.width(),
            m.height(),
            img.width(),
            img.height()
        )));
    }
    Ok((img, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_and_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::new(3, 2, vec![0, 10, 20, 30, 40, 255]).unwrap();
        save_gray_png(&img, &dir.path().join("i.png")).unwrap();
        assert_eq!(load_gray_png(&dir.path().join("i.png")).unwrap(), img);

        let mask = BinaryMask::from_fn(3, 2, |x, y| x == y);
        save_mask_png(&mask, &dir.path().join("m.png")).unwrap();
        let (_, back) = load_image_with_mask(&dir.path().join("i.png"), &dir.path().join("m.png")).unwrap();
        assert_eq!(back, mask);

        let polys = vec![Polygon::new(vec![[0.0, 0.0], [2.5, 0.0], [1.0, 1.5]]).unwrap()];
        save_polygons(&polys, &dir.path().join("p.json")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("p.json")).unwrap();
        assert!(text.starts_with("{\"polygons\":[[[0.0,0.0],"), "{text}");
        assert_eq!(load_polygons(&dir.path().join("p.json")).unwrap(), polys);
    }

    #[test]
    fn mismatched_mask_fails() {
        let dir = tempfile::tempdir().unwrap();
        save_gray_png(&GrayImage::filled(4, 4, 9), &dir.path().join("i.png")).unwrap();
        save_mask_png(&BinaryMask::new(3, 4), &dir.path().join("m.png")).unwrap();
        assert!(load_image_with_mask(&dir.path().join("i.png"), &dir.path().join("m.png")).is_err());
    }
}
