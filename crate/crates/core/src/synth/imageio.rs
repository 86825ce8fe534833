use std::path::Path;

use image::imageops::FilterType;
use image::{Rgb, RgbImage};

use super::render::{byte_to_pixel, pixel_to_byte, CHANNELS, IMAGE_SIZE};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

fn check_face(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [3, h, w] => Ok((*h, *w)),
        other => Err(Error::Shape {
            op: "image",
            detail: format!("expected [3, h, w], got {other:?}"),
        }),
    }
}

pub fn to_rgb(t: &Tensor) -> Result<RgbImage> {
    let (h, w) = check_face(t)?;
    let d = t.data();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        Rgb([0, 1, 2].map(|c| pixel_to_byte(d[c * h * w + i])))
    }))
}

pub fn from_rgb(img: &RgbImage) -> Result<Tensor> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; CHANNELS * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        let i = y as usize * w + x as usize;
        for c in 0..CHANNELS {
            data[c * h * w + i] = byte_to_pixel(px.0[c]);
        }
    }
    Tensor::new(vec![CHANNELS, h, w], data)
}

pub fn save_png(t: &Tensor, path: &Path) -> Result<()> {
    to_rgb(t)?.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Load a PNG as a `3×h×w` tensor in `[-1, 1]`.
pub fn load_png(path: &Path) -> Result<Tensor> {
    from_rgb(&image::open(path)?.to_rgb8())
}

/// Load any image, centre it on a square canvas (edge colour taken from the
/// top-left pixel), and resample to `32×32`.
pub fn load_face(path: &Path) -> Result<Tensor> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    if (w, h) == (IMAGE_SIZE as u32, IMAGE_SIZE as u32) {
        return from_rgb(&img);
    }
    let side = w.max(h);
    let fill = *img.get_pixel(0, 0);
    let mut canvas = RgbImage::from_pixel(side, side, fill);
    image::imageops::overlay(
        &mut canvas,
        &img,
        ((side - w) / 2) as i64,
        ((side - h) / 2) as i64,
    );
    let small = image::imageops::resize(
        &canvas,
        IMAGE_SIZE as u32,
        IMAGE_SIZE as u32,
        FilterType::Triangle,
    );
    from_rgb(&small)
}

/// Tile `rows × cols` same-sized faces with a one-pixel grey gutter.
pub fn montage(tiles: &[Tensor], rows: usize, cols: usize) -> Result<RgbImage> {
    if tiles.len() != rows * cols || tiles.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "montage of {rows}x{cols} needs {} tiles, got {}",
            rows * cols,
            tiles.len()
        )));
    }
    let (h, w) = check_face(&tiles[0])?;
    let (gh, gw) = ((h + 1) * rows + 1, (w + 1) * cols + 1);
    let mut out = RgbImage::from_pixel(gw as u32, gh as u32, Rgb([128, 128, 128]));
    for (k, tile) in tiles.iter().enumerate() {
        if check_face(tile)? != (h, w) {
            return Err(Error::InvalidArgument(
                "montage tiles differ in size".into(),
            ));
        }
        let (r, c) = (k / cols, k % cols);
        let img = to_rgb(tile)?;
        image::imageops::replace(
            &mut out,
            &img,
            (1 + c * (w + 1)) as i64,
            (1 + r * (h + 1)) as i64,
        );
    }
    Ok(out)
}

pub fn save_montage(tiles: &[Tensor], rows: usize, cols: usize, path: &Path) -> Result<()> {
    montage(tiles, rows, cols)?.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
