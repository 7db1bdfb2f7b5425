//! Binary graymap (P5) and pixmap (P6) dumps of attack results.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

use crate::classifier::container::write_file;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `round(255 · v)` after clamping to `[0, 1]`.
pub fn quantize(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

/// Encodes an `[h, w, 1]` or `[h, w, 3]` image in `[0, 1]` as P5 or P6.
pub fn encode(img: &Tensor) -> Result<Vec<u8>> {
    let &[h, w, c] = img.shape() else {
        return Err(Error::dim("pnm", format!("expected [h, w, c], got {:?}", img.shape())));
    };
    let (subtype, color) = match c {
        1 => (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8),
        3 => (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8),
        _ => return Err(Error::dim("pnm", format!("{c} channels; only 1 or 3 can be written"))),
    };
    let pixels: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(subtype)
        .write_image(&pixels, w as u32, h as u32, color)
        .map_err(|e| Error::Contract(format!("pnm encoding failed: {e}")))?;
    Ok(out)
}

/// Decodes P5 or P6 bytes to `[h, w, c]` with values `byte / 255`.
pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let img = image::load(Cursor::new(bytes), ImageFormat::Pnm).map_err(|e| Error::Format {
        offset: 0,
        detail: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (c, raw) = if img.color().has_color() {
        (3, img.into_rgb8().into_raw())
    } else {
        (1, img.into_luma8().into_raw())
    };
    Tensor::new(&[h, w, c], raw.into_iter().map(|b| f64::from(b) / 255.0).collect())
}

pub fn write(img: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode(img)?)
}

pub fn read(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Writes `<prefix>-original`, `-adversarial`, `-diff` and `-mask`.
///
/// The difference image is `|x_adv - x|` divided by its maximum, so the
/// smallest visible change is still bright; an unchanged image stays black.
/// Returns the written paths.
pub fn dump_images(x: &Tensor, x_adv: &Tensor, mask: &Tensor, prefix: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let diff = x_adv.zip_map(x, |a, b| (a - b).abs())?;
    let peak = diff.max_abs();
    let diff = if peak > 0.0 { diff.map(|d| d / peak) } else { diff };
    mask.expect_same_shape("dump_images", x)?;
    let ext = if x.shape().get(2) == Some(&3) { "ppm" } else { "pgm" };
    let prefix = prefix.as_ref().to_string_lossy().into_owned();
    let mut paths = Vec::new();
    for (name, img) in [("original", x), ("adversarial", x_adv), ("diff", &diff), ("mask", mask)] {
        let path = PathBuf::from(format!("{prefix}-{name}.{ext}"));
        write(img, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_quantization() {
        let img = Tensor::new(&[1, 3, 1], vec![0.0, 0.5, 1.0]).unwrap();
        let bytes = encode(&img).unwrap();
        assert!(bytes.starts_with(b"P5"));
        assert_eq!(&bytes[bytes.len() - 3..], &[0, 128, 255]);
        let rgb = encode(&Tensor::full(&[2, 2, 3], 0.2)).unwrap();
        assert!(rgb.starts_with(b"P6"));
        assert!(encode(&Tensor::zeros(&[2, 2, 2])).is_err());
    }

    #[test]
    fn round_trip_is_quantized_exactly() {
        let mask = Tensor::from_fn(&[4, 5, 1], |i| if i % 3 == 0 { 1.0 } else { 0.0 });
        assert_eq!(decode(&encode(&mask).unwrap()).unwrap(), mask);
        let rgb = Tensor::from_fn(&[3, 2, 3], |i| i as f64 / 17.0);
        let back = decode(&encode(&rgb).unwrap()).unwrap();
        for (a, b) in rgb.data().iter().zip(back.data()) {
            assert_eq!(quantize(*a), (b * 255.0).round() as u8);
        }
    }

    #[test]
    fn dumps() {
        let dir = tempfile::tempdir().unwrap();
        let x = Tensor::full(&[4, 4, 1], 0.4);
        let paths = dump_images(&x, &x, &Tensor::ones(&[4, 4, 1]), dir.path().join("nested/img")).unwrap();
        assert_eq!(paths.len(), 4);
        assert!(read(&paths[2]).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(read(&paths[3]).unwrap().data().iter().all(|&v| v == 1.0));
        assert!(decode(b"P5 garbage").is_err());
    }
}
