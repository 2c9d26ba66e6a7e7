//! Binary netpbm reading and writing (P5 grayscale, P6 color).
//!
//! Only `maxval = 255` is accepted; 16-bit files are rejected rather than
//! quantized. Masks are stored as 0/255 grayscale and load back through a
//! threshold at 128, or strictly (any value other than 0 and 255 is an
//! error) when the caller wants to detect sloppy data.

use crate::error::{Error, Result};
use crate::features::Image;
use crate::transform::{Mask, RealMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

fn write_header(w: &mut impl Write, magic: &str, width: usize, height: usize) -> Result<()> {
    write!(w, "{magic}\n{width} {height}\n255\n")?;
    Ok(())
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an image: P6 for three channels, P5 for one.
pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let magic = if img.channels() == 3 { "P6" } else { "P5" };
    write_header(&mut w, magic, img.width(), img.height())?;
    let bytes: Vec<u8> = img.data().iter().map(|&v| to_byte(v)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Writes a real-valued map as 8-bit grayscale, values clamped to `[0, 1]`.
pub fn save_map(path: &Path, map: &RealMap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, "P5", map.width(), map.height())?;
    let bytes: Vec<u8> = map.data().iter().map(|&v| to_byte(v)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Writes a mask as 0/255 grayscale.
pub fn save_mask(path: &Path, mask: &Mask) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, "P5", mask.width(), mask.height())?;
    let bytes: Vec<u8> = mask.data().iter().map(|&v| v * 255).collect();
    w.write_all(&bytes)?;
    Ok(())
}

struct Parser<R: Read> {
    r: R,
    peeked: Option<u8>,
    path: String,
}

impl<R: Read> Parser<R> {
    fn fail(&self, msg: &str) -> Error {
        Error::Format(format!("{}: {msg}", self.path))
    }

    fn next_byte(&mut self) -> Result<Option<u8>> {
        if let Some(b) = self.peeked.take() {
            return Ok(Some(b));
        }
        let mut buf = [0u8; 1];
        match self.r.read(&mut buf)? {
            0 => Ok(None),
            _ => Ok(Some(buf[0])),
        }
    }

    /// Next token, skipping whitespace and `#` comments.
    fn token(&mut self) -> Result<Vec<u8>> {
        let mut tok = Vec::new();
        loop {
            match self.next_byte()? {
                None => {
                    if tok.is_empty() {
                        return Err(self.fail("unexpected end of header"));
                    }
                    return Ok(tok);
                }
                Some(b) if b.is_ascii_whitespace() => {
                    if !tok.is_empty() {
                        return Ok(tok);
                    }
                }
                Some(b'#') if tok.is_empty() => loop {
                    match self.next_byte()? {
                        None => return Err(self.fail("unexpected end of header")),
                        Some(b'\n') => break,
                        Some(_) => {}
                    }
                },
                Some(b) => tok.push(b),
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        let s = std::str::from_utf8(&tok).map_err(|_| self.fail("non-ascii header token"))?;
        s.parse::<usize>()
            .map_err(|_| self.fail(&format!("bad header number {s:?}")))
    }
}

fn read_payload(path: &Path, channels: usize) -> Result<(usize, usize, Vec<u8>)> {
    let file = File::open(path)?;
    let mut p = Parser {
        r: BufReader::new(file),
        peeked: None,
        path: path.display().to_string(),
    };
    let magic = p.token()?;
    let want: &[u8] = if channels == 3 { b"P6" } else { b"P5" };
    if magic != want {
        let got = String::from_utf8_lossy(&magic).into_owned();
        return Err(p.fail(&format!(
            "expected {} file, got magic {got:?}",
            std::str::from_utf8(want).unwrap()
        )));
    }
    let width = p.number()?;
    let height = p.number()?;
    let maxval = p.number()?;
    if maxval != 255 {
        return Err(p.fail(&format!("unsupported maxval {maxval}, only 255")));
    }
    if width == 0 || height == 0 {
        return Err(p.fail("zero image dimension"));
    }
    // Exactly one whitespace byte separates the header from the payload;
    // token() already consumed it.
    let mut data = vec![0u8; width * height * channels];
    p.r.read_exact(&mut data)
        .map_err(|_| p.fail("truncated pixel payload"))?;
    Ok((width, height, data))
}

/// Loads a grayscale (P5) or color (P6) image, values scaled to `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Image> {
    // Sniff the magic to pick the channel count.
    let mut head = [0u8; 2];
    File::open(path)?.read_exact(&mut head).map_err(|_| {
        Error::Format(format!("{}: file too short for a netpbm header", path.display()))
    })?;
    let channels = match &head {
        b"P6" => 3,
        b"P5" => 1,
        _ => {
            return Err(Error::Format(format!(
                "{}: not a binary netpbm file",
                path.display()
            )))
        }
    };
    let (w, h, bytes) = read_payload(path, channels)?;
    let data: Vec<f64> = bytes.iter().map(|&b| b as f64 / 255.0).collect();
    Image::from_vec(h, w, channels, data)
}

/// Loads a P5 mask. Strict mode rejects any pixel that is not 0 or 255;
/// otherwise values of 128 and above count as foreground.
pub fn load_mask(path: &Path, strict: bool) -> Result<Mask> {
    let (w, h, bytes) = read_payload(path, 1)?;
    if strict {
        if let Some(&bad) = bytes.iter().find(|&&b| b != 0 && b != 255) {
            return Err(Error::NonBinaryMask { value: bad });
        }
    }
    let data: Vec<u8> = bytes.iter().map(|&b| (b >= 128) as u8).collect();
    Mask::from_vec(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    #[test]
    fn color_image_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data: Vec<f64> = (0..5 * 4 * 3)
            .map(|_| rng.gen_range(0..=255) as f64 / 255.0)
            .collect();
        let img = Image::from_vec(5, 4, 3, data).unwrap();
        save_image(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn grayscale_image_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let data: Vec<f64> = (0..6).map(|i| i as f64 * 51.0 / 255.0).collect();
        let img = Image::from_vec(2, 3, 1, data).unwrap();
        save_image(&path, &img).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let mask = Mask::from_vec(2, 3, vec![1, 0, 0, 1, 1, 0]).unwrap();
        save_mask(&path, &mask).unwrap();
        assert_eq!(load_mask(&path, true).unwrap(), mask);
    }

    #[test]
    fn strict_mode_rejects_gray_pixel() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        std::fs::write(&path, b"P5\n2 1\n255\n\x07\xff").unwrap();
        match load_mask(&path, true) {
            Err(Error::NonBinaryMask { value: 7 }) => {}
            other => panic!("expected NonBinaryMask(7), got {other:?}"),
        }
        // Lenient mode thresholds at 128 instead.
        let m = load_mask(&path, false).unwrap();
        assert_eq!(m.data(), &[0, 1]);
    }

    #[test]
    fn rejects_sixteen_bit_maxval() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        std::fs::write(&path, b"P5\n1 1\n65535\n\x00\x00").unwrap();
        assert!(matches!(load_mask(&path, false), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_truncated_payload() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\n4 4\n255\nabc").unwrap();
        assert!(matches!(load_mask(&path, false), Err(Error::Format(_))));
    }

    #[test]
    fn header_comments_are_skipped() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        std::fs::write(&path, b"P5\n# made by hand\n2 1\n# more\n255\n\x00\xff").unwrap();
        let m = load_mask(&path, true).unwrap();
        assert_eq!(m.data(), &[0, 1]);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_image(Path::new("/nonexistent/x.ppm")),
            Err(Error::Io(_))
        ));
    }
}
