//! MNIST IDX files and the 14x14 binary input encoding.
//!
//! IDX layout (big-endian): `u32` magic (`0x00000803` images, `0x00000801`
//! labels), `u32` item count, for images `u32` rows and `u32` cols, then one
//! unsigned byte per pixel or label.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed::{self, Stream};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;
pub const ENCODED_SIDE: usize = SIDE / 2;
pub const ENCODED_PIXELS: usize = ENCODED_SIDE * ENCODED_SIDE;
pub const DEFAULT_THRESHOLD: f64 = 128.0;

/// 28x28 grayscale image, row-major, 0 = background.
#[derive(Clone, PartialEq, Eq)]
pub struct RawImage {
    pixels: Box<[u8; PIXELS]>,
}

impl std::fmt::Debug for RawImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ink = self.pixels.iter().filter(|&&p| p > 0).count();
        write!(f, "RawImage({ink} inked pixels)")
    }
}

impl RawImage {
    pub fn new(pixels: [u8; PIXELS]) -> Self {
        Self { pixels: Box::new(pixels) }
    }

    pub fn from_slice(pixels: &[u8]) -> Option<Self> {
        let arr: [u8; PIXELS] = pixels.try_into().ok()?;
        Some(Self::new(arr))
    }

    pub fn blank() -> Self {
        Self::new([0; PIXELS])
    }

    pub fn pixels(&self) -> &[u8; PIXELS] {
        &self.pixels
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * SIDE + col] = value;
    }
}

/// Active input neurons (row-major 14x14 indices) plus the digit label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedImage {
    pub active: Vec<usize>,
    pub label: u8,
}

/// Averages non-overlapping 2x2 blocks and keeps those with mean >= `threshold`.
pub fn encode_pixels(img: &RawImage, threshold: f64) -> Vec<usize> {
    let p = img.pixels();
    let mut active = Vec::new();
    for r in 0..ENCODED_SIDE {
        for c in 0..ENCODED_SIDE {
            let (r2, c2) = (2 * r, 2 * c);
            let sum = p[r2 * SIDE + c2] as u32
                + p[r2 * SIDE + c2 + 1] as u32
                + p[(r2 + 1) * SIDE + c2] as u32
                + p[(r2 + 1) * SIDE + c2 + 1] as u32;
            if sum as f64 / 4.0 >= threshold {
                active.push(r * ENCODED_SIDE + c);
            }
        }
    }
    active
}

pub fn encode(img: &RawImage, label: u8, threshold: f64) -> EncodedImage {
    EncodedImage {
        active: encode_pixels(img, threshold),
        label,
    }
}

fn read_header(cur: &mut Cursor<&[u8]>, what: &'static str, magic: u32, dims: usize) -> Result<Vec<u32>> {
    let len = cur.get_ref().len() as u64;
    let header = 4 * (1 + dims) as u64;
    if len < header {
        return Err(Error::Truncated { what, expected: header, found: len });
    }
    let found = cur.read_u32::<BigEndian>()?;
    if found != magic {
        return Err(Error::BadMagic { what, found, expected: magic });
    }
    (0..dims).map(|_| Ok(cur.read_u32::<BigEndian>()?)).collect()
}

fn check_payload(bytes: &[u8], what: &'static str, header: usize, payload: u64) -> Result<()> {
    let expected = header as u64 + payload;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::Truncated { what, expected, found });
    }
    if found > expected {
        return Err(Error::TrailingBytes { what, extra: found - expected });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<RawImage>> {
    let mut cur = Cursor::new(bytes);
    let dims = read_header(&mut cur, "image file", IMAGE_MAGIC, 3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    if rows as usize != SIDE || cols as usize != SIDE {
        return Err(Error::BadImageShape { rows, cols });
    }
    check_payload(bytes, "image file", 16, count as u64 * PIXELS as u64)?;
    let mut images = Vec::with_capacity(count as usize);
    let mut buf = [0u8; PIXELS];
    for _ in 0..count {
        cur.read_exact(&mut buf)?;
        images.push(RawImage::new(buf));
    }
    Ok(images)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut cur = Cursor::new(bytes);
    let count = read_header(&mut cur, "label file", LABEL_MAGIC, 1)?[0];
    check_payload(bytes, "label file", 8, count as u64)?;
    let labels = bytes[8..].to_vec();
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::InvalidLabel(bad));
    }
    Ok(labels)
}

pub fn write_idx_images<W: Write>(out: &mut W, images: &[RawImage]) -> Result<()> {
    out.write_u32::<BigEndian>(IMAGE_MAGIC)?;
    out.write_u32::<BigEndian>(images.len() as u32)?;
    out.write_u32::<BigEndian>(SIDE as u32)?;
    out.write_u32::<BigEndian>(SIDE as u32)?;
    for img in images {
        out.write_all(img.pixels())?;
    }
    Ok(())
}

pub fn write_idx_labels<W: Write>(out: &mut W, labels: &[u8]) -> Result<()> {
    out.write_u32::<BigEndian>(LABEL_MAGIC)?;
    out.write_u32::<BigEndian>(labels.len() as u32)?;
    out.write_all(labels)?;
    Ok(())
}

/// Loads an image file and its label file, paired in file order.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<(RawImage, u8)>> {
    let images = parse_idx_images(&fs::read(images_path)?)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    Ok(images.into_iter().zip(labels).collect())
}

/// How to pick the `n` images used by an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subset {
    /// The first `n` in file order.
    First,
    /// `n` after a shuffle seeded from the master seed.
    Shuffled(u64),
}

/// Encodes the selected subset. Errors if it would be empty.
pub fn select_encoded(
    pairs: &[(RawImage, u8)],
    n: usize,
    subset: Subset,
    threshold: f64,
) -> Result<Vec<EncodedImage>> {
    let n = n.min(pairs.len());
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    if let Subset::Shuffled(master) = subset {
        order.shuffle(&mut seed::substream(master, Stream::Shuffle));
    }
    Ok(order[..n]
        .iter()
        .map(|&i| encode(&pairs[i].0, pairs[i].1, threshold))
        .collect())
}
