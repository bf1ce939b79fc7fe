//! On-disk pyramid layout: one directory per slide holding `manifest.txt`
//! and PNG tiles `tile_{level}_{row}_{col}.png`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::ImageEncoder as _;
use urcdm_core::synthdata::{Image8, Pyramid};

use crate::error::{AppError, AppResult, IoContext};

pub const MANIFEST: &str = "manifest.txt";
pub const FORMAT: &str = "urcdm-pyramid-1";
pub const DEFAULT_TILE: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub id: String,
    pub seed: u64,
    pub channels: usize,
    pub tile_size: usize,
    /// Level side lengths, coarsest first.
    pub levels: Vec<usize>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let levels: Vec<String> = self.levels.iter().map(|l| l.to_string()).collect();
        writeln!(s, "format={FORMAT}").unwrap();
        writeln!(s, "id={}", self.id).unwrap();
        writeln!(s, "seed={}", self.seed).unwrap();
        writeln!(s, "channels={}", self.channels).unwrap();
        writeln!(s, "tile_size={}", self.tile_size).unwrap();
        writeln!(s, "levels={}", levels.join(",")).unwrap();
        s
    }

    pub fn parse(text: &str) -> AppResult<Self> {
        let mut fields = std::collections::BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(AppError::validation("manifest", format!("line {} is not key=value", n + 1)));
            };
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let field = |key: &str| -> AppResult<&String> {
            fields
                .get(key)
                .ok_or_else(|| AppError::validation(format!("manifest field `{key}`"), "missing"))
        };
        let number = |key: &str| -> AppResult<u64> {
            let v = field(key)?;
            v.parse()
                .map_err(|_| AppError::validation(format!("manifest field `{key}`"), format!("`{v}` is not an integer")))
        };
        let format = field("format")?;
        if format != FORMAT {
            return Err(AppError::validation("manifest field `format`", format!("unsupported `{format}`")));
        }
        let levels_text = field("levels")?;
        let levels = levels_text
            .split(',')
            .map(|l| l.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| AppError::validation("manifest field `levels`", format!("`{levels_text}` is not a size list")))?;
        let m = Manifest {
            id: field("id")?.clone(),
            seed: number("seed")?,
            channels: number("channels")? as usize,
            tile_size: number("tile_size")? as usize,
            levels,
        };
        if m.id.is_empty() || m.id.contains(['/', '\\']) {
            return Err(AppError::validation("manifest field `id`", "empty or contains a path separator"));
        }
        if m.channels != 3 {
            return Err(AppError::validation("manifest field `channels`", "only 3-channel pyramids are stored"));
        }
        if m.tile_size == 0 {
            return Err(AppError::validation("manifest field `tile_size`", "must be positive"));
        }
        if m.levels.is_empty() || m.levels.contains(&0) || m.levels.windows(2).any(|w| w[0] > w[1]) {
            return Err(AppError::validation("manifest field `levels`", "sizes must be positive and non-decreasing"));
        }
        Ok(m)
    }
}

pub fn tile_name(level: usize, row: usize, col: usize) -> String {
    format!("tile_{level}_{row}_{col}.png")
}

fn tiles_per_side(size: usize, tile: usize) -> usize {
    size.div_ceil(tile)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> AppResult<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}

pub fn encode_png(img: &Image8) -> AppResult<Vec<u8>> {
    let mut out = Vec::new();
    let color = match img.channels() {
        3 => image::ExtendedColorType::Rgb8,
        1 => image::ExtendedColorType::L8,
        c => return Err(AppError::validation("image", format!("{c} channels cannot be stored as PNG"))),
    };
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(img.bytes(), img.width() as u32, img.height() as u32, color)
        .map_err(|e| AppError::validation("png encoding", e.to_string()))?;
    Ok(out)
}

pub fn save_png(path: &Path, img: &Image8) -> AppResult<()> {
    write_atomic(path, &encode_png(img)?)
}

pub fn load_png(path: &Path) -> AppResult<Image8> {
    let bytes = fs::read(path).at(path)?;
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| AppError::validation(format!("image {}", path.display()), e.to_string()))?
        .to_rgb8();
    let (w, h) = decoded.dimensions();
    Ok(Image8::new(w as usize, h as usize, 3, decoded.into_raw())?)
}

fn sub_image(img: &Image8, y: usize, x: usize, h: usize, w: usize) -> AppResult<Image8> {
    let c = img.channels();
    let mut data = Vec::with_capacity(h * w * c);
    for row in y..y + h {
        let start = (row * img.width() + x) * c;
        data.extend_from_slice(&img.bytes()[start..start + w * c]);
    }
    Ok(Image8::new(w, h, c, data)?)
}

/// Writes `pyramid` to `root/<id>/`, replacing any previous copy.
pub fn write_pyramid(root: &Path, pyramid: &Pyramid, tile_size: usize) -> AppResult<PathBuf> {
    let manifest = Manifest {
        id: pyramid.id.clone(),
        seed: pyramid.seed,
        channels: 3,
        tile_size,
        levels: pyramid.sizes(),
    };
    // Validate before touching the disk.
    Manifest::parse(&manifest.to_text())?;
    for (k, level) in pyramid.levels.iter().enumerate() {
        if level.width() != level.height() || level.channels() != 3 {
            return Err(AppError::validation("pyramid", format!("level {k} is not a square RGB image")));
        }
    }
    let dir = root.join(&pyramid.id);
    if dir.exists() {
        fs::remove_dir_all(&dir).at(&dir)?;
    }
    fs::create_dir_all(&dir).at(&dir)?;
    for (k, level) in pyramid.levels.iter().enumerate() {
        let n = tiles_per_side(level.width(), tile_size);
        for row in 0..n {
            for col in 0..n {
                let (y, x) = (row * tile_size, col * tile_size);
                let h = tile_size.min(level.height() - y);
                let w = tile_size.min(level.width() - x);
                save_png(&dir.join(tile_name(k, row, col)), &sub_image(level, y, x, h, w)?)?;
            }
        }
    }
    write_atomic(&dir.join(MANIFEST), manifest.to_text().as_bytes())?;
    Ok(dir)
}

pub fn read_manifest(dir: &Path) -> AppResult<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).at(&path)?;
    Manifest::parse(&text)
}

pub fn read_pyramid(dir: &Path) -> AppResult<Pyramid> {
    let m = read_manifest(dir)?;
    let t = m.tile_size;
    let mut levels = Vec::with_capacity(m.levels.len());
    for (k, &size) in m.levels.iter().enumerate() {
        let n = tiles_per_side(size, t);
        let mut data = vec![0u8; size * size * 3];
        for row in 0..n {
            for col in 0..n {
                let path = dir.join(tile_name(k, row, col));
                let tile = load_png(&path)?;
                let (y, x) = (row * t, col * t);
                let (h, w) = (t.min(size - y), t.min(size - x));
                if tile.height() != h || tile.width() != w {
                    return Err(AppError::validation(
                        format!("tile {}", path.display()),
                        format!("{}x{} where {w}x{h} was expected", tile.width(), tile.height()),
                    ));
                }
                for r in 0..h {
                    let dst = ((y + r) * size + x) * 3;
                    data[dst..dst + w * 3].copy_from_slice(&tile.bytes()[r * w * 3..(r + 1) * w * 3]);
                }
            }
        }
        levels.push(Image8::new(size, size, 3, data)?);
    }
    Ok(Pyramid {
        id: m.id,
        seed: m.seed,
        levels,
    })
}

/// Slide directories under `root` (those with a manifest), sorted by name.
pub fn corpus_dirs(root: &Path) -> AppResult<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).at(root)? {
        let path = entry.at(root)?.path();
        if path.join(MANIFEST).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn read_corpus(root: &Path) -> AppResult<Vec<Pyramid>> {
    let dirs = corpus_dirs(root)?;
    if dirs.is_empty() {
        return Err(AppError::validation("corpus", format!("no pyramids under {}", root.display())));
    }
    dirs.iter().map(|d| read_pyramid(d)).collect()
}
