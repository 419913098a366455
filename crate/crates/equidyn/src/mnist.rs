//! Reading and downloading the digit test set in IDX format.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use equidyn_core::data::{self, Dataset};
use flate2::read::GzDecoder;

pub const IMAGES_FILE: &str = "t10k-images-idx3-ubyte";
pub const LABELS_FILE: &str = "t10k-labels-idx1-ubyte";
pub const DEFAULT_MIRROR: &str = "https://ossci-datasets.s3.amazonaws.com/mnist";

/// Reads a file, inflating it when the name ends in `.gz`.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .with_context(|| format!("inflating {}", path.display()))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let ds = data::mnist_from_idx(&read_maybe_gz(images)?, &read_maybe_gz(labels)?)?;
    Ok(ds)
}

/// `dir/name` or `dir/name.gz`, whichever exists.
fn locate(dir: &Path, name: &str) -> Option<PathBuf> {
    [dir.join(name), dir.join(format!("{name}.gz"))]
        .into_iter()
        .find(|p| p.is_file())
}

/// The image and label files in `dir`, if both are present.
pub fn find_files(dir: &Path) -> Option<(PathBuf, PathBuf)> {
    Some((locate(dir, IMAGES_FILE)?, locate(dir, LABELS_FILE)?))
}

/// The first `count` images, halved by area averaging until they are
/// `side × side`.
pub fn load_downsampled(dir: &Path, side: usize, count: usize) -> Result<Dataset> {
    let Some((images, labels)) = find_files(dir) else {
        bail!("no {IMAGES_FILE} / {LABELS_FILE} in {}", dir.display());
    };
    let mut ds = load_mnist_idx(&images, &labels)?.take(count);
    let mut current: usize = ds
        .meta
        .param("side")
        .and_then(|s| s.parse().ok())
        .unwrap_or(28);
    while current > side {
        if current % 2 != 0 || current / 2 < side {
            bail!("cannot reach side {side} from {current} by halving");
        }
        ds = data::downsample_images(&ds, current, count)?;
        current /= 2;
    }
    if current != side {
        bail!("images are {current}x{current}, smaller than the requested {side}");
    }
    Ok(ds)
}

/// Downloads both gzip files from `mirror` into `dir`, checks that they parse
/// and returns their paths.
pub fn fetch(dir: &Path, mirror: &str) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut paths = Vec::new();
    for name in [IMAGES_FILE, LABELS_FILE] {
        let url = format!("{}/{name}.gz", mirror.trim_end_matches('/'));
        log::info!("downloading {url}");
        let resp = ureq::get(&url)
            .call()
            .with_context(|| format!("fetching {url}"))?;
        let mut body = Vec::new();
        resp.into_reader()
            .read_to_end(&mut body)
            .with_context(|| format!("reading {url}"))?;
        let path = dir.join(format!("{name}.gz"));
        fs::write(&path, &body).with_context(|| format!("writing {}", path.display()))?;
        paths.push(path);
    }
    let ds = load_mnist_idx(&paths[0], &paths[1])?;
    log::info!("fetched {} images", ds.len());
    Ok((paths.remove(0), paths.remove(0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn idx_files(dir: &Path, count: usize, gz: bool) {
        let mut img = vec![0, 0, 8, 3];
        img.extend_from_slice(&(count as u32).to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        img.extend((0..count * 784).map(|i| (i % 256) as u8));
        let mut lab = vec![0, 0, 8, 1];
        lab.extend_from_slice(&(count as u32).to_be_bytes());
        lab.extend((0..count).map(|i| (i % 10) as u8));
        for (name, bytes) in [(IMAGES_FILE, img), (LABELS_FILE, lab)] {
            if gz {
                let mut e = GzEncoder::new(Vec::new(), Compression::fast());
                e.write_all(&bytes).unwrap();
                fs::write(dir.join(format!("{name}.gz")), e.finish().unwrap()).unwrap();
            } else {
                fs::write(dir.join(name), bytes).unwrap();
            }
        }
    }

    #[test]
    fn plain_and_gzip_files_load_identically() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        idx_files(a.path(), 3, false);
        idx_files(b.path(), 3, true);
        let da = load_downsampled(a.path(), 28, 3).unwrap();
        let db = load_downsampled(b.path(), 28, 3).unwrap();
        assert_eq!(da.inputs(), db.inputs());
        assert_eq!(da.len(), 3);
    }

    #[test]
    fn halving_reaches_seven() {
        let a = tempfile::tempdir().unwrap();
        idx_files(a.path(), 2, false);
        let ds = load_downsampled(a.path(), 7, 2).unwrap();
        assert_eq!(ds.inputs().cols(), 49);
        assert!(load_downsampled(a.path(), 10, 2).is_err());
    }
}
