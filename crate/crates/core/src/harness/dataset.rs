//! Labelled datasets, CSV I/O, stratified splits and synthetic blobs.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::imageprep::{preprocess_image, GrayImage, Polarity};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Vec<f64>>,
    labels: Vec<usize>,
    classes: usize,
    dimension: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        check_dim(samples.len(), labels.len())?;
        let dimension = samples.first().map_or(0, Vec::len);
        for s in &samples {
            check_dim(dimension, s.len())?;
            check_finite(s)?;
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidInput(format!("label {bad} outside [0, {classes})")));
        }
        Ok(Dataset { samples, labels, classes, dimension })
    }

    /// Class count inferred as `1 + max label`.
    pub fn from_labelled(samples: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(samples, labels, classes)
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            dimension: self.dimension,
        }
    }

    /// Writes `label,x1,...,xn` rows without a header. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for (x, l) in self.samples.iter().zip(&self.labels) {
            out.push_str(&l.to_string());
            for v in x {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Reads rows of `label,x1,...,xn`. Ragged rows, non-numeric cells and empty
/// files are reported with their 1-based line number.
pub fn load_csv_dataset(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_dataset(file, has_header, &path.display().to_string())
}

pub fn read_csv_dataset(reader: impl std::io::Read, has_header: bool, origin: &str) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse { path: origin.to_string(), line, message };
    let mut rdr =
        csv::ReaderBuilder::new().has_headers(has_header).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(parse_err(line, format!("expected {expected} fields, found {}", record.len())));
        }
        if record.len() < 2 {
            return Err(parse_err(line, "a row needs a label and at least one feature".into()));
        }
        let label = record[0]
            .parse::<usize>()
            .map_err(|_| parse_err(line, format!("label `{}` is not a nonnegative integer", &record[0])))?;
        let x = record
            .iter()
            .skip(1)
            .map(|cell| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(line, format!("`{cell}` is not a finite number"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        labels.push(label);
        samples.push(x);
    }
    if samples.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    Dataset::from_labelled(samples, labels)
}

/// Index form of [`split_half`]: per class, a seeded shuffle sends
/// `ceil(k/2)` samples to train and the rest to test. Both lists are sorted.
pub fn split_half_indices(d: &Dataset, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class = vec![Vec::new(); d.classes];
    for (i, &l) in d.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::ClassTooSmall { class, count: members.len(), required: 2 });
        }
        members.shuffle(&mut rng);
        let cut = members.len().div_ceil(2);
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_half(d: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_half_indices(d, seed)?;
    Ok((d.subset(&train), d.subset(&test)))
}

/// Center of synthetic class `k` in `dim` dimensions. The first `2·dim`
/// classes sit at `±e_i`; further classes get seeded random unit vectors.
fn blob_center(k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut center = vec![0.0; dim];
    if k < 2 * dim {
        center[k / 2] = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        return center;
    }
    loop {
        for v in center.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let norm = center.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            center.iter_mut().for_each(|v| *v /= norm);
            return center;
        }
    }
}

/// Gaussian clouds with per-coordinate standard deviation `spread`, one per
/// class, laid out class by class.
pub fn make_synthetic_blobs(classes: usize, dim: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::param("classes", "must be >= 2"));
    }
    if per_class < 2 {
        return Err(Error::param("per_class", "must be >= 2"));
    }
    if dim == 0 {
        return Err(Error::param("dim", "must be >= 1"));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::param("spread", "must be finite and >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..classes).map(|k| blob_center(k, dim, &mut rng)).collect();
    let noise = Normal::new(0.0, spread).map_err(|e| Error::param("spread", e.to_string()))?;
    let mut samples = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (k, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            samples.push(center.iter().map(|c| c + noise.sample(&mut rng)).collect());
            labels.push(k);
        }
    }
    Dataset::new(samples, labels, classes)
}

/// XOR-style two-class data: the four corners of the unit square, repeated,
/// with optional jitter.
pub fn make_xor(per_corner: usize, jitter: f64, seed: u64) -> Result<Dataset> {
    if per_corner == 0 {
        return Err(Error::param("per_corner", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for &(a, b) in &[(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
        for _ in 0..per_corner {
            let (da, db) = if jitter > 0.0 {
                (rng.random_range(-jitter..=jitter), rng.random_range(-jitter..=jitter))
            } else {
                (0.0, 0.0)
            };
            samples.push(vec![a + da, b + db]);
            labels.push(usize::from((a == 1.0) != (b == 1.0)));
        }
    }
    Dataset::new(samples, labels, 2)
}

/// Label for an image file: an integer parent directory name, otherwise an
/// integer filename prefix terminated by `_`.
fn image_label(root: &Path, file: &Path) -> Option<usize> {
    let parent = file.parent()?;
    if parent != root {
        if let Some(l) = parent.file_name().and_then(|n| n.to_str()).and_then(|n| n.parse().ok()) {
            return Some(l);
        }
    }
    let stem = file.file_name()?.to_str()?;
    stem.split_once('_').and_then(|(head, _)| head.parse().ok())
}

fn collect_pgm(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_pgm(&path, out)?;
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
            out.push(path);
        }
    }
    Ok(())
}

/// Runs the image pipeline over every `.pgm` below `dir` in path order.
pub fn preprocess_directory(dir: impl AsRef<Path>, polarity: Polarity) -> Result<Dataset> {
    let root = dir.as_ref();
    let mut files = Vec::new();
    collect_pgm(root, &mut files)?;
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidInput(format!("no .pgm files under {}", root.display())));
    }
    let mut samples = Vec::with_capacity(files.len());
    let mut labels = Vec::with_capacity(files.len());
    for file in &files {
        let label = image_label(root, file)
            .ok_or_else(|| Error::InvalidInput(format!("cannot infer a label for {}", file.display())))?;
        let img = GrayImage::load_pgm(file)?;
        let vector =
            preprocess_image(&img, polarity).map_err(|e| Error::InvalidInput(format!("{}: {e}", file.display())))?;
        samples.push(vector);
        labels.push(label);
    }
    Dataset::from_labelled(samples, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_basic_and_errors() {
        let d = read_csv_dataset("0,1.0,2.0\n1,3.0,4.0\n".as_bytes(), false, "mem").unwrap();
        assert_eq!((d.len(), d.dimension(), d.classes()), (2, 2, 2));

        let err = read_csv_dataset("0,1.0,2.0\n1,3.0\n".as_bytes(), false, "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = read_csv_dataset("0,1.0\n1,abc\n".as_bytes(), false, "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(read_csv_dataset("".as_bytes(), false, "mem").is_err());
        let d = read_csv_dataset("label,a\n2,0.5\n".as_bytes(), true, "mem").unwrap();
        assert_eq!(d.classes(), 3);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = make_synthetic_blobs(3, 4, 5, 0.37, 8).unwrap();
        let back = read_csv_dataset(d.to_csv_string().as_bytes(), false, "mem").unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn split_counts() {
        let d = make_synthetic_blobs(3, 2, 10, 0.1, 1).unwrap();
        let (tr, te) = split_half(&d, 4).unwrap();
        assert_eq!(tr.class_counts(), vec![5, 5, 5]);
        assert_eq!(te.class_counts(), vec![5, 5, 5]);

        let labels = [vec![0; 7], vec![1; 2]].concat();
        let odd = Dataset::new(vec![vec![0.0]; 9], labels, 2).unwrap();
        let (tr, te) = split_half(&odd, 0).unwrap();
        assert_eq!(tr.class_counts(), vec![4, 1]);
        assert_eq!(te.class_counts(), vec![3, 1]);

        assert_eq!(split_half_indices(&d, 9).unwrap(), split_half_indices(&d, 9).unwrap());
        let tiny = Dataset::new(vec![vec![0.0]; 3], vec![0, 0, 1], 2).unwrap();
        assert!(matches!(split_half(&tiny, 0), Err(Error::ClassTooSmall { class: 1, .. })));
    }

    #[test]
    fn blobs_layout() {
        let d = make_synthetic_blobs(5, 2, 3, 0.0, 2).unwrap();
        assert_eq!(d.samples()[0], vec![1.0, 0.0]);
        assert_eq!(d.samples()[3], vec![-1.0, 0.0]);
        assert_eq!(d.samples()[9], vec![0.0, -1.0]);
        let extra = &d.samples()[12];
        assert!((extra.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d.samples()[12..].iter().all(|s| s == extra));
        assert_eq!(make_synthetic_blobs(5, 2, 3, 0.2, 7).unwrap(), make_synthetic_blobs(5, 2, 3, 0.2, 7).unwrap());
        assert!(make_synthetic_blobs(1, 2, 3, 0.2, 7).is_err());
    }

    #[test]
    fn image_labels_from_paths() {
        let root = Path::new("/data");
        assert_eq!(image_label(root, Path::new("/data/3/a.pgm")), Some(3));
        assert_eq!(image_label(root, Path::new("/data/12_hand.pgm")), Some(12));
        assert_eq!(image_label(root, Path::new("/data/hand.pgm")), None);
    }
}
