//! Training-pair export for the guess networks.
//!
//! Layout of an export directory:
//!
//! ```text
//! manifest.jsonl          header line, then one line per (item, h) pair
//! inputs/{item}_h0.png     x̄^(0), the network input for step 0
//! targets/{item}_h{h}.png  x^GT (ground-truth mode) or x̄^(h+1) (incremental mode)
//! iterates/{item}_h{h}.png x̄^(h), when solver snapshots are available
//! ```
//!
//! For `h ≥ 1` the network input is the previous network's output `x̂^(h)`,
//! which only exists once `Ψ^(h−1)` is trained; those pairs carry no input
//! file and `input_source = "previous_guess_output"`.

use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::io::write_png16;
use crate::error::{Error, Result};
use crate::image::Image;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Every step regresses onto the ground truth.
    GroundTruth,
    /// Step `h` regresses onto the incremental iterate `x̄^(h+1)`.
    Incremental,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    StartingGuess,
    PreviousGuessOutput,
}

/// One image's material for export.
#[derive(Clone, Debug)]
pub struct TrainingSource {
    pub id: String,
    pub starting_guess: Image,
    pub ground_truth: Option<Image>,
    /// `x̄^(0), …, x̄^(H)` from a run with snapshots kept; may be empty in
    /// ground-truth mode.
    pub snapshots: Vec<Image>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format_version: u32,
    pub mode: TargetMode,
    pub steps: usize,
    pub width: usize,
    pub height: usize,
    pub value_range: [f64; 2],
    pub bit_depth: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub item: String,
    pub h: usize,
    pub input_source: InputSource,
    /// Relative to the export directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterate: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExportManifest {
    pub header: ManifestHeader,
    pub pairs: Vec<TrainingPair>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum ManifestLine {
    Header(ManifestHeader),
    Pair(TrainingPair),
}

impl ExportManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut line = |rec: &ManifestLine| -> std::io::Result<()> {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")
        };
        line(&ManifestLine::Header(self.header.clone())).map_err(|e| Error::io(path, e))?;
        for p in &self.pairs {
            line(&ManifestLine::Pair(p.clone())).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header = None;
        let mut pairs = Vec::new();
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestLine =
                serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
            match rec {
                ManifestLine::Header(h) if header.is_none() => header = Some(h),
                ManifestLine::Header(_) => return Err(Error::format(path, "duplicate header record")),
                ManifestLine::Pair(p) => pairs.push(p),
            }
        }
        let header = header.ok_or_else(|| Error::format(path, "no header record"))?;
        Ok(Self { header, pairs })
    }
}

/// Writes pairs for steps `0..steps` of every source into `out_dir` and
/// returns the manifest (also saved as `manifest.jsonl`).
pub fn export_training_pairs(
    out_dir: &Path,
    sources: &[TrainingSource],
    mode: TargetMode,
    steps: usize,
) -> Result<ExportManifest> {
    let (width, height) = match sources.first() {
        Some(s) => (s.starting_guess.width(), s.starting_guess.height()),
        None => (0, 0),
    };
    for s in sources {
        if s.starting_guess.width() != width || s.starting_guess.height() != height {
            return Err(Error::shape(format!("{width}x{height}"), s.id.clone()));
        }
        match mode {
            TargetMode::GroundTruth if s.ground_truth.is_none() => {
                return Err(Error::MissingSnapshots(format!(
                    "item {}: ground-truth mode requires a ground-truth image",
                    s.id
                )));
            }
            TargetMode::Incremental if s.snapshots.len() < steps + 1 => {
                return Err(Error::MissingSnapshots(format!(
                    "item {}: incremental mode needs {} snapshots, found {}",
                    s.id,
                    steps + 1,
                    s.snapshots.len()
                )));
            }
            _ => {}
        }
    }

    for sub in ["inputs", "targets", "iterates"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let save = |rel: String, img: &Image| -> Result<String> {
        write_png16(&out_dir.join(&rel), img)?;
        Ok(rel)
    };

    let mut pairs = Vec::new();
    for s in sources {
        let input0 = save(format!("inputs/{}_h0.png", s.id), &s.starting_guess)?;
        let gt_path = match (&s.ground_truth, mode) {
            (Some(gt), TargetMode::GroundTruth) => Some(save(format!("targets/{}_gt.png", s.id), gt)?),
            _ => None,
        };
        for h in 0..steps {
            let target = match mode {
                TargetMode::GroundTruth => gt_path.clone().expect("checked above"),
                TargetMode::Incremental => save(format!("targets/{}_h{h}.png", s.id), &s.snapshots[h + 1])?,
            };
            let iterate = match s.snapshots.get(h) {
                Some(img) if h > 0 => Some(save(format!("iterates/{}_h{h}.png", s.id), img)?),
                _ => None,
            };
            pairs.push(TrainingPair {
                item: s.id.clone(),
                h,
                input_source: if h == 0 {
                    InputSource::StartingGuess
                } else {
                    InputSource::PreviousGuessOutput
                },
                input: (h == 0).then(|| input0.clone()),
                target,
                iterate,
            });
        }
    }
    let manifest = ExportManifest {
        header: ManifestHeader {
            format_version: 1,
            mode,
            steps,
            width,
            height,
            value_range: [0.0, 1.0],
            bit_depth: 16,
        },
        pairs,
    };
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Resolves a manifest-relative path.
pub fn resolve(dir: &Path, rel: &str) -> PathBuf {
    dir.join(rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::io::{quantize16, read_png};

    fn img(v: f64) -> Image {
        quantize16(&Image::from_fn(8, 8, |r, c| v * ((r + c) % 4) as f64 / 3.0).unwrap())
    }

    fn source(id: &str) -> TrainingSource {
        TrainingSource {
            id: id.into(),
            starting_guess: img(0.5),
            ground_truth: Some(img(1.0)),
            snapshots: vec![img(0.5), img(0.6), img(0.7), img(0.8)],
        }
    }

    #[test]
    fn ground_truth_mode_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let m = export_training_pairs(dir.path(), &[source("a")], TargetMode::GroundTruth, 3).unwrap();
        assert_eq!(m.pairs.len(), 3);
        let p0 = &m.pairs[0];
        assert_eq!(p0.input_source, InputSource::StartingGuess);
        assert_eq!(read_png(&resolve(dir.path(), p0.input.as_ref().unwrap())).unwrap(), img(0.5));
        assert_eq!(read_png(&resolve(dir.path(), &p0.target)).unwrap(), img(1.0));
        assert!(m.pairs[1].input.is_none());
    }

    #[test]
    fn incremental_mode_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let m = export_training_pairs(dir.path(), &[source("a")], TargetMode::Incremental, 3).unwrap();
        assert_eq!(read_png(&resolve(dir.path(), &m.pairs[0].target)).unwrap(), img(0.6));
        assert_eq!(read_png(&resolve(dir.path(), &m.pairs[2].target)).unwrap(), img(0.8));
        assert_eq!(
            read_png(&resolve(dir.path(), m.pairs[1].iterate.as_ref().unwrap())).unwrap(),
            img(0.6)
        );
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = export_training_pairs(dir.path(), &[source("a"), source("b")], TargetMode::Incremental, 2).unwrap();
        let back = ExportManifest::read(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn missing_material_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = source("a");
        s.snapshots.truncate(2);
        assert!(matches!(
            export_training_pairs(dir.path(), &[s.clone()], TargetMode::Incremental, 3),
            Err(Error::MissingSnapshots(_))
        ));
        s.ground_truth = None;
        assert!(matches!(
            export_training_pairs(dir.path(), &[s], TargetMode::GroundTruth, 1),
            Err(Error::MissingSnapshots(_))
        ));
    }
}
