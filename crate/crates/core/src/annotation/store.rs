use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AnnotationError;
use crate::model::{consensus_merge, Annotation, ConsensusLabel, LabelError, Tier};

/// One submission with its per-(image, rater) version number, starting at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredAnnotation {
    pub version: u32,
    pub annotation: Annotation,
}

/// A line of the append-only log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum LogEvent {
    Annotation(StoredAnnotation),
    /// Joint decision of the raters on a straight-reject disagreement.
    Resolution {
        image_id: String,
        straight_reject: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConsensusOutcome {
    Consensus(ConsensusLabel),
    /// The raters disagree on straight reject and have not resolved it yet.
    PendingAdjudication,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportStatus {
    Consensus,
    PendingAdjudication,
}

/// One export line: the consensus label, or a pending flag, plus the two
/// current annotations and any recorded resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedLabel {
    pub image_id: String,
    pub status: ExportStatus,
    pub label: Option<ConsensusLabel>,
    pub annotations: Vec<StoredAnnotation>,
    #[serde(default)]
    pub sr_resolution: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterProgress {
    pub rater_id: String,
    pub done: usize,
    pub remaining: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusTally {
    pub straight_reject: usize,
    pub tier1: usize,
    pub tier2: usize,
    pub tier3: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressSummary {
    pub n_images: usize,
    pub raters: Vec<RaterProgress>,
    pub adjudication_queue: Vec<String>,
    pub consensus: ConsensusTally,
}

/// Annotation state for a fixed, ordered list of images and exactly two raters.
///
/// Every submission is kept; the latest version per (image, rater) is the
/// current one. When backed by a file, each mutation is appended to it as one
/// JSON line before the in-memory state changes.
#[derive(Debug)]
pub struct AnnotationStore {
    images: Vec<String>,
    image_index: HashMap<String, usize>,
    raters: [String; 2],
    history: Vec<StoredAnnotation>,
    /// Index into `history` of the current annotation, per image and rater.
    current: Vec<[Option<usize>; 2]>,
    resolutions: HashMap<String, bool>,
    log: Option<(PathBuf, File)>,
}

impl AnnotationStore {
    /// An empty in-memory store.
    pub fn new(images: Vec<String>, raters: [String; 2]) -> Result<Self, AnnotationError> {
        if raters[0].is_empty() || raters[0] == raters[1] {
            return Err(AnnotationError::InvalidConfig("two distinct, non-empty rater ids are required".into()));
        }
        let mut image_index = HashMap::with_capacity(images.len());
        for (i, id) in images.iter().enumerate() {
            if image_index.insert(id.clone(), i).is_some() {
                return Err(AnnotationError::InvalidConfig(format!("duplicate image id {id}")));
            }
        }
        let current = vec![[None; 2]; images.len()];
        Ok(Self { images, image_index, raters, history: Vec::new(), current, resolutions: HashMap::new(), log: None })
    }

    /// Replays the log at `path` (created if missing) and appends to it from then on.
    ///
    /// A final line without a trailing newline is treated as a torn write and
    /// ignored; it disappears at the next [`compact`](Self::compact).
    pub fn open(path: &Path, images: Vec<String>, raters: [String; 2]) -> Result<Self, AnnotationError> {
        let mut store = Self::new(images, raters)?;
        let io = |e: std::io::Error| AnnotationError::Io { path: path.display().to_string(), message: e.to_string() };
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(io)?;
            let complete = text.ends_with('\n');
            let lines: Vec<&str> = text.lines().collect();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let event: LogEvent = match serde_json::from_str(line) {
                    Ok(e) => e,
                    Err(_) if i + 1 == lines.len() && !complete => {
                        log::warn!("{}: ignoring torn final line {}", path.display(), i + 1);
                        break;
                    }
                    Err(e) => return Err(AnnotationError::CorruptLog { line: i + 1, reason: e.to_string() }),
                };
                store.apply(event).map_err(|e| AnnotationError::CorruptLog { line: i + 1, reason: e.to_string() })?;
            }
            if !complete && !text.is_empty() {
                // Drop the torn tail so later appends start on a fresh line.
                let keep = text.rfind('\n').map_or(0, |i| i + 1) as u64;
                OpenOptions::new().write(true).open(path).and_then(|f| f.set_len(keep)).map_err(io)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        store.log = Some((path.to_path_buf(), file));
        Ok(store)
    }

    pub fn images(&self) -> &[String] {
        &self.images
    }

    pub fn raters(&self) -> &[String; 2] {
        &self.raters
    }

    pub fn contains_image(&self, image_id: &str) -> bool {
        self.image_index.contains_key(image_id)
    }

    fn rater_slot(&self, rater_id: &str) -> Result<usize, AnnotationError> {
        self.raters
            .iter()
            .position(|r| r == rater_id)
            .ok_or_else(|| AnnotationError::UnknownRater(rater_id.to_string()))
    }

    fn image_slot(&self, image_id: &str) -> Result<usize, AnnotationError> {
        self.image_index.get(image_id).copied().ok_or_else(|| AnnotationError::UnknownImage(image_id.to_string()))
    }

    /// Lowest-index image the rater has not annotated yet, with its position.
    pub fn next_image(&self, rater_id: &str) -> Result<Option<(usize, &str)>, AnnotationError> {
        let r = self.rater_slot(rater_id)?;
        Ok(self.current.iter().position(|c| c[r].is_none()).map(|i| (i, self.images[i].as_str())))
    }

    /// Validates and records `a` as the rater's current annotation; returns its version.
    ///
    /// Any recorded straight-reject resolution for the image is dropped, since
    /// it was decided on the previous annotations.
    pub fn submit(&mut self, a: Annotation) -> Result<u32, AnnotationError> {
        a.validate()?;
        let i = self.image_slot(&a.image_id)?;
        let r = self.rater_slot(&a.rater_id)?;
        let version = self.current[i][r].map_or(1, |h| self.history[h].version + 1);
        let event = LogEvent::Annotation(StoredAnnotation { version, annotation: a });
        self.append(&event)?;
        self.apply(event)?;
        Ok(version)
    }

    fn append(&mut self, event: &LogEvent) -> Result<(), AnnotationError> {
        if let Some((path, file)) = &mut self.log {
            let mut line = serde_json::to_vec(event).expect("log events serialize");
            line.push(b'\n');
            file.write_all(&line)
                .and_then(|_| file.flush())
                .map_err(|e| AnnotationError::Io { path: path.display().to_string(), message: e.to_string() })?;
        }
        Ok(())
    }

    fn apply(&mut self, event: LogEvent) -> Result<(), AnnotationError> {
        match event {
            LogEvent::Annotation(stored) => {
                stored.annotation.validate()?;
                let i = self.image_slot(&stored.annotation.image_id)?;
                let r = self.rater_slot(&stored.annotation.rater_id)?;
                let expected = self.current[i][r].map_or(1, |h| self.history[h].version + 1);
                if stored.version != expected {
                    return Err(AnnotationError::InvalidConfig(format!(
                        "version {} where {expected} was expected",
                        stored.version
                    )));
                }
                self.resolutions.remove(&stored.annotation.image_id);
                self.current[i][r] = Some(self.history.len());
                self.history.push(stored);
            }
            LogEvent::Resolution { image_id, straight_reject } => {
                if !self.has_sr_disagreement(&image_id)? {
                    return Err(AnnotationError::NoDisagreement(image_id));
                }
                self.resolutions.insert(image_id, straight_reject);
            }
        }
        Ok(())
    }

    /// Current annotations of the image, in rater order.
    pub fn current_annotations(&self, image_id: &str) -> Result<Vec<&StoredAnnotation>, AnnotationError> {
        let i = self.image_slot(image_id)?;
        Ok(self.current[i].iter().flatten().map(|&h| &self.history[h]).collect())
    }

    /// Every version ever submitted for the image, oldest first.
    pub fn history(&self, image_id: &str) -> Result<Vec<&StoredAnnotation>, AnnotationError> {
        self.image_slot(image_id)?;
        Ok(self.history.iter().filter(|s| s.annotation.image_id == image_id).collect())
    }

    fn pair(&self, image_id: &str) -> Result<(&Annotation, &Annotation), AnnotationError> {
        let current = self.current_annotations(image_id)?;
        match current[..] {
            [a, b] => Ok((&a.annotation, &b.annotation)),
            _ => Err(AnnotationError::NotReady { image_id: image_id.to_string(), annotations: current.len() }),
        }
    }

    fn has_sr_disagreement(&self, image_id: &str) -> Result<bool, AnnotationError> {
        let (a, b) = self.pair(image_id)?;
        Ok(a.straight_reject != b.straight_reject)
    }

    /// Records the raters' joint straight-reject decision for a disagreement.
    pub fn resolve(&mut self, image_id: &str, straight_reject: bool) -> Result<ConsensusLabel, AnnotationError> {
        if !self.has_sr_disagreement(image_id)? {
            return Err(AnnotationError::NoDisagreement(image_id.to_string()));
        }
        let event = LogEvent::Resolution { image_id: image_id.to_string(), straight_reject };
        self.append(&event)?;
        self.apply(event)?;
        match self.consensus(image_id)? {
            ConsensusOutcome::Consensus(label) => Ok(label),
            ConsensusOutcome::PendingAdjudication => unreachable!("resolution was just recorded"),
        }
    }

    /// Consensus of the two current annotations, using any recorded resolution.
    pub fn consensus(&self, image_id: &str) -> Result<ConsensusOutcome, AnnotationError> {
        let (a, b) = self.pair(image_id)?;
        match consensus_merge(a, b, self.resolutions.get(image_id).copied()) {
            Ok(label) => Ok(ConsensusOutcome::Consensus(label)),
            Err(LabelError::MissingAdjudication(_)) => Ok(ConsensusOutcome::PendingAdjudication),
            Err(e) => Err(e.into()),
        }
    }

    /// Images with an unresolved straight-reject disagreement, in image order.
    pub fn adjudication_queue(&self) -> Vec<String> {
        self.images
            .iter()
            .filter(|id| matches!(self.consensus(id), Ok(ConsensusOutcome::PendingAdjudication)))
            .cloned()
            .collect()
    }

    pub fn progress(&self) -> ProgressSummary {
        let raters = (0..2)
            .map(|r| {
                let done = self.current.iter().filter(|c| c[r].is_some()).count();
                RaterProgress { rater_id: self.raters[r].clone(), done, remaining: self.images.len() - done }
            })
            .collect();
        let mut consensus = ConsensusTally::default();
        let mut queue = Vec::new();
        for id in &self.images {
            match self.consensus(id) {
                Ok(ConsensusOutcome::Consensus(label)) => match label.tier {
                    _ if label.straight_reject => consensus.straight_reject += 1,
                    Some(Tier::Tier1) => consensus.tier1 += 1,
                    Some(Tier::Tier2) => consensus.tier2 += 1,
                    Some(Tier::Tier3) => consensus.tier3 += 1,
                    None => {}
                },
                Ok(ConsensusOutcome::PendingAdjudication) => queue.push(id.clone()),
                Err(_) => {}
            }
        }
        ProgressSummary { n_images: self.images.len(), raters, adjudication_queue: queue, consensus }
    }

    /// One line per image annotated by both raters, in image order.
    pub fn export_labels(&self) -> Vec<ExportedLabel> {
        let mut out = Vec::new();
        for id in &self.images {
            let (status, label) = match self.consensus(id) {
                Ok(ConsensusOutcome::Consensus(label)) => (ExportStatus::Consensus, Some(label)),
                Ok(ConsensusOutcome::PendingAdjudication) => (ExportStatus::PendingAdjudication, None),
                Err(_) => continue,
            };
            let annotations = self.current_annotations(id).expect("known image").into_iter().cloned().collect();
            out.push(ExportedLabel {
                image_id: id.clone(),
                status,
                label,
                annotations,
                sr_resolution: self.resolutions.get(id).copied(),
            });
        }
        out
    }

    /// Consensus labels only, skipping images that still need adjudication.
    pub fn consensus_labels(&self) -> Vec<ConsensusLabel> {
        self.export_labels().into_iter().filter_map(|e| e.label).collect()
    }

    /// In-memory store rebuilt from an export: the exported annotations become
    /// current (keeping their version numbers) and resolutions are restored.
    pub fn import_labels(
        images: Vec<String>,
        raters: [String; 2],
        lines: &[ExportedLabel],
    ) -> Result<Self, AnnotationError> {
        let mut store = Self::new(images, raters)?;
        for line in lines {
            let i = store.image_slot(&line.image_id)?;
            for s in &line.annotations {
                if s.annotation.image_id != line.image_id {
                    return Err(AnnotationError::InvalidConfig(format!(
                        "annotation for {} listed under {}",
                        s.annotation.image_id, line.image_id
                    )));
                }
                s.annotation.validate()?;
                let r = store.rater_slot(&s.annotation.rater_id)?;
                store.current[i][r] = Some(store.history.len());
                store.history.push(s.clone());
            }
            if let Some(sr) = line.sr_resolution {
                store.apply(LogEvent::Resolution { image_id: line.image_id.clone(), straight_reject: sr })?;
            }
        }
        Ok(store)
    }

    /// Rewrites the backing log with the full history followed by the live
    /// resolutions, dropping torn lines and superseded resolution events.
    pub fn compact(&mut self) -> Result<(), AnnotationError> {
        let Some((path, _)) = &self.log else {
            return Ok(());
        };
        let path = path.clone();
        let io = |e: std::io::Error| AnnotationError::Io { path: path.display().to_string(), message: e.to_string() };
        let tmp = path.with_extension("compact.tmp");
        let mut text = Vec::new();
        let resolutions: BTreeMap<&String, &bool> = self.resolutions.iter().collect();
        let events = self.history.iter().cloned().map(LogEvent::Annotation).chain(
            resolutions.into_iter().map(|(id, &sr)| LogEvent::Resolution { image_id: id.clone(), straight_reject: sr }),
        );
        for event in events {
            serde_json::to_writer(&mut text, &event).expect("log events serialize");
            text.push(b'\n');
        }
        std::fs::write(&tmp, text).map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)?;
        let file = OpenOptions::new().append(true).open(&path).map_err(io)?;
        self.log = Some((path, file));
        Ok(())
    }
}
