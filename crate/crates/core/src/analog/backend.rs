use std::collections::BTreeMap;

use serde::Serialize;

use crate::math::{streams, Mat, Rng};
use crate::network::Mlp;

use super::{program_weights, BackendError, CrossbarArray, CrossbarConfig};

/// Hardware event classes seen by cost accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// One input vector read through a weight array.
    ForwardRead,
    /// One error vector read through a weight array's transposed periphery.
    TransposedRead,
    /// One error vector projected through the shared feedback array.
    FeedbackRead,
    /// Re-programming of one weight array.
    ProgramWrite,
    /// Outer-product gradient of one layer for one batch in a weight
    /// gradient unit.
    GradientCompute,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::ForwardRead => "forward_read",
            EventKind::TransposedRead => "transposed_read",
            EventKind::FeedbackRead => "feedback_read",
            EventKind::ProgramWrite => "program_write",
            EventKind::GradientCompute => "gradient_compute",
        }
    }
}

/// A single accounted event. `layer` is the 1-based weight layer; the
/// feedback array uses layer 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct HwEvent {
    pub kind: EventKind,
    pub layer: usize,
    pub rows: usize,
    pub cols: usize,
    pub subarrays: usize,
    /// Batch size for gradient events, 1 otherwise.
    pub vectors: usize,
}

pub trait EventSink: Send {
    fn record(&mut self, event: &HwEvent);
}

/// Aggregated counters per `(kind, layer)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EventTally {
    counts: BTreeMap<(EventKind, usize), TallyEntry>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TallyEntry {
    pub events: u64,
    pub subarray_ops: u64,
    /// Cell-level work: cells read or written, or MACs for gradients.
    pub cell_ops: u64,
}

impl EventTally {
    pub fn get(&self, kind: EventKind, layer: usize) -> TallyEntry {
        self.counts.get(&(kind, layer)).copied().unwrap_or_default()
    }

    pub fn total(&self, kind: EventKind) -> TallyEntry {
        self.counts.iter().filter(|((k, _), _)| *k == kind).fold(TallyEntry::default(), |acc, (_, e)| TallyEntry {
            events: acc.events + e.events,
            subarray_ops: acc.subarray_ops + e.subarray_ops,
            cell_ops: acc.cell_ops + e.cell_ops,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (EventKind, usize, TallyEntry)> + '_ {
        self.counts.iter().map(|(&(k, l), &e)| (k, l, e))
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn clear(&mut self) {
        self.counts.clear();
    }
}

impl EventSink for EventTally {
    fn record(&mut self, ev: &HwEvent) {
        let e = self.counts.entry((ev.kind, ev.layer)).or_default();
        e.events += 1;
        e.subarray_ops += ev.subarrays as u64;
        e.cell_ops += (ev.rows * ev.cols * ev.vectors) as u64;
    }
}

#[derive(Debug)]
#[allow(clippy::large_enum_variant)]
enum Engine {
    Digital,
    Analog(AnalogEngine),
}

#[derive(Debug)]
struct AnalogEngine {
    layers: Vec<CrossbarArray>,
    feedback: Option<CrossbarArray>,
    device_rng: Rng,
    program_rng: Rng,
}

/// Compute substrate for every matrix-vector product of training.
///
/// The digital engine computes exact products; the analog engine routes them
/// through programmed [`CrossbarArray`]s. Both report the same events, so
/// cost accounting does not depend on which one ran.
pub struct Backend {
    cfg: CrossbarConfig,
    engine: Engine,
    tally: EventTally,
    sink: Option<Box<dyn EventSink>>,
    recording: bool,
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backend")
            .field("analog", &self.is_analog())
            .field("cfg", &self.cfg)
            .field("recording", &self.recording)
            .finish()
    }
}

impl Backend {
    /// Exact products; default subarray geometry for event accounting.
    pub fn digital() -> Self {
        Self::digital_with_geometry(CrossbarConfig::default())
    }

    /// Exact products; `cfg` only sets the geometry reported in events.
    pub fn digital_with_geometry(cfg: CrossbarConfig) -> Self {
        Backend { cfg, engine: Engine::Digital, tally: EventTally::default(), sink: None, recording: true }
    }

    /// Simulated crossbars. Device factors and programming noise are drawn
    /// from streams of `seed`.
    pub fn analog(cfg: CrossbarConfig, seed: u64) -> Result<Self, BackendError> {
        cfg.validate()?;
        let engine = Engine::Analog(AnalogEngine {
            layers: Vec::new(),
            feedback: None,
            device_rng: Rng::derive(seed, streams::DEVICE),
            program_rng: Rng::derive(seed, streams::PROGRAM),
        });
        Ok(Backend { cfg, engine, tally: EventTally::default(), sink: None, recording: true })
    }

    pub fn is_analog(&self) -> bool {
        matches!(self.engine, Engine::Analog(_))
    }

    pub fn config(&self) -> &CrossbarConfig {
        &self.cfg
    }

    /// Forwards every recorded event to `sink` as well as the internal tally.
    pub fn attach_sink(&mut self, sink: Box<dyn EventSink>) {
        self.sink = Some(sink);
    }

    pub fn detach_sink(&mut self) -> Option<Box<dyn EventSink>> {
        self.sink.take()
    }

    /// Events are only accounted while recording is on (evaluation passes
    /// turn it off).
    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn recording(&self) -> bool {
        self.recording
    }

    pub fn tally(&self) -> &EventTally {
        &self.tally
    }

    pub fn take_tally(&mut self) -> EventTally {
        std::mem::take(&mut self.tally)
    }

    /// Programs fresh arrays for every layer of `mlp` and, when given, the
    /// feedback master matrix. No-op for the digital engine.
    pub fn load(&mut self, mlp: &Mlp, feedback: Option<&Mat>) -> Result<(), BackendError> {
        if let Engine::Analog(an) = &mut self.engine {
            an.layers.clear();
            for w in mlp.weights() {
                let mut arr = CrossbarArray::new(w.cols(), w.rows(), &self.cfg, &mut an.device_rng)?;
                arr.program(w, &mut an.program_rng)?;
                an.layers.push(arr);
            }
            an.feedback = match feedback {
                Some(b) if !b.is_empty() => Some(program_weights(b, &self.cfg, &mut an.device_rng)?),
                _ => None,
            };
        }
        Ok(())
    }

    /// Programmed array of layer `i` (1-based), if analog and loaded.
    pub fn array(&self, layer: usize) -> Option<&CrossbarArray> {
        match &self.engine {
            Engine::Analog(an) => an.layers.get(layer.wrapping_sub(1)),
            Engine::Digital => None,
        }
    }

    fn emit(&mut self, kind: EventKind, layer: usize, rows: usize, cols: usize, vectors: usize) {
        if !self.recording {
            return;
        }
        let subarrays = self.cfg.subarray_count(rows, cols);
        let (count, per) = match kind {
            EventKind::GradientCompute | EventKind::ProgramWrite => (1, vectors),
            _ => (vectors, 1),
        };
        let ev = HwEvent { kind, layer, rows, cols, subarrays, vectors: per };
        for _ in 0..count {
            self.tally.record(&ev);
            if let Some(s) = self.sink.as_mut() {
                s.record(&ev);
            }
        }
    }

    /// `W_layer · x`, one forward read per column of `x`.
    pub fn matvec(&mut self, layer: usize, w: &Mat, x: &Mat) -> Result<Mat, BackendError> {
        if w.cols() != x.rows() {
            return Err(BackendError::Shape { what: "matvec", expected: (w.cols(), x.cols()), got: x.shape() });
        }
        let y = match &self.engine {
            Engine::Digital => w.matmul(x)?,
            Engine::Analog(an) => an.layers.get(layer - 1).ok_or(BackendError::NotLoaded(layer))?.matvec(x)?,
        };
        self.emit(EventKind::ForwardRead, layer, w.cols(), w.rows(), x.cols());
        Ok(y)
    }

    /// `W_layerᵀ · x` through the transposed readout.
    pub fn matvec_transposed(&mut self, layer: usize, w: &Mat, x: &Mat) -> Result<Mat, BackendError> {
        if w.rows() != x.rows() {
            return Err(BackendError::Shape {
                what: "matvec_transposed",
                expected: (w.rows(), x.cols()),
                got: x.shape(),
            });
        }
        let y = match &self.engine {
            Engine::Digital => w.t_matmul(x)?,
            Engine::Analog(an) => {
                an.layers.get(layer - 1).ok_or(BackendError::NotLoaded(layer))?.matvec_transposed(x)?
            }
        };
        self.emit(EventKind::TransposedRead, layer, w.cols(), w.rows(), x.cols());
        Ok(y)
    }

    /// `master · e` through the shared feedback array.
    pub fn project(&mut self, master: &Mat, e: &Mat) -> Result<Mat, BackendError> {
        if master.cols() != e.rows() {
            return Err(BackendError::Shape { what: "project", expected: (master.cols(), e.cols()), got: e.shape() });
        }
        let y = match &self.engine {
            Engine::Digital => master.matmul(e)?,
            Engine::Analog(an) => an.feedback.as_ref().ok_or(BackendError::NotLoaded(0))?.matvec(e)?,
        };
        self.emit(EventKind::FeedbackRead, 0, master.cols(), master.rows(), e.cols());
        Ok(y)
    }

    /// Writes new weights for `layer`. The analog engine re-programs the
    /// devices whose level changed.
    ///
    /// Returns the weights actually held afterwards (see
    /// [`CrossbarArray::realized`]); the digital engine returns `w` unchanged.
    pub fn program(&mut self, layer: usize, w: &Mat) -> Result<Mat, BackendError> {
        let held = match &mut self.engine {
            Engine::Analog(an) => {
                let arr = an.layers.get_mut(layer - 1).ok_or(BackendError::NotLoaded(layer))?;
                arr.program(w, &mut an.program_rng)?;
                arr.realized(w)
            }
            Engine::Digital => w.clone(),
        };
        self.emit(EventKind::ProgramWrite, layer, w.cols(), w.rows(), 1);
        Ok(held)
    }

    pub fn note_gradient(&mut self, layer: usize, rows: usize, cols: usize, batch: usize) {
        self.emit(EventKind::GradientCompute, layer, rows, cols, batch);
    }
}
