//! Simulated cameras and per-client frame delivery.
//!
//! A camera produces grayscale frames at a fixed rate. Each frame carries a
//! machine-readable test pattern: the top band encodes the sequence number and
//! the bottom band the capture time, 64 bits each, one bit per 2x4 pixel cell.
//!
//! Every client stream owns a bounded [`StreamQueue`]. When it is full the oldest
//! queued frame is discarded so a slow client always catches up to live video.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::clock::Timestamp;

const CELL_W: usize = 2;
const CELL_H: usize = 4;
pub const MIN_WIDTH: u32 = (64 * CELL_W) as u32;
pub const MIN_HEIGHT: u32 = (2 * CELL_H) as u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SurveillanceError {
    #[error("unknown camera {0:?}")]
    UnknownCamera(String),
    #[error("camera {0:?} has not produced a frame yet")]
    NoFrameYet(String),
    #[error("camera resolution {0}x{1} below the {MIN_WIDTH}x{MIN_HEIGHT} minimum")]
    BadResolution(u32, u32),
    #[error("stream queue capacity must be at least 1")]
    BadCapacity,
}

#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    pub camera: Arc<str>,
    pub seq: u64,
    pub at: Timestamp,
    pub width: u32,
    pub height: u32,
    pub pixels: Arc<[u8]>,
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("camera", &self.camera)
            .field("seq", &self.seq)
            .field("at", &self.at)
            .field("size", &(self.width, self.height))
            .finish()
    }
}

impl Frame {
    /// `FRAME <seq> <millis> <len>`; the payload bytes follow the newline.
    pub fn wire_header(&self) -> String {
        format!("FRAME {} {} {}\n", self.seq, self.at.millis(), self.pixels.len())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_pgm())
    }
}

/// Renders the synthetic test pattern for one frame.
pub fn render_pattern(width: u32, height: u32, seq: u64, at: Timestamp) -> Vec<u8> {
    let (w, h) = (width as usize, height as usize);
    let mut px = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            px[y * w + x] = ((x + 2 * y + seq as usize) % 200) as u8 + 28;
        }
    }
    stamp_bits(&mut px, w, 0, seq);
    stamp_bits(&mut px, w, h - CELL_H, at.millis() as u64);
    px
}

fn stamp_bits(px: &mut [u8], width: usize, top: usize, value: u64) {
    for bit in 0..64 {
        let on = (value >> (63 - bit)) & 1 == 1;
        let shade = if on { 255 } else { 0 };
        for dy in 0..CELL_H {
            let row = (top + dy) * width;
            for dx in 0..CELL_W {
                px[row + bit * CELL_W + dx] = shade;
            }
        }
    }
}

fn read_bits(px: &[u8], width: usize, top: usize) -> u64 {
    (0..64).fold(0u64, |acc, bit| {
        let mut sum = 0u32;
        for dy in 0..CELL_H {
            for dx in 0..CELL_W {
                sum += u32::from(px[(top + dy) * width + bit * CELL_W + dx]);
            }
        }
        let on = sum > 128 * (CELL_W * CELL_H) as u32;
        (acc << 1) | u64::from(on)
    })
}

/// Recovers `(seq, capture time)` from a test-pattern payload.
pub fn decode_pattern(pixels: &[u8], width: u32, height: u32) -> Option<(u64, Timestamp)> {
    let (w, h) = (width as usize, height as usize);
    if width < MIN_WIDTH || height < MIN_HEIGHT || pixels.len() != w * h {
        return None;
    }
    Some((read_bits(pixels, w, 0), Timestamp(read_bits(pixels, w, h - CELL_H) as i64)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CameraSpec {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub fps: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enqueue {
    Queued,
    DroppedOldest { dropped_seq: u64 },
    Closed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub produced: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub queued: u64,
}

pub type Waker = Arc<dyn Fn() + Send + Sync>;

#[derive(Debug, Default)]
struct QueueState {
    frames: VecDeque<Frame>,
    produced: u64,
    delivered: u64,
    dropped: u64,
    last_seq: Option<u64>,
    closed: bool,
}

/// Bounded drop-oldest frame queue between a camera and one client.
pub struct StreamQueue {
    id: u64,
    camera: String,
    capacity: usize,
    state: Mutex<QueueState>,
    waker: Option<Waker>,
}

impl fmt::Debug for StreamQueue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StreamQueue")
            .field("id", &self.id)
            .field("camera", &self.camera)
            .field("capacity", &self.capacity)
            .field("stats", &self.stats())
            .finish()
    }
}

impl StreamQueue {
    pub fn new(id: u64, camera: &str, capacity: usize, waker: Option<Waker>) -> Result<Self, SurveillanceError> {
        if capacity == 0 {
            return Err(SurveillanceError::BadCapacity);
        }
        Ok(Self { id, camera: camera.to_string(), capacity, state: Mutex::new(QueueState::default()), waker })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn camera(&self) -> &str {
        &self.camera
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn deliver(&self, frame: Frame) -> Enqueue {
        let outcome = {
            let mut st = self.state.lock().expect("stream lock");
            if st.closed {
                return Enqueue::Closed;
            }
            st.produced += 1;
            let outcome = if st.frames.len() == self.capacity {
                let old = st.frames.pop_front().expect("full queue has a head");
                st.dropped += 1;
                Enqueue::DroppedOldest { dropped_seq: old.seq }
            } else {
                Enqueue::Queued
            };
            st.frames.push_back(frame);
            outcome
        };
        if let Some(wake) = &self.waker {
            wake();
        }
        outcome
    }

    /// Takes the oldest queued frame.
    pub fn pop(&self) -> Option<Frame> {
        let mut st = self.state.lock().expect("stream lock");
        let frame = st.frames.pop_front()?;
        debug_assert!(st.last_seq.is_none_or(|s| s < frame.seq), "delivered seqs must increase");
        st.last_seq = Some(frame.seq);
        st.delivered += 1;
        Some(frame)
    }

    pub fn stats(&self) -> StreamStats {
        let st = self.state.lock().expect("stream lock");
        StreamStats { produced: st.produced, delivered: st.delivered, dropped: st.dropped, queued: st.frames.len() as u64 }
    }

    pub fn close(&self) {
        let mut st = self.state.lock().expect("stream lock");
        st.closed = true;
        st.frames.clear();
    }

    pub fn is_closed(&self) -> bool {
        self.state.lock().expect("stream lock").closed
    }
}

#[derive(Debug)]
struct Camera {
    spec: CameraSpec,
    name: Arc<str>,
    origin: Timestamp,
    scheduled: u64,
    seq: u64,
    latest: Option<Frame>,
    latest_meta: Option<(u64, Timestamp)>,
    streams: Vec<Arc<StreamQueue>>,
}

impl Camera {
    fn next_due(&self) -> Option<Timestamp> {
        if self.spec.fps == 0 {
            return None;
        }
        let n = self.scheduled as i64 + 1;
        Some(self.origin.plus_millis(n * 1000 / i64::from(self.spec.fps)))
    }

    fn render(&self, seq: u64, at: Timestamp) -> Frame {
        Frame {
            camera: Arc::clone(&self.name),
            seq,
            at,
            width: self.spec.width,
            height: self.spec.height,
            pixels: render_pattern(self.spec.width, self.spec.height, seq, at).into(),
        }
    }

    fn tick(&mut self, at: Timestamp) -> Option<Frame> {
        self.seq += 1;
        self.latest_meta = Some((self.seq, at));
        self.latest = None;
        self.streams.retain(|s| !s.is_closed());
        if self.streams.is_empty() {
            return None;
        }
        let frame = self.render(self.seq, at);
        for s in &self.streams {
            s.deliver(frame.clone());
        }
        self.latest = Some(frame.clone());
        Some(frame)
    }

    fn snapshot(&mut self) -> Option<Frame> {
        if self.latest.is_none() {
            let (seq, at) = self.latest_meta?;
            self.latest = Some(self.render(seq, at));
        }
        self.latest.clone()
    }
}

/// All cameras of the hub. Frames are only rendered when someone looks at them.
#[derive(Debug, Default)]
pub struct Surveillance {
    cameras: BTreeMap<String, Camera>,
    next_stream: u64,
}

impl Surveillance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_camera(&mut self, spec: CameraSpec, origin: Timestamp) -> Result<(), SurveillanceError> {
        if spec.width < MIN_WIDTH || spec.height < MIN_HEIGHT {
            return Err(SurveillanceError::BadResolution(spec.width, spec.height));
        }
        let name: Arc<str> = Arc::from(spec.id.as_str());
        self.cameras.insert(
            spec.id.clone(),
            Camera { spec, name, origin, scheduled: 0, seq: 0, latest: None, latest_meta: None, streams: Vec::new() },
        );
        Ok(())
    }

    pub fn spec(&self, camera: &str) -> Option<&CameraSpec> {
        self.cameras.get(camera).map(|c| &c.spec)
    }

    pub fn camera_ids(&self) -> impl Iterator<Item = &str> {
        self.cameras.keys().map(String::as_str)
    }

    fn camera_mut(&mut self, id: &str) -> Result<&mut Camera, SurveillanceError> {
        self.cameras.get_mut(id).ok_or_else(|| SurveillanceError::UnknownCamera(id.to_string()))
    }

    /// Produces the next frame of `camera` immediately.
    pub fn camera_tick(&mut self, camera: &str, at: Timestamp) -> Result<Frame, SurveillanceError> {
        let cam = self.camera_mut(camera)?;
        match cam.tick(at) {
            Some(frame) => Ok(frame),
            None => Ok(cam.snapshot().expect("a frame was just produced")),
        }
    }

    /// The earliest scheduled frame time across all cameras.
    pub fn next_due(&self) -> Option<Timestamp> {
        self.cameras.values().filter_map(Camera::next_due).min()
    }

    /// Produces every scheduled frame due at or before `at`, in time order per camera.
    pub fn run_until(&mut self, at: Timestamp) {
        for cam in self.cameras.values_mut() {
            while let Some(due) = cam.next_due().filter(|&d| d <= at) {
                cam.scheduled += 1;
                cam.tick(due);
            }
        }
    }

    pub fn open_stream(
        &mut self,
        camera: &str,
        capacity: usize,
        waker: Option<Waker>,
    ) -> Result<Arc<StreamQueue>, SurveillanceError> {
        self.next_stream += 1;
        let id = self.next_stream;
        let cam = self.camera_mut(camera)?;
        let queue = Arc::new(StreamQueue::new(id, camera, capacity, waker)?);
        cam.streams.push(Arc::clone(&queue));
        Ok(queue)
    }

    pub fn close_stream(&mut self, queue: &StreamQueue) {
        queue.close();
        if let Some(cam) = self.cameras.get_mut(queue.camera()) {
            cam.streams.retain(|s| s.id() != queue.id());
        }
    }

    /// Latest produced frame, without disturbing any stream.
    pub fn snapshot(&mut self, camera: &str) -> Result<Frame, SurveillanceError> {
        let cam = self.camera_mut(camera)?;
        cam.snapshot().ok_or_else(|| SurveillanceError::NoFrameYet(camera.to_string()))
    }

    /// Latest frame, or a freshly produced one if the camera has not run yet.
    pub fn capture(&mut self, camera: &str, at: Timestamp) -> Result<Frame, SurveillanceError> {
        match self.snapshot(camera) {
            Err(SurveillanceError::NoFrameYet(_)) => self.camera_tick(camera, at),
            other => other,
        }
    }
}
