//! Ordered event records and the brute-force oracle simulator.

use evhand_tensor::Scalar;

use crate::error::{EventError, Result};
use crate::grid::Image;
use crate::histogram::{EventHistogram, NEGATIVE, POSITIVE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    /// Timestamp in microseconds.
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

/// Time-ordered event records over a fixed sensor size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    height: usize,
    width: usize,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(height: usize, width: usize, events: Vec<Event>) -> Result<Self> {
        let mut last = 0u64;
        for e in &events {
            if e.t < last {
                return Err(EventError::InvalidStream(format!(
                    "timestamp {} after {}",
                    e.t, last
                )));
            }
            if (e.x as usize) >= width || (e.y as usize) >= height {
                return Err(EventError::InvalidStream(format!(
                    "event at ({}, {}) outside {}x{}",
                    e.x, e.y, height, width
                )));
            }
            last = e.t;
        }
        Ok(Self {
            height,
            width,
            events,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            events: Vec::new(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first_t(&self) -> Option<u64> {
        self.events.first().map(|e| e.t)
    }

    pub fn last_t(&self) -> Option<u64> {
        self.events.last().map(|e| e.t)
    }
}

/// How the oracle maintains its per-pixel reference level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceMode {
    /// True integrate-and-fire: the reference advances only by
    /// `emitted * C * sign`, so sub-threshold residual carries across steps.
    #[default]
    Carry,
    /// Reference resets to the previous frame's value every pair. Makes the
    /// time-reversal invariant exact.
    ResetPerPair,
}

/// Brute-force event camera model over a dense micro-step frame sequence.
///
/// Per pixel, each consecutive log-intensity pair emits
/// `floor(|L_next - reference| / c)` events of the matching polarity with
/// timestamps spread uniformly inside the step.
pub fn oracle_simulate_events<F: Scalar>(
    frames: &[Image<F>],
    c: F,
    t0_us: u64,
    dt_us: u64,
    mode: ReferenceMode,
) -> Result<EventStream> {
    if c <= F::zero() {
        return Err(EventError::NonpositiveThreshold(c.to_f64_c()));
    }
    if frames.len() < 2 {
        return Err(EventError::FewerThanTwoFrames(frames.len()));
    }
    let (h, w) = (frames[0].height(), frames[0].width());
    for f in frames {
        if f.height() != h || f.width() != w {
            return Err(EventError::ShapeMismatch("oracle frame sizes differ".into()));
        }
    }
    let mut reference: Vec<F> = frames[0].data().to_vec();
    let mut events: Vec<Event> = Vec::new();
    for (i, pair) in frames.windows(2).enumerate() {
        let t_step = t0_us + i as u64 * dt_us;
        let mut step_events: Vec<Event> = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let px = y * w + x;
                if mode == ReferenceMode::ResetPerPair {
                    reference[px] = pair[0].get(y, x);
                }
                let d = pair[1].get(y, x) - reference[px];
                let n = (d.abs() / c).floor().to_f64_c() as u64;
                if n == 0 {
                    continue;
                }
                let polarity = if d > F::zero() {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                };
                let sign = if d > F::zero() { F::one() } else { -F::one() };
                reference[px] += sign * F::from_f64_c(n as f64) * c;
                for k in 0..n {
                    let t = t_step + (k + 1) * dt_us / (n + 1);
                    step_events.push(Event {
                        t,
                        x: x as u16,
                        y: y as u16,
                        polarity,
                    });
                }
            }
        }
        step_events.sort_by_key(|e| (e.t, e.y, e.x, e.polarity == Polarity::Negative));
        events.extend(step_events);
    }
    EventStream::new(h, w, events)
}

/// Counts events per pixel and polarity inside the half-open window
/// `[t_start, t_end)`.
pub fn events_to_histogram(
    stream: &EventStream,
    t_start: u64,
    t_end: u64,
) -> Result<EventHistogram> {
    if t_start > t_end {
        return Err(EventError::InvalidWindow(t_start, t_end));
    }
    let mut out = EventHistogram::zeros(stream.height(), stream.width());
    for e in stream.events() {
        if e.t >= t_start && e.t < t_end {
            let ch = match e.polarity {
                Polarity::Positive => POSITIVE,
                Polarity::Negative => NEGATIVE,
            };
            out.add(e.y as usize, e.x as usize, ch, 1);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_sequence_emits_nothing() {
        let f = Image::full(4, 4, 0.5f64);
        let s = oracle_simulate_events(&[f.clone(), f.clone(), f], 0.2, 0, 1000, Default::default())
            .unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn step_of_two_thresholds_emits_two_positive_events() {
        let a = Image::full(3, 3, 0.0f64);
        let mut b = a.clone();
        b.set(1, 2, 0.4);
        let s = oracle_simulate_events(&[a, b], 0.2, 0, 1000, Default::default()).unwrap();
        assert_eq!(s.len(), 2);
        for e in s.events() {
            assert_eq!((e.x, e.y), (2, 1));
            assert_eq!(e.polarity, Polarity::Positive);
            assert!(e.t > 0 && e.t < 1000);
        }
    }

    #[test]
    fn fewer_than_two_frames_rejected() {
        let f = Image::<f64>::zeros(2, 2);
        assert!(matches!(
            oracle_simulate_events(&[f], 0.2, 0, 1000, Default::default()),
            Err(EventError::FewerThanTwoFrames(1))
        ));
    }

    #[test]
    fn histogram_window_is_half_open() {
        let events = vec![
            Event {
                t: 5,
                x: 1,
                y: 2,
                polarity: Polarity::Positive,
            },
            Event {
                t: 10,
                x: 1,
                y: 2,
                polarity: Polarity::Positive,
            },
        ];
        let s = EventStream::new(4, 4, events).unwrap();
        let h = events_to_histogram(&s, 0, 10).unwrap();
        assert_eq!(h.get(2, 1, POSITIVE), 1);
        assert_eq!(h.total(), 1);
    }

    #[test]
    fn empty_stream_zero_histogram() {
        let s = EventStream::empty(3, 3);
        let h = events_to_histogram(&s, 0, 100).unwrap();
        assert_eq!(h.total(), 0);
    }

    #[test]
    fn invalid_window_rejected() {
        let s = EventStream::empty(3, 3);
        assert!(events_to_histogram(&s, 10, 5).is_err());
    }

    #[test]
    fn stream_validates_order_and_bounds() {
        let bad_order = vec![
            Event {
                t: 10,
                x: 0,
                y: 0,
                polarity: Polarity::Positive,
            },
            Event {
                t: 5,
                x: 0,
                y: 0,
                polarity: Polarity::Positive,
            },
        ];
        assert!(EventStream::new(2, 2, bad_order).is_err());
        let oob = vec![Event {
            t: 1,
            x: 5,
            y: 0,
            polarity: Polarity::Positive,
        }];
        assert!(EventStream::new(2, 2, oob).is_err());
    }
}
