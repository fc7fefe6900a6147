use std::fmt;

/// Uniform departure/counting intervals over the analysis horizon.
///
/// Intervals are 0-based in memory; files and reports number them from 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    /// Wall-clock seconds since midnight at the start of interval 0.
    pub start: f64,
    /// Seconds.
    pub interval_length: f64,
    pub num_intervals: usize,
}

impl Default for TimeGrid {
    /// 06:00 to 10:00 in 15-minute intervals.
    fn default() -> Self {
        TimeGrid {
            start: 6.0 * 3600.0,
            interval_length: 900.0,
            num_intervals: 16,
        }
    }
}

impl TimeGrid {
    pub fn new(start: f64, interval_length: f64, num_intervals: usize) -> Self {
        assert!(interval_length > 0.0, "interval length must be positive");
        assert!(num_intervals >= 1, "at least one interval is required");
        TimeGrid {
            start,
            interval_length,
            num_intervals,
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.horizon()
    }

    pub fn horizon(&self) -> f64 {
        self.interval_length * self.num_intervals as f64
    }

    pub fn interval_start(&self, interval: usize) -> f64 {
        self.start + self.interval_length * interval as f64
    }

    /// Interval containing wall-clock time `at`, clamped to the grid.
    pub fn interval_of(&self, at: f64) -> usize {
        let raw = ((at - self.start) / self.interval_length).floor();
        if raw <= 0.0 {
            0
        } else {
            (raw as usize).min(self.num_intervals - 1)
        }
    }

    /// Grid of `steps` intervals that starts where this one ends.
    pub fn following(&self, steps: usize) -> TimeGrid {
        TimeGrid::new(self.end(), self.interval_length, steps)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClockParseError(pub String);

impl fmt::Display for ClockParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid clock time `{}` (expected HH:MM)", self.0)
    }
}

impl std::error::Error for ClockParseError {}

/// Parses `HH:MM` (or `HH:MM:SS`) into seconds since midnight.
pub fn parse_clock(text: &str) -> Result<f64, ClockParseError> {
    let err = || ClockParseError(text.to_string());
    let parts: Vec<&str> = text.trim().split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(err());
    }
    let mut fields = [0u32; 3];
    for (slot, part) in fields.iter_mut().zip(&parts) {
        *slot = part.parse().map_err(|_| err())?;
    }
    let [h, m, s] = fields;
    if h > 47 || m > 59 || s > 59 {
        return Err(err());
    }
    Ok(f64::from(h * 3600 + m * 60 + s))
}

/// Formats seconds since midnight as `HH:MM`, or `HH:MM:SS` when needed.
pub fn format_clock(seconds: f64) -> String {
    let total = seconds.round() as i64;
    let (h, m, s) = (total / 3600, (total % 3600) / 60, total % 60);
    if s == 0 {
        format!("{h:02}:{m:02}")
    } else {
        format!("{h:02}:{m:02}:{s:02}")
    }
}
