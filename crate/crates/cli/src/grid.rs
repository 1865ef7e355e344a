//! The comparison grid: every sampling setting under every curve.

use std::path::Path;

use curricle::schedules::ScheduleKind;

use crate::config::{ConfigError, RawConfig};

/// `(name, source, ss end, nnrs end, ss start, nnrs start)`.
type Row = (&'static str, &'static str, f64, f64, f64, f64);

const ROWS: &[Row] = &[
    ("tprs-1", "tprs", 0.0, 0.2, 0.0, 0.0),
    ("tprs-2", "tprs", 0.0, 0.3, 0.0, 0.0),
    ("tprs-3", "tprs", 0.0, 0.5, 0.0, 0.0),
    ("nnrs-1", "nnrs", 0.0, 0.2, 0.0, 0.0),
    ("nnrs-2", "nnrs", 0.0, 0.3, 0.0, 0.0),
    ("nnrs-3", "nnrs", 0.0, 0.5, 0.0, 0.0),
    ("ss-1", "none", 0.2, 0.0, 0.0, 0.0),
    ("ss-2", "none", 0.3, 0.0, 0.0, 0.0),
    ("ss-3", "none", 0.5, 0.0, 0.0, 0.0),
    ("ss-4", "none", 0.8, 0.0, 0.0, 0.0),
    ("ss-nnrs-1", "nnrs", 0.2, 0.2, 0.0, 0.0),
    ("ss-nnrs-2", "nnrs", 0.3, 0.3, 0.0, 0.0),
    ("ss-nnrs-3", "nnrs", 0.5, 0.2, 0.0, 0.0),
    ("ss-nnrs-4", "nnrs", 0.5, 0.5, 0.2, 0.2),
    ("ss-nnrs-5", "nnrs", 0.5, 0.5, 0.0, 0.0),
    ("ss-nnrs-6", "nnrs", 0.8, 0.2, 0.0, 0.0),
    ("ss-nnrs-7", "nnrs", 0.8, 0.5, 0.2, 0.2),
];

/// One teacher-forced baseline plus every row under each of the four curves.
/// With a base config every result is resolved before anything is returned,
/// so a bad base fails without output.
pub fn table_grid(base: Option<&RawConfig>, runs_dir: &Path) -> Result<Vec<(String, RawConfig)>, ConfigError> {
    let start = base.cloned().unwrap_or_default();
    let make = |name: &str, source: &str, ss: (f64, f64), nnrs: (f64, f64), kind: ScheduleKind| {
        let mut raw = start.clone();
        let pairs = [
            ("source", source.to_string()),
            ("ss.kind", kind.as_str().to_string()),
            ("ss.start", ss.0.to_string()),
            ("ss.end", ss.1.to_string()),
            ("nnrs.kind", kind.as_str().to_string()),
            ("nnrs.start", nnrs.0.to_string()),
            ("nnrs.end", nnrs.1.to_string()),
            ("out_dir", runs_dir.join(name).display().to_string()),
        ];
        for (k, v) in pairs {
            raw.set(k, v)?;
        }
        if base.is_some() {
            raw.resolve()?;
        }
        Ok::<_, ConfigError>((name.to_string(), raw))
    };

    let mut out = vec![make(
        "no-sampling",
        "none",
        (0.0, 0.0),
        (0.0, 0.0),
        ScheduleKind::Static,
    )?];
    for &(row, source, ss_end, nnrs_end, ss_start, nnrs_start) in ROWS {
        for kind in ScheduleKind::ALL {
            let name = format!("{row}_{}", kind.as_str());
            out.push(make(&name, source, (ss_start, ss_end), (nnrs_start, nnrs_end), kind)?);
        }
    }
    Ok(out)
}
