//! Synchronized EPM/IPM time series and its CSV file format.
//!
//! ```text
//! # capsule-log scene_hash=<hex> sample_period_s=<f64> status=<complete|detached@t> extrapolated_steps=<n>
//! t,epm_x,epm_y,epm_z,ipm_x,ipm_y,ipm_vx,ipm_vy,f_x,f_y,f_z,f_n,theta,attached
//! ```
//!
//! Values are SI and written in shortest round-trip form, so reading a file
//! back reproduces every float bit for bit.

use std::io::{BufRead, Write};

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

pub const COLUMNS: [&str; 14] = [
    "t", "epm_x", "epm_y", "epm_z", "ipm_x", "ipm_y", "ipm_vx", "ipm_vy", "f_x", "f_y", "f_z", "f_n",
    "theta", "attached",
];

const MAGIC: &str = "# capsule-log";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed log: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub epm: Vector3<f64>,
    pub ipm_position: Vector2<f64>,
    pub ipm_velocity: Vector2<f64>,
    /// Magnetic force on the IPM (planar x, y and vertical z).
    pub magnetic_force: Vector3<f64>,
    pub normal_force: f64,
    pub theta: f64,
    pub attached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Termination {
    #[default]
    Complete,
    Detached {
        t: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub scene_hash: String,
    pub sample_period: f64,
    pub rows: Vec<LogRow>,
    pub termination: Termination,
    /// Integrator steps at which `c(v)` was evaluated outside its range.
    pub extrapolated_steps: usize,
}

impl TrajectoryLog {
    pub fn new(scene_hash: String, sample_period: f64) -> Self {
        Self {
            scene_hash,
            sample_period,
            rows: Vec::new(),
            termination: Termination::Complete,
            extrapolated_steps: 0,
        }
    }

    pub fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn time_span(&self) -> Option<(f64, f64)> {
        Some((self.rows.first()?.t, self.rows.last()?.t))
    }

    /// Appends `other` after this log, shifting its time base so the sample
    /// spacing continues unbroken.
    pub fn concat(&self, other: &TrajectoryLog) -> Result<TrajectoryLog, LogError> {
        if (self.sample_period - other.sample_period).abs() > 1e-12 * self.sample_period {
            return Err(LogError::Format("cannot join logs with different sample periods".into()));
        }
        let mut out = self.clone();
        let (Some(last), Some(first)) = (self.rows.last(), other.rows.first()) else {
            out.rows.extend_from_slice(&other.rows);
            return Ok(out);
        };
        let shift = last.t + self.sample_period - first.t;
        out.rows.extend(other.rows.iter().map(|r| LogRow { t: r.t + shift, ..*r }));
        out.extrapolated_steps += other.extrapolated_steps;
        if let Termination::Detached { t } = other.termination {
            out.termination = Termination::Detached { t: t + shift };
        }
        Ok(out)
    }

    /// Checks the strictly-increasing, uniformly-spaced time base.
    pub fn check_time_base(&self) -> Result<(), LogError> {
        for (k, w) in self.rows.windows(2).enumerate() {
            let dt = w[1].t - w[0].t;
            if !(dt > 0.0) {
                return Err(LogError::Format(format!("time does not increase at row {}", k + 1)));
            }
            if ((dt - self.sample_period) / self.sample_period).abs() > 1e-6 {
                return Err(LogError::Format(format!(
                    "row {} spacing {dt} s differs from the {} s sample period",
                    k + 1,
                    self.sample_period
                )));
            }
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), LogError> {
        let status = match self.termination {
            Termination::Complete => "complete".to_string(),
            Termination::Detached { t } => format!("detached@{t}"),
        };
        writeln!(
            out,
            "{MAGIC} scene_hash={} sample_period_s={} status={status} extrapolated_steps={}",
            self.scene_hash, self.sample_period, self.extrapolated_steps
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COLUMNS)?;
        for r in &self.rows {
            let fields = [
                r.t,
                r.epm.x,
                r.epm.y,
                r.epm.z,
                r.ipm_position.x,
                r.ipm_position.y,
                r.ipm_velocity.x,
                r.ipm_velocity.y,
                r.magnetic_force.x,
                r.magnetic_force.y,
                r.magnetic_force.z,
                r.normal_force,
                r.theta,
            ];
            let mut rec: Vec<String> = fields.iter().map(|v| v.to_string()).collect();
            rec.push(if r.attached { "1" } else { "0" }.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("log text is utf-8")
    }

    pub fn read<R: BufRead>(mut input: R) -> Result<Self, LogError> {
        let mut header = String::new();
        input.read_line(&mut header)?;
        let header = header.trim_end();
        let rest = header
            .strip_prefix(MAGIC)
            .ok_or_else(|| LogError::Format("missing capsule-log header line".into()))?;
        let mut scene_hash = None;
        let mut sample_period = None;
        let mut termination = Termination::Complete;
        let mut extrapolated_steps = 0;
        for kv in rest.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| LogError::Format(format!("bad header field '{kv}'")))?;
            match k {
                "scene_hash" => scene_hash = Some(v.to_string()),
                "sample_period_s" => sample_period = Some(parse_f64(v)?),
                "status" => {
                    termination = if v == "complete" {
                        Termination::Complete
                    } else if let Some(t) = v.strip_prefix("detached@") {
                        Termination::Detached { t: parse_f64(t)? }
                    } else {
                        return Err(LogError::Format(format!("unknown status '{v}'")));
                    }
                }
                "extrapolated_steps" => {
                    extrapolated_steps = v
                        .parse()
                        .map_err(|_| LogError::Format(format!("bad extrapolated_steps '{v}'")))?
                }
                _ => {}
            }
        }
        let mut log = TrajectoryLog {
            scene_hash: scene_hash.ok_or_else(|| LogError::Format("header lacks scene_hash".into()))?,
            sample_period: sample_period.ok_or_else(|| LogError::Format("header lacks sample_period_s".into()))?,
            rows: Vec::new(),
            termination,
            extrapolated_steps,
        };
        if !(log.sample_period > 0.0) {
            return Err(LogError::Format("sample period must be positive".into()));
        }

        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let cols = rdr.headers()?.clone();
        if cols.iter().ne(COLUMNS.iter().copied()) {
            return Err(LogError::Format(format!("unexpected columns: {cols:?}")));
        }
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != COLUMNS.len() {
                return Err(LogError::Format(format!("row {i} has {} fields", rec.len())));
            }
            let f: Vec<f64> = (0..13).map(|j| parse_f64(&rec[j])).collect::<Result<_, _>>()?;
            let attached = match &rec[13] {
                "1" => true,
                "0" => false,
                other => return Err(LogError::Format(format!("bad attached flag '{other}'"))),
            };
            log.rows.push(LogRow {
                t: f[0],
                epm: Vector3::new(f[1], f[2], f[3]),
                ipm_position: Vector2::new(f[4], f[5]),
                ipm_velocity: Vector2::new(f[6], f[7]),
                magnetic_force: Vector3::new(f[8], f[9], f[10]),
                normal_force: f[11],
                theta: f[12],
                attached,
            });
        }
        log.check_time_base()?;
        Ok(log)
    }

    pub fn parse(text: &str) -> Result<Self, LogError> {
        Self::read(text.as_bytes())
    }
}

fn parse_f64(s: &str) -> Result<f64, LogError> {
    s.trim()
        .parse()
        .map_err(|_| LogError::Format(format!("bad number '{s}'")))
}
