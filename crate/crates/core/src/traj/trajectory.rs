use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::ControlInput;
use crate::error::{Error, Result};
use crate::model::State;

/// Per-timestep flag marking whether the free foot is in ground contact.
/// An empty schedule means the foot never touches the ground.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StanceSchedule(pub Vec<bool>);

impl StanceSchedule {
    pub fn all_swing(len: usize) -> Self {
        StanceSchedule(vec![false; len])
    }

    pub fn is_stance(&self, t: usize) -> bool {
        self.0.get(t).copied().unwrap_or(false)
    }

    pub fn any_stance(&self) -> bool {
        self.0.iter().any(|&s| s)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Run-length encoding as `(count, in_contact)` pairs.
    pub fn to_rle(&self) -> Vec<(usize, bool)> {
        let mut out: Vec<(usize, bool)> = Vec::new();
        for &s in &self.0 {
            match out.last_mut() {
                Some((n, v)) if *v == s => *n += 1,
                _ => out.push((1, s)),
            }
        }
        out
    }

    pub fn from_rle(runs: &[(usize, bool)]) -> Self {
        StanceSchedule(
            runs.iter()
                .flat_map(|&(n, v)| std::iter::repeat(v).take(n))
                .collect(),
        )
    }
}

/// A recorded (or synthesized) state-action trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Control period, s.
    pub dt: f64,
    pub states: Vec<State>,
    pub actions: Vec<ControlInput>,
    /// World CoM of every body at every state, or empty when unavailable.
    pub body_positions: Vec<Vec<[f64; 2]>>,
    pub loaded: bool,
    pub meta: BTreeMap<String, String>,
    pub stance: StanceSchedule,
}

impl Trajectory {
    /// Number of control steps.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn has_body_positions(&self) -> bool {
        !self.body_positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Format("dt must be positive".into()));
        }
        if self.states.len() != self.actions.len() + 1 {
            return Err(Error::Format(format!(
                "{} states for {} actions; expected one more state than actions",
                self.states.len(),
                self.actions.len()
            )));
        }
        if self.has_body_positions() && self.body_positions.len() != self.states.len() {
            return Err(Error::Format(format!(
                "{} body-position frames for {} states",
                self.body_positions.len(),
                self.states.len()
            )));
        }
        if !self.stance.is_empty() && self.stance.len() != self.states.len() {
            return Err(Error::Format(format!(
                "stance schedule covers {} steps, trajectory has {} states",
                self.stance.len(),
                self.states.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    dt: f64,
    loaded: bool,
    joint_count: usize,
    body_count: usize,
    body_positions: bool,
    #[serde(default)]
    stance: Vec<(usize, bool)>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

/// Path of the metadata file written next to a trajectory CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the CSV (one row per state; the last row has empty action cells)
/// and its JSON sidecar.
pub fn save_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    traj.validate()?;
    let nj = traj.states.first().map(|s| s.q.len()).unwrap_or(0);
    let nb = traj.body_positions.first().map(|b| b.len()).unwrap_or(0);

    let mut header = vec!["t".to_string()];
    header.extend((0..nj).map(|k| format!("q_{k}")));
    header.extend((0..nj).map(|k| format!("qdot_{k}")));
    header.extend((0..nj).map(|k| format!("a_{k}")));
    for j in 0..nb {
        header.push(format!("x_{j}"));
        header.push(format!("y_{j}"));
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
    for (t, s) in traj.states.iter().enumerate() {
        let mut row = Vec::with_capacity(header.len());
        row.push(fmt_f64(t as f64 * traj.dt));
        row.extend(s.q.iter().map(|&v| fmt_f64(v)));
        row.extend(s.qdot.iter().map(|&v| fmt_f64(v)));
        match traj.actions.get(t) {
            Some(a) => row.extend(a.q_target.iter().map(|&v| fmt_f64(v))),
            None => row.extend(std::iter::repeat(String::new()).take(nj)),
        }
        if let Some(frame) = traj.body_positions.get(t) {
            for p in frame {
                row.push(fmt_f64(p[0]));
                row.push(fmt_f64(p[1]));
            }
        }
        w.write_record(&row).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;

    let sidecar = Sidecar {
        dt: traj.dt,
        loaded: traj.loaded,
        joint_count: nj,
        body_count: nb,
        body_positions: traj.has_body_positions(),
        stance: traj.stance.to_rle(),
        meta: traj.meta.clone(),
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
    let nj = sidecar.joint_count;
    let nb = if sidecar.body_positions { sidecar.body_count } else { 0 };

    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(data.as_slice());
    let header = r.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    let mut expected = vec!["t".to_string()];
    expected.extend((0..nj).map(|k| format!("q_{k}")));
    expected.extend((0..nj).map(|k| format!("qdot_{k}")));
    expected.extend((0..nj).map(|k| format!("a_{k}")));
    for j in 0..nb {
        expected.push(format!("x_{j}"));
        expected.push(format!("y_{j}"));
    }
    for name in &expected {
        if !header.iter().any(|h| h == name) {
            return Err(Error::Format(format!("missing column '{name}'")));
        }
    }
    if header.len() != expected.len() {
        return Err(Error::Format(format!(
            "header has {} columns, expected {}",
            header.len(),
            expected.len()
        )));
    }

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("row {}: {e}", i + 1)))?;
        if rec.len() != expected.len() {
            return Err(Error::Format(format!(
                "row {}: expected {} fields, found {}",
                i + 1,
                expected.len(),
                rec.len()
            )));
        }
        rows.push(rec);
    }
    if rows.is_empty() {
        return Err(Error::Format("trajectory has no rows".into()));
    }
    let parse = |row: usize, field: &str| -> Result<f64> {
        field
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Format(format!("row {row}: cannot parse '{field}'")))
    };

    let n = rows.len();
    let mut states = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n.saturating_sub(1));
    let mut bodies = Vec::new();
    for (i, rec) in rows.iter().enumerate() {
        let row = i + 1;
        let vals = |range: std::ops::Range<usize>| -> Result<Vec<f64>> {
            range.map(|c| parse(row, &rec[c])).collect()
        };
        let q = vals(1..1 + nj)?;
        let qdot = vals(1 + nj..1 + 2 * nj)?;
        states.push(State { q, qdot });
        let action_cells = &rec.iter().collect::<Vec<_>>()[1 + 2 * nj..1 + 3 * nj];
        let empty = action_cells.iter().all(|c| c.trim().is_empty());
        if i + 1 < n {
            if empty && nj > 0 {
                return Err(Error::Format(format!("row {row}: missing action")));
            }
            actions.push(ControlInput::new(vals(1 + 2 * nj..1 + 3 * nj)?));
        } else if !empty {
            return Err(Error::Format(format!(
                "row {row}: last row must not carry an action"
            )));
        }
        if nb > 0 {
            let flat = vals(1 + 3 * nj..1 + 3 * nj + 2 * nb)?;
            bodies.push(flat.chunks(2).map(|c| [c[0], c[1]]).collect());
        }
    }
    let traj = Trajectory {
        dt: sidecar.dt,
        states,
        actions,
        body_positions: bodies,
        loaded: sidecar.loaded,
        meta: sidecar.meta,
        stance: StanceSchedule::from_rle(&sidecar.stance),
    };
    traj.validate()?;
    Ok(traj)
}
