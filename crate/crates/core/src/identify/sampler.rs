use crate::dynamics::ControlInput;
use crate::error::{Error, Result};
use crate::model::{RobotModel, State};
use crate::traj::Trajectory;

/// A fixed-length window of a recorded trajectory: the measured state at its
/// start, the next `N` actions, and the measured body positions after each.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub source: usize,
    pub start: usize,
    pub initial: State,
    pub actions: Vec<ControlInput>,
    /// `[t][body]`, frames `start + 1 ..= start + N`.
    pub reference: Vec<Vec<[f64; 2]>>,
}

impl Fragment {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn check(&self, model: &RobotModel) -> Result<()> {
        self.initial.check(model.n_joints())?;
        if self.actions.len() != self.reference.len() {
            return Err(Error::Shape(format!(
                "fragment has {} actions but {} reference frames",
                self.actions.len(),
                self.reference.len()
            )));
        }
        for a in &self.actions {
            if a.q_target.len() != model.n_joints() {
                return Err(Error::dim("control input", model.n_joints(), a.q_target.len()));
            }
        }
        for f in &self.reference {
            if f.len() != model.n_links() {
                return Err(Error::Shape(format!(
                    "reference frame has {} bodies, model has {}",
                    f.len(),
                    model.n_links()
                )));
            }
        }
        Ok(())
    }
}

/// Start indices `(source, start)` for `count` fragments of length `horizon`.
///
/// Fragments are shared out over the sources as evenly as possible (earlier
/// sources take the remainder). Within a source of `A` actions carrying `b`
/// fragments the starts are `k * floor((A - N) / (b - 1))`.
pub fn fragment_starts(action_counts: &[usize], count: usize, horizon: usize) -> Result<Vec<(usize, usize)>> {
    if horizon == 0 {
        return Err(Error::Value("fragment horizon must be at least 1".into()));
    }
    if count == 0 {
        return Err(Error::Value("fragment count must be at least 1".into()));
    }
    if action_counts.is_empty() {
        return Err(Error::Value("no source trajectories".into()));
    }
    for (i, &a) in action_counts.iter().enumerate() {
        if a < horizon {
            return Err(Error::TooShort {
                source_index: i,
                len: a,
                horizon,
            });
        }
    }
    let s = action_counts.len();
    let mut out = Vec::with_capacity(count);
    for (i, &a) in action_counts.iter().enumerate() {
        let b = count / s + usize::from(i < count % s);
        if b == 0 {
            continue;
        }
        let spacing = if b > 1 { (a - horizon) / (b - 1) } else { 0 };
        out.extend((0..b).map(|k| (i, k * spacing)));
    }
    Ok(out)
}

/// Deterministic fragment batch drawn from measured trajectories.
pub fn sample_fragments(sources: &[&Trajectory], count: usize, horizon: usize) -> Result<Vec<Fragment>> {
    for (i, t) in sources.iter().enumerate() {
        t.validate()?;
        if !t.has_body_positions() {
            return Err(Error::Value(format!("source {i} carries no body positions")));
        }
    }
    let lens: Vec<usize> = sources.iter().map(|t| t.len()).collect();
    let starts = fragment_starts(&lens, count, horizon)?;
    Ok(starts
        .into_iter()
        .map(|(src, start)| {
            let t = sources[src];
            Fragment {
                source: src,
                start,
                initial: t.states[start].clone(),
                actions: t.actions[start..start + horizon].to_vec(),
                reference: t.body_positions[start + 1..=start + horizon].to_vec(),
            }
        })
        .collect())
}
