use serde::{Deserialize, Serialize};

use super::graph::StageVars;
use super::ModelError;
use crate::autodiff::Tape;
use crate::geometry::PointCloud;
use crate::Real;

/// Points, structural representations and scaling factors of one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageState<T> {
    pub points: Vec<[T; 3]>,
    /// Row-major `|S| x U`; row `i` is the representation of point `i`.
    pub structure: Vec<T>,
    pub latent_width: usize,
    pub alpha: Vec<T>,
    /// Index into the previous stage for every point; `None` at the root.
    pub parent: Option<Vec<usize>>,
}

impl<T: Real> StageState<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn structure_row(&self, i: usize) -> &[T] {
        &self.structure[i * self.latent_width..(i + 1) * self.latent_width]
    }

    pub(crate) fn from_vars(tape: &Tape<T>, vars: &StageVars, parent: Option<Vec<usize>>) -> Self {
        let n = vars.count;
        let pts = tape.value(vars.points).data();
        let points = (0..n).map(|j| [pts[j], pts[n + j], pts[2 * n + j]]).collect();
        let h = tape.value(vars.structure);
        let (u, m) = h.dims2().expect("rank-2 structure");
        let mut structure = Vec::with_capacity(n * u);
        for &col in &vars.structure_index {
            structure.extend((0..u).map(|r| h.data()[r * m + col]));
        }
        Self {
            points,
            structure,
            latent_width: u,
            alpha: tape.value(vars.alpha).data().to_vec(),
            parent,
        }
    }
}

/// Every stage of one generation, root first. Parent pointers form the
/// expansion tree; the last stage is the generated cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace<T> {
    pub stages: Vec<StageState<T>>,
    pub k_schedule: Vec<usize>,
}

impl<T: Real> GenerationTrace<T> {
    pub(crate) fn from_vars(tape: &Tape<T>, stages: &[StageVars], k_schedule: &[usize]) -> Self {
        let stages = stages
            .iter()
            .enumerate()
            .map(|(d, v)| {
                let parent = (d > 0).then(|| v.structure_index.clone());
                StageState::from_vars(tape, v, parent)
            })
            .collect();
        Self {
            stages,
            k_schedule: k_schedule.to_vec(),
        }
    }

    /// Number of expansion stages `D`.
    pub fn depth(&self) -> usize {
        self.stages.len() - 1
    }

    pub fn leaves(&self) -> &StageState<T> {
        self.stages.last().expect("trace has a root stage")
    }

    pub fn output_cloud(&self) -> PointCloud<T> {
        PointCloud::new(self.leaves().points.clone()).expect("generated points are finite")
    }

    pub fn stage_cloud(&self, d: usize) -> PointCloud<T> {
        PointCloud::new(self.stages[d].points.clone()).expect("generated points are finite")
    }
}

/// Labels every point of stage `stage` with the index of its ancestor at
/// stage `ancestor`, found by following parent pointers.
pub fn segment<T: Real>(trace: &GenerationTrace<T>, stage: usize, ancestor: usize) -> Result<Vec<usize>, ModelError> {
    if ancestor >= stage || stage > trace.depth() {
        return Err(ModelError::StageOrder {
            stage,
            ancestor,
            depth: trace.depth(),
        });
    }
    let mut labels: Vec<usize> = (0..trace.stages[stage].len()).collect();
    for d in (ancestor + 1..=stage).rev() {
        let parent = trace.stages[d].parent.as_ref().expect("non-root stage has parents");
        for l in labels.iter_mut() {
            *l = parent[*l];
        }
    }
    Ok(labels)
}
