use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{EnvError, Intervention, ScheduleEntry, TaskSpec, Topology, MAX_STEPS};

const A: usize = 0;
const B: usize = 1;
const C: usize = 2;
const D: usize = 3;
const E: usize = 4;
const F: usize = 5;

fn all(room: usize, door: usize) -> ScheduleEntry {
    ScheduleEntry {
        room,
        subtask: None,
        door,
    }
}

fn only(room: usize, subtask: usize, door: usize) -> ScheduleEntry {
    ScheduleEntry {
        room,
        subtask: Some(subtask),
        door,
    }
}

fn train(topology: Topology) -> TaskSpec {
    let (rooms, doors, schedule, mixture, context_bit, variant) = match topology {
        Topology::LinearChain => (4, 6, vec![all(0, A), all(1, B), all(2, C)], vec![1.0], None, "train"),
        Topology::CommonAncestor => (
            3,
            6,
            vec![all(0, A), only(1, 0, B), only(1, 1, C)],
            vec![0.5, 0.5],
            None,
            "train",
        ),
        Topology::CommonDescendant => (
            3,
            6,
            vec![only(0, 0, A), only(0, 1, B), all(1, C)],
            vec![0.5, 0.5],
            None,
            "train",
        ),
        Topology::Forgetting => (3, 4, vec![all(0, A), all(1, C)], vec![1.0], Some(false), "a"),
    };
    TaskSpec {
        id: format!("{}/{variant}", topology.name()),
        topology,
        rooms,
        doors,
        schedule,
        mixture,
        context_bit,
        intervention: None,
        max_steps: MAX_STEPS,
    }
}

/// (variant, schedule entry, replacement door) for each single-door edit.
fn edits(topology: Topology) -> &'static [(&'static str, usize, usize)] {
    match topology {
        Topology::LinearChain => &[("transfer_first", 0, F), ("transfer_middle", 1, E), ("transfer_last", 2, D)],
        Topology::CommonAncestor => &[("transfer_root", 0, F), ("transfer_left", 1, E), ("transfer_right", 2, D)],
        Topology::CommonDescendant => &[("transfer_left", 0, F), ("transfer_right", 1, E), ("transfer_sink", 2, D)],
        Topology::Forgetting => &[],
    }
}

/// Names of the single-door transfer edits defined for `topology`.
pub fn transfer_variants(topology: Topology) -> Vec<&'static str> {
    edits(topology).iter().map(|e| e.0).collect()
}

/// Every catalogued task id, as `<topology>/<variant>`.
pub fn task_ids() -> Vec<&'static str> {
    vec![
        "linear_chain/train",
        "linear_chain/transfer_first",
        "linear_chain/transfer_middle",
        "linear_chain/transfer_last",
        "common_ancestor/train",
        "common_ancestor/transfer_root",
        "common_ancestor/transfer_left",
        "common_ancestor/transfer_right",
        "common_descendant/train",
        "common_descendant/transfer_left",
        "common_descendant/transfer_right",
        "common_descendant/transfer_sink",
        "forgetting/a",
        "forgetting/b",
    ]
}

pub fn make_task(topology: Topology, variant: &str) -> Result<TaskSpec, EnvError> {
    let base = train(topology);
    match (topology, variant) {
        (Topology::Forgetting, "a") => Ok(base),
        (Topology::Forgetting, "b") => Ok(TaskSpec {
            id: "forgetting/b".to_string(),
            schedule: vec![all(0, B), all(1, D)],
            context_bit: Some(true),
            ..base
        }),
        (Topology::Forgetting, _) => Err(EnvError::UnknownVariant(variant.to_string())),
        (_, "train") => Ok(base),
        _ => apply_intervention(&base, variant),
    }
}

pub fn task_by_id(id: &str) -> Result<TaskSpec, EnvError> {
    let (topology, variant) = id.split_once('/').ok_or_else(|| EnvError::BadId(id.to_string()))?;
    let topology = Topology::parse(topology).ok_or_else(|| EnvError::BadId(id.to_string()))?;
    make_task(topology, variant)
}

/// Replaces one door of `task`'s key schedule as named by `which`.
pub fn apply_intervention(task: &TaskSpec, which: &str) -> Result<TaskSpec, EnvError> {
    let &(name, entry, door) = edits(task.topology)
        .iter()
        .find(|e| e.0 == which)
        .ok_or_else(|| EnvError::UnknownVariant(which.to_string()))?;
    let mut out = task.clone();
    let from = out.schedule[entry].door;
    out.schedule[entry].door = door;
    out.intervention = Some(Intervention { entry, from, to: door });
    out.id = format!("{}/{name}", task.topology.name());
    out.validate()?;
    Ok(out)
}

impl TaskSpec {
    /// Undoes the recorded intervention, restoring the spec it was made from.
    pub fn revert_intervention(&self) -> TaskSpec {
        let mut out = self.clone();
        if let Some(iv) = out.intervention.take() {
            out.schedule[iv.entry].door = iv.from;
            out.id = train(self.topology).id;
        }
        out
    }

    pub fn describe(&self) -> String {
        let seqs: Vec<String> = (0..self.subtasks())
            .map(|s| self.optimal_sequence(s).iter().map(|&d| super::door_label(d)).collect())
            .collect();
        format!("{}: {}", self.id, seqs.join(" | "))
    }
}
