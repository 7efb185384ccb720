//! Key-door tasks: rooms connected by doors that open only with the key
//! lying in the current room.
//!
//! The agent starts in room 0. Choosing the door whose key is present moves
//! it to the next room; any other door leaves the state unchanged. Opening
//! the right door in the last decision room ends the episode with reward 1.
//! Episodes are also cut off after `max_steps` decisions with reward 0.
//! A state is encoded as one-hot(room) ++ one-hot(key), plus one context
//! bit for the forgetting pair.

mod tasks;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use tasks::{apply_intervention, make_task, task_by_id, task_ids, transfer_variants};

/// Episode cut-off used by every catalogued task.
pub const MAX_STEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    LinearChain,
    CommonAncestor,
    CommonDescendant,
    Forgetting,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::LinearChain => "linear_chain",
            Topology::CommonAncestor => "common_ancestor",
            Topology::CommonDescendant => "common_descendant",
            Topology::Forgetting => "forgetting",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [
            Topology::LinearChain,
            Topology::CommonAncestor,
            Topology::CommonDescendant,
            Topology::Forgetting,
        ]
        .into_iter()
        .find(|t| t.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvError {
    #[error("unknown task variant {0:?}")]
    UnknownVariant(String),
    #[error("malformed task id {0:?} (expected <topology>/<variant>)")]
    BadId(String),
    #[error("key schedule has {found} keys for room {room}, subtask {subtask} (need exactly one)")]
    Schedule { room: usize, subtask: usize, found: usize },
}

/// Key placed in `room`; `subtask: None` places it for every subtask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub room: usize,
    pub subtask: Option<usize>,
    pub door: usize,
}

/// Replacement of one schedule entry's door.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intervention {
    pub entry: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub topology: Topology,
    /// Includes the terminal room.
    pub rooms: usize,
    pub doors: usize,
    pub schedule: Vec<ScheduleEntry>,
    /// Per-episode sampling weight of each subtask.
    pub mixture: Vec<f64>,
    /// Extra encoding bit; when present it reads this value outside room 0.
    pub context_bit: Option<bool>,
    pub intervention: Option<Intervention>,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvState {
    pub room: usize,
    pub key: usize,
    pub subtask: usize,
    pub steps_taken: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
    /// Ended by the step limit rather than by reaching the terminal room.
    pub truncated: bool,
}

pub fn door_label(door: usize) -> char {
    (b'A' + door as u8) as char
}

pub fn door_index(label: char) -> Option<usize> {
    let c = label.to_ascii_uppercase();
    c.is_ascii_uppercase().then(|| (c as u8 - b'A') as usize)
}

impl TaskSpec {
    pub fn subtasks(&self) -> usize {
        self.mixture.len()
    }

    pub fn terminal_room(&self) -> usize {
        self.rooms - 1
    }

    pub fn encoding_len(&self) -> usize {
        self.rooms + self.doors + usize::from(self.context_bit.is_some())
    }

    /// The door whose key lies in `room` for `subtask`.
    pub fn key_for(&self, room: usize, subtask: usize) -> Option<usize> {
        self.schedule
            .iter()
            .find(|e| e.room == room && e.subtask.map_or(true, |s| s == subtask))
            .map(|e| e.door)
    }

    /// Correct final door per subtask.
    pub fn reward_doors(&self) -> Vec<usize> {
        (0..self.subtasks())
            .map(|s| self.key_for(self.rooms - 2, s).expect("validated schedule"))
            .collect()
    }

    /// Checks that every (decision room, subtask) pair has exactly one key.
    pub fn validate(&self) -> Result<(), EnvError> {
        for room in 0..self.rooms - 1 {
            for subtask in 0..self.subtasks() {
                let found = self
                    .schedule
                    .iter()
                    .filter(|e| e.room == room && e.subtask.map_or(true, |s| s == subtask))
                    .count();
                if found != 1 {
                    return Err(EnvError::Schedule { room, subtask, found });
                }
            }
        }
        Ok(())
    }

    pub fn encode_into(&self, state: &EnvState, out: &mut [f64]) {
        out.fill(0.0);
        out[state.room] = 1.0;
        out[self.rooms + state.key] = 1.0;
        if let Some(bit) = self.context_bit {
            if state.room > 0 && bit {
                out[self.rooms + self.doors] = 1.0;
            }
        }
    }

    pub fn encode(&self, state: &EnvState) -> Vec<f64> {
        let mut out = vec![0.0; self.encoding_len()];
        self.encode_into(state, &mut out);
        out
    }

    /// Bit-packed encoding, usable as an exact state identifier.
    pub fn state_id(&self, state: &EnvState) -> u64 {
        self.encode(state)
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | (u64::from(b != 0.0) << i))
    }

    /// Dense index for tabular learners, in `0..state_index_count()`.
    pub fn state_index(&self, state: &EnvState) -> usize {
        let ctx = match self.context_bit {
            Some(true) if state.room > 0 => 1,
            _ => 0,
        };
        ((ctx * self.rooms) + state.room) * self.doors + state.key
    }

    pub fn state_index_count(&self) -> usize {
        self.rooms * self.doors * if self.context_bit.is_some() { 2 } else { 1 }
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let subtask = if self.subtasks() == 1 {
            0
        } else {
            let total: f64 = self.mixture.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut chosen = self.subtasks() - 1;
            for (i, &w) in self.mixture.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        };
        self.start_state(subtask)
    }

    pub fn start_state(&self, subtask: usize) -> EnvState {
        EnvState {
            room: 0,
            key: self.key_for(0, subtask).expect("validated schedule"),
            subtask,
            steps_taken: 0,
        }
    }

    /// # Panics
    /// If `action >= self.doors`.
    pub fn step(&self, state: &EnvState, action: usize) -> StepResult {
        assert!(action < self.doors, "door {action} out of range");
        let steps_taken = state.steps_taken + 1;
        let mut next = EnvState { steps_taken, ..*state };
        let mut reward = 0.0;
        let mut done = false;
        if action == state.key {
            next.room = state.room + 1;
            if next.room == self.terminal_room() {
                reward = 1.0;
                done = true;
            } else {
                next.key = self.key_for(next.room, state.subtask).expect("validated schedule");
            }
        }
        let truncated = !done && steps_taken >= self.max_steps;
        StepResult {
            next_state: next,
            reward,
            done: done || truncated,
            truncated,
        }
    }

    /// The unique shortest rewarded door sequence for `subtask`.
    pub fn optimal_sequence(&self, subtask: usize) -> Vec<usize> {
        (0..self.terminal_room())
            .map(|room| self.key_for(room, subtask).expect("validated schedule"))
            .collect()
    }

    /// Machine-readable description including the optimal door sequences.
    pub fn summary(&self) -> TaskSummary {
        let letters = |doors: &[usize]| doors.iter().map(|&d| String::from(door_label(d))).collect::<Vec<_>>();
        TaskSummary {
            id: self.id.clone(),
            topology: self.topology,
            rooms: self.rooms,
            doors: letters(&(0..self.doors).collect::<Vec<_>>()),
            encoding_len: self.encoding_len(),
            max_steps: self.max_steps,
            schedule: self.schedule.clone(),
            mixture: self.mixture.clone(),
            context_bit: self.context_bit,
            reward_doors: letters(&self.reward_doors()),
            optimal_sequences: (0..self.subtasks()).map(|s| letters(&self.optimal_sequence(s))).collect(),
            intervention: self.intervention,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub id: String,
    pub topology: Topology,
    pub rooms: usize,
    pub doors: Vec<String>,
    pub encoding_len: usize,
    pub max_steps: usize,
    pub schedule: Vec<ScheduleEntry>,
    pub mixture: Vec<f64>,
    pub context_bit: Option<bool>,
    pub reward_doors: Vec<String>,
    pub optimal_sequences: Vec<Vec<String>>,
    pub intervention: Option<Intervention>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const D: usize = 3;
    const F: usize = 5;

    fn chain() -> TaskSpec {
        make_task(Topology::LinearChain, "train").unwrap()
    }

    #[test]
    fn linear_chain_encodings() {
        let t = chain();
        let s0 = t.start_state(0);
        assert_eq!(t.encode(&s0), [1., 0., 0., 0., 1., 0., 0., 0., 0., 0.]);
        let s = EnvState {
            room: 2,
            key: D,
            subtask: 0,
            steps_taken: 0,
        };
        assert_eq!(t.encode(&s), [0., 0., 1., 0., 0., 0., 0., 1., 0., 0.]);
    }

    #[test]
    fn transitions() {
        let t = chain();
        let s0 = t.start_state(0);
        let r = t.step(&s0, A);
        assert_eq!((r.next_state.room, r.next_state.key, r.reward, r.done), (1, B, 0.0, false));
        let r = t.step(&s0, F);
        assert_eq!((r.next_state.room, r.next_state.key), (0, A));
        assert_eq!(r.reward, 0.0);
        let s2 = EnvState {
            room: 2,
            key: C,
            subtask: 0,
            steps_taken: 2,
        };
        let r = t.step(&s2, C);
        assert_eq!((r.reward, r.done, r.truncated), (1.0, true, false));
    }

    #[test]
    fn cut_off_after_max_steps() {
        let t = chain();
        let mut s = t.start_state(0);
        for i in 0..MAX_STEPS {
            let r = t.step(&s, F);
            assert_eq!(r.done, i + 1 == MAX_STEPS);
            assert_eq!(r.truncated, r.done);
            assert_eq!(r.reward, 0.0);
            s = r.next_state;
        }
    }

    #[test]
    fn optimal_rollout_is_rewarded_and_acyclic() {
        for id in task_ids() {
            let t = task_by_id(id).unwrap();
            for sub in 0..t.subtasks() {
                let seq = t.optimal_sequence(sub);
                let mut s = t.start_state(sub);
                let mut seen = alloc::vec![t.state_id(&s)];
                let mut total = 0.0;
                for (i, &door) in seq.iter().enumerate() {
                    let r = t.step(&s, door);
                    total += r.reward;
                    assert_eq!(r.done, i + 1 == seq.len(), "{id}");
                    s = r.next_state;
                    if !r.done {
                        let sid = t.state_id(&s);
                        assert!(!seen.contains(&sid), "{id} revisits a state");
                        seen.push(sid);
                    }
                }
                assert_eq!(total, 1.0, "{id}");
            }
        }
    }

    #[test]
    fn deterministic_start_for_single_task() {
        let t = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert_eq!(t.reset(&mut rng), t.start_state(0));
        }
    }

    #[test]
    fn mixture_is_balanced() {
        let t = make_task(Topology::CommonAncestor, "train").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 10_000;
        let ones = (0..n).filter(|_| t.reset(&mut rng).subtask == 1).count();
        let frac = ones as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn forgetting_pair() {
        let a = make_task(Topology::Forgetting, "a").unwrap();
        let b = make_task(Topology::Forgetting, "b").unwrap();
        assert_eq!(a.optimal_sequence(0), [A, C]);
        assert_eq!(b.optimal_sequence(0), [B, D]);
        let mid_a = a.step(&a.start_state(0), A).next_state;
        let mid_b = b.step(&b.start_state(0), B).next_state;
        assert_eq!(*a.encode(&mid_a).last().unwrap(), 0.0);
        assert_eq!(*b.encode(&mid_b).last().unwrap(), 1.0);
        assert_ne!(a.state_id(&a.start_state(0)), b.state_id(&b.start_state(0)));
        assert_eq!(a.encoding_len(), 3 + 4 + 1);
    }

    #[test]
    fn state_index_is_dense_and_injective() {
        for id in task_ids() {
            let t = task_by_id(id).unwrap();
            let mut seen = alloc::collections::BTreeMap::new();
            for room in 0..t.rooms {
                for key in 0..t.doors {
                    let s = EnvState {
                        room,
                        key,
                        subtask: 0,
                        steps_taken: 0,
                    };
                    let i = t.state_index(&s);
                    assert!(i < t.state_index_count());
                    assert_eq!(seen.insert(i, t.state_id(&s)), None);
                }
            }
        }
    }

    #[test]
    fn door_labels_round_trip() {
        for d in 0..6 {
            assert_eq!(door_index(door_label(d)), Some(d));
        }
        assert_eq!(door_label(F), 'F');
    }
}
