//! Finite filtered probability spaces as scenario trees.
//!
//! A tree on the uniform grid over [0,1] carries a binary Wiener driver
//! (increments ±√dt), Bernoulli jump drivers with compensator π·dt per
//! step, or the independent product of both. Conditional expectation is
//! exact probability-weighted averaging over descendants.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on terminal-level atoms for exact-mode tree construction.
pub const DEFAULT_ATOM_CAP: usize = 1 << 20;

/// Uniform grid t_k = k/n_steps on [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n_steps: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Parameter("n_steps must be >= 1".into()));
        }
        Ok(Self { n_steps, dt: 1.0 / n_steps as f64 })
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// One point mass of the finite mark measure Π.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub label: String,
    pub intensity: f64,
}

/// Finite support of the mark measure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkSet {
    pub marks: Vec<Mark>,
}

impl MarkSet {
    pub fn new(marks: Vec<Mark>) -> Self {
        Self { marks }
    }

    pub fn single(label: &str, intensity: f64) -> Self {
        Self { marks: vec![Mark { label: label.into(), intensity }] }
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    /// Total mass Σ π_i.
    pub fn total(&self) -> f64 {
        self.marks.iter().map(|m| m.intensity).sum()
    }
}

/// One cell of the level-k partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Atom {
    /// Index of the parent atom at the previous level (0 for the root).
    pub parent: usize,
    /// Mass of the cell.
    pub prob: f64,
    /// Wiener increment on the step into this atom (0 at the root and on
    /// trees without a Wiener driver).
    pub dw: f64,
    /// Cumulative Wiener value w(t_k) on this atom.
    pub w: f64,
    /// Per-mark jump indicator on the step into this atom.
    pub jumps: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Wiener,
    Poisson,
    Joint,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Wiener => "wiener",
            Model::Poisson => "poisson",
            Model::Joint => "joint",
        }
    }

    pub fn has_wiener(&self) -> bool {
        matches!(self, Model::Wiener | Model::Joint)
    }

    pub fn has_marks(&self) -> bool {
        matches!(self, Model::Poisson | Model::Joint)
    }
}

/// A random variable measurable with respect to the level-`level` partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomVariable {
    pub level: usize,
    pub values: Vec<f64>,
}

impl RandomVariable {
    pub fn new(level: usize, values: Vec<f64>) -> Self {
        Self { level, values }
    }
}

/// Finite filtered probability space on the uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioTree {
    pub grid: TimeGrid,
    pub model: Model,
    pub marks: MarkSet,
    levels: Vec<Vec<Atom>>,
}

/// Branch template for one step: (wiener sign, jump flags, probability).
struct Branch {
    dw_sign: f64,
    jumps: Vec<u8>,
    prob: f64,
}

fn step_branches(model: Model, marks: &MarkSet, dt: f64) -> Result<Vec<Branch>> {
    let mut branches = vec![Branch { dw_sign: 0.0, jumps: vec![], prob: 1.0 }];
    if model.has_wiener() {
        branches = vec![
            Branch { dw_sign: 1.0, jumps: vec![], prob: 0.5 },
            Branch { dw_sign: -1.0, jumps: vec![], prob: 0.5 },
        ];
    }
    if model.has_marks() {
        for mark in &marks.marks {
            let q = mark.intensity * dt;
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::Intensity { label: mark.label.clone(), q });
            }
            let mut next = Vec::with_capacity(branches.len() * 2);
            for b in &branches {
                let mut with_jump = b.jumps.clone();
                with_jump.push(1);
                next.push(Branch { dw_sign: b.dw_sign, jumps: with_jump, prob: b.prob * q });
                let mut without = b.jumps.clone();
                without.push(0);
                next.push(Branch { dw_sign: b.dw_sign, jumps: without, prob: b.prob * (1.0 - q) });
            }
            branches = next;
        }
    }
    Ok(branches)
}

impl ScenarioTree {
    pub fn build(model: Model, n_steps: usize, marks: MarkSet, cap: usize) -> Result<Self> {
        let grid = TimeGrid::new(n_steps)?;
        if model.has_marks() && marks.is_empty() {
            return Err(Error::Parameter("poisson/joint model requires at least one mark".into()));
        }
        let marks = if model.has_marks() { marks } else { MarkSet::default() };
        let branches = step_branches(model, &marks, grid.dt)?;

        let terminal = (branches.len() as u128)
            .checked_pow(n_steps as u32)
            .unwrap_or(u128::MAX);
        if terminal > cap as u128 {
            return Err(Error::SizeCap { atoms: terminal, cap });
        }

        let sqrt_dt = grid.dt.sqrt();
        let n_marks = marks.len();
        let root = Atom { parent: 0, prob: 1.0, dw: 0.0, w: 0.0, jumps: vec![0; n_marks] };
        let mut levels = vec![vec![root]];
        for _ in 0..n_steps {
            let prev = levels.last().unwrap();
            let mut next = Vec::with_capacity(prev.len() * branches.len());
            for (pi, parent) in prev.iter().enumerate() {
                for b in &branches {
                    let dw = b.dw_sign * sqrt_dt;
                    let mut jumps = b.jumps.clone();
                    if jumps.is_empty() {
                        jumps = vec![0; n_marks];
                    }
                    next.push(Atom {
                        parent: pi,
                        prob: parent.prob * b.prob,
                        dw,
                        w: parent.w + dw,
                        jumps,
                    });
                }
            }
            levels.push(next);
        }
        Ok(Self { grid, model, marks, levels })
    }

    pub fn wiener(n_steps: usize) -> Result<Self> {
        Self::build(Model::Wiener, n_steps, MarkSet::default(), DEFAULT_ATOM_CAP)
    }

    pub fn poisson(n_steps: usize, marks: MarkSet) -> Result<Self> {
        Self::build(Model::Poisson, n_steps, marks, DEFAULT_ATOM_CAP)
    }

    pub fn joint(n_steps: usize, marks: MarkSet) -> Result<Self> {
        Self::build(Model::Joint, n_steps, marks, DEFAULT_ATOM_CAP)
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt
    }

    /// Index of the terminal level (= n_steps).
    pub fn terminal_level(&self) -> usize {
        self.grid.n_steps
    }

    pub fn atoms(&self, level: usize) -> &[Atom] {
        &self.levels[level]
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.len()).collect()
    }

    /// Per-step compensated jump probability q_i = π_i · dt.
    pub fn q(&self, mark: usize) -> f64 {
        self.marks.marks[mark].intensity * self.dt()
    }

    /// Compensated Poisson increment (flag − q_i) on the step into `atom` at `level`.
    pub fn jump_increment(&self, level: usize, atom: usize, mark: usize) -> f64 {
        self.levels[level][atom].jumps[mark] as f64 - self.q(mark)
    }

    fn check_rv(&self, x: &RandomVariable) -> Result<()> {
        if x.level >= self.levels.len() {
            return Err(Error::Shape(format!(
                "variable level {} exceeds terminal level {}",
                x.level,
                self.terminal_level()
            )));
        }
        if x.values.len() != self.levels[x.level].len() {
            return Err(Error::Shape(format!(
                "variable has {} values but level {} has {} atoms",
                x.values.len(),
                x.level,
                self.levels[x.level].len()
            )));
        }
        Ok(())
    }

    /// One-step conditional expectation: values at `level` averaged onto `level - 1`.
    pub(crate) fn cond_one(&self, level: usize, vals: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.levels[level - 1].len()];
        for (atom, v) in self.levels[level].iter().zip(vals) {
            out[atom.parent] += atom.prob * v;
        }
        for (o, parent) in out.iter_mut().zip(&self.levels[level - 1]) {
            *o /= parent.prob;
        }
        out
    }

    /// E[x | F_{t_k}] for k ≤ level(x), exact.
    pub fn conditional_expectation(&self, x: &RandomVariable, k: usize) -> Result<RandomVariable> {
        self.check_rv(x)?;
        if k > x.level {
            return Err(Error::Level { target: k, from: x.level });
        }
        let mut vals = x.values.clone();
        for level in (k + 1..=x.level).rev() {
            vals = self.cond_one(level, &vals);
        }
        Ok(RandomVariable::new(k, vals))
    }

    /// Mean E[x].
    pub fn expectation(&self, x: &RandomVariable) -> Result<f64> {
        Ok(self.conditional_expectation(x, 0)?.values[0])
    }

    /// View an F_{t_k}-measurable variable at a finer level l ≥ k
    /// (values constant over descendants).
    pub fn lift(&self, x: &RandomVariable, l: usize) -> Result<RandomVariable> {
        self.check_rv(x)?;
        if l < x.level || l >= self.levels.len() {
            return Err(Error::Level { target: l, from: x.level });
        }
        let mut vals = x.values.clone();
        for level in x.level..l {
            let next: Vec<f64> =
                self.levels[level + 1].iter().map(|a| vals[a.parent]).collect();
            vals = next;
        }
        Ok(RandomVariable::new(l, vals))
    }

    /// Atom index at each level along the ancestor chain of a terminal atom.
    pub fn path_of(&self, terminal_atom: usize) -> Vec<usize> {
        let mut path = vec![0; self.levels.len()];
        let mut idx = terminal_atom;
        for level in (0..self.levels.len()).rev() {
            path[level] = idx;
            idx = self.levels[level][idx].parent;
        }
        path
    }

    /// Root-to-leaf atom chains drawn with branch probabilities.
    /// Deterministic given `seed`, independent of any parallel scheduling:
    /// each path uses its own counter-derived stream.
    pub fn sample_paths(&self, n_paths: usize, seed: u64) -> Vec<Vec<usize>> {
        let children = self.children_lists();
        (0..n_paths)
            .map(|i| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut path = Vec::with_capacity(self.levels.len());
                let mut idx = 0usize;
                path.push(idx);
                for level in 0..self.n_steps() {
                    let parent_prob = self.levels[level][idx].prob;
                    let u: f64 = rng.gen::<f64>();
                    let mut acc = 0.0;
                    let kids = &children[level][idx];
                    let mut chosen = *kids.last().unwrap();
                    for &c in kids {
                        acc += self.levels[level + 1][c].prob / parent_prob;
                        if u < acc {
                            chosen = c;
                            break;
                        }
                    }
                    idx = chosen;
                    path.push(idx);
                }
                path
            })
            .collect()
    }

    fn children_lists(&self) -> Vec<Vec<Vec<usize>>> {
        (0..self.n_steps())
            .map(|level| {
                let mut lists = vec![Vec::new(); self.levels[level].len()];
                for (i, atom) in self.levels[level + 1].iter().enumerate() {
                    lists[atom.parent].push(i);
                }
                lists
            })
            .collect()
    }

    /// Terminal value w(1) as a random variable.
    pub fn terminal_wiener(&self) -> RandomVariable {
        let level = self.terminal_level();
        RandomVariable::new(level, self.levels[level].iter().map(|a| a.w).collect())
    }
}
