//! The three integration operators L, J, P as exact linear maps on the
//! tree, plus dense matrix assembly over indicator bases for oracle
//! adjoint computations.
//!
//! Integrands are evaluated at the left endpoint; the value at t_k is the
//! integral over [0, t_k), so outputs are adapted and the stochastic
//! integrals are exact martingales with mean zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{self, MarkedProcess, Process};
use crate::space::{RandomVariable, ScenarioTree};

/// Output of an integration operator: the adapted process on the grid
/// together with the terminal value at t = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub process: Process,
    pub terminal: RandomVariable,
}

fn accumulate(
    tree: &ScenarioTree,
    step: impl Fn(usize, usize, usize) -> f64,
) -> Integral {
    // step(k, parent_atom, child_atom) is the increment gained on the
    // step from level k to k+1 along that branch.
    let n = tree.n_steps();
    let mut values = Vec::with_capacity(n);
    values.push(vec![0.0; 1]);
    for k in 0..n {
        let prev = &values[k];
        let next: Vec<f64> = tree
            .atoms(k + 1)
            .iter()
            .enumerate()
            .map(|(c, atom)| prev[atom.parent] + step(k, atom.parent, c))
            .collect();
        values.push(next);
    }
    let terminal = RandomVariable::new(n, values.pop().unwrap());
    Integral { process: Process { values }, terminal }
}

/// (L f)(t_k) = Σ_{j<k} f(t_j)·dt, the pathwise Lebesgue integral.
pub fn op_l(tree: &ScenarioTree, f: &Process) -> Result<Integral> {
    f.validate(tree)?;
    let dt = tree.dt();
    Ok(accumulate(tree, |k, parent, _| f.values[k][parent] * dt))
}

/// (J φ)(t_k) = Σ_{j<k} φ(t_j)·Δw_j, the Itô integral.
pub fn op_j(tree: &ScenarioTree, phi: &Process) -> Result<Integral> {
    if !tree.model.has_wiener() {
        return Err(Error::Model { required: "wiener", actual: tree.model.name() });
    }
    phi.validate(tree)?;
    Ok(accumulate(tree, |k, parent, child| {
        phi.values[k][parent] * tree.atoms(k + 1)[child].dw
    }))
}

/// (P a)(t_k) = Σ_{j<k} Σ_i a(t_j, y_i)·(flag − q_i), the compensated
/// Poisson integral.
pub fn op_p(tree: &ScenarioTree, a: &MarkedProcess) -> Result<Integral> {
    if !tree.model.has_marks() {
        return Err(Error::Model { required: "poisson", actual: tree.model.name() });
    }
    a.validate(tree)?;
    let m = tree.marks.len();
    Ok(accumulate(tree, |k, parent, child| {
        (0..m)
            .map(|i| a.values[k][parent][i] * tree.jump_increment(k + 1, child, i))
            .sum()
    }))
}

/// True iff E[x(t_{k+1}) | F_{t_k}] = x(t_k) within `tol` at every atom;
/// also reports the maximum defect.
pub fn is_martingale(tree: &ScenarioTree, x: &Process, tol: f64) -> Result<(bool, f64)> {
    x.validate(tree)?;
    let mut defect: f64 = 0.0;
    for k in 0..tree.n_steps().saturating_sub(1) {
        let proj = tree.cond_one(k + 1, &x.values[k + 1]);
        for (a, b) in proj.iter().zip(&x.values[k]) {
            defect = defect.max((a - b).abs());
        }
    }
    Ok((defect <= tol, defect))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpTag {
    L,
    J,
    P,
}

/// Dense matrix realization of an operator between Gram-weighted spaces.
/// Row-major `data`; applying the matrix reproduces the operator on every
/// basis vector exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub dom_gram: Vec<f64>,
    pub cod_gram: Vec<f64>,
}

impl LinearMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o = row.iter().zip(x).map(|(m, v)| m * v).sum();
        }
        out
    }

    /// ⟨y, A x⟩ with the codomain Gram form.
    pub fn pair_cod(&self, y: &[f64], ax: &[f64]) -> f64 {
        y.iter().zip(ax).zip(&self.cod_gram).map(|((a, b), g)| a * b * g).sum()
    }

    /// Triplet list (row, col, value) of nonzero entries.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let v = self.data[r * self.cols + c];
                if v != 0.0 {
                    out.push((r, c, v));
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,col,value\r\n");
        for (r, c, v) in self.triplets() {
            s.push_str(&format!("{r},{c},{v}\r\n"));
        }
        s
    }
}

/// Assemble the dense matrix of L, J, or P over indicator bases. The
/// domain basis is (k, atom) for L and J, (k, atom, mark) for P; the
/// codomain basis is always (k, atom).
pub fn assemble_matrix(tree: &ScenarioTree, op: OpTag) -> Result<LinearMap> {
    let cod_gram = process::process_weights(tree);
    let rows = cod_gram.len();
    let (cols, dom_gram) = match op {
        OpTag::L | OpTag::J => (rows, cod_gram.clone()),
        OpTag::P => {
            let g = process::marked_weights(tree);
            (g.len(), g)
        }
    };
    let mut data = vec![0.0; rows * cols];
    for col in 0..cols {
        let image = match op {
            OpTag::L | OpTag::J => {
                let mut flat = vec![0.0; cols];
                flat[col] = 1.0;
                let basis = process::unflatten(tree, &flat);
                let out = match op {
                    OpTag::L => op_l(tree, &basis)?,
                    OpTag::J => op_j(tree, &basis)?,
                    OpTag::P => unreachable!(),
                };
                process::flatten(&out.process)
            }
            OpTag::P => {
                let mut flat = vec![0.0; cols];
                flat[col] = 1.0;
                let basis = process::unflatten_marked(tree, &flat);
                process::flatten(&op_p(tree, &basis)?.process)
            }
        };
        for (r, v) in image.iter().enumerate() {
            data[r * cols + col] = *v;
        }
    }
    Ok(LinearMap { rows, cols, data, dom_gram, cod_gram })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{flatten, pair_l2, unflatten};
    use crate::space::MarkSet;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn random_process(tree: &ScenarioTree, seed: u64) -> Process {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Process::from_fn(tree, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_marked(tree: &ScenarioTree, seed: u64) -> MarkedProcess {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MarkedProcess::from_fn(tree, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn l_of_constant_is_time() {
        let t = ScenarioTree::wiener(4).unwrap();
        let one = Process::constant(&t, 1.0);
        let out = op_l(&t, &one).unwrap();
        for k in 0..4 {
            for v in &out.process.values[k] {
                assert!(close(*v, t.grid.t(k), 1e-13));
            }
        }
        for v in &out.terminal.values {
            assert!(close(*v, 1.0, 1e-13));
        }
        let zero = op_l(&t, &Process::zero(&t)).unwrap();
        assert!(flatten(&zero.process).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn l_of_w_matches_per_path_sum() {
        let t = ScenarioTree::wiener(2).unwrap();
        let w = Process::wiener(&t);
        let out = op_l(&t, &w).unwrap();
        // (L w)(t_1) = w(t_0)·dt = 0 on both level-1 atoms
        for v in &out.process.values[1] {
            assert!(close(*v, 0.0, 1e-14));
        }
        // terminal value per path = (w(0) + w(t_1))·dt
        for (i, atom) in t.atoms(2).iter().enumerate() {
            let _ = atom;
            let path = t.path_of(i);
            let expected = (t.atoms(0)[path[0]].w + t.atoms(1)[path[1]].w) * t.dt();
            assert!(close(out.terminal.values[i], expected, 1e-14));
        }
    }

    #[test]
    fn j_of_one_is_w() {
        let t = ScenarioTree::wiener(5).unwrap();
        let one = Process::constant(&t, 1.0);
        let out = op_j(&t, &one).unwrap();
        for k in 0..5 {
            for (v, atom) in out.process.values[k].iter().zip(t.atoms(k)) {
                assert!(close(*v, atom.w, 1e-13));
            }
        }
    }

    #[test]
    fn j_of_w_is_half_w_squared_minus_t() {
        // discrete telescoping with Δw² = dt gives J(w)(t_k) = (w(t_k)² − t_k)/2
        let t = ScenarioTree::wiener(6).unwrap();
        let w = Process::wiener(&t);
        let out = op_j(&t, &w).unwrap();
        for k in 0..6 {
            for (v, atom) in out.process.values[k].iter().zip(t.atoms(k)) {
                let expected = (atom.w * atom.w - t.grid.t(k)) / 2.0;
                assert!(close(*v, expected, 1e-12));
            }
        }
    }

    #[test]
    fn j_requires_wiener_driver() {
        let t = ScenarioTree::poisson(2, MarkSet::single("a", 0.5)).unwrap();
        let phi = Process::constant(&t, 1.0);
        assert!(matches!(op_j(&t, &phi), Err(Error::Model { .. })));
    }

    #[test]
    fn p_of_one_is_compensated_count() {
        let t = ScenarioTree::poisson(4, MarkSet::single("a", 0.6)).unwrap();
        let q = t.q(0);
        let one = MarkedProcess::constant(&t, 1.0);
        let out = op_p(&t, &one).unwrap();
        for k in 0..4 {
            for (i, v) in out.process.values[k].iter().enumerate() {
                let path = t.path_of(t.atoms(k).len().min(i).max(i)); // placeholder avoided below
                let _ = path;
                // recompute along the ancestor chain of the level-k atom
                let mut idx = i;
                let mut count = 0.0;
                for level in (1..=k).rev() {
                    count += t.atoms(level)[idx].jumps[0] as f64;
                    idx = t.atoms(level)[idx].parent;
                }
                assert!(close(*v, count - k as f64 * q, 1e-13));
            }
        }
    }

    #[test]
    fn p_requires_marks() {
        let t = ScenarioTree::wiener(2).unwrap();
        let a = MarkedProcess { values: vec![vec![vec![]; 1], vec![vec![]; 2]] };
        assert!(matches!(op_p(&t, &a), Err(Error::Model { .. })));
    }

    #[test]
    fn integrals_are_mean_zero_martingales() {
        let t = ScenarioTree::joint(3, MarkSet::single("a", 0.5)).unwrap();
        let phi = random_process(&t, 5);
        let a = random_marked(&t, 6);
        for integral in [op_j(&t, &phi).unwrap(), op_p(&t, &a).unwrap()] {
            let (ok, defect) = is_martingale(&t, &integral.process, 1e-12).unwrap();
            assert!(ok, "defect {defect}");
            assert!(close(t.expectation(&integral.terminal).unwrap(), 0.0, 1e-12));
            for k in 0..3 {
                let mean = t.expectation(&integral.process.at(k)).unwrap();
                assert!(close(mean, 0.0, 1e-12));
            }
        }
    }

    #[test]
    fn lebesgue_integral_of_one_is_not_martingale() {
        let t = ScenarioTree::wiener(3).unwrap();
        let out = op_l(&t, &Process::constant(&t, 1.0)).unwrap();
        let (ok, defect) = is_martingale(&t, &out.process, 1e-12).unwrap();
        assert!(!ok);
        assert!(close(defect, t.dt(), 1e-13));
        let (const_ok, _) = is_martingale(&t, &Process::constant(&t, 3.0), 1e-12).unwrap();
        assert!(const_ok);
    }

    #[test]
    fn ito_isometry_exact() {
        let t = ScenarioTree::wiener(6).unwrap();
        let phi = random_process(&t, 12);
        let terminal = op_j(&t, &phi).unwrap().terminal;
        let lhs: f64 = terminal
            .values
            .iter()
            .zip(t.atoms(6))
            .map(|(v, a)| a.prob * v * v)
            .sum();
        let rhs = crate::process::norm_np(&t, &phi, 2.0).unwrap().powi(2);
        assert!(close(lhs, rhs, 1e-12));
    }

    #[test]
    fn polarization_exact() {
        let t = ScenarioTree::wiener(6).unwrap();
        let phi = random_process(&t, 21);
        let kappa = random_process(&t, 22);
        let jp = op_j(&t, &phi).unwrap();
        let jk = op_j(&t, &kappa).unwrap();
        for k in 1..=6 {
            let (jpv, jkv): (&[f64], &[f64]) = if k == 6 {
                (&jp.terminal.values, &jk.terminal.values)
            } else {
                (&jp.process.values[k], &jk.process.values[k])
            };
            let lhs: f64 = jpv
                .iter()
                .zip(jkv)
                .zip(t.atoms(k))
                .map(|((a, b), atom)| atom.prob * a * b)
                .sum();
            // E Σ_{j<k} φϰ dt
            let mut rhs = 0.0;
            for j in 0..k {
                for ((a, b), atom) in
                    phi.values[j].iter().zip(&kappa.values[j]).zip(t.atoms(j))
                {
                    rhs += atom.prob * a * b * t.dt();
                }
            }
            assert!(close(lhs, rhs, 1e-12));
        }
    }

    #[test]
    fn poisson_discrete_isometry() {
        let t = ScenarioTree::poisson(5, MarkSet::single("a", 0.7)).unwrap();
        let a = random_marked(&t, 31);
        let terminal = op_p(&t, &a).unwrap().terminal;
        let lhs: f64 = terminal
            .values
            .iter()
            .zip(t.atoms(5))
            .map(|(v, at)| at.prob * v * v)
            .sum();
        let q = t.q(0);
        let mut rhs = 0.0;
        for k in 0..5 {
            for (row, atom) in a.values[k].iter().zip(t.atoms(k)) {
                rhs += atom.prob * row[0] * row[0] * q * (1.0 - q);
            }
        }
        assert!(close(lhs, rhs, 1e-12));
    }

    #[test]
    fn causality_of_ops() {
        let t = ScenarioTree::wiener(4).unwrap();
        let phi = random_process(&t, 41);
        let mut tail_modified = phi.clone();
        for v in tail_modified.values[3].iter_mut() {
            *v += 10.0;
        }
        let a = op_j(&t, &phi).unwrap();
        let b = op_j(&t, &tail_modified).unwrap();
        for k in 0..=3 {
            assert_eq!(a.process.values[k], b.process.values[k]);
        }
    }

    #[test]
    fn matrix_reproduces_ops_on_random_inputs() {
        let t = ScenarioTree::joint(2, MarkSet::single("a", 0.4)).unwrap();
        let ml = assemble_matrix(&t, OpTag::L).unwrap();
        let mj = assemble_matrix(&t, OpTag::J).unwrap();
        let mp = assemble_matrix(&t, OpTag::P).unwrap();
        for seed in 0..20 {
            let f = random_process(&t, 100 + seed);
            let via_matrix = unflatten(&t, &ml.apply(&flatten(&f)));
            let direct = op_l(&t, &f).unwrap().process;
            for (a, b) in flatten(&via_matrix).iter().zip(flatten(&direct).iter()) {
                assert!(close(*a, *b, 1e-12));
            }
            let via_j = unflatten(&t, &mj.apply(&flatten(&f)));
            let direct_j = op_j(&t, &f).unwrap().process;
            for (a, b) in flatten(&via_j).iter().zip(flatten(&direct_j).iter()) {
                assert!(close(*a, *b, 1e-12));
            }
            let am = random_marked(&t, 200 + seed);
            let via_p = unflatten(&t, &mp.apply(&crate::process::flatten_marked(&am)));
            let direct_p = op_p(&t, &am).unwrap().process;
            for (a, b) in flatten(&via_p).iter().zip(flatten(&direct_p).iter()) {
                assert!(close(*a, *b, 1e-12));
            }
        }
    }

    #[test]
    fn j_matrix_is_strictly_causal() {
        let t = ScenarioTree::wiener(3).unwrap();
        let m = assemble_matrix(&t, OpTag::J).unwrap();
        // entries with codomain level <= domain level must vanish
        let sizes: Vec<usize> = (0..3).map(|k| t.atoms(k).len()).collect();
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0, |acc, s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        let level_of = |idx: usize| {
            (0..3).rev().find(|&k| idx >= offsets[k]).unwrap()
        };
        for r in 0..m.rows {
            for c in 0..m.cols {
                if level_of(r) <= level_of(c) {
                    assert_eq!(m.data[r * m.cols + c], 0.0);
                }
            }
        }
    }

    #[test]
    fn matrix_linearity() {
        let t = ScenarioTree::wiener(3).unwrap();
        let m = assemble_matrix(&t, OpTag::L).unwrap();
        let f = flatten(&random_process(&t, 61));
        let g = flatten(&random_process(&t, 62));
        let sum: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        let lhs = m.apply(&sum);
        let rhs: Vec<f64> =
            m.apply(&f).iter().zip(m.apply(&g)).map(|(a, b)| a + b).collect();
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn pairing_via_matrix_matches_direct() {
        let t = ScenarioTree::wiener(4).unwrap();
        let m = assemble_matrix(&t, OpTag::J).unwrap();
        let chi = random_process(&t, 71);
        let phi = random_process(&t, 72);
        let direct = pair_l2(&t, &chi, &op_j(&t, &phi).unwrap().process).unwrap();
        let via = m.pair_cod(&flatten(&chi), &m.apply(&flatten(&phi)));
        assert!(close(direct, via, 1e-12));
    }
}
