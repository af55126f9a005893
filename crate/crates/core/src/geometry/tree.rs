//! Bethe-lattice trees with branching `q` and their reduction to a chain.
//!
//! Nodes are stored breadth-first: the root is 0, the children of node `i`
//! are `q·i + 1 ..= q·i + q`, and layer `n` (1-based) is a contiguous block
//! of `q^(n-1)` nodes.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{rk4_samples, FieldState, Trajectory, RK4_STABILITY_BOUND};
use crate::error::{Error, Result};
use crate::linalg::symmetric::symmetric_eigen;
use crate::linalg::Matrix;
use crate::model::{Generator, HNParams};

/// Largest tree [`build_tree`] accepts.
pub const MAX_NODES: usize = 1_000_000;
/// Largest tree evolved through a dense eigendecomposition.
pub const MAX_EXACT_NODES: usize = 2048;
/// Trees at least this large apply the adjacency in parallel.
const PARALLEL_NODES: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TreeGraph {
    q: usize,
    layers: usize,
    nodes: usize,
}

/// Tree with branching `q >= 2` and `layers >= 1` layers.
pub fn build_tree(q: usize, layers: usize) -> Result<TreeGraph> {
    if q < 2 {
        return Err(Error::param("q", format!("branching must be >= 2, got {q}")));
    }
    if layers < 1 {
        return Err(Error::param("N", "a tree needs at least one layer"));
    }
    let mut nodes = 0usize;
    let mut size = 1usize;
    for _ in 0..layers {
        nodes = nodes.checked_add(size).filter(|&n| n <= MAX_NODES).ok_or_else(|| {
            Error::param("N", format!("q={q}, N={layers} exceeds the cap of {MAX_NODES} nodes"))
        })?;
        size = size.saturating_mul(q);
    }
    Ok(TreeGraph { q, layers, nodes })
}

impl TreeGraph {
    pub fn branching(&self) -> usize {
        self.q
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    /// `q^(n-1)`.
    pub fn layer_size(&self, n: usize) -> usize {
        self.q.pow(n as u32 - 1)
    }

    /// Index of the first node of layer `n`.
    pub fn layer_start(&self, n: usize) -> usize {
        (self.layer_size(n) - 1) / (self.q - 1)
    }

    pub fn layer_range(&self, n: usize) -> Range<usize> {
        let s = self.layer_start(n);
        s..s + self.layer_size(n)
    }

    /// Node `(n, m)` with `1 <= m <= q^(n-1)`.
    pub fn index(&self, n: usize, m: usize) -> usize {
        self.layer_start(n) + m - 1
    }

    pub fn layer_of(&self, i: usize) -> usize {
        (1..=self.layers).find(|&n| self.layer_range(n).contains(&i)).expect("node inside tree")
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        (i > 0).then(|| (i - 1) / self.q)
    }

    pub fn children(&self, i: usize) -> Range<usize> {
        let first = self.q * i + 1;
        if first >= self.nodes {
            first..first
        } else {
            first..first + self.q
        }
    }

    pub fn degree(&self, i: usize) -> usize {
        self.children(i).len() + usize::from(i > 0)
    }

    /// `(parent_id, child_id)` pairs in breadth-first order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (1..self.nodes).map(|c| ((c - 1) / self.q, c)).collect()
    }

    /// `out = A·x` for the adjacency matrix `A`.
    pub fn apply_adjacency(&self, x: &[f64], out: &mut [f64]) {
        let q = self.q;
        let internal = self.nodes.saturating_sub(1) / q;
        // children of node p occupy q·p+1 ..= q·p+q, so both passes stream
        let down = |(p, block): (usize, &mut [f64])| block.iter_mut().for_each(|o| *o = x[p]);
        let up = |(p, o): (usize, &mut f64)| *o += x[q * p + 1..q * p + 1 + q].iter().sum::<f64>();
        out[0] = 0.0;
        if self.nodes >= PARALLEL_NODES {
            out[1..].par_chunks_mut(q).enumerate().for_each(down);
            out[..internal].par_iter_mut().enumerate().for_each(up);
        } else {
            out[1..].chunks_mut(q).enumerate().for_each(down);
            out[..internal].iter_mut().enumerate().for_each(up);
        }
    }

    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.nodes, self.nodes);
        for (p, c) in self.edges() {
            a[(p, c)] = 1.0;
            a[(c, p)] = 1.0;
        }
        a
    }

    fn fingerprint(&self, t: f64) -> String {
        let digest = Sha256::digest(format!("tree q={} N={} t={:e}", self.q, self.layers, t).as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Node field with the same value on every node of a layer.
pub fn layer_uniform_state(tree: &TreeGraph, layer_values: &[Complex64]) -> Result<Vec<Complex64>> {
    if layer_values.len() != tree.layers() {
        return Err(Error::LengthMismatch {
            what: "layer values vs tree layers",
            expected: tree.layers(),
            got: layer_values.len(),
        });
    }
    let mut v = vec![Complex64::new(0.0, 0.0); tree.node_count()];
    for (n, val) in (1..=tree.layers()).zip(layer_values) {
        v[tree.layer_range(n)].iter_mut().for_each(|x| *x = *val);
    }
    Ok(v)
}

/// `(Re, Im)` halves of a real-packed complex field.
pub fn unpack_complex(values: &[f64]) -> Vec<Complex64> {
    let n = values.len() / 2;
    (0..n).map(|i| Complex64::new(values[i], values[n + i])).collect()
}

fn pack_complex(z: &[Complex64]) -> Vec<f64> {
    z.iter().map(|c| c.re).chain(z.iter().map(|c| c.im)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeMethod {
    Rk4 { dt: f64 },
    /// Dense symmetric eigendecomposition; trees up to [`MAX_EXACT_NODES`].
    Exact,
}

/// Evolves `i·φ̇ = -t·Σ_neighbours φ`. States are packed as `(Re φ, Im φ)`.
pub fn evolve_tree(tree: &TreeGraph, t: f64, s0: &[Complex64], times: &[f64], method: TreeMethod) -> Result<Trajectory> {
    if s0.len() != tree.node_count() {
        return Err(Error::LengthMismatch {
            what: "node field vs tree",
            expected: tree.node_count(),
            got: s0.len(),
        });
    }
    if !t.is_finite() {
        return Err(Error::param("t", "hopping must be finite"));
    }
    let n = tree.node_count();
    let samples = match method {
        TreeMethod::Rk4 { dt } => {
            let product = dt * t.abs() * (tree.branching() + 1) as f64;
            if product >= RK4_STABILITY_BOUND {
                return Err(Error::UnstableStep {
                    product,
                    bound: RK4_STABILITY_BOUND,
                });
            }
            let mut ar = vec![0.0; n];
            let mut ai = vec![0.0; n];
            rk4_samples(
                |y, out| {
                    let (re, im) = y.split_at(n);
                    tree.apply_adjacency(re, &mut ar);
                    tree.apply_adjacency(im, &mut ai);
                    let (dre, dim) = out.split_at_mut(n);
                    for i in 0..n {
                        dre[i] = -t * ai[i];
                        dim[i] = t * ar[i];
                    }
                },
                &pack_complex(s0),
                0.0,
                times,
                dt,
            )?
        }
        TreeMethod::Exact => {
            if n > MAX_EXACT_NODES {
                return Err(Error::param(
                    "method",
                    format!("exact tree evolution is limited to {MAX_EXACT_NODES} nodes, tree has {n}; use rk4"),
                ));
            }
            let eig = symmetric_eigen(&tree.adjacency(), true)?;
            let v = eig.vectors.expect("vectors requested");
            let coef: Vec<Complex64> = (0..n)
                .map(|k| (0..n).map(|i| s0[i] * v[(i, k)]).sum())
                .collect();
            let mut out = Vec::with_capacity(times.len());
            for &tau in times {
                let w: Vec<Complex64> = (0..n)
                    .map(|k| coef[k] * Complex64::new(0.0, t * eig.values[k] * tau).exp())
                    .collect();
                let z: Vec<Complex64> = (0..n).map(|i| (0..n).map(|k| w[k] * v[(i, k)]).sum()).collect();
                out.push(pack_complex(&z));
            }
            out
        }
    };
    Ok(Trajectory {
        times: times.to_vec(),
        states: times.iter().zip(samples).map(|(&tau, v)| FieldState::new(tau, v)).collect(),
        fingerprint: tree.fingerprint(t),
    })
}

fn layer_deviation(tree: &TreeGraph, z: &[Complex64]) -> f64 {
    (1..=tree.layers())
        .map(|n| {
            let r = tree.layer_range(n);
            let first = z[r.start];
            z[r].iter().fold(0.0f64, |m, x| m.max((x - first).norm()))
        })
        .fold(0.0, f64::max)
}

/// Layer profile `Φ_n(τ)` of a tree trajectory, packed as `(Re Φ, Im Φ)`.
///
/// The first sample must be layer-uniform to `1e-12`; every later sample
/// must stay uniform to `1e-8`.
pub fn reduce_tree(tree: &TreeGraph, traj: &Trajectory) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(traj.states.len());
    for (k, st) in traj.states.iter().enumerate() {
        if st.values.len() != 2 * tree.node_count() {
            return Err(Error::LengthMismatch {
                what: "tree trajectory sample",
                expected: 2 * tree.node_count(),
                got: st.values.len(),
            });
        }
        let z = unpack_complex(&st.values);
        let scale = z.iter().fold(1.0f64, |m, x| m.max(x.norm()));
        let dev = layer_deviation(tree, &z) / scale;
        let tol = if k == 0 { 1e-12 } else { 1e-8 };
        if dev > tol {
            return Err(Error::param(
                "tree_traj",
                format!("in-layer deviation {dev:.3e} at tau = {} exceeds {tol:e}", st.tau),
            ));
        }
        let phi: Vec<Complex64> = (1..=tree.layers()).map(|n| z[tree.layer_start(n)]).collect();
        states.push(FieldState::new(st.tau, pack_complex(&phi)));
    }
    Ok(Trajectory {
        times: traj.times.clone(),
        states,
        fingerprint: traj.fingerprint.clone(),
    })
}

/// Chain obeyed by layer-uniform fields, `i·Φ̇_n = -tΦ_{n-1} - q·tΦ_{n+1}`,
/// written as `H = -(t_R·sub + t_L·super)` with `t_L = q·t`, `t_R = t`.
pub fn tree_chain(tree: &TreeGraph, t: f64) -> HNParams {
    HNParams::new(tree.branching() as f64 * t, t, tree.layers())
}

/// Real generator of `Φ̇ = -iHΦ` on `(Re Φ, Im Φ)` for
/// `H = -(t_R·sub + t_L·super)`.
pub fn chain_schrodinger_generator(chain: &HNParams) -> Generator {
    let l = chain.l;
    let mut g = Matrix::zeros(2 * l, 2 * l);
    for i in 0..l {
        if i > 0 {
            g[(i, l + i - 1)] = -chain.t_r;
            g[(l + i, i - 1)] = chain.t_r;
        }
        if i + 1 < l {
            g[(i, l + i + 1)] = -chain.t_l;
            g[(l + i, i + 1)] = chain.t_l;
        }
    }
    let l = l as isize;
    Generator::new(g, vec![-l - 1, -l + 1, l - 1, l + 1]).expect("band layout is fixed")
}
