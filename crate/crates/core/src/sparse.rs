//! Symmetric positive definite envelope (skyline) storage and Cholesky
//! factorization, with a reverse Cuthill-McKee ordering computed once per
//! sparsity pattern.

use std::collections::VecDeque;

use crate::{Error, Result};

/// Reverse Cuthill-McKee permutation of a symmetric adjacency structure.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let root = pseudo_peripheral(adjacency, seed, &degree);
        visited[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            let mut next: Vec<usize> = adjacency[i].iter().copied().filter(|&j| !visited[j]).collect();
            next.sort_by_key(|&j| (degree[j], j));
            for j in next {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

/// Level-structure heuristic for a starting node far from the rest of its
/// component.
fn pseudo_peripheral(adjacency: &[Vec<usize>], start: usize, degree: &[usize]) -> usize {
    let mut root = start;
    let mut depth = 0;
    for _ in 0..8 {
        let levels = bfs_levels(adjacency, root);
        let max_level = *levels.iter().flatten().max().unwrap_or(&0);
        if max_level <= depth && root != start {
            break;
        }
        depth = max_level;
        let candidate = levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(max_level))
            .min_by_key(|(i, _)| (degree[*i], *i))
            .map(|(i, _)| i)
            .unwrap_or(root);
        if candidate == root {
            break;
        }
        root = candidate;
    }
    root
}

fn bfs_levels(adjacency: &[Vec<usize>], root: usize) -> Vec<Option<usize>> {
    let mut levels = vec![None; adjacency.len()];
    levels[root] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(i) = queue.pop_front() {
        let l = levels[i].unwrap_or(0);
        for &j in &adjacency[i] {
            if levels[j].is_none() {
                levels[j] = Some(l + 1);
                queue.push_back(j);
            }
        }
    }
    levels
}

/// Lower-triangular envelope storage of a symmetric matrix in permuted order.
#[derive(Clone, Debug)]
pub struct EnvelopeMatrix {
    n: usize,
    perm: Vec<usize>,
    inv: Vec<usize>,
    first: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<f64>,
    factored: bool,
}

impl EnvelopeMatrix {
    /// Builds storage for the pattern spanned by `edges` (pairs of original
    /// indices; the diagonal is always present).
    pub fn from_pattern(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Contract(format!("pattern entry ({i}, {j}) outside {n}x{n}")));
            }
            if i != j {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
        Self::from_adjacency(adjacency)
    }

    /// Builds storage from symmetric adjacency lists (no self loops needed).
    pub fn from_adjacency(mut adjacency: Vec<Vec<usize>>) -> Result<Self> {
        let n = adjacency.len();
        for (i, a) in adjacency.iter_mut().enumerate() {
            a.retain(|&j| j != i);
            a.sort_unstable();
            a.dedup();
            if a.last().is_some_and(|&j| j >= n) {
                return Err(Error::Contract(format!("adjacency of {i} points outside {n}")));
            }
        }
        let perm = reverse_cuthill_mckee(&adjacency);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let first: Vec<usize> = (0..n)
            .map(|r| adjacency[perm[r]].iter().map(|&j| inv[j]).fold(r, usize::min))
            .collect();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for r in 0..n {
            offsets.push(offsets[r] + r - first[r] + 1);
        }
        let values = vec![0.0; offsets[n]];
        Ok(Self {
            n,
            perm,
            inv,
            first,
            offsets,
            values,
            factored: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored lower-triangle entries.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|x| *x = 0.0);
        self.factored = false;
    }

    /// Storage offset of entry `(i, j)`, if inside the envelope.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.inv[i], self.inv[j]);
        let (r, c) = if a >= b { (a, b) } else { (b, a) };
        (c >= self.first[r]).then(|| self.offsets[r] + c - self.first[r])
    }

    /// Adds `value` to the symmetric pair `(i, j)`, `(j, i)` (stored once).
    pub fn add(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        let s = self
            .slot(i, j)
            .ok_or_else(|| Error::Contract(format!("entry ({i}, {j}) outside the declared pattern")))?;
        self.values[s] += value;
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.values[s])
    }

    /// `perm[new] = old`.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// `inv[old] = new`.
    pub fn inv(&self) -> &[usize] {
        &self.inv
    }

    /// Overwrites every stored row. `f(r, first, row)` receives permuted row
    /// `r` whose slice covers permuted columns `first..=r`. Rows are disjoint,
    /// so the parallel and sequential modes produce identical values.
    pub fn fill_rows<F>(&mut self, parallel: bool, f: F)
    where
        F: Fn(usize, usize, &mut [f64]) + Sync + Send,
    {
        let mut rows: Vec<(usize, usize, &mut [f64])> = Vec::with_capacity(self.n);
        let mut rest = self.values.as_mut_slice();
        for r in 0..self.n {
            let (head, tail) = rest.split_at_mut(self.offsets[r + 1] - self.offsets[r]);
            rows.push((r, self.first[r], head));
            rest = tail;
        }
        let work = |(r, first, row): &mut (usize, usize, &mut [f64])| {
            row.iter_mut().for_each(|x| *x = 0.0);
            f(*r, *first, row);
        };
        #[cfg(feature = "parallel")]
        if parallel {
            use rayon::prelude::*;
            rows.par_iter_mut().for_each(work);
            self.factored = false;
            return;
        }
        let _ = parallel;
        rows.iter_mut().for_each(work);
        self.factored = false;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|r| self.values[self.offsets[r + 1] - 1]).sum()
    }

    /// Adds a full storage vector laid out like this matrix's values.
    pub fn add_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::Contract("storage size mismatch".into()));
        }
        for (a, b) in self.values.iter_mut().zip(values) {
            *a += b;
        }
        self.factored = false;
        Ok(())
    }

    pub fn add_diag(&mut self, value: f64) {
        for r in 0..self.n {
            self.values[self.offsets[r + 1] - 1] += value;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// In-place Cholesky `A = L Lᵀ` within the envelope.
    pub fn factor(&mut self) -> Result<()> {
        if self.factored {
            return Err(Error::Contract("matrix already factored".into()));
        }
        for i in 0..self.n {
            let fi = self.first[i];
            let oi = self.offsets[i];
            for j in fi..i {
                let fj = self.first[j];
                let oj = self.offsets[j];
                let k0 = fi.max(fj);
                let mut s = self.values[oi + j - fi];
                for k in k0..j {
                    s -= self.values[oi + k - fi] * self.values[oj + k - fj];
                }
                self.values[oi + j - fi] = s / self.values[oj + j - fj];
            }
            let mut s = self.values[oi + i - fi];
            for k in fi..i {
                s -= self.values[oi + k - fi].powi(2);
            }
            if s.is_nan() || s <= 0.0 || !s.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: self.perm[i] });
            }
            self.values[oi + i - fi] = s.sqrt();
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = b` with the factored matrix.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if !self.factored {
            return Err(Error::Contract("solve before factor".into()));
        }
        if b.len() != self.n {
            return Err(Error::Contract(format!(
                "rhs length {} for a {}x{} system",
                b.len(),
                self.n,
                self.n
            )));
        }
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..self.n {
            let (fi, oi) = (self.first[i], self.offsets[i]);
            let mut s = y[i];
            for k in fi..i {
                s -= self.values[oi + k - fi] * y[k];
            }
            y[i] = s / self.values[oi + i - fi];
        }
        for i in (0..self.n).rev() {
            let (fi, oi) = (self.first[i], self.offsets[i]);
            y[i] /= self.values[oi + i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.values[oi + k - fi] * yi;
            }
        }
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }
}
