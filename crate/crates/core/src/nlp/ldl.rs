//! Sparse LDLᵀ factorization of symmetric (possibly indefinite) matrices.
//!
//! Up-looking elimination-tree factorization without pivoting. The pattern is
//! analysed once; numeric refactorizations reuse it. The inertia of the
//! factored matrix is read off the signs of `D`.

use super::ordering::{constrained_minimum_degree, minimum_degree};

const NONE: usize = usize::MAX;

/// Inertia `(positive, negative, zero)` of a factored matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactorError {
    /// A pivot was exactly zero or not finite.
    SingularPivot(usize),
}

/// Symbolic analysis for a fixed sparsity pattern.
///
/// Entries are supplied as triplets of the lower *or* upper triangle; both
/// `(i, j)` and `(j, i)` refer to the same entry and duplicates are summed.
#[derive(Clone, Debug)]
pub struct SymbolicLdl {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// Permuted upper triangle in CSC.
    ap: Vec<usize>,
    ai: Vec<usize>,
    /// For every input triplet, its slot in `ax`.
    slot_of_entry: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
}

fn adjacency(n: usize, entries: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adjacency = vec![Vec::new(); n];
    for &(r, c) in entries {
        if r != c {
            adjacency[r].push(c);
            adjacency[c].push(r);
        }
    }
    adjacency
}

impl SymbolicLdl {
    pub fn new(n: usize, entries: &[(usize, usize)]) -> Self {
        let perm = minimum_degree(&adjacency(n, entries));
        Self::with_permutation(n, entries, perm)
    }

    /// Ordering with elimination constraints; see
    /// [`constrained_minimum_degree`].
    pub fn constrained(n: usize, entries: &[(usize, usize)], after: &[Vec<usize>]) -> Self {
        let perm = constrained_minimum_degree(&adjacency(n, entries), after);
        Self::with_permutation(n, entries, perm)
    }

    pub fn with_permutation(n: usize, entries: &[(usize, usize)], perm: Vec<usize>) -> Self {
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        // Collect permuted upper-triangular coordinates (row <= col), plus the diagonal.
        let mut coords: Vec<(usize, usize)> = entries
            .iter()
            .map(|&(r, c)| {
                let (a, b) = (iperm[r], iperm[c]);
                if a <= b {
                    (b, a)
                } else {
                    (a, b)
                }
            })
            .collect();
        // (col, row) ordering for CSC, ensure every diagonal exists.
        let mut keys: Vec<(usize, usize)> = coords.clone();
        keys.extend((0..n).map(|i| (i, i)));
        keys.sort_unstable();
        keys.dedup();
        let mut ap = vec![0; n + 1];
        let mut ai = Vec::with_capacity(keys.len());
        for &(col, row) in &keys {
            ap[col + 1] += 1;
            ai.push(row);
        }
        for c in 0..n {
            ap[c + 1] += ap[c];
        }
        let slot_of_entry = coords
            .drain(..)
            .map(|k| keys.binary_search(&k).expect("key present"))
            .collect();

        // Elimination tree and column counts.
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &row in &ai[ap[j]..ap[j + 1]] {
                let mut i = row;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        Self {
            n,
            perm,
            ap,
            ai,
            slot_of_entry,
            etree,
            lp,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_factor(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization. `values[k]` belongs to the k-th triplet given at
    /// analysis time; `diag_shift[i]` is added to diagonal entry `i`.
    pub fn factor(&self, values: &[f64], diag_shift: &[f64]) -> Result<LdlFactor, FactorError> {
        self.factor_regularized(values, diag_shift, None)
    }

    /// Like [`factor`](Self::factor), but a pivot smaller than `reg.eps`
    /// times the largest magnitude seen while forming it (at least 1) is
    /// replaced by `reg.signs[i] * reg.delta` times that magnitude. Nodes
    /// with sign 0 are never regularized.
    pub fn factor_regularized(
        &self,
        values: &[f64],
        diag_shift: &[f64],
        reg: Option<&DynamicRegularization>,
    ) -> Result<LdlFactor, FactorError> {
        assert_eq!(values.len(), self.slot_of_entry.len());
        assert_eq!(diag_shift.len(), self.n);
        let n = self.n;
        let mut ax = vec![0.0; self.ai.len()];
        for (k, &slot) in self.slot_of_entry.iter().enumerate() {
            ax[slot] += values[k];
        }
        let dshift: Vec<f64> = self.perm.iter().map(|&old| diag_shift[old]).collect();

        let lp = &self.lp;
        let mut li = vec![0usize; lp[n]];
        let mut lx = vec![0.0; lp[n]];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut next_space: Vec<usize> = lp[..n].to_vec();
        let mut y_vals = vec![0.0; n];
        let mut y_used = vec![false; n];
        let mut y_idx: Vec<usize> = Vec::with_capacity(n);
        let mut elim: Vec<usize> = Vec::with_capacity(n);
        let mut regularized = 0;

        for k in 0..n {
            y_idx.clear();
            d[k] = dshift[k];
            let mut local = dshift[k].abs();
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                local = local.max(ax[p].abs());
                if b == k {
                    d[k] += ax[p];
                    continue;
                }
                y_vals[b] += ax[p];
                if !y_used[b] {
                    y_used[b] = true;
                    elim.clear();
                    elim.push(b);
                    let mut next = self.etree[b];
                    while next != NONE && next < k {
                        if y_used[next] {
                            break;
                        }
                        y_used[next] = true;
                        elim.push(next);
                        next = self.etree[next];
                    }
                    while let Some(e) = elim.pop() {
                        y_idx.push(e);
                    }
                }
            }
            for &c in y_idx.iter().rev() {
                let yc = y_vals[c];
                let end = next_space[c];
                for j in lp[c]..end {
                    y_vals[li[j]] -= lx[j] * yc;
                }
                li[end] = k;
                let l = yc * dinv[c];
                lx[end] = l;
                d[k] -= yc * l;
                local = local.max((yc * l).abs());
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            if let Some(reg) = reg.filter(|r| r.signs[self.perm[k]] != 0) {
                let local = local.max(1.0);
                if d[k].abs() < reg.eps * local && d[k].is_finite() {
                    d[k] = f64::from(reg.signs[self.perm[k]]) * reg.delta * local;
                    regularized += 1;
                }
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(FactorError::SingularPivot(self.perm[k]));
            }
            dinv[k] = 1.0 / d[k];
        }
        Ok(LdlFactor {
            n,
            perm: self.perm.clone(),
            lp: self.lp.clone(),
            li,
            lx,
            d,
            dinv,
            regularized,
        })
    }
}

/// Replacement rule for tiny pivots, keyed by original (unpermuted) index.
#[derive(Clone, Debug)]
pub struct DynamicRegularization {
    pub signs: Vec<i8>,
    pub eps: f64,
    pub delta: f64,
}

#[derive(Clone, Debug)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    regularized: usize,
}

impl LdlFactor {
    /// Number of pivots replaced by dynamic regularization.
    pub fn regularized_pivots(&self) -> usize {
        self.regularized
    }

    pub fn inertia(&self) -> Inertia {
        let mut inertia = Inertia {
            positive: 0,
            negative: 0,
            zero: 0,
        };
        for &d in &self.d {
            if d > 0.0 {
                inertia.positive += 1;
            } else if d < 0.0 {
                inertia.negative += 1;
            } else {
                inertia.zero += 1;
            }
        }
        inertia
    }

    /// Smallest pivot magnitude.
    pub fn min_abs_pivot(&self) -> f64 {
        self.d.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()))
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                xi -= self.lx[j] * x[self.li[j]];
            }
            x[i] = xi;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }
}

/// Symmetric matrix-vector product from triplets (each off-diagonal counted once).
pub fn sym_matvec(
    n: usize,
    entries: &[(usize, usize)],
    values: &[f64],
    diag_shift: &[f64],
    x: &[f64],
) -> Vec<f64> {
    let mut y: Vec<f64> = (0..n).map(|i| diag_shift[i] * x[i]).collect();
    for (&(r, c), &v) in entries.iter().zip(values) {
        y[r] += v * x[c];
        if r != c {
            y[c] += v * x[r];
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, density: f64, seed: u64) -> (Vec<(usize, usize)>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e = Vec::new();
        let mut v = Vec::new();
        for i in 0..n {
            e.push((i, i));
            v.push(if i % 3 == 0 { -4.0 } else { 4.0 } + rng.gen_range(-1.0..1.0));
            for j in 0..i {
                if rng.gen_bool(density) {
                    e.push((i, j));
                    v.push(rng.gen_range(-1.0..1.0));
                }
            }
        }
        (e, v)
    }

    #[test]
    fn solves_indefinite_system() {
        let n = 40;
        let (e, v) = random_sym(n, 0.1, 7);
        let sym = SymbolicLdl::new(n, &e);
        let shift = vec![0.0; n];
        let f = sym.factor(&v, &shift).unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = sym_matvec(n, &e, &v, &shift, &x_true);
        f.solve_in_place(&mut b);
        for (a, t) in b.iter().zip(&x_true) {
            assert!((a - t).abs() < 1e-9);
        }
    }

    #[test]
    fn inertia_of_saddle_point_matrix() {
        // [I  A^T; A  -eps I] with A 2x3 full rank: inertia (3, 2, 0)
        let e = vec![(0, 0), (1, 1), (2, 2), (3, 0), (3, 1), (4, 1), (4, 2), (3, 3), (4, 4)];
        let v = vec![1.0, 1.0, 1.0, 1.0, 2.0, -1.0, 1.0, -1e-8, -1e-8];
        let sym = SymbolicLdl::new(5, &e);
        let f = sym.factor(&v, &[0.0; 5]).unwrap();
        assert_eq!(
            f.inertia(),
            Inertia {
                positive: 3,
                negative: 2,
                zero: 0
            }
        );
    }

    #[test]
    fn duplicate_and_transposed_entries_are_summed() {
        let e = vec![(0, 0), (1, 0), (0, 1), (1, 1)];
        let v = vec![2.0, 0.5, 0.5, 3.0];
        let sym = SymbolicLdl::new(2, &e);
        let f = sym.factor(&v, &[0.0, 0.0]).unwrap();
        let mut b = vec![3.0, 4.0]; // A = [[2,1],[1,3]], x = [1,1]
        f.solve_in_place(&mut b);
        assert!((b[0] - 1.0).abs() < 1e-14 && (b[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dynamic_regularization_replaces_tiny_pivots() {
        // [[0, 1], [1, 0]] has no LDL without pivoting; with regularization
        // the first pivot becomes +delta and the inertia stays (1, 1).
        let e = vec![(0, 0), (1, 0), (1, 1)];
        let sym = SymbolicLdl::with_permutation(2, &e, vec![0, 1]);
        let reg = DynamicRegularization {
            signs: vec![1, -1],
            eps: 1e-12,
            delta: 1e-8,
        };
        let f = sym
            .factor_regularized(&[0.0, 1.0, 0.0], &[0.0, 0.0], Some(&reg))
            .unwrap();
        assert_eq!(f.regularized_pivots(), 1);
        assert_eq!(f.inertia().positive, 1);
        assert_eq!(f.inertia().negative, 1);
    }

    #[test]
    fn zero_pivot_is_reported() {
        let e = vec![(0, 0), (1, 1)];
        let sym = SymbolicLdl::new(2, &e);
        assert!(sym.factor(&[1.0, 0.0], &[0.0, 0.0]).is_err());
    }
}
