use rayon::prelude::*;

use super::{canonical_labels, check_k, Algorithm, ClusterResult, Points};
use crate::error::{Error, Result};

/// Above this the condensed distance matrix no longer fits comfortably in
/// memory (`N(N−1)/2` doubles).
pub const MAX_WARD_POINTS: usize = 25_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    /// Lower and higher slot index; the merged cluster keeps `a`.
    pub a: usize,
    pub b: usize,
    /// Increase in total within-cluster sum of squares.
    pub cost: f64,
    pub size: usize,
}

/// Full merge history in non-decreasing cost order.
#[derive(Debug, Clone)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Labels after the first `n − k` merges.
    pub fn cut(&self, k: usize) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for m in &self.merges[..self.n.saturating_sub(k)] {
            let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
            parent[ra.max(rb)] = ra.min(rb);
        }
        let roots: Vec<usize> = (0..self.n).map(|i| find(&mut parent, i)).collect();
        canonical_labels(&roots)
    }

    /// Total within-cluster sum of squares of the `k`-cluster cut.
    pub fn cut_cost(&self, k: usize) -> f64 {
        self.merges[..self.n.saturating_sub(k)].iter().map(|m| m.cost).sum()
    }
}

#[inline]
fn cidx(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    n * i - i * (i + 1) / 2 + j - i - 1
}

/// Ward linkage by the nearest-neighbour chain algorithm with Lance–Williams
/// updates. Distances are kept as `2·n_a·n_b/(n_a+n_b)·‖c_a − c_b‖²`, so a
/// merge costs half its distance. Ties prefer the previous chain element,
/// then the lowest index.
pub fn ward_linkage<P: Points + ?Sized>(x: &P) -> Result<Dendrogram> {
    let n = x.len();
    if n > MAX_WARD_POINTS {
        return Err(Error::invalid(format!(
            "Ward linkage on {n} points exceeds the {MAX_WARD_POINTS}-point limit; subsample first"
        )));
    }
    let mut dist = vec![0.0; n * n.saturating_sub(1) / 2];
    let mut rows: Vec<(usize, &mut [f64])> = Vec::with_capacity(n);
    let mut rest = dist.as_mut_slice();
    for i in 0..n.saturating_sub(1) {
        let (head, tail) = rest.split_at_mut(n - i - 1);
        rows.push((i, head));
        rest = tail;
    }
    rows.into_par_iter().for_each(|(i, row)| {
        for (t, d) in row.iter_mut().enumerate() {
            *d = x.sq_dist(i, i + 1 + t);
        }
    });

    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for _ in 1..n {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("two active clusters"));
        }
        let (a, b) = loop {
            let tip = *chain.last().expect("non-empty chain");
            let prev = (chain.len() > 1).then(|| chain[chain.len() - 2]);
            let (mut best, mut best_d) = match prev {
                Some(p) => (p, dist[cidx(n, tip, p)]),
                None => (usize::MAX, f64::INFINITY),
            };
            for j in 0..n {
                if j == tip || !active[j] {
                    continue;
                }
                let d = dist[cidx(n, tip, j)];
                if d < best_d || (d == best_d && prev != Some(best) && j < best) {
                    best = j;
                    best_d = d;
                }
            }
            if Some(best) == prev {
                chain.pop();
                chain.pop();
                break (tip.min(best), tip.max(best));
            }
            chain.push(best);
        };

        let d_ab = dist[cidx(n, a, b)];
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in 0..n {
            if k == a || k == b || !active[k] {
                continue;
            }
            let nk = size[k] as f64;
            let d_ak = dist[cidx(n, a, k)];
            let d_bk = dist[cidx(n, b, k)];
            dist[cidx(n, a, k)] = ((na + nk) * d_ak + (nb + nk) * d_bk - nk * d_ab) / (na + nb + nk);
        }
        active[b] = false;
        size[a] += size[b];
        merges.push(Merge {
            a,
            b,
            cost: d_ab / 2.0,
            size: size[a],
        });
    }
    // Reducibility makes the chain order a valid hierarchy; a stable sort
    // by cost keeps children ahead of parents of equal height.
    merges.sort_by(|p, q| p.cost.total_cmp(&q.cost));
    Ok(Dendrogram { n, merges })
}

pub fn ward<P: Points + ?Sized>(x: &P, k: usize) -> Result<ClusterResult> {
    check_k(x, k)?;
    let tree = ward_linkage(x)?;
    let labels = tree.cut(k);
    Ok(ClusterResult {
        objective: super::wcss(x, &labels, k),
        labels,
        k,
        algorithm: Algorithm::Ward,
    })
}
