//! Polar codes in natural order: `x = u · F^{⊗n}` with `F = [[1,0],[1,1]]`.
//!
//! LLRs are `ln P(bit=0) / P(bit=1)`. Hard decisions take 0 on ties.

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PolarError {
    #[error("block length {0} is not a power of two")]
    BlockLength(usize),
    #[error("{k} information bits do not fit a block of {n}")]
    Rate { n: usize, k: usize },
    #[error("expected {expected} bits/LLRs, got {got}")]
    Length { expected: usize, got: usize },
    #[error("list size must be at least 1")]
    ListSize,
}

/// Code parameters with the frozen set fixed at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarCode {
    n: usize,
    k: usize,
    list_size: usize,
    frozen: Vec<bool>,
    info_positions: Vec<usize>,
}

pub const DEFAULT_BLOCK: usize = 512;
pub const DEFAULT_INFO_BITS: usize = 256;
pub const DEFAULT_LIST: usize = 4;
pub const DESIGN_SNR_DB: f64 = 2.0;

impl PolarCode {
    pub fn new(n: usize, k: usize, list_size: usize, design_snr_db: f64) -> Result<Self, PolarError> {
        if list_size == 0 {
            return Err(PolarError::ListSize);
        }
        let frozen = frozen_set_construct(n, k, design_snr_db)?;
        let info_positions = (0..n).filter(|&i| !frozen[i]).collect();
        Ok(PolarCode {
            n,
            k,
            list_size,
            frozen,
            info_positions,
        })
    }

    /// `N = 512`, `K = 256`, list 4.
    pub fn standard() -> Self {
        PolarCode::new(DEFAULT_BLOCK, DEFAULT_INFO_BITS, DEFAULT_LIST, DESIGN_SNR_DB)
            .expect("valid default parameters")
    }

    pub fn with_list(&self, list_size: usize) -> Result<Self, PolarError> {
        if list_size == 0 {
            return Err(PolarError::ListSize);
        }
        Ok(PolarCode {
            list_size,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn list_size(&self) -> usize {
        self.list_size
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn frozen_indices(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.frozen[i]).collect()
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>, PolarError> {
        if info.len() != self.k {
            return Err(PolarError::Length {
                expected: self.k,
                got: info.len(),
            });
        }
        let mut u = vec![0u8; self.n];
        for (&pos, &b) in self.info_positions.iter().zip(info) {
            u[pos] = b & 1;
        }
        polar_transform(&mut u);
        Ok(u)
    }

    fn check_llrs(&self, llrs: &[f64]) -> Result<(), PolarError> {
        if llrs.len() != self.n {
            return Err(PolarError::Length {
                expected: self.n,
                got: llrs.len(),
            });
        }
        Ok(())
    }

    fn extract(&self, u: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&i| u[i]).collect()
    }

    /// Plain successive cancellation.
    pub fn sc_decode(&self, llrs: &[f64]) -> Result<Vec<u8>, PolarError> {
        self.check_llrs(llrs)?;
        let mut u = Vec::with_capacity(self.n);
        sc_node(llrs, &self.frozen, &mut u);
        Ok(self.extract(&u))
    }

    /// Successive cancellation list decoding; the surviving path with the
    /// smallest metric wins. With list size 1 this is exactly [`Self::sc_decode`].
    pub fn scl_decode(&self, llrs: &[f64]) -> Result<Vec<u8>, PolarError> {
        self.check_llrs(llrs)?;
        let start = vec![Path {
            metric: 0.0,
            llrs: llrs.to_vec(),
        }];
        let out = scl_node(start, &self.frozen, self.list_size);
        let best = (0..out.metrics.len())
            .min_by(|&a, &b| out.metrics[a].total_cmp(&out.metrics[b]))
            .expect("at least one path survives");
        Ok(self.extract(&out.u[best]))
    }
}

/// In-place `x = u · F^{⊗n}`; its own inverse.
pub fn polar_transform(bits: &mut [u8]) {
    let n = bits.len();
    let mut half = 1;
    while half < n {
        for i in (0..n).step_by(2 * half) {
            for j in 0..half {
                bits[i + j] ^= bits[i + j + half];
            }
        }
        half *= 2;
    }
}

/// Bhattacharyya construction on a BI-AWGN channel. Returns `frozen[i]`;
/// the `k` indices with the smallest parameter carry information (ties go
/// to the higher index).
pub fn frozen_set_construct(n: usize, k: usize, design_snr_db: f64) -> Result<Vec<bool>, PolarError> {
    if n == 0 || !n.is_power_of_two() {
        return Err(PolarError::BlockLength(n));
    }
    if k > n {
        return Err(PolarError::Rate { n, k });
    }
    let z = bhattacharyya(n, design_snr_db);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(b.cmp(&a)));
    let mut frozen = vec![true; n];
    for &i in &order[..k] {
        frozen[i] = false;
    }
    Ok(frozen)
}

/// Bhattacharyya parameter of every synthetic channel. The most
/// significant index bit selects the first transform applied to the base
/// channel (0: `2z − z²`, 1: `z²`).
pub fn bhattacharyya(n: usize, design_snr_db: f64) -> Vec<f64> {
    let levels = n.trailing_zeros();
    let z0 = (-(10f64.powf(design_snr_db / 10.0))).exp();
    (0..n)
        .map(|i| {
            (0..levels).rev().fold(z0, |z, bit| {
                if (i >> bit) & 1 == 0 {
                    2.0 * z - z * z
                } else {
                    z * z
                }
            })
        })
        .collect()
}

/// Exact check-node LLR combination in a stable form.
fn boxplus(a: f64, b: f64) -> f64 {
    let s = a.signum() * b.signum() * a.abs().min(b.abs());
    s + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
}

fn upper(llrs: &[f64]) -> Vec<f64> {
    let h = llrs.len() / 2;
    (0..h).map(|j| boxplus(llrs[j], llrs[j + h])).collect()
}

fn lower(llrs: &[f64], partial: &[u8]) -> Vec<f64> {
    let h = llrs.len() / 2;
    (0..h)
        .map(|j| {
            let a = llrs[j];
            llrs[j + h] + if partial[j] == 0 { a } else { -a }
        })
        .collect()
}

fn decide(llr: f64) -> u8 {
    u8::from(llr < 0.0)
}

/// Returns the re-encoded codeword bits of this node; appends decisions to `u`.
fn sc_node(llrs: &[f64], frozen: &[bool], u: &mut Vec<u8>) -> Vec<u8> {
    if llrs.len() == 1 {
        let bit = if frozen[0] { 0 } else { decide(llrs[0]) };
        u.push(bit);
        return vec![bit];
    }
    let h = llrs.len() / 2;
    let a = sc_node(&upper(llrs), &frozen[..h], u);
    let b = sc_node(&lower(llrs, &a), &frozen[h..], u);
    a.iter().zip(&b).map(|(x, y)| x ^ y).chain(b.iter().copied()).collect()
}

struct Path {
    metric: f64,
    llrs: Vec<f64>,
}

/// Survivors of one subtree: `parent[p]` is the input path that output path
/// `p` extends.
struct NodeOut {
    parent: Vec<usize>,
    metrics: Vec<f64>,
    x: Vec<Vec<u8>>,
    u: Vec<Vec<u8>>,
}

/// `ln(1 + e^{−(1−2u)·L})`, the metric penalty for deciding `u` against LLR `L`.
fn penalty(llr: f64, bit: u8) -> f64 {
    let m = if bit == 0 { llr } else { -llr };
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

fn scl_node(paths: Vec<Path>, frozen: &[bool], list: usize) -> NodeOut {
    if frozen.len() == 1 {
        if frozen[0] {
            return NodeOut {
                parent: (0..paths.len()).collect(),
                metrics: paths.iter().map(|p| p.metric + penalty(p.llrs[0], 0)).collect(),
                x: vec![vec![0]; paths.len()],
                u: vec![vec![0]; paths.len()],
            };
        }
        // Candidates in (parent, bit) order; the stable sort keeps u = 0 first on ties.
        let mut cands: Vec<(f64, usize, u8)> = Vec::with_capacity(2 * paths.len());
        for (i, p) in paths.iter().enumerate() {
            for bit in [0u8, 1] {
                cands.push((p.metric + penalty(p.llrs[0], bit), i, bit));
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0));
        cands.truncate(list);
        return NodeOut {
            parent: cands.iter().map(|c| c.1).collect(),
            metrics: cands.iter().map(|c| c.0).collect(),
            x: cands.iter().map(|c| vec![c.2]).collect(),
            u: cands.iter().map(|c| vec![c.2]).collect(),
        };
    }
    let h = frozen.len() / 2;
    let up: Vec<Path> = paths
        .iter()
        .map(|p| Path {
            metric: p.metric,
            llrs: upper(&p.llrs),
        })
        .collect();
    let first = scl_node(up, &frozen[..h], list);
    let down: Vec<Path> = (0..first.parent.len())
        .map(|q| Path {
            metric: first.metrics[q],
            llrs: lower(&paths[first.parent[q]].llrs, &first.x[q]),
        })
        .collect();
    let second = scl_node(down, &frozen[h..], list);
    let mut out = NodeOut {
        parent: Vec::with_capacity(second.parent.len()),
        metrics: second.metrics,
        x: Vec::with_capacity(second.parent.len()),
        u: Vec::with_capacity(second.parent.len()),
    };
    for (r, &q) in second.parent.iter().enumerate() {
        out.parent.push(first.parent[q]);
        let a = &first.x[q];
        let b = &second.x[r];
        out.x
            .push(a.iter().zip(b).map(|(x, y)| x ^ y).chain(b.iter().copied()).collect());
        let mut u = first.u[q].clone();
        u.extend_from_slice(&second.u[r]);
        out.u.push(u);
    }
    out
}
