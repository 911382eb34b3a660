//! Rate-1/3 parallel concatenated convolutional code with octal 13/15
//! recursive systematic constituents (memory 3, 8 states) and a Max-Log-MAP
//! iterative decoder.
//!
//! Codeword layout (length `3K + 12`): for each information bit `k` the
//! triple `(s_k, p1_k, p2_k)`, then the termination of constituent 1 as three
//! `(u, p)` pairs, then the termination of constituent 2 the same way. Each
//! constituent is driven back to the zero state by its own three tail inputs.
//!
//! LLRs are positive when bit 0 is more likely.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MEMORY: usize = 3;
pub const N_STATES: usize = 1 << MEMORY;
/// Termination bits for both constituents together.
pub const TAIL_BITS: usize = 4 * MEMORY;

/// Turbo code parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurboConfig {
    pub block_length: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub interleaver_seed: u64,
    /// Scaling applied to extrinsic LLRs exchanged between constituents.
    #[serde(default = "default_extrinsic_scale")]
    pub extrinsic_scale: f64,
}

fn default_iterations() -> usize {
    8
}

fn default_extrinsic_scale() -> f64 {
    0.75
}

impl TurboConfig {
    pub fn new(block_length: usize) -> Self {
        Self {
            block_length,
            iterations: default_iterations(),
            interleaver_seed: 0,
            extrinsic_scale: default_extrinsic_scale(),
        }
    }

    /// Mother codeword length `3K + 12`.
    pub fn codeword_len(&self) -> usize {
        3 * self.block_length + TAIL_BITS
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_length == 0 {
            return Err(Error::config("turbo block length must be positive"));
        }
        if self.iterations == 0 {
            return Err(Error::config("turbo iterations must be positive"));
        }
        if !(self.extrinsic_scale > 0.0 && self.extrinsic_scale <= 1.0) {
            return Err(Error::config(format!("extrinsic scale must be in (0, 1], got {}", self.extrinsic_scale)));
        }
        Ok(())
    }
}

/// Seeded pseudo-random permutation of `0..k`.
pub fn interleaver(k: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..k).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x7475_7262_6f5f_696c));
    perm
}

/// One trellis step from `state` with input `u`: returns `(next, parity)`.
/// The state holds the register contents `(s1 s2 s3)`, `s1` newest, in the
/// high bit.
#[inline]
pub fn rsc_step(state: usize, u: u8) -> (usize, u8) {
    let s1 = ((state >> 2) & 1) as u8;
    let s2 = ((state >> 1) & 1) as u8;
    let s3 = (state & 1) as u8;
    let a = u ^ s2 ^ s3;
    let p = a ^ s1 ^ s3;
    (((a as usize) << 2) | ((s1 as usize) << 1) | s2 as usize, p)
}

/// Input that drives the feedback to zero (used for termination).
#[inline]
pub fn tail_input(state: usize) -> u8 {
    (((state >> 1) ^ state) & 1) as u8
}

/// Encodes one constituent; returns parity for the data and the three
/// `(u, p)` termination pairs.
fn rsc_encode(bits: impl Iterator<Item = u8>) -> (Vec<u8>, [(u8, u8); MEMORY]) {
    let mut state = 0;
    let mut parity = Vec::new();
    for u in bits {
        let (next, p) = rsc_step(state, u);
        parity.push(p);
        state = next;
    }
    let mut tail = [(0, 0); MEMORY];
    for t in tail.iter_mut() {
        let u = tail_input(state);
        let (next, p) = rsc_step(state, u);
        *t = (u, p);
        state = next;
    }
    debug_assert_eq!(state, 0);
    (parity, tail)
}

/// Encoder/decoder pair with the interleaver materialized.
#[derive(Clone, Debug)]
pub struct TurboCodec {
    cfg: TurboConfig,
    perm: Vec<usize>,
}

impl TurboCodec {
    pub fn new(cfg: TurboConfig) -> Result<Self> {
        cfg.validate()?;
        let perm = interleaver(cfg.block_length, cfg.interleaver_seed);
        Ok(Self { cfg, perm })
    }

    pub fn config(&self) -> &TurboConfig {
        &self.cfg
    }

    pub fn block_length(&self) -> usize {
        self.cfg.block_length
    }

    pub fn codeword_len(&self) -> usize {
        self.cfg.codeword_len()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn encode(&self, bits: &[u8]) -> Result<Vec<u8>> {
        let k = self.cfg.block_length;
        if bits.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: bits.len() });
        }
        let (p1, t1) = rsc_encode(bits.iter().copied());
        let (p2, t2) = rsc_encode(self.perm.iter().map(|&i| bits[i]));
        let mut out = Vec::with_capacity(self.codeword_len());
        for i in 0..k {
            out.extend_from_slice(&[bits[i], p1[i], p2[i]]);
        }
        for (u, p) in t1.iter().chain(&t2) {
            out.extend_from_slice(&[*u, *p]);
        }
        Ok(out)
    }

    /// Iterative decoding of mother-codeword LLRs (punctured positions zero).
    /// Returns the hard decisions and whether they were stable between the
    /// last two iterations.
    pub fn decode(&self, llrs: &[f64]) -> Result<(Vec<u8>, bool)> {
        self.decode_iterations(llrs, self.cfg.iterations)
    }

    pub fn decode_iterations(&self, llrs: &[f64], iterations: usize) -> Result<(Vec<u8>, bool)> {
        let k = self.cfg.block_length;
        if llrs.len() != self.codeword_len() {
            return Err(Error::DimensionMismatch { expected: self.codeword_len(), got: llrs.len() });
        }
        let n = k + MEMORY;
        let tail = &llrs[3 * k..];
        let mut ls1 = Vec::with_capacity(n);
        let mut lp1 = Vec::with_capacity(n);
        let mut ls2 = Vec::with_capacity(n);
        let mut lp2 = Vec::with_capacity(n);
        for i in 0..k {
            ls1.push(llrs[3 * i]);
            lp1.push(llrs[3 * i + 1]);
            lp2.push(llrs[3 * i + 2]);
        }
        for &i in &self.perm {
            ls2.push(llrs[3 * i]);
        }
        for j in 0..MEMORY {
            ls1.push(tail[2 * j]);
            lp1.push(tail[2 * j + 1]);
            ls2.push(tail[2 * MEMORY + 2 * j]);
            lp2.push(tail[2 * MEMORY + 2 * j + 1]);
        }
        let scale = self.cfg.extrinsic_scale;
        let mut bcjr = MaxLogBcjr::new(n);
        let mut la1 = vec![0.0; k];
        let mut la2 = vec![0.0; k];
        let mut app = vec![0.0; k];
        let mut hard = vec![0u8; k];
        let mut prev: Option<Vec<u8>> = None;
        let mut converged = false;
        for _ in 0..iterations.max(1) {
            let le1 = bcjr.run(&ls1, &lp1, &la1);
            for (j, &i) in self.perm.iter().enumerate() {
                la2[j] = scale * le1[i];
            }
            let le2 = bcjr.run(&ls2, &lp2, &la2);
            for (j, &i) in self.perm.iter().enumerate() {
                la1[i] = scale * le2[j];
                app[i] = le2[j] + ls2[j] + la2[j];
            }
            for (h, &a) in hard.iter_mut().zip(&app) {
                *h = u8::from(a < 0.0);
            }
            if prev.as_deref() == Some(&hard[..]) {
                converged = true;
                break;
            }
            prev = Some(hard.clone());
        }
        Ok((hard, converged))
    }
}

/// Max-Log-MAP BCJR for one constituent, with reusable metric buffers.
struct MaxLogBcjr {
    alpha: Vec<[f64; N_STATES]>,
    next: [[usize; 2]; N_STATES],
    par: [[u8; 2]; N_STATES],
}

impl MaxLogBcjr {
    fn new(n: usize) -> Self {
        let mut next = [[0; 2]; N_STATES];
        let mut par = [[0; 2]; N_STATES];
        for s in 0..N_STATES {
            for u in 0..2 {
                let (ns, p) = rsc_step(s, u as u8);
                next[s][u] = ns;
                par[s][u] = p;
            }
        }
        Self { alpha: vec![[f64::NEG_INFINITY; N_STATES]; n + 1], next, par }
    }

    /// Extrinsic LLRs of the `K` data inputs. `ls`/`lp` cover data and tail
    /// steps; `la` covers data steps only.
    fn run(&mut self, ls: &[f64], lp: &[f64], la: &[f64]) -> Vec<f64> {
        let n = ls.len();
        let k = la.len();
        let gamma = |step: usize, u: usize, p: u8| -> f64 {
            let a = if step < k { la[step] } else { 0.0 };
            let su = if u == 0 { 1.0 } else { -1.0 };
            let sp = if p == 0 { 1.0 } else { -1.0 };
            0.5 * (su * (ls[step] + a) + sp * lp[step])
        };
        let ninf = f64::NEG_INFINITY;
        self.alpha[0] = [ninf; N_STATES];
        self.alpha[0][0] = 0.0;
        for step in 0..n {
            let mut nxt = [ninf; N_STATES];
            let cur = self.alpha[step];
            for s in 0..N_STATES {
                if cur[s] == ninf {
                    continue;
                }
                for u in 0..2 {
                    if step >= k && u as u8 != tail_input(s) {
                        continue;
                    }
                    let m = cur[s] + gamma(step, u, self.par[s][u]);
                    let ns = self.next[s][u];
                    if m > nxt[ns] {
                        nxt[ns] = m;
                    }
                }
            }
            let mx = nxt.iter().cloned().fold(ninf, f64::max);
            for v in nxt.iter_mut() {
                *v -= mx;
            }
            self.alpha[step + 1] = nxt;
        }
        let mut beta = [ninf; N_STATES];
        beta[0] = 0.0;
        let mut ext = vec![0.0; k];
        for step in (0..n).rev() {
            let cur = self.alpha[step];
            let mut prev = [ninf; N_STATES];
            let mut best = [ninf; 2];
            for s in 0..N_STATES {
                for u in 0..2 {
                    if step >= k && u as u8 != tail_input(s) {
                        continue;
                    }
                    let ns = self.next[s][u];
                    if beta[ns] == ninf {
                        continue;
                    }
                    let g = gamma(step, u, self.par[s][u]);
                    let b = g + beta[ns];
                    if b > prev[s] {
                        prev[s] = b;
                    }
                    if cur[s] != ninf {
                        let m = cur[s] + b;
                        if m > best[u] {
                            best[u] = m;
                        }
                    }
                }
            }
            if step < k {
                ext[step] = best[0] - best[1] - ls[step] - la[step];
            }
            let mx = prev.iter().cloned().fold(ninf, f64::max);
            for v in prev.iter_mut() {
                *v -= mx;
            }
            beta = prev;
        }
        ext
    }
}

/// Encodes `bits` with a codec built from `cfg`.
pub fn turbo_encode(bits: &[u8], cfg: &TurboConfig) -> Result<Vec<u8>> {
    TurboCodec::new(cfg.clone())?.encode(bits)
}

/// Decodes mother-codeword LLRs with a codec built from `cfg`.
pub fn turbo_decode(llrs: &[f64], cfg: &TurboConfig) -> Result<(Vec<u8>, bool)> {
    TurboCodec::new(cfg.clone())?.decode(llrs)
}
