//! Rate-1/2 regular LDPC code with a sum-product (belief propagation) decoder.
//!
//! The parity-check matrix is a random (3,6)-regular Gallager-style
//! construction: columns are filled one at a time from the least-used rows,
//! rejecting rows that would close a length-4 cycle. Attempts that end with a
//! 4-cycle-free but rank-deficient matrix are redrawn from the next seed in the
//! sequence, so the returned matrix always has full row rank and an exact
//! systematic encoder.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::channel::mix_seed;
use crate::error::{Error, Result};

const MAX_ATTEMPTS: u64 = 64;
const LLR_CLAMP: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdpcParams {
    /// Information bits per codeword.
    pub k: usize,
    /// Ones per column of the parity-check matrix.
    pub column_degree: usize,
    pub seed: u64,
}

impl Default for LdpcParams {
    fn default() -> Self {
        Self {
            k: 512,
            column_degree: 3,
            seed: 0x1d9c,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LdpcCode {
    k: usize,
    n: usize,
    column_degree: usize,
    seed: u64,
    /// Rows of H as column index lists.
    check_to_var: Vec<Vec<usize>>,
    var_to_check: Vec<Vec<usize>>,
    /// Codeword positions carrying information bits, in order.
    info_positions: Vec<usize>,
    /// For each parity position: the information-bit indices it sums.
    parity_eqs: Vec<(usize, Vec<usize>)>,
    has_four_cycles: bool,
}

impl LdpcCode {
    pub fn new(params: LdpcParams) -> Result<Self> {
        let LdpcParams {
            k,
            column_degree: dv,
            seed,
        } = params;
        if k == 0 {
            return Err(Error::InvalidArgument("LDPC k must be positive".into()));
        }
        let n = 2 * k;
        let m = k;
        let dc = 2 * dv;
        if dv < 2 || dc > n || dv > m {
            return Err(Error::InvalidArgument(format!(
                "column degree {dv} is not realizable for k={k}"
            )));
        }
        let mut fallback = None;
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(seed, attempt));
            let (rows, cycle_free) = match build_columns(n, m, dv, dc, &mut rng, true) {
                Some(rows) => (rows, true),
                None => match build_columns(n, m, dv, dc, &mut rng, false) {
                    Some(rows) => (rows, false),
                    None => continue,
                },
            };
            let Some((info_positions, parity_eqs)) = systematic_form(&rows, n) else {
                continue;
            };
            let code = Self::assemble(params, rows, info_positions, parity_eqs, !cycle_free);
            if cycle_free {
                return Ok(code);
            }
            fallback.get_or_insert(code);
        }
        fallback.ok_or_else(|| Error::InvalidArgument(format!("no full-rank LDPC matrix found for k={k}")))
    }

    fn assemble(
        params: LdpcParams,
        rows: Vec<Vec<usize>>,
        info_positions: Vec<usize>,
        parity_eqs: Vec<(usize, Vec<usize>)>,
        has_four_cycles: bool,
    ) -> Self {
        let n = 2 * params.k;
        let mut var_to_check = vec![Vec::new(); n];
        for (r, cols) in rows.iter().enumerate() {
            for &c in cols {
                var_to_check[c].push(r);
            }
        }
        Self {
            k: params.k,
            n,
            column_degree: params.column_degree,
            seed: params.seed,
            check_to_var: rows,
            var_to_check,
            info_positions,
            parity_eqs,
            has_four_cycles,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn column_degree(&self) -> usize {
        self.column_degree
    }

    pub fn has_four_cycles(&self) -> bool {
        self.has_four_cycles
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.check_to_var
    }

    pub fn column_checks(&self) -> &[Vec<usize>] {
        &self.var_to_check
    }

    /// `H · word == 0 (mod 2)`.
    pub fn satisfies_parity(&self, word: &[u8]) -> bool {
        self.check_to_var
            .iter()
            .all(|row| row.iter().fold(0u8, |acc, &c| acc ^ word[c]) == 0)
    }

    pub fn encode_block(&self, info: &[u8]) -> Vec<u8> {
        debug_assert_eq!(info.len(), self.k);
        let mut word = vec![0u8; self.n];
        for (&pos, &b) in self.info_positions.iter().zip(info) {
            word[pos] = b & 1;
        }
        for (pos, deps) in &self.parity_eqs {
            word[*pos] = deps.iter().fold(0u8, |acc, &i| acc ^ (info[i] & 1));
        }
        word
    }

    pub fn extract_info(&self, word: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&p| word[p]).collect()
    }

    /// Flooding sum-product decoding of one codeword. Positive LLR favors 0.
    pub fn decode_block(&self, llr: &[f64], max_iters: usize) -> BlockDecode {
        debug_assert_eq!(llr.len(), self.n);
        let channel: Vec<f64> = llr
            .iter()
            .map(|v| {
                if v.is_nan() {
                    0.0
                } else {
                    v.clamp(-LLR_CLAMP, LLR_CLAMP)
                }
            })
            .collect();
        // edge storage per check row, aligned with check_to_var
        let mut c2v: Vec<Vec<f64>> = self.check_to_var.iter().map(|r| vec![0.0; r.len()]).collect();
        // position of each (var, check) edge inside the check's row
        let edge_slot: Vec<Vec<usize>> = self
            .var_to_check
            .iter()
            .enumerate()
            .map(|(v, checks)| {
                checks
                    .iter()
                    .map(|&c| self.check_to_var[c].iter().position(|&x| x == v).unwrap())
                    .collect()
            })
            .collect();
        let mut total = channel.clone();
        let mut hard: Vec<u8> = total.iter().map(|&l| (l < 0.0) as u8).collect();
        let mut tanhs = Vec::new();
        for iter in 1..=max_iters {
            for (c, row) in self.check_to_var.iter().enumerate() {
                tanhs.clear();
                for (slot, &v) in row.iter().enumerate() {
                    let msg = (total[v] - c2v[c][slot]).clamp(-LLR_CLAMP, LLR_CLAMP);
                    tanhs.push((msg / 2.0).tanh());
                }
                let d = row.len();
                // exclusive products via prefix/suffix sweeps
                let mut prefix = 1.0;
                let mut out = vec![0.0; d];
                for i in 0..d {
                    out[i] = prefix;
                    prefix *= tanhs[i];
                }
                let mut suffix = 1.0;
                for i in (0..d).rev() {
                    let p = (out[i] * suffix).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    out[i] = (2.0 * p.atanh()).clamp(-LLR_CLAMP, LLR_CLAMP);
                    suffix *= tanhs[i];
                }
                c2v[c].copy_from_slice(&out);
            }
            for v in 0..self.n {
                let mut sum = channel[v];
                for (&c, &slot) in self.var_to_check[v].iter().zip(&edge_slot[v]) {
                    sum += c2v[c][slot];
                }
                total[v] = sum;
                hard[v] = (sum < 0.0) as u8;
            }
            if self.satisfies_parity(&hard) {
                return BlockDecode {
                    info: self.extract_info(&hard),
                    codeword: hard,
                    converged: true,
                    iterations: iter,
                };
            }
        }
        BlockDecode {
            info: self.extract_info(&hard),
            codeword: hard,
            converged: false,
            iterations: max_iters,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockDecode {
    pub codeword: Vec<u8>,
    pub info: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

/// Fills columns one by one. With `avoid_cycles`, a row is only eligible if it
/// shares no column with rows already chosen for the current column.
fn build_columns(
    n: usize,
    m: usize,
    dv: usize,
    dc: usize,
    rng: &mut ChaCha20Rng,
    avoid_cycles: bool,
) -> Option<Vec<Vec<usize>>> {
    let mut rows: Vec<Vec<usize>> = vec![Vec::with_capacity(dc); m];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for &col in &order {
        let mut chosen: Vec<usize> = Vec::with_capacity(dv);
        for _ in 0..dv {
            let eligible = |r: usize| {
                rows[r].len() < dc
                    && !chosen.contains(&r)
                    && (!avoid_cycles
                        || chosen
                            .iter()
                            .all(|&q| !rows[r].iter().any(|c| rows[q].contains(c))))
            };
            let min_deg = (0..m).filter(|&r| eligible(r)).map(|r| rows[r].len()).min()?;
            let pool: Vec<usize> = (0..m)
                .filter(|&r| rows[r].len() == min_deg && eligible(r))
                .collect();
            chosen.push(pool[rng.random_range(0..pool.len())]);
        }
        for &r in &chosen {
            rows[r].push(col);
        }
    }
    for r in &mut rows {
        r.sort_unstable();
    }
    Some(rows)
}

/// Gauss-Jordan over GF(2). Returns the information positions and, per
/// pivot (parity) position, the information indices whose XOR produces it.
/// `None` if H is rank deficient.
#[allow(clippy::type_complexity)]
fn systematic_form(rows: &[Vec<usize>], n: usize) -> Option<(Vec<usize>, Vec<(usize, Vec<usize>)>)> {
    let m = rows.len();
    let words = n.div_ceil(64);
    let mut mat: Vec<Vec<u64>> = rows
        .iter()
        .map(|cols| {
            let mut w = vec![0u64; words];
            for &c in cols {
                w[c / 64] |= 1 << (c % 64);
            }
            w
        })
        .collect();
    let bit = |row: &[u64], c: usize| (row[c / 64] >> (c % 64)) & 1 == 1;
    let mut pivots = Vec::with_capacity(m);
    let mut r = 0;
    // Pivot on the rightmost columns first so the info positions tend to be a
    // prefix; any choice yields a valid systematic encoder.
    for c in (0..n).rev() {
        if r == m {
            break;
        }
        let Some(p) = (r..m).find(|&i| bit(&mat[i], c)) else {
            continue;
        };
        mat.swap(r, p);
        let pivot_row = mat[r].clone();
        for (i, row) in mat.iter_mut().enumerate() {
            if i != r && bit(row, c) {
                for (a, b) in row.iter_mut().zip(&pivot_row) {
                    *a ^= b;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    if r < m {
        return None;
    }
    let is_pivot: Vec<bool> = {
        let mut v = vec![false; n];
        for &p in &pivots {
            v[p] = true;
        }
        v
    };
    let info_positions: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    let parity_eqs = pivots
        .iter()
        .enumerate()
        .map(|(row, &p)| {
            let deps = info_positions
                .iter()
                .enumerate()
                .filter(|&(_, &c)| bit(&mat[row], c))
                .map(|(i, _)| i)
                .collect();
            (p, deps)
        })
        .collect();
    Some((info_positions, parity_eqs))
}

/// Coded bits plus the number of zero bits appended to fill the last block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdpcEncoded {
    pub bits: Vec<u8>,
    pub pad: usize,
}

pub fn ldpc_encode(info_bits: &[u8], code: &LdpcCode) -> LdpcEncoded {
    let k = code.k();
    let pad = (k - info_bits.len() % k) % k;
    let mut padded = info_bits.to_vec();
    padded.resize(info_bits.len() + pad, 0);
    let bits = padded.chunks(k).flat_map(|c| code.encode_block(c)).collect();
    LdpcEncoded { bits, pad }
}

#[derive(Debug, Clone)]
pub struct LdpcDecoded {
    /// Decoded information bits of every block (padding included).
    pub bits: Vec<u8>,
    /// True iff every block converged to a valid codeword.
    pub converged: bool,
    pub failed_blocks: usize,
    pub block_converged: Vec<bool>,
}

pub fn ldpc_decode(llrs: &[f64], code: &LdpcCode, max_iters: usize) -> Result<LdpcDecoded> {
    if !llrs.len().is_multiple_of(code.n()) {
        return Err(Error::DimensionMismatch(format!(
            "{} LLRs is not a multiple of the block length {}",
            llrs.len(),
            code.n()
        )));
    }
    let mut bits = Vec::with_capacity(llrs.len() / 2);
    let mut block_converged = Vec::with_capacity(llrs.len() / code.n());
    for block in llrs.chunks(code.n()) {
        let d = code.decode_block(block, max_iters);
        bits.extend_from_slice(&d.info);
        block_converged.push(d.converged);
    }
    let failed_blocks = block_converged.iter().filter(|c| !**c).count();
    Ok(LdpcDecoded {
        bits,
        converged: failed_blocks == 0,
        failed_blocks,
        block_converged,
    })
}
