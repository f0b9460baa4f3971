//! Five deterministic benchmark tasks covering hash, signal-processing,
//! equation-solving, and compression workloads.
//!
//! Each task computes once over a fixed built-in input and then
//! self-deletes. Outputs are 64-bit digests that depend only on the input,
//! never on scheduling or kernel state, so a golden digest comparison is
//! bit-exact across runs, platforms, and worker counts. All arithmetic is
//! integer-only; the FFT uses Q14 fixed point.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::config::WorkloadConfig;
use crate::kernel::{KernelPanic, StepOutcome, TaskBody, TaskCtx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum WorkloadId {
    Sha,
    Fft,
    Cubic,
    HuffDec,
    AdpcmEnc,
}

pub const WORKLOAD_IDS: [WorkloadId; 5] = [
    WorkloadId::Sha,
    WorkloadId::Fft,
    WorkloadId::Cubic,
    WorkloadId::HuffDec,
    WorkloadId::AdpcmEnc,
];

impl WorkloadId {
    pub fn name(&self) -> &'static str {
        match self {
            WorkloadId::Sha => "SHA",
            WorkloadId::Fft => "FFT",
            WorkloadId::Cubic => "CUBIC",
            WorkloadId::HuffDec => "HUFF_DEC",
            WorkloadId::AdpcmEnc => "ADPCM_ENC",
        }
    }

    pub fn from_name(name: &str) -> Option<WorkloadId> {
        WORKLOAD_IDS.iter().copied().find(|id| id.name() == name)
    }

    /// Fixed priority assignment: SHA/FFT/CUBIC at 1, HUFF_DEC at 2,
    /// ADPCM_ENC at 3.
    pub fn priority(&self) -> u32 {
        match self {
            WorkloadId::Sha | WorkloadId::Fft | WorkloadId::Cubic => 1,
            WorkloadId::HuffDec => 2,
            WorkloadId::AdpcmEnc => 3,
        }
    }
}

/// The fixed built-in input a task computes over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkloadInput {
    Bytes(Vec<u8>),
    Complex(Vec<(i64, i64)>),
    Cubics(Vec<(i64, i64, i64)>),
    Samples(Vec<i16>),
}

#[derive(Debug, Clone)]
pub struct WorkloadSpec {
    pub id: WorkloadId,
    pub priority: u32,
    pub input: WorkloadInput,
    /// Iterations between cooperative yields.
    pub yield_stride: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkloadOutput {
    pub id: WorkloadId,
    pub digest: u64,
    pub completion_tick: u32,
}

/// FNV-1a, the digest primitive for all workload outputs.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyOutcome {
    Match,
    Mismatch(Vec<WorkloadId>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingOutput(pub Vec<WorkloadId>);

/// Bit-exact digest comparison per task against the golden reference.
pub fn verify_outputs(
    run: &BTreeMap<WorkloadId, WorkloadOutput>,
    golden: &BTreeMap<WorkloadId, (u64, u32)>,
) -> Result<VerifyOutcome, MissingOutput> {
    let missing: Vec<WorkloadId> = golden
        .keys()
        .filter(|id| !run.contains_key(id))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(MissingOutput(missing));
    }
    let mismatched: Vec<WorkloadId> = golden
        .iter()
        .filter(|(id, (digest, _))| run.get(id).map(|o| o.digest) != Some(*digest))
        .map(|(id, _)| *id)
        .collect();
    if mismatched.is_empty() {
        Ok(VerifyOutcome::Match)
    } else {
        Ok(VerifyOutcome::Mismatch(mismatched))
    }
}

/// Builds the five workload specs: fixed priority assignment, configured
/// input sizes and yield strides.
pub fn workload_specs(cfg: &WorkloadConfig) -> Vec<WorkloadSpec> {
    let fft_points = cfg.fft_points.max(4).next_power_of_two().min(FFT_POINTS as u32) as usize;
    vec![
        WorkloadSpec {
            id: WorkloadId::Sha,
            priority: WorkloadId::Sha.priority(),
            input: WorkloadInput::Bytes(sha_input(cfg.sha_input_bytes)),
            yield_stride: cfg.yield_stride_sha.max(1),
        },
        WorkloadSpec {
            id: WorkloadId::Fft,
            priority: WorkloadId::Fft.priority(),
            input: WorkloadInput::Complex(fft_input(fft_points)),
            yield_stride: cfg.yield_stride_fft.max(1),
        },
        WorkloadSpec {
            id: WorkloadId::Cubic,
            priority: WorkloadId::Cubic.priority(),
            input: WorkloadInput::Cubics(cubic_equations(cfg.cubic_equations.max(1))),
            yield_stride: cfg.yield_stride_cubic.max(1),
        },
        WorkloadSpec {
            id: WorkloadId::HuffDec,
            priority: WorkloadId::HuffDec.priority(),
            input: WorkloadInput::Bytes(huff_corpus(cfg.huff_corpus_bytes)),
            yield_stride: cfg.yield_stride_huff.max(1),
        },
        WorkloadSpec {
            id: WorkloadId::AdpcmEnc,
            priority: WorkloadId::AdpcmEnc.priority(),
            input: WorkloadInput::Samples(adpcm_input(cfg.adpcm_samples)),
            yield_stride: cfg.yield_stride_adpcm.max(1),
        },
    ]
}

/// Instantiates the body computing over the spec's input.
pub fn build_body(spec: &WorkloadSpec) -> Box<dyn TaskBody> {
    match (&spec.id, &spec.input) {
        (WorkloadId::Sha, WorkloadInput::Bytes(input)) => {
            Box::new(ShaBody::new(input.clone(), spec.yield_stride))
        }
        (WorkloadId::Fft, WorkloadInput::Complex(input)) => {
            Box::new(FftBody::new(input.clone(), spec.yield_stride))
        }
        (WorkloadId::Cubic, WorkloadInput::Cubics(eqs)) => {
            Box::new(CubicBody::new(eqs.clone(), spec.yield_stride))
        }
        (WorkloadId::HuffDec, WorkloadInput::Bytes(corpus)) => {
            Box::new(HuffBody::new(corpus.clone(), spec.yield_stride))
        }
        (WorkloadId::AdpcmEnc, WorkloadInput::Samples(input)) => {
            Box::new(AdpcmBody::new(input.clone(), spec.yield_stride))
        }
        _ => unreachable!("input kind does not fit workload {}", spec.id.name()),
    }
}

/// Shared burst bookkeeping: prologue self-checks on first burst, an
/// iteration cap at 10x the nominal burst count as a runaway guard.
struct BurstState {
    prologue_done: bool,
    bursts: u32,
    cap: u32,
    notify_tag: u32,
}

impl BurstState {
    fn new(expected_bursts: u32, notify_tag: u32) -> BurstState {
        BurstState {
            prologue_done: false,
            bursts: 0,
            cap: expected_bursts.saturating_mul(10).saturating_add(16),
            notify_tag,
        }
    }

    /// Returns true when the runaway guard tripped.
    fn enter(&mut self, ctx: &mut TaskCtx<'_>) -> Result<bool, KernelPanic> {
        self.bursts += 1;
        if self.bursts > self.cap {
            return Ok(true);
        }
        if !self.prologue_done {
            // minimal feature self-check: one mutex take/give, one
            // self-notification, one task tag write
            ctx.mutex_take()?;
            ctx.mutex_give()?;
            ctx.notify_self(self.notify_tag)?;
            let _ = ctx.consume_notification()?;
            ctx.set_task_tag()?;
            self.prologue_done = true;
        }
        Ok(false)
    }
}

// ---------------------------------------------------------------------
// SHA: SHA-256 over a fixed pseudo-random input, one 64-byte block per
// iteration.
// ---------------------------------------------------------------------

pub fn sha_input(len: u32) -> Vec<u8> {
    let mut state: u64 = 0x5eed_0bad_cafe_f00d;
    (0..len)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 56) as u8
        })
        .collect()
}

struct ShaBody {
    input: Vec<u8>,
    pos: usize,
    stride: u32,
    hasher: Sha256,
    burst: BurstState,
}

impl ShaBody {
    fn new(input: Vec<u8>, stride: u32) -> ShaBody {
        let blocks = (input.len() as u32).div_ceil(64).max(1);
        ShaBody {
            input,
            pos: 0,
            stride,
            hasher: Sha256::new(),
            burst: BurstState::new(blocks.div_ceil(stride), 0x1001),
        }
    }
}

impl TaskBody for ShaBody {
    fn step(&mut self, ctx: &mut TaskCtx<'_>) -> Result<StepOutcome, KernelPanic> {
        if self.burst.enter(ctx)? {
            return Ok(StepOutcome::Overrun);
        }
        for _ in 0..self.stride {
            if self.pos >= self.input.len() {
                break;
            }
            let end = (self.pos + 64).min(self.input.len());
            self.hasher.update(&self.input[self.pos..end]);
            self.pos = end;
        }
        if self.pos >= self.input.len() {
            let out = std::mem::take(&mut self.hasher).finalize();
            Ok(StepOutcome::Done(fnv1a64(&out)))
        } else {
            Ok(StepOutcome::Yield)
        }
    }
}

// ---------------------------------------------------------------------
// FFT: 64-point radix-2 decimation-in-time transform in Q14 fixed point.
// Iteration unit is one butterfly; all rounding is plain arithmetic
// shift, so results are bit-exact everywhere.
// ---------------------------------------------------------------------

pub const FFT_POINTS: usize = 64;
const FFT_SCALE_SHIFT: u32 = 14;

/// cos(2*pi*k/64) and sin(2*pi*k/64) in Q14, k = 0..31.
const FFT_COS: [i32; 32] = [
    16384, 16305, 16069, 15679, 15137, 14449, 13623, 12665, 11585, 10394, 9102, 7723, 6270, 4756,
    3196, 1606, 0, -1606, -3196, -4756, -6270, -7723, -9102, -10394, -11585, -12665, -13623,
    -14449, -15137, -15679, -16069, -16305,
];
const FFT_SIN: [i32; 32] = [
    0, 1606, 3196, 4756, 6270, 7723, 9102, 10394, 11585, 12665, 13623, 14449, 15137, 15679, 16069,
    16305, 16384, 16305, 16069, 15679, 15137, 14449, 13623, 12665, 11585, 10394, 9102, 7723, 6270,
    4756, 3196, 1606,
];

/// Deterministic integer waveform for the FFT task.
pub fn fft_input(points: usize) -> Vec<(i64, i64)> {
    (0..points)
        .map(|n| {
            let v = ((n as i64).wrapping_mul(2654435761) >> 12) as i16 as i64;
            (v, 0)
        })
        .collect()
}

fn bit_reverse(mut x: usize, bits: u32) -> usize {
    let mut r = 0;
    for _ in 0..bits {
        r = (r << 1) | (x & 1);
        x >>= 1;
    }
    r
}

/// In-place iterative radix-2 FFT over Q14 complex samples. Supports any
/// power-of-two length up to 64 (the twiddle table resolution).
pub fn fft_fixed(data: &mut [(i64, i64)]) {
    let n = data.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = bit_reverse(i, bits);
        if j > i {
            data.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = FFT_POINTS / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let idx = k * step;
                let (wr, wi) = (FFT_COS[idx] as i64, -(FFT_SIN[idx] as i64));
                let (ar, ai) = data[start + k];
                let (br, bi) = data[start + k + half];
                let tr = (br * wr - bi * wi) >> FFT_SCALE_SHIFT;
                let ti = (br * wi + bi * wr) >> FFT_SCALE_SHIFT;
                data[start + k] = (ar + tr, ai + ti);
                data[start + k + half] = (ar - tr, ai - ti);
            }
        }
        len *= 2;
    }
}

struct FftBody {
    data: Vec<(i64, i64)>,
    // butterfly cursor: (len, start, k)
    len: usize,
    start: usize,
    k: usize,
    reversed: bool,
    stride: u32,
    burst: BurstState,
}

impl FftBody {
    fn new(data: Vec<(i64, i64)>, stride: u32) -> FftBody {
        let n = data.len() as u32;
        let butterflies = (n / 2) * n.trailing_zeros();
        FftBody {
            data,
            len: 2,
            start: 0,
            k: 0,
            reversed: false,
            stride,
            burst: BurstState::new(butterflies.div_ceil(stride), 0x1002),
        }
    }

    fn one_butterfly(&mut self) -> bool {
        let n = self.data.len();
        if self.len > n {
            return true;
        }
        let half = self.len / 2;
        let step = FFT_POINTS / self.len;
        let idx = self.k * step;
        let (wr, wi) = (FFT_COS[idx] as i64, -(FFT_SIN[idx] as i64));
        let (ar, ai) = self.data[self.start + self.k];
        let (br, bi) = self.data[self.start + self.k + half];
        let tr = (br * wr - bi * wi) >> FFT_SCALE_SHIFT;
        let ti = (br * wi + bi * wr) >> FFT_SCALE_SHIFT;
        self.data[self.start + self.k] = (ar + tr, ai + ti);
        self.data[self.start + self.k + half] = (ar - tr, ai - ti);

        self.k += 1;
        if self.k == half {
            self.k = 0;
            self.start += self.len;
            if self.start >= n {
                self.start = 0;
                self.len *= 2;
            }
        }
        self.len > n
    }
}

impl TaskBody for FftBody {
    fn step(&mut self, ctx: &mut TaskCtx<'_>) -> Result<StepOutcome, KernelPanic> {
        if self.burst.enter(ctx)? {
            return Ok(StepOutcome::Overrun);
        }
        if !self.reversed {
            let n = self.data.len();
            let bits = n.trailing_zeros();
            for i in 0..n {
                let j = bit_reverse(i, bits);
                if j > i {
                    self.data.swap(i, j);
                }
            }
            self.reversed = true;
        }
        let mut finished = self.len > self.data.len();
        for _ in 0..self.stride {
            if finished {
                break;
            }
            finished = self.one_butterfly();
        }
        if finished {
            let mut bytes = Vec::with_capacity(self.data.len() * 16);
            for (re, im) in &self.data {
                bytes.extend_from_slice(&re.to_le_bytes());
                bytes.extend_from_slice(&im.to_le_bytes());
            }
            Ok(StepOutcome::Done(fnv1a64(&bytes)))
        } else {
            Ok(StepOutcome::Yield)
        }
    }
}

// ---------------------------------------------------------------------
// CUBIC: integer bisection root solver over a fixed set of cubics with
// integer roots, Q16 fixed-point results. Iteration unit is one equation.
// ---------------------------------------------------------------------

pub const CUBIC_FRACTION_BITS: u32 = 16;

/// Coefficients (p, q, r) of x^3 + p x^2 + q x + r for `count` equations
/// with small integer roots. Equation 0 is x^3 - 6x^2 + 11x - 6.
pub fn cubic_equations(count: u32) -> Vec<(i64, i64, i64)> {
    (0..count as i64)
        .map(|k| {
            let (a, b, c) = if k == 0 {
                (1, 2, 3)
            } else {
                let a = k % 5 + 1;
                let b = a + (k * 3) % 7 + 1;
                let c = b + (k * 5) % 11 + 1;
                (a, b, c)
            };
            // (x-a)(x-b)(x-c)
            (-(a + b + c), a * b + a * c + b * c, -(a * b * c))
        })
        .collect()
}

fn cubic_eval(p: i64, q: i64, r: i64, x_q16: i64) -> i128 {
    let x = x_q16 as i128;
    let scale = 1i128 << CUBIC_FRACTION_BITS;
    x * x * x + (p as i128) * x * x * scale + (q as i128) * x * scale * scale
        + (r as i128) * scale * scale * scale
}

/// Returns the three real roots in Q16, ascending. Roots of the generated
/// equations are exact integers, so bisection lands on them exactly.
pub fn solve_cubic(p: i64, q: i64, r: i64) -> [i64; 3] {
    let mut roots = Vec::with_capacity(3);
    let scale = 1i64 << CUBIC_FRACTION_BITS;
    let mut prev_x = -2 * scale;
    let mut prev_f = cubic_eval(p, q, r, prev_x);
    let mut x = prev_x;
    while roots.len() < 3 && x < 64 * scale {
        x += scale;
        let f = cubic_eval(p, q, r, x);
        if f == 0 {
            roots.push(x);
        } else if prev_f.signum() * f.signum() < 0 {
            // bisect [prev_x, x]
            let (mut lo, mut hi, mut flo) = (prev_x, x, prev_f);
            for _ in 0..CUBIC_FRACTION_BITS + 2 {
                let mid = (lo + hi) / 2;
                let fm = cubic_eval(p, q, r, mid);
                if fm == 0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if flo.signum() * fm.signum() < 0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            roots.push((lo + hi) / 2);
        }
        if prev_f == 0 {
            // already recorded when f hit zero exactly
        }
        prev_x = x;
        prev_f = f;
    }
    while roots.len() < 3 {
        roots.push(0);
    }
    [roots[0], roots[1], roots[2]]
}

struct CubicBody {
    equations: Vec<(i64, i64, i64)>,
    next: usize,
    out: Vec<u8>,
    stride: u32,
    burst: BurstState,
}

impl CubicBody {
    fn new(equations: Vec<(i64, i64, i64)>, stride: u32) -> CubicBody {
        let count = equations.len().max(1) as u32;
        CubicBody {
            equations,
            next: 0,
            out: Vec::new(),
            stride,
            burst: BurstState::new(count.div_ceil(stride), 0x1003),
        }
    }
}

impl TaskBody for CubicBody {
    fn step(&mut self, ctx: &mut TaskCtx<'_>) -> Result<StepOutcome, KernelPanic> {
        if self.burst.enter(ctx)? {
            return Ok(StepOutcome::Overrun);
        }
        for _ in 0..self.stride {
            if self.next >= self.equations.len() {
                break;
            }
            let (p, q, r) = self.equations[self.next];
            for root in solve_cubic(p, q, r) {
                self.out.extend_from_slice(&root.to_le_bytes());
            }
            self.next += 1;
        }
        if self.next >= self.equations.len() {
            Ok(StepOutcome::Done(fnv1a64(&self.out)))
        } else {
            Ok(StepOutcome::Yield)
        }
    }
}

// ---------------------------------------------------------------------
// HUFF_DEC: canonical Huffman decode of a fixed corpus encoded at task
// setup. Iteration unit is one decoded symbol.
// ---------------------------------------------------------------------

pub fn huff_corpus(len: u32) -> Vec<u8> {
    const PHRASE: &[u8] =
        b"sphinx of black quartz judge my vow 0123456789; pack my box with five dozen liquor jugs. ";
    (0..len as usize).map(|i| PHRASE[i % PHRASE.len()]).collect()
}

/// Code table: symbol -> (bit length, code). Canonical, deterministic.
pub fn huff_build(corpus: &[u8]) -> Vec<(u8, u32, u32)> {
    let mut freq = [0u64; 256];
    for b in corpus {
        freq[*b as usize] += 1;
    }
    // package-merge-free tree build with deterministic tie-breaking
    #[derive(Clone)]
    struct Node {
        weight: u64,
        order: u32,
        symbols: Vec<u8>,
        depth_bump: Vec<(u8, u32)>,
    }
    let mut nodes: Vec<Node> = freq
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > 0)
        .map(|(s, f)| Node {
            weight: *f,
            order: s as u32,
            symbols: vec![s as u8],
            depth_bump: vec![(s as u8, 0)],
        })
        .collect();
    if nodes.len() == 1 {
        let s = nodes[0].symbols[0];
        return vec![(s, 1, 0)];
    }
    let mut next_order = 256u32;
    while nodes.len() > 1 {
        nodes.sort_by_key(|n| (n.weight, n.order));
        let a = nodes.remove(0);
        let b = nodes.remove(0);
        let mut merged = Node {
            weight: a.weight + b.weight,
            order: next_order,
            symbols: Vec::new(),
            depth_bump: Vec::new(),
        };
        next_order += 1;
        for part in [a, b] {
            merged.symbols.extend_from_slice(&part.symbols);
            for (s, d) in part.depth_bump {
                merged.depth_bump.push((s, d + 1));
            }
        }
        nodes.push(merged);
    }
    let mut lengths: Vec<(u8, u32)> = nodes.remove(0).depth_bump;
    // canonical assignment: sort by (length, symbol)
    lengths.sort_by_key(|(s, d)| (*d, *s));
    let mut out = Vec::with_capacity(lengths.len());
    let mut code = 0u32;
    let mut prev_len = 0u32;
    for (s, len) in lengths {
        code <<= len - prev_len;
        out.push((s, len, code));
        code += 1;
        prev_len = len;
    }
    out
}

pub fn huff_encode(corpus: &[u8], table: &[(u8, u32, u32)]) -> (Vec<u8>, usize) {
    let mut by_symbol = [(0u32, 0u32); 256];
    for (s, len, code) in table {
        by_symbol[*s as usize] = (*len, *code);
    }
    let mut bits = Vec::new();
    let mut acc = 0u8;
    let mut nbits = 0u32;
    let mut total = 0usize;
    for b in corpus {
        let (len, code) = by_symbol[*b as usize];
        for i in (0..len).rev() {
            acc = (acc << 1) | (((code >> i) & 1) as u8);
            nbits += 1;
            total += 1;
            if nbits == 8 {
                bits.push(acc);
                acc = 0;
                nbits = 0;
            }
        }
    }
    if nbits > 0 {
        bits.push(acc << (8 - nbits));
    }
    (bits, total)
}

/// Bit-serial canonical decoder state.
pub struct HuffDecoder {
    // (length, code) -> symbol
    table: BTreeMap<(u32, u32), u8>,
    bits: Vec<u8>,
    total_bits: usize,
    bit_pos: usize,
}

impl HuffDecoder {
    pub fn new(table: &[(u8, u32, u32)], bits: Vec<u8>, total_bits: usize) -> HuffDecoder {
        HuffDecoder {
            table: table.iter().map(|(s, l, c)| ((*l, *c), *s)).collect(),
            bits,
            total_bits,
            bit_pos: 0,
        }
    }

    pub fn next_symbol(&mut self) -> Option<u8> {
        let mut len = 0u32;
        let mut code = 0u32;
        while self.bit_pos < self.total_bits && len < 32 {
            let byte = self.bits[self.bit_pos / 8];
            let bit = (byte >> (7 - (self.bit_pos % 8))) & 1;
            self.bit_pos += 1;
            code = (code << 1) | bit as u32;
            len += 1;
            if let Some(s) = self.table.get(&(len, code)) {
                return Some(*s);
            }
        }
        None
    }
}

pub fn huff_decode_all(
    table: &[(u8, u32, u32)],
    bits: Vec<u8>,
    total_bits: usize,
    count: usize,
) -> Vec<u8> {
    let mut dec = HuffDecoder::new(table, bits, total_bits);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        match dec.next_symbol() {
            Some(s) => out.push(s),
            None => break,
        }
    }
    out
}

struct HuffBody {
    decoder: HuffDecoder,
    expected: usize,
    decoded: Vec<u8>,
    stride: u32,
    burst: BurstState,
}

impl HuffBody {
    fn new(corpus: Vec<u8>, stride: u32) -> HuffBody {
        let table = huff_build(&corpus);
        let (bits, total_bits) = huff_encode(&corpus, &table);
        HuffBody {
            decoder: HuffDecoder::new(&table, bits, total_bits),
            expected: corpus.len(),
            decoded: Vec::with_capacity(corpus.len()),
            stride,
            burst: BurstState::new((corpus.len().max(1) as u32).div_ceil(stride), 0x1004),
        }
    }
}

impl TaskBody for HuffBody {
    fn step(&mut self, ctx: &mut TaskCtx<'_>) -> Result<StepOutcome, KernelPanic> {
        if self.burst.enter(ctx)? {
            return Ok(StepOutcome::Overrun);
        }
        for _ in 0..self.stride {
            if self.decoded.len() >= self.expected {
                break;
            }
            match self.decoder.next_symbol() {
                Some(s) => self.decoded.push(s),
                None => break,
            }
        }
        if self.decoded.len() >= self.expected {
            Ok(StepOutcome::Done(fnv1a64(&self.decoded)))
        } else {
            Ok(StepOutcome::Yield)
        }
    }
}

// ---------------------------------------------------------------------
// ADPCM_ENC: IMA ADPCM encoder over a fixed integer waveform, one sample
// per iteration.
// ---------------------------------------------------------------------

const IMA_INDEX_TABLE: [i32; 16] = [-1, -1, -1, -1, 2, 4, 6, 8, -1, -1, -1, -1, 2, 4, 6, 8];
const IMA_STEP_TABLE: [i32; 89] = [
    7, 8, 9, 10, 11, 12, 13, 14, 16, 17, 19, 21, 23, 25, 28, 31, 34, 37, 41, 45, 50, 55, 60, 66,
    73, 80, 88, 97, 107, 118, 130, 143, 157, 173, 190, 209, 230, 253, 279, 307, 337, 371, 408,
    449, 494, 544, 598, 658, 724, 796, 876, 963, 1060, 1166, 1282, 1411, 1552, 1707, 1878, 2066,
    2272, 2499, 2749, 3024, 3327, 3660, 4026, 4428, 4871, 5358, 5894, 6484, 7132, 7845, 8630,
    9493, 10442, 11487, 12635, 13899, 15289, 16818, 18500, 20350, 22385, 24623, 27086, 29794,
    32767,
];

pub fn adpcm_input(len: u32) -> Vec<i16> {
    (0..len as i64)
        .map(|n| {
            let tri = ((n % 128) - 64) * 400;
            let jitter = (n * n) % 97 - 48;
            (tri + jitter).clamp(-32768, 32767) as i16
        })
        .collect()
}

#[derive(Default)]
pub struct AdpcmEncoder {
    predicted: i32,
    index: i32,
}


impl AdpcmEncoder {
    pub fn encode_sample(&mut self, sample: i16) -> u8 {
        let step = IMA_STEP_TABLE[self.index as usize];
        let mut diff = sample as i32 - self.predicted;
        let mut nibble = 0u8;
        if diff < 0 {
            nibble = 8;
            diff = -diff;
        }
        let mut delta = step >> 3;
        if diff >= step {
            nibble |= 4;
            diff -= step;
            delta += step;
        }
        if diff >= step >> 1 {
            nibble |= 2;
            diff -= step >> 1;
            delta += step >> 1;
        }
        if diff >= step >> 2 {
            nibble |= 1;
            delta += step >> 2;
        }
        if nibble & 8 != 0 {
            self.predicted -= delta;
        } else {
            self.predicted += delta;
        }
        self.predicted = self.predicted.clamp(-32768, 32767);
        self.index = (self.index + IMA_INDEX_TABLE[nibble as usize]).clamp(0, 88);
        nibble
    }
}

struct AdpcmBody {
    input: Vec<i16>,
    pos: usize,
    encoder: AdpcmEncoder,
    nibbles: Vec<u8>,
    stride: u32,
    burst: BurstState,
}

impl AdpcmBody {
    fn new(input: Vec<i16>, stride: u32) -> AdpcmBody {
        let samples = input.len().max(1) as u32;
        AdpcmBody {
            nibbles: Vec::with_capacity(input.len()),
            input,
            pos: 0,
            encoder: AdpcmEncoder::default(),
            stride,
            burst: BurstState::new(samples.div_ceil(stride), 0x1005),
        }
    }
}

impl TaskBody for AdpcmBody {
    fn step(&mut self, ctx: &mut TaskCtx<'_>) -> Result<StepOutcome, KernelPanic> {
        if self.burst.enter(ctx)? {
            return Ok(StepOutcome::Overrun);
        }
        for _ in 0..self.stride {
            if self.pos >= self.input.len() {
                break;
            }
            let nib = self.encoder.encode_sample(self.input[self.pos]);
            self.nibbles.push(nib);
            self.pos += 1;
        }
        if self.pos >= self.input.len() {
            Ok(StepOutcome::Done(fnv1a64(&self.nibbles)))
        } else {
            Ok(StepOutcome::Yield)
        }
    }
}
