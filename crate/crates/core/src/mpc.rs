//! Shared-value operations: the online phase both servers execute in
//! lockstep.
//!
//! Every operation here runs inside a [`Session`]: a single-threaded,
//! strictly sequential protocol endpoint that owns its transport and its
//! triple pools. A monotone step counter is embedded in every frame; any
//! disagreement aborts both endpoints instead of silently misaligning the
//! Beaver bookkeeping.
//!
//! Secure comparison deviates from the garbled-circuit construction of the
//! original protocol stack: sign extraction opens `x + ρ` for a dealer-held
//! uniform `ρ`, subtracts `ρ`'s xor-shared bits with a ripple-borrow
//! circuit (one binary Beaver AND per bit), and converts the resulting
//! sign bit back to an arithmetic sharing through a daBit. This keeps a
//! single sharing backend while preserving the functionality and the
//! semi-honest security model.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::fixedpoint::RingMatrix;
use crate::sharing::{mask_to_width, Party, Share, TripleSet};
use crate::transport::{ChannelTransport, Frame, Tag, Transport, TransportStats};

/// Abort code sent when decision verification stops at a model mismatch.
pub const ABORT_MODEL_MISMATCH: u64 = 100;

/// Why a value was opened; the transcript auditor checks that nothing
/// outside this taxonomy ever leaves the sharing domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenKind {
    /// Public handshake words (configuration agreement).
    SyncConfig,
    /// Beaver `e`/`f` values, masked by uniform triple components.
    BeaverMask,
    /// `x + ρ` or a daBit-masked bit inside secure comparison.
    ComparisonMask,
    /// Odd-masked differences of an equality test.
    EqualityProduct,
    /// The aggregate fairness verdict (violation count, decision bit).
    Verdict,
    /// The trained model, revealed to the modeler at protocol end.
    ModelOutput,
    /// Full opening performed by the deterministic-truncation test hook.
    TruncHook,
}

/// One opening event. `values` is empty on the side that only sent its
/// share (one-directional reveals).
#[derive(Debug, Clone)]
pub struct OpenRecord {
    pub step: u64,
    pub kind: OpenKind,
    pub values: Vec<u64>,
}

/// Checks a session's opening log against the protocol's leakage budget.
///
/// `allowed` is the set of kinds the protocol is supposed to open;
/// `forbidden` holds raw values (e.g. encoded sensitive columns) that must
/// not appear as a contiguous run in any opened payload.
pub fn audit_transcript(
    log: &[OpenRecord],
    allowed: &[OpenKind],
    forbidden: &[Vec<u64>],
) -> std::result::Result<(), String> {
    for rec in log {
        if !allowed.contains(&rec.kind) {
            return Err(format!("step {}: unexpected opening {:?}", rec.step, rec.kind));
        }
        for needle in forbidden {
            if needle.is_empty() || needle.len() > rec.values.len() {
                continue;
            }
            if rec
                .values
                .windows(needle.len())
                .any(|w| w == needle.as_slice())
            {
                return Err(format!(
                    "step {}: opened payload contains a forbidden value run ({:?})",
                    rec.step, rec.kind
                ));
            }
        }
    }
    Ok(())
}

/// One party's protocol endpoint.
pub struct Session<T: Transport> {
    party: Party,
    transport: T,
    pub triples: TripleSet,
    frac_bits: u32,
    ring_bits: u32,
    step: u64,
    trunc_hook: bool,
    open_log: Vec<OpenRecord>,
    mask_rng: ChaCha20Rng,
}

impl<T: Transport> Session<T> {
    /// `mask_seed` drives this party's input-sharing masks; it must stay
    /// private to the party but fixing it makes a run replayable.
    pub fn new(party: Party, transport: T, triples: TripleSet, frac_bits: u32, mask_seed: u64) -> Self {
        let ring_bits = triples.ring_bits;
        Session {
            party,
            transport,
            triples,
            frac_bits,
            ring_bits,
            step: 0,
            trunc_hook: false,
            open_log: Vec::new(),
            mask_rng: ChaCha20Rng::seed_from_u64(mask_seed),
        }
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn ring_bits(&self) -> u32 {
        self.ring_bits
    }

    /// Test hook: make truncation deterministic by opening the value and
    /// re-sharing its exact shift. Costs one opening per truncation and
    /// voids privacy; only meaningful for validating against the
    /// single-process fixed-point reference.
    pub fn set_deterministic_trunc(&mut self, on: bool) {
        self.trunc_hook = on;
    }

    pub fn open_log(&self) -> &[OpenRecord] {
        &self.open_log
    }

    pub fn transport_stats(&self) -> &TransportStats {
        self.transport.stats()
    }

    pub fn enable_capture(&mut self) {
        self.transport.enable_capture();
    }

    pub fn captured(&self) -> Option<&[u8]> {
        self.transport.captured()
    }

    fn next_step(&mut self) -> u64 {
        let s = self.step;
        self.step += 1;
        s
    }

    fn log(&mut self, step: u64, kind: OpenKind, values: Vec<u64>) {
        self.open_log.push(OpenRecord { step, kind, values });
    }

    /// Symmetric send-then-receive of one frame at the current step.
    fn exchange(&mut self, tag: Tag, payload: Vec<u64>) -> Result<Vec<u64>> {
        let step = self.next_step();
        self.transport.send(&Frame::new(tag, step, payload))?;
        let theirs = self.transport.recv()?;
        self.check_frame(&theirs, tag, step)?;
        Ok(theirs.payload)
    }

    fn check_frame(&self, frame: &Frame, tag: Tag, step: u64) -> Result<()> {
        if frame.tag == Tag::Abort {
            return Err(Error::Abort(frame.payload.first().copied().unwrap_or(0)));
        }
        if frame.tag != tag {
            return Err(Error::BadTag {
                expected: tag.name(),
                got: frame.tag as u8,
            });
        }
        if frame.step != step {
            return Err(Error::PeerDesync {
                local: step,
                peer: frame.step,
            });
        }
        Ok(())
    }

    /// One-directional frame toward the peer (the step still advances on
    /// both sides; the peer calls [`Session::recv_from_peer`]).
    pub fn send_to_peer(&mut self, tag: Tag, payload: Vec<u64>) -> Result<()> {
        let step = self.next_step();
        self.transport.send(&Frame::new(tag, step, payload))
    }

    pub fn recv_from_peer(&mut self, tag: Tag) -> Result<Vec<u64>> {
        let step = self.next_step();
        let theirs = self.transport.recv()?;
        self.check_frame(&theirs, tag, step)?;
        Ok(theirs.payload)
    }

    /// Sends an abort code; the peer's next receive fails with
    /// [`Error::Abort`].
    pub fn send_abort(&mut self, code: u64) -> Result<()> {
        let step = self.next_step();
        self.transport.send(&Frame::new(Tag::Abort, step, vec![code]))
    }

    /// Exchanges public configuration words and fails unless they agree.
    pub fn sync_config(&mut self, words: &[u64]) -> Result<()> {
        let step = self.step;
        let theirs = self.exchange(Tag::Sync, words.to_vec())?;
        if theirs != words {
            return Err(Error::ConfigMismatch(format!(
                "local {words:?} vs peer {theirs:?}"
            )));
        }
        self.log(step, OpenKind::SyncConfig, theirs);
        Ok(())
    }

    /// Opens a shared matrix to both parties.
    pub fn open(&mut self, x: &Share, kind: OpenKind) -> Result<RingMatrix> {
        let step = self.step;
        let theirs = self.exchange(Tag::Open, x.values.data().to_vec())?;
        if theirs.len() != x.values.data().len() {
            return Err(Error::ShapeMismatch {
                context: "open",
                lhs: x.shape(),
                rhs: (theirs.len(), 1),
            });
        }
        let bits = self.ring_bits;
        let data: Vec<u64> = x
            .values
            .data()
            .iter()
            .zip(&theirs)
            .map(|(&a, &b)| mask_to_width(a.wrapping_add(b), bits))
            .collect();
        self.log(step, kind, data.clone());
        Ok(RingMatrix::from_vec(x.values.rows(), x.values.cols(), data))
    }

    /// Opens xor-shared lane words to both parties.
    fn open_xor(&mut self, words: &[u64], kind: OpenKind) -> Result<Vec<u64>> {
        let step = self.step;
        let theirs = self.exchange(Tag::Open, words.to_vec())?;
        let out: Vec<u64> = words.iter().zip(&theirs).map(|(&a, &b)| a ^ b).collect();
        self.log(step, kind, out.clone());
        Ok(out)
    }

    /// Reveals a shared value to `target` only. Returns the value on the
    /// target side and `None` on the sending side.
    pub fn reveal_to(&mut self, target: Party, x: &Share, kind: OpenKind) -> Result<Option<RingMatrix>> {
        if self.party == target {
            let step = self.step;
            let theirs = self.recv_from_peer(Tag::Result)?;
            if theirs.len() != x.values.data().len() {
                return Err(Error::ShapeMismatch {
                    context: "reveal_to",
                    lhs: x.shape(),
                    rhs: (theirs.len(), 1),
                });
            }
            let bits = self.ring_bits;
            let data: Vec<u64> = x
                .values
                .data()
                .iter()
                .zip(&theirs)
                .map(|(&a, &b)| mask_to_width(a.wrapping_add(b), bits))
                .collect();
            self.log(step, kind, data.clone());
            Ok(Some(RingMatrix::from_vec(
                x.values.rows(),
                x.values.cols(),
                data,
            )))
        } else {
            let step = self.step;
            self.send_to_peer(Tag::Result, x.values.data().to_vec())?;
            self.log(step, kind, Vec::new());
            Ok(None)
        }
    }

    /// Feeds a private input into the computation: the holder keeps
    /// `value - mask` and sends the uniform mask to the peer.
    pub fn input_share(&mut self, value: Option<&RingMatrix>, rows: usize, cols: usize) -> Result<Share> {
        let bits = self.ring_bits;
        match value {
            Some(v) => {
                assert_eq!(v.shape(), (rows, cols), "input shape disagrees");
                let mut mask = Vec::with_capacity(rows * cols);
                let mut keep = Vec::with_capacity(rows * cols);
                for &x in v.data() {
                    let r = mask_to_width(rand::RngCore::next_u64(&mut self.mask_rng), bits);
                    mask.push(r);
                    keep.push(mask_to_width(x.wrapping_sub(r), bits));
                }
                self.send_to_peer(Tag::ShareIn, mask)?;
                Ok(Share::new(self.party, RingMatrix::from_vec(rows, cols, keep)))
            }
            None => {
                let payload = self.recv_from_peer(Tag::ShareIn)?;
                if payload.len() != rows * cols {
                    return Err(Error::ShapeMismatch {
                        context: "input_share",
                        lhs: (rows, cols),
                        rhs: (payload.len(), 1),
                    });
                }
                Ok(Share::new(self.party, RingMatrix::from_vec(rows, cols, payload)))
            }
        }
    }

    /// Shares a value one party holds in the clear: the holder's share is
    /// the value itself, the peer's is zero. No communication.
    pub fn trivial_share(&self, value: Option<&RingMatrix>, rows: usize, cols: usize) -> Share {
        match value {
            Some(v) => {
                assert_eq!(v.shape(), (rows, cols));
                Share::new(self.party, v.clone())
            }
            None => Share::new(self.party, RingMatrix::zeros(rows, cols)),
        }
    }

    /// Adds a public constant to every entry (one party applies it).
    pub fn add_public(&self, x: &Share, c: u64) -> Share {
        if self.party == Party::Modeler {
            let data = x
                .values
                .data()
                .iter()
                .map(|&v| mask_to_width(v.wrapping_add(c), self.ring_bits))
                .collect();
            Share::new(x.party, RingMatrix::from_vec(x.values.rows(), x.values.cols(), data))
        } else {
            x.clone()
        }
    }

    /// Computes `c - x` for a public constant `c`.
    pub fn public_minus(&self, c: u64, x: &Share) -> Share {
        let neg = Share::new(x.party, x.values.neg());
        self.add_public(&neg, c)
    }

    /// Re-randomizes a sharing by adding a dealer-provided zero sharing;
    /// local, but consumes one zero share per element on both sides.
    pub fn re_randomize(&mut self, x: &Share) -> Result<Share> {
        let n = x.values.data().len();
        let zeros = self.triples.take_zero_shares(n)?;
        let data = x
            .values
            .data()
            .iter()
            .zip(&zeros)
            .map(|(&v, &z)| mask_to_width(v.wrapping_add(z), self.ring_bits))
            .collect();
        Ok(Share::new(
            x.party,
            RingMatrix::from_vec(x.values.rows(), x.values.cols(), data),
        ))
    }

    /// Beaver matrix multiplication: exact ring product of two sharings.
    pub fn mul(&mut self, x: &Share, y: &Share) -> Result<Share> {
        let (m, k) = x.shape();
        let (k2, l) = y.shape();
        if k != k2 {
            return Err(Error::ShapeMismatch {
                context: "mul",
                lhs: x.shape(),
                rhs: y.shape(),
            });
        }
        let t = self.triples.take_matmul(m, k, l)?;
        let e_share = x.values.sub(&t.a);
        let f_share = y.values.sub(&t.b);
        let mut payload = e_share.data().to_vec();
        payload.extend_from_slice(f_share.data());
        let step = self.step;
        let theirs = self.exchange(Tag::Open, payload)?;
        if theirs.len() != m * k + k * l {
            return Err(Error::ShapeMismatch {
                context: "mul open",
                lhs: (m * k + k * l, 1),
                rhs: (theirs.len(), 1),
            });
        }
        let bits = self.ring_bits;
        let e_pub: Vec<u64> = e_share
            .data()
            .iter()
            .zip(&theirs[..m * k])
            .map(|(&a, &b)| mask_to_width(a.wrapping_add(b), bits))
            .collect();
        let f_pub: Vec<u64> = f_share
            .data()
            .iter()
            .zip(&theirs[m * k..])
            .map(|(&a, &b)| mask_to_width(a.wrapping_add(b), bits))
            .collect();
        let mut opened = e_pub.clone();
        opened.extend_from_slice(&f_pub);
        self.log(step, OpenKind::BeaverMask, opened);
        let e = RingMatrix::from_vec(m, k, e_pub);
        let f = RingMatrix::from_vec(k, l, f_pub);
        // z_i = [party 1]·E·F + E·b_i + a_i·F + c_i
        let mut z = e.matmul(&t.b).add(&t.a.matmul(&f)).add(&t.c);
        if self.party == Party::Modeler {
            z = z.add(&e.matmul(&f));
        }
        Ok(Share::new(self.party, mask_matrix_width(&z, bits)))
    }

    /// Beaver elementwise multiplication.
    pub fn mul_hadamard(&mut self, x: &Share, y: &Share) -> Result<Share> {
        if x.shape() != y.shape() {
            return Err(Error::ShapeMismatch {
                context: "mul_hadamard",
                lhs: x.shape(),
                rhs: y.shape(),
            });
        }
        let (rows, cols) = x.shape();
        let t = self.triples.take_hadamard(rows, cols)?;
        let e_share = x.values.sub(&t.a);
        let f_share = y.values.sub(&t.b);
        let mut payload = e_share.data().to_vec();
        payload.extend_from_slice(f_share.data());
        let step = self.step;
        let theirs = self.exchange(Tag::Open, payload)?;
        let n = rows * cols;
        if theirs.len() != 2 * n {
            return Err(Error::ShapeMismatch {
                context: "mul_hadamard open",
                lhs: (2 * n, 1),
                rhs: (theirs.len(), 1),
            });
        }
        let bits = self.ring_bits;
        let e_pub: Vec<u64> = e_share
            .data()
            .iter()
            .zip(&theirs[..n])
            .map(|(&a, &b)| mask_to_width(a.wrapping_add(b), bits))
            .collect();
        let f_pub: Vec<u64> = f_share
            .data()
            .iter()
            .zip(&theirs[n..])
            .map(|(&a, &b)| mask_to_width(a.wrapping_add(b), bits))
            .collect();
        let mut opened = e_pub.clone();
        opened.extend_from_slice(&f_pub);
        self.log(step, OpenKind::BeaverMask, opened);
        let e = RingMatrix::from_vec(rows, cols, e_pub);
        let f = RingMatrix::from_vec(rows, cols, f_pub);
        let mut z = e.hadamard(&t.b).add(&t.a.hadamard(&f)).add(&t.c);
        if self.party == Party::Modeler {
            z = z.add(&e.hadamard(&f));
        }
        Ok(Share::new(self.party, mask_matrix_width(&z, bits)))
    }

    /// Local truncation: each party arithmetic-shifts its own share.
    ///
    /// The reconstructed value equals the exact shift up to ±1 ulp except
    /// with probability `2^(l+1-64)` for plaintexts bounded by `2^l`. With
    /// the deterministic hook the value is opened and the exact shift is
    /// re-shared instead.
    pub fn trunc_shares(&mut self, z: &Share, bits: u32) -> Result<Share> {
        assert_eq!(self.ring_bits, 64, "share truncation assumes the full ring");
        if self.trunc_hook {
            let value = self.open(z, OpenKind::TruncHook)?;
            let exact = value.trunc(bits);
            let values = if self.party == Party::Modeler {
                exact
            } else {
                RingMatrix::zeros(z.values.rows(), z.values.cols())
            };
            return Ok(Share::new(self.party, values));
        }
        Ok(Share::new(self.party, z.values.trunc(bits)))
    }

    /// `(1/n)·Zc·X` via block products, each normalized by the block size
    /// before summation, then a final division by `n/b`; every division is
    /// a truncation by a power of two.
    pub fn blocked_mult_shift_avg(&mut self, zc: &Share, x: &Share, block: usize) -> Result<Share> {
        let (p, n) = zc.shape();
        let (n2, d) = x.shape();
        if n != n2 {
            return Err(Error::ShapeMismatch {
                context: "blocked_mult_shift_avg",
                lhs: zc.shape(),
                rhs: x.shape(),
            });
        }
        if block == 0
            || !block.is_power_of_two()
            || n % block != 0
            || !(n / block).is_power_of_two()
        {
            return Err(Error::BadBlockSize { block, n });
        }
        let blocks = n / block;
        let block_log2 = block.trailing_zeros();
        let mut acc = Share::new(self.party, RingMatrix::zeros(p, d));
        for bi in 0..blocks {
            let lo = bi * block;
            let hi = lo + block;
            let zc_block = Share::new(self.party, zc.values.slice_cols(lo, hi));
            let x_block = Share::new(self.party, x.values.slice_rows(lo, hi));
            let prod = self.mul(&zc_block, &x_block)?;
            // divide by b and drop the product's extra fractional scale
            let normalized = self.trunc_shares(&prod, self.frac_bits + block_log2)?;
            acc = Share::new(self.party, acc.values.add(&normalized.values));
        }
        if blocks > 1 {
            acc = self.trunc_shares(&acc, blocks.trailing_zeros())?;
        }
        Ok(acc)
    }

    /// Extracts the two's-complement sign bit of every entry as an
    /// arithmetic sharing of 0/1 (1 iff the plaintext is negative; zero is
    /// non-negative).
    ///
    /// Per element this consumes one conversion tuple; per 64-element lane
    /// group it consumes `ring_bits - 1` AND words for the borrow ripple.
    pub fn secure_msb(&mut self, x: &Share) -> Result<Share> {
        let (rows, cols) = x.shape();
        let k = rows * cols;
        let w = self.ring_bits;
        let bits = self.ring_bits;
        let conv = self.triples.take_conversions(k)?;

        // open x + rho (uniformly masked, safe to publish)
        let masked: Vec<u64> = x
            .values
            .data()
            .iter()
            .zip(&conv)
            .map(|(&v, t)| mask_to_width(v.wrapping_add(t.rho), bits))
            .collect();
        let m_pub = self.open(
            &Share::new(self.party, RingMatrix::from_vec(rows, cols, masked)),
            OpenKind::ComparisonMask,
        )?;
        let m_pub = m_pub.data();

        // lane-pack elements 64 to a word
        let groups = k.div_ceil(64);
        let lane = |i: usize| (i / 64, i % 64);
        let mut rho_lane = vec![vec![0u64; groups]; w as usize];
        let mut m_lane = vec![vec![0u64; groups]; w as usize];
        for i in 0..k {
            let (g, l) = lane(i);
            for j in 0..w {
                rho_lane[j as usize][g] |= ((conv[i].rho_bits >> j) & 1) << l;
                m_lane[j as usize][g] |= ((m_pub[i] >> j) & 1) << l;
            }
        }

        // x = m - rho: ripple the borrow up to the sign bit.
        // b_{j+1} = rho_j ^ b_j ^ (rho_j & b_j) ^ (m_j & (rho_j ^ b_j))
        // with m public, so only rho_j & b_j needs a binary Beaver AND.
        let mut borrow = vec![0u64; groups];
        for j in 0..(w - 1) as usize {
            let and_rb = self.and_words(&rho_lane[j], &borrow)?;
            for g in 0..groups {
                let m_j = m_lane[j][g];
                borrow[g] = rho_lane[j][g] ^ borrow[g] ^ and_rb[g] ^ (m_j & (rho_lane[j][g] ^ borrow[g]));
            }
        }

        // sign bit share: d_{w-1} = m_{w-1} ^ rho_{w-1} ^ borrow
        let sign_idx = (w - 1) as usize;
        let mut sign = vec![0u64; groups];
        for g in 0..groups {
            sign[g] = rho_lane[sign_idx][g] ^ borrow[g];
            if self.party == Party::Modeler {
                sign[g] ^= m_lane[sign_idx][g];
            }
        }

        // daBit conversion: open s ^ t, then s = w_pub ? 1 - [t] : [t]
        let mut t_lane = vec![0u64; groups];
        for i in 0..k {
            let (g, l) = lane(i);
            t_lane[g] |= (conv[i].dab_xor & 1) << l;
        }
        let masked_bits: Vec<u64> = sign.iter().zip(&t_lane).map(|(&s, &t)| s ^ t).collect();
        let w_pub = self.open_xor(&masked_bits, OpenKind::ComparisonMask)?;

        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let (g, l) = lane(i);
            let wb = (w_pub[g] >> l) & 1;
            let t_arith = conv[i].dab_arith;
            let share = if wb == 1 {
                let flipped = t_arith.wrapping_neg();
                if self.party == Party::Modeler {
                    flipped.wrapping_add(1)
                } else {
                    flipped
                }
            } else {
                t_arith
            };
            out.push(mask_to_width(share, bits));
        }
        Ok(Share::new(self.party, RingMatrix::from_vec(rows, cols, out)))
    }

    /// Binary Beaver AND over xor-shared lane words.
    fn and_words(&mut self, x: &[u64], y: &[u64]) -> Result<Vec<u64>> {
        let g = x.len();
        let triples = self.triples.take_and_words(g)?;
        let mut payload = Vec::with_capacity(2 * g);
        for i in 0..g {
            payload.push(x[i] ^ triples[i].a);
        }
        for i in 0..g {
            payload.push(y[i] ^ triples[i].b);
        }
        let step = self.step;
        let theirs = self.exchange(Tag::Open, payload.clone())?;
        if theirs.len() != 2 * g {
            return Err(Error::ShapeMismatch {
                context: "and_words open",
                lhs: (2 * g, 1),
                rhs: (theirs.len(), 1),
            });
        }
        let mut opened = Vec::with_capacity(2 * g);
        for i in 0..2 * g {
            opened.push(payload[i] ^ theirs[i]);
        }
        self.log(step, OpenKind::BeaverMask, opened.clone());
        let (e, f) = opened.split_at(g);
        let mut z = Vec::with_capacity(g);
        for i in 0..g {
            let mut zi = (f[i] & triples[i].a) ^ (e[i] & triples[i].b) ^ triples[i].c;
            if self.party == Party::Modeler {
                zi ^= e[i] & f[i];
            }
            z.push(zi);
        }
        Ok(z)
    }

    /// The piecewise-linear sigmoid: 0 below −1/2, `x + 1/2` in between,
    /// 1 above 1/2. With `b1 = 1 − msb(v + 1/2)` and `b2 = 1 − msb(v − 1/2)`
    /// the result is `b1·(v + 1/2) + b2·(1/2 − v)`, exact in the ring since
    /// the selector bits are unscaled.
    pub fn sigmoid_pw(&mut self, v: &Share) -> Result<Share> {
        let half = 1u64 << (self.frac_bits - 1);
        let v_plus = self.add_public(v, half);
        let v_minus = self.add_public(v, half.wrapping_neg());
        let m1 = self.secure_msb(&v_plus)?;
        let m2 = self.secure_msb(&v_minus)?;
        let b1 = self.public_minus(1, &m1);
        let b2 = self.public_minus(1, &m2);
        let ramp = self.mul_hadamard(&b1, &v_plus)?;
        let cap = self.public_minus(half, v);
        let upper = self.mul_hadamard(&b2, &cap)?;
        Ok(Share::new(self.party, ramp.values.add(&upper.values)))
    }

    /// Randomized equality test, opened to the regulator only: per
    /// coordinate `j`, publishes `r_j (x_j − y_j)` for a fresh shared odd
    /// mask `r_j`. Odd masks are invertible mod `2^64`, so an opening of 0
    /// is equivalent to equality (exact completeness and soundness).
    pub fn eq_test(&mut self, x: &Share, y: &Share) -> Result<Option<bool>> {
        if x.shape() != y.shape() {
            return Err(Error::ShapeMismatch {
                context: "eq_test",
                lhs: x.shape(),
                rhs: y.shape(),
            });
        }
        let (rows, cols) = x.shape();
        let k = rows * cols;
        let diff = Share::new(self.party, x.values.sub(&y.values));
        let masks = self.triples.take_odd_masks(k)?;
        let r = Share::new(self.party, RingMatrix::from_vec(rows, cols, masks));
        let masked = self.mul_hadamard(&diff, &r)?;
        let opened = self.reveal_to(Party::Regulator, &masked, OpenKind::EqualityProduct)?;
        Ok(opened.map(|m| m.data().iter().all(|&v| v == 0)))
    }
}

fn mask_matrix_width(m: &RingMatrix, bits: u32) -> RingMatrix {
    if bits >= 64 {
        return m.clone();
    }
    let data = m.data().iter().map(|&v| mask_to_width(v, bits)).collect();
    RingMatrix::from_vec(m.rows(), m.cols(), data)
}

/// The opened product used by the equality test, factored out so the
/// soundness claim can be checked exhaustively on a mini ring.
pub fn masked_difference(r: u64, d: u64, ring_bits: u32) -> u64 {
    mask_to_width(r.wrapping_mul(d), ring_bits)
}

/// Runs a two-party protocol over in-process transports, one thread per
/// party, and returns both results.
pub fn run_local_pair<R1, R2, F1, F2>(f1: F1, f2: F2) -> Result<(R1, R2)>
where
    R1: Send,
    R2: Send,
    F1: FnOnce(ChannelTransport) -> Result<R1> + Send,
    F2: FnOnce(ChannelTransport) -> Result<R2> + Send,
{
    let (ta, tb) = crate::transport::channel_pair();
    std::thread::scope(|scope| {
        let h2 = scope.spawn(move || f2(tb));
        let r1 = f1(ta);
        let r2 = h2.join().expect("party 2 panicked");
        Ok((r1?, r2?))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::{decode, encode, trunc};
    use crate::sharing::{deal, reconstruct, split, split_ring, DealerSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn scalar(v: u64) -> RingMatrix {
        RingMatrix::from_vec(1, 1, vec![v])
    }

    fn paired_sessions(
        spec: &DealerSpec,
        seed: u64,
    ) -> (
        Session<ChannelTransport>,
        Session<ChannelTransport>,
    ) {
        let (t1, t2) = deal(spec, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();
        let (ta, tb) = crate::transport::channel_pair();
        (
            Session::new(Party::Modeler, ta, t1, 16, seed ^ 1),
            Session::new(Party::Regulator, tb, t2, 16, seed ^ 2),
        )
    }

    fn run_both<R1: Send, R2: Send>(
        s1: Session<ChannelTransport>,
        s2: Session<ChannelTransport>,
        f1: impl FnOnce(&mut Session<ChannelTransport>) -> R1 + Send,
        f2: impl FnOnce(&mut Session<ChannelTransport>) -> R2 + Send,
    ) -> (R1, R2) {
        let mut s1 = s1;
        let mut s2 = s2;
        std::thread::scope(|scope| {
            let h = scope.spawn(move || f2(&mut s2));
            let r1 = f1(&mut s1);
            (r1, h.join().unwrap())
        })
    }

    #[test]
    fn beaver_step_formula_matches_protocol_description() {
        // x=3, y=5 with triple a=2, b=7, c=14: e=1, f=-2,
        // z = ef + f·a + e·b + c = -2 - 4 + 7 + 14 = 15
        let (x, y, a, b, c) = (3i64, 5i64, 2i64, 7i64, 14i64);
        let e = x - a;
        let f = y - b;
        let z = e * f + f * a + e * b + c;
        assert_eq!(z, 15);
        assert_eq!(z, x * y);
    }

    #[test]
    fn open_reconstructs_split_values() {
        let spec = DealerSpec::empty();
        let (s1, s2) = paired_sessions(&spec, 5);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (x1, x2) = split(&scalar(7), &mut rng);
        let (r1, r2) = run_both(
            s1,
            s2,
            move |s| s.open(&x1, OpenKind::BeaverMask).unwrap(),
            move |s| s.open(&x2, OpenKind::BeaverMask).unwrap(),
        );
        assert_eq!(r1.get(0, 0), 7);
        assert_eq!(r2.get(0, 0), 7);
    }

    #[test]
    fn mul_is_exact_in_the_ring() {
        let mut spec = DealerSpec::empty();
        spec.add_matmul(1, 1, 1, 200);
        let (s1, s2) = paired_sessions(&spec, 6);
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let mut inputs = Vec::new();
        for _ in 0..200 {
            let x: u64 = rng.gen();
            let y: u64 = rng.gen();
            let (xs, ys) = (split(&scalar(x), &mut rng), split(&scalar(y), &mut rng));
            inputs.push((x, y, xs, ys));
        }
        let inputs2: Vec<_> = inputs
            .iter()
            .map(|(x, y, xs, ys)| (*x, *y, xs.1.clone(), ys.1.clone()))
            .collect();
        let ((), products) = run_both(
            s1,
            s2,
            move |s| {
                for (x, y, xs, ys) in &inputs {
                    let z = s.mul(&xs.0, &ys.0).unwrap();
                    let opened = s.open(&z, OpenKind::ModelOutput).unwrap();
                    assert_eq!(opened.get(0, 0), x.wrapping_mul(*y));
                }
            },
            move |s| {
                let mut out = Vec::new();
                for (_, _, xs, ys) in &inputs2 {
                    let z = s.mul(xs, ys).unwrap();
                    out.push(s.open(&z, OpenKind::ModelOutput).unwrap().get(0, 0));
                }
                out
            },
        );
        assert_eq!(products.len(), 200);
    }

    #[test]
    fn mul_zero_is_zero_for_any_triple() {
        let mut spec = DealerSpec::empty();
        spec.add_matmul(1, 1, 1, 8);
        let (s1, s2) = paired_sessions(&spec, 7);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let (x1, x2) = split(&scalar(0), &mut rng);
        let (y1, y2) = split(&scalar(12345), &mut rng);
        let (r1, _r2) = run_both(
            s1,
            s2,
            move |s| {
                let z = s.mul(&x1, &y1).unwrap();
                s.open(&z, OpenKind::ModelOutput).unwrap().get(0, 0)
            },
            move |s| {
                let z = s.mul(&x2, &y2).unwrap();
                s.open(&z, OpenKind::ModelOutput).unwrap().get(0, 0)
            },
        );
        assert_eq!(r1, 0);
    }

    #[test]
    fn trunc_shares_exact_when_mask_zero() {
        let spec = DealerSpec::empty();
        let (s1, s2) = paired_sessions(&spec, 8);
        let raw = encode(-2.5, 16).unwrap().raw().wrapping_mul(1 << 16);
        let x1 = Share::new(Party::Modeler, scalar(raw));
        let x2 = Share::new(Party::Regulator, scalar(0));
        let (r1, r2) = run_both(
            s1,
            s2,
            move |s| s.trunc_shares(&x1, 16).unwrap(),
            move |s| s.trunc_shares(&x2, 16).unwrap(),
        );
        let sum = reconstruct(&r1, &r2).unwrap().get(0, 0);
        assert_eq!(sum, encode(-2.5, 16).unwrap().raw());
    }

    #[test]
    fn trunc_shares_random_masks_within_one_ulp() {
        let spec = DealerSpec::empty();
        let (s1, s2) = paired_sessions(&spec, 12);
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let mut raws = Vec::new();
        let mut lhs = Vec::new();
        let mut rhs = Vec::new();
        for _ in 0..2000 {
            let x = rng.gen_range(-0.99..0.99);
            let y = rng.gen_range(-0.99..0.99);
            let raw = encode(x, 16)
                .unwrap()
                .raw()
                .wrapping_mul(encode(y, 16).unwrap().raw());
            let (a, b) = split(&scalar(raw), &mut rng);
            raws.push(raw);
            lhs.push(a);
            rhs.push(b);
        }
        let (r1s, r2s) = run_both(
            s1,
            s2,
            move |s| {
                lhs.iter()
                    .map(|a| s.trunc_shares(a, 16).unwrap())
                    .collect::<Vec<_>>()
            },
            move |s| {
                rhs.iter()
                    .map(|b| s.trunc_shares(b, 16).unwrap())
                    .collect::<Vec<_>>()
            },
        );
        for (i, ((a, b), &raw)) in r1s.iter().zip(&r2s).zip(&raws).enumerate() {
            let exact = trunc(raw, 16);
            let got = reconstruct(a, b).unwrap().get(0, 0);
            let err = got.wrapping_sub(exact) as i64;
            assert!(err.abs() <= 1, "error {err} at sample {i}");
        }
    }

    #[test]
    fn secure_msb_matches_sign_bit_full_ring() {
        let mut spec = DealerSpec::empty();
        spec.conversions = 300;
        spec.and_words = 63 * 300;
        let (s1, s2) = paired_sessions(&spec, 14);
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        let mut cases: Vec<u64> = vec![0, 1, u64::MAX, 1 << 63, (1 << 63) - 1];
        for _ in 0..295 {
            cases.push(rng.gen());
        }
        let shares: Vec<_> = cases.iter().map(|&v| split(&scalar(v), &mut rng)).collect();
        let shares2: Vec<_> = shares.iter().map(|(_, b)| b.clone()).collect();
        let cases2 = cases.clone();
        let (r1, r2) = run_both(
            s1,
            s2,
            move |s| {
                shares
                    .iter()
                    .map(|(a, _)| s.secure_msb(a).unwrap())
                    .collect::<Vec<_>>()
            },
            move |s| {
                shares2
                    .iter()
                    .map(|b| s.secure_msb(b).unwrap())
                    .collect::<Vec<_>>()
            },
        );
        for ((a, b), v) in r1.iter().zip(&r2).zip(&cases2) {
            let bit = reconstruct(a, b).unwrap().get(0, 0);
            assert_eq!(bit, v >> 63, "value {v:#x}");
        }
    }

    #[test]
    fn secure_msb_exhaustive_mini_ring() {
        let mut spec = DealerSpec::empty();
        spec.ring_bits = 8;
        spec.conversions = 256;
        spec.and_words = 7 * 256;
        let (t1, t2) = deal(&spec, &mut ChaCha20Rng::seed_from_u64(16)).unwrap();
        let (ta, tb) = crate::transport::channel_pair();
        let s1 = Session::new(Party::Modeler, ta, t1, 4, 21);
        let s2 = Session::new(Party::Regulator, tb, t2, 4, 22);
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let shares: Vec<_> = (0u64..256)
            .map(|v| split_ring(&scalar(v), 8, &mut rng))
            .collect();
        let shares2: Vec<_> = shares.iter().map(|(_, b)| b.clone()).collect();
        let (r1, r2) = run_both(
            s1,
            s2,
            move |s| {
                shares
                    .iter()
                    .map(|(a, _)| s.secure_msb(a).unwrap())
                    .collect::<Vec<_>>()
            },
            move |s| {
                shares2
                    .iter()
                    .map(|b| s.secure_msb(b).unwrap())
                    .collect::<Vec<_>>()
            },
        );
        for (v, (a, b)) in r1.iter().zip(&r2).enumerate() {
            let bit = mask_to_width(reconstruct(a, b).unwrap().get(0, 0), 8);
            assert_eq!(bit, (v as u64) >> 7, "mini-ring value {v}");
        }
    }

    #[test]
    fn sigmoid_pw_matches_three_piece_definition() {
        let mut spec = DealerSpec::empty();
        spec.conversions = 2 * 64;
        spec.and_words = 2 * 63;
        spec.add_hadamard(32, 1, 2);
        let (s1, s2) = paired_sessions(&spec, 18);
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        let points: Vec<f64> = vec![
            0.0, 0.7, -0.25, 0.5, -0.5, 0.499984741, -0.499984741, 3.0, -3.0, 1.0, -1.0, 0.25,
        ]
        .into_iter()
        .chain((0..20).map(|_| rng.gen_range(-4.0..4.0)))
        .collect();
        let enc = RingMatrix::from_vec(
            32,
            1,
            points
                .iter()
                .map(|&v| encode(v, 16).unwrap().raw())
                .collect(),
        );
        let (v1, v2) = split(&enc, &mut rng);
        let points2 = points.clone();
        let (r1, r2) = run_both(
            s1,
            s2,
            move |s| s.sigmoid_pw(&v1).unwrap(),
            move |s| s.sigmoid_pw(&v2).unwrap(),
        );
        let out = reconstruct(&r1, &r2).unwrap();
        for (i, &p) in points2.iter().enumerate() {
            let enc_p = decode(encode(p, 16).unwrap().raw(), 16);
            let expect = if enc_p <= -0.5 {
                0.0
            } else if enc_p < 0.5 {
                enc_p + 0.5
            } else {
                1.0
            };
            let got = decode(out.get(i, 0), 16);
            assert!(
                (got - expect).abs() <= 2.0 / 65536.0,
                "sigma({p}) = {got}, expected {expect}"
            );
        }
    }

    #[test]
    fn eq_test_accepts_equal_rejects_one_ulp() {
        let mut spec = DealerSpec::empty();
        spec.add_hadamard(3, 1, 4);
        spec.odd_masks = 12;
        let (s1, s2) = paired_sessions(&spec, 20);
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let theta = RingMatrix::from_vec(3, 1, vec![100, 200, 300]);
        let mut bumped = theta.clone();
        bumped.set(1, 0, 201);
        let (t1, t2) = split(&theta, &mut rng);
        let (u1, u2) = split(&theta, &mut rng);
        let (b1, b2) = split(&bumped, &mut rng);
        let ((ra, rb), (qa, qb)) = run_both(
            s1,
            s2,
            move |s| {
                let eq = s.eq_test(&t1, &u1).unwrap();
                let ne = s.eq_test(&t1, &b1).unwrap();
                (eq, ne)
            },
            move |s| {
                let eq = s.eq_test(&t2, &u2).unwrap();
                let ne = s.eq_test(&t2, &b2).unwrap();
                (eq, ne)
            },
        );
        assert_eq!(ra, None, "modeler learns nothing");
        assert_eq!(rb, None);
        assert_eq!(qa, Some(true), "regulator sees equality");
        assert_eq!(qb, Some(false), "one-ulp difference must reject");
    }

    #[test]
    fn masked_difference_soundness_exhaustive_mini_ring() {
        for d in 0u64..256 {
            for r in (1u64..256).step_by(2) {
                let opened = masked_difference(r, d, 8);
                assert_eq!(opened == 0, d == 0, "d={d} r={r}");
            }
        }
    }

    #[test]
    fn desync_is_detected_on_both_sides() {
        let spec = DealerSpec::empty();
        let (s1, s2) = paired_sessions(&spec, 22);
        let (r1, r2) = run_both(
            s1,
            s2,
            move |s| {
                // skip one step locally, then expect desync
                s.next_step();
                let x = Share::new(Party::Modeler, scalar(1));
                s.open(&x, OpenKind::BeaverMask)
            },
            move |s| {
                let x = Share::new(Party::Regulator, scalar(2));
                s.open(&x, OpenKind::BeaverMask)
            },
        );
        assert!(matches!(r1, Err(Error::PeerDesync { .. })));
        assert!(matches!(r2, Err(Error::PeerDesync { .. })));
    }

    #[test]
    fn triple_exhaustion_is_an_error() {
        let mut spec = DealerSpec::empty();
        spec.add_matmul(1, 1, 1, 1);
        let (s1, s2) = paired_sessions(&spec, 23);
        let mut rng = ChaCha20Rng::seed_from_u64(24);
        let (x1, x2) = split(&scalar(3), &mut rng);
        let (y1, y2) = split(&scalar(4), &mut rng);
        let (r1, _) = run_both(
            s1,
            s2,
            move |s| {
                let _ = s.mul(&x1, &y1).unwrap();
                s.mul(&x1, &y1)
            },
            move |s| {
                let _ = s.mul(&x2, &y2).unwrap();
                s.mul(&x2, &y2)
            },
        );
        assert!(matches!(r1, Err(Error::TripleExhausted { .. })));
    }

    #[test]
    fn config_sync_rejects_mismatch() {
        let spec = DealerSpec::empty();
        let (s1, s2) = paired_sessions(&spec, 25);
        let (r1, r2) = run_both(
            s1,
            s2,
            move |s| s.sync_config(&[1, 2, 3]),
            move |s| s.sync_config(&[1, 2, 4]),
        );
        assert!(matches!(r1, Err(Error::ConfigMismatch(_))));
        assert!(matches!(r2, Err(Error::ConfigMismatch(_))));
    }

    #[test]
    fn input_share_hides_and_reconstructs() {
        let spec = DealerSpec::empty();
        let (s1, s2) = paired_sessions(&spec, 26);
        let secret = RingMatrix::from_vec(2, 1, vec![111, 222]);
        let secret2 = secret.clone();
        let (a, b) = run_both(
            s1,
            s2,
            move |s| s.input_share(Some(&secret), 2, 1).unwrap(),
            move |s| s.input_share(None, 2, 1).unwrap(),
        );
        assert_eq!(reconstruct(&a, &b).unwrap(), secret2);
    }

    #[test]
    fn blocked_mult_zero_matrix() {
        let mut spec = DealerSpec::empty();
        spec.add_matmul(1, 2, 1, 2);
        let (s1, s2) = paired_sessions(&spec, 27);
        let zc = RingMatrix::zeros(1, 4);
        let x = RingMatrix::from_vec(4, 1, vec![1 << 16, 1 << 16, 1 << 16, 1 << 16]);
        let mut rng = ChaCha20Rng::seed_from_u64(28);
        let (z1, z2) = split(&zc, &mut rng);
        let (x1, x2) = split(&x, &mut rng);
        let (r1, r2) = run_both(
            s1,
            s2,
            move |s| s.blocked_mult_shift_avg(&z1, &x1, 2).unwrap(),
            move |s| s.blocked_mult_shift_avg(&z2, &x2, 2).unwrap(),
        );
        let out = reconstruct(&r1, &r2).unwrap();
        let v = decode(out.get(0, 0), 16);
        assert!(v.abs() <= 3.0 / 65536.0, "got {v}");
    }

    #[test]
    fn blocked_mult_ones_average() {
        // Zc = [1,1,1,1], X = (1,1,1,1)^T: (1/n) Zc X = 1.0
        let mut spec = DealerSpec::empty();
        spec.add_matmul(1, 2, 1, 2);
        let (s1, s2) = paired_sessions(&spec, 29);
        let one = 1u64 << 16;
        let zc = RingMatrix::from_vec(1, 4, vec![one; 4]);
        let x = RingMatrix::from_vec(4, 1, vec![one; 4]);
        let mut rng = ChaCha20Rng::seed_from_u64(30);
        let (z1, z2) = split(&zc, &mut rng);
        let (x1, x2) = split(&x, &mut rng);
        let (r1, r2) = run_both(
            s1,
            s2,
            move |s| s.blocked_mult_shift_avg(&z1, &x1, 2).unwrap(),
            move |s| s.blocked_mult_shift_avg(&z2, &x2, 2).unwrap(),
        );
        let out = reconstruct(&r1, &r2).unwrap();
        let v = decode(out.get(0, 0), 16);
        assert!((v - 1.0).abs() <= 3.0 / 65536.0, "got {v}");
    }

    #[test]
    fn blocked_mult_rejects_bad_block() {
        let spec = DealerSpec::empty();
        let (s1, s2) = paired_sessions(&spec, 31);
        let zc = RingMatrix::zeros(1, 6);
        let x = RingMatrix::zeros(6, 1);
        let (z1, z2) = (
            Share::new(Party::Modeler, zc.clone()),
            Share::new(Party::Regulator, zc),
        );
        let (x1, x2) = (
            Share::new(Party::Modeler, x.clone()),
            Share::new(Party::Regulator, x),
        );
        let (r1, _) = run_both(
            s1,
            s2,
            move |s| s.blocked_mult_shift_avg(&z1, &x1, 3),
            move |s| s.blocked_mult_shift_avg(&z2, &x2, 3),
        );
        assert!(matches!(r1, Err(Error::BadBlockSize { .. })));
    }

    #[test]
    fn audit_flags_forbidden_runs_and_unexpected_kinds() {
        let log = vec![
            OpenRecord {
                step: 0,
                kind: OpenKind::BeaverMask,
                values: vec![5, 6, 7],
            },
            OpenRecord {
                step: 1,
                kind: OpenKind::ComparisonMask,
                values: vec![9],
            },
        ];
        let allowed = [OpenKind::BeaverMask, OpenKind::ComparisonMask];
        assert!(audit_transcript(&log, &allowed, &[vec![1, 2]]).is_ok());
        assert!(audit_transcript(&log, &allowed, &[vec![6, 7]]).is_err());
        assert!(audit_transcript(&log, &[OpenKind::BeaverMask], &[]).is_err());
    }
}
