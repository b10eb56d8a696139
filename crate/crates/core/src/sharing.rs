//! Additive secret sharing over `Z_{2^64}` and the trusted-dealer offline
//! phase.
//!
//! The dealer plays the role of the offline triple-generation protocols: it
//! produces, from a single seed, index-aligned pools of correlated
//! randomness for both parties. Pool kinds:
//!
//! * matrix multiplication triples `(A, B, C)` with `C = A·B` in the ring,
//! * elementwise (Hadamard) triples with `C = A ⊙ B`,
//! * conversion tuples: an arithmetic sharing of a uniform `ρ` together
//!   with xor-shares of its bits and one daBit (a random bit shared both
//!   ways), consumed by secure sign extraction,
//! * binary AND triples packed 64 lanes to a word,
//! * shares of random odd ring elements (equality-test masks; odd values
//!   are invertible mod `2^64`, so masked differences vanish only at zero),
//! * shares of zero (used to re-randomize a sharing).
//!
//! Exact consumption formulas live next to the protocols that consume the
//! pools ([`crate::fairtrain::dealer_spec_for_training`] and the attest
//! equivalents); dealing only needs the resulting [`DealerSpec`] counts.

use std::collections::BTreeMap;
use std::path::Path;

use rand::RngCore;

use crate::container::{Container, ObjectType};
use crate::error::{Error, Result};
use crate::fixedpoint::RingMatrix;

/// The two computation servers. The modeler holds `z - r` style shares
/// (party 1), the regulator the masks (party 2); the numbering only matters
/// for keeping pools index-aligned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    Modeler,
    Regulator,
}

impl Party {
    pub fn index(self) -> u8 {
        match self {
            Party::Modeler => 1,
            Party::Regulator => 2,
        }
    }

    pub fn other(self) -> Party {
        match self {
            Party::Modeler => Party::Regulator,
            Party::Regulator => Party::Modeler,
        }
    }

    pub fn from_index(i: u8) -> Result<Party> {
        match i {
            1 => Ok(Party::Modeler),
            2 => Ok(Party::Regulator),
            other => Err(Error::BadContainer(format!("bad party index {other}"))),
        }
    }
}

/// One party's additive share of a matrix of ring elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Share {
    pub party: Party,
    pub values: RingMatrix,
}

impl Share {
    pub fn new(party: Party, values: RingMatrix) -> Self {
        Share { party, values }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }
}

/// Masks a value to the low `bits` bits of the ring (no-op at 64).
pub fn mask_to_width(v: u64, bits: u32) -> u64 {
    if bits >= 64 {
        v
    } else {
        v & ((1u64 << bits) - 1)
    }
}

/// Splits a secret into two additive shares over `Z_{2^bits}`.
///
/// Party 2 receives a uniform mask, party 1 the secret minus that mask, so
/// either share on its own is marginally uniform.
pub fn split_ring<R: RngCore>(secret: &RingMatrix, bits: u32, rng: &mut R) -> (Share, Share) {
    let (rows, cols) = secret.shape();
    let mut mask = Vec::with_capacity(rows * cols);
    let mut rest = Vec::with_capacity(rows * cols);
    for &v in secret.data() {
        let r = mask_to_width(rng.next_u64(), bits);
        mask.push(r);
        rest.push(mask_to_width(v.wrapping_sub(r), bits));
    }
    (
        Share::new(Party::Modeler, RingMatrix::from_vec(rows, cols, rest)),
        Share::new(Party::Regulator, RingMatrix::from_vec(rows, cols, mask)),
    )
}

/// Splits a secret over the full 64-bit ring.
pub fn split<R: RngCore>(secret: &RingMatrix, rng: &mut R) -> (Share, Share) {
    split_ring(secret, 64, rng)
}

/// Recombines two shares by elementwise ring addition.
pub fn reconstruct(s1: &Share, s2: &Share) -> Result<RingMatrix> {
    if s1.party == s2.party {
        return Err(Error::SameParty);
    }
    if s1.shape() != s2.shape() {
        return Err(Error::ShapeMismatch {
            context: "reconstruct",
            lhs: s1.shape(),
            rhs: s2.shape(),
        });
    }
    Ok(s1.values.add(&s2.values))
}

/// One party's half of a matrix multiplication triple `C = A·B`.
#[derive(Debug, Clone)]
pub struct MatTriple {
    pub a: RingMatrix,
    pub b: RingMatrix,
    pub c: RingMatrix,
}

/// One party's half of an elementwise triple `C = A ⊙ B`.
#[derive(Debug, Clone)]
pub struct HadTriple {
    pub a: RingMatrix,
    pub b: RingMatrix,
    pub c: RingMatrix,
}

/// One party's half of a conversion tuple for sign extraction.
///
/// `rho` is an arithmetic share of a uniform ring element; `rho_bits` holds
/// this party's xor-shares of its bits (bit `j` of the word is the share of
/// bit `j` of `ρ`). `dab_xor`/`dab_arith` are the xor- and arithmetic
/// sharings of one additional uniform bit, used to convert the extracted
/// sign bit back to an arithmetic sharing.
#[derive(Debug, Clone, Copy)]
pub struct ConversionTuple {
    pub rho: u64,
    pub rho_bits: u64,
    pub dab_xor: u64,
    pub dab_arith: u64,
}

/// One party's xor-shares of 64 AND triples, one bit lane each.
#[derive(Debug, Clone, Copy)]
pub struct AndTripleWord {
    pub a: u64,
    pub b: u64,
    pub c: u64,
}

#[derive(Debug, Clone)]
struct Pool<T> {
    items: Vec<T>,
    cursor: usize,
}

impl<T> Default for Pool<T> {
    fn default() -> Self {
        Pool {
            items: Vec::new(),
            cursor: 0,
        }
    }
}

impl<T: Clone> Pool<T> {
    fn new(items: Vec<T>) -> Self {
        Pool { items, cursor: 0 }
    }

    fn take(&mut self, n: usize, name: &str) -> Result<Vec<T>> {
        if self.cursor + n > self.items.len() {
            return Err(Error::TripleExhausted {
                pool: format!(
                    "{name}: requested {n}, {} of {} left",
                    self.items.len() - self.cursor,
                    self.items.len()
                ),
            });
        }
        let out = self.items[self.cursor..self.cursor + n].to_vec();
        self.cursor += n;
        Ok(out)
    }

    fn remaining(&self) -> usize {
        self.items.len() - self.cursor
    }
}

/// Requested pool sizes for one [`deal`] call.
///
/// Matrix and Hadamard counts are keyed by shape; `ring_bits` is 64 for the
/// production ring and smaller only in mini-ring tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DealerSpec {
    pub ring_bits: u32,
    pub matmul: BTreeMap<(usize, usize, usize), usize>,
    pub hadamard: BTreeMap<(usize, usize), usize>,
    pub conversions: usize,
    pub and_words: usize,
    pub odd_masks: usize,
    pub zero_shares: usize,
}

impl DealerSpec {
    pub fn empty() -> Self {
        DealerSpec {
            ring_bits: 64,
            matmul: BTreeMap::new(),
            hadamard: BTreeMap::new(),
            conversions: 0,
            and_words: 0,
            odd_masks: 0,
            zero_shares: 0,
        }
    }

    pub fn add_matmul(&mut self, m: usize, k: usize, l: usize, count: usize) {
        *self.matmul.entry((m, k, l)).or_insert(0) += count;
    }

    pub fn add_hadamard(&mut self, rows: usize, cols: usize, count: usize) {
        *self.hadamard.entry((rows, cols)).or_insert(0) += count;
    }

    /// Sums another spec into this one (pools are additive).
    pub fn merge(&mut self, other: &DealerSpec) {
        assert_eq!(self.ring_bits, other.ring_bits, "cannot merge across ring widths");
        for (&k, &v) in &other.matmul {
            *self.matmul.entry(k).or_insert(0) += v;
        }
        for (&k, &v) in &other.hadamard {
            *self.hadamard.entry(k).or_insert(0) += v;
        }
        self.conversions += other.conversions;
        self.and_words += other.and_words;
        self.odd_masks += other.odd_masks;
        self.zero_shares += other.zero_shares;
    }
}

/// One party's pools of dealt correlated randomness.
///
/// Consumption is strictly sequential per pool; every element is handed out
/// at most once and running dry is a hard error, never silent reuse.
#[derive(Debug, Clone)]
pub struct TripleSet {
    pub party: Party,
    pub ring_bits: u32,
    matmul: BTreeMap<(usize, usize, usize), Pool<MatTriple>>,
    hadamard: BTreeMap<(usize, usize), Pool<HadTriple>>,
    conversions: Pool<ConversionTuple>,
    and_words: Pool<AndTripleWord>,
    odd_masks: Pool<u64>,
    zero_shares: Pool<u64>,
}

impl TripleSet {
    /// An empty but valid set (every take fails with `TripleExhausted`).
    pub fn empty(party: Party) -> Self {
        TripleSet {
            party,
            ring_bits: 64,
            matmul: BTreeMap::new(),
            hadamard: BTreeMap::new(),
            conversions: Pool::default(),
            and_words: Pool::default(),
            odd_masks: Pool::default(),
            zero_shares: Pool::default(),
        }
    }

    pub fn take_matmul(&mut self, m: usize, k: usize, l: usize) -> Result<MatTriple> {
        let pool = self.matmul.get_mut(&(m, k, l)).ok_or(Error::TripleExhausted {
            pool: format!("matmul {m}x{k}x{l}: no such pool"),
        })?;
        Ok(pool.take(1, "matmul")?.pop().unwrap())
    }

    pub fn take_hadamard(&mut self, rows: usize, cols: usize) -> Result<HadTriple> {
        let pool = self
            .hadamard
            .get_mut(&(rows, cols))
            .ok_or(Error::TripleExhausted {
                pool: format!("hadamard {rows}x{cols}: no such pool"),
            })?;
        Ok(pool.take(1, "hadamard")?.pop().unwrap())
    }

    pub fn take_conversions(&mut self, n: usize) -> Result<Vec<ConversionTuple>> {
        self.conversions.take(n, "conversions")
    }

    pub fn take_and_words(&mut self, n: usize) -> Result<Vec<AndTripleWord>> {
        self.and_words.take(n, "and_words")
    }

    pub fn take_odd_masks(&mut self, n: usize) -> Result<Vec<u64>> {
        self.odd_masks.take(n, "odd_masks")
    }

    pub fn take_zero_shares(&mut self, n: usize) -> Result<Vec<u64>> {
        self.zero_shares.take(n, "zero_shares")
    }

    /// Leftover counts per pool, for budget-exactness checks.
    pub fn remaining(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for ((m, k, l), p) in &self.matmul {
            out.insert(format!("matmul {m}x{k}x{l}"), p.remaining());
        }
        for ((r, c), p) in &self.hadamard {
            out.insert(format!("hadamard {r}x{c}"), p.remaining());
        }
        out.insert("conversions".into(), self.conversions.remaining());
        out.insert("and_words".into(), self.and_words.remaining());
        out.insert("odd_masks".into(), self.odd_masks.remaining());
        out.insert("zero_shares".into(), self.zero_shares.remaining());
        out
    }
}

fn draw_u64<R: RngCore>(rng: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    rng.try_fill_bytes(&mut buf)
        .map_err(|_| Error::InsufficientEntropy)?;
    Ok(u64::from_le_bytes(buf))
}

fn draw_matrix<R: RngCore>(rows: usize, cols: usize, bits: u32, rng: &mut R) -> Result<RingMatrix> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(mask_to_width(draw_u64(rng)?, bits));
    }
    Ok(RingMatrix::from_vec(rows, cols, data))
}

fn mask_matrix(m: &RingMatrix, bits: u32) -> RingMatrix {
    if bits >= 64 {
        return m.clone();
    }
    let data = m.data().iter().map(|&v| mask_to_width(v, bits)).collect();
    RingMatrix::from_vec(m.rows(), m.cols(), data)
}

fn split_pair<R: RngCore>(v: &RingMatrix, bits: u32, rng: &mut R) -> Result<(RingMatrix, RingMatrix)> {
    let mask = draw_matrix(v.rows(), v.cols(), bits, rng)?;
    let rest = mask_matrix(&v.sub(&mask), bits);
    Ok((rest, mask))
}

/// Runs the offline phase: deals every pool in `spec` for both parties.
///
/// The output is a deterministic function of the seed stream, so a run can
/// be reproduced bit for bit from the dealer seed.
pub fn deal<R: RngCore>(spec: &DealerSpec, rng: &mut R) -> Result<(TripleSet, TripleSet)> {
    let bits = spec.ring_bits;
    let mut set1 = TripleSet::empty(Party::Modeler);
    let mut set2 = TripleSet::empty(Party::Regulator);
    set1.ring_bits = bits;
    set2.ring_bits = bits;

    for (&(m, k, l), &count) in &spec.matmul {
        let mut p1 = Vec::with_capacity(count);
        let mut p2 = Vec::with_capacity(count);
        for _ in 0..count {
            let a = draw_matrix(m, k, bits, rng)?;
            let b = draw_matrix(k, l, bits, rng)?;
            let c = mask_matrix(&a.matmul(&b), bits);
            let (a1, a2) = split_pair(&a, bits, rng)?;
            let (b1, b2) = split_pair(&b, bits, rng)?;
            let (c1, c2) = split_pair(&c, bits, rng)?;
            p1.push(MatTriple { a: a1, b: b1, c: c1 });
            p2.push(MatTriple { a: a2, b: b2, c: c2 });
        }
        set1.matmul.insert((m, k, l), Pool::new(p1));
        set2.matmul.insert((m, k, l), Pool::new(p2));
    }

    for (&(r, c), &count) in &spec.hadamard {
        let mut p1 = Vec::with_capacity(count);
        let mut p2 = Vec::with_capacity(count);
        for _ in 0..count {
            let a = draw_matrix(r, c, bits, rng)?;
            let b = draw_matrix(r, c, bits, rng)?;
            let prod = mask_matrix(&a.hadamard(&b), bits);
            let (a1, a2) = split_pair(&a, bits, rng)?;
            let (b1, b2) = split_pair(&b, bits, rng)?;
            let (c1, c2) = split_pair(&prod, bits, rng)?;
            p1.push(HadTriple { a: a1, b: b1, c: c1 });
            p2.push(HadTriple { a: a2, b: b2, c: c2 });
        }
        set1.hadamard.insert((r, c), Pool::new(p1));
        set2.hadamard.insert((r, c), Pool::new(p2));
    }

    let mut conv1 = Vec::with_capacity(spec.conversions);
    let mut conv2 = Vec::with_capacity(spec.conversions);
    for _ in 0..spec.conversions {
        let rho = mask_to_width(draw_u64(rng)?, bits);
        let rho2 = mask_to_width(draw_u64(rng)?, bits);
        let rho1 = mask_to_width(rho.wrapping_sub(rho2), bits);
        let bits2 = mask_to_width(draw_u64(rng)?, bits);
        let bits1 = mask_to_width(rho ^ bits2, bits);
        let dab = draw_u64(rng)? & 1;
        let dab_xor2 = draw_u64(rng)? & 1;
        let dab_xor1 = dab ^ dab_xor2;
        let dab_arith2 = mask_to_width(draw_u64(rng)?, bits);
        let dab_arith1 = mask_to_width(dab.wrapping_sub(dab_arith2), bits);
        conv1.push(ConversionTuple {
            rho: rho1,
            rho_bits: bits1,
            dab_xor: dab_xor1,
            dab_arith: dab_arith1,
        });
        conv2.push(ConversionTuple {
            rho: rho2,
            rho_bits: bits2,
            dab_xor: dab_xor2,
            dab_arith: dab_arith2,
        });
    }
    set1.conversions = Pool::new(conv1);
    set2.conversions = Pool::new(conv2);

    let mut and1 = Vec::with_capacity(spec.and_words);
    let mut and2 = Vec::with_capacity(spec.and_words);
    for _ in 0..spec.and_words {
        let a = draw_u64(rng)?;
        let b = draw_u64(rng)?;
        let c = a & b;
        let a2 = draw_u64(rng)?;
        let b2 = draw_u64(rng)?;
        let c2 = draw_u64(rng)?;
        and1.push(AndTripleWord {
            a: a ^ a2,
            b: b ^ b2,
            c: c ^ c2,
        });
        and2.push(AndTripleWord { a: a2, b: b2, c: c2 });
    }
    set1.and_words = Pool::new(and1);
    set2.and_words = Pool::new(and2);

    let mut odd1 = Vec::with_capacity(spec.odd_masks);
    let mut odd2 = Vec::with_capacity(spec.odd_masks);
    for _ in 0..spec.odd_masks {
        let r = mask_to_width(draw_u64(rng)? | 1, bits);
        let r2 = mask_to_width(draw_u64(rng)?, bits);
        odd1.push(mask_to_width(r.wrapping_sub(r2), bits));
        odd2.push(r2);
    }
    set1.odd_masks = Pool::new(odd1);
    set2.odd_masks = Pool::new(odd2);

    let mut zero1 = Vec::with_capacity(spec.zero_shares);
    let mut zero2 = Vec::with_capacity(spec.zero_shares);
    for _ in 0..spec.zero_shares {
        let r = mask_to_width(draw_u64(rng)?, bits);
        zero1.push(r);
        zero2.push(mask_to_width(r.wrapping_neg(), bits));
    }
    set1.zero_shares = Pool::new(zero1);
    set2.zero_shares = Pool::new(zero2);

    Ok((set1, set2))
}

fn stack(mats: &[RingMatrix]) -> (u32, u32, Vec<u64>) {
    if mats.is_empty() {
        return (0, 0, Vec::new());
    }
    let (r, c) = mats[0].shape();
    let mut data = Vec::with_capacity(mats.len() * r * c);
    for m in mats {
        data.extend_from_slice(m.data());
    }
    (r as u32, c as u32, data)
}

fn unstack(shape: (u32, u32), data: &[u64]) -> Vec<RingMatrix> {
    let record = shape.0 as usize * shape.1 as usize;
    data.chunks_exact(record)
        .map(|c| RingMatrix::from_vec(shape.0 as usize, shape.1 as usize, c.to_vec()))
        .collect()
}

/// Persists every pool of a 64-bit-ring triple set under `dir`, one FPSH
/// file per pool (`mat_{m}x{k}x{l}_{a,b,c}.fpsh`, `had_{r}x{c}_{a,b,c}.fpsh`,
/// `conv.fpsh`, `and.fpsh`, `odd.fpsh`, `zero.fpsh`).
pub fn save_triple_set(set: &TripleSet, dir: &Path) -> Result<()> {
    assert_eq!(set.ring_bits, 64, "only full-ring pools are persisted");
    std::fs::create_dir_all(dir)?;
    let party = set.party.index();
    for ((m, k, l), pool) in &set.matmul {
        let items = &pool.items;
        let parts: [(&str, ObjectType, Vec<&RingMatrix>); 3] = [
            ("a", ObjectType::MatTripleA, items.iter().map(|t| &t.a).collect()),
            ("b", ObjectType::MatTripleB, items.iter().map(|t| &t.b).collect()),
            ("c", ObjectType::MatTripleC, items.iter().map(|t| &t.c).collect()),
        ];
        for (suffix, ty, mats) in parts {
            let owned: Vec<RingMatrix> = mats.into_iter().cloned().collect();
            let (r, c, data) = stack(&owned);
            Container::new(party, ty, (r, c), data)
                .write_to(&dir.join(format!("mat_{m}x{k}x{l}_{suffix}.fpsh")))?;
        }
    }
    for ((rows, cols), pool) in &set.hadamard {
        let items = &pool.items;
        let parts: [(&str, ObjectType, Vec<&RingMatrix>); 3] = [
            ("a", ObjectType::HadTripleA, items.iter().map(|t| &t.a).collect()),
            ("b", ObjectType::HadTripleB, items.iter().map(|t| &t.b).collect()),
            ("c", ObjectType::HadTripleC, items.iter().map(|t| &t.c).collect()),
        ];
        for (suffix, ty, mats) in parts {
            let owned: Vec<RingMatrix> = mats.into_iter().cloned().collect();
            let (r, c, data) = stack(&owned);
            Container::new(party, ty, (r, c), data)
                .write_to(&dir.join(format!("had_{rows}x{cols}_{suffix}.fpsh")))?;
        }
    }
    let conv: Vec<u64> = set
        .conversions
        .items
        .iter()
        .flat_map(|t| [t.rho, t.rho_bits, t.dab_xor, t.dab_arith])
        .collect();
    Container::new(
        party,
        ObjectType::Conversion,
        (set.conversions.items.len() as u32, 4),
        conv,
    )
    .write_to(&dir.join("conv.fpsh"))?;
    let ands: Vec<u64> = set
        .and_words
        .items
        .iter()
        .flat_map(|t| [t.a, t.b, t.c])
        .collect();
    Container::new(
        party,
        ObjectType::AndWords,
        (set.and_words.items.len() as u32, 3),
        ands,
    )
    .write_to(&dir.join("and.fpsh"))?;
    Container::new(
        party,
        ObjectType::OddMask,
        (set.odd_masks.items.len() as u32, 1),
        set.odd_masks.items.clone(),
    )
    .write_to(&dir.join("odd.fpsh"))?;
    Container::new(
        party,
        ObjectType::ZeroShare,
        (set.zero_shares.items.len() as u32, 1),
        set.zero_shares.items.clone(),
    )
    .write_to(&dir.join("zero.fpsh"))?;
    Ok(())
}

/// Loads a triple set previously written with [`save_triple_set`].
pub fn load_triple_set(dir: &Path, party: Party) -> Result<TripleSet> {
    let mut set = TripleSet::empty(party);
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) if n.ends_with("_a.fpsh") || !n.starts_with(|c| c == 'm' || c == 'h') => n.to_string(),
            Some(n) => n.to_string(),
            None => continue,
        };
        if !name.ends_with(".fpsh") {
            continue;
        }
        // matrix pools are driven from their `_a` file; siblings by suffix swap
        if name.starts_with("mat_") && name.ends_with("_a.fpsh") {
            let a = Container::read_from(&path)?;
            let b = Container::read_from(&path.with_file_name(name.replace("_a.fpsh", "_b.fpsh")))?;
            let c = Container::read_from(&path.with_file_name(name.replace("_a.fpsh", "_c.fpsh")))?;
            check_party(&a, party)?;
            let (m, k) = (a.shape.0 as usize, a.shape.1 as usize);
            let (k2, l) = (b.shape.0 as usize, b.shape.1 as usize);
            if k != k2 {
                return Err(Error::BadContainer(format!("{name}: A and B shapes disagree")));
            }
            let amats = unstack(a.shape, &a.data);
            let bmats = unstack(b.shape, &b.data);
            let cmats = unstack(c.shape, &c.data);
            if amats.len() != bmats.len() || amats.len() != cmats.len() {
                return Err(Error::BadContainer(format!("{name}: pool lengths disagree")));
            }
            let triples = amats
                .into_iter()
                .zip(bmats)
                .zip(cmats)
                .map(|((a, b), c)| MatTriple { a, b, c })
                .collect();
            set.matmul.insert((m, k, l), Pool::new(triples));
        } else if name.starts_with("had_") && name.ends_with("_a.fpsh") {
            let a = Container::read_from(&path)?;
            let b = Container::read_from(&path.with_file_name(name.replace("_a.fpsh", "_b.fpsh")))?;
            let c = Container::read_from(&path.with_file_name(name.replace("_a.fpsh", "_c.fpsh")))?;
            check_party(&a, party)?;
            let (r, cdim) = (a.shape.0 as usize, a.shape.1 as usize);
            let amats = unstack(a.shape, &a.data);
            let bmats = unstack(b.shape, &b.data);
            let cmats = unstack(c.shape, &c.data);
            let triples = amats
                .into_iter()
                .zip(bmats)
                .zip(cmats)
                .map(|((a, b), c)| HadTriple { a, b, c })
                .collect();
            set.hadamard.insert((r, cdim), Pool::new(triples));
        } else if name == "conv.fpsh" {
            let c = Container::read_from(&path)?;
            check_party(&c, party)?;
            let tuples = c
                .data
                .chunks_exact(4)
                .map(|w| ConversionTuple {
                    rho: w[0],
                    rho_bits: w[1],
                    dab_xor: w[2],
                    dab_arith: w[3],
                })
                .collect();
            set.conversions = Pool::new(tuples);
        } else if name == "and.fpsh" {
            let c = Container::read_from(&path)?;
            check_party(&c, party)?;
            let words = c
                .data
                .chunks_exact(3)
                .map(|w| AndTripleWord {
                    a: w[0],
                    b: w[1],
                    c: w[2],
                })
                .collect();
            set.and_words = Pool::new(words);
        } else if name == "odd.fpsh" {
            let c = Container::read_from(&path)?;
            check_party(&c, party)?;
            set.odd_masks = Pool::new(c.data);
        } else if name == "zero.fpsh" {
            let c = Container::read_from(&path)?;
            check_party(&c, party)?;
            set.zero_shares = Pool::new(c.data);
        }
    }
    Ok(set)
}

fn check_party(c: &Container, party: Party) -> Result<()> {
    if c.party != party.index() {
        return Err(Error::BadContainer(format!(
            "file belongs to party {}, expected {}",
            c.party,
            party.index()
        )));
    }
    Ok(())
}
