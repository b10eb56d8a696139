//! Data pipeline: CSV ingestion, whitening, power-of-two subsampling,
//! synthetic generation with a controllable sensitive–label correlation,
//! and the user-side share-splitting utility.
//!
//! Input CSV schema: a header row naming feature columns `x*`, one label
//! column `y`, and sensitive columns `z*`; `y` and `z*` must be 0/1.
//!
//! Processing always yields a training split whose size is the largest
//! power of two at most 80% of the rows (the secure protocols need
//! power-of-two sample counts for shift-based averaging) and keeps the
//! remaining rows as the held-out test split. Features are whitened
//! column-wise with training-split moments, clipped to [-8, 8] so that all
//! protocol intermediates stay inside the Q16.16 overflow analysis, and a
//! bias column of ones is appended after whitening.

use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::container::{Container, ObjectType};
use crate::error::{Error, Result};
use crate::fixedpoint::{encode, RingMatrix};
use crate::sharing::{Party, Share};

/// Whitened features are clipped to this magnitude.
pub const CLIP_BOUND: f64 = 8.0;

/// Unprocessed rows as read from (or written to) CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RawData {
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
    /// Row-major, one inner vec per row, length `x_names.len()`.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    /// Row-major, one inner vec per row, length `z_names.len()`.
    pub z: Vec<Vec<u8>>,
}

impl RawData {
    pub fn rows(&self) -> usize {
        self.x.len()
    }
}

/// One processed split: whitened features with bias column, labels, and
/// sensitive attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    /// `n × d` row-major, bias column of ones last.
    pub x: Vec<f64>,
    pub y: Vec<u8>,
    /// `n × p` row-major.
    pub z: Vec<u8>,
    pub n: usize,
}

/// A processed dataset, ready for training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: DataSplit,
    pub test: DataSplit,
    /// Feature count including the bias column.
    pub d: usize,
    /// Sensitive attribute count.
    pub p: usize,
}

impl Dataset {
    pub fn encoded_train_x(&self, frac_bits: u32) -> Result<RingMatrix> {
        RingMatrix::encode_from(self.train.n, self.d, &self.train.x, frac_bits)
    }

    pub fn encoded_train_y(&self, frac_bits: u32) -> Result<RingMatrix> {
        let vals: Vec<f64> = self.train.y.iter().map(|&v| v as f64).collect();
        RingMatrix::encode_from(self.train.n, 1, &vals, frac_bits)
    }

    pub fn encoded_train_z(&self, frac_bits: u32) -> Result<RingMatrix> {
        let vals: Vec<f64> = self.train.z.iter().map(|&v| v as f64).collect();
        RingMatrix::encode_from(self.train.n, self.p, &vals, frac_bits)
    }

    /// Checks the whitening invariants on the training split (meaningful
    /// when clipping did not bind): non-bias columns have mean ~0 and
    /// standard deviation ~1, every entry within the clip bound.
    pub fn validate(&self) -> Result<()> {
        let n = self.train.n as f64;
        for c in 0..self.d - 1 {
            let col: Vec<f64> = (0..self.train.n)
                .map(|r| self.train.x[r * self.d + c])
                .collect();
            if col.iter().any(|v| v.abs() > CLIP_BOUND) {
                return Err(Error::BadShape(format!("column {c} exceeds clip bound")));
            }
            let clipped = col.iter().any(|v| v.abs() == CLIP_BOUND);
            if clipped {
                continue; // moments were shifted by clipping; bound still holds
            }
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            if mean.abs() > 1e-9 || (var.sqrt() - 1.0).abs() > 1e-9 {
                return Err(Error::BadShape(format!(
                    "column {c}: mean {mean}, std {}",
                    var.sqrt()
                )));
            }
        }
        for r in 0..self.train.n {
            if self.train.x[r * self.d + self.d - 1] != 1.0 {
                return Err(Error::BadShape("bias column must be all ones".into()));
            }
        }
        Ok(())
    }
}

/// Reads the raw CSV schema (`x*`, `y`, `z*` columns in any order).
pub fn read_raw_csv(path: &Path) -> Result<RawData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut x_cols = Vec::new();
    let mut z_cols = Vec::new();
    let mut y_col = None;
    for (i, name) in headers.iter().enumerate() {
        let name = name.trim();
        if name == "y" {
            y_col = Some(i);
        } else if name.starts_with('x') {
            x_cols.push((i, name.to_string()));
        } else if name.starts_with('z') {
            z_cols.push((i, name.to_string()));
        } else {
            return Err(Error::Parse {
                line: 1,
                message: format!("unknown column {name:?} (expected x*, y, z*)"),
            });
        }
    }
    let y_col = y_col.ok_or(Error::Parse {
        line: 1,
        message: "missing y column".into(),
    })?;
    if x_cols.is_empty() || z_cols.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "need at least one x* and one z* column".into(),
        });
    }

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut z = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or(Error::Parse {
                    line,
                    message: "short row".into(),
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line,
                    message: e.to_string(),
                })
        };
        let binary = |v: f64, column: &str| -> Result<u8> {
            if v == 0.0 {
                Ok(0)
            } else if v == 1.0 {
                Ok(1)
            } else {
                Err(Error::NonBinaryLabel {
                    column: column.to_string(),
                    value: v,
                })
            }
        };
        let xs = x_cols.iter().map(|(i, _)| parse(*i)).collect::<Result<Vec<f64>>>()?;
        let yv = binary(parse(y_col)?, "y")?;
        let zs = z_cols
            .iter()
            .map(|(i, name)| binary(parse(*i)?, name))
            .collect::<Result<Vec<u8>>>()?;
        x.push(xs);
        y.push(yv);
        z.push(zs);
    }
    if x.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(RawData {
        x_names: x_cols.into_iter().map(|(_, n)| n).collect(),
        z_names: z_cols.into_iter().map(|(_, n)| n).collect(),
        x,
        y,
        z,
    })
}

/// Writes raw rows back out; float formatting is shortest-roundtrip, so a
/// write/read cycle preserves every value exactly.
pub fn write_raw_csv(raw: &RawData, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = raw.x_names.clone();
    header.push("y".to_string());
    header.extend(raw.z_names.iter().cloned());
    wtr.write_record(&header)?;
    for i in 0..raw.rows() {
        let mut rec: Vec<String> = raw.x[i].iter().map(|v| format!("{v}")).collect();
        rec.push(format!("{}", raw.y[i]));
        rec.extend(raw.z[i].iter().map(|v| format!("{v}")));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Largest power of two not exceeding `limit`.
fn floor_pow2(limit: usize) -> usize {
    if limit == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - limit.leading_zeros())
    }
}

/// Shuffles, splits, whitens, clips, and appends the bias column.
///
/// The training split is the largest power of two at most 80% of the rows;
/// everything else is test data. Both splits use training-split whitening
/// moments.
pub fn process(raw: &RawData, seed: u64) -> Result<Dataset> {
    let n_total = raw.rows();
    if n_total == 0 {
        return Err(Error::EmptyFile);
    }
    let d_raw = raw.x_names.len();
    let p = raw.z_names.len();
    let n_train = floor_pow2(n_total * 4 / 5);
    if n_train == 0 {
        return Err(Error::BadShape(format!(
            "{n_total} rows leave no power-of-two training split"
        )));
    }

    let mut order: Vec<usize> = (0..n_total).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // Fisher-Yates, explicit for cross-version stability
    for i in (1..n_total).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    let train_idx = &order[..n_train];
    let test_idx = &order[n_train..];

    // whitening moments from the training split
    let mut mean = vec![0.0; d_raw];
    for &i in train_idx {
        for c in 0..d_raw {
            mean[c] += raw.x[i][c];
        }
    }
    for m in &mut mean {
        *m /= n_train as f64;
    }
    let mut var = vec![0.0; d_raw];
    for &i in train_idx {
        for c in 0..d_raw {
            let dv = raw.x[i][c] - mean[c];
            var[c] += dv * dv;
        }
    }
    let mut std = vec![0.0; d_raw];
    for c in 0..d_raw {
        let v = var[c] / n_train as f64;
        if v < 1e-24 {
            return Err(Error::ZeroVariance(raw.x_names[c].clone()));
        }
        std[c] = v.sqrt();
    }

    let build = |idx: &[usize]| -> DataSplit {
        let d = d_raw + 1;
        let mut x = Vec::with_capacity(idx.len() * d);
        let mut y = Vec::with_capacity(idx.len());
        let mut z = Vec::with_capacity(idx.len() * p);
        for &i in idx {
            for c in 0..d_raw {
                let w = (raw.x[i][c] - mean[c]) / std[c];
                x.push(w.clamp(-CLIP_BOUND, CLIP_BOUND));
            }
            x.push(1.0); // bias, appended after whitening and excluded from it
            y.push(raw.y[i]);
            z.extend_from_slice(&raw.z[i]);
        }
        DataSplit {
            x,
            y,
            z,
            n: idx.len(),
        }
    };

    Ok(Dataset {
        train: build(train_idx),
        test: build(test_idx),
        d: d_raw + 1,
        p,
    })
}

/// Reads and processes a CSV file in one step.
pub fn load_csv(path: &Path, seed: u64) -> Result<Dataset> {
    process(&read_raw_csv(path)?, seed)
}

const SYNTH_MEAN_POS: [f64; 2] = [2.0, 2.0];
const SYNTH_MEAN_NEG: [f64; 2] = [-2.0, -2.0];
// Cholesky factor of the class covariance [[5, 1], [1, 5]]
const SYNTH_CHOL: [f64; 3] = [2.23606797749979, 0.4472135954999579, 2.1908902300206643];

/// Standard normal via Box-Muller (explicit, for bitwise determinism).
fn normal_pair<R: Rng>(rng: &mut R) -> (f64, f64) {
    let u1: f64 = loop {
        let u = rng.gen::<f64>();
        if u > 0.0 {
            break u;
        }
    };
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let t = 2.0 * std::f64::consts::PI * u2;
    (r * t.cos(), r * t.sin())
}

fn gauss_logdensity(x: &[f64; 2], mu: &[f64; 2]) -> f64 {
    // covariance [[5,1],[1,5]]: inverse [[5,-1],[-1,5]]/24
    let d0 = x[0] - mu[0];
    let d1 = x[1] - mu[1];
    -(5.0 * d0 * d0 - 2.0 * d0 * d1 + 5.0 * d1 * d1) / (2.0 * 24.0)
}

/// Synthetic generation: labels are fair coins, features come from two
/// well-separated Gaussians, and the sensitive bit is drawn from the
/// class posterior of a rotated copy of the features, blended toward a
/// fair coin so that `corr(z, y)` rises monotonically with `rho` and is
/// exactly zero at `rho = 0`.
///
/// Generates `n` training rows plus `n/4` test rows (an exact 80/20 split
/// once processed), with `n` a power of two.
pub fn synth_raw(n: usize, rho: f64, seed: u64) -> Result<RawData> {
    if !(0.0..=1.0).contains(&rho) || !rho.is_finite() {
        return Err(Error::BadCorrelation(rho));
    }
    if !n.is_power_of_two() {
        return Err(Error::BadShape(format!("n = {n} must be a power of two")));
    }
    let total = n + n / 4;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let phi = (1.0 - rho) * std::f64::consts::FRAC_PI_2;
    let (cos_phi, sin_phi) = (phi.cos(), phi.sin());

    let mut x = Vec::with_capacity(total);
    let mut y = Vec::with_capacity(total);
    let mut z = Vec::with_capacity(total);
    for _ in 0..total {
        let label = (rng.next_u64() & 1) as u8;
        let (e0, e1) = normal_pair(&mut rng);
        let mu = if label == 1 { SYNTH_MEAN_POS } else { SYNTH_MEAN_NEG };
        let x0 = mu[0] + SYNTH_CHOL[0] * e0;
        let x1 = mu[1] + SYNTH_CHOL[1] * e0 + SYNTH_CHOL[2] * e1;
        // rotate before computing the class posterior used for z
        let r = [cos_phi * x0 - sin_phi * x1, sin_phi * x0 + cos_phi * x1];
        let l1 = gauss_logdensity(&r, &SYNTH_MEAN_POS);
        let l0 = gauss_logdensity(&r, &SYNTH_MEAN_NEG);
        let g = 1.0 / (1.0 + (l0 - l1).exp());
        let q = 0.5 + rho * (g - 0.5);
        let sensitive = (rng.gen::<f64>() < q) as u8;
        x.push(vec![x0, x1]);
        y.push(label);
        z.push(vec![sensitive]);
    }
    Ok(RawData {
        x_names: vec!["x1".into(), "x2".into()],
        z_names: vec!["z1".into()],
        x,
        y,
        z,
    })
}

/// Generates and processes synthetic data; the training split has exactly
/// `n` rows.
pub fn synth(n: usize, rho: f64, seed: u64) -> Result<Dataset> {
    process(&synth_raw(n, rho, seed)?, seed ^ 0x5eed)
}

/// Splits one user's sensitive row into the two encrypted records sent to
/// the modeler and the regulator.
pub fn user_split<R: RngCore>(
    z_row: &[u8],
    frac_bits: u32,
    rng: &mut R,
) -> Result<(Container, Container)> {
    let p = z_row.len();
    let mut modeler = Vec::with_capacity(p);
    let mut regulator = Vec::with_capacity(p);
    for &bit in z_row {
        if bit > 1 {
            return Err(Error::NonBinaryLabel {
                column: "z".into(),
                value: bit as f64,
            });
        }
        let enc = encode(bit as f64, frac_bits)?.raw();
        let mask = rng.next_u64();
        regulator.push(mask);
        modeler.push(enc.wrapping_sub(mask));
    }
    Ok((
        Container::new(
            Party::Modeler.index(),
            ObjectType::ShareMatrix,
            (1, p as u32),
            modeler,
        ),
        Container::new(
            Party::Regulator.index(),
            ObjectType::ShareMatrix,
            (1, p as u32),
            regulator,
        ),
    ))
}

/// Splits every row of a sensitive matrix, producing the two per-party
/// stacked share matrices (the aggregate of all user records).
pub fn split_sensitive_matrix<R: RngCore>(
    z: &[u8],
    n: usize,
    p: usize,
    frac_bits: u32,
    rng: &mut R,
) -> Result<(Share, Share)> {
    assert_eq!(z.len(), n * p);
    let mut modeler = Vec::with_capacity(n * p);
    let mut regulator = Vec::with_capacity(n * p);
    for row in 0..n {
        let (m, r) = user_split(&z[row * p..(row + 1) * p], frac_bits, rng)?;
        modeler.extend_from_slice(&m.data);
        regulator.extend_from_slice(&r.data);
    }
    Ok((
        Share::new(Party::Modeler, RingMatrix::from_vec(n, p, modeler)),
        Share::new(Party::Regulator, RingMatrix::from_vec(n, p, regulator)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::decode;
    use crate::sharing::reconstruct;

    fn toy_raw(rows: usize) -> RawData {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut z = Vec::new();
        for i in 0..rows {
            x.push(vec![i as f64, (i * i) as f64 + 0.5]);
            y.push((i % 2) as u8);
            z.push(vec![(i % 3 == 0) as u8]);
        }
        RawData {
            x_names: vec!["x1".into(), "x2".into()],
            z_names: vec!["z1".into()],
            x,
            y,
            z,
        }
    }

    #[test]
    fn five_rows_subsample_to_four_train() {
        let ds = process(&toy_raw(5), 3).unwrap();
        assert_eq!(ds.train.n, 4);
        assert_eq!(ds.test.n, 1);
        ds.validate().unwrap();
    }

    #[test]
    fn constant_column_is_zero_variance() {
        let mut raw = toy_raw(8);
        for row in &mut raw.x {
            row[1] = 42.0;
        }
        assert!(matches!(process(&raw, 0), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn csv_roundtrip_is_value_identical() {
        let raw = synth_raw(16, 0.7, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        write_raw_csv(&raw, &path).unwrap();
        let back = read_raw_csv(&path).unwrap();
        assert_eq!(back, raw);
    }

    #[test]
    fn csv_rejects_non_binary_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,y,z1\n0.5,2,0\n").unwrap();
        assert!(matches!(
            read_raw_csv(&path),
            Err(Error::NonBinaryLabel { .. })
        ));
    }

    #[test]
    fn csv_rejects_empty_and_unknown_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "x1,y,z1\n").unwrap();
        assert!(matches!(read_raw_csv(&path), Err(Error::EmptyFile)));
        let path2 = dir.path().join("cols.csv");
        std::fs::write(&path2, "x1,y,w\n1,0,0\n").unwrap();
        assert!(matches!(read_raw_csv(&path2), Err(Error::Parse { .. })));
    }

    #[test]
    fn synth_is_seed_deterministic() {
        let a = synth_raw(64, 0.8, 7).unwrap();
        let b = synth_raw(64, 0.8, 7).unwrap();
        assert_eq!(a, b);
        let c = synth_raw(64, 0.8, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_rejects_bad_inputs() {
        assert!(matches!(synth_raw(64, 1.5, 0), Err(Error::BadCorrelation(_))));
        assert!(matches!(synth_raw(65, 0.5, 0), Err(Error::BadShape(_))));
    }

    #[test]
    fn synth_rho_zero_is_uncorrelated() {
        let n = 1 << 12;
        let raw = synth_raw(n, 0.0, 5).unwrap();
        let total = raw.rows() as f64;
        let my: f64 = raw.y.iter().map(|&v| v as f64).sum::<f64>() / total;
        let mz: f64 = raw.z.iter().map(|r| r[0] as f64).sum::<f64>() / total;
        let mut cov = 0.0;
        let mut vy = 0.0;
        let mut vz = 0.0;
        for i in 0..raw.rows() {
            let dy = raw.y[i] as f64 - my;
            let dz = raw.z[i][0] as f64 - mz;
            cov += dy * dz;
            vy += dy * dy;
            vz += dz * dz;
        }
        let corr = cov / (vy.sqrt() * vz.sqrt());
        assert!(corr.abs() <= 0.05, "corr = {corr}");
    }

    #[test]
    fn synth_rho_increases_correlation() {
        let corr_at = |rho: f64| {
            let raw = synth_raw(1 << 11, rho, 9).unwrap();
            let total = raw.rows() as f64;
            let my: f64 = raw.y.iter().map(|&v| v as f64).sum::<f64>() / total;
            let mz: f64 = raw.z.iter().map(|r| r[0] as f64).sum::<f64>() / total;
            let mut cov = 0.0;
            let mut vy = 0.0;
            let mut vz = 0.0;
            for i in 0..raw.rows() {
                let dy = raw.y[i] as f64 - my;
                let dz = raw.z[i][0] as f64 - mz;
                cov += dy * dz;
                vy += dy * dy;
                vz += dz * dz;
            }
            cov / (vy.sqrt() * vz.sqrt())
        };
        let low = corr_at(0.3);
        let high = corr_at(0.8);
        assert!(high > low + 0.1, "low {low}, high {high}");
        assert!(high > 0.5, "rho=0.8 should correlate strongly, got {high}");
    }

    #[test]
    fn user_split_reconstructs_encoding() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (m, r) = user_split(&[1, 0], 16, &mut rng).unwrap();
        assert_eq!(m.data[0].wrapping_add(r.data[0]), 1 << 16);
        assert_eq!(m.data[1].wrapping_add(r.data[1]), 0);
        // z = 0 gives records (-mask, mask)
        assert_eq!(m.data[1], r.data[1].wrapping_neg());
    }

    #[test]
    fn user_split_records_look_uniform() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut ones = [0u64; 64];
        let samples = 10_000;
        for i in 0..samples {
            let (m, _) = user_split(&[(i % 2) as u8], 16, &mut rng).unwrap();
            for (j, slot) in ones.iter_mut().enumerate() {
                *slot += (m.data[0] >> j) & 1;
            }
        }
        let sigma = (samples as f64 * 0.25).sqrt();
        for (j, &c) in ones.iter().enumerate() {
            assert!(
                (c as f64 - samples as f64 / 2.0).abs() <= 4.0 * sigma,
                "bit {j} frequency off: {c}/{samples}"
            );
        }
    }

    #[test]
    fn split_matrix_reconstructs() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let z = [1u8, 0, 0, 1, 1, 1];
        let (s1, s2) = split_sensitive_matrix(&z, 3, 2, 16, &mut rng).unwrap();
        let back = reconstruct(&s1, &s2).unwrap();
        for (i, &zi) in z.iter().enumerate() {
            assert_eq!(decode(back.data()[i], 16), zi as f64);
        }
    }

    #[test]
    fn whitening_and_bias_layout() {
        let ds = synth(64, 0.5, 17).unwrap();
        ds.validate().unwrap();
        assert_eq!(ds.d, 3);
        assert_eq!(ds.train.n, 64);
        assert_eq!(ds.test.n, 16);
        // bias column contributes exactly 1.0 everywhere
        for r in 0..ds.train.n {
            assert_eq!(ds.train.x[r * ds.d + 2], 1.0);
        }
    }
}
