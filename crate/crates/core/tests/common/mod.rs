//! Reference implementations and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srp::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Six nested loops over output and kernel positions.
pub fn naive_conv2d(
    x: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    k: &[f64],
    (f, kh, kw): (usize, usize, usize),
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * f * ho * wo];
    for s in 0..n {
        for o in 0..f {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let iy = (oy * stride + ki) as isize - pad as isize;
                                let ix = (ox * stride + kj) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x[((s * c + ci) * h + iy as usize) * w + ix as usize]
                                    * k[((o * c + ci) * kh + ki) * kw + kj];
                            }
                        }
                    }
                    out[((s * f + o) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    (out, ho, wo)
}

pub fn naive_matmul(a: &[f64], b: &[f64], n: usize, d: usize, e: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * e];
    for i in 0..n {
        for j in 0..e {
            for t in 0..d {
                out[i * e + j] += a[i * d + t] * b[t * e + j];
            }
        }
    }
    out
}

/// Marks cells covered by any square, then averages those cells of every
/// channel by walking the whole grid.
pub fn brute_force_region_mean(
    plane: &[f64],
    h: usize,
    w: usize,
    positions: &[(usize, usize)],
    rh: usize,
    rw: usize,
) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..h {
        for j in 0..w {
            let covered = positions
                .iter()
                .any(|&(pi, pj)| i >= pi && i < pi + rh && j >= pj && j < pj + rw);
            if covered {
                sum += plane[i * w + j];
                count += 1;
            }
        }
    }
    sum / count as f64
}

/// Expected covered fraction of `M` independent uniformly placed squares:
/// a cell is missed by one square with probability `1 - p_cell`.
pub fn exact_expected_area_ratio(h: usize, w: usize, rh: usize, rw: usize, m: usize) -> f64 {
    let positions = ((h - rh + 1) * (w - rw + 1)) as f64;
    let mut total = 0.0;
    for i in 0..h {
        for j in 0..w {
            let rows = (0..=h - rh).filter(|&pi| i >= pi && i < pi + rh).count();
            let cols = (0..=w - rw).filter(|&pj| j >= pj && j < pj + rw).count();
            let p = (rows * cols) as f64 / positions;
            total += 1.0 - (1.0 - p).powi(m as i32);
        }
    }
    total / (h * w) as f64
}

/// Independent Monte-Carlo estimate of the covered fraction using a plain
/// xorshift generator and bit-set unions, with the sample variance.
pub fn mc_area_ratio(
    h: usize,
    w: usize,
    rh: usize,
    rw: usize,
    m: usize,
    trials: usize,
    seed: u64,
) -> (f64, f64) {
    let mut state = seed | 1;
    let mut next = |bound: usize| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state % bound as u64) as usize
    };
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..trials {
        let mut covered = vec![0u64; h];
        for _ in 0..m {
            let i = next(h - rh + 1);
            let j = next(w - rw + 1);
            let bits = ((1u64 << rw) - 1) << j;
            for row in &mut covered[i..i + rh] {
                *row |= bits;
            }
        }
        let r = covered.iter().map(|r| r.count_ones()).sum::<u32>() as f64 / (h * w) as f64;
        sum += r;
        sq += r * r;
    }
    let mean = sum / trials as f64;
    (mean, (sq / trials as f64 - mean * mean).max(0.0))
}

/// Pearson chi-square statistic of observed counts against a uniform law.
pub fn chi_square_uniform(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// Upper critical value of chi-square with `dof` degrees of freedom at
/// significance `alpha`.
pub fn chi_square_critical(dof: usize, alpha: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(dof as f64).unwrap().inverse_cdf(1.0 - alpha)
}

/// Exact mean covered fraction by walking every ordered tuple of `m`
/// positions. Needs `h * w <= 64`.
pub fn enumerated_area_ratio(h: usize, w: usize, rh: usize, rw: usize, m: usize) -> f64 {
    assert!(h * w <= 64);
    let mut squares = Vec::new();
    for i in 0..=h - rh {
        for j in 0..=w - rw {
            let mut bits = 0u64;
            for r in i..i + rh {
                for c in j..j + rw {
                    bits |= 1 << (r * w + c);
                }
            }
            squares.push(bits);
        }
    }
    fn walk(squares: &[u64], depth: usize, acc: u64) -> u64 {
        if depth == 0 {
            return acc.count_ones() as u64;
        }
        squares.iter().map(|&s| walk(squares, depth - 1, acc | s)).sum()
    }
    let covered = walk(&squares, m, 0) as f64;
    covered / (squares.len() as f64).powi(m as i32) / (h * w) as f64
}

/// `n` CIFAR-format records. Labels cycle through the ten classes and each
/// image is noise plus a class-dependent tint, so the classes are learnable.
pub fn synthetic_records(n: usize, seed: u64) -> Vec<u8> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(n * 3073);
    for i in 0..n {
        let label = (i % 10) as u8;
        out.push(label);
        for c in 0..3 {
            let tint = (40 + 20 * ((label as usize + c * 3) % 10)) as i32;
            for _ in 0..1024 {
                let v = tint + r.random_range(-30i32..30);
                out.push(v.clamp(0, 255) as u8);
            }
        }
    }
    out
}

/// A CIFAR binary directory with `per_file` records in each training batch
/// file and `test` records in the test file.
pub fn write_cifar_dir(dir: &std::path::Path, per_file: usize, test: usize) {
    for (k, name) in srp::harness::data::TRAIN_FILES.iter().enumerate() {
        std::fs::write(dir.join(name), synthetic_records(per_file, k as u64)).unwrap();
    }
    std::fs::write(
        dir.join(srp::harness::data::TEST_FILE),
        synthetic_records(test, 99),
    )
    .unwrap();
}
