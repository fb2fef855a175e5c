//! Pad-and-crop translation, horizontal mirroring and mixup.

use rand::{Rng, RngExt};
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};

use super::config::AugmentConfig;

pub const PAD: usize = 4;

/// Crop of the zero-padded `[C, side, side]` image whose top-left corner is
/// `(dy, dx)` in padded coordinates, each in `0..=2*PAD`.
pub fn crop_with_offset(img: &[f32], channels: usize, side: usize, dy: usize, dx: usize) -> Vec<f32> {
    let mut out = vec![0.0; img.len()];
    for c in 0..channels {
        let plane = &img[c * side * side..(c + 1) * side * side];
        let dst = &mut out[c * side * side..(c + 1) * side * side];
        for i in 0..side {
            let src_i = (i + dy) as isize - PAD as isize;
            if src_i < 0 || src_i >= side as isize {
                continue;
            }
            for j in 0..side {
                let src_j = (j + dx) as isize - PAD as isize;
                if src_j >= 0 && src_j < side as isize {
                    dst[i * side + j] = plane[src_i as usize * side + src_j as usize];
                }
            }
        }
    }
    out
}

pub fn hflip(img: &mut [f32], side: usize) {
    for row in img.chunks_exact_mut(side) {
        row.reverse();
    }
}

/// Uniform crop offset in `0..=2*PAD` along each axis.
pub fn crop_offset<R: Rng + ?Sized>(rng: &mut R) -> (usize, usize) {
    (rng.random_range(0..=2 * PAD), rng.random_range(0..=2 * PAD))
}

/// Applies the enabled translation and mirroring to one image.
pub fn augment<R: Rng + ?Sized>(
    img: &[f32],
    channels: usize,
    side: usize,
    rng: &mut R,
    flags: &AugmentConfig,
) -> Vec<f32> {
    let mut out = if flags.crop {
        let (dy, dx) = crop_offset(rng);
        crop_with_offset(img, channels, side, dy, dx)
    } else {
        img.to_vec()
    };
    if flags.flip && rng.random_bool(0.5) {
        hflip(&mut out, side);
    }
    out
}

/// `λ·x_i + (1-λ)·x_perm(i)` for every sample of a flattened batch.
pub fn mix_with(batch: &[f32], sample_len: usize, perm: &[usize], lambda: f32) -> Vec<f32> {
    let mut out = Vec::with_capacity(batch.len());
    for (i, &j) in perm.iter().enumerate() {
        let a = &batch[i * sample_len..(i + 1) * sample_len];
        let b = &batch[j * sample_len..(j + 1) * sample_len];
        out.extend(a.iter().zip(b).map(|(&x, &y)| lambda * x + (1.0 - lambda) * y));
    }
    out
}

/// Mixed batch with its pairing and coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixed {
    pub data: Vec<f32>,
    pub perm: Vec<usize>,
    pub lambda: f64,
}

pub fn sample_mixup_lambda<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> Result<f64> {
    let beta = Beta::new(alpha, alpha)
        .map_err(|e| Error::config(format!("mixup alpha {alpha}: {e}")))?;
    Ok(beta.sample(rng))
}

/// Draws one coefficient per batch from `Beta(α, α)` and a random pairing.
pub fn mixup<R: Rng + ?Sized>(
    rng: &mut R,
    batch: &[f32],
    sample_len: usize,
    alpha: f64,
) -> Result<Mixed> {
    let n = batch.len() / sample_len;
    let lambda = sample_mixup_lambda(rng, alpha)?;
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    let data = mix_with(batch, sample_len, &perm, lambda as f32);
    Ok(Mixed { data, perm, lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn image(side: usize) -> Vec<f32> {
        (0..2 * side * side).map(|v| v as f32).collect()
    }

    #[test]
    fn centered_crop_is_identity() {
        let img = image(6);
        assert_eq!(crop_with_offset(&img, 2, 6, PAD, PAD), img);
    }

    #[test]
    fn crop_shifts_and_zero_fills() {
        let img = image(6);
        let out = crop_with_offset(&img, 2, 6, PAD + 1, PAD);
        assert_eq!(&out[..6], &img[6..12]);
        assert!(out[30..36].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flags_off_is_identity_and_double_flip_undoes() {
        let img = image(5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let off = AugmentConfig {
            crop: false,
            flip: false,
            ..AugmentConfig::default()
        };
        assert_eq!(augment(&img, 2, 5, &mut rng, &off), img);
        let mut f = img.clone();
        hflip(&mut f, 5);
        assert_ne!(f, img);
        hflip(&mut f, 5);
        assert_eq!(f, img);
    }

    #[test]
    fn mix_edge_cases() {
        let batch = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(mix_with(&batch, 2, &[1, 0], 1.0), batch);
        let same = vec![5.0, 5.0, 5.0, 5.0];
        assert_eq!(mix_with(&same, 2, &[1, 0], 0.5), same);
    }
}
