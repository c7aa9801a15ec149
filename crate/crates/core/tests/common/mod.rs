#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssf::nn::{grad_check, CheckLoss, GradCheckConfig, GradCheckReport, LayerSpec, Objective, Sequential, SequentialObjective, Tensor};
use ssf::SegmentationMask;

/// Straightforward double-loop reference: for each category, count its
/// pixels, then average their 1-based coordinates, then average squared
/// deviations from that mean. Returns row-major `L × 5`.
pub fn naive_ssf(mask: &SegmentationMask) -> Vec<f64> {
    let (h, w, l) = (mask.height(), mask.width(), mask.num_categories());
    let mut out = vec![0.0; l * 5];
    for cat in 1..=l as u16 {
        let mut n = 0usize;
        let (mut sx, mut sy) = (0.0, 0.0);
        for i in 0..h {
            for j in 0..w {
                if mask.get(i, j) == cat {
                    n += 1;
                    sx += (j + 1) as f64;
                    sy += (i + 1) as f64;
                }
            }
        }
        if n == 0 {
            continue;
        }
        let (mx, my) = (sx / n as f64, sy / n as f64);
        let (mut vx, mut vy) = (0.0, 0.0);
        for i in 0..h {
            for j in 0..w {
                if mask.get(i, j) == cat {
                    vx += ((j + 1) as f64 - mx).powi(2);
                    vy += ((i + 1) as f64 - my).powi(2);
                }
            }
        }
        let row = &mut out[(cat as usize - 1) * 5..cat as usize * 5];
        row[0] = n as f64 / (h * w) as f64;
        row[1] = mx / w as f64;
        row[2] = my / h as f64;
        row[3] = (vx / n as f64).sqrt() / w as f64;
        row[4] = (vy / n as f64).sqrt() / h as f64;
    }
    out
}

/// Random mask with void value 0 at roughly `void_density` of the pixels.
pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, l: usize, void_density: f64) -> SegmentationMask {
    let data = (0..h * w)
        .map(|_| {
            if rng.gen_bool(void_density) {
                0
            } else {
                rng.gen_range(1..=l as u16)
            }
        })
        .collect();
    SegmentationMask::new(h, w, l, Some(0), data).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Gradient check of a random `Sequential` built from `specs`, inputs
/// included, under a random linear projection of the output.
pub fn check_layers(specs: &[LayerSpec], input_shape: &[usize], seed: u64) -> GradCheckReport {
    let mut rng = rng(seed);
    let net = Sequential::new(specs, &mut rng).unwrap();
    let out_len: usize = net.output_shape(input_shape).unwrap().iter().product();
    let input = Tensor::from_fn(input_shape, |_| {
        let v: f64 = rng.gen_range(0.1..1.0);
        if rng.gen_bool(0.5) { v } else { -v }
    });
    let mut obj = SequentialObjective {
        net,
        input,
        loss: CheckLoss::Projection((0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect()),
        check_input: true,
    };
    // move biases off zero so ReLU inputs avoid the kink
    for b in 1..obj.block_names().len() {
        if obj.block_names()[b].ends_with("bias") {
            for v in obj.block_mut(b) {
                *v = rng.gen_range(-0.2..0.2);
            }
        }
    }
    grad_check(&mut obj, &GradCheckConfig::default()).unwrap()
}

/// Doubling the analytic gradient must be caught.
pub struct Doubled<O>(pub O);

impl<O: Objective> Objective for Doubled<O> {
    fn block_names(&self) -> Vec<String> {
        self.0.block_names()
    }
    fn block_mut(&mut self, b: usize) -> &mut [f64] {
        self.0.block_mut(b)
    }
    fn loss(&self) -> ssf::Result<f64> {
        self.0.loss()
    }
    fn loss_and_grads(&mut self) -> ssf::Result<(f64, Vec<Vec<f64>>)> {
        let (l, g) = self.0.loss_and_grads()?;
        Ok((l, g.into_iter().map(|b| b.into_iter().map(|v| 2.0 * v).collect()).collect()))
    }
}
