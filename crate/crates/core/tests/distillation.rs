use std::ops::Range;

use lm2d::consistency::{cd_loss, cd_train_step, draw_cd, sample_onestep_packed, CdDraw, DistillConfig, DistillState};
use lm2d::diffusion::{pack, DenoiserModel, DiffusionSchedule, Example};
use lm2d::nn::{AdamConfig, NetworkConfig};
use lm2d::sampling::{DeltaDenoiser, Denoise};
use lm2d::{Matrix, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Exact posterior mean for data split evenly between -1 and +1.
struct TwoPoints;

impl Denoise<f64> for TwoPoints {
    fn denoise(&self, z: &Matrix<f64>, t: f64, _cond: Option<&Matrix<f64>>, _segments: &[Range<usize>]) -> Result<Matrix<f64>> {
        Ok(z.map(|v| (v / (t * t)).tanh()))
    }
}

fn student(seed: u64, lr: f64) -> DistillState<f64> {
    let init = DenoiserModel::new(NetworkConfig::mlp(1, 32, 2), 0.5, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let config = DistillConfig { adam: AdamConfig { learning_rate: lr, ..Default::default() }, ..Default::default() };
    DistillState::new(&init, &DiffusionSchedule::default(), config).unwrap()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for k in i..=j {
            r[idx[k]] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn spearman_helper_cases() {
    assert_eq!(ranks(&[3.0, 1.0, 2.0, 1.0]), vec![3.0, 0.5, 2.0, 0.5]);
    let up: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
    let idx: Vec<f64> = (0..10).map(|i| i as f64).collect();
    assert!((pearson(&ranks(&up), &idx) - 1.0).abs() < 1e-12);
}

#[test]
fn delta_data_distills_to_its_point() {
    let c = 0.7;
    let teacher = DeltaDenoiser { target: vec![c] };
    let mut state = student(1, 1e-3);
    let x = Matrix::scalar(c);
    let batch = vec![Example { motion: &x, cond: None, id: "delta" }; 16];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..8000 {
        cd_train_step(&mut state, &teacher, &batch, &mut rng).unwrap();
    }
    let n = 1000;
    let segs: Vec<_> = (0..n).map(|i| i..i + 1).collect();
    let out = sample_onestep_packed(&state.target_model(), n, 1, None, &segs, 80.0, 3).unwrap();
    // Far tail draws of z_T leave the trained input range, so the bound is on the mean.
    let mean = out.data().iter().map(|v| (v - c).abs()).sum::<f64>() / n as f64;
    assert!(mean < 1e-2, "mean one-step error {mean}");
}

#[test]
fn validation_loss_trends_down() {
    let mut state = student(4, 3e-4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n_grid = state.model.schedule().n_grid;

    let val_x: Vec<Matrix<f64>> = (0..256).map(|i| Matrix::scalar(if i % 2 == 0 { 1.0 } else { -1.0 })).collect();
    let val_batch: Vec<Example<'_, f64>> = val_x.iter().map(|x| Example { motion: x, cond: None, id: "val" }).collect();
    let val = pack(&val_batch).unwrap();
    let mut draw = draw_cd(&val, n_grid, &mut ChaCha8Rng::seed_from_u64(6));
    draw.lower = (0..val_x.len()).map(|i| i % (n_grid - 1)).collect();
    let draw: CdDraw<f64> = draw;

    let (steps, every, window) = (1500, 10, 10);
    let mut history = Vec::new();
    for step in 0..steps {
        if step % every == 0 {
            history.push(cd_loss(&state, &TwoPoints, &val, &draw, false).unwrap().0);
        }
        let xs: Vec<Matrix<f64>> = (0..32).map(|_| Matrix::scalar(if rng.random_bool(0.5) { 1.0 } else { -1.0 })).collect();
        let batch: Vec<Example<'_, f64>> = xs.iter().map(|x| Example { motion: x, cond: None, id: "toy" }).collect();
        cd_train_step(&mut state, &TwoPoints, &batch, &mut rng).unwrap();
    }
    // Moving average over 100 training steps.
    let smooth: Vec<f64> = history.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect();
    let idx: Vec<f64> = (0..smooth.len()).map(|i| i as f64).collect();
    let rho = pearson(&ranks(&smooth), &idx);
    let m = smooth.len() as f64;
    let t = rho * ((m - 2.0) / (1.0 - rho * rho)).sqrt();
    let p = StudentsT::new(0.0, 1.0, m - 2.0).unwrap().cdf(t);
    assert!(rho < 0.0 && p < 0.01, "rho {rho} p {p}; loss {} -> {}", smooth[0], smooth[smooth.len() - 1]);
}
