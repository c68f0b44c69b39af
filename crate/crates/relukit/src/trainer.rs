//! Deterministic back-propagation training for two-layer ReLU networks,
//! plus the range-normalized fitting error and the builtin experiment
//! datasets.
//!
//! Training is plain pattern-by-pattern gradient descent: each step sweeps
//! the dataset once in its stored order and applies one update per sample on
//! the squared error `0.5 * (y_hat - y)^2`, with no momentum, weight decay,
//! shuffling or early stopping. All parameters are initialized i.i.d.
//! uniform from the seeded counter generator, filled in the order unit 0
//! (w..., b, lambda), unit 1, ...; the subgradient at the ReLU kink is taken
//! as 0. Identical seed and config give bitwise-identical networks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{ReluNetwork, ReluUnit};
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at step {step}")]
    Diverged { step: usize, report: Box<FitReport> },
    #[error("relative error undefined: targets are constant")]
    ConstantTargets,
    #[error("unknown builtin function {0}")]
    UnknownBuiltin(String),
    #[error("step must divide 1 evenly, got {0}")]
    BadStep(f64),
    #[error("dataset is empty or inconsistent")]
    BadDataset,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub units: usize,
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
    pub init_low: f64,
    pub init_high: f64,
}

impl TrainConfig {
    pub fn new(units: usize, lr: f64, steps: usize, seed: u64) -> Self {
        TrainConfig {
            units,
            lr,
            steps,
            seed,
            init_low: -1.0,
            init_high: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self, TrainError> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(TrainError::BadDataset);
        }
        let n = inputs[0].len();
        if n == 0 || inputs.iter().any(|x| x.len() != n) {
            return Err(TrainError::BadDataset);
        }
        if targets.iter().chain(inputs.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(TrainError::BadDataset);
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn dimension(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Fitting summary. `epsilon` is the range-normalized root mean squared
/// error; the loss curve is decimated to at most ~1000 entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub epsilon: f64,
    pub z_max: f64,
    pub z_min: f64,
    pub samples: usize,
    #[serde(default)]
    pub loss_curve: Vec<f64>,
}

/// Range-normalized RMSE: `sqrt(mean((z - z_hat)^2)) / (z_max - z_min)`.
pub fn relative_error(targets: &[f64], predictions: &[f64]) -> Result<f64, TrainError> {
    assert_eq!(targets.len(), predictions.len());
    assert!(!targets.is_empty());
    let z_max = targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z_min = targets.iter().cloned().fold(f64::INFINITY, f64::min);
    if z_max - z_min == 0.0 {
        return Err(TrainError::ConstantTargets);
    }
    let mse: f64 = targets
        .iter()
        .zip(predictions)
        .map(|(z, p)| (z - p) * (z - p))
        .sum::<f64>()
        / targets.len() as f64;
    Ok(mse.sqrt() / (z_max - z_min))
}

fn init_network(n: usize, cfg: &TrainConfig) -> ReluNetwork {
    let mut rng = SplitMix64::new(cfg.seed);
    let mut units = Vec::with_capacity(cfg.units);
    for _ in 0..cfg.units {
        let w: Vec<f64> = (0..n).map(|_| rng.uniform(cfg.init_low, cfg.init_high)).collect();
        let b = rng.uniform(cfg.init_low, cfg.init_high);
        let lambda = rng.uniform(cfg.init_low, cfg.init_high);
        units.push(ReluUnit::new(w, b, lambda));
    }
    ReluNetwork::new(n, units)
}

/// Mean squared error with the 1/2 convention (the reported loss).
pub fn loss(net: &ReluNetwork, data: &Dataset) -> f64 {
    let mse: f64 = data
        .inputs
        .iter()
        .zip(&data.targets)
        .map(|(x, z)| {
            let e = net.eval(x) - z;
            e * e
        })
        .sum::<f64>()
        / data.len() as f64;
    0.5 * mse
}

/// Gradient of `0.5 (net(x) - z)^2` for one sample, accumulated into `grad`
/// with weight `scale`, in parameter order (unit 0: w..., b, lambda; ...).
fn accumulate_sample_gradient(
    net: &ReluNetwork,
    x: &[f64],
    z: f64,
    scale: f64,
    grad: &mut [f64],
) {
    let n = net.n;
    let err = (net.eval(x) - z) * scale;
    for (u, unit) in net.units.iter().enumerate() {
        let pre = unit.preactivation(x);
        let base = u * (n + 2);
        if pre > 0.0 {
            for d in 0..n {
                grad[base + d] += err * unit.lambda * x[d];
            }
            grad[base + n] += err * unit.lambda;
            grad[base + n + 1] += err * pre;
        }
    }
}

/// Analytic gradient of [`loss`] in parameter order (unit 0: w..., b,
/// lambda; unit 1: ...). The per-sample update inside [`train`] uses the
/// same formula with a single sample.
pub fn loss_gradient(net: &ReluNetwork, data: &Dataset) -> Vec<f64> {
    let n = net.n;
    let mut grad = vec![0.0; net.units.len() * (n + 2)];
    let inv = 1.0 / data.len() as f64;
    for (x, z) in data.inputs.iter().zip(&data.targets) {
        accumulate_sample_gradient(net, x, *z, inv, &mut grad);
    }
    grad
}

/// Pattern-by-pattern gradient descent: `cfg.steps` full sweeps over the
/// dataset in its stored order, one update per sample.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<(ReluNetwork, FitReport), TrainError> {
    assert!(cfg.init_low < cfg.init_high, "invalid init range");
    let n = data.dimension();
    let mut net = init_network(n, cfg);
    let stride = (cfg.steps / 1000).max(1);
    let mut loss_curve = Vec::with_capacity(cfg.steps / stride + 2);
    for step in 0..cfg.steps {
        if step % stride == 0 {
            let l = loss(&net, data);
            if !l.is_finite() {
                let report = FitReport {
                    epsilon: f64::INFINITY,
                    z_max: data.targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    z_min: data.targets.iter().cloned().fold(f64::INFINITY, f64::min),
                    samples: data.len(),
                    loss_curve,
                };
                return Err(TrainError::Diverged { step, report: Box::new(report) });
            }
            loss_curve.push(l);
        }
        for (x, z) in data.inputs.iter().zip(&data.targets) {
            let err = net.eval(x) - z;
            if !err.is_finite() {
                let report = FitReport {
                    epsilon: f64::INFINITY,
                    z_max: data.targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    z_min: data.targets.iter().cloned().fold(f64::INFINITY, f64::min),
                    samples: data.len(),
                    loss_curve,
                };
                return Err(TrainError::Diverged { step, report: Box::new(report) });
            }
            for unit in net.units.iter_mut() {
                let pre = unit.preactivation(x);
                if pre > 0.0 {
                    let lambda = unit.lambda;
                    for d in 0..n {
                        unit.w[d] -= cfg.lr * err * lambda * x[d];
                    }
                    unit.b -= cfg.lr * err * lambda;
                    unit.lambda -= cfg.lr * err * pre;
                }
            }
        }
    }
    loss_curve.push(loss(&net, data));

    let predictions: Vec<f64> = data.inputs.iter().map(|x| net.eval(x)).collect();
    if predictions.iter().any(|p| !p.is_finite()) {
        let report = FitReport {
            epsilon: f64::INFINITY,
            z_max: data.targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            z_min: data.targets.iter().cloned().fold(f64::INFINITY, f64::min),
            samples: data.len(),
            loss_curve,
        };
        return Err(TrainError::Diverged { step: cfg.steps, report: Box::new(report) });
    }
    let epsilon = relative_error(&data.targets, &predictions)?;
    let report = FitReport {
        epsilon,
        z_max: data.targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        z_min: data.targets.iter().cloned().fold(f64::INFINITY, f64::min),
        samples: data.len(),
        loss_curve,
    };
    Ok((net, report))
}

/// Builtin experiment functions on the unit box.
pub fn builtin(name: &str) -> Result<fn(&[f64]) -> f64, TrainError> {
    match name {
        "poly16" | "poly" => Ok(|x| 16.0 * x.iter().map(|v| v * v * v).sum::<f64>() + 3.0),
        "sinsum" => Ok(|x| (3.0 * (x.iter().sum::<f64>() + 1.0)).sin() + 3.0),
        // The 2D paraboloid centered at (0.6, 0.3); centers alternate for
        // other dimensions.
        "quad" => Ok(|x| {
            x.iter()
                .enumerate()
                .map(|(i, v)| {
                    let c = if i % 2 == 0 { 0.6 } else { 0.3 };
                    (v - c) * (v - c)
                })
                .sum()
        }),
        other => Err(TrainError::UnknownBuiltin(other.to_string())),
    }
}

/// Lattice discretization of a builtin function with the given step.
pub fn make_dataset(name: &str, n: usize, step: f64) -> Result<Dataset, TrainError> {
    let f = builtin(name)?;
    let per_axis_f = 1.0 / step;
    let per_axis = per_axis_f.round();
    if step <= 0.0 || (per_axis_f - per_axis).abs() > 1e-9 {
        return Err(TrainError::BadStep(step));
    }
    let k = per_axis as usize + 1;
    let mut inputs = Vec::with_capacity(k.pow(n as u32));
    let mut idx = vec![0usize; n];
    loop {
        inputs.push(idx.iter().map(|&i| i as f64 * step).collect::<Vec<f64>>());
        let mut d = 0;
        loop {
            if d == n {
                let targets = inputs.iter().map(|x| f(x)).collect();
                return Dataset::new(inputs, targets);
            }
            idx[d] += 1;
            if idx[d] < k {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_examples() {
        let t = vec![0.0, 0.5, 1.0];
        assert_eq!(relative_error(&t, &t).unwrap(), 0.0);
        let shifted: Vec<f64> = t.iter().map(|v| v + 0.1).collect();
        assert!((relative_error(&t, &shifted).unwrap() - 0.1).abs() < 1e-12);
        assert!(matches!(
            relative_error(&[2.0, 2.0], &[2.0, 2.0]),
            Err(TrainError::ConstantTargets)
        ));
    }

    #[test]
    fn poly16_lattice() {
        let data = make_dataset("poly16", 2, 0.1).unwrap();
        assert_eq!(data.len(), 121);
        let at_one_one = data
            .inputs
            .iter()
            .position(|x| x == &vec![1.0, 1.0])
            .unwrap();
        assert_eq!(data.targets[at_one_one], 35.0);
    }

    #[test]
    fn quad_minimum_and_sinsum_origin() {
        let quad = builtin("quad").unwrap();
        assert_eq!(quad(&[0.6, 0.3]), 0.0);
        let sinsum = builtin("sinsum").unwrap();
        assert!((sinsum(&[0.0, 0.0]) - (3.0f64.sin() + 3.0)).abs() < 1e-15);
        assert!(matches!(
            builtin("nope"),
            Err(TrainError::UnknownBuiltin(_))
        ));
    }

    #[test]
    fn bad_step_rejected() {
        assert!(matches!(make_dataset("quad", 1, 0.3), Err(TrainError::BadStep(_))));
    }

    #[test]
    fn training_is_deterministic() {
        let data = make_dataset("quad", 1, 0.1).unwrap();
        let cfg = TrainConfig::new(4, 0.05, 200, 9);
        let (a, _) = train(&data, &cfg).unwrap();
        let (b, _) = train(&data, &cfg).unwrap();
        for (ua, ub) in a.units.iter().zip(&b.units) {
            assert_eq!(ua.b.to_bits(), ub.b.to_bits());
            assert_eq!(ua.lambda.to_bits(), ub.lambda.to_bits());
            for (x, y) in ua.w.iter().zip(&ub.w) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn loss_decreases_for_small_lr() {
        let data = make_dataset("quad", 1, 0.05).unwrap();
        let cfg = TrainConfig::new(6, 1e-4, 500, 3);
        let (net, report) = train(&data, &cfg).unwrap();
        assert!(report.loss_curve.last().unwrap() < report.loss_curve.first().unwrap());
        assert!(loss(&net, &data).is_finite());
    }

    #[test]
    fn oversized_learning_rate_kills_every_unit() {
        // Moderately oversized rates do not overflow: the lambda oscillation
        // pushes every bias down until all units are dead, leaving the
        // constant-zero network. The run must stay finite.
        let data = make_dataset("poly16", 2, 0.1).unwrap();
        let cfg = TrainConfig::new(8, 10.0, 2000, 0);
        let (net, report) = train(&data, &cfg).unwrap();
        assert!(report.epsilon.is_finite());
        assert!(data.inputs.iter().all(|x| net.eval(x) == 0.0));
    }

    #[test]
    fn overflow_divergence_is_reported_not_panicked() {
        let data = make_dataset("poly16", 2, 0.1).unwrap();
        let cfg = TrainConfig::new(8, 1e160, 2000, 0);
        match train(&data, &cfg) {
            Err(TrainError::Diverged { step, report }) => {
                assert!(step <= 10);
                assert!(!report.loss_curve.iter().any(|l| !l.is_finite()));
            }
            Ok((_, report)) => panic!("expected divergence, got epsilon {}", report.epsilon),
            Err(other) => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = make_dataset("quad", 2, 0.25).unwrap();
        let mut rng = SplitMix64::new(0xFEED);
        let mut checked = 0;
        'outer: while checked < 10 {
            let cfg = TrainConfig::new(5, 0.0, 0, rng.next_u64());
            let (net, _) = train(&data, &cfg).unwrap();
            // Reject parameter points with any sample near a ReLU kink.
            for unit in &net.units {
                for x in &data.inputs {
                    if unit.preactivation(x).abs() < 1e-4 {
                        continue 'outer;
                    }
                }
            }
            let analytic = loss_gradient(&net, &data);
            let h = 1e-6;
            let mut fd = Vec::with_capacity(analytic.len());
            let n = net.n;
            for u in 0..net.units.len() {
                for d in 0..=n + 1 {
                    let mut plus = net.clone();
                    let mut minus = net.clone();
                    for (m, s) in [(&mut plus, h), (&mut minus, -h)] {
                        let unit = &mut m.units[u];
                        if d < n {
                            unit.w[d] += s;
                        } else if d == n {
                            unit.b += s;
                        } else {
                            unit.lambda += s;
                        }
                    }
                    fd.push((loss(&plus, &data) - loss(&minus, &data)) / (2.0 * h));
                }
            }
            let diff: f64 = analytic
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-8);
            assert!(diff / scale < 1e-4, "gradient mismatch {}", diff / scale);
            checked += 1;
        }
    }
}
