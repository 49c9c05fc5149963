//! Row-sparse AdamW and the warmup + cosine learning-rate schedule.

use std::collections::{BTreeMap, HashMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied only to rows that receive a gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Gradient restricted to a set of rows of a row-major parameter block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRows {
    pub width: usize,
    pub rows: BTreeMap<usize, Vec<f64>>,
}

impl SparseRows {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            rows: BTreeMap::new(),
        }
    }

    pub fn row_mut(&mut self, row: usize) -> &mut Vec<f64> {
        let width = self.width;
        self.rows.entry(row).or_insert_with(|| vec![0.0; width])
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows.get(&row).map_or(0.0, |r| r[col])
    }

    pub fn add_scaled(&mut self, other: &SparseRows, scale: f64) {
        for (&r, vals) in &other.rows {
            for (a, b) in self.row_mut(r).iter_mut().zip(vals) {
                *a += scale * b;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rows.values().flatten().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with per-row moment state created on first touch. Bias correction
/// uses the global step count.
#[derive(Debug, Clone)]
pub struct LazyAdam {
    cfg: AdamConfig,
    step: u64,
    state: HashMap<usize, Moments>,
}

impl LazyAdam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            state: HashMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to `params` (row-major, `grad.width` columns).
    pub fn step(&mut self, params: &mut [f64], grad: &SparseRows, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        let w = grad.width;
        for (&r, g) in &grad.rows {
            let st = self.state.entry(r).or_insert_with(|| Moments {
                m: vec![0.0; w],
                v: vec![0.0; w],
            });
            let row = &mut params[r * w..(r + 1) * w];
            for j in 0..w {
                st.m[j] = self.cfg.beta1 * st.m[j] + (1.0 - self.cfg.beta1) * g[j];
                st.v[j] = self.cfg.beta2 * st.v[j] + (1.0 - self.cfg.beta2) * g[j] * g[j];
                let m_hat = st.m[j] / bc1;
                let v_hat = st.v[j] / bc2;
                row[j] -= lr * (m_hat / (v_hat.sqrt() + self.cfg.eps) + self.cfg.weight_decay * row[j]);
            }
        }
    }
}

/// Linear warmup over the first `warmup_frac` of steps, then cosine decay
/// to zero. `step` is zero-based.
pub fn warmup_cosine(step: usize, total: usize, base_lr: f64, warmup_frac: f64) -> f64 {
    if total == 0 {
        return base_lr;
    }
    let warmup = ((warmup_frac.clamp(0.0, 1.0) * total as f64).ceil() as usize).min(total);
    if step < warmup {
        return base_lr * (step + 1) as f64 / warmup as f64;
    }
    let span = (total - warmup).max(1) as f64;
    let progress = ((step - warmup) as f64 / span).min(1.0);
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}
