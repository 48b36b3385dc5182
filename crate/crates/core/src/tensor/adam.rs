use super::{NdArray, TensorError};

/// A named trainable array together with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: NdArray,
    pub grad: Option<NdArray>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: NdArray) -> Self {
        Self {
            name: name.into(),
            value,
            grad: None,
        }
    }

    pub fn accumulate_grad(&mut self, g: &NdArray) {
        match &mut self.grad {
            Some(existing) => existing.add_assign(g),
            None => self.grad = Some(g.clone()),
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.fill(0.0);
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step_count: u64,
    m: Vec<NdArray>,
    v: Vec<NdArray>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to every parameter and zeroes their gradients.
    ///
    /// Fails without touching anything if a parameter has no gradient or the
    /// parameter list changed shape since the first step.
    pub fn step(&mut self, params: &mut [Parameter]) -> Result<(), TensorError> {
        for p in params.iter() {
            if p.grad.is_none() {
                return Err(TensorError::MissingGradient { name: p.name.clone() });
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| NdArray::zeros(p.value.shape())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len()
            || self.m.iter().zip(params.iter()).any(|(m, p)| m.shape() != p.value.shape())
        {
            return Err(TensorError::OptimizerState {
                expected: self.m.len(),
                found: params.len(),
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad.as_ref().expect("checked above").data();
            let (b1, b2) = (self.beta1, self.beta2);
            for (((w, m), v), &g) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g)
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}
