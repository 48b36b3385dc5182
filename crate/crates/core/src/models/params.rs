use crate::tensor::{NdArray, Parameter, Tape, Tensor};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// Ordered, named parameters of a model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

/// Tape handles of every parameter for one forward pass.
#[derive(Debug, Clone)]
pub struct Bindings {
    tensors: Vec<Tensor>,
}

impl Bindings {
    pub fn get(&self, id: ParamId) -> Tensor {
        self.tensors[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: NdArray) -> ParamId {
        self.params.push(Parameter::new(name, value));
        ParamId(self.params.len() - 1)
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Total number of scalar weights.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Registers every parameter on `tape`; those for which `trainable`
    /// returns false become constants.
    pub fn bind(&self, tape: &mut Tape, trainable: impl Fn(&str) -> bool) -> Bindings {
        let tensors = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), trainable(&p.name)))
            .collect();
        Bindings { tensors }
    }

    /// Adds the gradients found on `tape` to the stored parameters. Frozen
    /// parameters get an explicit zero gradient so the optimizer sees a
    /// complete set.
    pub fn collect_grads(&mut self, tape: &Tape, bindings: &Bindings) {
        for (p, &t) in self.params.iter_mut().zip(&bindings.tensors) {
            match tape.grad(t) {
                Some(g) => p.accumulate_grad(g),
                None => {
                    if p.grad.is_none() {
                        p.grad = Some(NdArray::zeros(p.value.shape()));
                    }
                }
            }
        }
    }

    /// Replaces values by name, checking names and shapes match exactly.
    pub fn load(&mut self, named: Vec<(String, NdArray)>) -> Result<(), super::ModelError> {
        if named.len() != self.params.len() {
            return Err(super::ModelError::ParamCount {
                expected: self.params.len(),
                found: named.len(),
            });
        }
        for (p, (name, value)) in self.params.iter_mut().zip(named) {
            if p.name != name || p.value.shape() != value.shape() {
                return Err(super::ModelError::ParamMismatch {
                    name,
                    expected: p.name.clone(),
                });
            }
            p.value = value;
            p.grad = None;
        }
        Ok(())
    }
}
