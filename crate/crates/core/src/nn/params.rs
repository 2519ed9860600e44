/// Read-only view of one named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: &'a [f64],
}

/// Models and their gradient containers expose parameters as an ordered list
/// of flat tensors. The order is stable and shared by optimizers, gradient
/// checking and serialization.
pub trait Parameters {
    fn param_views(&self) -> Vec<ParamView<'_>>;

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    /// Restores any constraint the parameters must satisfy after an update.
    fn project(&mut self) {}

    fn num_params(&self) -> usize {
        self.param_views().iter().map(|v| v.values.len()).sum()
    }

    fn is_finite(&self) -> bool {
        self.param_views().iter().all(|v| v.values.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor.
    fn axpy(&mut self, scale: f64, other: &Self)
    where
        Self: Sized,
    {
        let src: Vec<Vec<f64>> = other.param_views().into_iter().map(|v| v.values.to_vec()).collect();
        for (dst, s) in self.param_slices_mut().into_iter().zip(src) {
            dst.iter_mut().zip(s).for_each(|(d, s)| *d += scale * s);
        }
    }
}

/// Euclidean projection onto the probability simplex
/// `{x : x_i >= 0, sum x_i = 1}` (sort-based, deterministic).
pub fn project_to_simplex(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
    // Renormalise to absorb rounding so the sum is 1 to machine precision.
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        v.iter_mut().for_each(|x| *x /= sum);
    } else {
        let n = v.len() as f64;
        v.iter_mut().for_each(|x| *x = 1.0 / n);
    }
}
