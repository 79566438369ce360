use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push_op(value, &[a, b], || {
            Box::new(|g, needs| vec![needs[0].then(|| g.clone()), needs[1].then(|| g.clone())])
        })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push_op(value, &[a, b], || {
            Box::new(|g, needs| vec![needs[0].then(|| g.clone()), needs[1].then(|| g.map(|v| -v))])
        })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value_rc(a), self.value_rc(b));
        let value = av.zip_map(&bv, |x, y| x * y);
        self.push_op(value, &[a, b], move || {
            Box::new(move |g, needs| {
                vec![needs[0].then(|| g.zip_map(&bv, |d, y| d * y)), needs[1].then(|| g.zip_map(&av, |d, x| d * x))]
            })
        })
    }

    /// `mul * a + add`.
    pub fn affine(&mut self, a: Var, mul: f64, add: f64) -> Var {
        let value = self.value(a).map(|x| mul * x + add);
        self.push_op(value, &[a], move || Box::new(move |g, _| vec![Some(g.map(|d| d * mul))]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, 0.0)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let av = self.value_rc(a);
        let value = av.map(|x| if x > 0.0 { x } else { slope * x });
        self.push_op(value, &[a], move || {
            Box::new(move |g, _| vec![Some(g.zip_map(&av, |d, x| if x > 0.0 { d } else { slope * d }))])
        })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        let out = std::rc::Rc::new(value.clone());
        self.push_op(value, &[a], move || Box::new(move |g, _| vec![Some(g.zip_map(&out, |d, y| d * y * (1.0 - y)))]))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let out = std::rc::Rc::new(value.clone());
        self.push_op(value, &[a], move || Box::new(move |g, _| vec![Some(g.zip_map(&out, |d, y| d * (1.0 - y * y)))]))
    }

    /// `ln(clamp(a, lo, hi))`; the gradient is zero where the clamp is active.
    pub fn ln_clamped(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let av = self.value_rc(a);
        let value = av.map(|x| x.clamp(lo, hi).ln());
        self.push_op(value, &[a], move || {
            Box::new(move |g, _| vec![Some(g.zip_map(&av, |d, x| if x < lo || x > hi { 0.0 } else { d / x }))])
        })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let shape = self.value(a).shape().to_vec();
        let value = Tensor::scalar(self.value(a).sum());
        self.push_op(value, &[a], move || Box::new(move |g, _| vec![Some(Tensor::full(&shape, g.item()))]))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Mean squared difference, reduced to a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value_rc(a), self.value_rc(b));
        assert_eq!(av.shape(), bv.shape(), "mse shape mismatch");
        let n = av.len() as f64;
        let sq: f64 = av.data().iter().zip(bv.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        self.push_op(Tensor::scalar(sq / n), &[a, b], move || {
            Box::new(move |g, needs| {
                let k = 2.0 * g.item() / n;
                let diff = av.zip_map(&bv, |x, y| k * (x - y));
                vec![needs[0].then(|| diff.clone()), needs[1].then(|| diff.map(|v| -v))]
            })
        })
    }

    /// Forward value `replacement`, backward identity to `a`.
    pub fn straight_through(&mut self, a: Var, replacement: Tensor) -> Var {
        assert_eq!(self.value(a).shape(), replacement.shape(), "straight_through shape mismatch");
        self.push_op(replacement, &[a], || Box::new(|g, _| vec![Some(g.clone())]))
    }

    /// Reinterpret the shape without moving data.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let in_shape = self.value(a).shape().to_vec();
        let value = self.value(a).clone().reshape(shape);
        self.push_op(value, &[a], move || Box::new(move |g, _| vec![Some(g.clone().reshape(&in_shape))]))
    }
}
