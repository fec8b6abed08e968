use crate::error::Result;
use crate::numerics::{standard_normal_tensor, RngState, Tensor};

/// Named parameter traversal, used for weight files and parameter counting.
///
/// Names are dotted paths (`layers.0.attn.q.weight`); visiting order is fixed
/// by the implementation and identical for `visit` and `visit_mut`.
pub trait Params {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));
}

pub(crate) fn join_name(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn param_count(p: &dyn Params) -> usize {
    let mut n = 0;
    p.visit("", &mut |_, t| n += t.numel());
    n
}

/// Normal(0, std²) tensor drawn from `rng`.
pub fn normal_tensor(rng: &mut RngState, shape: &[usize], std: f32) -> Result<Tensor> {
    let t = standard_normal_tensor(rng, shape)?;
    let data = t.into_data().into_iter().map(|v| v * std).collect();
    Tensor::new(shape.to_vec(), data)
}

impl<T: Params> Params for Vec<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, item) in self.iter().enumerate() {
            item.visit(&join_name(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, item) in self.iter_mut().enumerate() {
            item.visit_mut(&join_name(prefix, &i.to_string()), f);
        }
    }
}

impl<T: Params> Params for Option<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        if let Some(inner) = self {
            inner.visit(prefix, f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        if let Some(inner) = self {
            inner.visit_mut(prefix, f);
        }
    }
}

/// Implements [`Params`] for a struct by listing its fields in order.
macro_rules! impl_params {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::nn::Params for $ty {
            fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &$crate::numerics::Tensor)) {
                $( $crate::nn::ParamField::visit_field(&self.$field, prefix, stringify!($field), f); )*
            }
            fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut $crate::numerics::Tensor)) {
                $( $crate::nn::ParamField::visit_field_mut(&mut self.$field, prefix, stringify!($field), f); )*
            }
        }
    };
}
pub(crate) use impl_params;

/// A struct field that is either a bare tensor or a nested [`Params`].
pub trait ParamField {
    fn visit_field(&self, prefix: &str, name: &str, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_field_mut(&mut self, prefix: &str, name: &str, f: &mut dyn FnMut(&str, &mut Tensor));
}

impl ParamField for Tensor {
    fn visit_field(&self, prefix: &str, name: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join_name(prefix, name), self);
    }

    fn visit_field_mut(&mut self, prefix: &str, name: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join_name(prefix, name), self);
    }
}

impl<P: Params> ParamField for P {
    fn visit_field(&self, prefix: &str, name: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.visit(&join_name(prefix, name), f);
    }

    fn visit_field_mut(&mut self, prefix: &str, name: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.visit_mut(&join_name(prefix, name), f);
    }
}
