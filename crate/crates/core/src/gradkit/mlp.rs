use rand::Rng;

use super::graph::{Graph, Var};
use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng::standard_normal_vec;

/// Fully connected tanh network whose weights live in a shared [`ParamSet`]
/// under `{prefix}.w{i}` / `{prefix}.b{i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<(usize, usize)>,
    sizes: Vec<usize>,
    tanh_output: bool,
}

impl Mlp {
    /// `sizes = [in, hidden.., out]`. Hidden layers use tanh; the output is
    /// linear unless `tanh_output`. With `zero_output` the last layer starts
    /// at zero. Other weights are N(0, 1/fan_in).
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        sizes: &[usize],
        tanh_output: bool,
        zero_output: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (i, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let last = i + 2 == sizes.len();
            let weights = if last && zero_output {
                vec![0.0; fan_in * fan_out]
            } else {
                let s = 1.0 / (fan_in as f64).sqrt();
                standard_normal_vec(rng, fan_in * fan_out)
                    .into_iter()
                    .map(|v| v * s)
                    .collect()
            };
            let wi = params.insert(format!("{prefix}.w{i}"), Tensor::matrix(fan_in, fan_out, weights)?)?;
            let bi = params.insert(format!("{prefix}.b{i}"), Tensor::zeros(&[fan_out]))?;
            layers.push((wi, bi));
        }
        Ok(Self {
            layers,
            sizes: sizes.to_vec(),
            tanh_output,
        })
    }

    /// Recover a network from a parameter set that already holds its weights.
    pub fn from_params(params: &ParamSet, prefix: &str, tanh_output: bool) -> Result<Self> {
        let mut layers = Vec::new();
        let mut sizes = Vec::new();
        for i in 0.. {
            let (Some(wi), Some(bi)) = (
                params.index_of(&format!("{prefix}.w{i}")),
                params.index_of(&format!("{prefix}.b{i}")),
            ) else {
                break;
            };
            let shape = params.get_index(wi).value.shape();
            if shape.len() != 2 || params.get_index(bi).value.shape() != [shape[1]] {
                return Err(crate::Error::Format(format!("bad shapes for {prefix} layer {i}")));
            }
            if sizes.is_empty() {
                sizes.push(shape[0]);
            } else if *sizes.last().unwrap() != shape[0] {
                return Err(crate::Error::Format(format!("{prefix} layer {i} does not chain")));
            }
            sizes.push(shape[1]);
            layers.push((wi, bi));
        }
        if layers.is_empty() {
            return Err(crate::Error::Format(format!("no layers for {prefix}")));
        }
        Ok(Self {
            layers,
            sizes,
            tanh_output,
        })
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for (i, &(wi, bi)) in self.layers.iter().enumerate() {
            let z = g.matmul(h, vars[wi])?;
            h = g.add(z, vars[bi])?;
            if i + 1 < self.layers.len() || self.tanh_output {
                h = g.tanh(h)?;
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn zero_output_layer_gives_zero() {
        let mut p = ParamSet::new();
        let mut rng = seeded(0);
        let net = Mlp::new(&mut p, "n", &[3, 8, 8, 2], false, true, &mut rng).unwrap();
        let mut g = Graph::new();
        let vars = g.bind(&p).unwrap();
        let x = g.constant(Tensor::ones(&[5, 3])).unwrap();
        let y = net.forward(&mut g, &vars, x).unwrap();
        assert_eq!(g.shape(y), &[5, 2]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rebuilds_from_params() {
        let mut p = ParamSet::new();
        let mut rng = seeded(0);
        let net = Mlp::new(&mut p, "enc", &[2, 4, 6], false, false, &mut rng).unwrap();
        let back = Mlp::from_params(&p, "enc", false).unwrap();
        assert_eq!(net, back);
    }
}
