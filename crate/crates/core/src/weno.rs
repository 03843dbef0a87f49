//! Hermite WENO reconstruction from von Neumann neighbors and the resulting
//! smoothness sensor `gamma_e`.

use serde::{Deserialize, Serialize};

use crate::basis::MultiIndexSet;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::mesh::Side;
use crate::scalar::Real;
use crate::space::{FeSpace, LocalPolynomial};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    Classical,
    Residual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WenoConfig<T> {
    /// Linear weight of every neighbor stencil; the central stencil gets the
    /// remainder.
    pub neighbor_weight: T,
    pub r: i32,
    pub epsilon: T,
    pub delta: T,
    pub theta: T,
    /// Sensor exponent.
    pub q: T,
    /// Indicator exponent; `None` selects 2 in 1D and 1 in 2D.
    pub q_beta: Option<T>,
    pub mode: WeightMode,
    pub seminorm: MultiIndexSet,
}

impl<T: Real> Default for WenoConfig<T> {
    fn default() -> Self {
        Self {
            neighbor_weight: T::lit(1e-3),
            r: 2,
            epsilon: T::lit(1e-6),
            delta: T::lit(1e-6),
            theta: T::zero(),
            q: T::one(),
            q_beta: None,
            mode: WeightMode::Classical,
            seminorm: MultiIndexSet::TotalDegree,
        }
    }
}

impl<T: Real> WenoConfig<T> {
    pub fn residual(theta: T) -> Self {
        Self {
            theta,
            mode: WeightMode::Residual,
            ..Self::default()
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.neighbor_weight >= T::zero()) || self.linear_weights(2 * dim).is_err() {
            return bad("linear weights must be nonnegative with a positive central weight");
        }
        if self.r < 1 {
            return bad("r must be a positive integer");
        }
        if !(self.epsilon > T::zero()) || !(self.delta > T::zero()) {
            return bad("epsilon and delta must be positive");
        }
        if !(self.theta >= T::zero()) {
            return bad("theta must be nonnegative");
        }
        if !(self.q > T::zero()) || self.q_beta.is_some_and(|qb| !(qb > T::zero())) {
            return bad("exponents q and q_beta must be positive");
        }
        Ok(())
    }

    pub fn q_beta_for(&self, dim: usize) -> T {
        self.q_beta
            .unwrap_or(if dim == 1 { T::two() } else { T::one() })
    }

    /// `(w_0, w_1, ..., w_m)` for `m` neighbor stencils.
    pub fn linear_weights(&self, m: usize) -> Result<Vec<T>> {
        let w0 = T::one() - T::count(m) * self.neighbor_weight;
        if !(w0 > T::zero()) || self.neighbor_weight < T::zero() {
            return Err(Error::InvalidParameter(format!(
                "central linear weight {w0} is not positive for {m} neighbors"
            )));
        }
        let mut w = vec![self.neighbor_weight; m + 1];
        w[0] = w0;
        Ok(w)
    }
}

/// Candidate polynomials `u_{h,l}^e`: the element's own polynomial followed
/// by the mean-corrected extension of each face neighbor. The second vector
/// holds the neighbor index of candidate `l >= 1` at position `l - 1`.
pub fn build_candidates<T: Real>(
    space: &FeSpace<T>,
    u: &[T],
    e: usize,
) -> (Vec<LocalPolynomial<T>>, Vec<usize>) {
    let mut ws = Workspace::new(space);
    ws.load(space, u, e);
    let cands = ws
        .cands
        .iter()
        .take(ws.m + 1)
        .map(|c| LocalPolynomial {
            element: e,
            coeffs: c.clone(),
        })
        .collect();
    (cands, ws.neighbors[..ws.m].to_vec())
}

pub fn smoothness_indicator<T: Real>(
    space: &FeSpace<T>,
    candidate: &[T],
    q_beta: T,
    set: MultiIndexSet,
) -> T {
    let n = space.local_seminorm(candidate, set);
    if n == T::zero() {
        T::zero()
    } else {
        n.powf(q_beta)
    }
}

fn normalize<T: Real>(linear: &[T], numer: &[T], beta: &[T], eps: T, r: i32) -> Vec<T> {
    let smin = beta.iter().fold(T::infinity(), |m, b| m.min(eps + *b));
    let nmax = numer.iter().fold(T::zero(), |m, x| m.max(*x));
    let mut w: Vec<T> = linear
        .iter()
        .zip(numer)
        .zip(beta)
        .map(|((l, n), b)| {
            let ratio = smin / (eps + *b);
            let num = if nmax > T::zero() { *n / nmax } else { T::zero() };
            *l * num * ratio.powi(r)
        })
        .collect();
    let sum: T = w.iter().copied().sum();
    if !(sum > T::zero()) || !sum.is_finite() {
        w.iter_mut().for_each(|x| *x = T::zero());
        w[0] = T::one();
        return w;
    }
    w.iter_mut().for_each(|x| *x /= sum);
    w
}

/// Smoothness-based nonlinear weights.
pub fn classical_weights<T: Real>(cfg: &WenoConfig<T>, linear: &[T], beta: &[T]) -> Vec<T> {
    let ones = vec![T::one(); beta.len()];
    normalize(linear, &ones, beta, cfg.epsilon, cfg.r)
}

/// Residual-gated nonlinear weights. `r_neighbors[j - 1]` is the residual of
/// the neighbor that defines stencil `j`.
pub fn residual_weights<T: Real>(
    cfg: &WenoConfig<T>,
    linear: &[T],
    beta: &[T],
    r_e: T,
    r_neighbors: &[T],
) -> Vec<T> {
    let mut numer = Vec::with_capacity(beta.len());
    numer.push(r_e + cfg.delta);
    for rn in r_neighbors {
        numer.push((r_e - cfg.theta * *rn).max(T::zero()));
    }
    normalize(linear, &numer, beta, cfg.epsilon, cfg.r)
}

/// Convex combination of candidate coefficient vectors.
pub fn reconstruct<T: Real>(candidates: &[LocalPolynomial<T>], weights: &[T]) -> LocalPolynomial<T> {
    let n = candidates[0].coeffs.len();
    let mut c = vec![T::zero(); n];
    for (cand, w) in candidates.iter().zip(weights) {
        if *w == T::zero() {
            continue;
        }
        for i in 0..n {
            c[i] += *w * cand.coeffs[i];
        }
    }
    LocalPolynomial {
        element: candidates[0].element,
        coeffs: c,
    }
}

/// `gamma_e = 1 - min(1, ||u - u*||_e / ||u||_e)^q`, and 1 for locally
/// constant `u`.
pub fn smoothness_sensor<T: Real>(
    space: &FeSpace<T>,
    u_e: &[T],
    u_star: &[T],
    q: T,
    set: MultiIndexSet,
) -> T {
    let den = space.local_seminorm(u_e, set);
    if den == T::zero() {
        return T::one();
    }
    let diff: Vec<T> = u_e.iter().zip(u_star).map(|(a, b)| *a - *b).collect();
    let num = space.local_seminorm(&diff, set);
    let ratio = (num / den).min(T::one());
    if ratio == T::zero() {
        T::one()
    } else {
        T::one() - ratio.powf(q)
    }
}

#[derive(Clone, Debug)]
pub struct WenoContext<T> {
    pub element: usize,
    /// Neighbor defining stencil `l`, `l >= 1` (position `l - 1`).
    pub neighbors: Vec<usize>,
    pub candidates: Vec<LocalPolynomial<T>>,
    pub linear_weights: Vec<T>,
    pub beta: Vec<T>,
    pub weights: Vec<T>,
    pub reconstruction: LocalPolynomial<T>,
    pub gamma: T,
}

/// Reusable buffers for per-element reconstructions.
struct Workspace<T> {
    m: usize,
    neighbors: [usize; 4],
    sides: [usize; 4],
    cands: Vec<Vec<T>>,
    nb: Vec<T>,
    ustar: Vec<T>,
    diff: Vec<T>,
}

impl<T: Real> Workspace<T> {
    fn new(space: &FeSpace<T>) -> Self {
        let n = space.n_loc();
        Self {
            m: 0,
            neighbors: [0; 4],
            sides: [0; 4],
            cands: vec![vec![T::zero(); n]; 5],
            nb: vec![T::zero(); n],
            ustar: vec![T::zero(); n],
            diff: vec![T::zero(); n],
        }
    }

    fn load(&mut self, space: &FeSpace<T>, u: &[T], e: usize) {
        let k = space.kernels();
        let n = space.n_loc();
        space.gather_into(u, e, &mut self.cands[0]);
        let mean0 = dot(&k.mean_weights, &self.cands[0]);
        self.m = 0;
        for (si, side) in Side::for_dim(space.dim()).iter().enumerate() {
            let Some(nb) = space.mesh().neighbor(e, *side) else {
                continue;
            };
            self.m += 1;
            let l = self.m;
            self.neighbors[l - 1] = nb;
            self.sides[l - 1] = si;
            space.gather_into(u, nb, &mut self.nb);
            let ext = &k.extension[si];
            for i in 0..n {
                self.cands[l][i] = dot(ext.row(i), &self.nb);
            }
            let shift = mean0 - dot(&k.mean_weights, &self.cands[l]);
            self.cands[l].iter_mut().for_each(|c| *c += shift);
        }
    }

    /// Fills `beta` and `weights` for the loaded element and returns gamma.
    fn evaluate(
        &mut self,
        space: &FeSpace<T>,
        cfg: &WenoConfig<T>,
        e: usize,
        residuals: Option<&[T]>,
        beta: &mut Vec<T>,
        weights: &mut Vec<T>,
    ) -> Result<T> {
        let m = self.m;
        let q_beta = cfg.q_beta_for(space.dim());
        let linear = cfg.linear_weights(m)?;
        beta.clear();
        for l in 0..=m {
            beta.push(smoothness_indicator(space, &self.cands[l], q_beta, cfg.seminorm));
        }
        *weights = match (cfg.mode, residuals) {
            (WeightMode::Classical, _) => classical_weights(cfg, &linear, beta),
            (WeightMode::Residual, Some(res)) => {
                let rn: Vec<T> = self.neighbors[..m].iter().map(|&nb| res[nb]).collect();
                residual_weights(cfg, &linear, beta, res[e], &rn)
            }
            (WeightMode::Residual, None) => {
                return Err(Error::InvalidParameter(
                    "residual weights need element residuals".into(),
                ))
            }
        };
        let n = self.ustar.len();
        self.ustar.iter_mut().for_each(|c| *c = T::zero());
        for l in 0..=m {
            let w = weights[l];
            if w == T::zero() {
                continue;
            }
            for i in 0..n {
                self.ustar[i] += w * self.cands[l][i];
            }
        }
        for i in 0..n {
            self.diff[i] = self.cands[0][i];
        }
        Ok(smoothness_sensor(
            space,
            &self.diff,
            &self.ustar,
            cfg.q,
            cfg.seminorm,
        ))
    }
}

/// Full reconstruction data of one element. `residuals` holds `R^e` for
/// every element and is required in residual mode.
pub fn weno_context<T: Real>(
    space: &FeSpace<T>,
    u: &[T],
    e: usize,
    cfg: &WenoConfig<T>,
    residuals: Option<&[T]>,
) -> Result<WenoContext<T>> {
    if e >= space.num_elements() {
        return Err(Error::IndexOutOfRange {
            index: e,
            len: space.num_elements(),
        });
    }
    let mut ws = Workspace::new(space);
    ws.load(space, u, e);
    let (mut beta, mut weights) = (Vec::new(), Vec::new());
    let gamma = ws.evaluate(space, cfg, e, residuals, &mut beta, &mut weights)?;
    let m = ws.m;
    Ok(WenoContext {
        element: e,
        neighbors: ws.neighbors[..m].to_vec(),
        candidates: ws.cands[..=m]
            .iter()
            .map(|c| LocalPolynomial {
                element: e,
                coeffs: c.clone(),
            })
            .collect(),
        linear_weights: cfg.linear_weights(m)?,
        beta,
        weights,
        reconstruction: LocalPolynomial {
            element: e,
            coeffs: ws.ustar.clone(),
        },
        gamma,
    })
}

/// `gamma_e` for every element.
pub fn sensor_field<T: Real>(
    space: &FeSpace<T>,
    u: &[T],
    cfg: &WenoConfig<T>,
    residuals: Option<&[T]>,
) -> Result<Vec<T>> {
    let mut ws = Workspace::new(space);
    let (mut beta, mut weights) = (Vec::new(), Vec::new());
    (0..space.num_elements())
        .map(|e| {
            ws.load(space, u, e);
            ws.evaluate(space, cfg, e, residuals, &mut beta, &mut weights)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use crate::space::Continuity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dg_square(p: usize, n: usize) -> FeSpace<f64> {
        let m = Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, n, n, false).unwrap();
        FeSpace::new(m, Continuity::Dg, p).unwrap()
    }

    #[test]
    fn candidates_of_linear_field_coincide() {
        let s = dg_square(1, 3);
        let u = s.interpolate(|x| 0.5 + 2.0 * x[0] - x[1]);
        let (c, nb) = build_candidates(&s, &u, 4);
        assert_eq!(nb.len(), 4);
        for cand in &c[1..] {
            for (a, b) in cand.coeffs.iter().zip(&c[0].coeffs) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn mean_corrected_candidate_1d() {
        let m = Mesh::<f64>::build_uniform_line(0.0, 1.0, 2, false).unwrap();
        let s = FeSpace::new(m, Continuity::Dg, 1).unwrap();
        // element 0: constant 2; element 1: slope 3
        let u = vec![2.0, 2.0, 0.0, 1.5];
        let (c, _) = build_candidates(&s, &u, 0);
        let cand = &c[1];
        assert!((cand.mean(&s) - 2.0).abs() < 1e-14);
        let slope = cand.eval(&s, [0.0, 0.0], [1, 0]).unwrap();
        assert!((slope - 3.0).abs() < 1e-13);
    }

    #[test]
    fn candidates_preserve_mean_and_derivatives_q2() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = dg_square(2, 3);
        let u: Vec<f64> = (0..s.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (c, nb) = build_candidates(&s, &u, 4);
        let mean = s.cell_mean(&u, 4);
        for (l, cand) in c.iter().enumerate().skip(1) {
            assert!((cand.mean(&s) - mean).abs() < 1e-12);
            let own = s.local(&u, nb[l - 1]);
            let xi = [0.3, -0.2];
            let side = Side::ALL.iter().find(|sd| s.mesh().neighbor(4, **sd) == Some(nb[l - 1])).unwrap();
            let (dx, dy) = side.offset();
            let xi_nb = [xi[0] - 2.0 * dx as f64, xi[1] - 2.0 * dy as f64];
            for k in [[1, 0], [0, 1], [1, 1], [2, 0]] {
                let a = cand.eval(&s, xi, k).unwrap();
                let b = own.eval(&s, xi_nb, k).unwrap();
                assert!((a - b).abs() < 1e-10, "{k:?}: {a} {b}");
            }
        }
    }

    #[test]
    fn classical_weight_examples() {
        let cfg = WenoConfig::<f64>::default();
        let w = classical_weights(&cfg, &[0.6, 0.2, 0.2], &[0.3, 0.3, 0.3]);
        assert!((w[0] - 0.6).abs() < 1e-15 && (w[1] - 0.2).abs() < 1e-15);
        let w = classical_weights(&cfg, &[0.999, 0.001], &[0.0, 1e6]);
        let ratio = w[1] / w[0];
        // (0.001 / 0.999) * (1e-6 / (1e6 + 1e-6))^2
        let expected = (0.001 / 0.999) * (1e-6f64 / (1e6 + 1e-6)).powi(2);
        assert!((ratio - expected).abs() < 1e-12 * expected);
        assert!((w[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn residual_weight_examples() {
        let cfg = WenoConfig::<f64>::residual(1.0);
        let w = residual_weights(&cfg, &[0.998, 0.001, 0.001], &[1.0, 0.0, 0.0], 0.0, &[5.0, 7.0]);
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
        let w = residual_weights(&cfg, &[0.998, 0.001, 0.001], &[0.0, 0.0, 0.0], 2.0, &[3.0, 1.0]);
        assert_eq!(w[1], 0.0);
        assert!(w[2] > 0.0);
        let cfg0 = WenoConfig::<f64>::residual(0.0);
        let beta = [0.4, 0.1, 2.0];
        let lin = [0.998, 0.001, 0.001];
        let rw = residual_weights(&cfg0, &lin, &beta, 0.5, &[0.5, 0.5]);
        let cw = classical_weights(&cfg0, &lin, &beta);
        // the only difference is the (R + delta) / R factor on w_0
        let f = (0.5 + 1e-6) / 0.5;
        let w0 = cw[0] * f / (cw[0] * f + cw[1] + cw[2]);
        assert!((rw[0] - w0).abs() < 1e-14);
    }

    #[test]
    fn sensor_examples() {
        let m = Mesh::<f64>::build_uniform_line(0.0, 1.0, 4, false).unwrap();
        let s = FeSpace::new(m, Continuity::Dg, 1).unwrap();
        let u = [0.0, 1.0];
        assert_eq!(smoothness_sensor(&s, &u, &u, 1.0, MultiIndexSet::TotalDegree), 1.0);
        assert_eq!(smoothness_sensor(&s, &u, &[0.5, 0.5], 1.0, MultiIndexSet::TotalDegree), 0.0);
        let g = smoothness_sensor(&s, &u, &[0.125, 0.875], 1.0, MultiIndexSet::TotalDegree);
        assert!((g - 0.75).abs() < 1e-14);
        assert_eq!(smoothness_sensor(&s, &[3.0, 3.0], &[0.0, 1.0], 1.0, MultiIndexSet::TotalDegree), 1.0);
    }

    #[test]
    fn context_is_convex_and_mean_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s = dg_square(2, 4);
        let u: Vec<f64> = (0..s.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let res: Vec<f64> = (0..s.num_elements()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let field = sensor_field(&s, &u, &WenoConfig::residual(1.0), Some(&res)).unwrap();
        for e in 0..s.num_elements() {
            let ctx = weno_context(&s, &u, e, &WenoConfig::residual(1.0), Some(&res)).unwrap();
            assert_eq!(ctx.gamma, field[e]);
            assert!((ctx.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!((ctx.reconstruction.mean(&s) - s.cell_mean(&u, e)).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&ctx.gamma));
        }
        assert!(sensor_field(&s, &u, &WenoConfig::residual(1.0), None).is_err());
    }

    #[test]
    fn linear_weight_validation() {
        let cfg = WenoConfig::<f64> {
            neighbor_weight: 0.3,
            ..Default::default()
        };
        assert!(cfg.linear_weights(4).is_err());
        assert!(cfg.validate(2).is_err());
        let kpp = WenoConfig::<f64> {
            neighbor_weight: 0.2,
            ..Default::default()
        };
        assert!(kpp.validate(2).is_ok());
        let bad = WenoConfig::<f64> {
            theta: -1.0,
            ..Default::default()
        };
        assert!(bad.validate(1).is_err());
    }
}
