//! Pose-graph factors and their analytic Jacobians.
//!
//! Every factor measures an error pose `E` and uses the chart
//! `e = (t_E, Log R_E)`. Variables are perturbed on the right,
//! `X ← X ⊕ (Exp ω, ρ)`, so the chart derivative at `E` is
//! `D = blockdiag(R_E, Jr⁻¹(Log R_E))`.

use nalgebra::{Cholesky, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{so3_right_jacobian_inv, Mat6, Pose, Vec6};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FactorKind {
    /// `E = z⁻¹ · X`
    Prior { x: usize, z: Pose },
    /// `E = z⁻¹ · Xi⁻¹ · Xj`
    Between { i: usize, j: usize, z: Pose },
    /// `E = z⁻¹ · (Ac·Xi)⁻¹ · (Aq·Xj)`: a loop between two sessions, each
    /// carrying its own anchor.
    Anchored {
        ac: usize,
        xi: usize,
        aq: usize,
        xj: usize,
        z: Pose,
    },
}

/// Cauchy kernel `ρ(s) = c² log(1 + s / c²)` on the whitened squared norm `s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cauchy {
    pub c: f64,
}

impl Cauchy {
    pub fn cost(&self, s: f64) -> f64 {
        let c2 = self.c * self.c;
        c2 * (s / c2).ln_1p()
    }

    /// `ρ'(s)`, the IRLS weight.
    pub fn weight(&self, s: f64) -> f64 {
        1.0 / (1.0 + s / (self.c * self.c))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub kind: FactorKind,
    /// Upper-triangular `W` with `Wᵀ W = information`.
    sqrt_info: Mat6,
    pub robust: Option<Cauchy>,
}

pub struct Linearized {
    /// Whitened residual.
    pub r: Vec6,
    /// Whitened Jacobian blocks, one per variable.
    pub blocks: Vec<(usize, Mat6)>,
}

impl Factor {
    pub fn new(kind: FactorKind, information: &Mat6, robust: Option<Cauchy>) -> Result<Factor> {
        let chol = Cholesky::new(*information).ok_or_else(|| {
            Error::Invalid("factor information matrix is not positive definite".into())
        })?;
        Ok(Factor {
            kind,
            sqrt_info: chol.l().transpose(),
            robust,
        })
    }

    pub fn variables(&self) -> Vec<usize> {
        match self.kind {
            FactorKind::Prior { x, .. } => vec![x],
            FactorKind::Between { i, j, .. } => vec![i, j],
            FactorKind::Anchored { ac, xi, aq, xj, .. } => vec![ac, xi, aq, xj],
        }
    }

    /// Unwhitened error in the `(t, Log R)` chart.
    pub fn error(&self, vars: &[Pose]) -> Vec6 {
        self.error_pose(vars).local_coordinates()
    }

    fn error_pose(&self, vars: &[Pose]) -> Pose {
        match self.kind {
            FactorKind::Prior { x, z } => z.inverse().compose(&vars[x]),
            FactorKind::Between { i, j, z } => {
                z.inverse().compose(&vars[i].inverse().compose(&vars[j]))
            }
            FactorKind::Anchored { ac, xi, aq, xj, z } => {
                let a = vars[ac].compose(&vars[xi]);
                let b = vars[aq].compose(&vars[xj]);
                z.inverse().compose(&a.inverse().compose(&b))
            }
        }
    }

    pub fn whitened(&self, vars: &[Pose]) -> Vec6 {
        self.sqrt_info * self.error(vars)
    }

    /// Robust cost `ρ(|r|²)`, or `|r|²` without a kernel.
    pub fn cost(&self, vars: &[Pose]) -> f64 {
        let s = self.whitened(vars).norm_squared();
        match self.robust {
            Some(k) => k.cost(s),
            None => s,
        }
    }

    /// Unwhitened analytic Jacobians with respect to each variable.
    pub fn jacobians(&self, vars: &[Pose]) -> Vec<(usize, Mat6)> {
        let e = self.error_pose(vars);
        let d = chart_derivative(&e);
        match self.kind {
            FactorKind::Prior { x, .. } => vec![(x, d)],
            FactorKind::Between { i, j, .. } => {
                let rel = vars[j].inverse().compose(&vars[i]);
                vec![(i, -d * rel.adjoint()), (j, d)]
            }
            FactorKind::Anchored { ac, xi, aq, xj, .. } => {
                let a = vars[ac].compose(&vars[xi]);
                let b = vars[aq].compose(&vars[xj]);
                let b_inv = b.inverse();
                vec![
                    (ac, -d * b_inv.compose(&vars[ac]).adjoint()),
                    (xi, -d * b_inv.compose(&a).adjoint()),
                    (aq, d * vars[xj].inverse().adjoint()),
                    (xj, d),
                ]
            }
        }
    }

    /// Whitened residual and Jacobians, reweighted by the kernel.
    pub fn linearize(&self, vars: &[Pose]) -> Linearized {
        let mut r = self.whitened(vars);
        let mut scale = 1.0;
        if let Some(k) = self.robust {
            scale = k.weight(r.norm_squared()).sqrt();
            r *= scale;
        }
        let w = self.sqrt_info * scale;
        let blocks = self
            .jacobians(vars)
            .into_iter()
            .map(|(v, j)| (v, w * j))
            .collect();
        Linearized { r, blocks }
    }
}

fn chart_derivative(e: &Pose) -> Mat6 {
    let phi: Vector3<f64> = e.rotation().scaled_axis();
    let mut d = Mat6::zeros();
    d.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(e.rotation().to_rotation_matrix().matrix());
    d.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&so3_right_jacobian_inv(&phi));
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::relative;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
        Pose::from_xyz_rpy(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-3.0..3.0),
        )
    }

    fn numeric_jacobian(f: &Factor, vars: &[Pose], v: usize) -> Mat6 {
        let h = 1e-6;
        let mut j = Mat6::zeros();
        for k in 0..6 {
            let mut d = Vec6::zeros();
            d[k] = h;
            let mut plus = vars.to_vec();
            plus[v] = vars[v].retract(&d);
            let mut minus = vars.to_vec();
            minus[v] = vars[v].retract(&(-d));
            j.set_column(k, &((f.error(&plus) - f.error(&minus)) / (2.0 * h)));
        }
        j
    }

    #[test]
    fn cauchy_weight_is_cost_derivative() {
        let k = Cauchy { c: 1.0 };
        for s in [0.0, 0.5, 3.0, 40.0] {
            let num =
                (k.cost(s + 1e-6) - k.cost((s - 1e-6).max(0.0))) / (s + 1e-6 - (s - 1e-6).max(0.0));
            assert!((num - k.weight(s)).abs() < 1e-6);
        }
    }

    #[test]
    fn anchored_residual_vanishes_on_consistent_tuples() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let vars: Vec<Pose> = (0..4).map(|_| random_pose(&mut rng)).collect();
            let z = relative(&vars[0].compose(&vars[1]), &vars[2].compose(&vars[3]));
            let f = Factor::new(
                FactorKind::Anchored {
                    ac: 0,
                    xi: 1,
                    aq: 2,
                    xj: 3,
                    z,
                },
                &Mat6::identity(),
                None,
            )
            .unwrap();
            assert!(f.error(&vars).norm() < 1e-9);
        }
    }

    #[test]
    fn analytic_jacobians_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let vars: Vec<Pose> = (0..4).map(|_| random_pose(&mut rng)).collect();
            let near = relative(&vars[0].compose(&vars[1]), &vars[2].compose(&vars[3]));
            // measurement a moderate distance from the current value
            let z = near.retract(&Vec6::from_fn(|_, _| rng.random_range(-0.3..0.3)));
            let kinds = [
                FactorKind::Prior { x: 1, z },
                FactorKind::Between { i: 1, j: 3, z },
                FactorKind::Anchored {
                    ac: 0,
                    xi: 1,
                    aq: 2,
                    xj: 3,
                    z,
                },
            ];
            for kind in kinds {
                let f = Factor::new(kind, &Mat6::identity(), None).unwrap();
                for (v, ja) in f.jacobians(&vars) {
                    let jn = numeric_jacobian(&f, &vars, v);
                    let rel = (ja - jn).norm() / jn.norm().max(1e-12);
                    assert!(rel < 1e-5, "{kind:?} var {v}: relative error {rel}");
                }
            }
        }
    }

    #[test]
    fn whitening_uses_information() {
        let info = Mat6::from_diagonal(&Vec6::new(4.0, 4.0, 4.0, 100.0, 100.0, 100.0));
        let f = Factor::new(
            FactorKind::Prior {
                x: 0,
                z: Pose::identity(),
            },
            &info,
            None,
        )
        .unwrap();
        let vars = [Pose::from_translation(1.0, 0.0, 0.0)];
        assert!((f.cost(&vars) - 4.0).abs() < 1e-12);
        assert!(Factor::new(
            FactorKind::Prior {
                x: 0,
                z: Pose::identity()
            },
            &Mat6::zeros(),
            None
        )
        .is_err());
    }
}
