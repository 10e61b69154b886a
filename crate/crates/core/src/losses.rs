//! Permutation-invariant spatial and temporal losses with analytic gradients.
//!
//! All losses are sums over points. Gradients are taken with respect to the
//! generated positions and treat the assignment as fixed. Temporal losses
//! reuse the plan solved at the center frame and carry it to the neighboring
//! frames through the index correspondence of the targets.

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::transport::AssignmentPlan;

/// Denominator guard for the mingling loss.
pub const MINGLING_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Weight of the EMD velocity term.
    pub gamma: f64,
    /// Weight of the EMD acceleration term.
    pub mu: f64,
    /// Weight of the mingling term.
    pub nu: f64,
}

impl LossWeights {
    pub const BASE_2D: Self = Self {
        gamma: 10.0,
        mu: 10.0,
        nu: 0.001,
    };
    pub const BASE_3D: Self = Self {
        gamma: 5.0,
        mu: 5.0,
        nu: 0.001,
    };

    pub fn new(gamma: f64, mu: f64, nu: f64) -> Result<Self> {
        if [gamma, mu, nu].iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config(format!(
                "loss weights must be non-negative, got ({gamma}, {mu}, {nu})"
            )));
        }
        Ok(Self { gamma, mu, nu })
    }
}

/// Loss value plus one gradient per generated frame argument, in argument order.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grads: Vec<Vec<f64>>,
}

impl LossValue {
    fn zeros(value: f64, lens: &[usize]) -> Self {
        Self {
            value,
            grads: lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Gradient of a single-frame loss.
    pub fn gradient(&self) -> &[f64] {
        &self.grads[0]
    }
}

/// Consecutive blocks of `group_size` generated points; the last block may
/// be shorter when the cloud length is not a multiple of the group size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupView {
    group_size: usize,
    len: usize,
}

impl GroupView {
    pub fn new(group_size: usize, len: usize) -> Self {
        Self { group_size, len }
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn n_groups(&self) -> usize {
        if self.group_size == 0 {
            usize::from(self.len > 0)
        } else {
            self.len.div_ceil(self.group_size)
        }
    }

    pub fn groups(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let r = self.group_size;
        (0..self.n_groups()).map(move |g| (g * r)..((g + 1) * r).min(self.len))
    }
}

fn check_plan(plan: &AssignmentPlan, gen: &PointCloud, target: &PointCloud) -> Result<()> {
    if plan.n_source() != gen.len() || plan.n_target() != target.len() {
        return Err(Error::PlanMismatch(format!(
            "plan is {}->{}, clouds are {}->{}",
            plan.n_source(),
            plan.n_target(),
            gen.len(),
            target.len()
        )));
    }
    Ok(())
}

fn check_same_len(clouds: &[&PointCloud]) -> Result<()> {
    let n = clouds[0].len();
    let d = clouds[0].dim();
    if clouds.iter().any(|c| c.len() != n || c.dim() != d) {
        let lens: Vec<usize> = clouds.iter().map(|c| c.len()).collect();
        return Err(Error::SizeMismatch(format!("frame sizes {lens:?}")));
    }
    Ok(())
}

/// Spatial EMD loss: sum of squared distances under the plan.
pub fn loss_spatial(gen: &PointCloud, target: &PointCloud, plan: &AssignmentPlan) -> Result<LossValue> {
    check_plan(plan, gen, target)?;
    let d = gen.dim();
    let mut out = LossValue::zeros(0.0, &[gen.len() * d]);
    for &(i, j) in plan.pairs() {
        let (g, t) = (gen.point(i), target.point(j));
        for a in 0..d {
            let diff = g[a] - t[a];
            out.value += diff * diff;
            out.grads[0][i * d + a] += 2.0 * diff;
        }
    }
    Ok(out)
}

/// Squared displacement of generated points between t and t+1.
pub fn loss_l2_velocity(gen_t: &PointCloud, gen_t1: &PointCloud) -> Result<LossValue> {
    check_same_len(&[gen_t, gen_t1])?;
    let n = gen_t.positions().len();
    let mut out = LossValue::zeros(0.0, &[n, n]);
    for (k, (a, b)) in gen_t.positions().iter().zip(gen_t1.positions()).enumerate() {
        let diff = b - a;
        out.value += diff * diff;
        out.grads[0][k] = -2.0 * diff;
        out.grads[1][k] = 2.0 * diff;
    }
    Ok(out)
}

/// Squared second difference of generated points over t-1, t, t+1.
pub fn loss_l2_acceleration(gen_tm1: &PointCloud, gen_t: &PointCloud, gen_t1: &PointCloud) -> Result<LossValue> {
    check_same_len(&[gen_tm1, gen_t, gen_t1])?;
    let n = gen_t.positions().len();
    let mut out = LossValue::zeros(0.0, &[n, n, n]);
    let (p0, p1, p2) = (gen_tm1.positions(), gen_t.positions(), gen_t1.positions());
    for k in 0..n {
        let acc = p2[k] - 2.0 * p1[k] + p0[k];
        out.value += acc * acc;
        out.grads[0][k] = 2.0 * acc;
        out.grads[1][k] = -4.0 * acc;
        out.grads[2][k] = 2.0 * acc;
    }
    Ok(out)
}

/// Generated motion against the motion of the matched targets.
pub fn loss_emd_velocity(
    gen_t: &PointCloud,
    gen_t1: &PointCloud,
    tgt_t: &PointCloud,
    tgt_t1: &PointCloud,
    plan_t: &AssignmentPlan,
) -> Result<LossValue> {
    check_same_len(&[gen_t, gen_t1])?;
    check_same_len(&[tgt_t, tgt_t1])?;
    check_plan(plan_t, gen_t, tgt_t)?;
    let d = gen_t.dim();
    let n = gen_t.len() * d;
    let mut out = LossValue::zeros(0.0, &[n, n]);
    for &(i, j) in plan_t.pairs() {
        let (g0, g1) = (gen_t.point(i), gen_t1.point(i));
        let (y0, y1) = (tgt_t.point(j), tgt_t1.point(j));
        for a in 0..d {
            let diff = (g1[a] - g0[a]) - (y1[a] - y0[a]);
            out.value += diff * diff;
            out.grads[0][i * d + a] -= 2.0 * diff;
            out.grads[1][i * d + a] += 2.0 * diff;
        }
    }
    Ok(out)
}

/// Generated second difference against that of the matched targets.
#[allow(clippy::too_many_arguments)]
pub fn loss_emd_acceleration(
    gen_tm1: &PointCloud,
    gen_t: &PointCloud,
    gen_t1: &PointCloud,
    tgt_tm1: &PointCloud,
    tgt_t: &PointCloud,
    tgt_t1: &PointCloud,
    plan_t: &AssignmentPlan,
) -> Result<LossValue> {
    check_same_len(&[gen_tm1, gen_t, gen_t1])?;
    check_same_len(&[tgt_tm1, tgt_t, tgt_t1])?;
    check_plan(plan_t, gen_t, tgt_t)?;
    let d = gen_t.dim();
    let n = gen_t.len() * d;
    let mut out = LossValue::zeros(0.0, &[n, n, n]);
    for &(i, j) in plan_t.pairs() {
        let (g0, g1, g2) = (gen_tm1.point(i), gen_t.point(i), gen_t1.point(i));
        let (y0, y1, y2) = (tgt_tm1.point(j), tgt_t.point(j), tgt_t1.point(j));
        for a in 0..d {
            let diff = (g2[a] - 2.0 * g1[a] + g0[a]) - (y2[a] - 2.0 * y1[a] + y0[a]);
            out.value += diff * diff;
            out.grads[0][i * d + a] += 2.0 * diff;
            out.grads[1][i * d + a] -= 4.0 * diff;
            out.grads[2][i * d + a] += 2.0 * diff;
        }
    }
    Ok(out)
}

/// Mean over groups of `|group| / (eps + sum of distances to the group mean)`.
pub fn loss_mingling(gen: &PointCloud, view: &GroupView) -> Result<LossValue> {
    if view.group_size() == 0 && !gen.is_empty() {
        return Err(Error::EmptyGroup(0));
    }
    let d = gen.dim();
    let mut out = LossValue::zeros(0.0, &[gen.len() * d]);
    let n_groups = view.n_groups();
    if n_groups == 0 {
        return Ok(out);
    }
    let scale = 1.0 / n_groups as f64;
    let mut mean = vec![0.0; d];
    let mut units: Vec<f64> = Vec::new();
    for (g, range) in view.groups().enumerate() {
        let size = range.len();
        if size == 0 {
            return Err(Error::EmptyGroup(g));
        }
        mean.iter_mut().for_each(|m| *m = 0.0);
        for i in range.clone() {
            for (m, x) in mean.iter_mut().zip(gen.point(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= size as f64);

        // Unit vectors u_i = (mean - y_i) / |mean - y_i|, zero when coincident.
        units.clear();
        let mut spread = 0.0;
        for i in range.clone() {
            let y = gen.point(i);
            let dist = y.iter().zip(&mean).map(|(a, m)| (m - a) * (m - a)).sum::<f64>().sqrt();
            spread += dist;
            for a in 0..d {
                units.push(if dist > 0.0 { (mean[a] - y[a]) / dist } else { 0.0 });
            }
        }
        let denom = MINGLING_EPS + spread;
        out.value += scale * size as f64 / denom;

        // d denom / d y_l = mean_j(u_j) - u_l
        let mut u_mean = vec![0.0; d];
        for chunk in units.chunks_exact(d) {
            for (m, u) in u_mean.iter_mut().zip(chunk) {
                *m += u / size as f64;
            }
        }
        let coeff = -scale * size as f64 / (denom * denom);
        for (local, i) in range.enumerate() {
            for a in 0..d {
                out.grads[0][i * d + a] += coeff * (u_mean[a] - units[local * d + a]);
            }
        }
    }
    Ok(out)
}

/// Squared count error between the generated and the true point count.
pub fn metric_count_error(n_tilde: usize, n: usize) -> f64 {
    let diff = n_tilde as f64 - n as f64;
    diff * diff
}

/// Where the spatial loss is applied in the three-frame setup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpatialFrames {
    CenterOnly,
    AllThree,
}

/// Everything the combined loss needs for one Siamese sample.
#[derive(Clone, Copy, Debug)]
pub struct SiameseInputs<'a> {
    /// Truncated generator outputs at t-1, t, t+1.
    pub gen: [&'a PointCloud; 3],
    /// Index-corresponded targets at t-1, t, t+1.
    pub targets: [&'a PointCloud; 3],
    /// Per-frame spatial plans; `plans[1]` is the mapping used by the
    /// temporal terms.
    pub plans: [&'a AssignmentPlan; 3],
    pub group_size: usize,
    pub spatial_frames: SpatialFrames,
}

/// Individual loss terms, each lifted to gradients over all three frames.
#[derive(Clone, Debug)]
pub struct SiameseTerms {
    pub spatial: LossValue,
    pub l2_velocity: LossValue,
    pub l2_acceleration: LossValue,
    pub emd_velocity: LossValue,
    pub emd_acceleration: LossValue,
    pub mingling: LossValue,
}

impl SiameseTerms {
    pub fn compute(inputs: &SiameseInputs<'_>) -> Result<Self> {
        let [g0, g1, g2] = inputs.gen;
        let [y0, y1, y2] = inputs.targets;
        let n = g1.positions().len();
        let lens = [n, n, n];

        let frames: &[usize] = match inputs.spatial_frames {
            SpatialFrames::CenterOnly => &[1],
            SpatialFrames::AllThree => &[0, 1, 2],
        };
        let mut spatial = LossValue::zeros(0.0, &lens);
        let w = 1.0 / frames.len() as f64;
        for &f in frames {
            let l = loss_spatial(inputs.gen[f], inputs.targets[f], inputs.plans[f])?;
            spatial.value += w * l.value;
            axpy(&mut spatial.grads[f], w, &l.grads[0]);
        }

        let lift = |l: LossValue, at: &[usize]| -> LossValue {
            let mut out = LossValue::zeros(l.value, &lens);
            for (g, &f) in l.grads.into_iter().zip(at) {
                out.grads[f] = g;
            }
            out
        };
        let l2_velocity = lift(loss_l2_velocity(g1, g2)?, &[1, 2]);
        let l2_acceleration = lift(loss_l2_acceleration(g0, g1, g2)?, &[0, 1, 2]);
        let emd_velocity = lift(loss_emd_velocity(g1, g2, y1, y2, inputs.plans[1])?, &[1, 2]);
        let emd_acceleration = lift(
            loss_emd_acceleration(g0, g1, g2, y0, y1, y2, inputs.plans[1])?,
            &[0, 1, 2],
        );
        let mingling = lift(
            loss_mingling(g1, &GroupView::new(inputs.group_size, g1.len()))?,
            &[1],
        );
        Ok(Self {
            spatial,
            l2_velocity,
            l2_acceleration,
            emd_velocity,
            emd_acceleration,
            mingling,
        })
    }

    /// Weighted sum `sum_k w_k * term_k` over (term, weight) pairs.
    pub fn combine(&self, weighted: &[(&LossValue, f64)]) -> LossValue {
        let lens: Vec<usize> = self.spatial.grads.iter().map(Vec::len).collect();
        let mut out = LossValue::zeros(0.0, &lens);
        for (term, w) in weighted {
            if *w == 0.0 {
                continue;
            }
            out.value += w * term.value;
            for (acc, g) in out.grads.iter_mut().zip(&term.grads) {
                axpy(acc, *w, g);
            }
        }
        out
    }
}

/// `L_S + gamma * L_EV + mu * L_EA + nu * L_M`.
pub fn loss_final(inputs: &SiameseInputs<'_>, weights: &LossWeights) -> Result<LossValue> {
    let terms = SiameseTerms::compute(inputs)?;
    Ok(terms.combine(&[
        (&terms.spatial, 1.0),
        (&terms.emd_velocity, weights.gamma),
        (&terms.emd_acceleration, weights.mu),
        (&terms.mingling, weights.nu),
    ]))
}

fn axpy(acc: &mut [f64], w: f64, x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += w * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::transport::{oracle::brute_force_min, solve_exact, solve_unbalanced};

    fn cloud(points: &[[f64; 2]]) -> PointCloud {
        PointCloud::from_points(2, points).unwrap()
    }

    fn random_cloud(rng: &mut RngStream, n: usize) -> PointCloud {
        PointCloud::new(2, (0..2 * n).map(|_| rng.range(-1.0, 1.0)).collect()).unwrap()
    }

    fn jitter(rng: &mut RngStream, c: &PointCloud, s: f64) -> PointCloud {
        PointCloud::new(2, c.positions().iter().map(|v| v + s * rng.normal()).collect()).unwrap()
    }

    /// Central differences of `f` with respect to every coordinate of frame `frame`.
    fn numeric_grad(
        frames: &[PointCloud],
        frame: usize,
        f: &dyn Fn(&[PointCloud]) -> f64,
    ) -> Vec<f64> {
        let h = 1e-5;
        let n = frames[frame].positions().len();
        (0..n)
            .map(|k| {
                let mut plus = frames.to_vec();
                plus[frame].positions_mut()[k] += h;
                let mut minus = frames.to_vec();
                minus[frame].positions_mut()[k] -= h;
                (f(&plus) - f(&minus)) / (2.0 * h)
            })
            .collect()
    }

    fn assert_close(analytic: &[f64], numeric: &[f64], rel: f64) {
        let scale = analytic.iter().chain(numeric).fold(1e-8f64, |m, v| m.max(v.abs()));
        for (a, n) in analytic.iter().zip(numeric) {
            assert!((a - n).abs() <= rel * scale, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn spatial_examples() {
        let c = cloud(&[[0.1, 0.2], [0.5, -0.3]]);
        let plan = solve_exact(&c, &c).unwrap();
        let l = loss_spatial(&c, &c, &plan).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.gradient().iter().all(|g| *g == 0.0));

        let g = cloud(&[[0.0, 0.0]]);
        let t = cloud(&[[1.0, 0.0]]);
        let l = loss_spatial(&g, &t, &solve_exact(&g, &t).unwrap()).unwrap();
        assert_eq!(l.value, 1.0);
        assert_eq!(l.gradient(), &[-2.0, 0.0]);
    }

    #[test]
    fn spatial_equals_permutation_minimum() {
        let mut rng = RngStream::new(21, 0);
        for _ in 0..10 {
            let g = random_cloud(&mut rng, 6);
            let t = random_cloud(&mut rng, 6);
            let l = loss_spatial(&g, &t, &solve_exact(&g, &t).unwrap()).unwrap();
            assert!((l.value - brute_force_min(&g, &t)).abs() < 1e-12);
        }
    }

    #[test]
    fn plan_mismatch_is_rejected() {
        let g = cloud(&[[0.0, 0.0], [1.0, 0.0]]);
        let plan = solve_exact(&g, &g).unwrap();
        let t = cloud(&[[0.0, 0.0]]);
        assert!(matches!(loss_spatial(&g, &t, &plan), Err(Error::PlanMismatch(_))));
    }

    #[test]
    fn l2_velocity_examples() {
        let a = cloud(&[[0.0, 0.0], [0.3, 0.3]]);
        assert_eq!(loss_l2_velocity(&a, &a).unwrap().value, 0.0);
        let b = cloud(&[[0.1, 0.0], [0.3, 0.3]]);
        assert!((loss_l2_velocity(&a, &b).unwrap().value - 0.01).abs() < 1e-15);
        let c = cloud(&[[0.0, 0.0]]);
        assert!(matches!(loss_l2_velocity(&a, &c), Err(Error::SizeMismatch(_))));
    }

    #[test]
    fn l2_acceleration_examples() {
        let f0 = cloud(&[[0.0, 0.0]]);
        let f1 = cloud(&[[0.1, 0.0]]);
        let f2 = cloud(&[[0.2, 0.0]]);
        assert!(loss_l2_acceleration(&f0, &f1, &f2).unwrap().value.abs() < 1e-30);
        let f2 = cloud(&[[0.2, 0.0]]);
        let l = loss_l2_acceleration(&f0, &f0, &f2).unwrap();
        assert!((l.value - 0.04).abs() < 1e-15);
    }

    #[test]
    fn emd_velocity_examples() {
        let mut rng = RngStream::new(22, 0);
        let y0 = random_cloud(&mut rng, 5);
        let shift = |c: &PointCloud, dx: f64| {
            PointCloud::new(2, c.positions().chunks(2).flat_map(|p| [p[0] + dx, p[1]]).collect()).unwrap()
        };
        let y1 = shift(&y0, 0.05);
        let g0 = jitter(&mut rng, &y0, 0.01);
        let plan = solve_exact(&g0, &y0).unwrap();
        // Riding on the matched targets' motion.
        let mut g1 = g0.clone();
        for &(i, j) in plan.pairs() {
            for a in 0..2 {
                g1.positions_mut()[i * 2 + a] += y1.point(j)[a] - y0.point(j)[a];
            }
        }
        let l = loss_emd_velocity(&g0, &g1, &y0, &y1, &plan).unwrap();
        assert!(l.value < 1e-28);

        // Static targets reduce to the plain L2 velocity term.
        let g1 = shift(&g0, 0.1);
        let l = loss_emd_velocity(&g0, &g1, &y0, &y0, &plan).unwrap();
        assert!((l.value - 5.0 * 0.01).abs() < 1e-14);
        assert_eq!(l.value, loss_l2_velocity(&g0, &g1).unwrap().value);
    }

    #[test]
    fn emd_velocity_matches_oracle_plan() {
        let mut rng = RngStream::new(23, 0);
        for _ in 0..5 {
            let g0 = random_cloud(&mut rng, 5);
            let g1 = jitter(&mut rng, &g0, 0.1);
            let y0 = random_cloud(&mut rng, 5);
            let y1 = jitter(&mut rng, &y0, 0.1);
            let plan = solve_exact(&g0, &y0).unwrap();
            // Independent: find the best permutation by enumeration, then evaluate.
            let best_cost = brute_force_min(&g0, &y0);
            assert!((plan.cost() - best_cost).abs() < 1e-12);
            let mut direct = 0.0;
            for (i, &j) in plan.source_to_target().iter().enumerate() {
                for a in 0..2 {
                    let gm = g1.point(i)[a] - g0.point(i)[a];
                    let ym = y1.point(j)[a] - y0.point(j)[a];
                    direct += (gm - ym).powi(2);
                }
            }
            let l = loss_emd_velocity(&g0, &g1, &y0, &y1, &plan).unwrap();
            assert!((l.value - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn emd_acceleration_closed_form() {
        // Targets in constant velocity, generator static: zero.
        let y0 = cloud(&[[0.0, 0.0], [0.5, 0.5]]);
        let y1 = cloud(&[[0.1, 0.0], [0.6, 0.5]]);
        let y2 = cloud(&[[0.2, 0.0], [0.7, 0.5]]);
        let g = y1.clone();
        let plan = solve_exact(&g, &y1).unwrap();
        let l = loss_emd_acceleration(&g, &g, &g, &y0, &y1, &y2, &plan).unwrap();
        assert!(l.value < 1e-28);
        // Perturbing one generated point at t by delta adds (2 delta)^2 = 4|delta|^2.
        let mut gt = g.clone();
        gt.positions_mut()[0] += 0.03;
        gt.positions_mut()[1] -= 0.04;
        let l = loss_emd_acceleration(&g, &gt, &g, &y0, &y1, &y2, &plan).unwrap();
        assert!((l.value - 4.0 * 0.0025).abs() < 1e-14);
    }

    #[test]
    fn mingling_examples() {
        let g = cloud(&[[-0.5, 0.0], [0.5, 0.0]]);
        let view = GroupView::new(2, 2);
        let l = loss_mingling(&g, &view).unwrap();
        assert!((l.value - 2.0).abs() < 1e-7);

        let collapsed = cloud(&[[0.3, 0.3], [0.3, 0.3]]);
        let l = loss_mingling(&collapsed, &view).unwrap();
        assert!((l.value - 2.0 / MINGLING_EPS).abs() < 1e-6 / MINGLING_EPS);

        let wide = cloud(&[[-1.0, 0.0], [1.0, 0.0]]);
        let l2 = loss_mingling(&wide, &view).unwrap();
        assert!((l2.value - 1.0).abs() < 1e-7);

        assert!(matches!(
            loss_mingling(&g, &GroupView::new(0, 2)),
            Err(Error::EmptyGroup(0))
        ));
    }

    #[test]
    fn mingling_contraction_increases_loss() {
        let mut rng = RngStream::new(24, 0);
        let g = random_cloud(&mut rng, 12);
        let view = GroupView::new(4, 12);
        let base = loss_mingling(&g, &view).unwrap().value;
        let mut contracted = g.clone();
        for range in view.groups() {
            let mut mean = [0.0; 2];
            for i in range.clone() {
                mean[0] += g.point(i)[0] / 4.0;
                mean[1] += g.point(i)[1] / 4.0;
            }
            for i in range {
                for a in 0..2 {
                    let v = &mut contracted.positions_mut()[i * 2 + a];
                    *v = mean[a] + 0.8 * (*v - mean[a]);
                }
            }
        }
        assert!(loss_mingling(&contracted, &view).unwrap().value > base);
    }

    #[test]
    fn count_error() {
        assert_eq!(metric_count_error(30, 30), 0.0);
        assert_eq!(metric_count_error(27, 30), 9.0);
    }

    #[test]
    fn weights_validate() {
        assert!(LossWeights::new(1.0, 0.0, -0.1).is_err());
        assert_eq!(LossWeights::BASE_2D, LossWeights::new(10.0, 10.0, 0.001).unwrap());
        assert_eq!(LossWeights::BASE_3D, LossWeights::new(5.0, 5.0, 0.001).unwrap());
    }

    fn siamese_fixture(rng: &mut RngStream, n_gen: usize, n_tgt: usize) -> (Vec<PointCloud>, Vec<PointCloud>) {
        let g0 = random_cloud(rng, n_gen);
        let g1 = jitter(rng, &g0, 0.05);
        let g2 = jitter(rng, &g1, 0.05);
        let y0 = random_cloud(rng, n_tgt);
        let y1 = jitter(rng, &y0, 0.05);
        let y2 = jitter(rng, &y1, 0.05);
        (vec![g0, g1, g2], vec![y0, y1, y2])
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RngStream::new(25, 0);
        for case in 0..20 {
            let n_gen = 4 + case % 9;
            let n_tgt = if case % 3 == 0 { n_gen + 3 } else { n_gen };
            let (gen, tgt) = siamese_fixture(&mut rng, n_gen, n_tgt);
            let plans: Vec<AssignmentPlan> =
                (0..3).map(|f| solve_unbalanced(&gen[f], &tgt[f]).unwrap()).collect();
            let weights = LossWeights::new(10.0, 10.0, 0.001).unwrap();
            let eval = |g: &[PointCloud]| -> LossValue {
                let inputs = SiameseInputs {
                    gen: [&g[0], &g[1], &g[2]],
                    targets: [&tgt[0], &tgt[1], &tgt[2]],
                    plans: [&plans[0], &plans[1], &plans[2]],
                    group_size: 4,
                    spatial_frames: SpatialFrames::AllThree,
                };
                loss_final(&inputs, &weights).unwrap()
            };
            let analytic = eval(&gen);
            for f in 0..3 {
                let numeric = numeric_grad(&gen, f, &|g| eval(g).value);
                assert_close(&analytic.grads[f], &numeric, 1e-4);
            }
        }
    }

    #[test]
    fn terms_are_nonnegative() {
        let mut rng = RngStream::new(26, 0);
        let (gen, tgt) = siamese_fixture(&mut rng, 8, 8);
        let plans: Vec<AssignmentPlan> = (0..3).map(|f| solve_exact(&gen[f], &tgt[f]).unwrap()).collect();
        let t = SiameseTerms::compute(&SiameseInputs {
            gen: [&gen[0], &gen[1], &gen[2]],
            targets: [&tgt[0], &tgt[1], &tgt[2]],
            plans: [&plans[0], &plans[1], &plans[2]],
            group_size: 2,
            spatial_frames: SpatialFrames::CenterOnly,
        })
        .unwrap();
        for l in [&t.spatial, &t.l2_velocity, &t.l2_acceleration, &t.emd_velocity, &t.emd_acceleration, &t.mingling] {
            assert!(l.value >= 0.0);
        }
        // Center-only spatial loss leaves the outer frames untouched.
        assert!(t.spatial.grads[0].iter().all(|g| *g == 0.0));
    }
}
