use super::optim::AdamW;
use super::{is_net_param, Example, ModelSpec};
use crate::denoiser::{denoise_on, Denoise, DenoiserParams};
use crate::error::{Error, Result};
use crate::numcore::{randn, Graph, Rng, Scalar, Tensor, Var};
use crate::schedule::TimeGrid;

/// One Euler step of the probability-flow ODE from `t_next` down to `t_n`.
pub fn euler_solver_step<D: Denoise + ?Sized>(
    teacher: &D,
    x_next: &Tensor,
    t_next: Scalar,
    t_n: Scalar,
    cond: Option<&Tensor>,
) -> Result<Tensor> {
    if !(t_n > 0.0 && t_n < t_next) {
        return Err(Error::invalid(format!(
            "euler step needs 0 < t_n < t_next, got t_n={t_n}, t_next={t_next}"
        )));
    }
    let d = teacher.denoise(x_next, t_next, cond)?;
    x_next.axpby(t_n / t_next, &d, (t_next - t_n) / t_next)
}

/// `theta_minus <- mu * theta_minus + (1 - mu) * theta`.
pub fn ema_update(theta_minus: &mut DenoiserParams, theta: &DenoiserParams, mu: Scalar) -> Result<()> {
    if !(0.0..1.0).contains(&mu) {
        return Err(Error::invalid(format!("ema rate {mu} outside [0, 1)")));
    }
    theta_minus.blend_toward(theta, mu)
}

/// Student, target network and frozen teacher.
///
/// `theta` carries a copy of the teacher's encoder weights; only `net/*`
/// entries are optimized, so conditioning stays fixed during distillation.
#[derive(Debug, Clone)]
pub struct DistillState<T> {
    pub theta: DenoiserParams,
    pub theta_minus: DenoiserParams,
    pub teacher: T,
    pub grid: TimeGrid,
    pub mu: Scalar,
    pub opt: AdamW,
    pub step: u64,
    pub rng: Rng,
}

impl<T: Denoise> DistillState<T> {
    /// Student and target both start from `init`.
    pub fn new(init: DenoiserParams, teacher: T, grid: TimeGrid, lr: Scalar, seed: u64) -> Self {
        Self {
            theta_minus: init.clone(),
            theta: init,
            teacher,
            grid,
            mu: 0.95,
            opt: AdamW::new(lr),
            step: 0,
            rng: Rng::new(seed),
        }
    }
}

fn consistency_loss_on<T: Denoise>(
    g: &mut Graph,
    model: &ModelSpec,
    state: &mut DistillState<T>,
    batch: &[Example],
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n_steps = state.grid.times().len() - 1;
    if n_steps < 2 {
        return Err(Error::invalid("distillation needs a grid of at least 2 steps"));
    }
    let mut total: Option<Var> = None;
    for ex in batch {
        let n = state.rng.int_inclusive(1, n_steps - 1);
        let (t_n, t_next) = (state.grid.t(n), state.grid.t(n + 1));
        let z = randn(&mut state.rng, ex.x0.shape());
        let x_next = ex.x0.axpby(1.0, &z, t_next)?;
        let cond = model.cond(&state.theta, ex)?;

        // Teacher and target branches run tape-free: no gradient reaches them.
        let x_hat = euler_solver_step(&state.teacher, &x_next, t_next, t_n, cond.as_ref())?;
        let target = model.denoise(&state.theta_minus, &x_hat, t_n, cond.as_ref())?;

        let cond_v = cond.map(|c| g.constant(c));
        let pred = denoise_on(g, &model.net, &state.theta, &model.precond, model.t_max, &x_next, t_next, cond_v.as_ref())?;
        let target = g.constant(target);
        let diff = g.sub(pred, target)?;
        let sq = g.sum_sq(diff)?;
        let item = g.scale(sq, 1.0 / (ex.x0.len() * batch.len()) as Scalar)?;
        total = Some(match total {
            None => item,
            Some(acc) => g.add(acc, item)?,
        });
    }
    Ok(total.expect("non-empty batch"))
}

/// Consistency loss for one batch, per element and averaged over the batch.
/// Advances `state.rng`.
pub fn consistency_loss<T: Denoise>(
    model: &ModelSpec,
    state: &mut DistillState<T>,
    batch: &[Example],
) -> Result<Scalar> {
    let mut g = Graph::new();
    let l = consistency_loss_on(&mut g, model, state, batch)?;
    g.value(l).item()
}

/// Optimizer step on the student followed by the target update.
pub fn distill_step<T: Denoise>(
    state: &mut DistillState<T>,
    model: &ModelSpec,
    batch: &[Example],
) -> Result<Scalar> {
    let mut g = Graph::new();
    let l = consistency_loss_on(&mut g, model, state, batch)?;
    let loss = g.value(l).item()?;
    let grads = g.backward(l)?;
    state.opt.step(&mut state.theta, &grads, is_net_param)?;
    ema_update(&mut state.theta_minus, &state.theta, state.mu)?;
    state.step += 1;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{OutputInit, WaveNetConfig};
    use crate::oracle::{AnalyticDenoiser, GaussianSpec};
    use crate::schedule::Precond;

    struct Constant(Scalar);
    impl Denoise for Constant {
        fn denoise(&self, x: &Tensor, _t: Scalar, _c: Option<&Tensor>) -> Result<Tensor> {
            Ok(Tensor::full(x.shape(), self.0))
        }
    }

    fn model() -> ModelSpec {
        ModelSpec {
            net: WaveNetConfig::tiny(),
            enc: None,
            precond: Precond::new(1.0, 0.002).unwrap(),
            t_max: 80.0,
        }
    }

    fn batch() -> Vec<Example> {
        let mut rng = Rng::new(11);
        (0..3).map(|_| Example::unconditional(randn(&mut rng, &[1, 6]))).collect()
    }

    fn state() -> DistillState<AnalyticDenoiser> {
        let m = model();
        let init = m.init(&mut Rng::new(1), OutputInit::Random).unwrap();
        let teacher = AnalyticDenoiser(GaussianSpec::scalar(0.0, 1.0).unwrap());
        let grid = TimeGrid::karras(10, 0.002, 80.0, 7.0).unwrap();
        DistillState::new(init, teacher, grid, 1e-3, 5)
    }

    #[test]
    fn euler_step_example() {
        let x = Tensor::scalar(2.0);
        let y = euler_solver_step(&Constant(1.0), &x, 1.0, 0.5, None).unwrap();
        assert!((y.item().unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn euler_step_rejects_bad_order() {
        let x = Tensor::scalar(2.0);
        assert!(euler_solver_step(&Constant(1.0), &x, 0.5, 0.5, None).is_err());
        assert!(euler_solver_step(&Constant(1.0), &x, 0.5, 1.0, None).is_err());
        assert!(euler_solver_step(&Constant(1.0), &x, 0.5, 0.0, None).is_err());
    }

    #[test]
    fn euler_local_error_is_second_order() {
        let spec = GaussianSpec::scalar(0.3, 0.7).unwrap();
        let d = AnalyticDenoiser(spec.clone());
        let x = Tensor::scalar(1.4);
        let err = |dt: Scalar| {
            let y = euler_solver_step(&d, &x, 1.0, 1.0 - dt, None).unwrap();
            let exact = spec.trajectory(&x, 1.0, 1.0 - dt).unwrap();
            (y.item().unwrap() - exact.item().unwrap()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn ema_rate_bounds() {
        let mut a = DenoiserParams::new();
        a.insert("w", Tensor::scalar(1.0));
        let b = a.clone();
        assert!(ema_update(&mut a, &b, 1.0).is_err());
        assert!(ema_update(&mut a, &b, -0.1).is_err());
        assert!(ema_update(&mut a, &b, 0.0).is_ok());
    }

    #[test]
    fn ema_follows_student_after_step() {
        let m = model();
        let mut s = state();
        let minus_before = s.theta_minus.clone();
        distill_step(&mut s, &m, &batch()).unwrap();
        let mut expect = minus_before;
        expect.blend_toward(&s.theta, 0.95).unwrap();
        assert_eq!(expect, s.theta_minus);
    }

    #[test]
    fn gradients_reach_only_the_student() {
        let m = model();
        let mut s = state();
        // make the target network differ so a leak would be visible
        s.theta_minus = m.init(&mut Rng::new(99), OutputInit::Random).unwrap();
        let mut g = Graph::new();
        let l = consistency_loss_on(&mut g, &m, &mut s, &batch()).unwrap();
        let grads = g.backward(l).unwrap();
        let mut names: Vec<&str> = grads.names().collect();
        names.sort_unstable();
        let student: Vec<&str> = s.theta.names().collect();
        assert_eq!(names, student);
        for n in &names {
            assert!(grads.named(n).unwrap().data().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn loss_is_deterministic_per_seed() {
        let m = model();
        let a = consistency_loss(&m, &mut state(), &batch()).unwrap();
        let b = consistency_loss(&m, &mut state(), &batch()).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite() && a >= 0.0);
    }

    #[test]
    fn net_teacher_stays_frozen() {
        let m = model();
        let tp = m.init(&mut Rng::new(3), OutputInit::Random).unwrap();
        let teacher = m.denoiser(&tp);
        let digest = teacher.params.digest();
        let grid = TimeGrid::karras(10, 0.002, 80.0, 7.0).unwrap();
        let mut s = DistillState::new(tp.clone(), teacher, grid, 1e-3, 5);
        for _ in 0..3 {
            distill_step(&mut s, &m, &batch()).unwrap();
        }
        assert_eq!(s.teacher.params.digest(), digest);
        assert_ne!(s.theta.digest(), digest);
    }
}
