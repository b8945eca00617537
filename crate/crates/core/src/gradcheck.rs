//! Finite-difference checks of the analytic gradients on small fixed
//! fixtures.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::drn::{total_loss, LossInputs, TrainConfig};
use crate::kernels::{median_heuristic, SampleBatch};
use crate::linalg::Matrix;
use crate::lsmi::{lsmi_gradient_at, GradMode, Hyperparams};
use crate::net::{self, Architecture, NetworkParams};
use crate::oracles::finite_diff_grad;
use crate::rng::SplitMix64;
use crate::Result;

/// Central-difference step.
pub const STEP: f64 = 1e-5;
/// Largest admissible relative error.
pub const TOLERANCE: f64 = 1e-4;
/// Entries smaller than this on both sides are skipped.
pub const MAGNITUDE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub name: String,
    pub max_rel_err: f64,
    pub entries: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub blocks: Vec<BlockError>,
}

impl Report {
    pub fn max_rel_err(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() <= TOLERANCE
    }

    fn push(&mut self, name: &str, analytic: &[f64], numeric: &[f64]) {
        let (max_rel_err, entries) = relative_error(analytic, numeric);
        self.blocks.push(BlockError {
            name: name.to_string(),
            max_rel_err,
            entries,
        });
    }
}

/// Max of `|a - f| / max(|a|, |f|)` over entries where either side exceeds
/// [`MAGNITUDE_FLOOR`], and the number of such entries.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut count = 0;
    for (a, f) in analytic.iter().zip(numeric) {
        let scale = a.abs().max(f.abs());
        if scale > MAGNITUDE_FLOOR {
            worst = worst.max((a - f).abs() / scale);
            count += 1;
        }
    }
    (worst, count)
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut SplitMix64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

/// Paired `16 x 3` batches with dependent columns.
pub fn lsmi_fixture() -> Result<(SampleBatch, SampleBatch)> {
    let mut rng = SplitMix64::new(16_003);
    let ps = normal_matrix(16, 3, &mut rng);
    let noise = normal_matrix(16, 3, &mut rng);
    let pt = Matrix::from_fn(16, 3, |i, j| 0.7 * ps[(i, j)] + 0.5 * noise[(i, j)]);
    Ok((SampleBatch::new(ps)?, SampleBatch::new(pt)?))
}

fn median_hyperparams(ps: &SampleBatch, pt: &SampleBatch, delta: f64) -> Result<Hyperparams> {
    Ok(Hyperparams {
        sigma_s: median_heuristic(ps)?,
        sigma_t: median_heuristic(pt)?,
        delta,
    })
}

/// Full-mode LSMI gradient with respect to the student batch, and the
/// largest absolute column sum of that gradient.
pub fn check_lsmi() -> Result<(Report, f64)> {
    let (ps, pt) = lsmi_fixture()?;
    let hp = median_hyperparams(&ps, &pt, 1e-2)?;
    let analytic = lsmi_gradient_at(&ps, &pt, hp, GradMode::Full)?.d_ps;
    let numeric = finite_diff_grad(
        |m| {
            let b = SampleBatch::new(m.clone()).expect("finite perturbation");
            lsmi_gradient_at(&b, &pt, hp, GradMode::Full)
                .map(|g| g.score)
                .unwrap_or(f64::NAN)
        },
        ps.matrix(),
        STEP,
    )?;
    let mut report = Report::default();
    report.push("d_ps", analytic.as_slice(), numeric.as_slice());
    let col_sum = (0..analytic.cols())
        .map(|j| analytic.column(j).iter().sum::<f64>().abs())
        .fold(0.0, f64::max);
    Ok((report, col_sum))
}

/// The 2-8-(2,4) network: two inputs, one hidden layer of 8, two classes
/// and a 4-dimensional projection.
pub fn net_architecture() -> Architecture {
    Architecture::new(2, &[8], 2, 4)
}

fn perturbed_init(arch: &Architecture, seed: u64) -> Result<NetworkParams> {
    // non-trivial layer-norm affine so its gradients are exercised
    let mut params = NetworkParams::init(arch, seed)?;
    let mut rng = SplitMix64::new(seed ^ 0x9e37);
    let mut flat = params.to_flat();
    for v in &mut flat {
        *v += 0.1 * rng.normal();
    }
    params.set_flat(&flat)?;
    Ok(params)
}

fn per_tensor(report: &mut Report, params: &NetworkParams, analytic: &[f64], numeric: &[f64]) {
    let mut offset = 0;
    for t in params.tensors() {
        let len = t.values.len();
        report.push(t.name, &analytic[offset..offset + len], &numeric[offset..offset + len]);
        offset += len;
    }
}

fn flat_fd(flat: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Result<Vec<f64>> {
    let x0 = Matrix::from_vec(1, flat.len(), flat.to_vec())?;
    Ok(finite_diff_grad(|m| f(m.as_slice()), &x0, STEP)?.into_vec())
}

/// Gradients of `sum(W_y * logits) + sum(W_p * projection)` for fixed
/// random weightings, per parameter tensor and for the input.
pub fn check_net() -> Result<Report> {
    let arch = net_architecture();
    let params = perturbed_init(&arch, 28)?;
    let mut rng = SplitMix64::new(2_824);
    let x = normal_matrix(6, 2, &mut rng);
    let wy = normal_matrix(6, 2, &mut rng);
    let wp = normal_matrix(6, 4, &mut rng);
    let objective = |p: &NetworkParams, x: &Matrix| -> f64 {
        match net::predict(p, x) {
            Ok(out) => dot(out.logits.as_slice(), wy.as_slice()) + dot(out.projection.as_slice(), wp.as_slice()),
            Err(_) => f64::NAN,
        }
    };
    let (_, trace) = net::forward(&params, &x)?;
    let (grads, dx) = net::backward(&params, &trace, &wy, &wp)?;

    let mut scratch = params.clone();
    let numeric = flat_fd(&params.to_flat(), |v| {
        scratch.set_flat(v).expect("same length");
        objective(&scratch, &x)
    })?;
    let mut report = Report::default();
    per_tensor(&mut report, &params, &grads.to_flat(), &numeric);
    let dx_num = finite_diff_grad(|m| objective(&params, m), &x, STEP)?;
    report.push("input", dx.as_slice(), dx_num.as_slice());
    Ok(report)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The 4-sample composite-loss fixture.
pub struct TotalFixture {
    pub cfg: TrainConfig,
    pub student: NetworkParams,
    pub teacher: NetworkParams,
    pub xs: Matrix,
    pub xt: Matrix,
    pub labels: Vec<usize>,
    pub hp: Hyperparams,
    /// Epoch at which both ramps have reached their maxima.
    pub epoch: usize,
}

pub fn total_fixture() -> Result<TotalFixture> {
    let cfg = TrainConfig {
        hidden: alloc::vec![8],
        proj_dim: 4,
        ..TrainConfig::default()
    };
    let arch = cfg.architecture(2, 2);
    let student = perturbed_init(&arch, 41)?;
    let teacher = perturbed_init(&arch, 42)?;
    let mut rng = SplitMix64::new(4_004);
    let xs = normal_matrix(4, 2, &mut rng);
    let xt = Matrix::from_fn(4, 2, |i, j| xs[(i, j)] + 0.1 * rng.normal());
    let labels = alloc::vec![0, 1, 1, 0];
    let ps = SampleBatch::new(net::predict(&student, &xs)?.projection)?;
    let pt = SampleBatch::new(net::predict(&teacher, &xt)?.projection)?;
    let hp = median_hyperparams(&ps, &pt, 1e-2)?;
    let epoch = cfg.ramp_epochs;
    Ok(TotalFixture {
        cfg,
        student,
        teacher,
        xs,
        xt,
        labels,
        hp,
        epoch,
    })
}

impl TotalFixture {
    /// Composite loss of `student` on this fixture.
    pub fn loss(&self, student: &NetworkParams) -> Result<f64> {
        let out_s = net::predict(student, &self.xs)?;
        let out_t = net::predict(&self.teacher, &self.xt)?;
        let inputs = LossInputs {
            ys_logits: &out_s.logits,
            yt_logits: &out_t.logits,
            ps: &out_s.projection,
            pt: &out_t.projection,
            labels: &self.labels,
        };
        Ok(total_loss(inputs, &self.cfg, self.epoch, Some(self.hp))?.0.total)
    }
}

/// Composite loss gradients: with respect to the student logits and
/// projection, then through the network to every parameter tensor.
pub fn check_total() -> Result<Report> {
    let fx = total_fixture()?;
    let (out_s, trace) = net::forward(&fx.student, &fx.xs)?;
    let out_t = net::predict(&fx.teacher, &fx.xt)?;
    let eval = |ys: &Matrix, ps: &Matrix| -> f64 {
        let inputs = LossInputs {
            ys_logits: ys,
            yt_logits: &out_t.logits,
            ps,
            pt: &out_t.projection,
            labels: &fx.labels,
        };
        total_loss(inputs, &fx.cfg, fx.epoch, Some(fx.hp))
            .map(|r| r.0.total)
            .unwrap_or(f64::NAN)
    };
    let inputs = LossInputs {
        ys_logits: &out_s.logits,
        yt_logits: &out_t.logits,
        ps: &out_s.projection,
        pt: &out_t.projection,
        labels: &fx.labels,
    };
    let (_, d_logits, d_ps) = total_loss(inputs, &fx.cfg, fx.epoch, Some(fx.hp))?;
    let mut report = Report::default();
    let num_logits = finite_diff_grad(|m| eval(m, &out_s.projection), &out_s.logits, STEP)?;
    report.push("logits", d_logits.as_slice(), num_logits.as_slice());
    let num_ps = finite_diff_grad(|m| eval(&out_s.logits, m), &out_s.projection, STEP)?;
    report.push("projection", d_ps.as_slice(), num_ps.as_slice());

    let (grads, _) = net::backward(&fx.student, &trace, &d_logits, &d_ps)?;
    let mut scratch = fx.student.clone();
    let numeric = flat_fd(&fx.student.to_flat(), |v| {
        scratch.set_flat(v).expect("same length");
        fx.loss(&scratch).unwrap_or(f64::NAN)
    })?;
    per_tensor(&mut report, &fx.student, &grads.to_flat(), &numeric);
    Ok(report)
}
