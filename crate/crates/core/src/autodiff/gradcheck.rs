//! Finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// One compared gradient element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub input: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    pub fn rel_error(&self) -> f64 {
        relative_error(self.analytic, self.numeric)
    }

    pub fn abs_error(&self) -> f64 {
        (self.analytic - self.numeric).abs()
    }

    /// `|analytic| + |numeric|`.
    pub fn magnitude(&self) -> f64 {
        self.analytic.abs() + self.numeric.abs()
    }
}

/// Outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub probes: Vec<Probe>,
    /// Elements skipped because the perturbation moved a leaky-ReLU input
    /// across zero, where central differences are not meaningful.
    pub kink_skips: usize,
}

impl GradCheckReport {
    /// The probe with the largest relative error.
    pub fn worst(&self) -> Option<&Probe> {
        self.probes.iter().max_by(|a, b| a.rel_error().total_cmp(&b.rel_error()))
    }

    /// Largest relative error among probes whose magnitude is at least `floor`.
    pub fn max_rel_error_above(&self, floor: f64) -> f64 {
        self.probes
            .iter()
            .filter(|p| p.magnitude() >= floor)
            .map(Probe::rel_error)
            .fold(0.0, f64::max)
    }

    /// Largest absolute error among probes whose magnitude is below `floor`.
    pub fn max_abs_error_below(&self, floor: f64) -> f64 {
        self.probes
            .iter()
            .filter(|p| p.magnitude() < floor)
            .map(Probe::abs_error)
            .fold(0.0, f64::max)
    }
}

const PROJECTION_SEED: u64 = 0x6772_6164;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn evaluate<F>(f: &F, inputs: &[Tensor], projection: &mut Option<Vec<f64>>) -> Result<(Graph, Vec<Var>, Var)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| g.leaf(t.clone().with_requires_grad(true)))
        .collect();
    let out = f(&mut g, &vars)?;
    let n = g.value(out).len();
    let scalar = if n == 1 {
        out
    } else {
        let weights = projection.get_or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        });
        g.weighted_sum(out, weights)?
    };
    Ok((g, vars, scalar))
}

/// Compares reverse-mode gradients of `f` against central differences for
/// every element of every input. Elements whose perturbation flips the sign
/// of any leaky-ReLU input are skipped. Tensor-valued outputs are reduced with a
/// fixed random projection. Returns the maximum relative error
/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    grad_check_sampled(f, inputs, epsilon, usize::MAX, 0).map(|r| r.max_rel_error)
}

/// Like [`grad_check`] but probes at most `max_probes` randomly chosen
/// elements per input, for inputs too large to difference exhaustively.
pub fn grad_check_sampled<F>(
    f: F,
    inputs: &[Tensor],
    epsilon: f64,
    max_probes: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut projection = None;
    let (g1, vars, s1) = evaluate(&f, inputs, &mut projection)?;
    let (g2, _, s2) = evaluate(&f, inputs, &mut projection)?;
    if g1.value(s1).data()[0].to_bits() != g2.value(s2).data()[0].to_bits() {
        return Err(Error::OracleInvalid(
            "two forward passes on identical inputs disagree".into(),
        ));
    }
    drop(g2);
    let grads = g1.backward(s1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        probes: Vec::new(),
        kink_skips: 0,
    };
    let pattern = g1.kink_pattern();
    let mut probe = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[i]).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; input.len()]);
        let idx: Vec<usize> = if input.len() <= max_probes {
            (0..input.len()).collect()
        } else {
            let mut v = sample(&mut rng, input.len(), max_probes).into_vec();
            v.sort_unstable();
            v
        };
        for k in idx {
            let orig = input.data()[k];
            probe[i].data_mut()[k] = orig + epsilon;
            let (gp, _, sp) = evaluate(&f, &probe, &mut projection)?;
            let plus = gp.value(sp).data()[0];
            let straddles = gp.kink_pattern() != pattern;
            probe[i].data_mut()[k] = orig - epsilon;
            let (gm, _, sm) = evaluate(&f, &probe, &mut projection)?;
            let minus = gm.value(sm).data()[0];
            probe[i].data_mut()[k] = orig;
            if straddles || gm.kink_pattern() != pattern {
                report.kink_skips += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let p = Probe {
                input: i,
                element: k,
                analytic: analytic[k],
                numeric,
            };
            report.max_rel_error = report.max_rel_error.max(p.rel_error());
            report.probes.push(p);
        }
    }
    Ok(report)
}
