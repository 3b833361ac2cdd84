use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{init_matrix, Bound, ParamSet, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Instance embedding width `h`.
    pub hidden: usize,
    /// Width of the gated attention scorer.
    pub attention: usize,
    pub classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            attention: 32,
            classes: 2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.attention == 0 || self.classes < 2 {
            return Err(Error::Config(format!(
                "model needs hidden ≥ 1, attention ≥ 1, classes ≥ 2; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Encoder, gated attention scorer, classifier (`mil.*`) and projection
/// head (`head.*`).
#[derive(Clone, Debug, PartialEq)]
pub struct MilParams {
    pub set: ParamSet,
}

impl MilParams {
    pub fn init<R: Rng + ?Sized>(d: usize, cfg: &ModelConfig, rng: &mut R) -> Self {
        let (h, a, k) = (cfg.hidden, cfg.attention, cfg.classes);
        let mut set = ParamSet::new();
        set.push("mil.enc.w", init_matrix(d, h, rng));
        set.push("mil.enc.b", Tensor::zeros(&[1, h]));
        set.push("mil.att.v", init_matrix(h, a, rng));
        set.push("mil.att.bv", Tensor::zeros(&[1, a]));
        set.push("mil.att.u", init_matrix(h, a, rng));
        set.push("mil.att.bu", Tensor::zeros(&[1, a]));
        set.push("mil.att.w", init_matrix(a, 1, rng));
        set.push("mil.cls.w", init_matrix(h, k, rng));
        set.push("mil.cls.b", Tensor::zeros(&[1, k]));
        set.push("head.w1", init_matrix(h, h, rng));
        set.push("head.b1", Tensor::zeros(&[1, h]));
        set.push("head.w2", init_matrix(h, h, rng));
        // Nonzero so an all-inactive hidden layer still yields a direction.
        set.push("head.b2", Tensor::matrix(1, h, vec![1e-2 / (h as f64).sqrt(); h]));
        Self { set }
    }

    pub fn from_set(set: ParamSet) -> Result<Self> {
        for name in ["mil.enc.w", "mil.cls.w", "head.w1"] {
            if set.get(name).is_none() {
                return Err(Error::Config(format!("parameter set lacks {name}")));
            }
        }
        Ok(Self { set })
    }

    pub fn input_dim(&self) -> usize {
        self.set.get("mil.enc.w").map_or(0, Tensor::rows)
    }

    pub fn hidden(&self) -> usize {
        self.set.get("mil.enc.w").map_or(0, Tensor::cols)
    }

    pub fn classes(&self) -> usize {
        self.set.get("mil.cls.w").map_or(0, Tensor::cols)
    }
}

/// Forward pass results on a tape.
#[derive(Clone, Debug)]
pub struct MilTrace {
    /// `n × h`, input row order.
    pub h: Var,
    /// `1 × h`
    pub rep: Var,
    /// `1 × classes`
    pub logits: Var,
    /// Attention weights in input row order.
    pub attention: Vec<f64>,
}

/// Row order that sorts `x` lexicographically; pooling sums in this order
/// so permuted inputs give bit-identical results.
pub fn canonical_order(x: &Tensor) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.rows()).collect();
    idx.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b))
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    idx
}

fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Var {
    let xw = tape.matmul(x, w);
    tape.add_row(xw, b)
}

/// `H = relu(X W + b)`, gated attention `a = softmax(w·(tanh(H V) ⊙ σ(H U)))`,
/// `rep = Σ a_j H_j`, `logits = rep W_c + b_c`. Names are `{prefix}mil.*`.
pub fn mil_forward_traced(tape: &mut Tape, x: Var, p: &Bound, prefix: &str) -> Result<MilTrace> {
    let (n, _) = tape.shape(x);
    if n == 0 {
        return Err(Error::EmptyBag);
    }
    let v = |name: &str| p.var(&format!("{prefix}mil.{name}"));
    let enc = linear(tape, x, v("enc.w"), v("enc.b"));
    let h = tape.relu(enc);

    let order = canonical_order(tape.value(x));
    let hs = tape.gather_rows(h, &order);
    let gv = linear(tape, hs, v("att.v"), v("att.bv"));
    let tanh = tape.tanh(gv);
    let gu = linear(tape, hs, v("att.u"), v("att.bu"));
    let gate = tape.sigmoid(gu);
    let gated = tape.mul(tanh, gate);
    let scores = tape.matmul(gated, v("att.w"));
    let scores = tape.transpose(scores);
    let a = tape.softmax_rows(scores, None)?;
    let rep = tape.matmul(a, hs);
    let logits = linear(tape, rep, v("cls.w"), v("cls.b"));

    let mut attention = vec![0.0; n];
    for (k, &j) in order.iter().enumerate() {
        attention[j] = tape.value(a).data()[k];
    }
    Ok(MilTrace {
        h,
        rep,
        logits,
        attention,
    })
}

/// Projection head then L2 normalization: `normalize(W₂ relu(W₁ r + b₁) + b₂)`.
pub fn project_traced(tape: &mut Tape, rep: Var, p: &Bound, prefix: &str) -> Result<Var> {
    let v = |name: &str| p.var(&format!("{prefix}head.{name}"));
    let l1 = linear(tape, rep, v("w1"), v("b1"));
    let r = tape.relu(l1);
    let l2 = linear(tape, r, v("w2"), v("b2"));
    tape.l2_normalize_rows(l2)
}

/// `−log softmax(logits)[label]`.
pub fn cross_entropy_traced(tape: &mut Tape, logits: Var, label: u8) -> Result<Var> {
    let (_, k) = tape.shape(logits);
    if usize::from(label) >= k {
        return Err(Error::Config(format!("label {label} out of range for {k} classes")));
    }
    let lp = tape.log_softmax_rows(logits);
    let pick = tape.pick(lp, 0, usize::from(label));
    Ok(tape.scale(pick, -1.0))
}

/// Plain-tensor forward output.
#[derive(Clone, Debug, PartialEq)]
pub struct MilOutput {
    pub h: Tensor,
    pub rep: Vec<f64>,
    pub logits: Vec<f64>,
    pub attention: Vec<f64>,
}

impl MilOutput {
    /// Softmax of the logits.
    pub fn probabilities(&self) -> Vec<f64> {
        let m = self.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = self.logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    /// Arg-max class, lowest index on ties.
    pub fn predicted(&self) -> usize {
        let mut best = 0;
        for (k, &l) in self.logits.iter().enumerate() {
            if l > self.logits[best] {
                best = k;
            }
        }
        best
    }
}

pub fn mil_forward(instances: &Tensor, params: &MilParams) -> Result<MilOutput> {
    if instances.rows() == 0 {
        return Err(Error::EmptyBag);
    }
    if instances.cols() != params.input_dim() {
        return Err(Error::shape(
            "mil_forward",
            format!("input width {} for a model of width {}", instances.cols(), params.input_dim()),
        ));
    }
    let mut tape = Tape::new();
    let bound = params.set.bind(&mut tape, None);
    let x = tape.constant(instances.clone());
    let t = mil_forward_traced(&mut tape, x, &bound, "")?;
    Ok(MilOutput {
        h: tape.value(t.h).clone(),
        rep: tape.value(t.rep).data().to_vec(),
        logits: tape.value(t.logits).data().to_vec(),
        attention: t.attention,
    })
}

/// Unit-norm contrastive embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct BagEmbedding {
    pub z: Vec<f64>,
}

pub fn project(rep: &[f64], params: &MilParams) -> Result<BagEmbedding> {
    if rep.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "bag representation".into(),
        });
    }
    let mut tape = Tape::new();
    let bound = params.set.bind(&mut tape, None);
    let r = tape.constant(Tensor::matrix(1, rep.len(), rep.to_vec()));
    let z = project_traced(&mut tape, r, &bound, "")?;
    Ok(BagEmbedding {
        z: tape.value(z).data().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::finite_diff_check;
    use crate::rng;
    use approx::assert_abs_diff_eq;

    fn small() -> (MilParams, Tensor) {
        let mut r = rng::stream(1, rng::INIT);
        let cfg = ModelConfig {
            hidden: 5,
            attention: 4,
            classes: 2,
        };
        let p = MilParams::init(3, &cfg, &mut r);
        let x = Tensor::matrix(4, 3, (0..12).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.5).collect());
        (p, x)
    }

    #[test]
    fn single_instance_rep_is_its_embedding() {
        let (p, x) = small();
        let one = x.select_rows(&[2]);
        let out = mil_forward(&one, &p).unwrap();
        assert_eq!(out.attention, vec![1.0]);
        assert_eq!(out.rep, out.h.row(0));
    }

    #[test]
    fn weights_form_a_distribution() {
        let (p, x) = small();
        let out = mil_forward(&x, &p).unwrap();
        assert!(out.attention.iter().all(|&a| a >= 0.0));
        assert_abs_diff_eq!(out.attention.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn permutation_is_bit_exact() {
        let (p, x) = small();
        let a = mil_forward(&x, &p).unwrap();
        let b = mil_forward(&x.select_rows(&[3, 1, 0, 2]), &p).unwrap();
        assert_eq!(a.rep, b.rep);
        assert_eq!(a.logits, b.logits);
    }

    #[test]
    fn duplicating_every_instance_keeps_rep() {
        let (p, x) = small();
        let x3 = x.select_rows(&[0, 1, 2]);
        let a = mil_forward(&x3, &p).unwrap();
        let b = mil_forward(&x3.select_rows(&[0, 1, 2, 0, 1, 2]), &p).unwrap();
        // brute force: Σ softmax(s)·H over the original three rows
        let h = &a.h;
        let s = &a.attention;
        for c in 0..h.cols() {
            let manual: f64 = (0..3).map(|j| s[j] * h.row(j)[c]).sum();
            assert_abs_diff_eq!(b.rep[c], manual, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_head_normalizes_three_four() {
        let mut set = ParamSet::new();
        set.push("head.w1", Tensor::identity(3));
        set.push("head.b1", Tensor::zeros(&[1, 3]));
        set.push("head.w2", Tensor::identity(3));
        set.push("head.b2", Tensor::zeros(&[1, 3]));
        let z = project(&[3.0, 4.0, 0.0], &MilParams { set }).unwrap();
        assert_abs_diff_eq!(z.z[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(z.z[1], 0.8, epsilon = 1e-15);
        assert_eq!(z.z[2], 0.0);
    }

    #[test]
    fn zero_head_output_is_an_error() {
        let mut set = ParamSet::new();
        set.push("head.w1", Tensor::zeros(&[2, 2]));
        set.push("head.b1", Tensor::zeros(&[1, 2]));
        set.push("head.w2", Tensor::zeros(&[2, 2]));
        set.push("head.b2", Tensor::zeros(&[1, 2]));
        let err = project(&[1.0, 1.0], &MilParams { set }).unwrap_err();
        assert!(err.to_string().contains("zero-norm embedding"));
    }

    #[test]
    fn projection_is_unit_norm() {
        let (p, x) = small();
        let out = mil_forward(&x, &p).unwrap();
        let z = project(&out.rep, &p).unwrap();
        assert_abs_diff_eq!(z.z.iter().map(|v| v * v).sum::<f64>().sqrt(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let (p, x) = small();
        let err = finite_diff_check(
            |tape, b| {
                let xv = tape.constant(x.clone());
                let t = mil_forward_traced(tape, xv, b, "")?;
                cross_entropy_traced(tape, t.logits, 1)
            },
            &p.set,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-3, "max relative error {err}");
    }

    #[test]
    fn empty_bag_errors() {
        let (p, _) = small();
        assert!(matches!(mil_forward(&Tensor::zeros(&[0, 3]), &p), Err(Error::EmptyBag)));
    }
}
