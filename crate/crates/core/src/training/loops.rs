use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array2, Array4};
use serde::{Deserialize, Serialize};

use super::config::{TrainConfig, FULL_SET_CAP};
use crate::datasets::{MultiViewDataset, SingleView, UnionView, View};
use crate::encoders::{ModelMetadata, Paradigm, TrainedModel, TrainedModelPair, EVAL_BATCH};
use crate::error::{Error, IoContext, Result};
use crate::nn::Optimizer;
use crate::objectives::{cross_entropy, pxl_terms, NceScope, ObjectiveConfig};
use crate::rng;

/// One row of the per-epoch log. Two-encoder runs fill the `_b` and component columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub train_acc_b: Option<f64>,
    pub val_acc_b: Option<f64>,
    pub train_supervised: Option<f64>,
    pub train_contrastive: Option<f64>,
    pub val_supervised: Option<f64>,
    pub val_contrastive: Option<f64>,
}

/// Loss components of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub supervised: f64,
    pub contrastive: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub paradigm: Paradigm,
    pub view: String,
    pub epochs: Vec<EpochLog>,
    #[serde(skip)]
    pub steps: Vec<StepLog>,
    pub checkpoint: Option<String>,
    pub wall_clock_secs: f64,
    pub config_hash: String,
    /// Epoch whose parameters were kept (1-based).
    pub selected_epoch: usize,
}

impl RunRecord {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.epochs {
            w.serialize(e)?;
        }
        w.flush().at(path)?;
        Ok(())
    }

    pub fn final_epoch(&self) -> &EpochLog {
        self.epochs.last().expect("at least one epoch")
    }
}

/// Labeled samples that can be drawn in batches.
pub trait SupervisedSource {
    fn len(&self) -> usize;
    fn batch(&self, ids: &[usize]) -> (Array4<f32>, Vec<usize>);
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SupervisedSource for SingleView {
    fn len(&self) -> usize {
        SingleView::len(self)
    }
    fn batch(&self, ids: &[usize]) -> (Array4<f32>, Vec<usize>) {
        (SingleView::batch(self, ids), ids.iter().map(|&i| self.labels[i]).collect())
    }
}

impl SupervisedSource for UnionView {
    fn len(&self) -> usize {
        UnionView::len(self)
    }
    fn batch(&self, ids: &[usize]) -> (Array4<f32>, Vec<usize>) {
        let first = self.parts[0].images.image_shape();
        let (h, w, c) = first;
        let mut x = Array4::zeros((ids.len(), c, h, w));
        let mut labels = Vec::with_capacity(ids.len());
        for (k, &id) in ids.iter().enumerate() {
            let (part, local) = self.locate(id);
            let one = self.parts[part].batch(&[local]);
            x.slice_mut(s![k..k + 1, .., .., ..]).assign(&one);
            labels.push(self.parts[part].labels[local]);
        }
        (x, labels)
    }
}

fn to_f64(a: &Array2<f32>) -> Array2<f64> {
    a.mapv(|v| v as f64)
}

fn to_f32(a: &Array2<f64>) -> Array2<f32> {
    a.mapv(|v| v as f32)
}

fn argmax_rows(logits: &Array2<f32>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| r.iter().enumerate().fold((0, f32::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best }).0)
        .collect()
}

fn correct(logits: &Array2<f32>, labels: &[usize]) -> usize {
    argmax_rows(logits).iter().zip(labels).filter(|(p, y)| p == y).count()
}

/// Batches of a fresh permutation; a trailing batch of one is dropped
/// (batch statistics and contrastive negatives need at least two rows).
fn epoch_batches(rng: &mut rng::Rng, n: usize, batch: usize) -> Vec<Vec<usize>> {
    let perm = rng::permutation(rng, n);
    perm.chunks(batch).filter(|c| c.len() >= 2 || n == 1).map(|c| c.to_vec()).collect()
}

fn non_finite(epoch: usize, step: usize, ids: &[usize], parts: serde_json::Value) -> Error {
    let snapshot = serde_json::json!({
        "batch_ids_head": ids.iter().take(16).collect::<Vec<_>>(),
        "batch_size": ids.len(),
        "loss": parts,
    });
    Error::NonFiniteLoss { epoch, step, snapshot: snapshot.to_string() }
}

/// Eval-mode mean cross-entropy and accuracy.
pub fn evaluate_supervised<S: SupervisedSource + ?Sized>(model: &TrainedModel, data: &S) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut hits = 0;
    for start in (0..data.len()).step_by(EVAL_BATCH) {
        let ids: Vec<usize> = (start..(start + EVAL_BATCH).min(data.len())).collect();
        let (x, y) = data.batch(&ids);
        let out = model.forward(&x, false)?;
        loss += cross_entropy(to_f64(&out.logits).view(), &y)?.0 * ids.len() as f64;
        hits += correct(&out.logits, &y);
    }
    let n = data.len().max(1) as f64;
    Ok((loss / n, hits as f64 / n))
}

fn metadata(cfg: &TrainConfig, view: &str, class_count: usize) -> ModelMetadata {
    ModelMetadata {
        paradigm: cfg.paradigm,
        seed: cfg.seed,
        fold: cfg.fold,
        config_hash: cfg.hash(),
        view: view.into(),
        class_count,
        lambda: cfg.objective.as_ref().filter(|_| cfg.paradigm == Paradigm::Pxl).map(|o| o.lambda),
    }
}

/// Initial-parameter seed for the encoder consuming `view`; shared across
/// paradigms so paired runs start from identical weights.
pub fn init_seed(seed: u64, view: &str) -> u64 {
    rng::derive(seed, &format!("init/{view}"))
}

fn supervised_run<S: SupervisedSource>(
    train: &S,
    val: Option<&S>,
    image_shape: (usize, usize, usize),
    class_count: usize,
    view: &str,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, RunRecord)> {
    cfg.validate()?;
    if train.len() < 2 {
        return Err(Error::InvalidInput(format!("training split has {} samples", train.len())));
    }
    let (h, w, c) = image_shape;
    let spec = cfg.encoder.resolve((c, h, w))?;
    let mut model = TrainedModel::new(&spec, cfg.projection(spec.representation_dim), metadata(cfg, view, class_count), init_seed(cfg.seed, view))?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut shuffle = rng::stream(cfg.seed, &format!("shuffle/{}/{view}/fold{}", cfg.paradigm, cfg.fold));
    let started = Instant::now();
    let mut record = RunRecord {
        paradigm: cfg.paradigm,
        view: view.into(),
        epochs: Vec::with_capacity(cfg.epochs),
        steps: Vec::new(),
        checkpoint: None,
        wall_clock_secs: 0.0,
        config_hash: cfg.hash(),
        selected_epoch: cfg.epochs,
    };
    let mut best: Option<(f64, usize, TrainedModel)> = None;
    for epoch in 1..=cfg.epochs {
        let (mut loss_sum, mut hits, mut seen) = (0.0, 0usize, 0usize);
        for (step, ids) in epoch_batches(&mut shuffle, train.len(), cfg.batch_size).into_iter().enumerate() {
            let (x, y) = train.batch(&ids);
            model.zero_grad();
            let (z, tape) = model.encoder.forward_train(&x)?;
            let (logits, cache) = model.classifier.forward(&z);
            let (loss, grad) = cross_entropy(to_f64(&logits).view(), &y)?;
            if !loss.is_finite() {
                return Err(non_finite(epoch, step, &ids, serde_json::json!({ "cross_entropy": loss.to_string() })));
            }
            let gz = model.classifier.backward(&to_f32(&grad), &cache);
            model.encoder.backward(tape, &gz);
            opt.step(model.params_mut());
            record.steps.push(StepLog { epoch, step, loss, supervised: loss, contrastive: None });
            loss_sum += loss * ids.len() as f64;
            hits += correct(&logits, &y);
            seen += ids.len();
        }
        let (val_loss, val_acc) = match val {
            Some(v) if !v.is_empty() => {
                let (l, a) = evaluate_supervised(&model, v)?;
                (Some(l), Some(a))
            }
            _ => (None, None),
        };
        record.epochs.push(EpochLog {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_acc: hits as f64 / seen as f64,
            val_loss,
            val_acc,
            train_acc_b: None,
            val_acc_b: None,
            train_supervised: None,
            train_contrastive: None,
            val_supervised: None,
            val_contrastive: None,
        });
        if cfg.select_best_val {
            if let Some(a) = val_acc {
                if best.as_ref().is_none_or(|(b, _, _)| a > *b) {
                    best = Some((a, epoch, model.clone()));
                }
            }
        }
    }
    if let Some((_, epoch, m)) = best {
        model = m;
        record.selected_epoch = epoch;
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok((model, record))
}

/// One encoder and classification head trained with cross-entropy on a single view.
pub fn train_upsl(train: &SingleView, val: Option<&SingleView>, view: View, cfg: &TrainConfig) -> Result<(TrainedModel, RunRecord)> {
    expect_paradigm(cfg, Paradigm::Upsl)?;
    supervised_run(train, val, train.images.image_shape(), train.class_count(), view.name(), cfg)
}

/// One encoder trained on the union of both views' samples.
pub fn train_mpsl(train: &MultiViewDataset, val: Option<&MultiViewDataset>, cfg: &TrainConfig) -> Result<(TrainedModel, RunRecord)> {
    expect_paradigm(cfg, Paradigm::Mpsl)?;
    let shape = train.view_a.image_shape();
    if train.view_b.image_shape() != shape {
        return Err(Error::InvalidInput(format!(
            "merged-view training needs equal image shapes, got {:?} and {:?}",
            shape,
            train.view_b.image_shape()
        )));
    }
    let union = |d: &MultiViewDataset| d.distinct_view(View::A).union(&d.distinct_view(View::B));
    let train_u = union(train)?;
    let val_u = val.map(union).transpose()?;
    supervised_run(&train_u, val_u.as_ref(), shape, train.class_count(), "a+b", cfg)
}

fn expect_paradigm(cfg: &TrainConfig, p: Paradigm) -> Result<()> {
    if cfg.paradigm != p {
        return Err(Error::config("training.paradigm", format!("expected {p}, got {}", cfg.paradigm)));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
struct PxlTotals {
    loss: f64,
    sup: f64,
    con: f64,
    hits_a: usize,
    hits_b: usize,
    seen: usize,
    con_batches: usize,
}

/// Eval-mode combined loss and per-view accuracy over `data`, in pair order.
/// The contrastive term is averaged over consecutive chunks of `chunk` pairs.
pub fn evaluate_pxl(pair: &TrainedModelPair, data: &MultiViewDataset, objective: &ObjectiveConfig, chunk: usize) -> Result<(f64, f64, f64, f64, f64)> {
    let (va, vb) = (data.single_view(View::A), data.single_view(View::B));
    let mut t = PxlTotals::default();
    let chunk = chunk.max(2);
    for start in (0..data.len()).step_by(chunk) {
        let ids: Vec<usize> = (start..(start + chunk).min(data.len())).collect();
        if ids.len() < 2 {
            continue;
        }
        let y: Vec<usize> = ids.iter().map(|&i| data.labels()[i]).collect();
        let oa = pair.a.forward(&va.batch(&ids), false)?;
        let ob = pair.b.forward(&vb.batch(&ids), false)?;
        let ha = pair.a.projection.infer(&oa.z);
        let hb = pair.b.projection.infer(&ob.z);
        let terms = pxl_terms(to_f64(&oa.logits).view(), to_f64(&ob.logits).view(), &y, to_f64(&ha).view(), to_f64(&hb).view(), objective)?;
        let n = ids.len() as f64;
        t.sup += terms.supervised.loss * n;
        t.con += terms.contrastive.loss;
        t.con_batches += 1;
        t.hits_a += correct(&oa.logits, &y);
        t.hits_b += correct(&ob.logits, &y);
        t.seen += ids.len();
    }
    if t.seen == 0 {
        return Err(Error::InvalidInput("evaluation split has fewer than 2 pairs".into()));
    }
    let n = t.seen as f64;
    let sup = t.sup / n;
    let con = t.con / t.con_batches as f64;
    let loss = crate::objectives::pxl_objective(sup, con, objective.lambda)?;
    Ok((loss, sup, con, t.hits_a as f64 / n, t.hits_b as f64 / n))
}

/// Two encoders, classification heads and projection heads trained jointly
/// on `λ·sup + (1−λ)·con`. Both encoders see the same pair indices each step.
pub fn train_pxl(train: &MultiViewDataset, val: Option<&MultiViewDataset>, cfg: &TrainConfig) -> Result<(TrainedModelPair, RunRecord)> {
    expect_paradigm(cfg, Paradigm::Pxl)?;
    cfg.validate()?;
    let objective = cfg.objective.expect("validated");
    let batch_size = match objective.nce_scope {
        NceScope::Minibatch => cfg.batch_size,
        NceScope::FullSet => {
            if train.len() > FULL_SET_CAP {
                return Err(Error::config("objective.nce_scope", format!("full_set supports at most {FULL_SET_CAP} training pairs, got {}", train.len())));
            }
            train.len()
        }
    };
    if train.len() < 2 {
        return Err(Error::InvalidInput(format!("training split has {} pairs", train.len())));
    }
    let (ha, wa, ca) = train.view_a.image_shape();
    let (hb, wb, cb) = train.view_b.image_shape();
    let spec_a = cfg.encoder.resolve((ca, ha, wa))?;
    let spec_b = cfg.encoder.resolve((cb, hb, wb))?;
    let k = train.class_count();
    let mut pair = TrainedModelPair {
        a: TrainedModel::new(&spec_a, cfg.projection(spec_a.representation_dim), metadata(cfg, "a", k), init_seed(cfg.seed, "a"))?,
        b: TrainedModel::new(&spec_b, cfg.projection(spec_b.representation_dim), metadata(cfg, "b", k), init_seed(cfg.seed, "b"))?,
    };
    let (va, vb) = (train.single_view(View::A), train.single_view(View::B));
    let mut opt_a = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut opt_b = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut shuffle = rng::stream(cfg.seed, &format!("shuffle/pxl/fold{}", cfg.fold));
    let started = Instant::now();
    let mut record = RunRecord {
        paradigm: Paradigm::Pxl,
        view: "a|b".into(),
        epochs: Vec::with_capacity(cfg.epochs),
        steps: Vec::new(),
        checkpoint: None,
        wall_clock_secs: 0.0,
        config_hash: cfg.hash(),
        selected_epoch: cfg.epochs,
    };
    let mut best: Option<(f64, usize, TrainedModelPair)> = None;
    for epoch in 1..=cfg.epochs {
        let mut t = PxlTotals::default();
        for (step, ids) in epoch_batches(&mut shuffle, train.len(), batch_size).into_iter().enumerate() {
            let y: Vec<usize> = ids.iter().map(|&i| train.labels()[i]).collect();
            let (xa, xb) = (va.batch(&ids), vb.batch(&ids));
            pair.a.zero_grad();
            pair.b.zero_grad();
            let (za, tape_a) = pair.a.encoder.forward_train(&xa)?;
            let (zb, tape_b) = pair.b.encoder.forward_train(&xb)?;
            let (la, cache_la) = pair.a.classifier.forward(&za);
            let (lb, cache_lb) = pair.b.classifier.forward(&zb);
            let (pa, tape_pa) = pair.a.projection.forward(&za);
            let (pb, tape_pb) = pair.b.projection.forward(&zb);
            let terms = pxl_terms(to_f64(&la).view(), to_f64(&lb).view(), &y, to_f64(&pa).view(), to_f64(&pb).view(), &objective)?;
            if !terms.loss.is_finite() {
                return Err(non_finite(
                    epoch,
                    step,
                    &ids,
                    serde_json::json!({
                        "total": terms.loss.to_string(),
                        "supervised": terms.supervised.loss.to_string(),
                        "contrastive": terms.contrastive.loss.to_string(),
                        "penalty": terms.contrastive.penalty.to_string(),
                    }),
                ));
            }
            let [g_la, g_lb, g_pa, g_pb] = terms.scaled_grads();
            let gza = pair.a.classifier.backward(&to_f32(&g_la), &cache_la) + pair.a.projection.backward(&to_f32(&g_pa), &tape_pa);
            let gzb = pair.b.classifier.backward(&to_f32(&g_lb), &cache_lb) + pair.b.projection.backward(&to_f32(&g_pb), &tape_pb);
            pair.a.encoder.backward(tape_a, &gza);
            pair.b.encoder.backward(tape_b, &gzb);
            opt_a.step(pair.a.params_mut());
            opt_b.step(pair.b.params_mut());
            record.steps.push(StepLog { epoch, step, loss: terms.loss, supervised: terms.supervised.loss, contrastive: Some(terms.contrastive.loss) });
            let n = ids.len() as f64;
            t.loss += terms.loss * n;
            t.sup += terms.supervised.loss * n;
            t.con += terms.contrastive.loss * n;
            t.hits_a += correct(&la, &y);
            t.hits_b += correct(&lb, &y);
            t.seen += ids.len();
        }
        let n = t.seen as f64;
        let mut log = EpochLog {
            epoch,
            train_loss: t.loss / n,
            train_acc: t.hits_a as f64 / n,
            val_loss: None,
            val_acc: None,
            train_acc_b: Some(t.hits_b as f64 / n),
            val_acc_b: None,
            train_supervised: Some(t.sup / n),
            train_contrastive: Some(t.con / n),
            val_supervised: None,
            val_contrastive: None,
        };
        if let Some(v) = val.filter(|v| v.len() >= 2) {
            let (loss, sup, con, acc_a, acc_b) = evaluate_pxl(&pair, v, &objective, batch_size)?;
            log.val_loss = Some(loss);
            log.val_supervised = Some(sup);
            log.val_contrastive = Some(con);
            log.val_acc = Some(acc_a);
            log.val_acc_b = Some(acc_b);
            if cfg.select_best_val {
                let score = acc_a + acc_b;
                if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                    best = Some((score, epoch, pair.clone()));
                }
            }
        }
        record.epochs.push(log);
    }
    if let Some((_, epoch, p)) = best {
        pair = p;
        record.selected_epoch = epoch;
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok((pair, record))
}

/// Eval-mode predicted labels for every sample of `view`.
pub fn predict_labels(model: &TrainedModel, view: &SingleView) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(view.len());
    for start in (0..view.len()).step_by(EVAL_BATCH) {
        let ids: Vec<usize> = (start..(start + EVAL_BATCH).min(view.len())).collect();
        let logits = model.forward(&view.batch(&ids), false)?.logits;
        out.extend(argmax_rows(&logits));
    }
    Ok(out)
}

/// Row-wise argmax (first maximum wins).
pub fn argmax(logits: &Array2<f32>) -> Vec<usize> {
    argmax_rows(logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{synthetic_pipeline_views, TransformSpec};
    use crate::testutil::toy_corpus;
    use crate::training::{EncoderChoice, EncoderPreset};

    fn cfg(paradigm: Paradigm, epochs: usize) -> TrainConfig {
        let mut c = TrainConfig::mri_upsl().with_epochs(epochs);
        c.paradigm = paradigm;
        c.encoder = EncoderChoice::Preset(EncoderPreset::Compact);
        c.batch_size = 10;
        c.objective = (paradigm == Paradigm::Pxl).then(ObjectiveConfig::default);
        c
    }

    fn pair() -> MultiViewDataset {
        let set = toy_corpus(12, 2, 12, 1);
        synthetic_pipeline_views(&set, &[TransformSpec::Identity, TransformSpec::GaussianSmooth { sigma: 0.8 }], 3).unwrap().pair(0, 1).unwrap()
    }

    #[test]
    fn upsl_fits_separable_views() {
        let set = std::sync::Arc::new(toy_corpus(25, 2, 12, 1));
        let view = SingleView::from_set(set);
        let mut c = cfg(Paradigm::Upsl, 20);
        c.batch_size = 4;
        let (model, record) = train_upsl(&view, Some(&view), View::A, &c).unwrap();
        assert_eq!(record.epochs.len(), 20);
        assert!(record.epochs.windows(2).all(|w| w[1].epoch == w[0].epoch + 1));
        assert!(record.final_epoch().train_loss < record.epochs[0].train_loss);
        let (_, acc) = evaluate_supervised(&model, &view).unwrap();
        assert!(acc >= 0.95, "{acc}");
        assert_eq!(Some(acc), record.final_epoch().val_acc);
    }

    #[test]
    fn runs_are_deterministic() {
        let data = pair();
        let c = cfg(Paradigm::Pxl, 2);
        let (p1, r1) = train_pxl(&data, None, &c).unwrap();
        let (p2, r2) = train_pxl(&data, None, &c).unwrap();
        assert_eq!(p1.a.parameter_hash(), p2.a.parameter_hash());
        assert_eq!(p1.b.parameter_hash(), p2.b.parameter_hash());
        assert_eq!(r1.epochs, r2.epochs);
    }

    #[test]
    fn paired_paradigms_share_initial_weights() {
        let data = pair();
        let mut c = cfg(Paradigm::Pxl, 1);
        c.learning_rate = 1e-30;
        let (p, _) = train_pxl(&data, None, &c).unwrap();
        let spec = EncoderSpec::compact(1, 12);
        let fresh = TrainedModel::new(&spec, c.projection(16), p.a.metadata.clone(), init_seed(c.seed, "a")).unwrap();
        assert_eq!(fresh.encoder.tensors()[0], p.a.encoder.tensors()[0]);
    }

    #[test]
    fn lambda_endpoints() {
        let data = pair();
        let mut c = cfg(Paradigm::Pxl, 2);
        c.objective.as_mut().unwrap().lambda = 1.0;
        let (_, r) = train_pxl(&data, None, &c).unwrap();
        assert!(!r.steps.is_empty());
        assert!(r.steps.iter().all(|s| s.loss == s.supervised));

        c.objective.as_mut().unwrap().lambda = 0.0;
        let (p, r) = train_pxl(&data, None, &c).unwrap();
        assert!(r.steps.iter().all(|s| Some(s.loss) == s.contrastive));
        for (m, view) in [(&p.a, "a"), (&p.b, "b")] {
            let spec = m.spec().clone();
            let fresh = TrainedModel::new(&spec, c.projection(16), m.metadata.clone(), init_seed(c.seed, view)).unwrap();
            assert_eq!(fresh.classifier, m.classifier);
            assert_ne!(fresh.encoder.tensors(), m.encoder.tensors());
        }
    }

    use crate::encoders::EncoderSpec;

    #[test]
    fn mpsl_trains_on_the_union() {
        let data = pair();
        let union = data.distinct_view(View::A).union(&data.distinct_view(View::B)).unwrap();
        assert_eq!(union.len(), 2 * data.len());
        let (model, r) = train_mpsl(&data, Some(&data), &cfg(Paradigm::Mpsl, 2)).unwrap();
        assert_eq!(model.metadata.view, "a+b");
        assert_eq!(r.epochs.len(), 2);

        let rgb = std::sync::Arc::new(toy_corpus(12, 2, 12, 3));
        let mixed = MultiViewDataset::new(data.view_a.clone(), rgb, data.pairs().to_vec(), data.pairing_mode, data.split).unwrap();
        assert!(matches!(train_mpsl(&mixed, None, &cfg(Paradigm::Mpsl, 1)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn paradigm_and_scope_checks() {
        let data = pair();
        assert!(matches!(train_pxl(&data, None, &cfg(Paradigm::Upsl, 1)), Err(Error::Config { .. })));
        let mut c = cfg(Paradigm::Pxl, 1);
        c.objective.as_mut().unwrap().nce_scope = NceScope::FullSet;
        let (_, r) = train_pxl(&data, None, &c).unwrap();
        assert_eq!(r.steps.len(), 1);
    }

    #[test]
    fn divergence_aborts_with_snapshot() {
        let data = pair();
        let mut c = cfg(Paradigm::Upsl, 30);
        c.learning_rate = 1e38;
        let view = data.single_view(View::A);
        match train_upsl(&view, None, View::A, &c) {
            Err(Error::NonFiniteLoss { snapshot, .. }) => assert!(snapshot.contains("cross_entropy")),
            other => panic!("expected non-finite loss, got {:?}", other.map(|(_, r)| r.final_epoch().clone())),
        }
    }

    #[test]
    fn record_csv_has_one_row_per_epoch() {
        let data = pair();
        let (_, r) = train_pxl(&data, Some(&data), &cfg(Paradigm::Pxl, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        r.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().contains("val_contrastive"));
    }
}
