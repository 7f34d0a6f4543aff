use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{s, Array2, Array4, ArrayD, IxDyn};
use ndarray_npy::{ReadNpyExt, WriteNpyExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::heads::{ProjectionHead, ProjectionHeadSpec};
use super::network::Encoder;
use super::spec::{EncoderSpec, LayerShape};
use crate::datasets::SingleView;
use crate::error::{Error, IoContext, Result};
use crate::nn::{FeatureMap, Linear, Param};
use crate::rng;

const CHECKPOINT_VERSION: u32 = 1;
/// Samples per forward pass during extraction and prediction.
pub const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Upsl,
    Mpsl,
    Pxl,
}

impl Paradigm {
    pub fn name(self) -> &'static str {
        match self {
            Paradigm::Upsl => "upsl",
            Paradigm::Mpsl => "mpsl",
            Paradigm::Pxl => "pxl",
        }
    }
}

impl std::fmt::Display for Paradigm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub paradigm: Paradigm,
    pub seed: u64,
    pub fold: usize,
    pub config_hash: String,
    /// View(s) the model was trained on: `a`, `b` or `a+b`.
    pub view: String,
    pub class_count: usize,
    #[serde(default)]
    pub lambda: Option<f64>,
}

/// Seeded encoder construction.
pub fn build_encoder(spec: &EncoderSpec, seed: u64) -> Result<Encoder> {
    Encoder::new(spec, &mut rng::stream(seed, "init/encoder"))
}

/// Encoder `E`, linear classification head `g` and projection head `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub encoder: Encoder,
    pub classifier: Linear,
    pub projection: ProjectionHead,
    pub metadata: ModelMetadata,
}

/// Both halves of a jointly trained model pair; `a` consumes view A.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModelPair {
    pub a: TrainedModel,
    pub b: TrainedModel,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub z: Array2<f32>,
    pub logits: Array2<f32>,
    /// Per-layer outputs when capture was requested.
    pub activations: Option<Vec<FeatureMap>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    spec: EncoderSpec,
    projection: ProjectionHeadSpec,
    metadata: ModelMetadata,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    file: String,
    shape: Vec<usize>,
}

impl TrainedModel {
    /// Fresh model; initial parameters are a function of `seed` alone.
    pub fn new(spec: &EncoderSpec, projection: ProjectionHeadSpec, metadata: ModelMetadata, seed: u64) -> Result<Self> {
        projection.validate(spec.representation_dim)?;
        if metadata.class_count < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 classes, got {}", metadata.class_count)));
        }
        let encoder = build_encoder(spec, seed)?;
        let classifier = Linear::new(spec.representation_dim, metadata.class_count, &mut rng::stream(seed, "init/classifier"));
        let projection = ProjectionHead::new(projection, &mut rng::stream(seed, "init/projection"));
        Ok(TrainedModel { encoder, classifier, projection, metadata })
    }

    pub fn spec(&self) -> &EncoderSpec {
        self.encoder.spec()
    }

    /// Eval-mode forward pass.
    pub fn forward(&self, batch: &Array4<f32>, capture: bool) -> Result<ForwardOutput> {
        let (z, acts) = self.encoder.infer(batch, capture)?;
        let logits = self.classifier.infer(&z);
        Ok(ForwardOutput { z, logits, activations: capture.then_some(acts) })
    }

    /// Eval-mode representations of every sample of `view`, in sample-id order.
    pub fn represent(&self, view: &SingleView) -> Result<Array2<f32>> {
        let mut out = Array2::zeros((view.len(), self.encoder.representation_dim()));
        for start in (0..view.len()).step_by(EVAL_BATCH) {
            let ids: Vec<usize> = (start..(start + EVAL_BATCH).min(view.len())).collect();
            let (z, _) = self.encoder.infer(&view.batch(&ids), false)?;
            out.slice_mut(s![start..start + ids.len(), ..]).assign(&z);
        }
        Ok(out)
    }

    /// Trainable parameters: encoder, classifier, projection.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.encoder.params_mut();
        out.push(&mut self.classifier.weight);
        out.push(&mut self.classifier.bias);
        out.extend(self.projection.params_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
            + self.classifier.weight.len()
            + self.classifier.bias.len()
            + self.projection.layers().iter().map(|l| l.weight.len() + l.bias.len()).sum::<usize>()
    }

    /// Every persisted tensor, parameters and buffers, under stable names.
    pub fn tensors(&self) -> Vec<(String, ArrayD<f32>)> {
        let mut out = self.encoder.tensors();
        out.push(("classifier.weight".into(), self.classifier.weight.value.clone()));
        out.push(("classifier.bias".into(), self.classifier.bias.value.clone()));
        for (i, l) in self.projection.layers().iter().enumerate() {
            out.push((format!("projection.{}.weight", i + 1), l.weight.value.clone()));
            out.push((format!("projection.{}.bias", i + 1), l.bias.value.clone()));
        }
        out
    }

    /// SHA-256 over every tensor's name, shape and little-endian bytes.
    pub fn parameter_hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.tensors() {
            h.update(name.as_bytes());
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.iter() {
                h.update(v.to_le_bytes());
            }
        }
        crate::datasets::cache::hex(&h.finalize())
    }

    /// Writes a single zip archive: `model.json` plus one `.npy` per tensor.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).at(dir)?;
        }
        let file = File::create(path).at(path)?;
        let mut zip = zip::ZipWriter::new(BufWriter::new(file));
        let opts = zip::write::SimpleFileOptions::default().compression_method(zip::CompressionMethod::Deflated);
        let mut entries = Vec::new();
        for (name, t) in self.tensors() {
            let file = format!("params/{name}.npy");
            let mut buf = Vec::new();
            t.write_npy(&mut buf)?;
            zip.start_file(file.as_str(), opts)?;
            zip.write_all(&buf).at(path)?;
            entries.push(TensorEntry { name, file, shape: t.shape().to_vec() });
        }
        let header = CheckpointHeader {
            format_version: CHECKPOINT_VERSION,
            spec: self.spec().clone(),
            projection: self.projection.spec,
            metadata: self.metadata.clone(),
            tensors: entries,
        };
        zip.start_file("model.json", opts)?;
        zip.write_all(serde_json::to_string_pretty(&header)?.as_bytes()).at(path)?;
        zip.finish()?.flush().at(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut zip = zip::ZipArchive::new(File::open(path).at(path)?)?;
        let mut json = String::new();
        zip.by_name("model.json")?.read_to_string(&mut json).at(path)?;
        let header: CheckpointHeader = serde_json::from_str(&json)?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", header.format_version)));
        }
        let mut model = TrainedModel::new(&header.spec, header.projection, header.metadata, 0)?;
        let mut loaded: HashMap<String, ArrayD<f32>> = HashMap::new();
        for e in &header.tensors {
            let mut bytes = Vec::new();
            zip.by_name(&e.file)?.read_to_end(&mut bytes).at(path)?;
            let arr = ArrayD::<f32>::read_npy(bytes.as_slice())?;
            if arr.shape() != e.shape.as_slice() {
                return Err(Error::Checkpoint(format!("{} has shape {:?}, header says {:?}", e.name, arr.shape(), e.shape)));
            }
            loaded.insert(e.name.clone(), arr);
        }
        model.assign_tensors(&mut loaded)?;
        if let Some(extra) = loaded.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
        }
        Ok(model)
    }

    fn assign_tensors(&mut self, loaded: &mut HashMap<String, ArrayD<f32>>) -> Result<()> {
        let mut take = |name: &str, mut dst: ndarray::ArrayViewMutD<'_, f32>| -> Result<()> {
            let src = loaded.remove(name).ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if src.shape() != dst.shape() {
                return Err(Error::Checkpoint(format!("{name} has shape {:?}, model expects {:?}", src.shape(), dst.shape())));
            }
            dst.assign(&src);
            Ok(())
        };
        for (name, dst) in self.encoder.tensors_mut() {
            take(&name, dst)?;
        }
        take("classifier.weight", self.classifier.weight.value.view_mut())?;
        take("classifier.bias", self.classifier.bias.value.view_mut())?;
        for (i, l) in self.projection.layers_mut().iter_mut().enumerate() {
            take(&format!("projection.{}.weight", i + 1), l.weight.value.view_mut())?;
            take(&format!("projection.{}.bias", i + 1), l.bias.value.view_mut())?;
        }
        Ok(())
    }
}

/// Flattened activations of one layer over a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    /// `m × u`, row `r` belongs to `sample_ids[r]`; columns in `(c, y, x)` order.
    pub values: Array2<f32>,
    pub layer_id: usize,
    pub sample_ids: Vec<usize>,
    pub shape: LayerShape,
}

impl ActivationMatrix {
    /// Row `r` restored to its `(c, spatial...)` block.
    pub fn unflatten_row(&self, r: usize) -> ArrayD<f32> {
        let mut dims = vec![self.shape.channels];
        dims.extend(&self.shape.spatial);
        self.values.row(r).to_owned().into_shape_with_order(IxDyn(&dims)).expect("row length matches layer shape")
    }
}

/// Layer ids are 1-based conv layer indices; `layer_count + 1` selects the representation.
pub fn extract_activations(model: &TrainedModel, view: &SingleView, layer_ids: &[usize]) -> Result<Vec<ActivationMatrix>> {
    let n_layers = model.encoder.layer_count();
    let shapes = model.encoder.layer_shapes();
    let rep_shape = LayerShape { channels: model.encoder.representation_dim(), spatial: vec![] };
    let shape_of = |id: usize| -> Result<LayerShape> {
        match id {
            0 => Err(Error::UnknownLayer(0)),
            i if i <= n_layers => Ok(shapes[i - 1].clone()),
            i if i == n_layers + 1 => Ok(rep_shape.clone()),
            i => Err(Error::UnknownLayer(i)),
        }
    };
    let mut out: Vec<ActivationMatrix> = layer_ids
        .iter()
        .map(|&id| {
            let shape = shape_of(id)?;
            Ok(ActivationMatrix { values: Array2::zeros((view.len(), shape.flat_len())), layer_id: id, sample_ids: (0..view.len()).collect(), shape })
        })
        .collect::<Result<_>>()?;
    for start in (0..view.len()).step_by(EVAL_BATCH) {
        let ids: Vec<usize> = (start..(start + EVAL_BATCH).min(view.len())).collect();
        let (z, acts) = model.encoder.infer(&view.batch(&ids), true)?;
        for m in &mut out {
            let block = if m.layer_id == n_layers + 1 { z.clone() } else { acts[m.layer_id - 1].flatten_samples() };
            m.values.slice_mut(s![start..start + ids.len(), ..]).assign(&block);
        }
    }
    Ok(out)
}
