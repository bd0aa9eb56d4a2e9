//! ONNX-backed guess operators. A model must take one `f32[1, 1, side, side]`
//! tensor and return one tensor of the same shape. A run directory holds one
//! file per step, `psi_{h}.onnx`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use prost::Message;
use tract_onnx::pb;
use tract_onnx::prelude::*;

use crate::error::{Error, Result};
use crate::guess::GuessOperator;
use crate::image::Image;

/// Opset written by [`write_conv_model`] and expected of exported networks.
pub const ONNX_OPSET: i64 = 13;

pub fn model_file_name(h: usize) -> String {
    format!("psi_{h}.onnx")
}

/// A compiled network. The plan is immutable and shared behind an `Arc`, so
/// clones are cheap and concurrent calls are safe.
#[derive(Clone)]
pub struct ModelGuess {
    path: PathBuf,
    h: Option<usize>,
    side: usize,
    plan: Arc<TypedRunnableModel>,
}

impl std::fmt::Debug for ModelGuess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelGuess")
            .field("path", &self.path)
            .field("h", &self.h)
            .field("side", &self.side)
            .finish_non_exhaustive()
    }
}

fn model_err(path: &Path, reason: impl std::fmt::Display) -> Error {
    Error::Model {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn signature(side: usize) -> [usize; 4] {
    [1, 1, side, side]
}

pub fn load_model_guess(path: &Path, expected_side: usize) -> Result<ModelGuess> {
    if !path.is_file() {
        return Err(model_err(path, "model file not found"));
    }
    let mut model = tract_onnx::onnx()
        .model_for_path(path)
        .map_err(|e| model_err(path, format!("cannot parse ONNX model: {e:#}")))?;
    if model.inputs.len() != 1 || model.outputs.len() != 1 {
        return Err(model_err(
            path,
            format!(
                "signature mismatch: expected 1 input and 1 output, found {} and {}",
                model.inputs.len(),
                model.outputs.len()
            ),
        ));
    }
    let wanted = signature(expected_side);
    let declared = model
        .input_fact(0)
        .map_err(|e| model_err(path, e))?
        .shape
        .as_concrete_finite()
        .map_err(|e| model_err(path, e))?;
    if let Some(dims) = declared {
        if dims.as_slice() != wanted {
            return Err(model_err(
                path,
                format!("signature mismatch: model input {dims:?}, expected {wanted:?}"),
            ));
        }
    }
    model = model
        .with_input_fact(0, f32::fact(wanted).into())
        .map_err(|e| model_err(path, e))?;
    let typed = model
        .into_optimized()
        .map_err(|e| model_err(path, format!("cannot compile model: {e:#}")))?;
    let out_fact = typed.output_fact(0).map_err(|e| model_err(path, e))?;
    if out_fact.datum_type != f32::datum_type() || out_fact.shape.as_concrete() != Some(&wanted[..]) {
        return Err(model_err(
            path,
            format!("signature mismatch: model output {}, expected f32 {wanted:?}", out_fact.format_dt_shape()),
        ));
    }
    let plan = typed.into_runnable().map_err(|e| model_err(path, e))?;
    Ok(ModelGuess {
        path: path.to_path_buf(),
        h: None,
        side: expected_side,
        plan,
    })
}

/// Loads `psi_0.onnx … psi_{H−1}.onnx` from `dir`.
pub fn load_guess_run(dir: &Path, steps: usize, expected_side: usize) -> Result<Vec<ModelGuess>> {
    (0..steps)
        .map(|h| {
            let mut g = load_model_guess(&dir.join(model_file_name(h)), expected_side)?;
            g.h = Some(h);
            Ok(g)
        })
        .collect()
}

impl ModelGuess {
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn side(&self) -> usize {
        self.side
    }
}

impl GuessOperator for ModelGuess {
    fn descriptor(&self) -> String {
        match self.h {
            Some(h) => format!("model({}, h={h})", self.path.display()),
            None => format!("model({})", self.path.display()),
        }
    }

    fn propose(&self, x: &Image) -> Result<Image> {
        if x.width() != self.side || x.height() != self.side {
            return Err(Error::shape(
                format!("{0}x{0}", self.side),
                format!("{}x{}", x.width(), x.height()),
            ));
        }
        let data: Vec<f32> = x.as_slice().iter().map(|&v| v as f32).collect();
        let input = Tensor::from_shape(&signature(self.side), &data).map_err(|e| model_err(&self.path, e))?;
        let outputs = self
            .plan
            .run(tvec!(input.into()))
            .map_err(|e| model_err(&self.path, format!("inference failed: {e:#}")))?;
        let view = outputs[0]
            .to_plain_array_view::<f32>()
            .map_err(|e| model_err(&self.path, e))?;
        let values: Vec<f64> = view.iter().map(|&v| v as f64).collect();
        if let Some(i) = crate::vector::first_non_finite(&values) {
            return Err(model_err(
                &self.path,
                format!("non-finite activation in network output at pixel {i}"),
            ));
        }
        Image::new(self.side, self.side, values)
    }
}

fn tensor_value_info(name: &str, side: usize) -> pb::ValueInfoProto {
    use pb::tensor_shape_proto::{dimension::Value, Dimension};
    let dim = |d: usize| Dimension {
        value: Some(Value::DimValue(d as i64)),
        ..Default::default()
    };
    pb::ValueInfoProto {
        name: name.into(),
        r#type: Some(pb::TypeProto {
            value: Some(pb::type_proto::Value::TensorType(pb::type_proto::Tensor {
                elem_type: pb::tensor_proto::DataType::Float as i32,
                shape: Some(pb::TensorShapeProto {
                    dim: signature(side).iter().map(|&d| dim(d)).collect(),
                }),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn float_tensor(name: &str, dims: &[i64], data: Vec<f32>) -> pb::TensorProto {
    pb::TensorProto {
        name: name.into(),
        dims: dims.to_vec(),
        data_type: pb::tensor_proto::DataType::Float as i32,
        float_data: data,
        ..Default::default()
    }
}

fn conv_node(input: &str, weight: &str, bias: &str, output: &str) -> pb::NodeProto {
    let ints = |name: &str, v: &[i64]| pb::AttributeProto {
        name: name.into(),
        r#type: pb::attribute_proto::AttributeType::Ints as i32,
        ints: v.to_vec(),
        ..Default::default()
    };
    pb::NodeProto {
        input: vec![input.into(), weight.into(), bias.into()],
        output: vec![output.into()],
        name: output.into(),
        op_type: "Conv".into(),
        attribute: vec![ints("kernel_shape", &[3, 3]), ints("pads", &[1, 1, 1, 1])],
        ..Default::default()
    }
}

/// Writes a small network `y = conv3x3(x; kernel, bias) + conv3x3(x; residual)`
/// with zero padding. Used to build test fixtures without a training stack.
pub fn write_conv_model(
    path: &Path,
    side: usize,
    kernel: [[f32; 3]; 3],
    bias: f32,
    residual: [[f32; 3]; 3],
) -> Result<()> {
    let flat = |k: [[f32; 3]; 3]| k.iter().flatten().copied().collect::<Vec<f32>>();
    let graph = pb::GraphProto {
        name: "conv_guess".into(),
        node: vec![
            conv_node("x", "w_main", "b_main", "main"),
            conv_node("x", "w_res", "b_res", "res"),
            pb::NodeProto {
                input: vec!["main".into(), "res".into()],
                output: vec!["y".into()],
                name: "sum".into(),
                op_type: "Add".into(),
                ..Default::default()
            },
        ],
        initializer: vec![
            float_tensor("w_main", &[1, 1, 3, 3], flat(kernel)),
            float_tensor("b_main", &[1], vec![bias]),
            float_tensor("w_res", &[1, 1, 3, 3], flat(residual)),
            float_tensor("b_res", &[1], vec![0.0]),
        ],
        input: vec![tensor_value_info("x", side)],
        output: vec![tensor_value_info("y", side)],
        ..Default::default()
    };
    let model = pb::ModelProto {
        ir_version: 7,
        opset_import: vec![pb::OperatorSetIdProto {
            domain: String::new(),
            version: ONNX_OPSET,
        }],
        producer_name: "inctpv".into(),
        graph: Some(graph),
        ..Default::default()
    };
    std::fs::write(path, model.encode_to_vec()).map_err(|e| Error::io(path, e))
}

/// Convolution with a centered unit kernel and a zeroed residual branch; maps
/// every image to itself up to `f32` rounding.
pub fn write_identity_model(path: &Path, side: usize) -> Result<()> {
    let mut unit = [[0.0; 3]; 3];
    unit[1][1] = 1.0;
    write_conv_model(path, side, unit, 0.0, [[0.0; 3]; 3])
}
