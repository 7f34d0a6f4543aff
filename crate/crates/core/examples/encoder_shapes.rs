//! Shape propagation through the encoder presets, layer by layer.
//!
//! cargo run --example encoder_shapes

use pipeinv::encoders::EncoderSpec;

fn main() -> pipeinv::Result<()> {
    for spec in [EncoderSpec::dcgan(1), EncoderSpec::dcgan(3), EncoderSpec::compact(1, 16), EncoderSpec::alexnet3d()] {
        println!("{} input {:?} -> representation {}", spec.name, spec.input_shape, spec.representation_dim);
        for (k, shape) in spec.propagate()?.iter().enumerate() {
            println!("  layer {}: {} units x {:?} = {} features", k + 1, shape.channels, shape.spatial, shape.flat_len());
        }
    }
    Ok(())
}
