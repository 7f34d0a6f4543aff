//! The loss algebra on hand-sized inputs: critic scores with clipping,
//! both NCE denominator variants, the supervised term and their λ blend.
//!
//! cargo run --example objectives

use ndarray::{array, Array2};
use pipeinv::objectives::{contrastive_terms, critic_scores, pxl_objective, supervised_loss, ObjectiveConfig};

fn main() -> pipeinv::Result<()> {
    let cfg = ObjectiveConfig::default();
    let mut e1 = Array2::zeros((1, 64));
    e1[[0, 0]] = 1.0;
    let s = critic_scores(e1.view(), e1.view(), &cfg)?;
    println!("unit vectors, d=64: raw {:.5}, clipped {:.5}", s.raw[[0, 0]], s.clipped[[0, 0]]);

    let big = &e1 * 1000.0;
    let s = critic_scores(big.view(), big.view(), &cfg)?;
    println!("norm-1000 vectors: raw {:.1}, clipped {:.5} (bound {})", s.raw[[0, 0]], s.clipped[[0, 0]], cfg.clip);

    let h_a = array![[1.0, 0.0, 0.5], [0.0, 1.0, -0.5], [0.3, 0.3, 1.0], [-1.0, 0.2, 0.0]];
    let h_b = array![[0.9, 0.1, 0.4], [0.1, 1.1, -0.4], [0.2, 0.4, 0.9], [-0.8, 0.1, 0.1]];
    for include_positive in [false, true] {
        let c = contrastive_terms(h_a.view(), h_b.view(), &ObjectiveConfig { include_positive_in_denominator: include_positive, ..cfg })?;
        println!(
            "contrastive (positive in denominator: {include_positive}): {:.4} = {:.4} + {:.4} + penalty {:.4}",
            c.loss, c.i_to_j, c.j_to_i, c.penalty
        );
    }

    let logits = array![[2.0, 0.1, -1.0], [0.0, 1.5, 0.2], [0.3, 0.2, 2.2], [1.0, 0.9, 0.0]];
    let labels = [0, 1, 2, 0];
    let sup = supervised_loss(logits.view(), logits.view(), &labels)?;
    let con = contrastive_terms(h_a.view(), h_b.view(), &cfg)?.loss;
    for lambda in [0.0, 0.25, 0.5, 0.75, 1.0] {
        println!("lambda {lambda:.2}: objective {:.4}", pxl_objective(sup, con, lambda)?);
    }
    Ok(())
}
