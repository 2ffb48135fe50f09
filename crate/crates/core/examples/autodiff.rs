//! Reverse-mode gradients through a small conv / relu / transposed-conv
//! graph, compared with central finite differences.

use demsr::nn::gradcheck::check_entries;
use demsr::nn::{he_init, seeded_rng, Graph, Tape, Tensor};

fn main() -> demsr::Result<()> {
    let mut rng = seeded_rng(1);
    let x = Tensor::from_vec([1, 1, 6, 6], (0..36).map(|i| (i as f64 * 0.37).sin()).collect())?;
    let w1 = he_init([4, 1, 3, 3], 9, &mut rng)?;
    let w2 = he_init([4, 1, 4, 4], 16, &mut rng)?;
    let (b1, b2) = (Tensor::zeros([4, 1, 1, 1]), Tensor::zeros([1, 1, 1, 1]));
    let target = Tensor::zeros([1, 1, 12, 12]);

    let loss_of = |w1: &Tensor| -> f64 {
        let mut t = Tape::new();
        let (xv, w1v, b1v, w2v, b2v) = (t.leaf(x.clone(), false), t.leaf(w1.clone(), false), t.leaf(b1.clone(), false), t.leaf(w2.clone(), false), t.leaf(b2.clone(), false));
        let h = t.conv2d(&xv, &w1v, &b1v).unwrap();
        let h = t.relu(&h);
        let y = t.transposed_conv2d(&h, &w2v, &b2v).unwrap();
        let l = t.mean_abs_error(y, &target).unwrap();
        t.get(l).data()[0]
    };

    let mut t = Tape::new();
    let xv = t.leaf(x.clone(), false);
    let w1v = t.leaf(w1.clone(), true);
    let b1v = t.leaf(b1.clone(), true);
    let w2v = t.leaf(w2.clone(), true);
    let b2v = t.leaf(b2.clone(), true);
    let h = t.conv2d(&xv, &w1v, &b1v)?;
    let h = t.relu(&h);
    let y = t.transposed_conv2d(&h, &w2v, &b2v)?;
    let loss = t.mean_abs_error(y, &target)?;
    println!("loss {:.6}, {} tape nodes", t.get(loss).data()[0], t.len());
    let grads = t.backward(loss)?;

    let report = check_entries(&w1, grads.get(w1v).unwrap(), 0..w1.len(), 1e-5, 1e-8, loss_of);
    println!("conv weight: {} entries, max relative error {:.2e}", report.checked, report.max_rel_err);
    Ok(())
}
