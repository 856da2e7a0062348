// Learn a fixed Hessian from sketched, compressed observations with the two
// server-side rules and watch the approximation error fall.

use flecs::compress::{compress, CompressorSpec};
use flecs::dataset::synthetic_quadratic;
use flecs::hessian::{reconstruct, update_direct, update_lsr1_truncated};
use flecs::rng::{keyed, Stream};
use flecs::sketch::{shared_sketch, SketchFamily, SketchSpec};
use flecs::Matrix;

fn main() -> flecs::Result<()> {
    let (d, m) = (40, 4);
    let q = synthetic_quadratic(d, 0.5, 20.0, 1, 3)?;
    let h = &q.hessian;
    let spec = SketchSpec { m, family: SketchFamily::Gaussian, run_seed: 3 };
    // Unbiased dithering keeps the reconstructed Y~ close to Y.
    let compressor = CompressorSpec::Dither { levels: 128 };

    let mut sr1 = Matrix::zeros(d, d);
    let mut direct = Matrix::zeros(d, d);
    println!("{:>4} {:>14} {:>14}", "k", "|B-H| lsr1", "|B-H| direct");
    for k in 0..40u64 {
        let s = shared_sketch(&spec, k, d)?;
        let y = h * &s;
        let mm = s.transpose() * &y;
        for (b, lsr1) in [(&mut sr1, true), (&mut direct, false)] {
            let mut rng = keyed(3, k, 0, Stream::Compress);
            let c = compress(&compressor, &(&y - &*b * &s), &mut rng)?;
            let recon = reconstruct(&c, b, &s, &mm)?;
            *b = if lsr1 {
                update_lsr1_truncated(b, &recon.y_tilde, &recon.m, &s, 1e-6)?
            } else {
                update_direct(b, &recon.y_tilde, &recon.m, 1.0)?
            };
        }
        if k % 5 == 4 {
            println!("{:>4} {:>14.4e} {:>14.4e}", k + 1, (&sr1 - h).norm() / h.norm(), (&direct - h).norm() / h.norm());
        }
    }
    // The direct rule with beta = 1 only holds the latest rank-m projection,
    // so it plateaus; the SR1 rule accumulates curvature across iterations.
    Ok(())
}
