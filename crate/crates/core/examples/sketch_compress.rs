// Draw the shared sketch and push one residual block through every
// compressor, printing the error and the bits it would cost on the wire.

use flecs::compress::{block_bits, compress, decompress, CompressorSpec};
use flecs::rng::{keyed, Stream};
use flecs::sketch::{shared_sketch, SketchFamily, SketchSpec};
use flecs::Matrix;

fn main() -> flecs::Result<()> {
    let (d, m) = (123, 8);
    let spec = SketchSpec { m, family: SketchFamily::Gaussian, run_seed: 42 };
    let s = shared_sketch(&spec, 0, d)?;
    // Same seed and iteration on any node gives the same matrix.
    assert_eq!(s, shared_sketch(&spec, 0, d)?);
    let next = shared_sketch(&spec, 1, d)?;
    println!("S_0 is {}x{}, |S_0 - S_1|_F = {:.3}", s.nrows(), s.ncols(), (&s - &next).norm());

    let x = Matrix::from_fn(d, m, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + 0.01 * i as f64);
    println!("{:<22} {:>10} {:>12}", "compressor", "bits", "rel. error");
    println!("{:<22} {:>10} {:>12}", "dense f64", 64 * d * m, "0");
    for spec in [
        CompressorSpec::Identity,
        CompressorSpec::TopK { k: 4 * d },
        CompressorSpec::RandK { k: 4 * d },
        CompressorSpec::Dither { levels: 128 },
        CompressorSpec::Dither { levels: 4 },
    ] {
        let mut rng = keyed(42, 0, 0, Stream::Compress);
        let block = compress(&spec, &x, &mut rng)?;
        assert_eq!(block.bit_cost, block_bits(&spec, d, m));
        let err = (decompress(&block)? - &x).norm() / x.norm();
        println!("{:<22} {:>10} {:>12.4}", format!("{spec:?}"), block.bit_cost, err);
    }
    Ok(())
}
