//! DFT round trip, Parseval's identity, the log-real spectrum and the
//! frequency loss on a synthetic texture. Writes the texture and its
//! centred spectrum as images.
//!
//! cargo run --release --example spectrum -- [out_dir]

use std::path::PathBuf;

use fscn::io::image::save_image;
use fscn::io::synth_textures;
use fscn::spectral::{dft2, frequency_loss, idft2, log_real_transform, LogSpectrumConfig, SpectrumVar};
use fscn::train::image_spectrum;
use fscn::Graph;

fn main() -> fscn::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/spectrum".into()));
    std::fs::create_dir_all(&out).map_err(|e| fscn::Error::Io { path: out.clone(), source: e })?;

    let textures = synth_textures(4, 2, 64)?;
    let (a, b) = (&textures.images[0], &textures.images[1]);
    let fa = dft2(a)?;
    let back = idft2(&fa)?;
    println!("round trip max error   {:.3e}", back.max_abs_diff(a)?);
    let spatial: f64 = a.data().iter().map(|v| v * v).sum();
    let spectral = fa.energy() / (64.0 * 64.0);
    println!("parseval relative gap  {:.3e}", (spatial - spectral).abs() / spatial);

    let log = log_real_transform(&fa, LogSpectrumConfig::default());
    let max = log.values.data().iter().copied().fold(0.0, f64::max);
    println!("log-real spectrum max  {max:.4} (DC bin)");

    let mut g = Graph::new();
    let target = g.constant(b.clone());
    let pred = SpectrumVar::constant(&mut g, &fa);
    let l = frequency_loss(&mut g, &pred, target, LogSpectrumConfig::default())?;
    println!("frequency loss a vs b  {:.4}", g.value(l).item()?);

    save_image(a, &out.join("texture.ppm"))?;
    let gray = image_spectrum(a)?;
    save_image(&gray.reshape(&[1, 64, 64])?, &out.join("spectrum.pgm"))?;
    println!("images in {}", out.display());
    Ok(())
}
