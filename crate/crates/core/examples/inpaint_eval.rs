//! Inpaint held-out textures with a checkpoint and report SSIM, PSNR and
//! log-spectral distance of the composites.
//!
//! cargo run --release --example inpaint_eval -- <checkpoint.bin> [out_dir]

use std::path::PathBuf;

use fscn::commands::load_generator;
use fscn::io::image::{save_image, tile_row};
use fscn::io::synth_textures;
use fscn::maskgen::{generate_mask, MaskConfig, Preset};
use fscn::metrics::ImageMetrics;
use fscn::train::{eval_mask_seed, inpaint};

fn main() -> fscn::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(ck) = args.next() else {
        eprintln!("usage: inpaint_eval <checkpoint.bin> [out_dir]  (train one with the train_tiny example)");
        std::process::exit(1);
    };
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/inpaint_eval".into()));
    std::fs::create_dir_all(&out).map_err(|e| fscn::Error::Io { path: out.clone(), source: e })?;

    let (gen, params, _) = load_generator(ck.as_ref())?;
    let size = gen.spec.input_size;
    let textures = synth_textures(1_000_003, 4, size)?;
    let masks = MaskConfig::preset(Preset::Medium)?;
    println!("image,ssim,psnr,lsd");
    for (i, img) in textures.images.iter().enumerate() {
        let mask = generate_mask(&masks, eval_mask_seed(0, i), size, size)?;
        let (output, comp) = inpaint(&gen, &params, img, &mask)?;
        let m = ImageMetrics::compute(textures.ids[i].clone(), &comp, img)?;
        println!("{},{:.4},{:.2},{:.4}", m.id, m.ssim, m.psnr, m.lsd);
        let holed = img.zip_map(&fscn::model::expand_channels(mask.plane(), 3)?, |v, h| v * (1.0 - h))?;
        save_image(&tile_row(&[holed, output, comp, img.clone()])?, &out.join(format!("{i}.ppm")))?;
    }
    println!("strips (input, output, composite, truth) in {}", out.display());
    Ok(())
}
