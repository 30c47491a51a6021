//! Subcommand bodies.

use std::fmt::Write as _;
use std::path::Path;

use defocus::blur::{blur_map, patch_blur_scores};
use defocus::estimate::{estimate_kernel_map, kernel_montage, KernelMap};
use defocus::forward::{add_noise, noise_texture, synth_depth_blur_with_truth, DepthProfile};
use defocus::fusion::{fuse_stack, register_stack};
use defocus::image::Image;
use defocus::io::{self, BitDepth};
use defocus::psf::{lut_build, KernelLut};
use defocus::restore::{deblur_image, mse, psnr_from_mse, DeblurParams, Method};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::{BlurMapArgs, BuildLutArgs, DeblurArgs, EstimateArgs, FuseArgs, GridArgs, MethodArg, MetricsArgs, SynthArgs};
use crate::config::Config;
use crate::CliError;

fn load(path: &Path) -> Result<(Image, BitDepth), CliError> {
    io::load(path).map_err(|source| CliError::Input { path: path.to_path_buf(), source })
}

fn save(img: &Image, path: &Path, depth: BitDepth) -> Result<(), CliError> {
    io::save(img, path, depth).map_err(|source| CliError::Output { path: path.to_path_buf(), source })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Output { path: path.to_path_buf(), source: e.into() })
}

/// Rejects output names the writer cannot encode before any work is done.
fn image_output(path: &Path) -> Result<(), CliError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    if matches!(ext.as_str(), "png" | "tif" | "tiff") {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{}: output must end in .png, .tif or .tiff",
            path.display()
        )))
    }
}

fn png_output(path: &Path) -> Result<(), CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("png") => Ok(()),
        _ => Err(CliError::Usage(format!("{}: output must be a .png file", path.display()))),
    }
}

fn with_grid(mut cfg: Config, grid: &GridArgs) -> Result<Config, CliError> {
    if let Some(p) = grid.patch {
        cfg.patch_size = p;
    }
    if let Some(s) = grid.stride {
        cfg.stride = s;
    }
    checked(cfg)
}

fn checked(cfg: Config) -> Result<Config, CliError> {
    cfg.validate().map_err(CliError::Usage)?;
    Ok(cfg)
}

pub fn deblur(cfg: Config, args: &DeblurArgs) -> Result<(), CliError> {
    let mut cfg = cfg;
    if let Some(l) = args.lambda {
        cfg.lambda_w = l;
    }
    if let Some(s) = args.sigma_scale {
        cfg.sigma_scale = s;
    }
    if let Some(m) = args.max_blur {
        cfg.max_blur = m;
    }
    let cfg = with_grid(cfg, &args.grid)?;
    if args.method == MethodArg::Lut && args.lut.is_none() {
        return Err(CliError::Usage("--method lut requires --lut PATH".into()));
    }
    image_output(&args.output)?;

    let lut = match &args.lut {
        Some(path) if args.method == MethodArg::Lut => Some(
            KernelLut::load(path).map_err(|source| CliError::Input { path: path.clone(), source })?,
        ),
        _ => None,
    };
    let (img, depth) = load(&args.input)?;
    let params = DeblurParams {
        method: match args.method {
            MethodArg::Gaussian => Method::Gaussian,
            MethodArg::Lut => Method::Lut,
        },
        patch: cfg.patch_size,
        stride: cfg.stride,
        lambda_w: cfg.lambda_w,
        sigma_scale: cfg.sigma_scale,
        max_blur: cfg.max_blur,
        lut,
    };
    let out = deblur_image(&img, &params)?;
    save(&out, &args.output, depth)?;

    if let Some(dir) = &args.emit_blurmaps {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Output { path: dir.clone(), source: e.into() })?;
        for (name, image) in [("blurmap_input.png", &img), ("blurmap_output.png", &out)] {
            let path = dir.join(name);
            let map = blur_map(image, cfg.patch_size, cfg.stride)?;
            io::save_blur_map(&map, &path).map_err(|source| CliError::Output { path, source })?;
        }
    }
    Ok(())
}

pub fn blur_map_cmd(cfg: Config, args: &BlurMapArgs) -> Result<(), CliError> {
    let cfg = with_grid(cfg, &args.grid)?;
    png_output(&args.output)?;
    let (img, _) = load(&args.input)?;
    let scores = patch_blur_scores(&img, cfg.patch_size, cfg.stride)?;
    let map = defocus::blur::splat_scores(img.width(), img.height(), cfg.patch_size, &scores)?;
    io::save_blur_map(&map, &args.output).map_err(|source| CliError::Output { path: args.output.clone(), source })?;
    if let Some(csv) = &args.csv {
        let mut text = String::from("x,y,blur\n");
        for ((x, y), b) in &scores {
            writeln!(text, "{x},{y},{b}").expect("writing to a string");
        }
        write_text(csv, &text)?;
    }
    Ok(())
}

pub fn estimate_kernels(cfg: Config, args: &EstimateArgs) -> Result<(), CliError> {
    let mut cfg = cfg;
    if let Some(k) = args.kernel_size {
        cfg.kernel_size = k;
    }
    if let Some(l) = args.lambda_k {
        cfg.lambda_k = l;
    }
    if let Some(r) = args.ridge {
        cfg.ridge = r;
    }
    let cfg = with_grid(cfg, &args.grid)?;
    if let Some(m) = &args.montage {
        png_output(m)?;
    }
    let (sharp, _) = load(&args.sharp)?;
    let (blurry, _) = load(&args.blurry)?;
    let mut map = estimate_kernel_map(&sharp, &blurry, cfg.patch_size, cfg.stride, cfg.kernel_size, cfg.ridge())?;
    let source = args
        .blurry
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    map.set_source(source);
    map.save(&args.output).map_err(|source| CliError::Output { path: args.output.clone(), source })?;
    if let Some(m) = &args.montage {
        save(&kernel_montage(&map)?, m, BitDepth::Sixteen)?;
    }
    Ok(())
}

pub fn build_lut(cfg: Config, args: &BuildLutArgs) -> Result<(), CliError> {
    let mut cfg = cfg;
    if let Some(b) = args.bins {
        cfg.lut_bins = b;
    }
    let cfg = checked(cfg)?;
    let maps = args
        .maps
        .iter()
        .map(|p| KernelMap::load(p).map_err(|source| CliError::Input { path: p.clone(), source }))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&KernelMap> = maps.iter().collect();
    let lut = lut_build(&refs, cfg.lut_bins)?;
    lut.save(&args.out).map_err(|source| CliError::Output { path: args.out.clone(), source })?;
    Ok(())
}

pub fn fuse(cfg: Config, args: &FuseArgs) -> Result<(), CliError> {
    let cfg = with_grid(cfg, &args.grid)?;
    image_output(&args.out)?;
    let ref_index = args.ref_index.unwrap_or(args.images.len() / 2);
    if ref_index >= args.images.len() {
        return Err(CliError::Usage(format!(
            "--ref-index {ref_index} is outside a stack of {} images",
            args.images.len()
        )));
    }
    let mut stack = Vec::with_capacity(args.images.len());
    let mut depth = BitDepth::Eight;
    for p in &args.images {
        let (img, d) = load(p)?;
        if d == BitDepth::Sixteen {
            depth = d;
        }
        stack.push(img);
    }
    let (aligned, _) = register_stack(&stack, ref_index)?;
    let fused = fuse_stack(&aligned, cfg.patch_size, cfg.stride)?;
    save(&fused.image, &args.out, depth)?;
    if let Some(csv) = &args.emit_selection {
        let mut text = String::from("x,y,index,blur\n");
        for (((x, y), i), b) in fused.origins.iter().zip(&fused.selection).zip(&fused.scores) {
            writeln!(text, "{x},{y},{i},{b}").expect("writing to a string");
        }
        write_text(csv, &text)?;
    }
    Ok(())
}

pub fn synth(cfg: Config, args: &SynthArgs) -> Result<(), CliError> {
    let mut cfg = cfg;
    if let Some(p) = args.patch {
        cfg.patch_size = p;
        cfg.stride = cfg.stride.min(p);
    }
    let cfg = checked(cfg)?;
    image_output(&args.output)?;
    let profile = match (args.sigma, args.sigma_from, args.sigma_to) {
        (Some(s), _, _) => DepthProfile::Constant(s),
        (None, Some(left), Some(right)) => DepthProfile::HorizontalRamp { left, right },
        _ => DepthProfile::Constant(0.0),
    };
    profile.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if !(args.noise.is_finite() && args.noise >= 0.0) {
        return Err(CliError::Usage(format!("--noise must be >= 0, got {}", args.noise)));
    }
    if !(args.smoothing.is_finite() && args.smoothing >= 0.0) {
        return Err(CliError::Usage(format!("--smoothing must be >= 0, got {}", args.smoothing)));
    }

    // one generator per run; each random stage draws its own seed from it in a fixed order
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let texture_seed: u64 = rng.random();
    let noise_seed: u64 = rng.random();

    let (sharp, depth) = match (&args.input, args.texture) {
        (Some(path), _) => load(path)?,
        (None, Some((w, h))) => {
            let depth = if args.depth == "8" { BitDepth::Eight } else { BitDepth::Sixteen };
            (noise_texture(w, h, args.smoothing, texture_seed)?, depth)
        }
        (None, None) => unreachable!("clap requires --input or --texture"),
    };
    let (blurred, truth) = synth_depth_blur_with_truth(&sharp, &profile, cfg.patch_size)?;
    let out = if args.noise > 0.0 {
        add_noise(&blurred, args.noise, noise_seed)?
    } else {
        blurred
    };
    save(&out, &args.output, depth)?;
    if let Some(csv) = &args.sidecar {
        let mut text = String::from("x,y,sigma\n");
        for t in &truth {
            writeln!(text, "{},{},{}", t.x, t.y, t.sigma).expect("writing to a string");
        }
        write_text(csv, &text)?;
    }
    Ok(())
}

pub fn metrics(args: &MetricsArgs) -> Result<String, CliError> {
    let (a, _) = load(&args.a)?;
    let (b, _) = load(&args.b)?;
    let m = mse(&a, &b)?;
    let p = match psnr_from_mse(m) {
        Ok(p) => p.to_string(),
        Err(defocus::Error::InfinitePsnr) => "inf".to_string(),
        Err(e) => return Err(e.into()),
    };
    Ok(format!("mse {m}\npsnr {p}\n"))
}
