use defocus::blur::blur_map;
use defocus::estimate::{estimate_kernel_map, KernelMap, Ridge};
use defocus::forward::{add_noise, convolve, noise_texture, synth_depth_blur, DepthProfile};
use defocus::fusion::{fuse_stack, register_stack, shift_image};
use defocus::image::Image;
use defocus::io::{self, BitDepth};
use defocus::psf::{gaussian_kernel, lut_build, KernelLut};
use defocus::restore::{deblur_image, deblur_image_with_plan, psnr, DeblurParams, Method};

fn ramp_pair(w: usize, h: usize) -> (Image, Image) {
    let t = noise_texture(w, h, 1.5, 21).unwrap();
    let b = synth_depth_blur(&t, &DepthProfile::HorizontalRamp { left: 0.0, right: 4.0 }, 64).unwrap();
    (t, b)
}

#[test]
fn lut_survives_disk_and_drives_deblur() {
    let dir = tempfile::tempdir().unwrap();
    let (sharp, blurry) = ramp_pair(256, 128);
    let mut map = estimate_kernel_map(&sharp, &blurry, 64, 32, 15, Ridge::Absolute(1e-3)).unwrap();
    map.set_source("ramp");
    let map_path = dir.path().join("map.json");
    map.save(&map_path).unwrap();
    let map = KernelMap::load(&map_path).unwrap();

    let lut = lut_build(&[&map], 100).unwrap();
    let lut_path = dir.path().join("lut.json");
    lut.save(&lut_path).unwrap();
    let lut = KernelLut::load(&lut_path).unwrap();
    assert_eq!(lut.provenance().sources, vec!["ramp".to_string()]);

    let params = DeblurParams { method: Method::Lut, lut: Some(lut.clone()), ..Default::default() };
    let out = deblur_image_with_plan(&blurry, &params).unwrap();
    for p in &out.plan {
        assert_eq!(p.kernel.as_ref().unwrap(), &lut.query(p.blur));
    }
    assert!(out.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn uniform_blur_restoration_gains_psnr() {
    let t = noise_texture(192, 192, 2.0, 4).unwrap();
    let k = gaussian_kernel(1.5, None).unwrap();
    let blurry = add_noise(&convolve(&t, &k), 0.002, 4).unwrap();
    // the pipeline sees only the blurry image, so pick the scale from the measured blur
    let level = blur_map(&blurry, 64, 32).unwrap().mean();
    let params = DeblurParams { sigma_scale: 1.5 / level, ..Default::default() };
    let out = deblur_image(&blurry, &params).unwrap();
    assert!(psnr(&out, &t).unwrap() > psnr(&blurry, &t).unwrap());
}

#[test]
fn rgb_round_trip_through_png_and_tiff() {
    let dir = tempfile::tempdir().unwrap();
    let g = noise_texture(40, 30, 1.0, 1).unwrap();
    let rgb = Image::from_planes(&[g.map(|v| 1.0 - v), g.clone(), g.map(|v| v * 0.5)]).unwrap();
    for (name, depth, tol) in [("a.png", BitDepth::Eight, 0.5 / 255.0), ("b.tif", BitDepth::Sixteen, 0.5 / 65535.0)] {
        let path = dir.path().join(name);
        io::save(&rgb, &path, depth).unwrap();
        let (back, d) = io::load(&path).unwrap();
        assert_eq!(d, depth);
        assert_eq!(back.channels(), 3);
        let err = back.data().iter().zip(rgb.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= tol + 1e-12, "{name}: {err}");
    }
}

#[test]
fn registered_stack_fuses_to_sharp_composite() {
    // two focal planes: sharp on the left in one frame, on the right in the other
    let t = noise_texture(256, 192, 1.0, 30).unwrap();
    let near = synth_depth_blur(&t, &DepthProfile::HorizontalRamp { left: 0.0, right: 2.0 }, 64).unwrap();
    let far = synth_depth_blur(&t, &DepthProfile::HorizontalRamp { left: 2.0, right: 0.0 }, 64).unwrap();
    let stack = vec![near, shift_image(&far, 4, -2)];
    let (aligned, regs) = register_stack(&stack, 0).unwrap();
    assert_eq!((regs[1].dx, regs[1].dy), (4, -2));
    let fused = fuse_stack(&aligned, 64, 32).unwrap();
    let inner = |img: &Image| blur_map(&img.crop(16, 16, 224, 160).unwrap(), 64, 32).unwrap().mean();
    assert!(inner(&fused.image) < inner(&aligned[0]).min(inner(&aligned[1])));
    assert!(fused.selection.contains(&0) && fused.selection.contains(&1));
}
