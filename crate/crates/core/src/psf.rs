//! Blur level to PSF mapping: the parametric Gaussian model and the
//! lookup table of averaged ground-truth kernels.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{KernelMap, Ridge};
use crate::image::Kernel;

/// Widths below this are treated as "no blur" and yield an exact delta.
pub const DELTA_SIGMA: f64 = 0.05;
/// Upper bound on auto-sized Gaussian support.
pub const MAX_AUTO_KERNEL: usize = 63;
/// Default blur-to-sigma factor.
pub const DEFAULT_SIGMA_SCALE: f64 = 50.0;
pub const DEFAULT_LUT_BINS: usize = 100;
pub const LUT_VERSION: u32 = 1;

/// Support needed for 3-sigma truncation, capped at [`MAX_AUTO_KERNEL`].
pub fn auto_kernel_size(sigma: f64) -> usize {
    if sigma < DELTA_SIGMA {
        return 1;
    }
    let half = (3.0 * sigma).ceil() as usize;
    (2 * half + 1).min(MAX_AUTO_KERNEL)
}

/// Sampled isotropic Gaussian `exp(-d^2 / (2 sigma^2))`, renormalized to unit sum.
///
/// `size = None` picks [`auto_kernel_size`].
pub fn gaussian_kernel(sigma: f64, size: Option<usize>) -> Result<Kernel> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Domain(format!("sigma {sigma} must be finite and >= 0")));
    }
    let k = size.unwrap_or_else(|| auto_kernel_size(sigma));
    if sigma < DELTA_SIGMA {
        return Kernel::delta(k);
    }
    let r = (k / 2) as f64;
    let denom = 2.0 * sigma * sigma;
    let mut data = Vec::with_capacity(k * k);
    for row in 0..k {
        for col in 0..k {
            let d2 = (row as f64 - r).powi(2) + (col as f64 - r).powi(2);
            data.push((-d2 / denom).exp());
        }
    }
    Kernel::normalized(k, data)
}

/// Linear blur-level to Gaussian-width model, `sigma = scale * blur`.
pub fn sigma_from_blur(blur: f64, scale: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&blur) {
        return Err(Error::Domain(format!("blur level {blur} outside [0, 1]")));
    }
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::Domain(format!("sigma scale {scale} must be finite and >= 0")));
    }
    Ok(scale * blur)
}

/// Least-squares fit of the scale in `sigma = scale * blur` from
/// `(blur, sigma)` observations.
pub fn calibrate_sigma_scale(samples: &[(f64, f64)]) -> Result<f64> {
    let (num, den) = samples
        .iter()
        .fold((0.0, 0.0), |(n, d), &(b, s)| (n + b * s, d + b * b));
    if den <= 0.0 {
        return Err(Error::DegenerateInput("no non-zero blur samples to calibrate from".into()));
    }
    Ok(num / den)
}

/// Bin holding `blur`: `floor(blur * bins)` clamped to the last bin.
pub fn bin_index(blur: f64, bin_count: usize) -> usize {
    ((blur.clamp(0.0, 1.0) * bin_count as f64).floor() as usize).min(bin_count - 1)
}

pub fn bin_center(bin: usize, bin_count: usize) -> f64 {
    (bin as f64 + 0.5) / bin_count as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct LutEntry {
    pub kernel: Kernel,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LutProvenance {
    pub sources: Vec<String>,
    pub ridge: Ridge,
    pub patch_size: usize,
}

/// Blur-binned table of averaged kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelLut {
    kernel_size: usize,
    bins: Vec<Option<LutEntry>>,
    provenance: LutProvenance,
}

/// Averages the non-degenerate cells of one or more kernel maps per blur bin.
pub fn lut_build(maps: &[&KernelMap], bin_count: usize) -> Result<KernelLut> {
    if bin_count == 0 {
        return Err(Error::Domain("bin count must be positive".into()));
    }
    let kernel_size = maps
        .first()
        .map(|m| m.kernel_size())
        .ok_or(Error::EmptyTable)?;
    if maps.iter().any(|m| m.kernel_size() != kernel_size) {
        return Err(Error::Dimension("kernel maps disagree on kernel size".into()));
    }

    let mut sums: Vec<Option<(Vec<f64>, usize)>> = vec![None; bin_count];
    for cell in maps.iter().flat_map(|m| m.cells()).filter(|c| !c.degenerate) {
        let slot = sums[bin_index(cell.blur, bin_count)]
            .get_or_insert_with(|| (vec![0.0; kernel_size * kernel_size], 0));
        for (acc, w) in slot.0.iter_mut().zip(cell.kernel.data()) {
            *acc += w;
        }
        slot.1 += 1;
    }
    if sums.iter().all(Option::is_none) {
        return Err(Error::EmptyTable);
    }

    let bins = sums
        .into_iter()
        .map(|slot| {
            slot.map(|(sum, count)| {
                let mean = sum.into_iter().map(|v| v / count as f64).collect();
                Kernel::normalized(kernel_size, mean).map(|kernel| LutEntry { kernel, count })
            })
            .transpose()
        })
        .collect::<Result<Vec<_>>>()?;

    let first = maps[0];
    let provenance = LutProvenance {
        sources: maps.iter().map(|m| m.source().to_string()).collect(),
        ridge: first.ridge(),
        patch_size: first.patch_size(),
    };
    Ok(KernelLut {
        kernel_size,
        bins,
        provenance,
    })
}

#[derive(Serialize, Deserialize)]
struct LutFile {
    version: u32,
    bin_count: usize,
    kernel_size: usize,
    scale_note: String,
    entries: Vec<LutFileEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<LutProvenance>,
}

#[derive(Serialize, Deserialize)]
struct LutFileEntry {
    bin: usize,
    blur_center: f64,
    count: usize,
    kernel: Vec<f64>,
}

const SCALE_NOTE: &str =
    "blur is the no-reference re-blur score in [0,1]; bin i covers [i/N, (i+1)/N); kernels are unit-sum, row-major";

impl KernelLut {
    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn provenance(&self) -> &LutProvenance {
        &self.provenance
    }

    pub fn entry(&self, bin: usize) -> Option<&LutEntry> {
        self.bins.get(bin).and_then(Option::as_ref)
    }

    /// Indices of bins holding a kernel, ascending.
    pub fn populated(&self) -> Vec<usize> {
        (0..self.bins.len()).filter(|&i| self.bins[i].is_some()).collect()
    }

    /// Kernel for a blur level: the bin's own kernel when populated, otherwise
    /// a blend of the nearest populated neighbours weighted by distance
    /// between bin centers, or the nearest populated bin outside the range.
    pub fn query(&self, blur: f64) -> Kernel {
        let n = self.bins.len();
        let bin = bin_index(blur, n);
        if let Some(e) = &self.bins[bin] {
            return e.kernel.clone();
        }
        let below = (0..bin).rev().find(|&i| self.bins[i].is_some());
        let above = (bin + 1..n).find(|&i| self.bins[i].is_some());
        match (below, above) {
            (Some(lo), Some(hi)) => {
                let (clo, chi) = (bin_center(lo, n), bin_center(hi, n));
                let t = ((blur - clo) / (chi - clo)).clamp(0.0, 1.0);
                let (klo, khi) = (&self.entry(lo).expect("populated").kernel, &self.entry(hi).expect("populated").kernel);
                let mixed = klo
                    .data()
                    .iter()
                    .zip(khi.data())
                    .map(|(a, b)| (1.0 - t) * a + t * b)
                    .collect();
                // both ends are unit-sum, so the blend is too up to rounding
                Kernel::normalized(self.kernel_size, mixed).expect("convex blend of unit-sum kernels")
            }
            (Some(i), None) | (None, Some(i)) => self.entry(i).expect("populated").kernel.clone(),
            (None, None) => unreachable!("tables are never empty"),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let n = self.bins.len();
        let entries = self
            .bins
            .iter()
            .enumerate()
            .filter_map(|(bin, e)| {
                e.as_ref().map(|e| LutFileEntry {
                    bin,
                    blur_center: bin_center(bin, n),
                    count: e.count,
                    kernel: e.kernel.data().to_vec(),
                })
            })
            .collect();
        let file = LutFile {
            version: LUT_VERSION,
            bin_count: n,
            kernel_size: self.kernel_size,
            scale_note: SCALE_NOTE.to_string(),
            entries,
            provenance: Some(self.provenance.clone()),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<KernelLut> {
        let file: LutFile = serde_json::from_str(text)?;
        if file.version != LUT_VERSION {
            return Err(Error::Config(format!("unsupported LUT version {}", file.version)));
        }
        if file.bin_count == 0 {
            return Err(Error::Config("LUT bin_count must be positive".into()));
        }
        let k = file.kernel_size;
        let mut bins: Vec<Option<LutEntry>> = vec![None; file.bin_count];
        for e in file.entries {
            if e.bin >= file.bin_count {
                return Err(Error::Config(format!("LUT bin {} out of range", e.bin)));
            }
            if bins[e.bin].is_some() {
                return Err(Error::Config(format!("LUT bin {} listed twice", e.bin)));
            }
            let kernel = Kernel::new(k, e.kernel).map_err(|err| Error::Config(format!("LUT bin {}: {err}", e.bin)))?;
            if (kernel.sum() - 1.0).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "LUT bin {} kernel sums to {}, expected 1",
                    e.bin,
                    kernel.sum()
                )));
            }
            bins[e.bin] = Some(LutEntry { kernel, count: e.count });
        }
        if bins.iter().all(Option::is_none) {
            return Err(Error::EmptyTable);
        }
        Ok(KernelLut {
            kernel_size: k,
            bins,
            provenance: file.provenance.unwrap_or_default(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<KernelLut> {
        KernelLut::from_json(&std::fs::read_to_string(path)?)
    }
}
