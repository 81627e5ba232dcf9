//! Synthetic head-like phantoms with known generating factors.
//!
//! Geometry, in normalized coordinates `u ∈ (-1, 1)³` at voxel centers:
//! an outer ellipsoid whose radii scale with the sex factor, a bright shell
//! ("skull") around a tissue region, a dark central ellipsoid ("ventricle")
//! whose volume grows affinely with the normalized age factor, and a
//! separable sinusoidal tissue texture whose amplitude grows affinely with
//! the normalized score factor.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::volume::Volume3D;
use crate::error::{Error, Result};

pub const AGE_RANGE: (f64, f64) = (18.0, 97.0);
pub const SCORE_RANGE: (f64, f64) = (16.0, 97.0);

/// Affine factor → geometry coefficients. Written next to generated data so
/// downstream expectations can be audited.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomCoefficients {
    pub outer_radii: [f64; 3],
    /// Outer radii are multiplied by `1 + sex_radius_gain * s`.
    pub sex_radius_gain: f64,
    /// Tissue region occupies `ρ_outer < tissue_fraction`.
    pub tissue_fraction: f64,
    pub ventricle_radii: [f64; 3],
    /// Ventricle volume is multiplied by `1 + age_volume_gain * a_n`.
    pub age_volume_gain: f64,
    pub texture_amplitude_base: f64,
    /// Texture amplitude is `base + score_amplitude_gain * c_n`.
    pub score_amplitude_gain: f64,
    pub texture_wavelength: f64,
    pub skull_intensity: f64,
    pub tissue_intensity: f64,
    pub ventricle_intensity: f64,
    /// Logistic edge width in units of the normalized ellipsoid radius.
    pub edge_width: f64,
}

impl Default for PhantomCoefficients {
    fn default() -> Self {
        PhantomCoefficients {
            outer_radii: [0.84, 0.74, 0.80],
            sex_radius_gain: 0.02,
            tissue_fraction: 0.84,
            ventricle_radii: [0.30, 0.22, 0.26],
            age_volume_gain: 2.0,
            texture_amplitude_base: 0.04,
            score_amplitude_gain: 0.26,
            texture_wavelength: 0.8,
            skull_intensity: 0.95,
            tissue_intensity: 0.55,
            ventricle_intensity: 0.08,
            edge_width: 0.04,
        }
    }
}

impl PhantomCoefficients {
    /// Plain `key = value` listing of every coefficient.
    pub fn to_spec_text(&self) -> String {
        let mut s = String::new();
        let r3 = |r: [f64; 3]| format!("{} {} {}", r[0], r[1], r[2]);
        let _ = writeln!(s, "# phantom generator coefficients");
        let _ = writeln!(s, "# a_n = (age - 18) / 79, c_n = (score - 16) / 81, s in {{0, 1}}");
        let _ = writeln!(s, "outer_radii = {}", r3(self.outer_radii));
        let _ = writeln!(s, "outer_radii_scale = 1 + {} * s", self.sex_radius_gain);
        let _ = writeln!(s, "tissue_fraction = {}", self.tissue_fraction);
        let _ = writeln!(s, "ventricle_radii = {}", r3(self.ventricle_radii));
        let _ = writeln!(s, "ventricle_volume_scale = 1 + {} * a_n", self.age_volume_gain);
        let _ = writeln!(
            s,
            "texture_amplitude = {} + {} * c_n",
            self.texture_amplitude_base, self.score_amplitude_gain
        );
        let _ = writeln!(s, "texture_wavelength = {}", self.texture_wavelength);
        let _ = writeln!(s, "skull_intensity = {}", self.skull_intensity);
        let _ = writeln!(s, "tissue_intensity = {}", self.tissue_intensity);
        let _ = writeln!(s, "ventricle_intensity = {}", self.ventricle_intensity);
        let _ = writeln!(s, "edge_width = {}", self.edge_width);
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomParams {
    pub extent: usize,
    pub age: f64,
    pub sex: u8,
    pub score: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl PhantomParams {
    pub fn validate(&self) -> Result<()> {
        if self.extent < 8 {
            return Err(Error::invalid(format!("phantom extent {} < 8", self.extent)));
        }
        if !(AGE_RANGE.0..=AGE_RANGE.1).contains(&self.age) {
            return Err(Error::invalid(format!("age factor {} outside [18, 97]", self.age)));
        }
        if !(SCORE_RANGE.0..=SCORE_RANGE.1).contains(&self.score) {
            return Err(Error::invalid(format!("score factor {} outside [16, 97]", self.score)));
        }
        if self.sex > 1 {
            return Err(Error::invalid(format!("sex factor {} not in {{0, 1}}", self.sex)));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid(format!("noise sigma {} must be >= 0", self.noise_sigma)));
        }
        Ok(())
    }
}

pub fn normalized_age(age: f64) -> f64 {
    (age - AGE_RANGE.0) / (AGE_RANGE.1 - AGE_RANGE.0)
}

pub fn normalized_score(score: f64) -> f64 {
    (score - SCORE_RANGE.0) / (SCORE_RANGE.1 - SCORE_RANGE.0)
}

fn inside(rho: f64, width: f64) -> f64 {
    1.0 / (1.0 + ((rho - 1.0) / width).exp())
}

fn ellipsoid_rho(u: [f64; 3], radii: [f64; 3]) -> f64 {
    ((u[0] / radii[0]).powi(2) + (u[1] / radii[1]).powi(2) + (u[2] / radii[2]).powi(2)).sqrt()
}

/// Noise-free generated field, before clipping. Exposed for tests that count
/// anatomical regions.
pub struct PhantomLayers {
    pub outer: Vec<f64>,
    pub tissue: Vec<f64>,
    pub ventricle: Vec<f64>,
}

fn render(p: &PhantomParams, k: &PhantomCoefficients) -> (Vec<f64>, PhantomLayers) {
    let e = p.extent;
    let scale = 1.0 + k.sex_radius_gain * p.sex as f64;
    let outer_r = k.outer_radii.map(|r| r * scale);
    let tissue_r = outer_r.map(|r| r * k.tissue_fraction);
    let vent_scale = (1.0 + k.age_volume_gain * normalized_age(p.age)).cbrt();
    let vent_r = k.ventricle_radii.map(|r| r * vent_scale);
    let amplitude = k.texture_amplitude_base + k.score_amplitude_gain * normalized_score(p.score);
    let omega = std::f64::consts::TAU / k.texture_wavelength;

    let n = e * e * e;
    let mut field = Vec::with_capacity(n);
    let mut layers = PhantomLayers {
        outer: Vec::with_capacity(n),
        tissue: Vec::with_capacity(n),
        ventricle: Vec::with_capacity(n),
    };
    let coord = |i: usize| (2 * i + 1) as f64 / e as f64 - 1.0;
    for z in 0..e {
        for y in 0..e {
            for x in 0..e {
                let u = [coord(x), coord(y), coord(z)];
                let outer = inside(ellipsoid_rho(u, outer_r), k.edge_width);
                let tissue = inside(ellipsoid_rho(u, tissue_r), k.edge_width);
                let vent = inside(ellipsoid_rho(u, vent_r), k.edge_width);
                let texture = (omega * u[0]).sin() * (omega * u[1]).sin() * (omega * u[2]).sin();
                let tissue_value = k.tissue_intensity + amplitude * texture;
                let inner_value = (1.0 - vent) * tissue_value + vent * k.ventricle_intensity;
                let value = outer * (1.0 - tissue) * k.skull_intensity + tissue * inner_value;
                field.push(value);
                layers.outer.push(outer);
                layers.tissue.push(tissue);
                layers.ventricle.push(vent);
            }
        }
    }
    (field, layers)
}

/// Noise-free layer memberships for `p` (soft, in `[0, 1]`).
pub fn phantom_layers(p: &PhantomParams, k: &PhantomCoefficients) -> PhantomLayers {
    render(p, k).1
}

/// Deterministic phantom: geometry from the factors, seeded additive Gaussian
/// noise, clipped to `[0, 1]`.
pub fn generate_phantom(p: &PhantomParams, k: &PhantomCoefficients) -> Result<Volume3D> {
    p.validate()?;
    let (mut field, _) = render(p, k);
    if p.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let normal = Normal::new(0.0, p.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        for v in &mut field {
            *v += normal.sample(&mut rng);
        }
    }
    let data = field.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect();
    Volume3D::cube(p.extent, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(age: f64, sex: u8, score: f64) -> PhantomParams {
        PhantomParams {
            extent: 16,
            age,
            sex,
            score,
            noise_sigma: 0.0,
            seed: 1,
        }
    }

    /// Voxels darker than any tissue value that sit inside the tissue region.
    fn ventricle_voxels(v: &Volume3D, p: &PhantomParams) -> usize {
        let layers = phantom_layers(p, &PhantomCoefficients::default());
        v.data()
            .iter()
            .zip(&layers.tissue)
            .filter(|(&val, &t)| t > 0.5 && val < 0.2)
            .count()
    }

    fn foreground(v: &Volume3D) -> usize {
        v.data().iter().filter(|&&x| x > 0.05).count()
    }

    #[test]
    fn deterministic_without_noise() {
        let k = PhantomCoefficients::default();
        let a = generate_phantom(&params(50.0, 1, 40.0), &k).unwrap();
        let b = generate_phantom(&params(50.0, 1, 40.0), &k).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let k = PhantomCoefficients::default();
        let mut p = params(50.0, 0, 40.0);
        p.noise_sigma = 0.05;
        let a = generate_phantom(&p, &k).unwrap();
        let b = generate_phantom(&p, &k).unwrap();
        assert_eq!(a, b);
        p.seed = 2;
        assert_ne!(a, generate_phantom(&p, &k).unwrap());
    }

    #[test]
    fn ventricles_grow_with_age() {
        let k = PhantomCoefficients::default();
        let counts: Vec<usize> = [18.0, 40.0, 60.0, 97.0]
            .iter()
            .map(|&a| {
                let p = params(a, 0, 50.0);
                ventricle_voxels(&generate_phantom(&p, &k).unwrap(), &p)
            })
            .collect();
        assert!(counts.windows(2).all(|w| w[0] < w[1]), "{counts:?}");
    }

    #[test]
    fn sex_changes_foreground_by_three_percent() {
        let k = PhantomCoefficients::default();
        let f0 = foreground(&generate_phantom(&params(50.0, 0, 50.0), &k).unwrap()) as f64;
        let f1 = foreground(&generate_phantom(&params(50.0, 1, 50.0), &k).unwrap()) as f64;
        assert!((f1 - f0).abs() / f0 >= 0.03, "{f0} vs {f1}");
    }

    #[test]
    fn values_in_unit_interval() {
        let k = PhantomCoefficients::default();
        let mut p = params(97.0, 1, 97.0);
        p.noise_sigma = 0.2;
        let v = generate_phantom(&p, &k).unwrap();
        assert!(v.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn invalid_params_rejected() {
        let k = PhantomCoefficients::default();
        let mut p = params(50.0, 0, 50.0);
        p.extent = 4;
        assert!(generate_phantom(&p, &k).is_err());
        assert!(generate_phantom(&params(10.0, 0, 50.0), &k).is_err());
        assert!(generate_phantom(&params(50.0, 2, 50.0), &k).is_err());
    }

    #[test]
    fn spec_text_lists_coefficients() {
        let text = PhantomCoefficients::default().to_spec_text();
        assert!(text.contains("ventricle_volume_scale = 1 + 2 * a_n"));
        assert!(text.contains("texture_amplitude = 0.04 + 0.26 * c_n"));
    }
}
