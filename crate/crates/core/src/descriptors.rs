//! Firmware descriptors `f = (m, c, o)`: synthetic generation, exposure
//! perturbation and file ingestion.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{cholesky_psd, Matrix};
use crate::rng::{Purpose, Stream};
use crate::{files, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "ARM")]
    Arm,
    #[serde(rename = "MIPS")]
    Mips,
    #[serde(rename = "PPC")]
    Ppc,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Arm, Arch::Mips, Arch::Ppc];

    pub fn index(self) -> usize {
        match self {
            Arch::Arm => 0,
            Arch::Mips => 1,
            Arch::Ppc => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arch::Arm => "ARM",
            Arch::Mips => "MIPS",
            Arch::Ppc => "PPC",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ARM" => Ok(Arch::Arm),
            "MIPS" => Ok(Arch::Mips),
            "PPC" => Ok(Arch::Ppc),
            _ => Err(Error::Unknown {
                kind: "architecture",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub arch: Arch,
    pub version_id: String,
    pub device_class: String,
    pub product_family: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirmwareDescriptor {
    pub id: u64,
    pub metadata: Metadata,
    pub config: Vec<f64>,
    pub structure: Vec<f64>,
}

impl FirmwareDescriptor {
    pub fn new(id: u64, metadata: Metadata, config: Vec<f64>, structure: Vec<f64>) -> Result<Self> {
        if config.is_empty() || structure.is_empty() {
            return Err(Error::InvalidDimension(
                "descriptor vectors must be non-empty".into(),
            ));
        }
        Error::check_finite("descriptor config", &config)?;
        Error::check_finite("descriptor structure", &structure)?;
        Ok(FirmwareDescriptor {
            id,
            metadata,
            config,
            structure,
        })
    }

    pub fn k_c(&self) -> usize {
        self.config.len()
    }

    pub fn k_o(&self) -> usize {
        self.structure.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&DescriptorDoc::from(self)).expect("descriptor serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&DescriptorDoc::from(self)).expect("descriptor serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DescriptorDoc = serde_json::from_str(text)
            .map_err(|e| Error::MalformedDescriptor(e.to_string()))?;
        doc.into_descriptor()
    }
}

/// On-disk shape of a descriptor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DescriptorDoc {
    schema_version: u32,
    #[serde(default)]
    id: u64,
    metadata: Metadata,
    k_c: usize,
    k_o: usize,
    #[serde(default)]
    config: Vec<f64>,
    #[serde(default)]
    structure: Vec<f64>,
}

impl From<&FirmwareDescriptor> for DescriptorDoc {
    fn from(f: &FirmwareDescriptor) -> Self {
        DescriptorDoc {
            schema_version: SCHEMA_VERSION,
            id: f.id,
            metadata: f.metadata.clone(),
            k_c: f.k_c(),
            k_o: f.k_o(),
            config: f.config.clone(),
            structure: f.structure.clone(),
        }
    }
}

impl DescriptorDoc {
    fn into_descriptor(self) -> Result<FirmwareDescriptor> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::MalformedDescriptor(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        let m = &self.metadata;
        for (name, v) in [
            ("version_id", &m.version_id),
            ("device_class", &m.device_class),
            ("product_family", &m.product_family),
        ] {
            if v.trim().is_empty() {
                return Err(Error::MalformedDescriptor(format!(
                    "metadata.{name} is empty"
                )));
            }
        }
        if self.k_c == 0 || self.k_o == 0 {
            return Err(Error::InvalidDimension("k_c and k_o must be positive".into()));
        }
        Error::check_len("descriptor config", self.k_c, self.config.len())?;
        Error::check_len("descriptor structure", self.k_o, self.structure.len())?;
        FirmwareDescriptor::new(self.id, self.metadata, self.config, self.structure)
    }
}

const ROUTER_EXAMPLE: &str = include_str!("../data/router.desc");

/// A consumer router with 47 active services and 11 privileged components,
/// shipped as a worked example.
pub fn example_router() -> FirmwareDescriptor {
    FirmwareDescriptor::from_json(ROUTER_EXAMPLE).expect("bundled router descriptor is valid")
}

/// Reads one descriptor document.
pub fn load_descriptor(path: &Path) -> Result<FirmwareDescriptor> {
    FirmwareDescriptor::from_json(&files::read_to_string(path)?)
}

/// Reads a batch file holding one descriptor document per line. Consecutive
/// pretty-printed documents are accepted too.
pub fn load_batch(path: &Path) -> Result<Vec<FirmwareDescriptor>> {
    parse_batch(&files::read_to_string(path)?)
}

pub fn parse_batch(text: &str) -> Result<Vec<FirmwareDescriptor>> {
    let mut out = Vec::new();
    for doc in serde_json::Deserializer::from_str(text).into_iter::<DescriptorDoc>() {
        let doc = doc.map_err(|e| Error::MalformedDescriptor(e.to_string()))?;
        out.push(doc.into_descriptor()?);
    }
    if out.is_empty() {
        return Err(Error::MalformedDescriptor("batch holds no descriptors".into()));
    }
    Ok(out)
}

pub fn format_batch(descriptors: &[FirmwareDescriptor]) -> String {
    let mut s = String::new();
    for d in descriptors {
        s.push_str(&d.to_json());
        s.push('\n');
    }
    s
}

pub fn write_batch(path: &Path, descriptors: &[FirmwareDescriptor]) -> Result<()> {
    files::write_atomic(path, format_batch(descriptors).as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExposureLevel {
    None,
    Low,
    Medium,
    High,
}

impl ExposureLevel {
    pub const ALL: [ExposureLevel; 4] = [
        ExposureLevel::None,
        ExposureLevel::Low,
        ExposureLevel::Medium,
        ExposureLevel::High,
    ];

    /// Configuration scaling `α_e`.
    pub fn alpha(self) -> f64 {
        match self {
            ExposureLevel::None => 0.0,
            ExposureLevel::Low => 0.1,
            ExposureLevel::Medium => 0.3,
            ExposureLevel::High => 0.5,
        }
    }

    /// Structure scaling `β_e`.
    pub fn beta(self) -> f64 {
        self.alpha()
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            ExposureLevel::None => "none",
            ExposureLevel::Low => "low",
            ExposureLevel::Medium => "medium",
            ExposureLevel::High => "high",
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<ExposureLevel>> {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse())
            .collect()
    }
}

impl fmt::Display for ExposureLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExposureLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(ExposureLevel::None),
            "low" => Ok(ExposureLevel::Low),
            "medium" => Ok(ExposureLevel::Medium),
            "high" => Ok(ExposureLevel::High),
            _ => Err(Error::Unknown {
                kind: "exposure level",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n: usize,
    pub base_seed: u64,
    pub k_c: usize,
    pub k_o: usize,
    pub mu_c: Vec<f64>,
    pub mu_o: Vec<f64>,
    pub sigma_c: Matrix,
    pub sigma_o: Matrix,
    pub arch_probs: [f64; 3],
}

pub const DEFAULT_ARCH_PROBS: [f64; 3] = [0.5, 0.3, 0.2];
pub const DEFAULT_K: usize = 16;

impl GeneratorConfig {
    /// Zero means, identity covariances, default architecture mix.
    pub fn standard(n: usize, base_seed: u64, k_c: usize, k_o: usize) -> Self {
        GeneratorConfig {
            n,
            base_seed,
            k_c,
            k_o,
            mu_c: vec![0.0; k_c],
            mu_o: vec![0.0; k_o],
            sigma_c: Matrix::identity(k_c),
            sigma_o: Matrix::identity(k_o),
            arch_probs: DEFAULT_ARCH_PROBS,
        }
    }

    /// Same as [`standard`](Self::standard) with both covariances set to `variance·I`.
    pub fn isotropic(n: usize, base_seed: u64, k_c: usize, k_o: usize, variance: f64) -> Self {
        let mut cfg = Self::standard(n, base_seed, k_c, k_o);
        cfg.sigma_c = Matrix::diagonal(&vec![variance; k_c]);
        cfg.sigma_o = Matrix::diagonal(&vec![variance; k_o]);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("instance count must be positive".into()));
        }
        if self.k_c == 0 || self.k_o == 0 {
            return Err(Error::InvalidDimension("k_c and k_o must be positive".into()));
        }
        Error::check_len("mu_c", self.k_c, self.mu_c.len())?;
        Error::check_len("mu_o", self.k_o, self.mu_o.len())?;
        Error::check_len("sigma_c", self.k_c, self.sigma_c.rows)?;
        Error::check_len("sigma_o", self.k_o, self.sigma_o.rows)?;
        Error::check_finite("mu_c", &self.mu_c)?;
        Error::check_finite("mu_o", &self.mu_o)?;
        let sum: f64 = self.arch_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.arch_probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "arch_probs must be nonnegative and sum to 1, got {:?}",
                self.arch_probs
            )));
        }
        Ok(())
    }
}

/// A validated configuration with its covariance factors precomputed.
#[derive(Debug, Clone)]
pub struct Generator {
    cfg: GeneratorConfig,
    l_c: Matrix,
    l_o: Matrix,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        let l_c = cholesky_psd(&cfg.sigma_c)?;
        let l_o = cholesky_psd(&cfg.sigma_o)?;
        Ok(Generator { cfg, l_c, l_o })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    /// Instance `i`, a pure function of `(base_seed, i)`.
    pub fn instance(&self, i: u64) -> FirmwareDescriptor {
        let seed = self.cfg.base_seed;
        let config = affine_sample(
            &self.cfg.mu_c,
            &self.l_c,
            &Stream::new(seed, i, Purpose::Config).normals(self.cfg.k_c),
        );
        let structure = affine_sample(
            &self.cfg.mu_o,
            &self.l_o,
            &Stream::new(seed, i, Purpose::Structure).normals(self.cfg.k_o),
        );
        let arch = Arch::ALL[Stream::new(seed, i, Purpose::Arch).categorical(&self.cfg.arch_probs)];
        FirmwareDescriptor {
            id: i,
            metadata: Metadata {
                arch,
                version_id: format!("synthetic-{i}"),
                device_class: "synthetic".into(),
                product_family: "synthetic".into(),
            },
            config,
            structure,
        }
    }

    pub fn generate(&self) -> Vec<FirmwareDescriptor> {
        (0..self.cfg.n as u64)
            .into_par_iter()
            .map(|i| self.instance(i))
            .collect()
    }
}

fn affine_sample(mu: &[f64], l: &Matrix, z: &[f64]) -> Vec<f64> {
    let lz = l.mul_vec(z).expect("factor shape checked at construction");
    mu.iter().zip(lz).map(|(m, v)| m + v).collect()
}

/// Generates `cfg.n` descriptors.
pub fn generate(cfg: &GeneratorConfig) -> Result<Vec<FirmwareDescriptor>> {
    Ok(Generator::new(cfg.clone())?.generate())
}

/// Standard-normal draws `(ε_c, ε_o)` used to perturb one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbNoise {
    pub eps_c: Vec<f64>,
    pub eps_o: Vec<f64>,
}

impl PerturbNoise {
    /// Draws the noise for `(instance, level)`. In paired mode the draws do
    /// not depend on the level.
    pub fn draw(
        base_seed: u64,
        instance: u64,
        level: ExposureLevel,
        paired: bool,
        k_c: usize,
        k_o: usize,
    ) -> Self {
        let tag = if paired { None } else { Some(level.index()) };
        PerturbNoise {
            eps_c: Stream::new(base_seed, instance, Purpose::PerturbConfig { level: tag }).normals(k_c),
            eps_o: Stream::new(base_seed, instance, Purpose::PerturbStructure { level: tag })
                .normals(k_o),
        }
    }
}

/// `c + α ε_c`, `o + β ε_o`; metadata and id unchanged.
pub fn perturb_with(
    f: &FirmwareDescriptor,
    alpha: f64,
    beta: f64,
    noise: &PerturbNoise,
) -> Result<FirmwareDescriptor> {
    Error::check_len("config noise", f.k_c(), noise.eps_c.len())?;
    Error::check_len("structure noise", f.k_o(), noise.eps_o.len())?;
    let mut out = f.clone();
    if alpha != 0.0 {
        for (c, e) in out.config.iter_mut().zip(&noise.eps_c) {
            *c += alpha * e;
        }
    }
    if beta != 0.0 {
        for (o, e) in out.structure.iter_mut().zip(&noise.eps_o) {
            *o += beta * e;
        }
    }
    Ok(out)
}

/// Applies exposure level `e` to `f` using the instance's derived noise stream.
pub fn perturb(
    f: &FirmwareDescriptor,
    e: ExposureLevel,
    base_seed: u64,
    paired: bool,
) -> FirmwareDescriptor {
    if e == ExposureLevel::None {
        return f.clone();
    }
    let noise = PerturbNoise::draw(base_seed, f.id, e, paired, f.k_c(), f.k_o());
    perturb_with(f, e.alpha(), e.beta(), &noise).expect("noise drawn at descriptor dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> Metadata {
        Metadata {
            arch: Arch::Arm,
            version_id: "1.0".into(),
            device_class: "router".into(),
            product_family: "x".into(),
        }
    }

    #[test]
    fn zero_covariance_reproduces_mean() {
        let mut cfg = GeneratorConfig::standard(20, 1, 4, 3);
        cfg.mu_c = vec![3.0; 4];
        cfg.sigma_c = Matrix::zeros(4, 4);
        for d in generate(&cfg).unwrap() {
            assert_eq!(d.config, vec![3.0; 4]);
        }
    }

    #[test]
    fn arch_frequencies() {
        let cfg = GeneratorConfig::standard(10_000, 42, 2, 2);
        let ds = generate(&cfg).unwrap();
        let mut counts = [0usize; 3];
        for d in &ds {
            counts[d.metadata.arch.index()] += 1;
        }
        for (c, p) in counts.iter().zip(DEFAULT_ARCH_PROBS) {
            assert!((*c as f64 / 1e4 - p).abs() < 0.02);
        }
    }

    #[test]
    fn instance_is_independent_of_batch() {
        let g = Generator::new(GeneratorConfig::standard(50, 9, 5, 5)).unwrap();
        let all = g.generate();
        assert_eq!(all[37], g.instance(37));
        let g2 = Generator::new(GeneratorConfig::standard(40, 9, 5, 5)).unwrap();
        assert_eq!(g2.generate()[..], all[..40]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate(&GeneratorConfig::standard(0, 1, 2, 2)).is_err());
        let mut cfg = GeneratorConfig::standard(1, 1, 2, 2);
        cfg.mu_c = vec![0.0; 3];
        assert!(matches!(generate(&cfg), Err(Error::DimensionMismatch { .. })));
        let mut cfg = GeneratorConfig::standard(1, 1, 2, 2);
        cfg.sigma_c = Matrix::from_rows(&[vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap();
        assert!(matches!(generate(&cfg), Err(Error::NotFactorizable)));
        let mut cfg = GeneratorConfig::standard(1, 1, 2, 2);
        cfg.arch_probs = [0.5, 0.5, 0.5];
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn perturb_by_hand() {
        let f = FirmwareDescriptor::new(0, meta(), vec![1.0, 1.0], vec![0.0]).unwrap();
        let noise = PerturbNoise {
            eps_c: vec![2.0, -2.0],
            eps_o: vec![1.0],
        };
        let g = perturb_with(&f, 0.5, 0.0, &noise).unwrap();
        assert_eq!(g.config, vec![2.0, 0.0]);
        assert_eq!(g.structure, vec![0.0]);
        assert_eq!(g.metadata, f.metadata);
    }

    #[test]
    fn none_level_is_identity() {
        let f = FirmwareDescriptor::new(4, meta(), vec![0.3, -1.2], vec![5.0]).unwrap();
        assert_eq!(perturb(&f, ExposureLevel::None, 1, true), f);
        assert_eq!(perturb(&f, ExposureLevel::None, 1, false), f);
    }

    #[test]
    fn paired_high_is_five_times_low() {
        let g = Generator::new(GeneratorConfig::standard(10, 3, 6, 6)).unwrap();
        for f in g.generate() {
            let lo = perturb(&f, ExposureLevel::Low, 3, true);
            let hi = perturb(&f, ExposureLevel::High, 3, true);
            for ((c, l), h) in f.config.iter().zip(&lo.config).zip(&hi.config) {
                let dl = (l - c).abs();
                let dh = (h - c).abs();
                assert!((dh - 5.0 * dl).abs() <= 1e-12 * (1.0 + dh));
            }
        }
    }

    #[test]
    fn unpaired_levels_use_distinct_noise() {
        let a = PerturbNoise::draw(1, 0, ExposureLevel::Low, false, 4, 4);
        let b = PerturbNoise::draw(1, 0, ExposureLevel::High, false, 4, 4);
        assert_ne!(a, b);
        let a = PerturbNoise::draw(1, 0, ExposureLevel::Low, true, 4, 4);
        let b = PerturbNoise::draw(1, 0, ExposureLevel::High, true, 4, 4);
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let text = r#"{"schema_version":1,"metadata":{"arch":"MIPS","version_id":"v","device_class":"d","product_family":"p"},"k_c":3,"k_o":1,"config":[47,11,8.2],"structure":[1]}"#;
        let f = FirmwareDescriptor::from_json(text).unwrap();
        assert_eq!(f.id, 0);
        assert_eq!(f.config, vec![47.0, 11.0, 8.2]);
        assert_eq!(FirmwareDescriptor::from_json(&f.to_json()).unwrap(), f);

        let short = text.replace("[47,11,8.2]", "[47,11]");
        assert!(matches!(
            FirmwareDescriptor::from_json(&short),
            Err(Error::DimensionMismatch { .. })
        ));
        let empty_meta = text.replace("\"d\"", "\"\"");
        assert!(FirmwareDescriptor::from_json(&empty_meta).is_err());
        let bad_arch = text.replace("MIPS", "X86");
        assert!(FirmwareDescriptor::from_json(&bad_arch).is_err());
    }

    #[test]
    fn batch_round_trip() {
        let ds = generate(&GeneratorConfig::standard(5, 2, 3, 4)).unwrap();
        let text = format_batch(&ds);
        assert_eq!(text.lines().count(), 5);
        assert_eq!(parse_batch(&text).unwrap(), ds);
        assert!(parse_batch("").is_err());
    }

    #[test]
    fn exposure_constants() {
        let pairs: Vec<(f64, f64)> = ExposureLevel::ALL.iter().map(|e| (e.alpha(), e.beta())).collect();
        assert_eq!(pairs, vec![(0.0, 0.0), (0.1, 0.1), (0.3, 0.3), (0.5, 0.5)]);
        assert_eq!(
            ExposureLevel::parse_list("medium,HIGH").unwrap(),
            vec![ExposureLevel::Medium, ExposureLevel::High]
        );
        assert!("extreme".parse::<ExposureLevel>().is_err());
    }
}
