use std::io::{BufRead, BufReader, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::Vector;

/// Adaptive majorant of the pair relative speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Majorant {
    pub u_max: f64,
    pub steps_since_refresh: u32,
    pub carry: f64,
}

/// Running counters, reset by [`ParticleEnsemble::reset_stats`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CollisionStats {
    pub steps: u64,
    pub candidates: u64,
    pub accepted: u64,
    /// Accepted pairs whose relative speed exceeded the majorant.
    pub overflows: u64,
    /// Sum of accepted `|u|/U_max`.
    pub accepted_ratio_sum: f64,
    /// Kinetic energy change per unit mass due to collisions.
    pub collision_energy: f64,
    /// Kinetic energy change per unit mass due to forcing.
    pub forcing_energy: f64,
    /// Largest `|mean velocity|` removed by re-centering.
    pub max_recenter: f64,
}

impl CollisionStats {
    pub fn overflow_fraction(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            self.overflows as f64 / self.candidates as f64
        }
    }
}

/// `N` equal-weight particles (total mass one) with their generator.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub(crate) velocities: Vec<Vector>,
    pub(crate) rng: ChaCha8Rng,
    seed: u64,
    pub time: f64,
    /// Number of disjoint batches per collision step; one is sequential.
    pub(crate) partitions: usize,
    pub(crate) majorant: Majorant,
    pub(crate) step_counter: u64,
    pub(crate) force_counter: u64,
    pub stats: CollisionStats,
}

impl ParticleEnsemble {
    /// Wraps explicit velocities; the mean is not removed.
    pub fn from_velocities(velocities: Vec<Vector>, seed: u64) -> Result<Self> {
        if velocities.len() < 2 {
            return Err(Error::InvalidParam(format!(
                "ensemble needs at least 2 particles (got {})",
                velocities.len()
            )));
        }
        if velocities.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("non-finite velocity".into()));
        }
        let mut ens = Self {
            velocities,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            time: 0.0,
            partitions: 1,
            majorant: Majorant {
                u_max: 0.0,
                steps_since_refresh: 0,
                carry: 0.0,
            },
            step_counter: 0,
            force_counter: 0,
            stats: CollisionStats::default(),
        };
        ens.refresh_majorant();
        Ok(ens)
    }

    /// Splits collision and forcing work into `partitions` independent
    /// streams; `1` restores the sequential reference path.
    pub fn with_partitions(mut self, partitions: usize) -> Self {
        self.partitions = partitions.max(1);
        self
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn partitions(&self) -> usize {
        self.partitions
    }

    pub fn velocities(&self) -> &[Vector] {
        &self.velocities
    }

    pub fn u_max(&self) -> f64 {
        self.majorant.u_max
    }

    pub fn mean_velocity(&self) -> Vector {
        let mut s = Vector::zero();
        for &v in &self.velocities {
            s += v;
        }
        s * self.weight()
    }

    /// `m₁ = Σ wᵢ|vᵢ|²`.
    pub fn energy(&self) -> f64 {
        self.velocities.iter().map(|v| v.norm2()).sum::<f64>() * self.weight()
    }

    pub fn max_speed(&self) -> f64 {
        self.velocities.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Subtracts the mean velocity; returns its magnitude.
    pub fn recenter(&mut self) -> f64 {
        let m = self.mean_velocity();
        for v in &mut self.velocities {
            *v -= m;
        }
        m.norm()
    }

    /// `U_max = 1.5 · 2 · max|v|`.
    pub(crate) fn refresh_majorant(&mut self) {
        self.majorant.u_max = 3.0 * self.max_speed();
        self.majorant.steps_since_refresh = 0;
    }

    pub fn reset_stats(&mut self) {
        self.stats = CollisionStats::default();
    }

    /// Writes `# n=…, seed=…, time=…` followed by `vx,vy,vz` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# n={}, seed={}, time={:?}",
            self.len(),
            self.seed,
            self.time
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["vx", "vy", "vz"])?;
        for v in &self.velocities {
            w.write_record([format!("{:?}", v.x), format!("{:?}", v.y), format!("{:?}", v.z)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a snapshot written by [`Self::write_csv`]. The generator is
    /// re-seeded from the header seed and time.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let header = header
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("snapshot header line missing".into()))?;
        let (mut n, mut seed, mut time) = (None, None, None);
        for field in header.split(',') {
            let Some((k, v)) = field.trim().split_once('=') else {
                continue;
            };
            let bad = |_| Error::Parse(format!("bad header field {field:?}"));
            match k.trim() {
                "n" => n = Some(v.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "seed" => seed = Some(v.trim().parse::<u64>().map_err(|e| bad(e.to_string()))?),
                "time" => time = Some(v.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?),
                _ => {}
            }
        }
        let (Some(n), Some(seed), Some(time)) = (n, seed, time) else {
            return Err(Error::Parse("snapshot header needs n, seed and time".into()));
        };
        let mut r = csv::Reader::from_reader(reader);
        let mut velocities = Vec::with_capacity(n);
        for rec in r.records() {
            let rec = rec?;
            let c = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Parse("short snapshot row".into()))?
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("snapshot value: {e}")))
            };
            velocities.push(Vector::new(c(0)?, c(1)?, c(2)?));
        }
        if velocities.len() != n {
            return Err(Error::Parse(format!(
                "header declares {n} particles, found {}",
                velocities.len()
            )));
        }
        let mut ens = Self::from_velocities(velocities, seed)?;
        ens.time = time;
        ens.rng = ChaCha8Rng::seed_from_u64(seed ^ time.to_bits().rotate_left(17));
        Ok(ens)
    }
}

/// Maxwellian sample with per-component variance `temperature`, re-centered
/// to zero mean.
pub fn init_ensemble(n: usize, temperature: f64, seed: u64) -> Result<ParticleEnsemble> {
    if n < 2 {
        return Err(Error::InvalidParam(format!("ensemble needs n >= 2 (got {n})")));
    }
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "temperature must be finite and non-negative (got {temperature})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = temperature.sqrt();
    let mut normal = || -> f64 { let x: f64 = StandardNormal.sample(&mut rng);
        sd * x
    };
    let velocities = (0..n).map(|_| Vector::new(normal(), normal(), normal())).collect();
    let mut ens = ParticleEnsemble::from_velocities(velocities, seed)?;
    ens.recenter();
    ens.rng = rng;
    ens.refresh_majorant();
    Ok(ens)
}
