//! Scalar training schedules: task re-weighting from discriminator
//! readouts, the adversarial-loss ramp, the combined loss and the
//! learning-rate schedule.
//!
//! Optimizer settings these schedules were designed alongside: SGD with
//! momentum 0.9 and weight decay 0.001.

use std::io::Read;

use crate::error::{Error, Result};

pub const DEFAULT_BETA: f64 = 2.0;
pub const DEFAULT_BASE_LR: f64 = 0.002;
pub const DEFAULT_FINAL_LR: f64 = 0.0002;
pub const DEFAULT_WARMUP_STEPS: u64 = 500;

/// Source-domain probabilities reported by the three discriminators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminatorReadout {
    pub p_s_img: f64,
    pub p_s_sem: f64,
    pub p_s_ins: f64,
}

impl DiscriminatorReadout {
    /// Rejects probabilities outside the open interval (0, 1).
    pub fn new(p_s_img: f64, p_s_sem: f64, p_s_ins: f64) -> Result<Self> {
        let r = Self {
            p_s_img,
            p_s_sem,
            p_s_ins,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn balanced() -> Self {
        Self {
            p_s_img: 0.5,
            p_s_sem: 0.5,
            p_s_ins: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_s_img", self.p_s_img),
            ("p_s_sem", self.p_s_sem),
            ("p_s_ins", self.p_s_ins),
        ] {
            check_probability(name, p)?;
        }
        Ok(())
    }
}

impl Default for DiscriminatorReadout {
    fn default() -> Self {
        Self::balanced()
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "{name} must lie strictly inside (0, 1), got {p}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha_img: f64,
    pub alpha_ins: f64,
    pub alpha_sem: f64,
    pub alpha_da: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TaskLosses {
    pub l_rpn: f64,
    pub l_det: f64,
    pub l_sem_seg: f64,
    pub l_img_da: f64,
    pub l_sem_da: f64,
    pub l_ins_da: f64,
}

impl TaskLosses {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("l_rpn", self.l_rpn),
            ("l_det", self.l_det),
            ("l_sem_seg", self.l_sem_seg),
            ("l_img_da", self.l_img_da),
            ("l_sem_da", self.l_sem_da),
            ("l_ins_da", self.l_ins_da),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Trade-off weight `min((1 - p_s) / p_s, beta)`.
pub fn task_weight(p_s: f64, beta: f64) -> Result<f64> {
    check_probability("p_s", p_s)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    Ok(((1.0 - p_s) / p_s).min(beta))
}

/// Adversarial ramp `2 / (1 + exp(-10 t)) - 1` for training progress `t`.
pub fn adversarial_weight(t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!(
            "training progress must lie in [0, 1], got {t}"
        )));
    }
    Ok(2.0 / (1.0 + (-10.0 * t).exp()) - 1.0)
}

pub fn loss_weights(readout: &DiscriminatorReadout, t: f64, beta: f64) -> Result<LossWeights> {
    readout.validate()?;
    Ok(LossWeights {
        alpha_img: task_weight(readout.p_s_img, beta)?,
        alpha_ins: task_weight(readout.p_s_ins, beta)?,
        alpha_sem: task_weight(readout.p_s_sem, beta)?,
        alpha_da: adversarial_weight(t)?,
        beta,
    })
}

/// Overall loss: RPN, detection and semantic losses scaled by their task
/// weights, plus the ramped sum of the three domain-classification losses.
pub fn combine_losses(
    losses: &TaskLosses,
    readout: &DiscriminatorReadout,
    t: f64,
    beta: f64,
) -> Result<(f64, LossWeights)> {
    losses.validate()?;
    let w = loss_weights(readout, t, beta)?;
    let total = w.alpha_img * losses.l_rpn
        + w.alpha_ins * losses.l_det
        + w.alpha_sem * losses.l_sem_seg
        + w.alpha_da * (losses.l_img_da + losses.l_sem_da + losses.l_ins_da);
    Ok((total, w))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub final_lr: f64,
    pub warmup_steps: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base: DEFAULT_BASE_LR,
            final_lr: DEFAULT_FINAL_LR,
            warmup_steps: DEFAULT_WARMUP_STEPS,
        }
    }
}

impl LrSchedule {
    /// Linear warmup from `base / warmup_steps` to `base`, constant `base`
    /// until three quarters of training, then constant `final_lr`.
    pub fn at(&self, step: u64, total_steps: u64) -> Result<f64> {
        if step >= total_steps {
            return Err(Error::Domain(format!(
                "step {step} outside [0, {total_steps})"
            )));
        }
        // warmup_steps < 0.75 * total, in integers
        if 4 * self.warmup_steps as u128 >= 3 * total_steps as u128 {
            return Err(Error::Domain(format!(
                "warmup of {} steps must end before 3/4 of {total_steps} steps",
                self.warmup_steps
            )));
        }
        if 4 * step as u128 >= 3 * total_steps as u128 {
            return Ok(self.final_lr);
        }
        if step < self.warmup_steps {
            let w = self.warmup_steps as f64;
            let start = self.base / w;
            return Ok(start + (self.base - start) * step as f64 / w);
        }
        Ok(self.base)
    }
}

pub fn learning_rate(step: u64, total_steps: u64) -> Result<f64> {
    LrSchedule::default().at(step, total_steps)
}

/// One row of an emitted schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleRow {
    pub step: u64,
    pub alpha_img: f64,
    pub alpha_ins: f64,
    pub alpha_sem: f64,
    pub alpha_da: f64,
    pub lr: f64,
}

pub const SCHEDULE_HEADER: [&str; 6] = [
    "step",
    "alpha_img",
    "alpha_ins",
    "alpha_sem",
    "alpha_da",
    "lr",
];

/// Per-step discriminator readouts, sorted by step.
///
/// A trace may be sparse; a step without an entry reuses the most recent
/// earlier readout, or the balanced readout before the first entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReadoutTrace {
    entries: Vec<(u64, DiscriminatorReadout)>,
}

impl ReadoutTrace {
    pub fn new(mut entries: Vec<(u64, DiscriminatorReadout)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::Validation(format!(
                    "duplicate trace step {}",
                    pair[0].0
                )));
            }
        }
        for (_, r) in &entries {
            r.validate()?;
        }
        Ok(Self { entries })
    }

    /// Parses CSV with header `step,p_s_img,p_s_sem,p_s_ins`. Errors carry the
    /// 1-based line number (the header is line 1).
    pub fn from_csv(reader: impl Read, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let expected = ["step", "p_s_img", "p_s_sem", "p_s_ins"];
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse {
                path: source.into(),
                line: 1,
                reason: format!("expected header {}", expected.join(",")),
            });
        }
        let mut entries = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = |reason: String| Error::Parse {
                path: source.into(),
                line,
                reason,
            };
            if rec.len() != 4 {
                return Err(bad(format!("expected 4 fields, got {}", rec.len())));
            }
            let step: u64 = rec[0]
                .parse()
                .map_err(|_| bad(format!("bad step {:?}", &rec[0])))?;
            let mut p = [0.0; 3];
            for (k, slot) in p.iter_mut().enumerate() {
                *slot = rec[k + 1]
                    .parse()
                    .map_err(|_| bad(format!("bad probability {:?}", &rec[k + 1])))?;
            }
            let readout =
                DiscriminatorReadout::new(p[0], p[1], p[2]).map_err(|e| bad(e.to_string()))?;
            if !seen.insert(step) {
                return Err(bad(format!("duplicate step {step}")));
            }
            entries.push((step, readout));
        }
        Self::new(entries)
    }

    fn readout_at(&self, step: u64) -> DiscriminatorReadout {
        let idx = self.entries.partition_point(|e| e.0 <= step);
        if idx == 0 {
            DiscriminatorReadout::balanced()
        } else {
            self.entries[idx - 1].1
        }
    }
}

/// One row per step with the loss weights and learning rate in force.
/// Training progress for step `s` is `s / total_steps`.
pub fn emit_schedule(
    total_steps: u64,
    beta: f64,
    trace: Option<&ReadoutTrace>,
    lr: &LrSchedule,
) -> Result<Vec<ScheduleRow>> {
    if total_steps == 0 {
        return Err(Error::Domain("total_steps must be positive".into()));
    }
    let empty = ReadoutTrace::default();
    let trace = trace.unwrap_or(&empty);
    (0..total_steps)
        .map(|step| {
            let t = step as f64 / total_steps as f64;
            let w = loss_weights(&trace.readout_at(step), t, beta)?;
            Ok(ScheduleRow {
                step,
                alpha_img: w.alpha_img,
                alpha_ins: w.alpha_ins,
                alpha_sem: w.alpha_sem,
                alpha_da: w.alpha_da,
                lr: lr.at(step, total_steps)?,
            })
        })
        .collect()
}

pub fn write_schedule_csv(rows: &[ScheduleRow], writer: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SCHEDULE_HEADER)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.alpha_img.to_string(),
            r.alpha_ins.to_string(),
            r.alpha_sem.to_string(),
            r.alpha_da.to_string(),
            r.lr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
