//! Parametric event signatures at the sensor buses.
//!
//! Every number in the catalogue below is a generator parameter chosen to
//! give each event type a recognisable, location-dependent footprint; none of
//! it claims electromagnetic-transient fidelity.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{FeederTopology, OperatingPoint};
use crate::error::{Error, Result};
use crate::numerics::rng::Rng;
use crate::numerics::Tensor;

pub const WINDOW_LEN: usize = 125;
pub const CHANNELS: usize = 9;
pub const HARMONIC_ORDERS: [u8; 3] = [1, 3, 5];
pub const NUM_CLASSES: u8 = 9;

/// Number of phases each class touches.
const EXPECTED_PHASES: [usize; 9] = [3, 3, 1, 3, 3, 3, 1, 2, 3];

/// Slot of a harmonic order in `[1, 3, 5]`.
pub fn order_slot(order: u8) -> Result<usize> {
    HARMONIC_ORDERS
        .iter()
        .position(|&h| h == order)
        .ok_or_else(|| Error::contract(format!("harmonic order {order} not in {HARMONIC_ORDERS:?}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Eval,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Eval, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "eval" => Some(Split::Eval),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    CapacitorSwitching,
    LoadSwitching,
    MotorStart,
    Fault,
}

/// Affected phases A, B, C.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Phases(pub [bool; 3]);

impl Phases {
    pub const ABC: Phases = Phases([true, true, true]);
    pub const A: Phases = Phases([true, false, false]);
    pub const AB: Phases = Phases([true, true, false]);

    pub fn count(self) -> usize {
        self.0.iter().filter(|&&p| p).count()
    }
}

/// One entry of the event catalogue: what happens, where, on which phases.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassProfile {
    pub class: u8,
    pub kind: EventKind,
    pub location: String,
    pub phases: Phases,
}

/// Nine event types on the IEEE 34-bus feeder, one fixed location each.
pub fn default_catalogue() -> Vec<ClassProfile> {
    use EventKind::*;
    let p = |class, kind, location: &str, phases| ClassProfile {
        class,
        kind,
        location: location.to_string(),
        phases,
    };
    vec![
        p(1, CapacitorSwitching, "840", Phases::ABC),
        p(2, CapacitorSwitching, "848", Phases::ABC),
        p(3, LoadSwitching, "858", Phases::A),
        p(4, LoadSwitching, "836", Phases::ABC),
        p(5, MotorStart, "812", Phases::ABC),
        p(6, MotorStart, "828", Phases::ABC),
        p(7, Fault, "852", Phases::A),
        p(8, Fault, "862", Phases::AB),
        p(9, Fault, "816", Phases::ABC),
    ]
}

/// Magnitudes of one event instance (all in per-unit or samples).
#[derive(Clone, Debug, PartialEq)]
pub enum Signature {
    CapacitorSwitching {
        v_step: f64,
        ringing: f64,
        period: f64,
        decay: f64,
        pf_step: f64,
        i_ringing: f64,
        v5: f64,
        i5: f64,
        burst_decay: f64,
        burst_period: f64,
    },
    LoadSwitching {
        i_step: f64,
    },
    MotorStart {
        i_run: f64,
        inrush_ratio: f64,
        tau: f64,
        v_dip: f64,
    },
    Fault {
        sag_to: f64,
        i_surge: f64,
        v3: f64,
        i3: f64,
        burst_period: f64,
        clear_decay: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventSpec {
    pub class: u8,
    pub location: usize,
    pub phases: Phases,
    pub onset: usize,
    pub duration: usize,
    pub signature: Signature,
}

impl EventSpec {
    pub fn validate(&self, topology: &FeederTopology, window: usize) -> Result<()> {
        if !(1..=NUM_CLASSES).contains(&self.class) {
            return Err(Error::contract(format!("class {} outside 1..=9", self.class)));
        }
        if self.location >= topology.num_buses() {
            return Err(Error::contract(format!(
                "event bus index {} out of range",
                self.location
            )));
        }
        if self.duration == 0 || self.onset + self.duration > window {
            return Err(Error::contract(format!(
                "onset {} + duration {} exceeds window {window}",
                self.onset, self.duration
            )));
        }
        let expected = EXPECTED_PHASES[self.class as usize - 1];
        if self.phases.count() != expected {
            return Err(Error::contract(format!(
                "class {} must affect {expected} phase(s), got {}",
                self.class,
                self.phases.count()
            )));
        }
        Ok(())
    }
}

/// Draws a random instance of a catalogue entry.
pub fn sample_spec(
    profile: &ClassProfile,
    topology: &FeederTopology,
    window: usize,
    rng: &mut Rng,
) -> Result<EventSpec> {
    let location = topology
        .bus_index(&profile.location)
        .ok_or_else(|| Error::Validation(format!("event bus `{}` not in feeder", profile.location)))?;
    let lo = (window as f64 * 0.2).round() as usize;
    let hi = (window as f64 * 0.5).round() as usize;
    let onset = rng.random_range(lo..=hi);
    let mut u = |a: f64, b: f64| rng.random_range(a..=b);
    let (signature, duration) = match profile.kind {
        EventKind::CapacitorSwitching => (
            Signature::CapacitorSwitching {
                v_step: u(0.01, 0.02),
                ringing: u(1.0, 2.0),
                period: u(5.0, 8.0),
                decay: u(10.0, 20.0),
                pf_step: u(0.01, 0.03),
                i_ringing: u(0.02, 0.05),
                v5: u(0.01, 0.03),
                i5: u(0.03, 0.08),
                burst_decay: u(8.0, 15.0),
                burst_period: u(3.0, 6.0),
            },
            window - onset,
        ),
        EventKind::LoadSwitching => (Signature::LoadSwitching { i_step: u(0.05, 0.2) }, window - onset),
        EventKind::MotorStart => (
            Signature::MotorStart {
                i_run: u(0.02, 0.05),
                inrush_ratio: u(3.0, 6.0),
                tau: u(15.0, 30.0),
                v_dip: u(0.02, 0.05),
            },
            window - onset,
        ),
        EventKind::Fault => {
            let sig = Signature::Fault {
                sag_to: u(0.2, 0.6),
                i_surge: u(1.0, 3.0),
                v3: u(0.02, 0.05),
                i3: u(0.1, 0.3),
                burst_period: u(3.0, 6.0),
                clear_decay: u(5.0, 10.0),
            };
            let dur = rng.random_range(6..=24usize).min(window - onset);
            (sig, dur)
        }
    };
    let spec = EventSpec {
        class: profile.class,
        location,
        phases: profile.phases,
        onset,
        duration,
        signature,
    };
    spec.validate(topology, window)?;
    Ok(spec)
}

/// The windows of one sensor bus for harmonic orders 1, 3, 5.
#[derive(Clone, Debug, PartialEq)]
pub struct BusWindows {
    pub bus: String,
    pub orders: [Tensor; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    pub event_id: u64,
    pub class: u8,
    pub location: String,
    pub split: Split,
    pub blocks: Vec<BusWindows>,
}

impl EventRecord {
    pub fn window(&self, bus: &str, order: u8) -> Option<&Tensor> {
        let slot = order_slot(order).ok()?;
        self.blocks.iter().find(|b| b.bus == bus).map(|b| &b.orders[slot])
    }
}

/// Knobs of the synthetic generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub window: usize,
    /// Decay rate of event footprints per hop of feeder distance.
    pub attenuation: f64,
    /// Multiplier on the per-quantity sensor noise; 0 gives clean templates.
    pub noise_scale: f64,
    pub shift_range: usize,
    pub augment_noise: f64,
    pub catalogue: Vec<ClassProfile>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            window: WINDOW_LEN,
            attenuation: 0.15,
            noise_scale: 1.0,
            shift_range: 10,
            augment_noise: 0.001,
            catalogue: default_catalogue(),
        }
    }
}

/// Per-channel sensor noise for the fundamental and the harmonic orders.
const FUNDAMENTAL_NOISE: [f64; 3] = [5e-4, 1e-3, 1e-3];
const HARMONIC_NOISE: [f64; 3] = [2e-4, 5e-4, 5e-4];

pub fn attenuation_factor(lambda: f64, hops: u32) -> f64 {
    (-lambda * hops as f64).exp()
}

/// Noise-free deviation from the steady state for one sensor, per order.
///
/// `base` holds the sensor's fundamental channels and `v_event` the nominal
/// voltage at the event bus.
pub fn template(spec: &EventSpec, scale: f64, base: [f64; 9], v_event: f64, window: usize) -> [Tensor; 3] {
    let mut out = [
        Tensor::zeros(&[window, CHANNELS]),
        Tensor::zeros(&[window, CHANNELS]),
        Tensor::zeros(&[window, CHANNELS]),
    ];
    let phases = spec.phases.0;
    let end = spec.onset + spec.duration;
    for t in spec.onset..end {
        let dt = (t - spec.onset) as f64;
        // (dV, dI, dPF) per order for one affected phase
        let mut d = [[0.0f64; 3]; 3];
        match spec.signature {
            Signature::CapacitorSwitching {
                v_step,
                ringing,
                period,
                decay,
                pf_step,
                i_ringing,
                v5,
                i5,
                burst_decay,
                burst_period,
            } => {
                let ring = (-dt / decay).exp() * (2.0 * PI * dt / period).cos();
                d[0][0] = v_step * (1.0 + ringing * ring);
                d[0][1] = i_ringing * (-dt / decay).exp() * (2.0 * PI * dt / period).sin().abs();
                d[0][2] = pf_step;
                let burst = (-dt / burst_decay).exp() * (0.5 + 0.5 * (2.0 * PI * dt / burst_period).cos());
                d[2] = [v5 * burst, i5 * burst, 0.3 * burst];
                d[1] = [0.3 * v5 * burst, 0.3 * i5 * burst, 0.1 * burst];
            }
            Signature::LoadSwitching { i_step } => {
                d[0][1] = i_step;
            }
            Signature::MotorStart {
                i_run,
                inrush_ratio,
                tau,
                v_dip,
            } => {
                let e = (-dt / tau).exp();
                d[0][0] = -v_dip * e;
                d[0][1] = i_run * (1.0 + (inrush_ratio - 1.0) * e);
                d[0][2] = -0.2 * e;
            }
            Signature::Fault {
                sag_to,
                i_surge,
                v3,
                i3,
                burst_period,
                ..
            } => {
                d[0][0] = sag_to - v_event;
                d[0][1] = i_surge;
                d[0][2] = -0.5;
                let burst = 0.75 + 0.25 * (2.0 * PI * dt / burst_period).cos();
                d[1] = [v3 * burst, i3 * burst, 0.4 * burst];
                d[2] = [0.4 * v3 * burst, 0.4 * i3 * burst, 0.15 * burst];
            }
        }
        write_row(&mut out, t, &d, &phases, scale, &base);
    }
    // Faults leave a decaying harmonic tail after clearing.
    if let Signature::Fault {
        v3, i3, clear_decay, ..
    } = spec.signature
    {
        for t in end..window {
            let e = (-((t - end) as f64) / clear_decay).exp() * 0.5;
            let d = [
                [0.0; 3],
                [v3 * e, i3 * e, 0.4 * e],
                [0.4 * v3 * e, 0.4 * i3 * e, 0.15 * e],
            ];
            write_row(&mut out, t, &d, &phases, scale, &base);
        }
    }
    out
}

fn write_row(out: &mut [Tensor; 3], t: usize, d: &[[f64; 3]; 3], phases: &[bool; 3], scale: f64, base: &[f64; 9]) {
    for (slot, dev) in d.iter().enumerate() {
        let row = &mut out[slot].data_mut()[t * CHANNELS..(t + 1) * CHANNELS];
        for (ph, &on) in phases.iter().enumerate() {
            if !on {
                continue;
            }
            for q in 0..3 {
                let mut v = scale * dev[q];
                if slot == 0 && q == 2 {
                    // keep PF inside (0, 1]
                    let pf = base[6 + ph];
                    v = (pf + v).clamp(0.05, 1.0) - pf;
                }
                row[q * 3 + ph] = v;
            }
        }
    }
}

/// Constant window of an unsensored bus at the given operating point.
/// Harmonic orders are all zero: unobserved buses carry no harmonics.
pub fn flat_series(op: &OperatingPoint, bus: usize, order: u8, window: usize) -> Result<Tensor> {
    let slot = order_slot(order)?;
    if bus >= op.voltage.len() {
        return Err(Error::contract(format!("unknown bus index {bus}")));
    }
    if slot != 0 {
        return Ok(Tensor::zeros(&[window, CHANNELS]));
    }
    let row = op.channels(bus);
    let data = (0..window).flat_map(|_| row).collect();
    Tensor::new(vec![window, CHANNELS], data)
}

/// Synthesises the sensor windows of one event (id 0, train split; the
/// dataset generator fills those in).
pub fn synth_event(
    topology: &FeederTopology,
    op: &OperatingPoint,
    spec: &EventSpec,
    config: &GeneratorConfig,
    rng: &mut Rng,
) -> Result<EventRecord> {
    spec.validate(topology, config.window)?;
    let v_event = op.voltage[spec.location];
    let mut blocks = Vec::with_capacity(topology.sensors().len());
    for &bus in topology.sensors() {
        let scale = attenuation_factor(config.attenuation, topology.hops(spec.location, bus));
        let base = op.channels(bus);
        let mut orders = template(spec, scale, base, v_event, config.window);
        for (slot, w) in orders.iter_mut().enumerate() {
            let sigmas = if slot == 0 { FUNDAMENTAL_NOISE } else { HARMONIC_NOISE };
            for t in 0..config.window {
                for c in 0..CHANNELS {
                    let baseline = if slot == 0 { base[c] } else { 0.0 };
                    let sigma = sigmas[c / 3] * config.noise_scale;
                    let noise = if sigma > 0.0 {
                        Normal::new(0.0, sigma).expect("positive sigma").sample(rng)
                    } else {
                        0.0
                    };
                    w.data_mut()[t * CHANNELS + c] += baseline + noise;
                }
            }
        }
        blocks.push(BusWindows {
            bus: topology.bus_label(bus).to_string(),
            orders,
        });
    }
    Ok(EventRecord {
        event_id: 0,
        class: spec.class,
        location: topology.bus_label(spec.location).to_string(),
        split: Split::Train,
        blocks,
    })
}

/// Circularly shifts every window of the record by the same offset (row
/// `t` moves to `t + shift`), then adds i.i.d. Gaussian noise.
pub fn shift_and_noise(record: &EventRecord, shift: i64, sigma: f64, rng: &mut Rng) -> Result<EventRecord> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::contract(format!("noise sigma {sigma} must be non-negative")));
    }
    let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("positive sigma"));
    let mut out = record.clone();
    for block in &mut out.blocks {
        for w in &mut block.orders {
            let (t_len, c) = (w.rows(), w.cols());
            let src = w.data().to_vec();
            let data = w.data_mut();
            for t in 0..t_len {
                let from = (t as i64 - shift).rem_euclid(t_len as i64) as usize;
                data[t * c..(t + 1) * c].copy_from_slice(&src[from * c..(from + 1) * c]);
            }
            if let Some(n) = &normal {
                data.iter_mut().for_each(|v| *v += n.sample(rng));
            }
        }
    }
    Ok(out)
}

/// Time-shift and noise augmentation with a random common shift in
/// `[-shift_range, shift_range]`.
pub fn augment(record: &EventRecord, shift_range: usize, sigma: f64, rng: &mut Rng) -> Result<EventRecord> {
    let t_len = record.blocks.first().map_or(WINDOW_LEN, |b| b.orders[0].rows());
    if shift_range >= t_len {
        return Err(Error::contract(format!(
            "shift range {shift_range} must be below the window length {t_len}"
        )));
    }
    let r = shift_range as i64;
    let shift = rng.random_range(-r..=r);
    shift_and_noise(record, shift, sigma, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::nominal_load_flow;
    use crate::numerics::rng;

    fn setup() -> (FeederTopology, OperatingPoint) {
        let t = FeederTopology::ieee34();
        let op = nominal_load_flow(&t);
        (t, op)
    }

    fn spec_for(class: u8, t: &FeederTopology, seed: u64) -> EventSpec {
        let profile = &default_catalogue()[class as usize - 1];
        sample_spec(profile, t, WINDOW_LEN, &mut rng::stream(seed, "spec")).unwrap()
    }

    #[test]
    fn attenuation_values() {
        assert_eq!(attenuation_factor(0.15, 0), 1.0);
        assert!((attenuation_factor(0.15, 2) - 0.74082).abs() < 1e-5);
    }

    #[test]
    fn three_phase_fault_dips_every_voltage() {
        let (t, op) = setup();
        let spec = spec_for(9, &t, 1);
        let cfg = GeneratorConfig {
            noise_scale: 0.0,
            ..Default::default()
        };
        let rec = synth_event(&t, &op, &spec, &cfg, &mut rng::stream(1, "x")).unwrap();
        for block in &rec.blocks {
            let w = &block.orders[0];
            let bus = t.bus_index(&block.bus).unwrap();
            for ph in 0..3 {
                for time in spec.onset..spec.onset + spec.duration {
                    assert!(w.get2(time, ph) < op.voltage[bus]);
                }
                assert_eq!(w.get2(spec.onset - 1, ph), op.voltage[bus]);
            }
        }
    }

    #[test]
    fn single_phase_load_moves_one_current_channel() {
        let (t, op) = setup();
        let spec = spec_for(3, &t, 2);
        let cfg = GeneratorConfig {
            noise_scale: 0.0,
            ..Default::default()
        };
        let rec = synth_event(&t, &op, &spec, &cfg, &mut rng::stream(1, "x")).unwrap();
        let w = &rec.blocks[0].orders[0];
        let last = w.rows() - 1;
        let moved: Vec<usize> = (3..6).filter(|&c| w.get2(last, c) != w.get2(0, c)).collect();
        assert_eq!(moved, vec![3]);
    }

    #[test]
    fn event_at_sensor_is_unattenuated() {
        let (t, _) = setup();
        let mut spec = spec_for(4, &t, 3);
        spec.location = t.bus_index("836").unwrap();
        let sensor = t.bus_index("836").unwrap();
        assert_eq!(attenuation_factor(0.15, t.hops(spec.location, sensor)), 1.0);
    }

    #[test]
    fn flat_series_shapes() {
        let (_, op) = setup();
        let h3 = flat_series(&op, 5, 3, WINDOW_LEN).unwrap();
        assert!(h3.data().iter().all(|&v| v == 0.0));
        let h1 = flat_series(&op, 5, 1, WINDOW_LEN).unwrap();
        assert_eq!(h1.shape(), &[125, 9]);
        for c in 0..9 {
            let col: Vec<f64> = (0..125).map(|r| h1.get2(r, c)).collect();
            assert!(col.iter().all(|&v| v == col[0]));
        }
        assert!(flat_series(&op, 99, 1, WINDOW_LEN).is_err());
        assert!(flat_series(&op, 0, 2, WINDOW_LEN).is_err());
    }

    #[test]
    fn flat_series_takes_voltage_from_operating_point() {
        let op = OperatingPoint {
            voltage: vec![0.98],
            current: vec![0.1],
            power_factor: vec![0.9],
        };
        let w = flat_series(&op, 0, 1, WINDOW_LEN).unwrap();
        assert!((0..125).all(|r| w.get2(r, 0) == 0.98));
    }

    #[test]
    fn invalid_specs_rejected() {
        let (t, _) = setup();
        let mut spec = spec_for(9, &t, 4);
        spec.onset = 120;
        assert!(spec.validate(&t, WINDOW_LEN).is_err());
        let mut spec = spec_for(1, &t, 4);
        spec.phases = Phases::A;
        assert!(spec.validate(&t, WINDOW_LEN).is_err());
        let mut spec = spec_for(1, &t, 4);
        spec.class = 10;
        assert!(spec.validate(&t, WINDOW_LEN).is_err());
    }

    #[test]
    fn augmentation_identity_and_inverse() {
        let (t, op) = setup();
        let spec = spec_for(5, &t, 5);
        let rec = synth_event(&t, &op, &spec, &GeneratorConfig::default(), &mut rng::stream(5, "x")).unwrap();
        let mut r = rng::stream(9, "aug");
        assert_eq!(shift_and_noise(&rec, 0, 0.0, &mut r).unwrap(), rec);
        let there = shift_and_noise(&rec, 7, 0.0, &mut r).unwrap();
        assert_ne!(there, rec);
        assert_eq!(shift_and_noise(&there, -7, 0.0, &mut r).unwrap(), rec);
        assert!(augment(&rec, 125, 0.0, &mut r).is_err());
    }

    #[test]
    fn augmentation_noise_level() {
        let (t, op) = setup();
        let spec = spec_for(2, &t, 6);
        let rec = synth_event(&t, &op, &spec, &GeneratorConfig::default(), &mut rng::stream(6, "x")).unwrap();
        let noisy = shift_and_noise(&rec, 0, 0.01, &mut rng::stream(6, "noise")).unwrap();
        let diff = noisy.blocks[0].orders[0].sub(&rec.blocks[0].orders[0]).unwrap();
        let n = diff.len() as f64;
        let mean = diff.sum() / n;
        let sd = (diff.data().iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 0.01).abs() < 0.002, "{sd}");
    }

    #[test]
    fn shift_is_common_to_all_buses() {
        let (t, op) = setup();
        let spec = spec_for(9, &t, 7);
        let cfg = GeneratorConfig {
            noise_scale: 0.0,
            ..Default::default()
        };
        let rec = synth_event(&t, &op, &spec, &cfg, &mut rng::stream(7, "x")).unwrap();
        let shifted = augment(&rec, 10, 0.0, &mut rng::stream(7, "aug")).unwrap();
        let onset_of = |w: &Tensor| (0..w.rows()).find(|&r| w.get2(r, 0) != w.get2(0, 0)).unwrap();
        let offsets: Vec<i64> = rec
            .blocks
            .iter()
            .zip(&shifted.blocks)
            .map(|(a, b)| onset_of(&b.orders[0]) as i64 - onset_of(&a.orders[0]) as i64)
            .collect();
        assert!(offsets.windows(2).all(|w| w[0] == w[1]), "{offsets:?}");
    }
}
