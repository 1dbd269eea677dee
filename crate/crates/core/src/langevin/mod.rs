//! Group-level Langevin force model and the per-particle integrator.
//!
//! Every particle of a group obeys, per axis,
//!
//! ```text
//! vx' = vx − γx·vx·Δt + F·Δt                       + (ξD)x·ξ·Δt
//! vy' = vy − γy·vy·Δt − [k·(y − ȳ) − Uy]·Δt        + (ξD)y·ξ'·Δt
//! x'  = x + vx'·Δt
//! y'  = y + vy'·Δt
//! ```
//!
//! with unit mass. `F` is the group drift, `Uy` the group's baseline
//! transverse force and `k·(y − ȳ)` a harmonic pull toward the group's
//! current centroid row. `ξ`, `ξ'` are fresh standard normal draws; the
//! noise is scaled by `Δt` (or `√Δt` with [`NoiseScaling::SqrtDt`]).

mod noise;

pub use noise::{NoiseSource, NoiseStream};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::segmentation::{Group, ParticleState, SegmentationMap};

/// Particle mass; fixed.
pub const MASS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseScaling {
    /// Noise term multiplied by `Δt`.
    #[default]
    Dt,
    /// Noise term multiplied by `√Δt` (Itô / Euler–Maruyama scaling).
    SqrtDt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LangevinParams {
    /// Resistive coefficients, 1/frame.
    pub gamma_x: f64,
    pub gamma_y: f64,
    /// Noise amplitudes, px/frame².
    pub xi_d_x: f64,
    pub xi_d_y: f64,
    /// Time step, frames.
    pub dt: f64,
    /// Harmonic confinement toward the group centroid row, 1/frame².
    pub confinement_stiffness: f64,
    pub noise_scaling: NoiseScaling,
}

impl Default for LangevinParams {
    fn default() -> Self {
        Self {
            gamma_x: 0.8,
            gamma_y: 0.8,
            xi_d_x: 0.1,
            xi_d_y: 0.5,
            dt: 1.0,
            confinement_stiffness: 0.05,
            noise_scaling: NoiseScaling::Dt,
        }
    }
}

impl LangevinParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::input("dt must be positive"));
        }
        for (name, g) in [("gamma_x", self.gamma_x), ("gamma_y", self.gamma_y)] {
            if !(g >= 0.0 && g < 2.0 / self.dt) {
                return Err(Error::input(format!(
                    "{name} = {g} outside the stable range [0, 2/dt)"
                )));
            }
        }
        for (name, v) in [
            ("xi_d_x", self.xi_d_x),
            ("xi_d_y", self.xi_d_y),
            ("confinement_stiffness", self.confinement_stiffness),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::input(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    fn noise_factor(&self) -> f64 {
        match self.noise_scaling {
            NoiseScaling::Dt => self.dt,
            NoiseScaling::SqrtDt => self.dt.sqrt(),
        }
    }
}

/// Forces shared by all members of a group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupForces {
    /// Constant drift along x, px/frame².
    pub drift_x: f64,
    /// Baseline transverse force along y, px/frame².
    pub confine_y: f64,
    /// Row the confinement pulls toward.
    pub anchor_y: f64,
}

/// Drift and confinement for one group.
///
/// With a previous flow field the forces are the summed per-member
/// accelerations between the two fields. Without one (a window's first
/// map) they are set so that the group's mean velocity is a fixed point of
/// the noiseless update: `F = γx·v̄x`, `Uy = γy·v̄y`.
pub fn estimate_group_forces(
    g: &Group,
    prev_flow: Option<&FlowField>,
    params: &LangevinParams,
) -> Result<GroupForces> {
    if g.is_empty() {
        return Err(Error::input(format!("group {} has no members", g.id)));
    }
    let anchor_y = g.centroid.1;
    let Some(prev) = prev_flow else {
        return Ok(GroupForces {
            drift_x: params.gamma_x * g.mean_velocity.0,
            confine_y: params.gamma_y * g.mean_velocity.1,
            anchor_y,
        });
    };
    let (mut ax, mut ay) = (0.0, 0.0);
    for m in &g.members {
        let (x, y) = (m.x.round(), m.y.round());
        if x < 0.0 || y < 0.0 || x as usize >= prev.width() || y as usize >= prev.height() {
            return Err(Error::input(format!(
                "member at ({}, {}) lies outside the {}x{} previous flow field",
                m.x,
                m.y,
                prev.width(),
                prev.height()
            )));
        }
        // members without a previous estimate contribute no acceleration
        if let Some((pu, pv)) = prev.at(x as usize, y as usize) {
            ax += (m.vx - pu as f64) / params.dt;
            ay += (m.vy - pv as f64) / params.dt;
        }
    }
    Ok(GroupForces {
        drift_x: MASS * ax,
        confine_y: MASS * ay,
        anchor_y,
    })
}

/// One integrator step with explicit noise draws `xi = [ξ, ξ']`.
pub fn step_particle(
    s: &ParticleState,
    f: &GroupForces,
    p: &LangevinParams,
    xi: [f64; 2],
) -> ParticleState {
    let dt = p.dt;
    let nf = p.noise_factor();
    let vx = s.vx - p.gamma_x * s.vx * dt + f.drift_x * dt + p.xi_d_x * xi[0] * nf;
    let restoring = p.confinement_stiffness * (s.y - f.anchor_y) - f.confine_y;
    let vy = s.vy - p.gamma_y * s.vy * dt - restoring * dt + p.xi_d_y * xi[1] * nf;
    ParticleState {
        x: s.x + vx * dt,
        y: s.y + vy * dt,
        vx,
        vy,
        ..*s
    }
}

/// Steps a segmentation map forward, one map per call.
///
/// Particle `i` (in group-then-member order) draws from noise stream `i`;
/// the anchor of each group follows its centroid row.
pub struct Propagator {
    map: SegmentationMap,
    forces: Vec<GroupForces>,
    params: LangevinParams,
    streams: Vec<NoiseStream>,
}

impl Propagator {
    pub fn new(
        map: SegmentationMap,
        forces: Vec<GroupForces>,
        params: LangevinParams,
        noise: &NoiseSource,
    ) -> Result<Self> {
        params.validate()?;
        if forces.len() != map.groups.len() {
            return Err(Error::input(format!(
                "{} force sets for {} groups",
                forces.len(),
                map.groups.len()
            )));
        }
        let streams = (0..map.particle_count() as u64).map(|i| noise.stream(i)).collect();
        Ok(Self {
            map,
            forces,
            params,
            streams,
        })
    }

    pub fn current(&self) -> &SegmentationMap {
        &self.map
    }

    pub fn step(&mut self) -> SegmentationMap {
        let xmax = self.map.width.saturating_sub(1) as f64;
        let ymax = self.map.height.saturating_sub(1) as f64;
        let mut streams = self.streams.iter_mut();
        for (g, f) in self.map.groups.iter_mut().zip(&mut self.forces) {
            f.anchor_y = g.centroid.1;
            for m in &mut g.members {
                let xi = streams.next().expect("one stream per particle").pair();
                let mut next = step_particle(m, f, &self.params, xi);
                if !(0.0..=xmax).contains(&next.x) || !(0.0..=ymax).contains(&next.y) {
                    next.x = next.x.clamp(0.0, xmax);
                    next.y = next.y.clamp(0.0, ymax);
                    next.clamped = true;
                }
                *m = next;
            }
            g.refresh_stats();
        }
        self.map.frame_index += 1;
        self.map.clone()
    }
}

/// Propagates `m` for `steps` frames and returns the intermediate maps.
pub fn propagate_map(
    m: &SegmentationMap,
    forces: &[GroupForces],
    p: &LangevinParams,
    noise: &NoiseSource,
    steps: usize,
) -> Result<Vec<SegmentationMap>> {
    let mut prop = Propagator::new(m.clone(), forces.to_vec(), p.clone(), noise)?;
    Ok((0..steps).map(|_| prop.step()).collect())
}

/// Which force terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForceToggles {
    /// Velocity-proportional resistance (γ).
    pub external: bool,
    /// Drift, baseline transverse force and harmonic confinement.
    pub drift_confine: bool,
    /// Random fluctuation.
    pub disturbance: bool,
}

impl Default for ForceToggles {
    fn default() -> Self {
        Self {
            external: true,
            drift_confine: true,
            disturbance: true,
        }
    }
}

/// Zeroes the coefficients of disabled force terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForceAblation {
    toggles: ForceToggles,
}

pub fn force_ablation_config(toggles: ForceToggles) -> Result<ForceAblation> {
    if !(toggles.external || toggles.drift_confine || toggles.disturbance) {
        return Err(Error::input("at least one force term must stay enabled"));
    }
    Ok(ForceAblation { toggles })
}

impl ForceAblation {
    pub fn toggles(&self) -> ForceToggles {
        self.toggles
    }

    pub fn params(&self, p: &LangevinParams) -> LangevinParams {
        let mut out = p.clone();
        if !self.toggles.external {
            out.gamma_x = 0.0;
            out.gamma_y = 0.0;
        }
        if !self.toggles.drift_confine {
            out.confinement_stiffness = 0.0;
        }
        if !self.toggles.disturbance {
            out.xi_d_x = 0.0;
            out.xi_d_y = 0.0;
        }
        out
    }

    pub fn forces(&self, f: &GroupForces) -> GroupForces {
        if self.toggles.drift_confine {
            *f
        } else {
            GroupForces {
                drift_x: 0.0,
                confine_y: 0.0,
                anchor_y: f.anchor_y,
            }
        }
    }
}
