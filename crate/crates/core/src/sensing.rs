//! Ray sensors with occlusion over circular bodies, and observation assembly.

use crate::dynamics::Vec2;

/// What one ray saw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayReading {
    pub d: f64,
    /// Depot of the struck body, 0 on a miss.
    pub e_hit: f64,
    pub hit: Option<usize>,
}

impl RayReading {
    pub fn miss(d_max: f64) -> Self {
        Self {
            d: d_max,
            e_hit: 0.0,
            hit: None,
        }
    }
}

/// Frozen view of one population slot, as seen by sensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    pub q: Vec2,
    pub radius: f64,
    pub depot: f64,
    pub active: bool,
}

/// Heading offsets of `r` rays spread evenly over `fov`, endpoints included.
pub fn ray_offsets(fov: f64, r: usize) -> Vec<f64> {
    match r {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let step = fov / (r - 1) as f64;
            (0..r).map(|k| -0.5 * fov + k as f64 * step).collect()
        }
    }
}

/// Smallest non-negative `t` with `|origin + t*dir - center| = radius`.
/// `dir` must be a unit vector. Origins inside the circle report 0.
#[inline]
pub fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let mx = origin[0] - center[0];
    let my = origin[1] - center[1];
    let c = mx * mx + my * my - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let b = mx * dir[0] + my * dir[1];
    if b > 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    Some(-b - disc.sqrt())
}

#[inline]
fn nearest_hit(
    origin: Vec2,
    dir: Vec2,
    d_max: f64,
    bodies: &[Body],
    candidates: impl Iterator<Item = usize>,
) -> RayReading {
    let mut best = RayReading::miss(d_max);
    for j in candidates {
        let b = &bodies[j];
        if let Some(t) = ray_circle(origin, dir, b.q, b.radius) {
            if t <= d_max && (best.hit.is_none() || t < best.d) {
                best = RayReading {
                    d: t,
                    e_hit: b.depot,
                    hit: Some(j),
                };
            }
        }
    }
    best
}

/// Reference caster: every ray tests every other active body.
pub fn cast_rays(
    self_index: usize,
    bodies: &[Body],
    heading: f64,
    fov: f64,
    r: usize,
    d_max: f64,
) -> Vec<RayReading> {
    let origin = bodies[self_index].q;
    ray_offsets(fov, r)
        .into_iter()
        .map(|off| {
            let (sin, cos) = (heading + off).sin_cos();
            let others = (0..bodies.len()).filter(|&j| j != self_index && bodies[j].active);
            nearest_hit(origin, [cos, sin], d_max, bodies, others)
        })
        .collect()
}

/// Caster that prunes bodies out of reach once per sensor before tracing
/// its rays. Readings are bit-identical to [`cast_rays`].
#[derive(Debug, Clone)]
pub struct RayCaster {
    offsets: Vec<f64>,
    d_max: f64,
}

impl RayCaster {
    pub fn new(fov: f64, r: usize, d_max: f64) -> Self {
        Self {
            offsets: ray_offsets(fov, r),
            d_max,
        }
    }

    pub fn rays(&self) -> usize {
        self.offsets.len()
    }

    /// Writes one reading per ray into `out`, reusing `scratch` for candidates.
    pub fn cast_into(
        &self,
        self_index: usize,
        bodies: &[Body],
        heading: f64,
        scratch: &mut Vec<usize>,
        out: &mut [RayReading],
    ) {
        debug_assert_eq!(out.len(), self.offsets.len());
        let origin = bodies[self_index].q;
        scratch.clear();
        for (j, b) in bodies.iter().enumerate() {
            if j == self_index || !b.active {
                continue;
            }
            let dx = b.q[0] - origin[0];
            let dy = b.q[1] - origin[1];
            let reach = self.d_max + b.radius;
            if dx * dx + dy * dy <= reach * reach {
                scratch.push(j);
            }
        }
        for (slot, off) in out.iter_mut().zip(&self.offsets) {
            let (sin, cos) = (heading + off).sin_cos();
            *slot = nearest_hit(origin, [cos, sin], self.d_max, bodies, scratch.iter().copied());
        }
    }

    pub fn cast(&self, self_index: usize, bodies: &[Body], heading: f64) -> Vec<RayReading> {
        let mut out = vec![RayReading::miss(self.d_max); self.offsets.len()];
        self.cast_into(self_index, bodies, heading, &mut Vec::new(), &mut out);
        out
    }
}

/// Proprioceptive and resource part of an observation, in wire order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodySignals {
    pub v: Vec2,
    pub omega: f64,
    pub m: f64,
    pub m_n: f64,
    pub e: f64,
    pub e_g: f64,
    pub e_e: f64,
    pub e_c: f64,
    /// Number of bodies overlapping this one.
    pub w: u32,
}

impl BodySignals {
    pub const LEN: usize = 10;

    pub fn to_array(&self) -> [f64; Self::LEN] {
        [
            self.v[0],
            self.v[1],
            self.omega,
            self.m,
            self.m_n,
            self.e,
            self.e_g,
            self.e_e,
            self.e_c,
            f64::from(self.w),
        ]
    }
}

/// Controller input: `[d_1, e_1, ..., d_r, e_r]` followed by the body block.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Fills `out` (length `2r + 10`) with an observation.
pub fn write_observation(readings: &[RayReading], body: &BodySignals, out: &mut [f64]) {
    assert_eq!(
        out.len(),
        2 * readings.len() + BodySignals::LEN,
        "observation buffer does not match the ray count"
    );
    for (pair, reading) in out.chunks_exact_mut(2).zip(readings) {
        pair[0] = reading.d;
        pair[1] = reading.e_hit;
    }
    out[2 * readings.len()..].copy_from_slice(&body.to_array());
}

pub fn assemble_observation(readings: &[RayReading], body: &BodySignals) -> Observation {
    let mut v = vec![0.0; 2 * readings.len() + BodySignals::LEN];
    write_observation(readings, body, &mut v);
    Observation(v)
}

/// Per-body count of other active bodies whose centres are closer than `d_b`.
pub fn overlap_counts(positions: &[Vec2], active: &[bool], d_b: f64) -> Vec<u32> {
    let mut w = vec![0u32; positions.len()];
    let lim = d_b * d_b;
    for i in 0..positions.len() {
        if !active[i] {
            continue;
        }
        for j in (i + 1)..positions.len() {
            if !active[j] {
                continue;
            }
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            if dx * dx + dy * dy < lim {
                w[i] += 1;
                w[j] += 1;
            }
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn body(x: f64, y: f64, depot: f64) -> Body {
        Body {
            q: [x, y],
            radius: 10.0,
            depot,
            active: true,
        }
    }

    #[test]
    fn central_ray_hits_front_of_target() {
        let bodies = [body(0.0, 0.0, 1.0), body(100.0, 0.0, 42.0)];
        let r = cast_rays(0, &bodies, 0.0, 1.5 * PI, 11, 300.0);
        assert_eq!(r.len(), 11);
        assert!((r[5].d - 90.0).abs() < 1e-12);
        assert_eq!((r[5].e_hit, r[5].hit), (42.0, Some(1)));
    }

    #[test]
    fn empty_arena_reads_max_range() {
        let bodies = [body(0.0, 0.0, 7.0), Body { active: false, ..body(50.0, 0.0, 9.0) }];
        for reading in cast_rays(0, &bodies, 0.3, 1.5 * PI, 11, 300.0) {
            assert_eq!((reading.d, reading.e_hit), (300.0, 0.0));
        }
    }

    #[test]
    fn nearer_body_occludes_farther() {
        let bodies = [body(0.0, 0.0, 0.0), body(100.0, 0.0, 2.0), body(50.0, 0.0, 1.0)];
        let r = cast_rays(0, &bodies, 0.0, 1.5 * PI, 11, 300.0);
        assert_eq!(r[5].hit, Some(2));
        assert!((r[5].d - 40.0).abs() < 1e-12);
    }

    #[test]
    fn origin_inside_other_body_reads_zero() {
        let bodies = [body(0.0, 0.0, 0.0), body(5.0, 0.0, 3.0)];
        let r = cast_rays(0, &bodies, PI, 1.5 * PI, 3, 300.0);
        assert!(r.iter().all(|x| x.d == 0.0 && x.hit == Some(1)));
    }

    #[test]
    fn rear_blind_spot() {
        let bodies = [body(0.0, 0.0, 0.0), body(-100.0, 0.0, 3.0)];
        let r = cast_rays(0, &bodies, 0.0, 1.5 * PI, 11, 300.0);
        assert!(r.iter().all(|x| x.hit.is_none()));
    }

    #[test]
    fn fan_geometry() {
        let off = ray_offsets(1.5 * PI, 11);
        assert!((off[0] + 0.75 * PI).abs() < 1e-15);
        assert!((off[10] - 0.75 * PI).abs() < 1e-12);
        assert_eq!(off[5], 0.0);
        assert_eq!(ray_offsets(1.0, 1), vec![0.0]);
    }

    #[test]
    fn observation_layout() {
        let readings = vec![RayReading::miss(300.0); 11];
        let obs = assemble_observation(&readings, &BodySignals::default());
        assert_eq!(obs.0.len(), 32);
        for k in 0..11 {
            assert_eq!((obs.0[2 * k], obs.0[2 * k + 1]), (300.0, 0.0));
        }
        assert!(obs.0[22..].iter().all(|&x| x == 0.0));
        let body = BodySignals {
            w: 2,
            ..Default::default()
        };
        assert_eq!(*assemble_observation(&readings, &body).0.last().unwrap(), 2.0);
    }

    #[test]
    fn overlap_counting() {
        let pos = [[0.0, 0.0], [10.0, 0.0], [-10.0, 0.0], [100.0, 0.0], [0.0, 5.0]];
        let w = overlap_counts(&pos, &[true, true, true, true, false], 20.0);
        assert_eq!(w, vec![2, 1, 1, 0, 0]);
    }
}
