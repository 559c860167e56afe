//! Joint confidence maps and part orientation fields: rendering and decoding.
//!
//! Pixel `(row, col)` is centred at image coordinate `(x, y) = (col, row)`.
//! Tensors are row-major `channels x height x width`. The orientation field of
//! part `p` occupies channels `3p .. 3p + 3` (x, y, z components).

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::container::Tensor;
use crate::error::{Error, Result};

/// Decoded orientations whose averaged field norm falls below this are absent.
pub const MIN_ORIENTATION_NORM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub position: Vector2<f64>,
    pub confidence: f64,
    pub present: bool,
}

impl Keypoint {
    pub fn absent() -> Self {
        Self {
            position: Vector2::zeros(),
            confidence: 0.0,
            present: false,
        }
    }

    pub fn at(position: Vector2<f64>) -> Self {
        Self {
            position,
            confidence: 1.0,
            present: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub direction: Vector3<f64>,
    pub present: bool,
}

impl Orientation {
    pub fn absent() -> Self {
        Self {
            direction: Vector3::zeros(),
            present: false,
        }
    }

    pub fn of(direction: Vector3<f64>) -> Self {
        Self {
            direction,
            present: true,
        }
    }
}

/// Measurements from one keypoint network, in full-image pixel coordinates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    pub keypoints: Vec<Keypoint>,
    pub orientations: Vec<Orientation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toes: Option<Vec<Keypoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face: Option<Vec<Keypoint>>,
}

impl Observation {
    pub fn empty(joints: usize, parts: usize) -> Self {
        Self {
            keypoints: vec![Keypoint::absent(); joints],
            orientations: vec![Orientation::absent(); parts],
            toes: None,
            face: None,
        }
    }

    pub fn present_keypoints(&self) -> usize {
        self.keypoints.iter().filter(|k| k.present).count()
    }

    pub fn present_orientations(&self) -> usize {
        self.orientations.iter().filter(|o| o.present).count()
    }

    pub fn is_empty(&self) -> bool {
        let extra =
            |v: &Option<Vec<Keypoint>>| v.as_ref().is_some_and(|v| v.iter().any(|k| k.present));
        self.present_keypoints() == 0
            && self.present_orientations() == 0
            && !extra(&self.toes)
            && !extra(&self.face)
    }
}

/// Everything observed in one frame: the body network plus optional hand crops.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameObservation {
    pub body: Observation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_hand: Option<Observation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_hand: Option<Observation>,
}

impl FrameObservation {
    pub fn is_empty(&self) -> bool {
        self.body.is_empty()
            && self.left_hand.as_ref().is_none_or(Observation::is_empty)
            && self.right_hand.as_ref().is_none_or(Observation::is_empty)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldSettings {
    /// Crop side length (px).
    pub size: usize,
    /// Gaussian spread of the confidence peaks (px).
    pub sigma: f64,
    /// Half width of a part rectangle (px).
    pub half_width: f64,
    /// Minimum peak value for a keypoint to count as detected.
    pub threshold: f64,
}

impl Default for FieldSettings {
    fn default() -> Self {
        Self {
            size: 368,
            sigma: 7.0,
            half_width: 10.0,
            threshold: 0.1,
        }
    }
}

/// Network-style output: confidence maps `S` and orientation fields `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStack {
    pub height: usize,
    pub width: usize,
    pub joints: usize,
    pub parts: usize,
    pub confidence: Vec<f32>,
    pub pof: Vec<f32>,
}

impl FieldStack {
    pub fn from_parts(
        height: usize,
        width: usize,
        joints: usize,
        parts: usize,
        confidence: Vec<f32>,
        pof: Vec<f32>,
    ) -> Result<Self> {
        let plane = height * width;
        if confidence.len() != joints * plane || pof.len() != 3 * parts * plane {
            return Err(Error::Dimension(format!(
                "field buffers ({}, {}) do not match {joints} joints / {parts} parts at {height}x{width}",
                confidence.len(),
                pof.len()
            )));
        }
        Ok(Self {
            height,
            width,
            joints,
            parts,
            confidence,
            pof,
        })
    }

    /// Render both field kinds for one network.
    ///
    /// Returns the stack and the indices of parts skipped because their 2D
    /// endpoints coincide.
    pub fn render(
        joints2d: &[Option<Vector2<f64>>],
        orientations: &[Option<Vector3<f64>>],
        parts: &[(usize, usize)],
        settings: &FieldSettings,
    ) -> (Self, Vec<usize>) {
        let (h, w) = (settings.size, settings.size);
        let confidence = render_confidence(joints2d, h, w, settings.sigma);
        let (pof, degenerate) =
            render_pof(joints2d, orientations, parts, h, w, settings.half_width);
        (
            Self {
                height: h,
                width: w,
                joints: joints2d.len(),
                parts: parts.len(),
                confidence,
                pof,
            },
            degenerate,
        )
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn confidence_channel(&self, joint: usize) -> &[f32] {
        let n = self.plane();
        &self.confidence[joint * n..(joint + 1) * n]
    }

    pub fn pof_at(&self, part: usize, row: usize, col: usize) -> Vector3<f64> {
        let n = self.plane();
        let i = row * self.width + col;
        Vector3::new(
            self.pof[(3 * part) * n + i] as f64,
            self.pof[(3 * part + 1) * n + i] as f64,
            self.pof[(3 * part + 2) * n + i] as f64,
        )
    }

    /// Horizontal flip of the image: columns reversed and the x component of
    /// every orientation negated.
    pub fn mirrored(&self) -> Self {
        let (h, w) = (self.height, self.width);
        let flip = |src: &[f32], channels: usize, negate: &dyn Fn(usize) -> bool| {
            let mut out = vec![0.0f32; src.len()];
            for c in 0..channels {
                let sign = if negate(c) { -1.0 } else { 1.0 };
                for r in 0..h {
                    let base = (c * h + r) * w;
                    for x in 0..w {
                        out[base + x] = sign * src[base + (w - 1 - x)];
                    }
                }
            }
            out
        };
        Self {
            height: h,
            width: w,
            joints: self.joints,
            parts: self.parts,
            confidence: flip(&self.confidence, self.joints, &|_| false),
            pof: flip(&self.pof, 3 * self.parts, &|c| c % 3 == 0),
        }
    }

    /// Decode keypoints and orientations; coordinates are in this stack's pixel frame.
    pub fn decode(&self, parts: &[(usize, usize)], threshold: f64) -> Result<Observation> {
        if parts.len() != self.parts {
            return Err(Error::Dimension(format!(
                "{} parts given for a stack with {} part fields",
                parts.len(),
                self.parts
            )));
        }
        let keypoints = decode_keypoints(
            &self.confidence,
            self.joints,
            self.height,
            self.width,
            threshold,
        );
        let orientations =
            decode_orientations(&self.pof, parts, self.height, self.width, &keypoints);
        Ok(Observation {
            keypoints,
            orientations,
            toes: None,
            face: None,
        })
    }

    /// Decode a stack that was produced on a horizontally flipped crop (the
    /// right-hand path of a left-hand network): flip back, then decode.
    pub fn decode_flipped(&self, parts: &[(usize, usize)], threshold: f64) -> Result<Observation> {
        self.mirrored().decode(parts, threshold)
    }

    pub fn to_tensors(&self) -> Result<[Tensor; 2]> {
        Ok([
            Tensor::f32(
                vec![self.joints, self.height, self.width],
                self.confidence.clone(),
            )?,
            Tensor::f32(
                vec![3 * self.parts, self.height, self.width],
                self.pof.clone(),
            )?,
        ])
    }

    pub fn from_tensors(confidence: Tensor, pof: Tensor) -> Result<Self> {
        if confidence.dims.len() != 3 || pof.dims.len() != 3 {
            return Err(Error::Container(
                "field tensors must be 3-dimensional".into(),
            ));
        }
        let (j, h, w) = (confidence.dims[0], confidence.dims[1], confidence.dims[2]);
        if pof.dims[1] != h || pof.dims[2] != w || !pof.dims[0].is_multiple_of(3) {
            return Err(Error::Container(format!(
                "orientation field dims {:?} do not match confidence dims {:?}",
                pof.dims, confidence.dims
            )));
        }
        let p = pof.dims[0] / 3;
        Self::from_parts(h, w, j, p, confidence.into_f32(), pof.into_f32())
            .map_err(|e| Error::Container(e.to_string()))
    }
}

/// Gaussian confidence maps, one channel per joint; absent joints give zero channels.
pub fn render_confidence(
    joints2d: &[Option<Vector2<f64>>],
    height: usize,
    width: usize,
    sigma: f64,
) -> Vec<f32> {
    let plane = height * width;
    let mut out = vec![0.0f32; joints2d.len() * plane];
    let inv = 1.0 / (2.0 * sigma * sigma);
    // exp(-d^2 / 2 sigma^2) < 1e-14 beyond 8 sigma
    let reach = 8.0 * sigma;
    for (c, kp) in joints2d.iter().enumerate() {
        let Some(p) = kp else { continue };
        let Some((r0, r1)) = span(p.y - reach, p.y + reach, height) else {
            continue;
        };
        let Some((c0, c1)) = span(p.x - reach, p.x + reach, width) else {
            continue;
        };
        let chan = &mut out[c * plane..(c + 1) * plane];
        for r in r0..=r1 {
            let dy = r as f64 - p.y;
            for x in c0..=c1 {
                let dx = x as f64 - p.x;
                chan[r * width + x] = (-(dx * dx + dy * dy) * inv).exp() as f32;
            }
        }
    }
    out
}

/// Inclusive pixel index range covering `[lo, hi]`, clipped to `0..n`.
fn span(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    if n == 0 || hi < 0.0 || lo > (n - 1) as f64 || !lo.is_finite() || !hi.is_finite() {
        return None;
    }
    Some((
        lo.max(0.0).ceil() as usize,
        (hi.floor() as usize).min(n - 1),
    ))
}

/// Accumulates orientation splats per channel group and resolves overlaps by
/// averaging the contributions and renormalizing.
#[derive(Debug, Clone)]
pub struct PofCanvas {
    height: usize,
    width: usize,
    groups: usize,
    sum: Vec<f64>,
    count: Vec<u32>,
}

impl PofCanvas {
    pub fn new(groups: usize, height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            groups,
            sum: vec![0.0; 3 * groups * height * width],
            count: vec![0; groups * height * width],
        }
    }

    /// Splat `direction` over the rectangle of half width `half_width` along
    /// the segment `a -> b` into channel group `group`. Returns `false` when
    /// the segment is degenerate (nothing is drawn).
    pub fn splat(
        &mut self,
        group: usize,
        a: &Vector2<f64>,
        b: &Vector2<f64>,
        direction: &Vector3<f64>,
        half_width: f64,
    ) -> bool {
        let seg = b - a;
        let len = seg.norm();
        if !(len > 1e-9) {
            return false;
        }
        let u = seg / len;
        let perp = Vector2::new(-u.y, u.x);
        let corners = [
            a + perp * half_width,
            a - perp * half_width,
            b + perp * half_width,
            b - perp * half_width,
        ];
        let (min, max) = corners.iter().fold(
            (
                Vector2::repeat(f64::INFINITY),
                Vector2::repeat(f64::NEG_INFINITY),
            ),
            |(lo, hi), c| (lo.inf(c), hi.sup(c)),
        );
        let Some((r0, r1)) = span(min.y, max.y, self.height) else {
            return true;
        };
        let Some((c0, c1)) = span(min.x, max.x, self.width) else {
            return true;
        };
        let plane = self.height * self.width;
        for r in r0..=r1 {
            for x in c0..=c1 {
                let d = Vector2::new(x as f64, r as f64) - a;
                let along = u.dot(&d);
                if along < 0.0 || along > len || perp.dot(&d).abs() > half_width {
                    continue;
                }
                let i = r * self.width + x;
                self.count[group * plane + i] += 1;
                for k in 0..3 {
                    self.sum[(3 * group + k) * plane + i] += direction[k];
                }
            }
        }
        true
    }

    pub fn finish(self) -> Vec<f32> {
        let plane = self.height * self.width;
        let mut out = vec![0.0f32; 3 * self.groups * plane];
        for g in 0..self.groups {
            for i in 0..plane {
                if self.count[g * plane + i] == 0 {
                    continue;
                }
                let v = Vector3::new(
                    self.sum[(3 * g) * plane + i],
                    self.sum[(3 * g + 1) * plane + i],
                    self.sum[(3 * g + 2) * plane + i],
                );
                let n = v.norm();
                if n > 0.0 {
                    for k in 0..3 {
                        out[(3 * g + k) * plane + i] = (v[k] / n) as f32;
                    }
                }
            }
        }
        out
    }
}

/// Orientation fields, each part drawn into its own three channels. Parts with
/// a missing endpoint or orientation stay zero; the returned list names parts
/// whose 2D endpoints coincide.
pub fn render_pof(
    joints2d: &[Option<Vector2<f64>>],
    orientations: &[Option<Vector3<f64>>],
    parts: &[(usize, usize)],
    height: usize,
    width: usize,
    half_width: f64,
) -> (Vec<f32>, Vec<usize>) {
    let mut canvas = PofCanvas::new(parts.len(), height, width);
    let mut degenerate = Vec::new();
    for (p, &(m, n)) in parts.iter().enumerate() {
        let (Some(a), Some(b), Some(dir)) = (
            joints2d[m],
            joints2d[n],
            orientations.get(p).copied().flatten(),
        ) else {
            continue;
        };
        if !canvas.splat(p, &a, &b, &dir, half_width) {
            degenerate.push(p);
        }
    }
    (canvas.finish(), degenerate)
}

/// Per-channel argmax; ties go to the smallest row-major index.
pub fn decode_keypoints(
    confidence: &[f32],
    joints: usize,
    height: usize,
    width: usize,
    threshold: f64,
) -> Vec<Keypoint> {
    let plane = height * width;
    (0..joints)
        .map(|c| {
            let chan = &confidence[c * plane..(c + 1) * plane];
            let mut best = 0usize;
            let mut best_val = f32::NEG_INFINITY;
            for (i, &v) in chan.iter().enumerate() {
                if v > best_val {
                    best_val = v;
                    best = i;
                }
            }
            let conf = best_val as f64;
            if plane == 0 || !(conf >= threshold) {
                return Keypoint::absent();
            }
            Keypoint {
                position: Vector2::new((best % width) as f64, (best / width) as f64),
                confidence: conf,
                present: true,
            }
        })
        .collect()
}

fn bilinear(
    pof: &[f32],
    part: usize,
    height: usize,
    width: usize,
    p: &Vector2<f64>,
) -> Vector3<f64> {
    let plane = height * width;
    let (x0, y0) = (p.x.floor(), p.y.floor());
    let (fx, fy) = (p.x - x0, p.y - y0);
    let mut acc = Vector3::zeros();
    for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
        for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
            let wgt = wx * wy;
            if wgt == 0.0 {
                continue;
            }
            let (x, y) = (x0 + dx, y0 + dy);
            if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
                continue;
            }
            let i = y as usize * width + x as usize;
            for k in 0..3 {
                acc[k] += wgt * pof[(3 * part + k) * plane + i] as f64;
            }
        }
    }
    acc
}

/// Average each part's field along the segment between its decoded endpoints
/// (`ceil(length) + 1` bilinear samples) and renormalize.
pub fn decode_orientations(
    pof: &[f32],
    parts: &[(usize, usize)],
    height: usize,
    width: usize,
    keypoints: &[Keypoint],
) -> Vec<Orientation> {
    parts
        .iter()
        .enumerate()
        .map(|(p, &(m, n))| {
            let (a, b) = (&keypoints[m], &keypoints[n]);
            if !a.present || !b.present {
                return Orientation::absent();
            }
            let seg = b.position - a.position;
            let samples = seg.norm().ceil() as usize + 1;
            let mut sum = Vector3::zeros();
            for s in 0..samples {
                let f = if samples == 1 {
                    0.0
                } else {
                    s as f64 / (samples - 1) as f64
                };
                sum += bilinear(pof, p, height, width, &(a.position + seg * f));
            }
            let mean = sum / samples as f64;
            let norm = mean.norm();
            if norm >= MIN_ORIENTATION_NORM {
                Orientation::of(mean / norm)
            } else {
                Orientation::absent()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn confidence_examples() {
        let s = 7.0;
        let kps = [Some(Vector2::new(100.0, 100.0)), None];
        let conf = render_confidence(&kps, 368, 368, s);
        let at = |c: usize, x: usize, y: usize| conf[c * 368 * 368 + y * 368 + x] as f64;
        assert!((at(0, 100, 100) - 1.0).abs() < 1e-7);
        assert!((at(0, 107, 100) - (-0.5f64).exp()).abs() < 1e-7);
        assert!((at(0, 107, 100) - 0.60653).abs() < 1e-5);
        assert!(conf[368 * 368..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pof_rectangle_examples() {
        let j = [
            Some(Vector2::new(100.0, 100.0)),
            Some(Vector2::new(150.0, 100.0)),
        ];
        let o = [Some(Vector3::x())];
        let (pof, degenerate) = render_pof(&j, &o, &[(0, 1)], 368, 368, 10.0);
        assert!(degenerate.is_empty());
        let stack = FieldStack::from_parts(368, 368, 2, 1, vec![0.0; 2 * 368 * 368], pof).unwrap();
        assert_eq!(stack.pof_at(0, 100, 125), Vector3::x());
        assert_eq!(stack.pof_at(0, 120, 125), Vector3::zeros());
    }

    #[test]
    fn overlapping_splats_average_then_renormalize() {
        let mut canvas = PofCanvas::new(1, 64, 64);
        canvas.splat(
            0,
            &Vector2::new(10.0, 30.0),
            &Vector2::new(50.0, 30.0),
            &Vector3::x(),
            5.0,
        );
        canvas.splat(
            0,
            &Vector2::new(30.0, 10.0),
            &Vector2::new(30.0, 50.0),
            &Vector3::y(),
            5.0,
        );
        let pof = canvas.finish();
        let at = |k: usize, r: usize, c: usize| pof[k * 64 * 64 + r * 64 + c] as f64;
        let v = Vector3::new(at(0, 30, 30), at(1, 30, 30), at(2, 30, 30));
        assert!((v - Vector3::new(H, H, 0.0)).norm() < 1e-6);
        // outside the overlap a single contribution survives unchanged
        assert_eq!(at(0, 30, 12), 1.0);
    }

    #[test]
    fn coincident_endpoints_are_flagged() {
        let p = Some(Vector2::new(40.0, 40.0));
        let (pof, degenerate) = render_pof(&[p, p], &[Some(Vector3::z())], &[(0, 1)], 64, 64, 5.0);
        assert_eq!(degenerate, vec![0]);
        assert!(pof.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn keypoint_decoding_examples() {
        let conf = render_confidence(&[Some(Vector2::new(100.0, 100.0))], 368, 368, 7.0);
        let kp = decode_keypoints(&conf, 1, 368, 368, 0.1);
        assert_eq!(kp[0].position, Vector2::new(100.0, 100.0));
        assert!((kp[0].confidence - 1.0).abs() < 1e-7 && kp[0].present);

        let zero = vec![0.0f32; 368 * 368];
        assert!(!decode_keypoints(&zero, 1, 368, 368, 0.1)[0].present);
    }

    #[test]
    fn keypoint_ties_use_row_major_order() {
        let (h, w) = (32, 32);
        let mut chan = vec![0.0f32; h * w];
        chan[10 * w + 10] = 0.8;
        chan[20 * w + 20] = 0.8;
        // exhaustive scan oracle: first index holding the maximum
        let max = chan.iter().cloned().fold(f32::MIN, f32::max);
        let first = chan.iter().position(|&v| v == max).unwrap();
        let kp = decode_keypoints(&chan, 1, h, w, 0.1);
        assert_eq!(
            kp[0].position,
            Vector2::new((first % w) as f64, (first / w) as f64)
        );
        assert_eq!(kp[0].position, Vector2::new(10.0, 10.0));
    }

    fn uniform_stack(h: usize, w: usize, f: impl Fn(usize, usize) -> Vector3<f64>) -> Vec<f32> {
        let mut pof = vec![0.0f32; 3 * h * w];
        for r in 0..h {
            for c in 0..w {
                let v = f(r, c);
                for k in 0..3 {
                    pof[k * h * w + r * w + c] = v[k] as f32;
                }
            }
        }
        pof
    }

    #[test]
    fn orientation_decoding_examples() {
        let (h, w) = (64, 64);
        let kps = [
            Keypoint::at(Vector2::new(10.0, 20.0)),
            Keypoint::at(Vector2::new(50.0, 20.0)),
        ];
        let pof = uniform_stack(h, w, |_, _| Vector3::z());
        let o = decode_orientations(&pof, &[(0, 1)], h, w, &kps);
        assert!(o[0].present && (o[0].direction - Vector3::z()).norm() < 1e-12);

        let zero = vec![0.0f32; 3 * h * w];
        assert!(!decode_orientations(&zero, &[(0, 1)], h, w, &kps)[0].present);

        let missing = [kps[0], Keypoint::absent()];
        assert!(!decode_orientations(&pof, &[(0, 1)], h, w, &missing)[0].present);
    }

    #[test]
    fn orientation_decoding_of_split_field_matches_dense_sampling() {
        let (h, w) = (64, 64);
        // left half of the segment sees +x, right half +y
        let field = |_: usize, c: usize| if c < 30 { Vector3::x() } else { Vector3::y() };
        let pof = uniform_stack(h, w, field);
        let kps = [
            Keypoint::at(Vector2::new(10.0, 20.0)),
            Keypoint::at(Vector2::new(50.0, 20.0)),
        ];
        let o = decode_orientations(&pof, &[(0, 1)], h, w, &kps);

        // oracle: 10x denser sampling with the same bilinear model
        let n = 401;
        let mut sum = Vector3::zeros();
        for s in 0..n {
            let x = 10.0 + 40.0 * s as f64 / (n - 1) as f64;
            let (x0, fx) = (x.floor(), x - x.floor());
            let v0 = field(20, x0 as usize);
            let v1 = if fx > 0.0 {
                field(20, x0 as usize + 1)
            } else {
                v0
            };
            sum += v0 * (1.0 - fx) + v1 * fx;
        }
        let oracle = sum.normalize();
        assert!((o[0].direction - oracle).norm() < 0.03);
        assert!((o[0].direction - Vector3::new(H, H, 0.0)).norm() < 0.03);
        assert!((o[0].direction.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mirroring_is_an_involution_and_flips_x() {
        let j = [
            Some(Vector2::new(10.0, 10.0)),
            Some(Vector2::new(30.0, 12.0)),
        ];
        let (stack, _) = FieldStack::render(
            &j,
            &[Some(Vector3::new(0.6, 0.0, 0.8))],
            &[(0, 1)],
            &FieldSettings {
                size: 48,
                ..Default::default()
            },
        );
        let m = stack.mirrored();
        assert_eq!(m.mirrored(), stack);
        assert_eq!(
            m.pof_at(0, 10, 47 - 20),
            Vector3::new(-0.6f32 as f64, 0.0, 0.8f32 as f64)
        );
        let obs = m.decode_flipped(&[(0, 1)], 0.1).unwrap();
        assert_eq!(obs.keypoints[0].position, Vector2::new(10.0, 10.0));
        assert!((obs.orientations[0].direction - Vector3::new(0.6, 0.0, 0.8)).norm() < 1e-6);
    }
}
