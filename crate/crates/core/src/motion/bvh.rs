//! BVH reader and writer.
//!
//! Offsets and position channels are multiplied by [`BvhOptions::unit_scale`]
//! to obtain meters. Rotation channels are composed in their declared order,
//! i.e. `CHANNELS 3 Zrotation Xrotation Yrotation` yields `Rz · Rx · Ry`.
//! Position channels on non-root joints are accepted and ignored since a
//! [`Pose`] carries only the root translation. `End Site` blocks are dropped
//! on read and regenerated for leaf joints on write.

use nalgebra::Vector3;
use std::fmt::Write as _;
use std::sync::Arc;

use super::clip::{Category, MotionClip};
use super::pose::Pose;
use super::rotation::Rotation;
use super::skeleton::{Joint, RigNames, Skeleton};
use super::MotionError;

#[derive(Debug, Clone)]
pub struct BvhOptions {
    /// Multiplier from file units to meters.
    pub unit_scale: f64,
    /// Rig designation; `None` tries the default CMU names and leaves the
    /// skeleton without a rig when they are absent.
    pub rig: Option<RigNames>,
    pub name: String,
    pub category: Category,
}

impl Default for BvhOptions {
    fn default() -> Self {
        Self {
            unit_scale: 1.0,
            rig: None,
            name: String::new(),
            category: Category::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Channel {
    Pos(usize),
    Rot(usize),
}

impl Channel {
    fn parse(tok: &str) -> Option<Channel> {
        let axis = match tok.chars().next()? {
            'X' | 'x' => 0,
            'Y' | 'y' => 1,
            'Z' | 'z' => 2,
            _ => return None,
        };
        match &tok[1..] {
            "position" => Some(Channel::Pos(axis)),
            "rotation" => Some(Channel::Rot(axis)),
            _ => None,
        }
    }
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), MotionError> {
        let last_line = self.items.last().map(|t| t.0).unwrap_or(1);
        let t = self
            .items
            .get(self.pos)
            .copied()
            .ok_or_else(|| bvh_err(last_line, "unexpected end of hierarchy"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, word: &str) -> Result<usize, MotionError> {
        let (line, tok) = self.next()?;
        if tok != word {
            return Err(bvh_err(line, format!("expected '{word}', found '{tok}'")));
        }
        Ok(line)
    }

    fn number(&mut self) -> Result<f64, MotionError> {
        let (line, tok) = self.next()?;
        tok.parse::<f64>()
            .map_err(|_| bvh_err(line, format!("expected a number, found '{tok}'")))
    }

    fn peek(&self) -> Option<&'a str> {
        self.items.get(self.pos).map(|t| t.1)
    }
}

fn bvh_err(line: usize, message: impl Into<String>) -> MotionError {
    MotionError::Bvh {
        line,
        message: message.into(),
    }
}

struct ParsedJoint {
    joint: Joint,
    channels: Vec<Channel>,
}

fn parse_joint(
    tok: &mut Tokens<'_>,
    parent: Option<usize>,
    out: &mut Vec<ParsedJoint>,
) -> Result<(), MotionError> {
    let (_, name) = tok.next()?;
    tok.expect("{")?;
    tok.expect("OFFSET")?;
    let offset = Vector3::new(tok.number()?, tok.number()?, tok.number()?);
    let (line, word) = tok.next()?;
    if word != "CHANNELS" {
        return Err(bvh_err(line, format!("expected 'CHANNELS', found '{word}'")));
    }
    let (line, count) = tok.next()?;
    let count: usize = count
        .parse()
        .map_err(|_| bvh_err(line, format!("invalid channel count '{count}'")))?;
    let mut channels = Vec::with_capacity(count);
    for _ in 0..count {
        let (line, c) = tok.next()?;
        channels.push(
            Channel::parse(c).ok_or_else(|| bvh_err(line, format!("unsupported channel '{c}'")))?,
        );
    }
    let index = out.len();
    out.push(ParsedJoint {
        joint: Joint {
            name: name.to_string(),
            parent,
            offset,
        },
        channels,
    });
    loop {
        let (line, word) = tok.next()?;
        match word {
            "JOINT" => parse_joint(tok, Some(index), out)?,
            "End" => {
                tok.expect("Site")?;
                tok.expect("{")?;
                tok.expect("OFFSET")?;
                for _ in 0..3 {
                    tok.number()?;
                }
                tok.expect("}")?;
            }
            "}" => return Ok(()),
            other => return Err(bvh_err(line, format!("unexpected token '{other}'"))),
        }
    }
}

fn compose_euler(channels: &[Channel], values: &[f64]) -> Rotation {
    let mut r = Rotation::identity();
    for (c, v) in channels.iter().zip(values) {
        if let Channel::Rot(axis) = *c {
            let a = v.to_radians();
            r = r * match axis {
                0 => Rotation::about_x(a),
                1 => Rotation::about_y(a),
                _ => Rotation::about_z(a),
            };
        }
    }
    r
}

/// Parses a BVH document into a clip (the clip carries the skeleton).
pub fn parse_bvh(text: &str, opts: &BvhOptions) -> Result<MotionClip, MotionError> {
    let lines: Vec<&str> = text.lines().collect();
    let motion_line = lines
        .iter()
        .position(|l| l.trim() == "MOTION")
        .ok_or_else(|| bvh_err(lines.len().max(1), "missing MOTION section"))?;

    let mut items = Vec::new();
    for (i, l) in lines[..motion_line].iter().enumerate() {
        items.extend(l.split_whitespace().map(|t| (i + 1, t)));
    }
    let mut tok = Tokens { items, pos: 0 };
    tok.expect("HIERARCHY")?;
    tok.expect("ROOT")?;
    let mut parsed = Vec::new();
    parse_joint(&mut tok, None, &mut parsed)?;
    if let Some(extra) = tok.peek() {
        let line = tok.items[tok.pos].0;
        return Err(bvh_err(line, format!("unexpected token '{extra}' after hierarchy")));
    }

    let mut body = lines.iter().enumerate().skip(motion_line + 1);
    let mut header = |key: &str| -> Result<(usize, String), MotionError> {
        for (i, l) in body.by_ref() {
            let l = l.trim();
            if l.is_empty() {
                continue;
            }
            return match l.strip_prefix(key) {
                Some(rest) => Ok((i + 1, rest.trim().to_string())),
                None => Err(bvh_err(i + 1, format!("expected '{key}'"))),
            };
        }
        Err(bvh_err(lines.len(), format!("missing '{key}'")))
    };
    let (line, n) = header("Frames:")?;
    let n_frames: usize = n
        .parse()
        .map_err(|_| bvh_err(line, format!("invalid frame count '{n}'")))?;
    let (line, ft) = header("Frame Time:")?;
    let frame_time: f64 = ft
        .parse()
        .map_err(|_| bvh_err(line, format!("invalid frame time '{ft}'")))?;
    if !(frame_time > 0.0) {
        return Err(bvh_err(line, "frame time must be positive"));
    }

    let scale = opts.unit_scale;
    let joints: Vec<Joint> = parsed
        .iter()
        .map(|p| Joint {
            offset: p.joint.offset * scale,
            ..p.joint.clone()
        })
        .collect();
    let mut skeleton = Skeleton::new(joints)?;
    skeleton = match &opts.rig {
        Some(names) => skeleton.with_rig(names)?,
        None => skeleton
            .clone()
            .with_rig(&RigNames::default())
            .unwrap_or(skeleton),
    };
    let skeleton = Arc::new(skeleton);

    let total: usize = parsed.iter().map(|p| p.channels.len()).sum();
    let mut frames = Vec::with_capacity(n_frames);
    let mut values = Vec::with_capacity(total);
    for (i, l) in body {
        if frames.len() == n_frames {
            break;
        }
        if l.trim().is_empty() {
            continue;
        }
        values.clear();
        for t in l.split_whitespace() {
            values.push(
                t.parse::<f64>()
                    .map_err(|_| bvh_err(i + 1, format!("invalid value '{t}'")))?,
            );
        }
        if values.len() != total {
            return Err(MotionError::ChannelCount {
                frame: frames.len(),
                line: i + 1,
                expected: total,
                got: values.len(),
            });
        }
        let mut pose = Pose::identity(&skeleton);
        let mut cursor = 0;
        for (j, p) in parsed.iter().enumerate() {
            let vals = &values[cursor..cursor + p.channels.len()];
            cursor += p.channels.len();
            let rot = compose_euler(&p.channels, vals);
            if j == 0 {
                let mut pos = skeleton.joints()[0].offset;
                for (c, v) in p.channels.iter().zip(vals) {
                    if let Channel::Pos(axis) = *c {
                        pos[axis] += v * scale;
                    }
                }
                pose.root.position = pos;
            }
            pose.set_local_rotation(j, rot);
        }
        frames.push(pose);
    }
    if frames.len() != n_frames {
        return Err(bvh_err(
            lines.len(),
            format!("declared {n_frames} frames but found {}", frames.len()),
        ));
    }

    MotionClip::new(
        skeleton,
        snap_fps(1.0 / frame_time),
        frames,
        opts.name.clone(),
        opts.category,
    )
}

/// Frame times are usually written with limited precision; rates within
/// 0.01% of an integer are snapped to it.
fn snap_fps(fps: f64) -> f64 {
    let r = fps.round();
    if r > 0.0 && (fps - r).abs() < 1e-4 * r {
        r
    } else {
        fps
    }
}

/// Decomposes into ZXY Euler angles in degrees with `R = Rz · Rx · Ry`.
pub fn to_euler_zxy(r: &Rotation) -> [f64; 3] {
    let m = r.matrix();
    let sx = m[(2, 1)].clamp(-1.0, 1.0);
    let x = sx.asin();
    let (z, y) = if sx.abs() < 1.0 - 1e-12 {
        ((-m[(0, 1)]).atan2(m[(1, 1)]), (-m[(2, 0)]).atan2(m[(2, 2)]))
    } else {
        // gimbal lock: fold everything into Z
        (m[(1, 0)].atan2(m[(0, 0)]), 0.0)
    };
    [z.to_degrees(), x.to_degrees(), y.to_degrees()]
}

/// Writes a clip as BVH with ZXY rotation channels. `unit_scale` is the
/// same meters-per-unit factor accepted by [`parse_bvh`].
pub fn write_bvh(clip: &MotionClip, unit_scale: f64) -> String {
    let skel = &clip.skeleton;
    let joints = skel.joints();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); joints.len()];
    for (j, joint) in joints.iter().enumerate().skip(1) {
        children[joint.parent.expect("non-root")].push(j);
    }
    let mut out = String::from("HIERARCHY\n");
    fn emit(
        out: &mut String,
        j: usize,
        depth: usize,
        joints: &[Joint],
        children: &[Vec<usize>],
        inv: f64,
    ) {
        let pad = "  ".repeat(depth);
        let o = joints[j].offset * inv;
        let kind = if depth == 0 { "ROOT" } else { "JOINT" };
        let _ = writeln!(out, "{pad}{kind} {}", joints[j].name);
        let _ = writeln!(out, "{pad}{{");
        let _ = writeln!(out, "{pad}  OFFSET {} {} {}", o.x, o.y, o.z);
        if depth == 0 {
            let _ = writeln!(
                out,
                "{pad}  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation"
            );
        } else {
            let _ = writeln!(out, "{pad}  CHANNELS 3 Zrotation Xrotation Yrotation");
        }
        for &c in &children[j] {
            emit(out, c, depth + 1, joints, children, inv);
        }
        if children[j].is_empty() {
            let _ = writeln!(out, "{pad}  End Site");
            let _ = writeln!(out, "{pad}  {{");
            let _ = writeln!(out, "{pad}    OFFSET 0 0 0");
            let _ = writeln!(out, "{pad}  }}");
        }
        let _ = writeln!(out, "{pad}}}");
    }
    let inv = 1.0 / unit_scale;
    emit(&mut out, 0, 0, joints, &children, inv);
    // channel values are emitted in depth-first order, which matches the
    // declaration order above
    let mut order = Vec::with_capacity(joints.len());
    fn dfs(j: usize, children: &[Vec<usize>], order: &mut Vec<usize>) {
        order.push(j);
        for &c in &children[j] {
            dfs(c, children, order);
        }
    }
    dfs(0, &children, &mut order);

    let _ = writeln!(out, "MOTION");
    let _ = writeln!(out, "Frames: {}", clip.frames.len());
    let _ = writeln!(out, "Frame Time: {}", 1.0 / clip.fps);
    for pose in &clip.frames {
        let mut vals: Vec<f64> = Vec::with_capacity(3 + 3 * joints.len());
        let p = (pose.root.position - joints[0].offset) * inv;
        vals.extend([p.x, p.y, p.z]);
        for &j in &order {
            vals.extend(to_euler_zxy(&pose.local_rotation(j)));
        }
        let line: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

/// Summary used by the `bvh-info` command.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BvhInfo {
    pub joints: usize,
    pub frames: usize,
    pub fps: f64,
    pub duration_s: f64,
    pub has_rig: bool,
    pub root_height_first_frame: f64,
}

pub fn bvh_info(clip: &MotionClip) -> BvhInfo {
    BvhInfo {
        joints: clip.skeleton.len(),
        frames: clip.len(),
        fps: clip.fps,
        duration_s: clip.duration(),
        has_rig: clip.skeleton.has_rig(),
        root_height_first_frame: clip.frames.first().map(|f| f.root.position.y).unwrap_or(0.0),
    }
}
